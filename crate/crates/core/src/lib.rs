//! Transductive regression machine translation.
//!
//! For every test sentence a small training set is selected from a parallel
//! corpus, source and target sentences are mapped to weighted n-gram feature
//! vectors, and a sparse linear map from source to target features is fitted
//! (ridge in closed dual form, or lasso approximated by forward stagewise
//! regression). Predicted target features are turned back into a sentence by
//! beam search over a De Bruijn graph, or exported as a Moses phrase table.
//!
//! The numeric core ([`features::SparseVector`], [`regression`],
//! [`evaluation::metrics`]) is generic over [`Scalar`]; the aliases below fix
//! it to `f64`, which is what the pipeline uses.

pub mod config;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod linalg;
pub mod lm;
pub mod phrasetable;
pub mod pipeline;
pub mod regression;
pub mod scalar;
pub mod selection;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type SparseVector = features::SparseVector<f64>;
pub type FeatureMatrix = features::FeatureMatrix<f64>;
pub type MappingMatrix = regression::MappingMatrix<f64>;
pub type RidgeConfig = regression::RidgeConfig<f64>;
pub type FsrConfig = regression::FsrConfig<f64>;
pub type Metrics = evaluation::Metrics<f64>;

pub type SparseVectorF32 = features::SparseVector<f32>;
pub type MappingMatrixF32 = regression::MappingMatrix<f32>;
