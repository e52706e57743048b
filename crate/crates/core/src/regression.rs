//! Source-to-target feature mappings.
//!
//! Both estimators minimize `||M_Y - W M_X||_F^2` plus a penalty, which
//! separates over the rows of `W` (one row per target feature):
//!
//! * ridge (`lambda ||W||_F^2`) is solved in closed dual form,
//!   `W = M_Y (K + lambda I)^-1 M_X^T` with the `m x m` Gram `K = M_X^T M_X`;
//! * lasso (`lambda ||W||_1`) is approximated by forward stagewise
//!   regression, where the iteration budget plays the role of `lambda`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureIndex, FeatureMatrix, SparseVector};
use crate::linalg::{Cholesky, DenseMatrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeConfig<T> {
    pub lambda: T,
}

impl<T: Scalar> Default for RidgeConfig<T> {
    fn default() -> Self {
        RidgeConfig { lambda: T::one() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsrConfig<T> {
    /// Magnitude of each coefficient increment.
    pub step_eps: T,
    /// Step budget per target row.
    pub max_iters: usize,
    /// Stop once the largest absolute residual correlation drops below this.
    pub tol: T,
}

impl<T: Scalar> Default for FsrConfig<T> {
    fn default() -> Self {
        FsrConfig {
            step_eps: T::lit(0.01),
            max_iters: 5000,
            tol: T::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "snake_case")]
pub enum SolverInfo {
    Ridge { lambda: f64 },
    Fsr { step_eps: f64, max_iters: usize, tol: f64 },
}

impl SolverInfo {
    pub fn name(&self) -> &'static str {
        match self {
            SolverInfo::Ridge { .. } => "ridge",
            SolverInfo::Fsr { .. } => "fsr",
        }
    }
}

/// Sparse `N_Y x N_X` coefficient matrix stored column-wise: for every
/// source feature, its (target row, weight) entries sorted by row.
#[derive(Debug, Clone)]
pub struct MappingMatrix<T> {
    cols: Vec<Vec<(usize, T)>>,
    rows: usize,
    nnz: usize,
    pub src_index: Arc<FeatureIndex>,
    pub tgt_index: Arc<FeatureIndex>,
    pub solver: SolverInfo,
}

impl<T: Scalar> MappingMatrix<T> {
    /// Builds from `(row, col, value)` triples; zeros are dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, T)>,
        src_index: Arc<FeatureIndex>,
        tgt_index: Arc<FeatureIndex>,
        solver: SolverInfo,
    ) -> Result<Self> {
        let mut data: Vec<BTreeMap<usize, T>> = vec![BTreeMap::new(); cols];
        for (r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::Dimension(format!("entry ({r}, {c}) outside {rows}x{cols}")));
            }
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite weight at ({r}, {c})")));
            }
            *data[c].entry(r).or_insert_with(T::zero) += v;
        }
        let cols: Vec<Vec<(usize, T)>> = data
            .into_iter()
            .map(|m| m.into_iter().filter(|(_, v)| !v.is_zero()).collect())
            .collect();
        Ok(Self::from_cols(cols, rows, src_index, tgt_index, solver))
    }

    fn from_cols(cols: Vec<Vec<(usize, T)>>, rows: usize, src_index: Arc<FeatureIndex>, tgt_index: Arc<FeatureIndex>, solver: SolverInfo) -> Self {
        let nnz = cols.iter().map(Vec::len).sum();
        MappingMatrix {
            cols,
            rows,
            nnz,
            src_index,
            tgt_index,
            solver,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols.len()
    }

    pub fn nnz(&self) -> usize {
        self.nnz
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.cols
            .get(col)
            .and_then(|c| c.binary_search_by_key(&row, |&(r, _)| r).ok().map(|i| c[i].1))
            .unwrap_or_else(T::zero)
    }

    /// Stored entries of source column `col`, sorted by target row.
    pub fn column(&self, col: usize) -> &[(usize, T)] {
        &self.cols[col]
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.cols
            .iter()
            .enumerate()
            .flat_map(|(c, col)| col.iter().map(move |&(r, v)| (r, c, v)))
    }

    /// Coordinate-list text with a two-line header.
    pub fn to_coo(&self) -> String {
        let mut out = String::new();
        let _ = match self.solver {
            SolverInfo::Ridge { lambda } => writeln!(out, "# solver=ridge lambda={lambda}"),
            SolverInfo::Fsr {
                step_eps,
                max_iters,
                tol,
            } => writeln!(out, "# solver=fsr step_eps={step_eps} max_iters={max_iters} tol={tol}"),
        };
        let _ = writeln!(out, "# dims {} {}", self.rows, self.cols());
        for (r, c, v) in self.triplets() {
            let _ = writeln!(out, "{r} {c} {v}");
        }
        out
    }

    pub fn from_coo(text: &str, src_index: Arc<FeatureIndex>, tgt_index: Arc<FeatureIndex>) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Parse {
            path: "<coo>".into(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, head) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
        let fields: BTreeMap<&str, &str> = head
            .trim_start_matches('#')
            .split_whitespace()
            .filter_map(|kv| kv.split_once('='))
            .collect();
        let num = |k: &str| -> Result<f64> {
            fields
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(1, format!("missing `{k}`")))
        };
        let solver = match fields.get("solver").copied() {
            Some("ridge") => SolverInfo::Ridge { lambda: num("lambda")? },
            Some("fsr") => SolverInfo::Fsr {
                step_eps: num("step_eps")?,
                max_iters: num("max_iters")? as usize,
                tol: num("tol")?,
            },
            other => return Err(bad(1, format!("unknown solver {other:?}"))),
        };
        let (_, dims) = lines.next().ok_or_else(|| bad(2, "missing dims".into()))?;
        let d: Vec<usize> = dims
            .trim_start_matches('#')
            .split_whitespace()
            .skip(1)
            .filter_map(|x| x.parse().ok())
            .collect();
        if d.len() != 2 {
            return Err(bad(2, "expected `# dims <rows> <cols>`".into()));
        }
        let mut trip = Vec::new();
        for (i, line) in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(bad(i + 1, "expected `row col value`".into()));
            }
            let r = parts[0].parse().map_err(|_| bad(i + 1, "bad row".into()))?;
            let c = parts[1].parse().map_err(|_| bad(i + 1, "bad col".into()))?;
            let v: f64 = parts[2].parse().map_err(|_| bad(i + 1, "bad value".into()))?;
            trip.push((r, c, T::lit(v)));
        }
        Self::from_triplets(d[0], d[1], trip, src_index, tgt_index, solver)
    }
}

fn check_dims<T: Scalar>(mx: &FeatureMatrix<T>, my: &FeatureMatrix<T>) -> Result<()> {
    if mx.m() != my.m() {
        return Err(Error::Dimension(format!(
            "source matrix has {} instances, target matrix has {}",
            mx.m(),
            my.m()
        )));
    }
    if mx.m() == 0 {
        return Err(Error::Dimension("no training instances".into()));
    }
    Ok(())
}

/// Entries smaller than this are not stored for ridge solutions.
const RIDGE_DROP: f64 = 1e-12;

pub fn fit_ridge<T: Scalar>(mx: &FeatureMatrix<T>, my: &FeatureMatrix<T>, cfg: &RidgeConfig<T>) -> Result<MappingMatrix<T>> {
    check_dims(mx, my)?;
    if !(cfg.lambda > T::zero()) {
        return Err(Error::config("lambda", "must be positive"));
    }
    let m = mx.m();
    let (n_x, n_y) = (mx.rows(), my.rows());

    let mut k = DenseMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = mx.columns[i].dot(&mx.columns[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += cfg.lambda;
    }
    let inv = Cholesky::factor(&k)?.solve_matrix(&DenseMatrix::identity(m));

    // B = (K + lambda I)^-1 M_X^T, m x N_X
    let mut b = DenseMatrix::zeros(m, n_x);
    for i in 0..m {
        let row = b.row_mut(i);
        for (kk, col) in mx.columns.iter().enumerate() {
            let a = inv[(i, kk)];
            for (j, x) in col.iter() {
                row[j] += a * x;
            }
        }
    }
    // W = M_Y B, N_Y x N_X
    let mut w: DenseMatrix<T> = DenseMatrix::zeros(n_y, n_x);
    for (i, col) in my.columns.iter().enumerate() {
        let b_row = b.row(i);
        for (r, y) in col.iter() {
            for (dst, &src) in w.row_mut(r).iter_mut().zip(b_row) {
                *dst += y * src;
            }
        }
    }
    let drop = T::lit(RIDGE_DROP);
    let mut cols: Vec<Vec<(usize, T)>> = vec![Vec::new(); n_x];
    for r in 0..n_y {
        for (c, &v) in w.row(r).iter().enumerate() {
            if v.abs() >= drop {
                cols[c].push((r, v));
            }
        }
    }
    Ok(MappingMatrix::from_cols(
        cols,
        n_y,
        mx.index.clone(),
        my.index.clone(),
        SolverInfo::Ridge {
            lambda: cfg.lambda.as_f64(),
        },
    ))
}

/// `M_X M_X^T` as sparse columns, including the diagonal.
fn source_gram<T: Scalar>(mx: &FeatureMatrix<T>) -> Vec<Vec<(usize, T)>> {
    let rows = mx.row_lists();
    let n = mx.rows();
    let mut acc = vec![T::zero(); n];
    let mut touched: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(n);
    for row in &rows {
        for &(i, v) in row {
            for (k, x) in mx.columns[i].iter() {
                if acc[k].is_zero() {
                    touched.push(k);
                }
                acc[k] += v * x;
            }
        }
        touched.sort_unstable();
        touched.dedup();
        let col: Vec<(usize, T)> = touched
            .iter()
            .map(|&k| (k, std::mem::replace(&mut acc[k], T::zero())))
            .filter(|(_, v)| !v.is_zero())
            .collect();
        touched.clear();
        out.push(col);
    }
    out
}

struct FsrScratch<T> {
    corr: Vec<T>,
    active: Vec<bool>,
}

/// Stagewise fit of one target row. Returns (source column, step count).
fn fsr_row<T: Scalar>(
    target: &[(usize, T)],
    mx: &FeatureMatrix<T>,
    gram: &[Vec<(usize, T)>],
    diag: &[T],
    cfg: &FsrConfig<T>,
    scratch: &mut FsrScratch<T>,
) -> Vec<(usize, i64)> {
    let FsrScratch { corr, active } = scratch;
    let mut support: Vec<usize> = Vec::new();
    let activate = |k: usize, support: &mut Vec<usize>, active: &mut Vec<bool>| {
        if !active[k] {
            active[k] = true;
            support.push(k);
        }
    };
    // c = M_X y_r
    for &(i, y) in target {
        for (k, x) in mx.columns[i].iter() {
            activate(k, &mut support, active);
            corr[k] += x * y;
        }
    }
    let half = T::lit(0.5) * cfg.step_eps;
    let mut steps: BTreeMap<usize, i64> = BTreeMap::new();
    for _ in 0..cfg.max_iters {
        let mut best: Option<(usize, T)> = None;
        for &k in &support {
            let a = corr[k].abs();
            if best.map_or(true, |(bk, bv)| a > bv || (a == bv && k < bk)) {
                best = Some((k, a));
            }
        }
        let Some((j, a)) = best else { break };
        if a < cfg.tol || a.is_zero() {
            break;
        }
        // residual change of the step is eps * (eps * G_jj - 2 |c_j|)
        if a <= half * diag[j] {
            break;
        }
        let sign = if corr[j] > T::zero() { 1 } else { -1 };
        let delta = if sign > 0 { cfg.step_eps } else { -cfg.step_eps };
        *steps.entry(j).or_insert(0) += sign;
        for &(k, g) in &gram[j] {
            activate(k, &mut support, active);
            corr[k] -= delta * g;
        }
    }
    for &k in &support {
        corr[k] = T::zero();
        active[k] = false;
    }
    steps.into_iter().filter(|&(_, s)| s != 0).collect()
}

pub fn fit_fsr<T: Scalar>(mx: &FeatureMatrix<T>, my: &FeatureMatrix<T>, cfg: &FsrConfig<T>) -> Result<MappingMatrix<T>> {
    check_dims(mx, my)?;
    if !(cfg.step_eps > T::zero()) {
        return Err(Error::config("step_eps", "must be positive"));
    }
    if cfg.tol < T::zero() {
        return Err(Error::config("tol", "must be non-negative"));
    }
    let gram = source_gram(mx);
    let diag: Vec<T> = gram
        .iter()
        .enumerate()
        .map(|(j, row)| row.binary_search_by_key(&j, |&(k, _)| k).map_or(T::zero(), |p| row[p].1))
        .collect();
    let targets = my.row_lists();
    let n_x = mx.rows();
    let row_steps: Vec<Vec<(usize, i64)>> = targets
        .par_iter()
        .map_init(
            || FsrScratch {
                corr: vec![T::zero(); n_x],
                active: vec![false; n_x],
            },
            |scratch, target| fsr_row(target, mx, &gram, &diag, cfg, scratch),
        )
        .collect();
    let mut cols: Vec<Vec<(usize, T)>> = vec![Vec::new(); n_x];
    for (r, steps) in row_steps.iter().enumerate() {
        for &(c, s) in steps {
            cols[c].push((r, cfg.step_eps * T::from_i64(s).expect("step count fits")));
        }
    }
    Ok(MappingMatrix::from_cols(
        cols,
        my.rows(),
        mx.index.clone(),
        my.index.clone(),
        SolverInfo::Fsr {
            step_eps: cfg.step_eps.as_f64(),
            max_iters: cfg.max_iters,
            tol: cfg.tol.as_f64(),
        },
    ))
}

/// `W phi`, touching only the columns present in `phi`.
pub fn predict<T: Scalar>(w: &MappingMatrix<T>, phi_x: &SparseVector<T>) -> SparseVector<T> {
    let mut acc: BTreeMap<usize, T> = BTreeMap::new();
    for (c, x) in phi_x.iter() {
        if c >= w.cols() {
            continue;
        }
        for &(r, v) in w.column(c) {
            *acc.entry(r).or_insert_with(T::zero) += v * x;
        }
    }
    SparseVector::from_entries(acc.into_iter().filter(|(_, v)| !v.is_zero()))
}

/// `||M_Y - W M_X||_F^2`.
pub fn residual_sq<T: Scalar>(w: &MappingMatrix<T>, mx: &FeatureMatrix<T>, my: &FeatureMatrix<T>) -> T {
    mx.columns
        .iter()
        .zip(&my.columns)
        .map(|(x, y)| {
            let diff = y.plus(&predict(w, x).scaled(-T::one()));
            diff.dot(&diff)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityStats {
    pub nnz: usize,
    /// Number of source columns having a given count of nonzeros.
    pub nnz_per_source_col: BTreeMap<usize, usize>,
    pub frobenius: f64,
    pub l1_norm: f64,
}

pub fn sparsity_stats<T: Scalar>(w: &MappingMatrix<T>) -> SparsityStats {
    let mut hist = BTreeMap::new();
    for c in 0..w.cols() {
        *hist.entry(w.column(c).len()).or_insert(0) += 1;
    }
    let (mut sq, mut l1) = (0.0, 0.0);
    for (_, _, v) in w.triplets() {
        let v = v.as_f64();
        sq += v * v;
        l1 += v.abs();
    }
    SparsityStats {
        nnz: w.nnz(),
        nnz_per_source_col: hist,
        frobenius: sq.sqrt(),
        l1_norm: l1,
    }
}
