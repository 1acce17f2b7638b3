//! Gaussian kernels, bandwidth heuristics and column standardization.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows beyond this count are subsampled before the median heuristic.
pub const MEDIAN_SUBSAMPLE: usize = 5000;
const MEDIAN_SUBSAMPLE_SEED: u64 = 0x6d65_6469_616e;

/// K(x, y) = exp(-|x - y|^2 / (2 bandwidth)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    bandwidth: f64,
    dim: usize,
}

impl GaussianKernel {
    pub fn new(bandwidth: f64, dim: usize) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("kernel dimension must be positive".into()));
        }
        Ok(Self { bandwidth, dim })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        (-d2 / (2.0 * self.bandwidth)).exp()
    }

    /// Entry (i, j) is K(rows_a[i], rows_b[j]). Observations are rows.
    pub fn matrix(&self, rows_a: &DMatrix<f64>, rows_b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        kernel_matrix(self, rows_a, rows_b)
    }
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

pub fn kernel_matrix(
    kernel: &GaussianKernel,
    rows_a: &DMatrix<f64>,
    rows_b: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let dim = kernel.dim;
    for m in [rows_a, rows_b] {
        if m.ncols() != dim {
            return Err(Error::Dimension { expected: dim, found: m.ncols() });
        }
    }
    let (na, nb) = (rows_a.nrows(), rows_b.nrows());
    let xa = row_major(rows_a);
    let xb = row_major(rows_b);
    let mut out = DMatrix::<f64>::zeros(na, nb);
    if na == 0 || nb == 0 {
        return Ok(out);
    }
    // Each entry is computed independently, so the result does not depend on
    // how columns are scheduled.
    out.as_mut_slice()
        .par_chunks_mut(na)
        .enumerate()
        .for_each(|(j, col)| {
            let y = &xb[j * dim..(j + 1) * dim];
            for (i, v) in col.iter_mut().enumerate() {
                *v = kernel.eval(&xa[i * dim..(i + 1) * dim], y);
            }
        });
    Ok(out)
}

/// `scale` times the (weighted) median of pairwise Euclidean distances.
///
/// Pairs at distance exactly zero are skipped, so that duplicated rows do not
/// drag the median down. Pair (i, j) carries weight `w_i * w_j`.
pub fn median_heuristic(rows: &DMatrix<f64>, scale: f64, weights: Option<&[f64]>) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
    }
    let n = rows.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument("median heuristic needs at least two rows".into()));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::Dimension { expected: n, found: w.len() });
        }
        if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("median weights must be positive".into()));
        }
    }

    let keep: Vec<usize> = if n > MEDIAN_SUBSAMPLE {
        let mut rng = ChaCha8Rng::seed_from_u64(MEDIAN_SUBSAMPLE_SEED);
        let mut idx = sample(&mut rng, n, MEDIAN_SUBSAMPLE).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };

    let dim = rows.ncols();
    let x = row_major(rows);
    let m = keep.len();
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .into_par_iter()
        .flat_map_iter(|p| {
            let i = keep[p];
            let xi = &x[i * dim..(i + 1) * dim];
            let x = &x;
            let keep = &keep;
            (p + 1..m).filter_map(move |q| {
                let j = keep[q];
                let xj = &x[j * dim..(j + 1) * dim];
                let d = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                if d == 0.0 {
                    return None;
                }
                let w = weights.map_or(1.0, |w| w[i] * w[j]);
                Some((d, w))
            })
        })
        .collect();
    if pairs.is_empty() {
        return Err(Error::DegenerateBandwidth);
    }
    pairs.par_sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(scale * weighted_median_sorted(&pairs))
}

/// Smallest value whose cumulative weight reaches half the total; averaged
/// with its successor on an exact tie, which gives the usual median for
/// equal weights.
fn weighted_median_sorted(sorted: &[(f64, f64)]) -> f64 {
    let total: f64 = sorted.iter().map(|p| p.1).sum();
    let half = total / 2.0;
    let mut cum = 0.0;
    for (k, &(d, w)) in sorted.iter().enumerate() {
        cum += w;
        if cum >= half {
            if cum == half && k + 1 < sorted.len() {
                return 0.5 * (d + sorted[k + 1].0);
            }
            return d;
        }
    }
    sorted[sorted.len() - 1].0
}

/// Per-column affine map x -> (x - mean) / sd.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    pub fn identity(ncols: usize) -> Self {
        Self { means: vec![0.0; ncols], sds: vec![1.0; ncols] }
    }

    pub fn apply(&self, columns: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if columns.ncols() != self.means.len() {
            return Err(Error::Dimension { expected: self.means.len(), found: columns.ncols() });
        }
        let mut out = columns.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.means[j], self.sds[j]);
            col.apply(|v| *v = (*v - m) / s);
        }
        Ok(out)
    }

    pub fn apply_value(&self, j: usize, v: f64) -> f64 {
        (v - self.means[j]) / self.sds[j]
    }

    pub fn invert(&self, columns: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if columns.ncols() != self.means.len() {
            return Err(Error::Dimension { expected: self.means.len(), found: columns.ncols() });
        }
        let mut out = columns.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.means[j], self.sds[j]);
            col.apply(|v| *v = *v * s + m);
        }
        Ok(out)
    }
}

/// Column-wise mean 0 / population sd 1.
pub fn standardize(columns: &DMatrix<f64>) -> Result<(DMatrix<f64>, Standardization)> {
    standardize_named(columns, |j| format!("column {j}"))
}

pub(crate) fn standardize_named(
    columns: &DMatrix<f64>,
    name: impl Fn(usize) -> String,
) -> Result<(DMatrix<f64>, Standardization)> {
    let n = columns.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot standardize zero rows".into()));
    }
    let mut means = Vec::with_capacity(columns.ncols());
    let mut sds = Vec::with_capacity(columns.ncols());
    for (j, col) in columns.column_iter().enumerate() {
        let (m, s) = mean_sd(col.iter().copied());
        if !(s > 0.0) || s <= 1e-14 * m.abs() {
            return Err(Error::ConstantColumn(name(j)));
        }
        means.push(m);
        sds.push(s);
    }
    let t = Standardization { means, sds };
    let out = t.apply(columns)?;
    Ok((out, t))
}

/// Mean and population standard deviation (two-pass).
pub(crate) fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let m = values.clone().sum::<f64>() / n;
    let v = values.map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}
