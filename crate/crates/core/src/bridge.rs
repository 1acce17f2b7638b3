//! Closed-form kernel min-max estimators of the outcome bridge h and the
//! treatment bridge g, optionally norm-ball constrained and weighted for
//! two-phase sampling.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::kernels::GaussianKernel;
use crate::policy::Policy;

pub const DEFAULT_RIDGE_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BridgeKind {
    /// h(a, l, w)
    Outcome,
    /// g(a, l, z), masked by the policy image
    Treatment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeFitConfig {
    pub lambda_outer: f64,
    pub lambda_inner: f64,
    pub kernel_outer: GaussianKernel,
    pub kernel_inner: GaussianKernel,
    pub norm_bound: Option<f64>,
    pub ridge_jitter: f64,
}

impl BridgeFitConfig {
    pub fn new(
        lambda_outer: f64,
        lambda_inner: f64,
        kernel_outer: GaussianKernel,
        kernel_inner: GaussianKernel,
    ) -> Result<Self> {
        let cfg = Self {
            lambda_outer,
            lambda_inner,
            kernel_outer,
            kernel_inner,
            norm_bound: None,
            ridge_jitter: DEFAULT_RIDGE_JITTER,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn with_norm_bound(mut self, b: Option<f64>) -> Self {
        self.norm_bound = b;
        self
    }

    fn check(&self) -> Result<()> {
        if !(self.lambda_outer > 0.0 && self.lambda_inner > 0.0) {
            return Err(Error::InvalidArgument("regularization parameters must be positive".into()));
        }
        if !(self.ridge_jitter >= 0.0) {
            return Err(Error::InvalidArgument("ridge jitter must be nonnegative".into()));
        }
        if let Some(b) = self.norm_bound {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidArgument("norm bound must be positive".into()));
            }
        }
        Ok(())
    }
}

/// A fitted representer expansion sum_j coef_j K(., anchor_j).
#[derive(Debug, Clone)]
pub struct BridgeEstimate {
    kind: BridgeKind,
    coefficients: DVector<f64>,
    anchors: DMatrix<f64>,
    kernel: GaussianKernel,
    mask_policy: Option<Policy>,
    /// (mean, sd) taking the raw exposure to column 0 of the anchors.
    a_scale: (f64, f64),
    constrained: bool,
}

impl BridgeEstimate {
    pub fn new(
        kind: BridgeKind,
        coefficients: DVector<f64>,
        anchors: DMatrix<f64>,
        kernel: GaussianKernel,
        mask_policy: Option<Policy>,
        a_scale: (f64, f64),
    ) -> Result<Self> {
        if coefficients.len() != anchors.nrows() {
            return Err(Error::Dimension { expected: anchors.nrows(), found: coefficients.len() });
        }
        if anchors.ncols() != kernel.dim() {
            return Err(Error::Dimension { expected: kernel.dim(), found: anchors.ncols() });
        }
        Ok(Self { kind, coefficients, anchors, kernel, mask_policy, a_scale, constrained: false })
    }

    pub fn kind(&self) -> BridgeKind {
        self.kind
    }
    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }
    pub fn anchors(&self) -> &DMatrix<f64> {
        &self.anchors
    }
    pub fn kernel(&self) -> &GaussianKernel {
        &self.kernel
    }
    pub fn mask_policy(&self) -> Option<&Policy> {
        self.mask_policy.as_ref()
    }
    /// Whether the norm-ball constraint was active at the solution.
    pub fn constrained(&self) -> bool {
        self.constrained
    }

    /// RKHS norm squared, coef' K coef.
    pub fn rkhs_norm_sq(&self) -> Result<f64> {
        let k = self.kernel.matrix(&self.anchors, &self.anchors)?;
        Ok(self.coefficients.dot(&(k * &self.coefficients)))
    }

    /// Evaluate at kernel-scale points (column 0 is the scaled exposure).
    pub fn evaluate(&self, points: &DMatrix<f64>) -> Result<DVector<f64>> {
        let (m, s) = self.a_scale;
        let raw: Vec<f64> = points.column(0).iter().map(|v| v * s + m).collect();
        self.evaluate_with_raw(points, &raw)
    }

    fn evaluate_with_raw(&self, points: &DMatrix<f64>, raw_a: &[f64]) -> Result<DVector<f64>> {
        let k = self.kernel.matrix(points, &self.anchors)?;
        let mut out = k * &self.coefficients;
        if let Some(p) = &self.mask_policy {
            for (v, &a) in out.iter_mut().zip(raw_a) {
                if !p.in_image(a) {
                    *v = 0.0;
                }
            }
        }
        Ok(out)
    }
}

/// A bridge function that can be evaluated on dataset rows with the exposure
/// replaced by `a` (raw scale). h uses (a, L, W); g uses (a, L, Z).
pub trait BridgeFunction: Send + Sync {
    fn eval_rows(&self, data: &Dataset, rows: &[usize], a: &[f64]) -> Result<Vec<f64>>;
}

impl BridgeFunction for BridgeEstimate {
    fn eval_rows(&self, data: &Dataset, rows: &[usize], a: &[f64]) -> Result<Vec<f64>> {
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let pts = match self.kind {
            BridgeKind::Outcome => data.outcome_features(rows, a),
            BridgeKind::Treatment => data.treatment_features(rows, a),
        };
        Ok(self.evaluate_with_raw(&pts, a)?.as_slice().to_vec())
    }
}

/// Wraps a closure f(data, row, a) as a bridge function.
pub struct FnBridge<F>(pub F);

impl<F> BridgeFunction for FnBridge<F>
where
    F: Fn(&Dataset, usize, f64) -> f64 + Send + Sync,
{
    fn eval_rows(&self, data: &Dataset, rows: &[usize], a: &[f64]) -> Result<Vec<f64>> {
        Ok(rows.iter().zip(a).map(|(&i, &v)| (self.0)(data, i, v)).collect())
    }
}

impl<T: BridgeFunction + ?Sized> BridgeFunction for std::sync::Arc<T> {
    fn eval_rows(&self, data: &Dataset, rows: &[usize], a: &[f64]) -> Result<Vec<f64>> {
        (**self).eval_rows(data, rows, a)
    }
}

impl<T: BridgeFunction + ?Sized> BridgeFunction for Box<T> {
    fn eval_rows(&self, data: &Dataset, rows: &[usize], a: &[f64]) -> Result<Vec<f64>> {
        (**self).eval_rows(data, rows, a)
    }
}

// ---------------------------------------------------------------------------
// Linear algebra helpers

pub(crate) fn lu_solve(a: DMatrix<f64>, b: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let lu = a.lu();
    let u = lu.u();
    let diag = u.diagonal();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for v in diag.iter() {
        lo = lo.min(v.abs());
        hi = hi.max(v.abs());
    }
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let sol = lu.solve(b).ok_or_else(|| Error::Singular { context: context.into(), condition })?;
    if !condition.is_finite() || condition > 1e17 || sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular { context: context.into(), condition });
    }
    Ok(sol)
}

pub(crate) fn lu_solve_vec(a: DMatrix<f64>, b: &DVector<f64>, context: &str) -> Result<DVector<f64>> {
    let bm = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    let x = lu_solve(a, &bm, context)?;
    Ok(DVector::from_column_slice(x.as_slice()))
}

pub(crate) fn add_diag(m: &mut DMatrix<f64>, v: f64) {
    for i in 0..m.nrows() {
        m[(i, i)] += v;
    }
}

/// `m * diag(d)`.
fn scale_cols(m: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut c) in out.column_iter_mut().enumerate() {
        c *= d[j];
    }
    out
}

/// `diag(d) * m`.
fn scale_rows(m: &mut DMatrix<f64>, d: &[f64]) {
    for (i, &s) in d.iter().enumerate() {
        let mut r = m.row_mut(i);
        r *= s;
    }
}

pub(crate) fn jitter_of(k: &DMatrix<f64>, ridge_jitter: f64) -> f64 {
    if k.nrows() == 0 {
        return 0.0;
    }
    ridge_jitter * k.trace() / k.nrows() as f64
}

// ---------------------------------------------------------------------------
// The min-max problem after the inner maximization
//
// For either bridge the profiled objective in the primal coefficients c is
//   (1/n^2) (t - K c)' M (t - K c) + lambda c' K c     (outcome)
// or its treatment analogue, whose stationarity condition is
//   (M K + n^2 lambda I) c = rhs.
// `InnerSystem` stores M and rhs.

#[derive(Debug, Clone)]
pub(crate) struct InnerSystem {
    pub middle: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub n_total: f64,
}

/// Outcome bridge: M = S G K S, G = (K S / n + lambda I)^{-1} / 4, rhs = M Y.
pub(crate) fn outcome_inner(
    k_inner: &DMatrix<f64>,
    s: &[f64],
    y: &DVector<f64>,
    n_total: f64,
    lambda_inner: f64,
    jitter: f64,
) -> Result<InnerSystem> {
    let ks = scale_cols(k_inner, s);
    let mut a = &ks / n_total;
    add_diag(&mut a, lambda_inner + jitter);
    let mut middle = lu_solve(a, &(ks * 0.25), "outcome adversary system")?;
    scale_rows(&mut middle, s);
    let rhs = &middle * y;
    Ok(InnerSystem { middle, rhs, n_total })
}

/// Treatment bridge with u = S R:
/// M = u G K u, G = (K u / n + lambda I)^{-1} / 4, rhs = u G K~' (S d).
pub(crate) fn treatment_inner(
    k_inner: &DMatrix<f64>,
    k_shift: &DMatrix<f64>,
    s: &[f64],
    r: &[f64],
    d: &[f64],
    n_total: f64,
    lambda_inner: f64,
    jitter: f64,
) -> Result<InnerSystem> {
    let m = s.len();
    let u: Vec<f64> = s.iter().zip(r).map(|(a, b)| a * b).collect();
    let sd: DVector<f64> = DVector::from_iterator(m, s.iter().zip(d).map(|(a, b)| a * b));
    let ku = scale_cols(k_inner, &u);
    let mut a = &ku / n_total;
    add_diag(&mut a, lambda_inner + jitter);
    let target = k_shift.tr_mul(&sd) * 0.25;
    let mut b = DMatrix::zeros(m, m + 1);
    b.columns_mut(0, m).copy_from(&(ku * 0.25));
    b.column_mut(m).copy_from(&target);
    let sol = lu_solve(a, &b, "treatment adversary system")?;
    let mut middle = sol.columns(0, m).into_owned();
    scale_rows(&mut middle, &u);
    let rhs = DVector::from_iterator(m, sol.column(m).iter().zip(&u).map(|(v, w)| v * w));
    Ok(InnerSystem { middle, rhs, n_total })
}

/// Solve the outer problem; returns (coefficients, constraint active).
pub(crate) fn solve_outer(
    inner: &InnerSystem,
    k_outer: &DMatrix<f64>,
    lambda_outer: f64,
    norm_bound: Option<f64>,
    jitter: f64,
) -> Result<(DVector<f64>, bool)> {
    let n2 = inner.n_total * inner.n_total;
    let mut sys = &inner.middle * k_outer;
    add_diag(&mut sys, n2 * (lambda_outer + jitter));
    let coef = lu_solve_vec(sys, &inner.rhs, "outer bridge system")?;
    let Some(b) = norm_bound else {
        return Ok((coef, false));
    };
    let norm_sq = coef.dot(&(k_outer * &coef));
    if norm_sq <= b * b {
        return Ok((coef, false));
    }
    let mut p = k_outer * (&inner.middle * k_outer);
    p += k_outer * (n2 * lambda_outer);
    p /= n2;
    let p = (&p + p.transpose()) * 0.5;
    let q = k_outer * &inner.rhs / n2;
    Ok((constrained_solution(&p, &q, k_outer, b)?, true))
}

/// Minimize c'Pc - 2q'c subject to c'Kc <= B^2 on the boundary, via the
/// multiplier u solving sum t_i^2 / (D_i + u/B^2)^2 = B^2.
pub(crate) fn constrained_solution(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    k: &DMatrix<f64>,
    b: f64,
) -> Result<DVector<f64>> {
    const CLIP: f64 = 1e-12;
    let b2 = b * b;
    let eig = k.clone().symmetric_eigen();
    let inv_sqrt = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| 1.0 / l.max(CLIP).sqrt()),
    );
    let k_half_inv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
    let c = &k_half_inv * p * &k_half_inv;
    let c = (&c + c.transpose()) * 0.5;
    let ce = c.symmetric_eigen();
    let t = ce.eigenvectors.tr_mul(&(&k_half_inv * q));
    let dvals = &ce.eigenvalues;

    let f = |u: f64| -> f64 {
        t.iter()
            .zip(dvals.iter())
            .map(|(ti, di)| {
                let den = di + u / b2;
                ti * ti / (den * den)
            })
            .sum()
    };
    // f decreases on u > -B^2 min(D); the largest root lies there.
    let dmin = dvals.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut lo = (-b2 * dmin).max(0.0);
    let mut hi = lo.max(1.0);
    let mut doublings = 0;
    while !(f(hi) <= b2) {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(Error::RootBracket { lo, hi, residual: f(hi) - b2 });
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-10 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) > b2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = hi;
    let beta = DVector::from_iterator(
        t.len(),
        t.iter().zip(dvals.iter()).map(|(ti, di)| ti / (di + u / b2)),
    );
    let coef = &k_half_inv * (&ce.eigenvectors * beta);
    if coef.iter().any(|v| !v.is_finite()) {
        return Err(Error::RootBracket { lo, hi, residual: f64::NAN });
    }
    Ok(coef)
}

// ---------------------------------------------------------------------------
// Row selection

/// Rows entering a bridge fit: complete cases with A in S or in the image.
#[derive(Debug, Clone)]
pub(crate) struct FitRows {
    pub rows: Vec<usize>,
    pub weights: Vec<f64>,
    pub n_total: f64,
}

pub(crate) fn fit_rows(data: &Dataset, policy: &Policy, s_ind: &[bool], weighted: bool) -> Result<FitRows> {
    if s_ind.len() != data.n() {
        return Err(Error::Dimension { expected: data.n(), found: s_ind.len() });
    }
    let obs = data.observed();
    let a = data.a();
    if !weighted && obs.iter().any(|&o| !o) {
        return Err(Error::InvalidArgument(
            "unweighted bridge fit with missing exposures; use the weighted fit".into(),
        ));
    }
    let rows: Vec<usize> = (0..data.n())
        .filter(|&i| obs[i] && (s_ind[i] || policy.in_image(a[i])))
        .collect();
    let missing = obs.iter().filter(|&&o| !o).count();
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no complete rows in S or the policy image".into()));
    }
    let weights: Vec<f64> = if weighted {
        rows.iter().map(|&i| data.weights()[i]).collect()
    } else {
        vec![1.0; rows.len()]
    };
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidArgument("sampling weights must be positive on complete rows".into()));
    }
    Ok(FitRows { n_total: (rows.len() + missing) as f64, rows, weights })
}

fn a_scale(data: &Dataset) -> (f64, f64) {
    data.transforms().map_or((0.0, 1.0), |t| (t.a.means[0], t.a.sds[0]))
}

/// Prepared inputs for outcome bridge fits; shared across hyperparameters.
#[derive(Debug, Clone)]
pub(crate) struct OutcomeDesign {
    pub fr: FitRows,
    pub x_h: DMatrix<f64>,
    pub x_g: DMatrix<f64>,
    pub y: DVector<f64>,
    pub a_scale: (f64, f64),
}

impl OutcomeDesign {
    pub fn new(data: &Dataset, policy: &Policy, s_ind: &[bool], weighted: bool) -> Result<Self> {
        let fr = fit_rows(data, policy, s_ind, weighted)?;
        let a: Vec<f64> = fr.rows.iter().map(|&i| data.a()[i]).collect();
        let x_h = data.outcome_features(&fr.rows, &a);
        let x_g = data.treatment_features(&fr.rows, &a);
        let y = DVector::from_iterator(fr.rows.len(), fr.rows.iter().map(|&i| data.y()[i]));
        Ok(Self { fr, x_h, x_g, y, a_scale: a_scale(data) })
    }

    pub fn inner(&self, kernel_inner: &GaussianKernel, lambda_inner: f64, ridge_jitter: f64) -> Result<InnerSystem> {
        let k = kernel_inner.matrix(&self.x_g, &self.x_g)?;
        let j = jitter_of(&k, ridge_jitter);
        outcome_inner(&k, &self.fr.weights, &self.y, self.fr.n_total, lambda_inner, j)
    }

    pub fn estimate(&self, coef: DVector<f64>, kernel: GaussianKernel, constrained: bool) -> Result<BridgeEstimate> {
        let mut e = BridgeEstimate::new(BridgeKind::Outcome, coef, self.x_h.clone(), kernel, None, self.a_scale)?;
        e.constrained = constrained;
        Ok(e)
    }
}

/// Prepared inputs for treatment bridge fits.
#[derive(Debug, Clone)]
pub(crate) struct TreatmentDesign {
    pub fr: FitRows,
    pub x_g: DMatrix<f64>,
    pub x_h: DMatrix<f64>,
    pub x_h_shift: DMatrix<f64>,
    pub r: Vec<f64>,
    pub d: Vec<f64>,
    pub policy: Policy,
    pub a_scale: (f64, f64),
}

impl TreatmentDesign {
    pub fn new(data: &Dataset, policy: &Policy, s_ind: &[bool], weighted: bool) -> Result<Self> {
        let fr = fit_rows(data, policy, s_ind, weighted)?;
        let a: Vec<f64> = fr.rows.iter().map(|&i| data.a()[i]).collect();
        let d: Vec<f64> = fr.rows.iter().map(|&i| if s_ind[i] { 1.0 } else { 0.0 }).collect();
        // Rows outside S carry d = 0, so their shifted value never matters.
        let qa: Vec<f64> = a
            .iter()
            .zip(&d)
            .map(|(&v, &di)| if di > 0.0 { policy.shifted(v).unwrap_or(v) } else { v })
            .collect();
        let r: Vec<f64> = a.iter().map(|&v| if policy.in_image(v) { 1.0 } else { 0.0 }).collect();
        Ok(Self {
            x_g: data.treatment_features(&fr.rows, &a),
            x_h: data.outcome_features(&fr.rows, &a),
            x_h_shift: data.outcome_features(&fr.rows, &qa),
            fr,
            r,
            d,
            policy: *policy,
            a_scale: a_scale(data),
        })
    }

    pub fn inner(&self, kernel_inner: &GaussianKernel, lambda_inner: f64, ridge_jitter: f64) -> Result<InnerSystem> {
        let k = kernel_inner.matrix(&self.x_h, &self.x_h)?;
        let k_shift = kernel_inner.matrix(&self.x_h_shift, &self.x_h)?;
        let j = jitter_of(&k, ridge_jitter);
        treatment_inner(&k, &k_shift, &self.fr.weights, &self.r, &self.d, self.fr.n_total, lambda_inner, j)
    }

    pub fn estimate(&self, coef: DVector<f64>, kernel: GaussianKernel, constrained: bool) -> Result<BridgeEstimate> {
        let mut e = BridgeEstimate::new(
            BridgeKind::Treatment,
            coef,
            self.x_g.clone(),
            kernel,
            Some(self.policy),
            self.a_scale,
        )?;
        e.constrained = constrained;
        Ok(e)
    }
}

fn check_kernels(config: &BridgeFitConfig, outer_dim: usize, inner_dim: usize) -> Result<()> {
    config.check()?;
    if config.kernel_outer.dim() != outer_dim {
        return Err(Error::Dimension { expected: outer_dim, found: config.kernel_outer.dim() });
    }
    if config.kernel_inner.dim() != inner_dim {
        return Err(Error::Dimension { expected: inner_dim, found: config.kernel_inner.dim() });
    }
    Ok(())
}

fn fit_h_impl(data: &Dataset, config: &BridgeFitConfig, policy: &Policy, s_ind: &[bool], weighted: bool) -> Result<BridgeEstimate> {
    check_kernels(config, data.outcome_dim(), data.treatment_dim())?;
    let design = OutcomeDesign::new(data, policy, s_ind, weighted)?;
    let inner = design.inner(&config.kernel_inner, config.lambda_inner, config.ridge_jitter)?;
    let k_outer = config.kernel_outer.matrix(&design.x_h, &design.x_h)?;
    let j = jitter_of(&k_outer, config.ridge_jitter);
    let (coef, active) = solve_outer(&inner, &k_outer, config.lambda_outer, config.norm_bound, j)?;
    design.estimate(coef, config.kernel_outer, active)
}

fn fit_g_impl(data: &Dataset, config: &BridgeFitConfig, policy: &Policy, s_ind: &[bool], weighted: bool) -> Result<BridgeEstimate> {
    check_kernels(config, data.treatment_dim(), data.outcome_dim())?;
    let design = TreatmentDesign::new(data, policy, s_ind, weighted)?;
    let inner = design.inner(&config.kernel_inner, config.lambda_inner, config.ridge_jitter)?;
    let k_outer = config.kernel_outer.matrix(&design.x_g, &design.x_g)?;
    let j = jitter_of(&k_outer, config.ridge_jitter);
    let (coef, active) = solve_outer(&inner, &k_outer, config.lambda_outer, config.norm_bound, j)?;
    design.estimate(coef, config.kernel_outer, active)
}

/// Outcome bridge on fully observed data. Anchors are (A, L, W) rows with
/// A in S or in the policy image.
pub fn fit_h(data: &Dataset, config: &BridgeFitConfig, policy: &Policy, s_ind: &[bool]) -> Result<BridgeEstimate> {
    fit_h_impl(data, config, policy, s_ind, false)
}

/// Treatment bridge on fully observed data; evaluation is masked by I_q(a).
pub fn fit_g(data: &Dataset, config: &BridgeFitConfig, policy: &Policy, s_ind: &[bool]) -> Result<BridgeEstimate> {
    fit_g_impl(data, config, policy, s_ind, false)
}

/// Outcome bridge under two-phase sampling: anchored at complete cases,
/// weighted by the sampling weights, with n counting every row.
pub fn fit_h_weighted(data: &Dataset, config: &BridgeFitConfig, policy: &Policy, s_ind: &[bool]) -> Result<BridgeEstimate> {
    fit_h_impl(data, config, policy, s_ind, true)
}

pub fn fit_g_weighted(data: &Dataset, config: &BridgeFitConfig, policy: &Policy, s_ind: &[bool]) -> Result<BridgeEstimate> {
    fit_g_impl(data, config, policy, s_ind, true)
}

/// Maximizer of the outcome adversary's concave objective
///   (1/n) a'K S r - (1/n) a'K S K a - lambda a'K a
/// for residual r, i.e. a = (S K / n + lambda I)^{-1} S r / (2n).
pub fn outcome_adversary(
    k_inner: &DMatrix<f64>,
    s: &[f64],
    residual: &DVector<f64>,
    n_total: f64,
    lambda_inner: f64,
) -> Result<DVector<f64>> {
    let mut a = k_inner.clone();
    scale_rows(&mut a, s);
    a /= n_total;
    add_diag(&mut a, lambda_inner);
    let sr = DVector::from_iterator(s.len(), s.iter().zip(residual.iter()).map(|(a, b)| a * b));
    Ok(lu_solve_vec(a, &sr, "outcome adversary")? / (2.0 * n_total))
}
