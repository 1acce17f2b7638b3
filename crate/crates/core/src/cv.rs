//! Adversarial validation risks for candidate bridges and the grid search
//! that picks regularization and bandwidth scales per fold.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::bridge::{
    add_diag, fit_rows, jitter_of, lu_solve, lu_solve_vec, outcome_inner, solve_outer, BridgeEstimate,
    BridgeFunction, InnerSystem, OutcomeDesign, TreatmentDesign, DEFAULT_RIDGE_JITTER,
};
use crate::crossfit::{dr_crossfit, make_folds, ChosenConfig, DRResult, FitProcedure, FoldContext, FoldFit};
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::kernels::{median_heuristic, GaussianKernel};
use crate::policy::Policy;

/// Candidate scales. Outer penalties are c * sqrt(log n'/n'), inner ones
/// c * log n'/n', with n' the size of the fitting sample. Outer bandwidths
/// are c5 times the median pairwise distance of the fitting rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    /// Outer penalty scales for h.
    pub c1_list: Vec<f64>,
    /// Inner penalty scales for the adversary of h.
    pub c2_list: Vec<f64>,
    /// Outer penalty scales for g.
    pub c3_list: Vec<f64>,
    /// Inner penalty scales for the adversary of g.
    pub c4_list: Vec<f64>,
    pub c5_list: Vec<f64>,
    /// Inner bandwidth as a multiple of the median distance.
    pub bw_inner_scale: f64,
    /// Bandwidth multiple for the validation risk kernels.
    pub bw_risk_scale: f64,
    /// Scale of the validation risk penalty theta * log n3 / n3.
    pub theta: f64,
    /// Fixed base distances replacing the median for (A,L,W) and (A,L,Z).
    pub bw0_h: Option<f64>,
    pub bw0_g: Option<f64>,
    pub norm_bound: Option<f64>,
}

fn powers(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|e| 10f64.powi(e)).collect()
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            c1_list: powers(-5, -1),
            c2_list: powers(-1, 2),
            c3_list: powers(-5, -1),
            c4_list: powers(-1, 2),
            c5_list: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            bw_inner_scale: 0.25,
            bw_risk_scale: 0.25,
            theta: 1.0,
            bw0_h: None,
            bw0_g: None,
            norm_bound: None,
        }
    }
}

impl HyperGrid {
    /// Smaller grid for desk-scale replications.
    pub fn reduced() -> Self {
        Self {
            c1_list: powers(-4, -2),
            c2_list: vec![1.0, 10.0],
            c3_list: powers(-4, -2),
            c4_list: vec![1.0, 10.0],
            c5_list: vec![0.5, 1.0, 2.0],
            ..Self::default()
        }
    }

    /// One configuration per bridge.
    pub fn single(c1: f64, c2: f64, c3: f64, c4: f64, c5: f64) -> Self {
        Self {
            c1_list: vec![c1],
            c2_list: vec![c2],
            c3_list: vec![c3],
            c4_list: vec![c4],
            c5_list: vec![c5],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, list) in [
            ("c1", &self.c1_list),
            ("c2", &self.c2_list),
            ("c3", &self.c3_list),
            ("c4", &self.c4_list),
            ("c5", &self.c5_list),
        ] {
            if list.is_empty() {
                return Err(Error::InvalidArgument(format!("{name} list is empty")));
            }
            if list.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidArgument(format!("{name} entries must be positive")));
            }
        }
        for (name, v) in [("bw_inner_scale", self.bw_inner_scale), ("bw_risk_scale", self.bw_risk_scale), ("theta", self.theta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        for v in [self.bw0_h, self.bw0_g, self.norm_bound].into_iter().flatten() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument("bandwidth bases and norm bound must be positive".into()));
            }
        }
        Ok(())
    }

    fn configs(outer: &[f64], inner: &[f64], c5: &[f64]) -> Vec<(f64, f64, f64)> {
        let mut v: Vec<(f64, f64, f64)> = outer
            .iter()
            .flat_map(|&a| inner.iter().flat_map(move |&b| c5.iter().map(move |&c| (a, b, c))))
            .collect();
        v.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.total_cmp(&y.2)));
        v.dedup();
        v
    }

    pub fn h_configs(&self) -> Vec<(f64, f64, f64)> {
        Self::configs(&self.c1_list, &self.c2_list, &self.c5_list)
    }

    pub fn g_configs(&self) -> Vec<(f64, f64, f64)> {
        Self::configs(&self.c3_list, &self.c4_list, &self.c5_list)
    }
}

pub fn lambda_outer(c: f64, n: f64) -> f64 {
    c * (n.ln() / n).sqrt()
}

pub fn lambda_inner(c: f64, n: f64) -> f64 {
    c * n.ln() / n
}

// ---------------------------------------------------------------------------
// Validation risks

/// Precomputed pieces of both risks on a validation sample. Only rows that
/// would enter a bridge fit (complete, in S or in the image) contribute;
/// n3 counts every validation row.
pub struct RiskContext {
    sub: Dataset,
    rows: Vec<usize>,
    a: Vec<f64>,
    n: f64,
    h_middle: DMatrix<f64>,
    y: DVector<f64>,
    u: Vec<f64>,
    g_b0: DVector<f64>,
    g_bk: DMatrix<f64>,
    g_c0: f64,
}

impl RiskContext {
    pub fn new(data: &Dataset, rows: &[usize], policy: &Policy, s_ind: &[bool], grid: &HyperGrid) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidArgument("validation sample needs at least two rows".into()));
        }
        let weighted = data.is_two_phase();
        let sub = data.subset(rows);
        let s_sub: Vec<bool> = rows.iter().map(|&i| s_ind[i]).collect();
        let usable = (0..sub.n()).any(|i| sub.observed()[i] && (s_sub[i] || policy.in_image(sub.a()[i])));
        if !usable {
            // nothing enters either objective, so both maxima are zero
            return Ok(Self {
                sub,
                rows: Vec::new(),
                a: Vec::new(),
                n: rows.len() as f64,
                h_middle: DMatrix::zeros(0, 0),
                y: DVector::zeros(0),
                u: Vec::new(),
                g_b0: DVector::zeros(0),
                g_bk: DMatrix::zeros(0, 0),
                g_c0: 0.0,
            });
        }
        let fr = fit_rows(&sub, policy, &s_sub, weighted)?;
        if fr.rows.len() < 2 {
            return Err(Error::InvalidArgument("validation sample has fewer than two usable rows".into()));
        }
        let n = sub.n() as f64;
        let lambda = grid.theta * n.ln() / n;
        let a: Vec<f64> = fr.rows.iter().map(|&i| sub.a()[i]).collect();
        let w = if weighted { Some(fr.weights.as_slice()) } else { None };

        let x_g = sub.treatment_features(&fr.rows, &a);
        let kg = GaussianKernel::new(median_heuristic(&x_g, grid.bw_risk_scale, w)?, x_g.ncols())?;
        let k = kg.matrix(&x_g, &x_g)?;
        let y = DVector::from_iterator(fr.rows.len(), fr.rows.iter().map(|&i| sub.y()[i]));
        let h_inner = outcome_inner(&k, &fr.weights, &y, n, lambda, jitter_of(&k, DEFAULT_RIDGE_JITTER))?;

        let x_h = sub.outcome_features(&fr.rows, &a);
        let d: Vec<f64> = fr.rows.iter().map(|&i| if s_sub[i] { 1.0 } else { 0.0 }).collect();
        let qa: Vec<f64> =
            a.iter().zip(&d).map(|(&v, &di)| if di > 0.0 { policy.shifted(v).unwrap_or(v) } else { v }).collect();
        let x_hq = sub.outcome_features(&fr.rows, &qa);
        let kh = GaussianKernel::new(median_heuristic(&x_h, grid.bw_risk_scale, w)?, x_h.ncols())?;
        let k = kh.matrix(&x_h, &x_h)?;
        let k_shift = kh.matrix(&x_hq, &x_h)?;
        let jit = jitter_of(&k, DEFAULT_RIDGE_JITTER);
        let m = fr.rows.len();
        let u: Vec<f64> = fr
            .rows
            .iter()
            .zip(&a)
            .zip(&fr.weights)
            .map(|((_, &av), &s)| if policy.in_image(av) { s } else { 0.0 })
            .collect();
        let sd = DVector::from_iterator(m, fr.weights.iter().zip(&d).map(|(s, d)| s * d));
        let zeta0 = k_shift.tr_mul(&sd);
        // (K U / n + lambda)^{-1} [zeta0 | K]
        let mut ku = k.clone();
        for (j, mut c) in ku.column_iter_mut().enumerate() {
            c *= u[j];
        }
        let mut sys = ku / n;
        add_diag(&mut sys, lambda + jit);
        let mut rhs = DMatrix::zeros(m, m + 1);
        rhs.column_mut(0).copy_from(&zeta0);
        rhs.columns_mut(1, m).copy_from(&k);
        let sol = lu_solve(sys, &rhs, "treatment risk system")?;
        let g_b0 = sol.column(0).into_owned();
        let g_bk = sol.columns(1, m).into_owned();
        // zeta0' N^{-1} zeta0 with N = K U K / n + lambda K, on the
        // numerically nonsingular part of N.
        let mut nmat = &k * DMatrix::from_diagonal(&DVector::from_column_slice(&u)) * &k / n;
        nmat += &k * (lambda + jit);
        let nmat = (&nmat + nmat.transpose()) * 0.5;
        let eig = nmat.symmetric_eigen();
        let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let floor = top * 1e-14;
        let proj = eig.eigenvectors.tr_mul(&zeta0);
        let g_c0 = proj
            .iter()
            .zip(eig.eigenvalues.iter())
            .filter(|(_, &mu)| mu > floor)
            .map(|(p, mu)| p * p / mu)
            .sum();

        Ok(Self { sub, rows: fr.rows, a, n, h_middle: h_inner.middle, y, u, g_b0, g_bk, g_c0 })
    }

    pub fn n_used(&self) -> usize {
        self.rows.len()
    }

    pub fn n_total(&self) -> f64 {
        self.n
    }

    /// max over the inner class of E_n[f (Y - h) - f^2] - lambda |f|^2.
    pub fn risk_h(&self, h: &dyn BridgeFunction) -> Result<f64> {
        let hv = h.eval_rows(&self.sub, &self.rows, &self.a)?;
        let r = DVector::from_iterator(hv.len(), self.y.iter().zip(&hv).map(|(y, h)| y - h));
        let v = r.dot(&(&self.h_middle * &r)) / (self.n * self.n);
        finite_risk(v)
    }

    /// max over the inner class of E_n[f(q(A)) I_S - I_q f g - I_q f^2]
    /// - lambda |f|^2.
    pub fn risk_g(&self, g: &dyn BridgeFunction) -> Result<f64> {
        let gv = g.eval_rows(&self.sub, &self.rows, &self.a)?;
        let v = DVector::from_iterator(gv.len(), gv.iter().zip(&self.u).map(|(g, u)| g * u));
        let cross = v.dot(&self.g_b0);
        let quad = v.dot(&(&self.g_bk * &v));
        finite_risk((self.g_c0 - 2.0 * cross + quad) / (4.0 * self.n * self.n))
    }
}

fn finite_risk(v: f64) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::NonFinite("validation risk".into()));
    }
    Ok(v.max(0.0))
}

pub fn risk_h(
    h: &dyn BridgeFunction,
    data: &Dataset,
    test_rows: &[usize],
    policy: &Policy,
    s_ind: &[bool],
    grid: &HyperGrid,
) -> Result<f64> {
    RiskContext::new(data, test_rows, policy, s_ind, grid)?.risk_h(h)
}

pub fn risk_g(
    g: &dyn BridgeFunction,
    data: &Dataset,
    test_rows: &[usize],
    policy: &Policy,
    s_ind: &[bool],
    grid: &HyperGrid,
) -> Result<f64> {
    RiskContext::new(data, test_rows, policy, s_ind, grid)?.risk_g(g)
}

// ---------------------------------------------------------------------------
// Fitting a grid

enum Design {
    Outcome(OutcomeDesign),
    Treatment(TreatmentDesign),
}

impl Design {
    fn weights(&self) -> &[f64] {
        match self {
            Design::Outcome(d) => &d.fr.weights,
            Design::Treatment(d) => &d.fr.weights,
        }
    }
    fn n_total(&self) -> f64 {
        match self {
            Design::Outcome(d) => d.fr.n_total,
            Design::Treatment(d) => d.fr.n_total,
        }
    }
    /// (outer features, inner features)
    fn features(&self) -> (&DMatrix<f64>, &DMatrix<f64>) {
        match self {
            Design::Outcome(d) => (&d.x_h, &d.x_g),
            Design::Treatment(d) => (&d.x_g, &d.x_h),
        }
    }
    fn inner(&self, k: &GaussianKernel, lambda: f64) -> Result<InnerSystem> {
        match self {
            Design::Outcome(d) => d.inner(k, lambda, DEFAULT_RIDGE_JITTER),
            Design::Treatment(d) => d.inner(k, lambda, DEFAULT_RIDGE_JITTER),
        }
    }
    fn estimate(&self, coef: DVector<f64>, k: GaussianKernel, constrained: bool) -> Result<BridgeEstimate> {
        match self {
            Design::Outcome(d) => d.estimate(coef, k, constrained),
            Design::Treatment(d) => d.estimate(coef, k, constrained),
        }
    }
}

/// Median distances of (A,L,W) and (A,L,Z) on the fitting rows, or the
/// user-supplied bases.
fn bandwidth_bases(design: &Design, grid: &HyperGrid, weighted: bool, outcome: bool) -> Result<(f64, f64)> {
    let (xo, xi) = design.features();
    let w = if weighted { Some(design.weights()) } else { None };
    let (bo, bi) = if outcome { (grid.bw0_h, grid.bw0_g) } else { (grid.bw0_g, grid.bw0_h) };
    let base_o = match bo {
        Some(b) => b,
        None => median_heuristic(xo, 1.0, w)?,
    };
    let base_i = match bi {
        Some(b) => b,
        None => median_heuristic(xi, 1.0, w)?,
    };
    Ok((base_o, base_i))
}

type Fitted = (ChosenConfig, Result<BridgeEstimate>);

fn fit_grid(design: &Design, grid: &HyperGrid, configs: &[(f64, f64, f64)], weighted: bool, outcome: bool) -> Result<Vec<Fitted>> {
    let (base_o, base_i) = bandwidth_bases(design, grid, weighted, outcome)?;
    let (xo, _) = design.features();
    let n = design.n_total();
    let bw_inner = grid.bw_inner_scale * base_i;
    let k_inner = GaussianKernel::new(bw_inner, design.features().1.ncols())?;

    let mut inner_scales: Vec<f64> = configs.iter().map(|c| c.1).collect();
    inner_scales.sort_by(f64::total_cmp);
    inner_scales.dedup();
    let mut c5s: Vec<f64> = configs.iter().map(|c| c.2).collect();
    c5s.sort_by(f64::total_cmp);
    c5s.dedup();

    let inners: Vec<Result<InnerSystem>> =
        inner_scales.par_iter().map(|&c| design.inner(&k_inner, lambda_inner(c, n))).collect();
    let outers: Vec<Result<(GaussianKernel, DMatrix<f64>)>> = c5s
        .par_iter()
        .map(|&c5| {
            let k = GaussianKernel::new(c5 * base_o, xo.ncols())?;
            let m = k.matrix(xo, xo)?;
            Ok((k, m))
        })
        .collect();

    let pairs: Vec<(usize, usize)> =
        (0..inner_scales.len()).flat_map(|i| (0..c5s.len()).map(move |j| (i, j))).collect();
    let products: Vec<Option<DMatrix<f64>>> = pairs
        .par_iter()
        .map(|&(i, j)| match (&inners[i], &outers[j]) {
            (Ok(inn), Ok((_, ko))) => Some(&inn.middle * ko),
            _ => None,
        })
        .collect();

    let out = configs
        .par_iter()
        .map(|&(co, ci, c5)| {
            let i = inner_scales.iter().position(|&v| v == ci).expect("scale listed");
            let j = c5s.iter().position(|&v| v == c5).expect("scale listed");
            let lam_o = lambda_outer(co, n);
            let mut cfg = ChosenConfig {
                c_outer: co,
                c_inner: ci,
                c5,
                lambda_outer: lam_o,
                lambda_inner: lambda_inner(ci, n),
                bandwidth_outer: c5 * base_o,
                bandwidth_inner: bw_inner,
                risk: None,
                constrained: false,
            };
            let res = (|| {
                let inner = inners[i].as_ref().map_err(Error::replicate)?;
                let (k, ko) = outers[j].as_ref().map_err(Error::replicate)?;
                let mk = products[i * c5s.len() + j].as_ref().expect("computed with its inputs");
                let jit = jitter_of(ko, DEFAULT_RIDGE_JITTER);
                let mut sys = mk.clone();
                add_diag(&mut sys, n * n * (lam_o + jit));
                let coef = lu_solve_vec(sys, &inner.rhs, "outer bridge system")?;
                design.estimate(coef, *k, false)
            })();
            cfg.constrained = false;
            (cfg, res)
        })
        .collect();
    Ok(out)
}

/// Refit one configuration, applying the norm bound when set.
fn refit_bounded(design: &Design, cfg: &ChosenConfig, bound: f64) -> Result<BridgeEstimate> {
    let (xo, xi) = design.features();
    let k_inner = GaussianKernel::new(cfg.bandwidth_inner, xi.ncols())?;
    let inner = design.inner(&k_inner, cfg.lambda_inner)?;
    let k = GaussianKernel::new(cfg.bandwidth_outer, xo.ncols())?;
    let ko = k.matrix(xo, xo)?;
    let (coef, active) = solve_outer(&inner, &ko, cfg.lambda_outer, Some(bound), jitter_of(&ko, DEFAULT_RIDGE_JITTER))?;
    design.estimate(coef, k, active)
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub h: BridgeEstimate,
    pub g: BridgeEstimate,
    pub h_config: ChosenConfig,
    pub g_config: ChosenConfig,
    /// Configurations that failed to solve, with the reason.
    pub failures: Vec<String>,
}

fn describe(prefix: &str, c: &ChosenConfig, e: &Error) -> String {
    format!("{prefix}(c_outer={}, c_inner={}, c5={}): {e}", c.c_outer, c.c_inner, c.c5)
}

fn pick(
    fitted: Vec<Fitted>,
    risk: impl Fn(&BridgeEstimate) -> Result<f64> + Sync,
    label: &str,
    failures: &mut Vec<String>,
) -> Result<(BridgeEstimate, ChosenConfig)> {
    let scored: Vec<(ChosenConfig, Result<(BridgeEstimate, f64)>)> = fitted
        .into_par_iter()
        .map(|(cfg, est)| {
            let r = est.and_then(|e| {
                let v = risk(&e)?;
                Ok((e, v))
            });
            (cfg, r)
        })
        .collect();
    // configs arrive sorted by (c_outer, c_inner, c5); strict < keeps the first
    let mut best: Option<(BridgeEstimate, ChosenConfig)> = None;
    for (mut cfg, r) in scored {
        match r {
            Ok((e, v)) => {
                cfg.risk = Some(v);
                if best.as_ref().map_or(true, |(_, b)| v < b.risk.unwrap_or(f64::INFINITY)) {
                    best = Some((e, cfg));
                }
            }
            Err(err) => failures.push(describe(label, &cfg, &err)),
        }
    }
    best.ok_or_else(|| Error::GridExhausted(failures.clone()))
}

/// Fit every grid configuration of h and g on `train_rows` and keep, per
/// bridge, the one with the smallest validation risk on `valid_rows`.
pub fn select_bridges(
    data: &Dataset,
    train_rows: &[usize],
    valid_rows: &[usize],
    grid: &HyperGrid,
    policy: &Policy,
    s_ind: &[bool],
) -> Result<Selection> {
    grid.validate()?;
    if train_rows.iter().any(|r| valid_rows.contains(r)) {
        return Err(Error::InvalidArgument("train and validation rows overlap".into()));
    }
    let weighted = data.is_two_phase();
    let train = data.subset(train_rows);
    let s_train: Vec<bool> = train_rows.iter().map(|&i| s_ind[i]).collect();
    let risk = RiskContext::new(data, valid_rows, policy, s_ind, grid)?;

    let hd = Design::Outcome(OutcomeDesign::new(&train, policy, &s_train, weighted)?);
    let gd = Design::Treatment(TreatmentDesign::new(&train, policy, &s_train, weighted)?);
    let mut failures = Vec::new();
    let h_fit = fit_grid(&hd, grid, &grid.h_configs(), weighted, true)?;
    let (mut h, mut h_cfg) = pick(h_fit, |e| risk.risk_h(e), "h", &mut failures)?;
    let g_fit = fit_grid(&gd, grid, &grid.g_configs(), weighted, false)?;
    let (mut g, mut g_cfg) = pick(g_fit, |e| risk.risk_g(e), "g", &mut failures)?;
    if let Some(b) = grid.norm_bound {
        h = refit_bounded(&hd, &h_cfg, b)?;
        g = refit_bounded(&gd, &g_cfg, b)?;
    }
    h_cfg.constrained = h.constrained();
    g_cfg.constrained = g.constrained();
    log::debug!(
        "selected h (c1={}, c2={}, c5={}) and g (c3={}, c4={}, c5={}); {} failed configs",
        h_cfg.c_outer,
        h_cfg.c_inner,
        h_cfg.c5,
        g_cfg.c_outer,
        g_cfg.c_inner,
        g_cfg.c5,
        failures.len()
    );
    Ok(Selection { h, g, h_config: h_cfg, g_config: g_cfg, failures })
}

/// Fits one configuration per bridge without validation.
pub fn fit_fixed(
    data: &Dataset,
    train_rows: &[usize],
    grid: &HyperGrid,
    policy: &Policy,
    s_ind: &[bool],
) -> Result<Selection> {
    grid.validate()?;
    let (hc, gc) = (grid.h_configs(), grid.g_configs());
    if hc.len() != 1 || gc.len() != 1 {
        return Err(Error::InvalidArgument("fixed fit needs exactly one configuration per bridge".into()));
    }
    let weighted = data.is_two_phase();
    let train = data.subset(train_rows);
    let s_train: Vec<bool> = train_rows.iter().map(|&i| s_ind[i]).collect();
    let hd = Design::Outcome(OutcomeDesign::new(&train, policy, &s_train, weighted)?);
    let gd = Design::Treatment(TreatmentDesign::new(&train, policy, &s_train, weighted)?);
    let mut failures = Vec::new();
    let (mut h, mut h_cfg) = pick(fit_grid(&hd, grid, &hc, weighted, true)?, |_| Ok(0.0), "h", &mut failures)?;
    let (mut g, mut g_cfg) = pick(fit_grid(&gd, grid, &gc, weighted, false)?, |_| Ok(0.0), "g", &mut failures)?;
    h_cfg.risk = None;
    g_cfg.risk = None;
    if let Some(b) = grid.norm_bound {
        h = refit_bounded(&hd, &h_cfg, b)?;
        g = refit_bounded(&gd, &g_cfg, b)?;
    }
    h_cfg.constrained = h.constrained();
    g_cfg.constrained = g.constrained();
    Ok(Selection { h, g, h_config: h_cfg, g_config: g_cfg, failures })
}

fn into_fold_fit(s: Selection) -> FoldFit {
    FoldFit { h: Arc::new(s.h), g: Arc::new(s.g), h_config: Some(s.h_config), g_config: Some(s.g_config) }
}

/// Grid search per evaluation fold: fit on its train folds, validate on its
/// validation folds.
#[derive(Debug, Clone)]
pub struct CvProcedure {
    pub grid: HyperGrid,
}

impl FitProcedure for CvProcedure {
    fn fit(&self, ctx: &FoldContext<'_>) -> Result<FoldFit> {
        let (tf, vf) = ctx.plan.roles(ctx.fold);
        let train = ctx.plan.rows_in_any(&tf);
        let valid = ctx.plan.rows_in_any(&vf);
        log::info!("fold {}: grid search on folds {:?}, validating on {:?}", ctx.fold, tf, vf);
        Ok(into_fold_fit(select_bridges(ctx.data, &train, &valid, &self.grid, ctx.policy, ctx.s_ind)?))
    }
}

/// Single configuration per bridge, trained on the designated train folds
/// or on the whole complement of the evaluation fold.
#[derive(Debug, Clone)]
pub struct FixedProcedure {
    pub grid: HyperGrid,
    pub use_complement: bool,
}

impl FitProcedure for FixedProcedure {
    fn fit(&self, ctx: &FoldContext<'_>) -> Result<FoldFit> {
        let rows = if self.use_complement {
            (0..ctx.plan.n()).filter(|&i| ctx.plan.assignments()[i] != ctx.fold).collect::<Vec<_>>()
        } else {
            ctx.plan.rows_in_any(&ctx.plan.roles(ctx.fold).0)
        };
        Ok(into_fold_fit(fit_fixed(ctx.data, &rows, &self.grid, ctx.policy, ctx.s_ind)?))
    }
}

/// Seeded folds, per-fold grid search and the cross-fitted DR estimate.
pub fn crossfit_with_cv(
    data: &Dataset,
    policy: &Policy,
    s_ind: &[bool],
    k: usize,
    grid: &HyperGrid,
    seed: u64,
    strat_values: Option<&[f64]>,
) -> Result<DRResult> {
    grid.validate()?;
    let plan = make_folds(data.n(), k, seed, strat_values)?;
    dr_crossfit(data, policy, s_ind, &plan, &CvProcedure { grid: grid.clone() })
}
