//! Cross-fitted doubly-robust estimation of the counterfactual policy mean,
//! plug-in outcome-regression and weighting estimators, and Wald intervals.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bridge::BridgeFunction;
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::policy::Policy;
use crate::stats::norm_quantile;

pub const DEFAULT_XI: f64 = 0.05;

/// h(q(A),L,W) I_S + g(A,L,Z) (Y - h(A,L,W)).
pub fn phi(h_shifted: f64, h_observed: f64, g: f64, y: f64, in_s: bool) -> f64 {
    let or = if in_s { h_shifted } else { 0.0 };
    or + g * (y - h_observed)
}

/// Fold id (1..=K) per row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    assignments: Vec<usize>,
    k: usize,
    stratified: bool,
}

impl FoldPlan {
    pub fn from_assignments(assignments: Vec<usize>, k: usize) -> Result<Self> {
        if k < 3 {
            return Err(Error::InvalidArgument(format!("need at least 3 folds, got {k}")));
        }
        if let Some(&bad) = assignments.iter().find(|&&f| f == 0 || f > k) {
            return Err(Error::InvalidArgument(format!("fold id {bad} outside 1..={k}")));
        }
        Ok(Self { assignments, k, stratified: false })
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn stratified(&self) -> bool {
        self.stratified
    }
    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    pub fn rows_in(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn rows_in_any(&self, folds: &[usize]) -> Vec<usize> {
        (0..self.n()).filter(|&i| folds.contains(&self.assignments[i])).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.assignments {
            s[f - 1] += 1;
        }
        s
    }

    /// Plan for the rows permuted by `perm` (new row i is old row perm[i]).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self { assignments: perm.iter().map(|&i| self.assignments[i]).collect(), ..self.clone() }
    }

    /// (train folds, validation folds) for evaluation fold `fold`. The
    /// complement is walked cyclically from fold+1; the first ceil((K-1)/2)
    /// folds train and the rest validate. For K = 3 this is
    /// evaluate k, train k+1, validate k+2.
    pub fn roles(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        fold_roles(fold, self.k)
    }
}

pub fn fold_roles(fold: usize, k: usize) -> (Vec<usize>, Vec<usize>) {
    let rest: Vec<usize> = (1..k).map(|s| (fold - 1 + s) % k + 1).collect();
    let n_train = (k - 1).div_ceil(2);
    (rest[..n_train].to_vec(), rest[n_train..].to_vec())
}

/// Seeded assignment with fold sizes differing by at most one. With
/// `strat_values`, rows are ordered by value (missing values last) and each
/// consecutive block of K rows is spread over all folds.
pub fn make_folds(n: usize, k: usize, seed: u64, strat_values: Option<&[f64]>) -> Result<FoldPlan> {
    if k < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 folds, got {k}")));
    }
    if n < k {
        return Err(Error::InvalidArgument(format!("n = {n} is smaller than K = {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut assignments = vec![0; n];
    match strat_values {
        None => {
            for (pos, &i) in order.iter().enumerate() {
                assignments[i] = pos % k + 1;
            }
        }
        Some(v) => {
            if v.len() != n {
                return Err(Error::Dimension { expected: n, found: v.len() });
            }
            // stable sort keeps the shuffled order among ties
            order.sort_by(|&i, &j| match (v[i].is_nan(), v[j].is_nan()) {
                (false, false) => v[i].total_cmp(&v[j]),
                (a, b) => a.cmp(&b),
            });
            // every full block covers each fold once
            let mut labels: Vec<usize> = (1..=k).collect();
            for block in order.chunks(k) {
                labels.shuffle(&mut rng);
                for (&i, &f) in block.iter().zip(&labels) {
                    assignments[i] = f;
                }
            }
        }
    }
    Ok(FoldPlan { assignments, k, stratified: strat_values.is_some() })
}

/// Hyperparameters chosen for one bridge in one fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChosenConfig {
    pub c_outer: f64,
    pub c_inner: f64,
    pub c5: f64,
    pub lambda_outer: f64,
    pub lambda_inner: f64,
    pub bandwidth_outer: f64,
    pub bandwidth_inner: f64,
    pub risk: Option<f64>,
    pub constrained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_folds: Vec<usize>,
    pub validation_folds: Vec<usize>,
    pub n_evaluated: usize,
    pub h: Option<ChosenConfig>,
    pub g: Option<ChosenConfig>,
}

/// Bridges for one evaluation fold.
pub struct FoldFit {
    pub h: Arc<dyn BridgeFunction>,
    pub g: Arc<dyn BridgeFunction>,
    pub h_config: Option<ChosenConfig>,
    pub g_config: Option<ChosenConfig>,
}

/// What a fit procedure sees when asked for the bridges of fold `fold`.
pub struct FoldContext<'a> {
    pub fold: usize,
    pub plan: &'a FoldPlan,
    pub data: &'a Dataset,
    pub policy: &'a Policy,
    pub s_ind: &'a [bool],
}

pub trait FitProcedure: Sync {
    fn fit(&self, ctx: &FoldContext<'_>) -> Result<FoldFit>;
}

/// The same (h, g) for every fold; used for oracle and constant bridges.
#[derive(Clone)]
pub struct InjectedBridges {
    pub h: Arc<dyn BridgeFunction>,
    pub g: Arc<dyn BridgeFunction>,
}

impl InjectedBridges {
    pub fn new(h: impl BridgeFunction + 'static, g: impl BridgeFunction + 'static) -> Self {
        Self { h: Arc::new(h), g: Arc::new(g) }
    }
}

impl FitProcedure for InjectedBridges {
    fn fit(&self, _: &FoldContext<'_>) -> Result<FoldFit> {
        Ok(FoldFit { h: self.h.clone(), g: self.g.clone(), h_config: None, g_config: None })
    }
}

/// Constant function, for either bridge.
#[derive(Debug, Clone, Copy)]
pub struct ConstantBridge(pub f64);

impl BridgeFunction for ConstantBridge {
    fn eval_rows(&self, _: &Dataset, rows: &[usize], _: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![self.0; rows.len()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DRResult {
    pub psi_hat: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub tau_sq: f64,
    pub n: usize,
    /// Sum of Delta_i S_i I_S,i.
    pub n_effective: f64,
    /// Weighted share of complete cases whose exposure lies in the policy image.
    pub image_proportion: f64,
    pub influence: Option<Vec<f64>>,
    pub folds: Vec<FoldReport>,
}

impl DRResult {
    /// Wald interval at level 1 - xi around the stored estimate.
    pub fn interval(&self, xi: f64) -> (f64, f64) {
        let z = norm_quantile(1.0 - xi / 2.0);
        (self.psi_hat - z * self.se, self.psi_hat + z * self.se)
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_lower <= truth && truth <= self.ci_upper
    }
}

fn check_inputs(data: &Dataset, s_ind: &[bool]) -> Result<()> {
    if s_ind.len() != data.n() {
        return Err(Error::Dimension { expected: data.n(), found: s_ind.len() });
    }
    if let Some(i) = (0..data.n()).find(|&i| s_ind[i] && !data.observed()[i]) {
        return Err(Error::InvalidArgument(format!("row {i} is flagged in S but its exposure is missing")));
    }
    Ok(())
}

/// phi on the given complete-case rows.
fn phi_rows(
    data: &Dataset,
    rows: &[usize],
    policy: &Policy,
    s_ind: &[bool],
    h: &dyn BridgeFunction,
    g: &dyn BridgeFunction,
) -> Result<Vec<f64>> {
    let a: Vec<f64> = rows.iter().map(|&i| data.a()[i]).collect();
    let shifted_rows: Vec<usize> = rows.iter().copied().filter(|&i| s_ind[i]).collect();
    let qa: Vec<f64> = shifted_rows
        .iter()
        .map(|&i| {
            policy
                .shifted(data.a()[i])
                .ok_or_else(|| Error::InvalidArgument(format!("row {i} in S lies outside the policy domain")))
        })
        .collect::<Result<_>>()?;
    let h_obs = h.eval_rows(data, rows, &a)?;
    let h_q = h.eval_rows(data, &shifted_rows, &qa)?;
    let g_obs = g.eval_rows(data, rows, &a)?;
    let mut it = h_q.into_iter();
    let mut out = Vec::with_capacity(rows.len());
    for (k, &i) in rows.iter().enumerate() {
        let hq = if s_ind[i] { it.next().unwrap_or(0.0) } else { 0.0 };
        let v = phi(hq, h_obs[k], g_obs[k], data.y()[i], s_ind[i]);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("phi at row {i}")));
        }
        out.push(v);
    }
    Ok(out)
}

/// Combine per-row phi (0 on rows without an exposure) into the ratio
/// estimator and its Horvitz-Thompson influence values.
fn summarize(data: &Dataset, policy: &Policy, s_ind: &[bool], phi_all: &[f64], xi: f64) -> Result<DRResult> {
    let n = data.n();
    let w = data.weights();
    let obs = data.observed();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        if obs[i] {
            num += w[i] * phi_all[i];
            if s_ind[i] {
                den += w[i];
            }
        }
    }
    if !(den > 0.0) {
        return Err(Error::ZeroDenominator("sum of Delta S I_S"));
    }
    let psi = num / den;
    let p_hat = den / n as f64;
    let influence: Vec<f64> = (0..n)
        .map(|i| {
            if !obs[i] {
                return 0.0;
            }
            let is = if s_ind[i] { 1.0 } else { 0.0 };
            w[i] * (phi_all[i] - psi * is) / p_hat
        })
        .collect();
    let tau_sq = influence.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let se = (tau_sq / n as f64).sqrt();
    let z = norm_quantile(1.0 - xi / 2.0);
    let (mut wi, mut wo) = (0.0, 0.0);
    for i in 0..n {
        if obs[i] {
            wo += w[i];
            if policy.in_image(data.a()[i]) {
                wi += w[i];
            }
        }
    }
    if !psi.is_finite() || !se.is_finite() {
        return Err(Error::NonFinite("doubly robust estimate".into()));
    }
    Ok(DRResult {
        psi_hat: psi,
        se,
        ci_lower: psi - z * se,
        ci_upper: psi + z * se,
        tau_sq,
        n,
        n_effective: den,
        image_proportion: if wo > 0.0 { wi / wo } else { 0.0 },
        influence: Some(influence),
        folds: Vec::new(),
    })
}

/// Cross-fitted DR estimator: held-out rows of fold k are evaluated with
/// bridges the procedure fits for fold k. Folds run in parallel and are
/// combined in fold order.
pub fn dr_crossfit(
    data: &Dataset,
    policy: &Policy,
    s_ind: &[bool],
    plan: &FoldPlan,
    procedure: &dyn FitProcedure,
) -> Result<DRResult> {
    dr_crossfit_xi(data, policy, s_ind, plan, procedure, DEFAULT_XI)
}

pub fn dr_crossfit_xi(
    data: &Dataset,
    policy: &Policy,
    s_ind: &[bool],
    plan: &FoldPlan,
    procedure: &dyn FitProcedure,
    xi: f64,
) -> Result<DRResult> {
    check_inputs(data, s_ind)?;
    if plan.n() != data.n() {
        return Err(Error::Dimension { expected: data.n(), found: plan.n() });
    }
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::InvalidArgument(format!("xi must lie in (0, 1), got {xi}")));
    }
    let per_fold: Vec<Result<(Vec<usize>, Vec<f64>, FoldReport)>> = (1..=plan.k())
        .into_par_iter()
        .map(|fold| {
            let wrap = |e: Error| Error::Fold { fold, source: Box::new(e) };
            let rows: Vec<usize> =
                plan.rows_in(fold).into_iter().filter(|&i| data.observed()[i]).collect();
            if rows.is_empty() {
                return Err(wrap(Error::InvalidArgument("fold has no complete cases".into())));
            }
            let ctx = FoldContext { fold, plan, data, policy, s_ind };
            let fit = procedure.fit(&ctx).map_err(wrap)?;
            let vals = phi_rows(data, &rows, policy, s_ind, fit.h.as_ref(), fit.g.as_ref()).map_err(wrap)?;
            let (train_folds, validation_folds) = plan.roles(fold);
            let report = FoldReport {
                fold,
                train_folds,
                validation_folds,
                n_evaluated: rows.len(),
                h: fit.h_config,
                g: fit.g_config,
            };
            Ok((rows, vals, report))
        })
        .collect();
    let mut phi_all = vec![0.0; data.n()];
    let mut reports = Vec::with_capacity(plan.k());
    for r in per_fold {
        let (rows, vals, rep) = r?;
        for (i, v) in rows.into_iter().zip(vals) {
            phi_all[i] = v;
        }
        reports.push(rep);
    }
    let mut res = summarize(data, policy, s_ind, &phi_all, xi)?;
    res.folds = reports;
    Ok(res)
}

/// DR estimate with fixed bridges evaluated on every row (no sample splitting).
pub fn dr_plugin(
    data: &Dataset,
    policy: &Policy,
    s_ind: &[bool],
    h: &dyn BridgeFunction,
    g: &dyn BridgeFunction,
) -> Result<DRResult> {
    check_inputs(data, s_ind)?;
    let rows = data.complete_rows();
    let vals = phi_rows(data, &rows, policy, s_ind, h, g)?;
    let mut phi_all = vec![0.0; data.n()];
    for (i, v) in rows.into_iter().zip(vals) {
        phi_all[i] = v;
    }
    summarize(data, policy, s_ind, &phi_all, DEFAULT_XI)
}

fn target_denominator(data: &Dataset, s_ind: &[bool]) -> Result<f64> {
    let den: f64 = (0..data.n())
        .filter(|&i| data.observed()[i] && s_ind[i])
        .map(|i| data.weights()[i])
        .sum();
    if !(den > 0.0) {
        return Err(Error::ZeroDenominator("sum of Delta S I_S"));
    }
    Ok(den)
}

/// Weighted mean of h(q(A),L,W) over the target population.
pub fn or_estimate(data: &Dataset, h: &dyn BridgeFunction, policy: &Policy, s_ind: &[bool]) -> Result<f64> {
    check_inputs(data, s_ind)?;
    let den = target_denominator(data, s_ind)?;
    let rows: Vec<usize> = (0..data.n()).filter(|&i| s_ind[i]).collect();
    let qa: Vec<f64> = rows
        .iter()
        .map(|&i| policy.shifted(data.a()[i]).ok_or(Error::InvalidArgument("row in S outside policy domain".into())))
        .collect::<Result<_>>()?;
    let hv = h.eval_rows(data, &rows, &qa)?;
    Ok(rows.iter().zip(hv).map(|(&i, v)| data.weights()[i] * v).sum::<f64>() / den)
}

/// Weighted sum of Y g(A,L,Z) over complete cases, divided by the target
/// population size.
pub fn dqw_estimate(data: &Dataset, g: &dyn BridgeFunction, s_ind: &[bool]) -> Result<f64> {
    check_inputs(data, s_ind)?;
    let den = target_denominator(data, s_ind)?;
    let rows = data.complete_rows();
    let a: Vec<f64> = rows.iter().map(|&i| data.a()[i]).collect();
    let gv = g.eval_rows(data, &rows, &a)?;
    Ok(rows.iter().zip(gv).map(|(&i, v)| data.weights()[i] * data.y()[i] * v).sum::<f64>() / den)
}
