//! Parametric bridge models fitted by estimating equations, the plug-in
//! OR / DQW / DR estimators with stacked sandwich standard errors, and the
//! closed-form bridges of the simulation model.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bridge::BridgeFunction;
use crate::crossfit::DRResult;
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::policy::{Policy, TaperedShiftPolicy};
use crate::simulation::{DGPConfig, TN_HALF_WIDTH};
use crate::stats::{expit, norm_cdf, truncated_std_normal_variance};

/// E[W~^2] for a standard normal truncated at +-3, as printed (4 decimals).
pub const KAPPA_PRINTED: f64 = 0.9733;

/// The same constant computed exactly.
pub fn kappa_exact() -> f64 {
    truncated_std_normal_variance(TN_HALF_WIDTH)
}

pub const ROOT_TOL: f64 = 1e-8;
const ROOT_TARGET: f64 = 1e-11;
const MAX_ITER: usize = 200;
const RESTARTS: usize = 20;
const RESTART_SEED: u64 = 0x7061_7261_6d73;

/// One observation on the scale the models are written in.
#[derive(Debug, Clone, Copy)]
pub struct Obs {
    pub y: f64,
    pub a: f64,
    pub l: f64,
    pub z: f64,
    pub w: f64,
    /// q(A) for rows in S.
    pub qa: Option<f64>,
    pub in_s: bool,
    /// Delta_i S_i: zero for rows without an exposure.
    pub weight: f64,
}

/// Rows of a dataset with one column in each of L, Z and W.
pub fn observations(data: &Dataset, policy: &Policy, s_ind: &[bool]) -> Result<Vec<Obs>> {
    if data.l().ncols() != 1 || data.z().ncols() != 1 || data.w().ncols() != 1 {
        return Err(Error::InvalidArgument(
            "parametric bridges need exactly one column each of L, Z and W".into(),
        ));
    }
    if s_ind.len() != data.n() {
        return Err(Error::Dimension { expected: data.n(), found: s_ind.len() });
    }
    (0..data.n())
        .map(|i| {
            let obs = data.observed()[i];
            let in_s = s_ind[i] && obs;
            let qa = if in_s {
                Some(policy.shifted(data.a()[i]).ok_or_else(|| {
                    Error::InvalidArgument(format!("row {i} in S lies outside the policy domain"))
                })?)
            } else {
                None
            };
            Ok(Obs {
                y: data.y()[i],
                a: if obs { data.a()[i] } else { 0.0 },
                l: data.raw_l(i, 0),
                z: data.raw_z(i, 0),
                w: data.raw_w(i, 0),
                qa,
                in_s,
                weight: if obs { data.weights()[i] } else { 0.0 },
            })
        })
        .collect()
}

/// A bridge model with its estimating function (before the Delta S weight).
pub trait NuisanceModel: Sync {
    fn n_params(&self) -> usize;
    fn value(&self, o: &Obs, a: f64, theta: &[f64]) -> f64;
    fn moments(&self, o: &Obs, theta: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeSpec {
    Correct,
    /// Drops the a^2 term and its instrument.
    NoQuadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TreatmentSpec {
    Correct,
    /// eta3 enters the exponent as a constant instead of eta3 V(a).
    ConstantTaper,
}

/// h(a,l,w; phi) = (1 + kappa phi3^2 / 2) expit(phi0 + phi1 a + phi2 l + phi3 w + phi4 a^2).
#[derive(Debug, Clone, Copy)]
pub struct OutcomeModel {
    pub spec: OutcomeSpec,
    pub kappa: f64,
}

impl OutcomeModel {
    pub fn eval(&self, a: f64, l: f64, w: f64, phi: &[f64]) -> f64 {
        let quad = if self.spec == OutcomeSpec::Correct { phi[4] * a * a } else { 0.0 };
        (1.0 + 0.5 * self.kappa * phi[3] * phi[3]) * expit(phi[0] + phi[1] * a + phi[2] * l + phi[3] * w + quad)
    }
}

impl NuisanceModel for OutcomeModel {
    fn n_params(&self) -> usize {
        match self.spec {
            OutcomeSpec::Correct => 5,
            OutcomeSpec::NoQuadratic => 4,
        }
    }
    fn value(&self, o: &Obs, a: f64, theta: &[f64]) -> f64 {
        self.eval(a, o.l, o.w, theta)
    }
    fn moments(&self, o: &Obs, theta: &[f64], out: &mut [f64]) {
        let r = o.y - self.eval(o.a, o.l, o.w, theta);
        out[0] = r;
        out[1] = r * o.a;
        out[2] = r * o.l;
        out[3] = r * o.z;
        if self.spec == OutcomeSpec::Correct {
            out[4] = r * o.a * o.a;
        }
    }
}

/// g(a,l,z; eta) = rho(a; eta) exp[(eta0 a + eta1 l + eta2 z + eta3 V(a)) V(a)].
#[derive(Debug, Clone, Copy)]
pub struct TreatmentModel {
    pub spec: TreatmentSpec,
    pub policy: TaperedShiftPolicy,
}

impl TreatmentModel {
    /// d q^{-1}/da on the image, zero elsewhere.
    pub fn rho0(&self, a: f64) -> f64 {
        let p = &self.policy;
        if !p.in_image(a) {
            return 0.0;
        }
        let (_, d) = p.support();
        let eps = p.epsilon();
        if eps > 0.0 && d - eps < a {
            1.0 + p.delta() / eps
        } else {
            1.0
        }
    }

    pub fn rho(&self, a: f64, eta2: f64) -> f64 {
        let r0 = self.rho0(a);
        if r0 == 0.0 {
            return 0.0;
        }
        let v = self.policy.taper_weight(a);
        let c = TN_HALF_WIDTH;
        r0 * (norm_cdf(c) - norm_cdf(-c)) / (norm_cdf(c - eta2 * v) - norm_cdf(-c - eta2 * v))
    }

    pub fn eval(&self, a: f64, l: f64, z: f64, eta: &[f64]) -> f64 {
        let rho = self.rho(a, eta[2]);
        if rho == 0.0 {
            return 0.0;
        }
        let v = self.policy.taper_weight(a);
        let last = match self.spec {
            TreatmentSpec::Correct => eta[3] * v,
            TreatmentSpec::ConstantTaper => eta[3],
        };
        rho * ((eta[0] * a + eta[1] * l + eta[2] * z + last) * v).exp()
    }
}

impl NuisanceModel for TreatmentModel {
    fn n_params(&self) -> usize {
        4
    }
    fn value(&self, o: &Obs, a: f64, theta: &[f64]) -> f64 {
        self.eval(a, o.l, o.z, theta)
    }
    fn moments(&self, o: &Obs, theta: &[f64], out: &mut [f64]) {
        let g = self.eval(o.a, o.l, o.z, theta);
        let (is, q) = match o.qa {
            Some(q) if o.in_s => (1.0, q),
            _ => (0.0, 0.0),
        };
        out[0] = is - g;
        out[1] = is * q - g * o.a;
        out[2] = is * o.l - g * o.l;
        out[3] = is * o.w - g * o.w;
    }
}

/// A parameter-free constant bridge.
#[derive(Debug, Clone, Copy)]
pub struct FixedValue(pub f64);

impl NuisanceModel for FixedValue {
    fn n_params(&self) -> usize {
        0
    }
    fn value(&self, _: &Obs, _: f64, _: &[f64]) -> f64 {
        self.0
    }
    fn moments(&self, _: &Obs, _: &[f64], _: &mut [f64]) {}
}

fn mean_moments(model: &dyn NuisanceModel, obs: &[Obs], theta: &[f64]) -> Option<Vec<f64>> {
    let p = model.n_params();
    let mut acc = vec![0.0; p];
    let mut buf = vec![0.0; p];
    for o in obs {
        if o.weight == 0.0 {
            continue;
        }
        model.moments(o, theta, &mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += o.weight * b;
        }
    }
    let n = obs.len() as f64;
    for a in acc.iter_mut() {
        *a /= n;
    }
    acc.iter().all(|v| v.is_finite()).then_some(acc)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Damped Newton on F(theta) = 0 with a forward-difference Jacobian,
/// started at zero and then at random points in [-2, 2]^p.
pub fn solve_estimating_equations(
    f: &dyn Fn(&[f64]) -> Option<Vec<f64>>,
    p: usize,
) -> Result<(Vec<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for attempt in 0..=RESTARTS {
        let start: Vec<f64> =
            if attempt == 0 { vec![0.0; p] } else { (0..p).map(|_| rng.gen_range(-2.0..=2.0)).collect() };
        if let Some((theta, res)) = newton(f, start) {
            if best.as_ref().map_or(true, |b| res < b.1) {
                best = Some((theta, res));
            }
            if res <= ROOT_TOL {
                break;
            }
        }
    }
    match best {
        Some((theta, res)) if res <= ROOT_TOL => Ok((theta, res)),
        Some((_, res)) => Err(Error::NoConvergence { residual: res }),
        None => Err(Error::NoConvergence { residual: f64::INFINITY }),
    }
}

fn newton(f: &dyn Fn(&[f64]) -> Option<Vec<f64>>, mut theta: Vec<f64>) -> Option<(Vec<f64>, f64)> {
    let p = theta.len();
    let mut fx = f(&theta)?;
    let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    for _ in 0..MAX_ITER {
        if max_abs(&fx) <= ROOT_TARGET {
            break;
        }
        let mut jac = DMatrix::zeros(p, p);
        for j in 0..p {
            let h = 1e-6 * (1.0 + theta[j].abs());
            let mut t = theta.clone();
            t[j] += h;
            let fj = f(&t)?;
            for i in 0..p {
                jac[(i, j)] = (fj[i] - fx[i]) / h;
            }
        }
        let rhs = DVector::from_iterator(p, fx.iter().map(|v| -v));
        let step = jac.lu().solve(&rhs)?;
        if step.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let f0 = norm2(&fx);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            if let Some(fc) = f(&cand) {
                if norm2(&fc) < (1.0 - 1e-4 * t) * f0 {
                    theta = cand;
                    fx = fc;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let res = max_abs(&fx);
    res.is_finite().then_some((theta, res))
}

/// Fitted parameters with the attained max-abs moment residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fitted {
    pub params: Vec<f64>,
    pub residual: f64,
}

pub fn fit_model(model: &dyn NuisanceModel, obs: &[Obs]) -> Result<Fitted> {
    if obs.iter().filter(|o| o.weight > 0.0).count() < model.n_params() {
        return Err(Error::InvalidArgument("fewer complete rows than parameters".into()));
    }
    let f = |t: &[f64]| mean_moments(model, obs, t);
    let (params, residual) = solve_estimating_equations(&f, model.n_params())?;
    Ok(Fitted { params, residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeBridgeParams {
    pub phi: Vec<f64>,
    pub spec: OutcomeSpec,
    pub kappa_const: f64,
    pub residual: f64,
}

impl OutcomeBridgeParams {
    pub fn model(&self) -> OutcomeModel {
        OutcomeModel { spec: self.spec, kappa: self.kappa_const }
    }
    pub fn eval(&self, a: f64, l: f64, w: f64) -> f64 {
        self.model().eval(a, l, w, &self.phi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentBridgeParams {
    pub eta: Vec<f64>,
    pub spec: TreatmentSpec,
    pub policy: TaperedShiftPolicy,
    pub residual: f64,
}

impl TreatmentBridgeParams {
    pub fn model(&self) -> TreatmentModel {
        TreatmentModel { spec: self.spec, policy: self.policy }
    }
    pub fn eval(&self, a: f64, l: f64, z: f64) -> f64 {
        self.model().eval(a, l, z, &self.eta)
    }
}

/// Solve E_n[Delta S (Y - h)(1, A, L, Z, A^2)] = 0.
pub fn fit_h_param(data: &Dataset, spec: OutcomeSpec, kappa_const: f64) -> Result<OutcomeBridgeParams> {
    let obs = observations(data, &Policy::Identity, &vec![false; data.n()])?;
    let model = OutcomeModel { spec, kappa: kappa_const };
    let fit = fit_model(&model, &obs)?;
    Ok(OutcomeBridgeParams { phi: fit.params, spec, kappa_const, residual: fit.residual })
}

/// Solve E_n[Delta S {I_S (1, q(A), L, W) - g (1, A, L, W)}] = 0.
pub fn fit_g_param(
    data: &Dataset,
    policy: &TaperedShiftPolicy,
    s_ind: &[bool],
    spec: TreatmentSpec,
) -> Result<TreatmentBridgeParams> {
    let pol = Policy::TaperedShift(*policy);
    let obs = observations(data, &pol, s_ind)?;
    let model = TreatmentModel { spec, policy: *policy };
    let fit = fit_model(&model, &obs)?;
    Ok(TreatmentBridgeParams { eta: fit.params, spec, policy: *policy, residual: fit.residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorKind {
    Or,
    Dqw,
    Dr,
}

/// A model together with the parameters to evaluate it at.
pub struct Nuisance<'a> {
    pub model: &'a dyn NuisanceModel,
    pub params: &'a [f64],
}

/// Stacked estimating equations: nuisance moments followed by the psi moment.
struct Stack<'a> {
    kind: EstimatorKind,
    h: Option<&'a dyn NuisanceModel>,
    g: Option<&'a dyn NuisanceModel>,
    ph: usize,
    pg: usize,
    /// Position of each stacked equation; a permutation of 0..dim.
    order: Vec<usize>,
}

impl<'a> Stack<'a> {
    fn dim(&self) -> usize {
        self.ph + self.pg + 1
    }

    fn psi_term(&self, o: &Obs, theta: &[f64]) -> (f64, f64) {
        let (th, rest) = theta.split_at(self.ph);
        let tg = &rest[..self.pg];
        let is = if o.in_s { 1.0 } else { 0.0 };
        let or_part = match (self.kind, self.h) {
            (EstimatorKind::Or | EstimatorKind::Dr, Some(h)) => o.qa.map_or(0.0, |q| h.value(o, q, th)) * is,
            _ => 0.0,
        };
        let w_part = match (self.kind, self.g) {
            (EstimatorKind::Dqw, Some(g)) => g.value(o, o.a, tg) * o.y,
            (EstimatorKind::Dr, Some(g)) => {
                let h_obs = self.h.map_or(0.0, |h| h.value(o, o.a, th));
                g.value(o, o.a, tg) * (o.y - h_obs)
            }
            _ => 0.0,
        };
        (or_part + w_part, is)
    }

    /// Delta S m_i(theta), in stacked order.
    fn row(&self, o: &Obs, theta: &[f64], out: &mut [f64]) {
        let mut raw = vec![0.0; self.dim()];
        if o.weight != 0.0 {
            let (th, rest) = theta.split_at(self.ph);
            let (tg, psi) = rest.split_at(self.pg);
            if let Some(h) = self.h {
                h.moments(o, th, &mut raw[..self.ph]);
            }
            if let Some(g) = self.g {
                g.moments(o, tg, &mut raw[self.ph..self.ph + self.pg]);
            }
            let (v, is) = self.psi_term(o, theta);
            raw[self.dim() - 1] = v - psi[0] * is;
            for r in raw.iter_mut() {
                *r *= o.weight;
            }
        }
        for (k, &pos) in self.order.iter().enumerate() {
            out[pos] = raw[k];
        }
    }

    fn mean(&self, obs: &[Obs], theta: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut acc = vec![0.0; d];
        let mut buf = vec![0.0; d];
        for o in obs {
            self.row(o, theta, &mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b;
            }
        }
        acc.iter().map(|v| v / obs.len() as f64).collect()
    }
}

fn check_needed(kind: EstimatorKind, h: &Option<Nuisance>, g: &Option<Nuisance>) -> Result<()> {
    let need_h = matches!(kind, EstimatorKind::Or | EstimatorKind::Dr);
    let need_g = matches!(kind, EstimatorKind::Dqw | EstimatorKind::Dr);
    if need_h && h.is_none() {
        return Err(Error::InvalidArgument("outcome bridge parameters required".into()));
    }
    if need_g && g.is_none() {
        return Err(Error::InvalidArgument("treatment bridge parameters required".into()));
    }
    for n in [h, g].into_iter().flatten() {
        if n.params.len() != n.model.n_params() {
            return Err(Error::Dimension { expected: n.model.n_params(), found: n.params.len() });
        }
    }
    Ok(())
}

/// Plug-in estimate and stacked-sandwich standard error for arbitrary
/// nuisance models.
pub fn psi_parametric_models(
    obs: &[Obs],
    kind: EstimatorKind,
    h: Option<Nuisance>,
    g: Option<Nuisance>,
) -> Result<DRResult> {
    psi_stacked(obs, kind, h, g, None)
}

fn psi_stacked(
    obs: &[Obs],
    kind: EstimatorKind,
    h: Option<Nuisance>,
    g: Option<Nuisance>,
    order: Option<Vec<usize>>,
) -> Result<DRResult> {
    check_needed(kind, &h, &g)?;
    let h = if matches!(kind, EstimatorKind::Dqw) { None } else { h };
    let g = if matches!(kind, EstimatorKind::Or) { None } else { g };
    let ph = h.as_ref().map_or(0, |x| x.params.len());
    let pg = g.as_ref().map_or(0, |x| x.params.len());
    let dim = ph + pg + 1;
    let order = order.unwrap_or_else(|| (0..dim).collect());
    let stack = Stack { kind, h: h.as_ref().map(|x| x.model), g: g.as_ref().map(|x| x.model), ph, pg, order };

    let n = obs.len();
    let mut theta: Vec<f64> = Vec::with_capacity(dim);
    if let Some(x) = &h {
        theta.extend_from_slice(x.params);
    }
    if let Some(x) = &g {
        theta.extend_from_slice(x.params);
    }
    theta.push(0.0);
    let (mut num, mut den) = (0.0, 0.0);
    for o in obs.iter().filter(|o| o.weight != 0.0) {
        let (v, is) = stack.psi_term(o, &theta);
        num += o.weight * v;
        den += o.weight * is;
    }
    if !(den > 0.0) {
        return Err(Error::ZeroDenominator("sum of Delta S I_S"));
    }
    let psi = num / den;
    theta[dim - 1] = psi;

    // A = d/dtheta of the mean stacked moments, central differences
    let mut a = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let step = 1e-5 * (1.0 + theta[j].abs());
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[j] += step;
        tm[j] -= step;
        let (fp, fm) = (stack.mean(obs, &tp), stack.mean(obs, &tm));
        for i in 0..dim {
            a[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    let lu = a.lu();
    if !lu.is_invertible() {
        return Err(Error::Singular { context: "sandwich Jacobian".into(), condition: f64::INFINITY });
    }
    let mut m = DMatrix::zeros(dim, n);
    let mut buf = vec![0.0; dim];
    for (i, o) in obs.iter().enumerate() {
        stack.row(o, &theta, &mut buf);
        m.column_mut(i).copy_from_slice(&buf);
    }
    let sol = lu
        .solve(&m)
        .ok_or_else(|| Error::Singular { context: "sandwich Jacobian".into(), condition: f64::INFINITY })?;
    let influence: Vec<f64> = (0..n).map(|i| -sol[(dim - 1, i)]).collect();
    let tau_sq = influence.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let se = (tau_sq / n as f64).sqrt();
    if !psi.is_finite() || !se.is_finite() {
        return Err(Error::NonFinite("parametric estimate".into()));
    }
    Ok(DRResult {
        psi_hat: psi,
        se,
        ci_lower: psi - 1.96 * se,
        ci_upper: psi + 1.96 * se,
        tau_sq,
        n,
        n_effective: den,
        image_proportion: f64::NAN,
        influence: Some(influence),
        folds: Vec::new(),
    })
}

/// OR, DQW or DR estimate from fitted parametric bridges.
pub fn psi_parametric(
    data: &Dataset,
    kind: EstimatorKind,
    h: Option<&OutcomeBridgeParams>,
    g: Option<&TreatmentBridgeParams>,
    policy: &Policy,
    s_ind: &[bool],
) -> Result<DRResult> {
    let obs = observations(data, policy, s_ind)?;
    let hm = h.map(|p| p.model());
    let gm = g.map(|p| p.model());
    let hn = h.zip(hm.as_ref()).map(|(p, m)| Nuisance { model: m, params: &p.phi });
    let gn = g.zip(gm.as_ref()).map(|(p, m)| Nuisance { model: m, params: &p.eta });
    let mut r = psi_parametric_models(&obs, kind, hn, gn)?;
    r.image_proportion = image_share(data, policy);
    Ok(r)
}

fn image_share(data: &Dataset, policy: &Policy) -> f64 {
    let (mut wi, mut wo) = (0.0, 0.0);
    for i in data.complete_rows() {
        wo += data.weights()[i];
        if policy.in_image(data.a()[i]) {
            wi += data.weights()[i];
        }
    }
    if wo > 0.0 {
        wi / wo
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Closed-form bridges of the simulation model

/// Approximate outcome bridge parameters; accurate when b12 and b10/b5 are small.
pub fn analytic_h_params(cfg: &DGPConfig, kappa: f64) -> OutcomeBridgeParams {
    let b = |k| cfg.b(k);
    let phi3 = b(12) + b(10) / b(5);
    let phi0 = cfg.mu + (1.0 + 0.5 * kappa * b(12) * b(12)).ln() - (1.0 + kappa * phi3 * phi3).ln();
    OutcomeBridgeParams {
        phi: vec![phi0, b(11), b(9) - b(4) * b(10) / b(5), phi3, cfg.gamma_coef],
        spec: OutcomeSpec::Correct,
        kappa_const: kappa,
        residual: f64::NAN,
    }
}

/// Treatment bridge parameters: exact when b8 = 0, a small-b8 approximation
/// otherwise.
pub fn analytic_g_params(cfg: &DGPConfig, policy: &TaperedShiftPolicy) -> TreatmentBridgeParams {
    let b = |k| cfg.b(k);
    let dl = policy.delta();
    let den = b(3) - b(7) * b(8);
    let eta = vec![
        dl * b(3) / den,
        -dl * (b(3) * b(6) - b(2) * b(7)) / den,
        -dl * (b(7) + b(3) * b(8)) / den,
        -dl * dl * (b(3) * b(3) + b(7) * b(7)) / (2.0 * den * den),
    ];
    TreatmentBridgeParams { eta, spec: TreatmentSpec::Correct, policy: *policy, residual: f64::NAN }
}

pub fn analytic_h_oracle(cfg: &DGPConfig) -> impl Fn(f64, f64, f64) -> f64 + Send + Sync {
    let p = analytic_h_params(cfg, KAPPA_PRINTED);
    move |a, l, w| p.eval(a, l, w)
}

pub fn analytic_g_oracle(cfg: &DGPConfig, policy: &TaperedShiftPolicy) -> impl Fn(f64, f64, f64) -> f64 + Send + Sync {
    let p = analytic_g_params(cfg, policy);
    move |a, l, z| p.eval(a, l, z)
}

/// Density-quotient target of the latent treatment bridge when b8 = 0:
/// rho0(a) p(q^{-1}(a) | l, u) / p(a | l, u).
pub fn latent_treatment_target(cfg: &DGPConfig, policy: &TaperedShiftPolicy, a: f64, l: f64, u: f64) -> f64 {
    let m = TreatmentModel { spec: TreatmentSpec::Correct, policy: *policy };
    let r0 = m.rho0(a);
    if r0 == 0.0 {
        return 0.0;
    }
    let v = policy.taper_weight(a);
    let dl = policy.delta();
    r0 * (dl * v * (a - cfg.b(6) * l - cfg.b(7) * u - 0.5 * dl * v)).exp()
}

/// Parametric bridge evaluated on dataset rows (raw covariate scale).
#[derive(Debug, Clone)]
pub enum ParamBridge {
    Outcome(OutcomeBridgeParams),
    Treatment(TreatmentBridgeParams),
}

impl BridgeFunction for ParamBridge {
    fn eval_rows(&self, data: &Dataset, rows: &[usize], a: &[f64]) -> Result<Vec<f64>> {
        Ok(rows
            .iter()
            .zip(a)
            .map(|(&i, &av)| match self {
                ParamBridge::Outcome(p) => p.eval(av, data.raw_l(i, 0), data.raw_w(i, 0)),
                ParamBridge::Treatment(p) => p.eval(av, data.raw_l(i, 0), data.raw_z(i, 0)),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::generate;

    fn taper() -> TaperedShiftPolicy {
        TaperedShiftPolicy::new(0.4, 1.0, 0, -2.0, 2.0).unwrap()
    }

    #[test]
    fn kappa_constant() {
        assert!((kappa_exact() - KAPPA_PRINTED).abs() < 5e-5);
    }

    #[test]
    fn zero_parameters() {
        let h = OutcomeModel { spec: OutcomeSpec::Correct, kappa: KAPPA_PRINTED };
        assert_eq!(h.eval(0.3, -1.0, 2.0, &[0.0; 5]), 0.5);
        let g = TreatmentModel { spec: TreatmentSpec::Correct, policy: taper() };
        assert_eq!(g.eval(0.0, 1.0, 1.0, &[0.0; 4]), 1.0);
        assert!((g.eval(1.5, 1.0, 1.0, &[0.0; 4]) - 1.4).abs() < 1e-15);
        assert_eq!(g.eval(-1.8, 1.0, 1.0, &[0.0; 4]), 0.0);
        // rho equals rho0 when eta2 = 0 and stays positive on the image
        assert_eq!(g.rho(1.2, 0.0), g.rho0(1.2));
        assert!(g.rho(1.2, -0.7) > 0.0);
    }

    #[test]
    fn analytic_eta_first_component_is_delta() {
        let g = analytic_g_params(&DGPConfig::main(2.0, -2.0), &taper());
        assert!((g.eta[0] - 0.4).abs() < 1e-15);
        assert!((g.eta[2] + 0.4 * 1.0 / 2.0).abs() < 1e-15);
        assert!((g.eta[3] + 0.08 * (1.0 + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn fits_reach_tolerance() {
        let d = generate(&DGPConfig::main(2.0, -2.0), 3000, 11, None).unwrap();
        let p: Policy = taper().into();
        let s = d.target_indicator(&p);
        for spec in [OutcomeSpec::Correct, OutcomeSpec::NoQuadratic] {
            let h = fit_h_param(&d, spec, KAPPA_PRINTED).unwrap();
            assert!(h.residual <= ROOT_TOL, "{spec:?} {}", h.residual);
        }
        for spec in [TreatmentSpec::Correct, TreatmentSpec::ConstantTaper] {
            let g = fit_g_param(&d, &taper(), &s, spec).unwrap();
            assert!(g.residual <= ROOT_TOL, "{spec:?} {}", g.residual);
        }
    }

    #[test]
    fn dr_with_unit_g_and_identity_is_mean_y() {
        let d = generate(&DGPConfig::main(1.0, -1.0), 500, 2, None).unwrap();
        let p = Policy::Identity;
        let s = d.target_indicator(&p);
        let obs = observations(&d, &p, &s).unwrap();
        let h = OutcomeModel { spec: OutcomeSpec::Correct, kappa: KAPPA_PRINTED };
        let phi = [0.1, 0.2, -0.3, 0.4, -0.1];
        let r = psi_parametric_models(
            &obs,
            EstimatorKind::Dr,
            Some(Nuisance { model: &h, params: &phi }),
            Some(Nuisance { model: &FixedValue(1.0), params: &[] }),
        )
        .unwrap();
        let ybar = d.y().iter().sum::<f64>() / 500.0;
        assert!((r.psi_hat - ybar).abs() < 1e-14);
        let c = psi_parametric_models(&obs, EstimatorKind::Or, Some(Nuisance { model: &FixedValue(0.3), params: &[] }), None)
            .unwrap();
        assert!((c.psi_hat - 0.3).abs() < 1e-15);
    }

    #[test]
    fn sandwich_ignores_moment_order() {
        let d = generate(&DGPConfig::main(1.0, -1.0), 2000, 4, None).unwrap();
        let p: Policy = taper().into();
        let s = d.target_indicator(&p);
        let h = fit_h_param(&d, OutcomeSpec::Correct, KAPPA_PRINTED).unwrap();
        let g = fit_g_param(&d, &taper(), &s, TreatmentSpec::Correct).unwrap();
        let obs = observations(&d, &p, &s).unwrap();
        let (hm, gm) = (h.model(), g.model());
        let mk = || {
            (Some(Nuisance { model: &hm, params: &h.phi }), Some(Nuisance { model: &gm, params: &g.eta }))
        };
        let (a1, b1) = mk();
        let base = psi_stacked(&obs, EstimatorKind::Dr, a1, b1, None).unwrap();
        let (a2, b2) = mk();
        let perm = vec![9, 3, 0, 7, 1, 8, 2, 6, 4, 5];
        let other = psi_stacked(&obs, EstimatorKind::Dr, a2, b2, Some(perm)).unwrap();
        assert!(((base.se - other.se) / base.se).abs() < 1e-10);
        assert_eq!(base.psi_hat, other.psi_hat);
    }
}
