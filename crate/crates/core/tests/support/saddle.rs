//! Min-max objectives evaluated literally as empirical sums; the inner
//! (concave) and outer (convex) quadratics are recovered by polarization and
//! solved through their first-order systems. Nothing here uses the
//! closed-form matrices of the library.

use nalgebra::{DMatrix, DVector};
use pmtp_core::bridge::{fit_g, fit_g_weighted, fit_h, fit_h_weighted};
use pmtp_core::{BridgeFitConfig, Dataset, GaussianKernel, Policy, TaperedShiftPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::quadratic::{polarize, stationary};

pub fn k(x: &[f64], y: &[f64], bw: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * bw)).exp()
}

pub struct Instance {
    pub data: Dataset,
    pub policy: Policy,
    pub cfg: BridgeFitConfig,
    pub weighted: bool,
}

pub struct Rows {
    pub xh: Vec<Vec<f64>>,
    pub xg: Vec<Vec<f64>>,
    pub xh_shift: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub d: Vec<f64>,
    pub r: Vec<f64>,
    pub n_total: f64,
}

pub fn rows(inst: &Instance) -> Rows {
    let data = &inst.data;
    let s_ind = data.target_indicator(&inst.policy);
    let mut out = Rows {
        xh: vec![],
        xg: vec![],
        xh_shift: vec![],
        y: vec![],
        s: vec![],
        d: vec![],
        r: vec![],
        n_total: data.n() as f64,
    };
    for i in 0..data.n() {
        if !data.observed()[i] {
            continue;
        }
        let a = data.a()[i];
        let (l, z, w) = (data.l()[(i, 0)], data.z()[(i, 0)], data.w()[(i, 0)]);
        let qa = inst.policy.shifted(a).unwrap_or(a);
        out.xh.push(vec![a, l, w]);
        out.xg.push(vec![a, l, z]);
        out.xh_shift.push(vec![qa, l, w]);
        out.y.push(data.y()[i]);
        out.s.push(if inst.weighted { data.weights()[i] } else { 1.0 });
        out.d.push(if s_ind[i] { 1.0 } else { 0.0 });
        out.r.push(if inst.policy.in_image(a) { 1.0 } else { 0.0 });
    }
    out
}

pub fn gram(x: &[Vec<f64>], y: &[Vec<f64>], bw: f64) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), y.len(), |i, j| k(&x[i], &y[j], bw))
}

/// Profiled outcome objective V(gamma) = max_alpha Phi(gamma, alpha).
pub fn outcome_value(inst: &Instance, r: &Rows) -> impl Fn(&DVector<f64>) -> f64 {
    let m = r.y.len();
    let n = r.n_total;
    let kh = gram(&r.xh, &r.xh, inst.cfg.kernel_outer.bandwidth());
    let kg = gram(&r.xg, &r.xg, inst.cfg.kernel_inner.bandwidth());
    let (lo, li) = (inst.cfg.lambda_outer, inst.cfg.lambda_inner);
    let (y, s) = (r.y.clone(), r.s.clone());
    let phi = move |gamma: &DVector<f64>, alpha: &DVector<f64>| -> f64 {
        let h = &kh * gamma;
        let g = &kg * alpha;
        let mut e = 0.0;
        for i in 0..m {
            e += s[i] * (g[i] * (y[i] - h[i]) - g[i] * g[i]);
        }
        e / n - li * alpha.dot(&(&kg * alpha)) + lo * gamma.dot(&(&kh * gamma))
    };
    move |gamma: &DVector<f64>| {
        let inner = polarize(m, &|alpha| phi(gamma, alpha));
        phi(gamma, &stationary(&inner))
    }
}

pub fn treatment_value(inst: &Instance, r: &Rows) -> impl Fn(&DVector<f64>) -> f64 {
    let m = r.y.len();
    let n = r.n_total;
    let kh = gram(&r.xh, &r.xh, inst.cfg.kernel_inner.bandwidth());
    let kh_shift = gram(&r.xh_shift, &r.xh, inst.cfg.kernel_inner.bandwidth());
    let kg = gram(&r.xg, &r.xg, inst.cfg.kernel_outer.bandwidth());
    let (lo, li) = (inst.cfg.lambda_outer, inst.cfg.lambda_inner);
    let (s, d, rr) = (r.s.clone(), r.d.clone(), r.r.clone());
    let phi = move |theta: &DVector<f64>, alpha: &DVector<f64>| -> f64 {
        let g = &kg * theta;
        let h = &kh * alpha;
        let hq = &kh_shift * alpha;
        let mut e = 0.0;
        for i in 0..m {
            e += s[i] * (hq[i] * d[i] - rr[i] * h[i] * g[i] - rr[i] * h[i] * h[i]);
        }
        e / n - li * alpha.dot(&(&kh * alpha)) + lo * theta.dot(&(&kg * theta))
    };
    move |theta: &DVector<f64>| {
        let inner = polarize(m, &|alpha| phi(theta, alpha));
        phi(theta, &stationary(&inner))
    }
}

pub fn instance(seed: u64, n: usize, weighted: bool, restricted: bool) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = |lo: f64, hi: f64| rng.gen_range(lo..hi);
    let mut y = vec![];
    let mut a = vec![];
    let (mut l, mut z, mut w, mut wt) = (vec![], vec![], vec![], vec![]);
    for i in 0..n {
        let av = u(-1.95, 1.95);
        y.push(if u(0.0, 1.0) < 0.4 { 1.0 } else { 0.0 });
        // keep at least two complete rows
        let missing = weighted && i >= 2 && u(0.0, 1.0) < 0.3;
        a.push(if missing { None } else { Some(av) });
        l.push(u(-1.0, 1.0));
        z.push(u(-1.0, 1.0));
        w.push(u(-1.0, 1.0));
        wt.push(if weighted { u(1.0, 3.0) } else { 1.0 });
    }
    let col = |v: Vec<f64>| DMatrix::from_vec(v.len(), 1, v);
    let data = Dataset::new(y, a, col(l), col(z), col(w)).unwrap().with_weights(wt).unwrap();
    let policy: Policy = if restricted {
        TaperedShiftPolicy::shift(0.4, -2.0, 2.0).unwrap().into()
    } else {
        TaperedShiftPolicy::new(0.4, 1.0, 0, -2.0, 2.0).unwrap().into()
    };
    let kern = |bw| GaussianKernel::new(bw, 3).unwrap();
    let mut cfg = BridgeFitConfig::new(u(0.01, 0.1), u(0.05, 0.3), kern(u(0.1, 0.3)), kern(u(0.1, 0.3))).unwrap();
    cfg.ridge_jitter = 0.0;
    Instance { data, policy, cfg, weighted }
}

/// Max-norm coefficient error of the closed-form fits against the oracle on
/// one random instance; instances cycle through n = 5, 10, 20, 25.
pub fn saddle_errors(t: u64) -> (usize, f64, f64) {
    let n = [5, 10, 20, 25][t as usize % 4];
    let inst = instance(100 + t, n, t % 2 == 1, t % 5 == 4);
    let r = rows(&inst);
    let m = r.y.len();
    let s_ind = inst.data.target_indicator(&inst.policy);
    let gamma_oracle = stationary(&polarize(m, &outcome_value(&inst, &r)));
    let theta_oracle = stationary(&polarize(m, &treatment_value(&inst, &r)));
    let (h, g) = if inst.weighted {
        (
            fit_h_weighted(&inst.data, &inst.cfg, &inst.policy, &s_ind).unwrap(),
            fit_g_weighted(&inst.data, &inst.cfg, &inst.policy, &s_ind).unwrap(),
        )
    } else {
        (
            fit_h(&inst.data, &inst.cfg, &inst.policy, &s_ind).unwrap(),
            fit_g(&inst.data, &inst.cfg, &inst.policy, &s_ind).unwrap(),
        )
    };
    (n, (h.coefficients() - &gamma_oracle).amax(), (g.coefficients() - &theta_oracle).amax())
}
