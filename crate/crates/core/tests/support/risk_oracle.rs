//! Validation risks recomputed from the adversarial objectives: each
//! objective is a concave quadratic in the adversary's coefficients, recovered
//! by polarization and maximized through its first-order condition.

use nalgebra::{DMatrix, DVector};

use super::quadratic::{polarize, quad_max};
use pmtp_core::{Dataset, HyperGrid, Policy, TaperedShiftPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn gauss(x: &[f64], y: &[f64], bw: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * bw)).exp()
}

fn plain_median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

pub fn median_distance(pts: &[Vec<f64>]) -> f64 {
    let mut d = Vec::new();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d.push(pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
        }
    }
    plain_median(d)
}

pub struct RiskInstance {
    pub data: Dataset,
    pub policy: Policy,
    pub s: Vec<bool>,
}

pub fn risk_instance(seed: u64, n: usize, weight: Option<f64>, missing: usize, shift: bool) -> RiskInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<Option<f64>> =
        (0..n).map(|i| if i < missing { None } else { Some(rng.gen_range(-1.9..1.9)) }).collect();
    let col = |rng: &mut ChaCha8Rng| DMatrix::from_fn(n, 1, |_, _| rng.gen_range(-1.5..1.5));
    let (l, z, w) = (col(&mut rng), col(&mut rng), col(&mut rng));
    let y: Vec<f64> = (0..n).map(|_| (rng.gen::<f64>() < 0.4) as u8 as f64).collect();
    let mut data = Dataset::new(y, a, l, z, w).unwrap();
    if let Some(wt) = weight {
        data = data.with_weights(vec![wt; n]).unwrap();
    }
    let policy: Policy = if shift {
        TaperedShiftPolicy::shift(0.5, -2.0, 2.0).unwrap().into()
    } else {
        TaperedShiftPolicy::new(0.4, 1.0, 0, -2.0, 2.0).unwrap().into()
    };
    let s = data.target_indicator(&policy);
    RiskInstance { data, policy, s }
}

/// Objective value of the adversary f at the validation rows, written from
/// the definitions and maximized over the span of kernel sections at the
/// usable rows.
pub fn oracle_risks(inst: &RiskInstance, grid: &HyperGrid, h: &dyn Fn(usize, f64) -> f64, g: &dyn Fn(usize, f64) -> f64) -> (f64, f64) {
    let d = &inst.data;
    let n = d.n() as f64;
    let lambda = grid.theta * n.ln() / n;
    let weighted = !d.weights().iter().all(|&v| v == 1.0) || d.observed().iter().any(|&o| !o);
    let rows: Vec<usize> = (0..d.n())
        .filter(|&i| d.observed()[i] && (inst.s[i] || inst.policy.in_image(d.a()[i])))
        .collect();
    let m = rows.len();
    let omega: Vec<f64> = rows.iter().map(|&i| if weighted { d.weights()[i] } else { 1.0 }).collect();

    // adversary of h lives on (a, l, z)
    let xz: Vec<Vec<f64>> = rows.iter().map(|&i| vec![d.a()[i], d.l()[(i, 0)], d.z()[(i, 0)]]).collect();
    let bz = grid.bw_risk_scale * median_distance(&xz);
    let kz = DMatrix::from_fn(m, m, |i, j| gauss(&xz[i], &xz[j], bz));
    let resid: Vec<f64> = rows.iter().map(|&i| d.y()[i] - h(i, d.a()[i])).collect();
    let obj_h = |alpha: &DVector<f64>| {
        let f = &kz * alpha;
        let mut v = 0.0;
        for k in 0..m {
            v += omega[k] * (f[k] * resid[k] - f[k] * f[k]);
        }
        v / n - lambda * alpha.dot(&(&kz * alpha))
    };
    let risk_h = quad_max(&polarize(m, &obj_h));

    // adversary of g lives on (a, l, w) and is also evaluated at q(a)
    let xw: Vec<Vec<f64>> = rows.iter().map(|&i| vec![d.a()[i], d.l()[(i, 0)], d.w()[(i, 0)]]).collect();
    let bw = grid.bw_risk_scale * median_distance(&xw);
    let kw = DMatrix::from_fn(m, m, |i, j| gauss(&xw[i], &xw[j], bw));
    let f_at = |alpha: &DVector<f64>, x: &[f64]| (0..m).map(|j| alpha[j] * gauss(x, &xw[j], bw)).sum::<f64>();
    let obj_g = |alpha: &DVector<f64>| {
        let mut v = 0.0;
        for (k, &i) in rows.iter().enumerate() {
            let a = d.a()[i];
            let fx = f_at(alpha, &xw[k]);
            if inst.s[i] {
                let q = inst.policy.apply(a).unwrap();
                v += omega[k] * f_at(alpha, &[q, d.l()[(i, 0)], d.w()[(i, 0)]]);
            }
            if inst.policy.in_image(a) {
                v -= omega[k] * (fx * g(i, a) + fx * fx);
            }
        }
        v / n - lambda * alpha.dot(&(&kw * alpha))
    };
    let risk_g = quad_max(&polarize(m, &obj_g));
    (risk_h, risk_g)
}
