//! Truncated-normal structural model, Monte Carlo ground truth and two-phase
//! sampling.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::policy::{Policy, TaperedShiftPolicy};
use crate::stats::{expit, norm_cdf, norm_quantile};

/// Half-width, in standard deviations, of the TN_c truncation.
pub const TN_HALF_WIDTH: f64 = 3.0;
const SHARD: usize = 1 << 16;

/// Draw from N(mu, sigma_sq) truncated to [lo, hi] by inverting the CDF.
/// Intervals entirely in the upper tail are reflected to keep precision.
pub fn sample_truncnorm<R: Rng + ?Sized>(mu: f64, sigma_sq: f64, lo: f64, hi: f64, rng: &mut R) -> Result<f64> {
    if !(lo < hi) || !(sigma_sq > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "truncated normal needs lo < hi and sigma_sq > 0 (lo={lo}, hi={hi}, sigma_sq={sigma_sq})"
        )));
    }
    let sd = sigma_sq.sqrt();
    let (alpha, beta) = ((lo - mu) / sd, (hi - mu) / sd);
    let u: f64 = rng.gen();
    let x = if alpha > 0.0 {
        let (pa, pb) = (norm_cdf(-beta), norm_cdf(-alpha));
        -norm_quantile(pa + u * (pb - pa))
    } else {
        let (pa, pb) = (norm_cdf(alpha), norm_cdf(beta));
        norm_quantile(pa + u * (pb - pa))
    };
    Ok((mu + sd * x).clamp(lo, hi))
}

fn tn_c<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    sample_truncnorm(mean, 1.0, mean - TN_HALF_WIDTH, mean + TN_HALF_WIDTH, rng).expect("valid TN_c bounds")
}

/// Coefficients of the structural model
///   L ~ TN_c(0,1), U ~ TN_c(b1 L,1), Z ~ TN_c(b2 L + b3 U,1),
///   W ~ TN_c(b4 L + b5 U,1), A ~ TN_[c,d](b6 L + b7 U + b8 Z,1),
///   Y ~ Bern(expit(mu + b9 L + b10 U + b11 A + b12 W + gamma A^2)).
/// `beta[k]` holds b_{k+1}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DGPConfig {
    pub beta: [f64; 12],
    pub c: f64,
    pub d: f64,
    pub mu: f64,
    pub gamma_coef: f64,
}

impl DGPConfig {
    pub fn new(beta: [f64; 12], c: f64, d: f64, mu: f64, gamma_coef: f64) -> Result<Self> {
        if !(c < d) {
            return Err(Error::InvalidArgument(format!("need c < d, got c={c}, d={d}")));
        }
        if beta.iter().chain([c, d, mu, gamma_coef].iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite structural coefficient".into()));
        }
        Ok(Self { beta, c, d, mu, gamma_coef })
    }

    /// b_k with the 1-based index used in the model description.
    pub fn b(&self, k: usize) -> f64 {
        self.beta[k - 1]
    }

    /// Main design with confounding strengths (b3, b5) = (bz, bw).
    pub fn main(bz: f64, bw: f64) -> Self {
        Self::new([0.5, 0.2, bz, 0.5, bw, 0.3, 1.0, 0.0, 0.5, -1.0, -1.5, 0.0], -2.0, 2.0, -1.0, -0.75)
            .expect("static configuration")
    }

    /// Main design with U removed from the exposure model.
    pub fn no_confounding(bz: f64, bw: f64) -> Self {
        let mut c = Self::main(bz, bw);
        c.beta[6] = 0.0;
        c
    }

    /// Z affects A and W affects Y.
    pub fn direct_effects(bz: f64, bw: f64) -> Self {
        let mut c = Self::main(bz, bw);
        c.beta[7] = 0.3;
        c.beta[11] = -0.3;
        c
    }

    pub fn outcome_prob(&self, l: f64, u: f64, a: f64, w: f64) -> f64 {
        expit(self.mu + self.b(9) * l + self.b(10) * u + self.b(11) * a + self.b(12) * w + self.gamma_coef * a * a)
    }

    fn draw_l<R: Rng>(&self, rng: &mut R) -> f64 {
        tn_c(0.0, rng)
    }
    fn draw_u<R: Rng>(&self, l: f64, rng: &mut R) -> f64 {
        tn_c(self.b(1) * l, rng)
    }
    fn draw_z<R: Rng>(&self, l: f64, u: f64, rng: &mut R) -> f64 {
        tn_c(self.b(2) * l + self.b(3) * u, rng)
    }
    fn draw_w<R: Rng>(&self, l: f64, u: f64, rng: &mut R) -> f64 {
        tn_c(self.b(4) * l + self.b(5) * u, rng)
    }
    fn draw_a<R: Rng>(&self, l: f64, u: f64, z: f64, rng: &mut R) -> f64 {
        let m = self.b(6) * l + self.b(7) * u + self.b(8) * z;
        sample_truncnorm(m, 1.0, self.c, self.d, rng).expect("c < d checked at construction")
    }
}

/// Second-phase selection of the exposure measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MissingModel {
    /// P(Delta = 1 | Y) = min(1, p0 + (1 - p0) Y): every case, a fraction p0
    /// of non-cases.
    CaseCohort { p0: f64 },
}

impl MissingModel {
    pub fn case_cohort(p0: f64) -> Result<Self> {
        if !(p0 > 0.0 && p0 <= 1.0) {
            return Err(Error::InvalidArgument(format!("p0 must lie in (0, 1], got {p0}")));
        }
        Ok(MissingModel::CaseCohort { p0 })
    }

    pub fn prob_observed(&self, y: f64) -> f64 {
        match *self {
            MissingModel::CaseCohort { p0 } => (p0 + (1.0 - p0) * y).min(1.0),
        }
    }
}

mod stream {
    pub const L: u64 = 1;
    pub const U: u64 = 2;
    pub const Z: u64 = 3;
    pub const W: u64 = 4;
    pub const A: u64 = 5;
    pub const Y: u64 = 6;
    pub const DELTA: u64 = 7;
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Simulate n rows. Each column has its own random stream, so adding a
/// column never changes the earlier ones. U is kept as a latent column.
pub fn generate(config: &DGPConfig, n: usize, seed: u64, missing: Option<&MissingModel>) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let mut rl = substream(seed, stream::L);
    let mut ru = substream(seed, stream::U);
    let mut rz = substream(seed, stream::Z);
    let mut rw = substream(seed, stream::W);
    let mut ra = substream(seed, stream::A);
    let mut ry = substream(seed, stream::Y);
    let mut rd = substream(seed, stream::DELTA);
    let (mut l, mut u, mut z, mut w, mut a, mut y) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        l[i] = config.draw_l(&mut rl);
        u[i] = config.draw_u(l[i], &mut ru);
        z[i] = config.draw_z(l[i], u[i], &mut rz);
        w[i] = config.draw_w(l[i], u[i], &mut rw);
        a[i] = config.draw_a(l[i], u[i], z[i], &mut ra);
        let p = config.outcome_prob(l[i], u[i], a[i], w[i]);
        y[i] = if ry.gen::<f64>() < p { 1.0 } else { 0.0 };
    }
    let mut a_obs: Vec<Option<f64>> = a.iter().map(|&v| Some(v)).collect();
    let mut weights = vec![1.0; n];
    if let Some(m) = missing {
        for i in 0..n {
            let p = m.prob_observed(y[i]);
            weights[i] = 1.0 / p;
            if rd.gen::<f64>() >= p {
                a_obs[i] = None;
            }
        }
    }
    let col = |v: Vec<f64>| DMatrix::from_vec(n, 1, v);
    Dataset::new(y, a_obs, col(l), col(z), col(w))?.with_weights(weights)?.with_latent_u(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthEstimate {
    pub psi: f64,
    pub mc_se: f64,
    /// Draws that entered the mean (all draws unless restricted to S).
    pub n_used: u64,
}

/// Monte Carlo value of E[Y(q(A))] (or E[Y(q(A)) | A in S] when `s_only`),
/// averaging the conditional success probability rather than Bernoulli draws.
/// Shards of 65536 draws use their own streams, so the result depends only on
/// (seed, n_mc).
pub fn true_psi(config: &DGPConfig, policy: &Policy, s_only: bool, n_mc: u64, seed: u64) -> Result<TruthEstimate> {
    if n_mc < 100_000 {
        return Err(Error::InvalidArgument(format!("n_mc must be at least 1e5, got {n_mc}")));
    }
    let shards = n_mc.div_ceil(SHARD as u64);
    let parts: Vec<Result<(f64, f64, u64)>> = (0..shards)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(seed, k);
            let draws = (n_mc - k * SHARD as u64).min(SHARD as u64);
            let (mut s1, mut s2, mut used) = (0.0, 0.0, 0u64);
            for _ in 0..draws {
                let l = config.draw_l(&mut rng);
                let u = config.draw_u(l, &mut rng);
                let z = config.draw_z(l, u, &mut rng);
                let w = config.draw_w(l, u, &mut rng);
                let a = config.draw_a(l, u, z, &mut rng);
                let qa = match policy.shifted(a) {
                    Some(v) => v,
                    None if s_only => continue,
                    None => {
                        return Err(Error::InvalidArgument(
                            "policy undefined for some exposures; restrict to S".into(),
                        ))
                    }
                };
                let p = config.outcome_prob(l, u, qa, w);
                s1 += p;
                s2 += p * p;
                used += 1;
            }
            Ok((s1, s2, used))
        })
        .collect();
    let (mut s1, mut s2, mut used) = (0.0, 0.0, 0u64);
    for p in parts {
        let (a, b, c) = p?;
        s1 += a;
        s2 += b;
        used += c;
    }
    if used == 0 {
        return Err(Error::ZeroDenominator("no Monte Carlo draw fell in S"));
    }
    let m = used as f64;
    let psi = s1 / m;
    let var = (s2 / m - psi * psi).max(0.0);
    Ok(TruthEstimate { psi, mc_se: (var / m).sqrt(), n_used: used })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TruthSource {
    /// Value reported with the original simulation study.
    Published,
    /// Value computed by this crate's Monte Carlo oracle.
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub config: DGPConfig,
    pub policy: TaperedShiftPolicy,
    /// Target is E[Y(q(A)) | A in S] rather than E[Y(q(A))].
    pub s_only: bool,
    pub true_psi: f64,
    pub source: TruthSource,
}

fn strength_tag(v: f64) -> String {
    format!("{}", v.abs()).replace('.', "")
}

/// All registered simulation designs with their reference values.
pub fn scenario_registry() -> Vec<Scenario> {
    let taper = TaperedShiftPolicy::new(0.4, 1.0, 0, -2.0, 2.0).expect("static policy");
    let shift = TaperedShiftPolicy::shift(0.4, -2.0, 2.0).expect("static policy");
    let mut out = Vec::new();
    for bz in [2.0, 1.0, 0.5] {
        for bw in [-2.0, -1.0, -0.5] {
            out.push(Scenario {
                name: format!("main_bz{}_bw{}", strength_tag(bz), strength_tag(bw)),
                config: DGPConfig::main(bz, bw),
                policy: taper,
                s_only: false,
                true_psi: 0.2512,
                source: TruthSource::Published,
            });
        }
    }
    out.push(Scenario {
        name: "no_confounding".into(),
        config: DGPConfig::no_confounding(2.0, -2.0),
        policy: taper,
        s_only: false,
        true_psi: 0.2081,
        source: TruthSource::Published,
    });
    for bz in [2.0, 1.0, 0.5] {
        out.push(Scenario {
            name: format!("restricted_bz{}", strength_tag(bz)),
            config: DGPConfig::main(bz, -bz),
            policy: shift,
            s_only: true,
            true_psi: 0.2728,
            source: TruthSource::Published,
        });
    }
    for (bz, psi) in [(3.0, 0.1943), (1.5, 0.2297), (1.0, 0.2400), (0.75, 0.2466)] {
        out.push(Scenario {
            name: format!("case2_bz{}", strength_tag(bz)),
            config: DGPConfig::direct_effects(bz, -bz),
            policy: taper,
            s_only: false,
            true_psi: psi,
            source: TruthSource::Published,
        });
    }
    out
}

pub fn find_scenario(name: &str) -> Result<Scenario> {
    scenario_registry()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario `{name}`")))
}
