//! Fixtures shared by the benchmarks.

use nalgebra::DMatrix;
use pmtp_core::simulation::generate;
use pmtp_core::{BridgeFitConfig, DGPConfig, Dataset, GaussianKernel, Policy, TaperedShiftPolicy};

pub fn main_policy() -> Policy {
    TaperedShiftPolicy::new(0.4, 1.0, 0, -2.0, 2.0).expect("static policy").into()
}

/// Standardized draw from the main simulation design.
pub fn sim_data(n: usize, seed: u64) -> Dataset {
    generate(&DGPConfig::main(2.0, -2.0), n, seed, None)
        .and_then(|d| d.standardize_blocks())
        .expect("simulated data")
}

pub fn fit_config() -> BridgeFitConfig {
    let k = |bw| GaussianKernel::new(bw, 3).expect("positive bandwidth");
    BridgeFitConfig::new(1e-3, 1e-2, k(1.0), k(0.5)).expect("static config")
}

/// Rows of (A, L, W) features for kernel timings.
pub fn features(data: &Dataset) -> DMatrix<f64> {
    let rows: Vec<usize> = (0..data.n()).collect();
    data.outcome_features(&rows, data.a())
}
