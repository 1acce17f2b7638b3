//! Proximal estimation of counterfactual means under modified treatment
//! policies: kernel min-max bridge functions, cross-fitted doubly robust
//! estimation, parametric alternatives and a simulation harness.

pub mod bridge;
pub mod crossfit;
pub mod cv;
pub mod error;
pub mod ingest;
pub mod kernels;
pub mod parametric;
pub mod policy;
pub mod simulation;
pub mod stats;

pub use bridge::{BridgeEstimate, BridgeFitConfig, BridgeFunction, BridgeKind};
pub use crossfit::{DRResult, FitProcedure, FoldPlan};
pub use cv::HyperGrid;
pub use error::{Error, Result};
pub use ingest::{ColumnRoles, Dataset, Finding, FindingKind};
pub use kernels::{GaussianKernel, Standardization};
pub use parametric::{EstimatorKind, OutcomeBridgeParams, OutcomeSpec, TreatmentBridgeParams, TreatmentSpec};
pub use policy::{Policy, TaperedShiftPolicy};
pub use simulation::{DGPConfig, MissingModel, Scenario};
