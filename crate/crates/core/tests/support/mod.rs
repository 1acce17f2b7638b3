//! Brute-force oracles shared by the core tests and the acceptance suite.
#![allow(dead_code)]

pub mod quadratic;
pub mod risk_oracle;
pub mod saddle;
