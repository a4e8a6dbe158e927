//! Lambda Value at Risk.
//!
//! Distribution models, Λ functions, the ΛVaR crossing solver, scoring
//! functions for elicitability checks, Lévy-metric robustness experiments
//! and sequential calibration backtests.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod consist;
pub mod dist;
pub mod elicit;
pub mod error;
pub mod lambda;
pub mod measures;
pub mod normal;
pub mod quad;
pub mod robust;

pub use dist::{DataSet, DistributionModel};
pub use error::{Error, Result};
pub use lambda::{LambdaFunction, LambdaSpec};
pub use measures::{es, lambda_var, var, RiskReport};
