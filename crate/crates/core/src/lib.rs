//! Optimal pricing of routes in a traffic network whose users respond only
//! to prices.
//!
//! Route flows are `x = proj_[0, x_u](B·p + ζ)` with Gaussian `ζ`. The
//! operator minimizes `λ/2‖p‖² + E[½⟨Qx, x⟩ − ⟨s, x⟩]` over box-bounded
//! prices subject to minimum mean flows per commodity, using a Monte Carlo
//! sample of `ζ`. The crate provides the model ([`network`], [`problem`]),
//! dense and sparsity-aware evaluation of the sample-average objective and
//! its derivatives ([`evaluator`]), a trust-region SQP solver ([`solver`]),
//! independent reference implementations ([`oracle`], bundled by [`verify`])
//! and a kernel benchmark ([`bench`]).

pub mod bench;
pub mod error;
pub mod evaluator;
pub mod network;
pub mod oracle;
pub mod problem;
pub mod solver;
pub mod sparse;
pub mod verify;

pub use error::{Error, Result};
