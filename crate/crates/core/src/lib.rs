//! Two-sample testing for high-dimensional data.
//!
//! The crate compares three families of test statistics under a common data
//! model `X = Γ Z + μ`:
//!
//! * mean-difference U-statistics (`U_CQ`, the linear-kernel MMD),
//! * Gaussian-kernel MMD (`gMMD`) with a data-driven or power-law bandwidth,
//! * energy distance (`eED`) and its bandwidth-shifted variant `eED_γ`,
//!
//! each in quadratic, block and linear-time form. Alongside the statistics
//! live closed-form power expressions ([`theory`]), numerical checks of the
//! moment identities behind them ([`verify`]) and a seeded Monte-Carlo
//! harness that estimates power for the standard experiment presets
//! ([`harness`]).
//!
//! ```
//! use hdtwosample::models::{make_experiment1_pair, sample, NoiseFamily};
//! use hdtwosample::statistics::{u_statistic, Kernel};
//!
//! let (p, q) = make_experiment1_pair(NoiseFamily::Gaussian, 20).unwrap();
//! let x = sample(&p, 20, 1).unwrap();
//! let y = sample(&q, 20, 2).unwrap();
//! let ucq = u_statistic(&x, &y, &Kernel::Linear).unwrap();
//! assert!(ucq.value.is_finite());
//! ```

pub mod bandwidth;
pub mod cli;
pub mod error;
pub mod harness;
pub mod models;
pub mod numeric;
pub mod rng;
pub mod statistics;
pub mod theory;
pub mod verify;

pub use error::{Error, Result};
