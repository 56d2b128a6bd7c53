//! Private releases of linear regression problems.
//!
//! A [`model::Dataset`] is released through additive Gaussian noise or a
//! noisy Gaussian random projection, calibrated to a mutual-information
//! budget in bits ([`mechanisms`]). The release is solved by least squares
//! ([`solvers`]) and scored by the relative error `eta` against the original
//! optimum. [`bounds`] gives theoretical bounds on `eta`, [`experiments`]
//! runs seeded sweeps, and [`io`] handles CSV data and reports.
//!
//! ```
//! use privreg::experiments::{generate_planted_dataset, run_trial};
//! use privreg::mechanisms::{MechanismConfig, PrivacyBudget};
//!
//! let ds = generate_planted_dataset(1000, 10, 0)?.dataset;
//! let cfg = MechanismConfig::projection(PrivacyBudget::new(0.5)?, 200, 1);
//! let eta = run_trial(&ds, &cfg)?;
//! assert!(eta >= 1.0);
//! # Ok::<(), privreg::Error>(())
//! ```

pub mod bounds;
pub mod error;
pub mod experiments;
pub mod io;
pub mod mechanisms;
pub mod model;
pub mod solvers;

pub use error::{Error, Result};
