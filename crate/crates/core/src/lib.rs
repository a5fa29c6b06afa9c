//! Simulation and verification laboratory for one-dimensional SDEs
//!
//! ```text
//! dX_t = mu_t(X) dt + sigma_t(X) dL_t,   X_0 = x0
//! ```
//!
//! driven by a semimartingale with independent increments (SII) `L`
//! described by local characteristics `(b, c, F; A)`.
//!
//! The crate is organised bottom-up:
//!
//! - [`chars`]: local characteristics, truncation, Lévy exponent.
//! - [`paths`]: grid-sampled càdlàg paths with exact jump ledgers.
//! - [`rng`] and [`simulate`]: reproducible SII path sampling.
//! - [`expr`]: the coefficient expression language.
//! - [`sde`]: coefficients, the jump-adapted Euler solver, the `Z` process.
//! - [`dual`]: the spliced driver `V` and driver recovery.
//! - [`martingale`]: generator, test processes `M^f`, `K^g` and their tests.
//! - [`stats`]: characteristic-function law test and distance covariance.
//! - [`sticky`]: sticky Brownian motion and its local time.
//! - [`config`] and [`scenario`]: scenario files and experiment orchestration.

pub mod chars;
pub mod config;
pub mod dual;
pub mod error;
pub mod expr;
pub mod martingale;
pub mod paths;
pub mod quad;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod sde;
pub mod simulate;
pub mod stats;
pub mod sticky;

pub use chars::{LevyMeasure, JumpSizes, LocalCharacteristics, Schedule, TimeScale, Truncation};
pub use error::{Error, Result};
pub use paths::{CadlagPath, Jump, TimeGrid};
pub use report::TestReport;
pub use rng::RngStream;
pub use sde::{Coefficient, SdeSpec};
