//! Robust maximum-capture facility location under GEV discrete choice models.
//!
//! A firm opens `C` of `m` candidate facilities to capture customer demand from zones whose
//! choice behaviour follows a GEV model (MNL or nested logit) against a competitor. Choice
//! utilities are uncertain and range over convex per-zone sets; the robust objective is the
//! worst-case captured demand. The crate provides
//!
//! * [`cpgf`]: generating functions, derivatives and choice probabilities,
//! * [`instance`]: market data, generation and JSON I/O,
//! * [`adversary`]: the per-zone convex minimization and its envelope gradient,
//! * [`objective`]: deterministic, worst-case and mixed objectives,
//! * [`solvers`]: greedy, gradient local search and exchange (GGX) plus brute force,
//! * [`outer_approx`]: exact multicut outer approximation for MNL,
//! * [`bench`]: the RO / DET1 / DET2 / SA comparison protocol and reports,
//! * [`verify`]: property suites checked against independent oracles.

pub mod adversary;
pub mod bench;
pub mod cpgf;
pub mod error;
pub mod instance;
pub mod objective;
pub mod outer_approx;
pub mod sampling;
pub mod solvers;
pub mod verify;

mod par;

pub use error::{Error, Result};

// std's clock panics on wasm32-unknown-unknown
#[cfg(not(target_arch = "wasm32"))]
pub(crate) use std::time::Instant;
#[cfg(target_arch = "wasm32")]
pub(crate) use web_time::Instant;
