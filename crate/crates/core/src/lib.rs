//! Single-shot estimation of both displacement parameters with single-photon
//! probes and a dual-homodyne measurement.
//!
//! * [`wigner`]: closed-form Wigner functions, loss, and convolution kernels.
//! * [`estimation`]: prior, likelihood, posterior mean, post-selection, error.
//! * [`bounds`]: the vacuum-probe classical limit.
//! * [`montecarlo`]: seeded replay of the experiment.
//! * [`cli`]: configuration files, event logs, reports and subcommands.

// Negated float comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod error;
pub mod estimation;
pub mod montecarlo;
pub mod wigner;

pub use error::{Error, Result};
