//! Boosting of generative models through additive mixtures.
//!
//! The crate has three layers:
//!
//! - an exact engine for finite supports ([`divergence`], [`discrete_theory`],
//!   [`theory_verify`]) computing optimal next mixture components and checking
//!   their optimality and convergence properties on random instances;
//! - the boosting meta-algorithm itself ([`adagan`]) over pluggable weak
//!   learners with analytic densities ([`generators`]);
//! - evaluation ([`metrics`]) and the toy-data experiment harness ([`bench`]).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adagan;
pub mod bench;
pub mod cli;
pub mod divergence;
pub mod discrete_theory;
pub mod error;
pub mod generators;
pub mod metrics;
pub mod theory_verify;

pub use error::{Error, Result};
