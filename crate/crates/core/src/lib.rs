//! Pricing, simulation and mitigation of the builder's withhold option.
//!
//! Under enshrined proposer-builder separation a builder commits to a
//! payload and may still refuse to publish it until the attestation
//! deadline. If the block holds DEX trades marked against a moving CEX
//! price, that refusal is an option on the position. This crate contains
//! the allocation-only numerics: cost curves and return models
//! ([`market`]), the option-sizing solver ([`option`]), a slot simulator
//! ([`sim`]), the dynamic penalty controller ([`controller`]) and the
//! markout replay analytics ([`replay`]). File formats and the command
//! line live in the `freeopt` crate.

#![no_std]
// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod controller;
pub mod error;
pub mod market;
pub mod optimize;
pub mod option;
pub mod replay;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
pub use market::{sample_returns, Curve, MixtureComponent, PoolState, ReturnKind, ReturnModel, Side};
pub use option::{BuilderProblem, Envelope, OptionDecision, SolveDiagnostics, SolveMethod};
pub use special::{hazard, hazard_derivative, norm_cdf, norm_pdf, norm_sf};
