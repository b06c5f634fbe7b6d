//! Catalytic branching Brownian motion: a particle moves as Brownian motion
//! and splits in two at rate `β` on the scale of its local time at the origin.
//!
//! The crate provides closed-form reference quantities ([`analytic`]), exact
//! samplers for Brownian local time ([`sampler`]), a two-stage simulator that
//! grows the genealogy first and places particles afterwards ([`engine`]),
//! single-particle oracles ([`spine`]) and the statistics used to compare them
//! ([`stats`]).

#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod engine;
pub mod error;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod special;
pub mod spine;
pub mod stats;

pub use analytic::Params;
pub use engine::{GenealogyTree, SimConfig, Snapshot};
pub use error::{Error, Result};
pub use rng::RngStream;
pub use stats::{EstimateReport, RateFit};
