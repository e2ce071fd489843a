//! Simulation and exact-computation toolkit for a bi-parental Moran model
//! with binomial inheritance of genetic element counts.
//!
//! The crate has three layers:
//!
//! * samplers: an event-driven jump-chain simulator ([`jump`]), an
//!   equivalent random-graph construction ([`graph`]), and an exact
//!   transition sampler plus Euler scheme for the limiting Feller
//!   diffusion ([`feller`]);
//! * exact algebra: rational-arithmetic generator application and the
//!   closed-form identities it must satisfy ([`generator`]);
//! * analysis: moment statistics, Poissonization diagnostics, distribution
//!   distances ([`stats`]), and the experiment harness with its acceptance
//!   suite ([`harness`]).
//!
//! Everything that consumes randomness draws from named streams derived
//! from a master seed ([`rng`]), which makes multi-worker runs reproduce
//! byte-identical output.

pub mod error;
pub mod feller;
pub mod generator;
pub mod graph;
pub mod harness;
pub mod jump;
pub mod model;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::ModelError;
pub use model::{InitSpec, ModelParams, ParentSampling, Population, TypeDistribution};
pub use rng::{SeedSpec, SimRng, StreamRole};
pub use sim::{GridRow, RunSummary, StateStats};
