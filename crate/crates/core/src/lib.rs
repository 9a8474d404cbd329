//! Parameter-free, auto-exploring stochastic policy mirror descent for
//! finite discounted MDPs.
//!
//! The crate has two lanes built on one single-trajectory online data
//! model:
//!
//! - **Tabular**: truncated on-policy Monte-Carlo Q estimation with a
//!   data-driven dynamic mixing time ([`sampler`]), driving per-state
//!   Tsallis mirror-descent updates ([`mirror`], [`tabular`]).
//! - **Linear function approximation**: a three-step stochastic operator
//!   for the projected Bellman system, anytime conditional TD with tail
//!   averaging and robust min-norm aggregation ([`linear`]), wrapped by a
//!   mirror-descent driver ([`spmd_ctd`]) and a doubling-trick outer loop
//!   with an advantage-gap certificate ([`certificate`], [`driver`]).
//!
//! Everything numerically checkable is backed by exact dense oracles in
//! [`mdp`]. All randomness is ChaCha-seeded; identical seeds give
//! bit-identical runs. Data-parallel fan-out (replicates, per-state
//! sweeps) runs on rayon under the default `parallel` feature and falls
//! back to sequential loops without it, with identical outputs.

pub mod certificate;
pub mod driver;
pub mod error;
pub mod instances;
pub mod linalg;
pub mod linear;
pub mod mdp;
pub mod mirror;
pub mod par;
pub mod record;
pub mod rng;
pub mod sampler;
pub mod spmd_ctd;
pub mod tabular;

pub use error::{CoreError, Result};
pub use mdp::{Policy, QFunction, Regularizer, TabularMdp, ValueFunction};
pub use record::RunRecord;
pub use sampler::SampleStream;
