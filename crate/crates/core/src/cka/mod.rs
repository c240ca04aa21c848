//! Fully passive twin-field conference key agreement and its active
//! reference.
//!
//! - [`relay`]: local two-laser sources, Hadamard splitter network, clicks
//! - [`yields`]: photon-vector yield tensors, local-channel correction and
//!   phase-error bound
//! - [`pe`]: decoy-cell gains and the multipartite LP
//! - [`kg`]: slice combinations, branch cutting and key-generation statistics
//! - [`rate`]: total passive and active rates

pub mod kg;
pub mod pe;
pub mod rate;
pub mod relay;
pub mod yields;

pub use rate::{active_rate, passive_rate, ActiveResult, CkaParams, CkaResult};
