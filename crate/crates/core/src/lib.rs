//! Asymptotic key-rate engine for fully passive MDI-QKD and fully passive
//! twin-field conference key agreement, with active baselines.
//!
//! Module map:
//! - [`source`]: passive polarization source statistics and postselection regions
//! - [`channel`]: fiber, misalignment and Bell-state-measurement relay physics
//! - [`integrate`]: randomized quasi-Monte Carlo region averages
//! - [`lp`] and [`decoy`]: dense simplex and bipartite decoy-state bounds
//! - [`ensemble`]: two-photon Fock-level checks of the mixed-state bounds
//! - [`keyrate`]: passive, small-ring and active MDI key rates with grid search
//! - [`cka`]: passive and active conference key agreement

pub mod channel;
pub mod cka;
pub mod decoy;
pub mod ensemble;
pub mod error;
pub mod integrate;
pub mod keyrate;
pub mod lp;
pub mod math;
pub mod source;

pub use error::{Error, Result};
