//! Pseudospectral simulation of the stochastic Navier–Stokes equations on the
//! periodic torus, with a cascade construction for critical initial data and
//! Monte Carlo checks of the associated energy inequalities.

pub mod error;
pub mod spectral;

pub use error::{Error, Result};
pub mod cascade;
pub mod config;
pub mod decomposition;
pub mod initial;
pub mod noise;
pub mod integrator;
pub mod ledger;
pub mod run;
pub mod verifier;
