//! Sparse network reconstruction from oscillator time series.
//!
//! Each node's dynamics are regressed on a dictionary of candidate coupling
//! functions. The sparse weight vector is found by a reweighted lasso whose
//! inner solves run as a block-parallel sharing ADMM.

pub mod dictionary;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod io;
pub mod kuramoto;
pub mod lasso;
pub mod metrics;
pub mod problem;
pub mod reweight;
pub mod sharing;

pub use error::{Error, Result};
