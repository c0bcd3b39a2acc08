//! Pseudospectral laboratory for the generalized fractional KdV equation
//!
//! `u_t - d_{x1} D^a u + sum_j nu_j u^(k_j - 1) d_{x1} u = 0`
//!
//! on periodic boxes in one and two dimensions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod spectral;
pub mod propagator;
pub mod diagnostics;
pub mod groundstate;
pub mod snapshot;
pub mod config;
pub mod scenarios;

pub use error::{Error, Result};
pub use spectral::{Field, Grid, Multiplier};
