//! Joint estimation and inference for extreme expectiles of heavy-tailed
//! multivariate data.
//!
//! The crate is `no_std` with `alloc`. Everything here is a pure function of
//! its inputs: point estimators for tail expectiles (asymmetric least squares
//! and quantile-based), the Hill index, Weissman extrapolation, the empirical
//! tail copula, plug-in covariance estimators, confidence ellipsoids, equality
//! tests, and seedable samplers for the reference simulation models.
//!
//! File formats, the command line, and the parallel Monte Carlo harness live
//! in the companion `expectile-tools` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::type_complexity)]

extern crate alloc;

pub mod covariance;
pub mod dependence;
mod error;
pub mod inference;
pub mod marginal;
pub mod numerics;
pub mod sample;
pub mod simulation;
pub mod testing;

pub use error::{Error, Result};

