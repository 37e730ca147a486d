//! Joint clustering and outlier detection for multivariate functional data
//! with contaminated high-dimensional Gaussian mixtures.
//!
//! The pipeline: curves are smoothed onto a B-spline basis ([`funbasis`]), a
//! starting partition is computed ([`init`]), the mixture is fitted by ECM
//! ([`ecm`]) and the number of clusters and intrinsic dimensions are chosen
//! by BIC ([`selection`]). [`simulate`] and [`metrics`] reproduce the
//! benchmark datasets and their scores; [`cli`] wires everything to files.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod ecm;
pub mod error;
pub mod funbasis;
pub mod init;
pub mod metrics;
pub mod selection;
pub mod simulate;

pub use error::{Error, Result};
