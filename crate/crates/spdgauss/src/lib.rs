//! Riemannian Gaussian distributions on the manifold of symmetric positive
//! definite matrices.
//!
//! The crate provides the Rao-Fisher geometry of the manifold (distances,
//! geodesics, Exp/Log maps), the normalising factor of the Riemannian
//! Gaussian density, exact sampling, maximum-likelihood estimation of a
//! single Gaussian, EM fitting of Gaussian mixtures, and mixture-based
//! classification of SPD-valued data.

pub mod classifier;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod manifold;
pub mod mixture;
pub mod normalization;
pub mod sampler;

mod interp;

pub use error::{Error, Result};
pub use manifold::{SpdMatrix, TangentBasis, TangentVector};
