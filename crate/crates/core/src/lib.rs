//! Pairwise-difference (D-)representations of central moments.
//!
//! The crate is organised bottom-up:
//!
//! - [`kernels`]: the unbiased minimal kernels `h_k`, `μ̄_k`, `μ̃_k`, the product
//!   kernel `P_k` and exact binomial coefficients.
//! - [`exact`]: brute-force expectation over products of finite-support
//!   distributions, plus the catalog of population identities checked against it.
//! - [`distributions`]: sampling distributions with closed-form central moments.
//! - [`estimators`]: sample estimators (natural, exhaustive and Monte Carlo
//!   D-estimators, Gini variance/covariance, skewness and kurtosis).
//! - [`identities`]: finite summation identities (Gini, Lagrange, Binet–Cauchy).
//! - [`simulation`]: seeded bias experiments and report rendering.

pub mod distributions;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod identities;
pub mod kernels;
pub mod rng;
pub mod simulation;
pub mod sum;

pub use error::{Error, Result};
