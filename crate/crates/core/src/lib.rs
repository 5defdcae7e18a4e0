//! Integral-transform sufficient dimension reduction.
//!
//! Candidate-matrix estimators (Fourier and convolution weights, mean and
//! distribution targets), iterative Hessian transformation, inverse Fourier
//! regression with dimension tests, minimum-discrepancy fits, a row-sparse
//! ADMM estimator, and bootstrap selection of dimension and tuning values.

pub mod admm;
pub mod bootstrap;
pub mod cli;
pub mod data;
pub mod density;
pub mod error;
pub mod ftire;
pub mod iht;
pub mod invfm;
pub mod itm;
pub mod linalg;
pub mod subspace;
pub mod synth;

pub use data::{standardize, Dataset, StandardizedSample};
pub use error::{Result, SdrError};
