//! Extreme learning machine trainers for multi-target regression with
//! outlier-robust ℓ2,1 losses.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: dense matrices, Cholesky solves, Jacobi-SVD pseudoinverse, norms.
//! - [`slfn`]: random hidden layers and the hidden-layer output matrix.
//! - [`closed`]: ELM, ridge ELM and the incremental I-ELM / EM-ELM / IR-ELM trainers.
//! - [`admm`]: block soft-thresholding and the ADMM solvers for GR-ELM, GOR-ELM and OR-ELM.
//! - [`igor`]: incremental GOR-ELM with Schur-complement inverse updates.
//! - [`data`]: ARFF/CSV loading, splitting, normalization and outlier contamination.
//! - [`eval`]: aRRMSE, cross-validated grid search and rank-based tests.

pub mod admm;
pub mod closed;
pub mod data;
pub mod error;
pub mod eval;
pub mod igor;
pub mod linalg;
pub mod rng;
pub mod slfn;

pub use error::{Error, Result};
pub use linalg::Mat;
