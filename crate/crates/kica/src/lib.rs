//! Kernel independent component analysis with a determinant contrast, plus an
//! emulation of the measurement-error model of its spectral estimation pipeline.
//!
//! The crate is organized around the stages of the pipeline:
//!
//! - [`sources`]: synthetic independent components, linear mixing, rotations
//!   parametrized by skew-symmetric generators, CSV ingestion.
//! - [`preprocess`]: centering, covariance, whitening, and bounded perturbations
//!   of the inverse-square-root whitener.
//! - [`gram`]: Gaussian-kernel Gram matrices and double centering.
//! - [`spectral`]: symmetric eigendecomposition of centered Gram matrices with
//!   low-rank truncation, eigenvector overlaps, and quantum-state norms.
//! - [`contrast`]: the regularized overlap matrix `R_kappa`, determinant
//!   contrasts, a kurtosis baseline, and a determinant-perturbation checker.
//! - [`qemu`]: bounded-noise emulation of eigenvalue and overlap readout,
//!   budget wiring, and explicit assembly of the kernel-oracle and
//!   block-encoding unitaries at desk scale.
//! - [`optimize`]: contrast minimization over orthogonal matrices, landscape
//!   scans, Amari error, and correlation matrices.
//! - [`nystrom`]: integral-operator eigenfunction extension and Monte Carlo
//!   estimation of the overlap coefficients `C` and `D`.
//!
//! All randomness flows through counter-based streams keyed by `(seed, tags)`,
//! so results are independent of thread count and evaluation order.

pub mod contrast;
pub mod error;
pub mod gram;
pub mod nystrom;
pub mod optimize;
pub(crate) mod par;
pub mod preprocess;
pub mod qemu;
pub mod rng;
pub mod sources;
pub mod spectral;

pub use error::{Error, Result};
pub use sources::SampleMatrix;
