//! Schur-complement coarse graining of quadratic response tensors.
//!
//! * [`tensor`]: symmetric algebra, Schur complements, inertia, spectral
//!   separation and Weyl stability margins.
//! * [`reduction`]: adiabatic elimination of fast linear dynamics and the
//!   gradient bridge `K = −μQ`.
//! * [`flow`]: the stochastic signature flow of the tangential block.
//! * [`ensemble`]: grid sweeps, sector probabilities, first passage and
//!   phase boundaries.
//! * [`minimal`]: the two-mode coherence-sensitive toy model.
//! * [`recon`]: Lyapunov covariances, SDE sampling and curvature
//!   reconstruction.
//!
//! The dense algebra is generic over [`Scalar`] (`f64` and `f32`); the
//! aliases below fix the precision for the common cases.

pub mod contour;
pub mod ensemble;
pub mod flow;
pub mod minimal;
pub mod recon;
pub mod reduction;
pub mod rng;
pub mod scalar;
pub mod tensor;

use thiserror::Error;

pub use contour::{BoundaryCurve, ScalarField};
pub use ensemble::{extract_boundary, mean_first_passage, run_grid, sector_probability, GridResult, GridSpec};
pub use flow::{run_trajectory, Disorder, FlowConfig, NormMode, SchurModel, TrajectoryRecord};
pub use recon::{LinearSDE, ReconstructionReport, ReconstructionRequest};
pub use reduction::{eliminate_fast, fast_slave};
pub use rng::StreamSeed;
pub use scalar::Scalar;
pub use tensor::{schur_complement, signature, Signature};

pub type SymMatrix64 = tensor::SymMatrix<f64>;
pub type SymMatrix32 = tensor::SymMatrix<f32>;
pub type BlockQuadratic64 = tensor::BlockQuadratic<f64>;
pub type BlockQuadratic32 = tensor::BlockQuadratic<f32>;
pub type BlockGenerator64 = reduction::BlockGenerator<f64>;
pub type BlockGenerator32 = reduction::BlockGenerator<f32>;
pub type Mobility64 = reduction::Mobility<f64>;
pub type Mobility32 = reduction::Mobility<f32>;
pub type MinimalModelSpec64 = minimal::MinimalModelSpec<f64>;
pub type MinimalModelSpec32 = minimal::MinimalModelSpec<f32>;

pub use tensor::{BlockQuadratic, SymMatrix};

/// Union of the per-module errors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] tensor::TensorError),
    #[error(transparent)]
    Reduction(#[from] reduction::ReductionError),
    #[error(transparent)]
    Flow(#[from] flow::FlowError),
    #[error(transparent)]
    Ensemble(#[from] ensemble::EnsembleError),
    #[error(transparent)]
    Minimal(#[from] minimal::MinimalError),
    #[error(transparent)]
    Recon(#[from] recon::ReconError),
}
