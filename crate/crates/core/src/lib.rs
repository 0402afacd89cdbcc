//! Joint image reconstruction and projection-angle calibration for
//! parallel-beam computed tomography.
//!
//! The crate is `no_std` (it needs `alloc`) and purely numerical:
//!
//! - [`operator`]: pixel-driven Radon transform with its exact adjoint,
//!   filtered back-projection, the ℓ2 data-fidelity and its gradients with
//!   respect to both the image and the projection angles.
//! - [`denoise`]: the denoiser abstraction used as an image prior, with
//!   identity, Gaussian and anisotropic-TV implementations.
//! - [`solver`]: an accelerated iteration engine that runs RED, FISTA-TV and
//!   least squares, each optionally with the angle-calibration step.
//! - [`sim`]: phantoms, angle perturbation, exact-SNR sinogram synthesis
//!   and the image SNR / angular RMSE metrics.
//!
//! File formats, the subprocess denoiser and the command-line tool live in
//! the `calred` crate.
//!
//! Angles are in degrees at every public boundary.
//!
//! # Features
//!
//! - `std`: link the standard library (float math from `std` instead of `libm`).
//! - `parallel`: parallelize projections over angles and image rows with rayon.
//!   Reduction order is fixed, so results are bit-identical to the serial path.
//! - `serde`: derive `Serialize`/`Deserialize` for the configuration types.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod denoise;
mod error;
mod fft;
pub mod grid;
pub mod operator;
mod par;
pub mod rng;
pub mod sim;
pub mod solver;

pub use denoise::{DenoiseError, DenoiseResult, Denoiser, DenoiserSpec, NativeDenoiser};
pub use error::{Error, Result};
pub use grid::{AngleSet, ImageGrid, Sinogram};
pub use operator::{AngleDerivative, Projector, ProjectorConfig, SupportMask};
pub use sim::{rmse_deg, snr_db, ExperimentSpec};
pub use solver::{
    nesterov_q, Clock, GroundTruth, Method, NoClock, RunResult, RunTrace, SolveError, Solver,
    SolverConfig, SolverState, StepError, TraceRecord,
};

mod prelude {
    pub(crate) use alloc::vec;
    pub(crate) use alloc::vec::Vec;
    // Only needed for float math when `std` is not linked.
    #[allow(unused_imports)]
    pub(crate) use num_traits::Float;
}
