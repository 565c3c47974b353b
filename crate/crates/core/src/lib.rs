//! Kernel Stein discrepancies on the rotation group SO(N).
//!
//! The crate provides closed-form Stein kernels for the von Mises–Fisher and
//! Riemannian normal families, minimum-KSD estimators (including a closed-form
//! linear solve for von Mises–Fisher), a goodness-of-fit test with a simulated
//! weighted chi-square null, exact rejection samplers, and seeded experiment
//! harnesses.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`, with `…32` variants for `f32`.
//!
//! ```
//! use stein_rotations::{rng, samplers, estimators, KernelConfig, VmfParams, WeightedSamples};
//! use nalgebra::DMatrix;
//!
//! let truth = VmfParams::new(DMatrix::identity(3, 3) * 2.0).unwrap();
//! let xs = samplers::sample_vmf(&truth, 200, &mut rng::stream(7)).unwrap();
//! let report = estimators::mksde_vmf(&WeightedSamples::unweighted(xs).unwrap(), &KernelConfig::default()).unwrap();
//! assert!(report.objective >= 0.0);
//! ```

pub mod error;
pub mod estimators;
pub mod experiments;
pub mod gof;
pub mod lie;
pub mod rng;
pub mod samplers;
pub mod scalar;
pub mod stein;

pub use error::{Error, Result};
pub use gof::Family;
pub use scalar::Real;

pub type Rotation = lie::Rotation<f64>;
pub type SkewMatrix = lie::SkewMatrix<f64>;
pub type Basis = lie::Basis<f64>;
pub type KernelConfig = stein::KernelConfig<f64>;
pub type VmfParams = stein::VmfParams<f64>;
pub type RnParams = stein::RnParams<f64>;
pub type CayleyParams = samplers::CayleyParams<f64>;
pub type WeightedSamples = estimators::WeightedSamples<f64>;
pub type EstimateReport = estimators::EstimateReport<f64>;
pub type GofResult = gof::GofResult<f64>;

pub type Rotation32 = lie::Rotation<f32>;
pub type SkewMatrix32 = lie::SkewMatrix<f32>;
pub type KernelConfig32 = stein::KernelConfig<f32>;
pub type VmfParams32 = stein::VmfParams<f32>;
pub type RnParams32 = stein::RnParams<f32>;
pub type WeightedSamples32 = estimators::WeightedSamples<f32>;
