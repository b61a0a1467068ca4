//! Gaussian processes that encode the reaction–diffusion equation
//!
//! ```text
//! ∂y/∂t = S·u − λ·y + D·∂²y/∂x²,   x ∈ [0, l],  t ≥ 0
//! ```
//!
//! linking an mRNA field `u` to a protein field `y`, in two variants:
//!
//! * **GP-mRNA** ([`kernel_mrna`]): SE prior on `u`; protein covariances by
//!   integrating against the Green's function (zero initial and boundary
//!   values built in).
//! * **GP-Protein** ([`kernel_protein`]): SE prior on `y`; mRNA covariances
//!   by applying the differential operator.
//!
//! The closed-form kernel math is generic over [`Scalar`] (`f32`/`f64`);
//! matrix work in [`gp`] is `f64`. The aliases below fix the scalar to `f64`
//! (and `F32*` to `f32`).

pub mod dataio;
pub mod design;
pub mod error;
pub mod gp;
pub mod kernel_mrna;
pub mod kernel_protein;
pub mod kernel_se;
pub mod metrics;
pub mod oracle;
pub mod scalar;
pub mod specfun;

pub use error::{Error, Result};
pub use gp::{Channel, ChannelObservations, Hyperparameters, Model, ModelVariant, PosteriorField, SpaceTimeDesign};
pub use scalar::Scalar;

pub type SpaceTimePoint = kernel_se::SpaceTimePoint<f64>;
pub type KernelParams = kernel_se::KernelParams<f64>;
pub type MechanisticParams = kernel_mrna::MechanisticParams<f64>;
pub type GreensConfig = kernel_mrna::GreensConfig<f64>;
pub type MrnaKernel = kernel_mrna::MrnaKernel<f64>;
pub type ProteinKernel = kernel_protein::ProteinKernel<f64>;

pub type F32SpaceTimePoint = kernel_se::SpaceTimePoint<f32>;
pub type F32KernelParams = kernel_se::KernelParams<f32>;
pub type F32MechanisticParams = kernel_mrna::MechanisticParams<f32>;
pub type F32GreensConfig = kernel_mrna::GreensConfig<f32>;
pub type F32MrnaKernel = kernel_mrna::MrnaKernel<f32>;
pub type F32ProteinKernel = kernel_protein::ProteinKernel<f32>;
