//! Numerical laboratory for random sampling in reproducing kernel spaces
//! `V = Range(T)` of idempotent integral operators on `L^p(R^n)`.
//!
//! * [`numerics`]: Gauss–Legendre quadrature and `L^p` norms on boxes and on `R^n`.
//! * [`kernels`]: concrete idempotent kernels, the operator `T` and assumption diagnostics.
//! * [`rkspace`]: lattices, frame functions `φ_γ`, synthesis of members of `V` and `V(R, δ)`.
//! * [`bounds`]: every closed-form constant behind the sampling theorem.
//! * [`experiment`]: Monte Carlo verification of the sampling inequality.
//! * [`cli`]: configuration files, subcommands and report emission.
//!
//! The numerical core is generic over the scalar type ([`Real`]); the aliases
//! below fix it to `f64`, which is what the command-line front end uses.

// `!(x > 0)` style guards are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod kernels;
pub mod numerics;
pub mod rkspace;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type KernelSpecF64 = kernels::KernelSpec<f64>;
pub type LatticeF64 = rkspace::Lattice<f64>;
pub type SynthFunctionF64 = rkspace::SynthFunction<f64>;
pub type BoundContextF64 = bounds::BoundContext<f64>;
pub type QuadratureSettingsF64 = numerics::QuadratureSettings<f64>;
pub type LaboratoryF64 = experiment::Laboratory<f64>;

pub type KernelSpecF32 = kernels::KernelSpec<f32>;
pub type BoundContextF32 = bounds::BoundContext<f32>;
