//! Numerical laboratory for perturbations of generalized hyperbolic operators.
//!
//! Given an operator `T` with a splitting `X = M ⊕ N` (`T(M) ⊂ M`,
//! `T⁻¹(N) ⊂ N`) and small Lipschitz perturbations `L₀, …, L_{p−1}`, the
//! crate evaluates the conjugacy `h` between `Tᵖ` and
//! `(T + L_{p−1}) ∘ ⋯ ∘ (T + L₀)` pointwise, with certified error bounds, and
//! checks the accompanying estimates on samples.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix `f64`.

pub mod conjugacy;
pub mod error;
pub mod mapping_torus;
pub mod matrix;
pub mod operators;
pub mod perturbations;
pub mod scalar;
pub mod stability_lab;
pub mod vectorspace;

pub use error::{Error, Result};
pub use perturbations::Mode;
pub use scalar::Scalar;
pub use vectorspace::SpaceFamily;

pub type Vector = vectorspace::Vector<f64>;
pub type Matrix = matrix::Matrix<f64>;
pub type SplitOperator = operators::SplitOperator<f64>;
pub type Certificate = operators::HyperbolicityCertificate<f64>;
pub type LipMap = perturbations::LipMap<f64>;
pub type PerturbationTuple = perturbations::PerturbationTuple<f64>;
pub type TorusPoint = mapping_torus::TorusPoint<f64>;
pub type System = conjugacy::System<f64>;
pub type ErrorBudget = conjugacy::ErrorBudget<f64>;
