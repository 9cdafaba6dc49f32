//! Inverse defect `V = −Ψ₂⁻¹(𝓛̄)`: one series application along `S`-orbits.

use crate::error::Result;
use crate::mapping_torus::{FunElem, TorusPoint};
use crate::scalar::Scalar;
use crate::vectorspace::Vector;

use super::budget::ErrorBudget;
use super::series::{psi_inverse_apply, Dynamics};
use super::System;

#[derive(Debug, Clone, PartialEq)]
pub struct InverseSolution<T> {
    /// `v_j(x)`.
    pub v: Vector<T>,
    pub certified_error: T,
}

pub(crate) fn solve<T: Scalar>(
    sys: &System<T>,
    x: &Vector<T>,
    j: usize,
    budget: &ErrorBudget<T>,
) -> Result<InverseSolution<T>> {
    if sys.tuple.is_zero() {
        return Ok(InverseSolution {
            v: x.zeros_like(),
            certified_error: T::zero(),
        });
    }
    let lbar = FunElem::lbar(&sys.tuple);
    let dynamics = Dynamics::Perturbed {
        tuple: &sys.tuple,
        orbit_tol: budget.orbit_tol,
    };
    let pt = TorusPoint { x: x.clone(), j };
    let s = psi_inverse_apply(
        &sys.op,
        &sys.cert,
        dynamics,
        &lbar,
        sys.tuple.max_sup(),
        sys.tuple.max_lip(),
        &pt,
        budget.k,
    )?;
    Ok(InverseSolution {
        certified_error: s.error(),
        v: -&s.value,
    })
}
