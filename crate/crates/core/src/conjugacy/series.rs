//! Truncated evaluation of `Ψ⁻¹` and the maps `Φ₁`, `Φ₂`.
//!
//! ```text
//! Ψ⁻¹(G)(x,j) = Σ_{k≥0} T̃ᵏ Q_M G(R^{−k−1}(x,j)) − Σ_{k≥1} T̃⁻ᵏ Q_N G(R^{k−1}(x,j))
//! ```
//!
//! with `R = T̃` or `R = S`. The first series lands in `M`, the second in `T⁻¹(N)`.

use crate::error::{invalid, Result};
use crate::mapping_torus::{torus_s, torus_s_inv_point, torus_t, torus_t_inv, FunElem, FunSpace, TorusPoint};
use crate::operators::{HyperbolicityCertificate, SplitOperator};
use crate::perturbations::PerturbationTuple;
use crate::scalar::Scalar;
use crate::vectorspace::Vector;

/// The dynamics `R` driving the orbits in `Ψ⁻¹`.
#[derive(Debug, Clone, Copy)]
pub enum Dynamics<'a, T> {
    /// `R = T̃`.
    Linear,
    /// `R = S`, with backward steps solved to point tolerance `orbit_tol`.
    Perturbed {
        tuple: &'a PerturbationTuple<T>,
        orbit_tol: T,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesValue<T> {
    pub value: Vector<T>,
    /// Partial sum of the `M`-series.
    pub m_part: Vector<T>,
    /// Partial sum of the `N`-series (lies in `T⁻¹(N)`).
    pub n_part: Vector<T>,
    /// Bound on the dropped terms.
    pub tail: T,
    /// Bound on the effect of inexact backward orbits.
    pub orbit_error: T,
}

impl<T: Scalar> SeriesValue<T> {
    pub fn error(&self) -> T {
        self.tail + self.orbit_error
    }
}

/// Evaluates `Ψ⁻¹(G)` at `pt` using `k` terms of each series.
///
/// `g_sup ≥ |G|∞` and `g_lip ≥ Lip(g_j)` feed the certified error.
#[allow(clippy::too_many_arguments)]
pub fn psi_inverse_apply<T: Scalar>(
    op: &SplitOperator<T>,
    cert: &HyperbolicityCertificate<T>,
    dynamics: Dynamics<'_, T>,
    g: &FunElem<T>,
    g_sup: T,
    g_lip: T,
    pt: &TorusPoint<T>,
    k: usize,
) -> Result<SeriesValue<T>> {
    if k < 1 {
        return Err(invalid("K", "must be at least 1"));
    }
    if g.space() != FunSpace::G {
        return Err(invalid("G", "Ψ⁻¹ takes an element of 𝓖"));
    }
    let p = g.p();
    let one = T::one();
    let ab = cert.a * cert.b;
    let geometric = one / (one - cert.t);
    let zero = pt.x.zeros_like();

    let mut tail = T::zero();
    let mut orbit_error = T::zero();

    let mut m_part = zero.clone();
    if op.has_stable_part() {
        // backward orbit R^{-1}(pt), …, R^{-k}(pt) and its error bounds
        let mut terms = Vec::with_capacity(k);
        let mut cur = pt.clone();
        let mut err = T::zero();
        for i in 0..k {
            let prev = match dynamics {
                Dynamics::Linear => torus_t_inv(op, &cur, p)?,
                Dynamics::Perturbed { tuple, orbit_tol } => {
                    let (prev, step) = torus_s_inv_point(op, tuple, &cur, orbit_tol)?;
                    let lip = tuple.max_lip();
                    let ell = cert.inv_norm / (one - cert.inv_norm * lip);
                    err = ell * err + step;
                    prev
                }
            };
            if !prev.x.is_finite() {
                break;
            }
            let term = op.proj_m(&g.eval(&prev).x);
            if !term.is_finite() {
                break;
            }
            orbit_error = orbit_error + ab * cert.t.powi(i as i32) * g_lip * err;
            terms.push(term);
            cur = prev;
        }
        tail = tail + ab * cert.t.powi(terms.len() as i32) * geometric * g_sup;
        if let Some(last) = terms.pop() {
            let mut acc = last;
            while let Some(w) = terms.pop() {
                acc = op.settle_m(&op.apply(&acc) + &w);
            }
            m_part = acc;
        }
    }

    let mut n_part = zero;
    if op.has_unstable_part() {
        // forward orbit pt, R(pt), …, R^{k-1}(pt)
        let mut terms = Vec::with_capacity(k);
        let mut cur = pt.clone();
        for i in 0..k {
            if i > 0 {
                cur = match dynamics {
                    Dynamics::Linear => torus_t(op, &cur, p),
                    Dynamics::Perturbed { tuple, .. } => torus_s(op, tuple, &cur),
                };
            }
            if !cur.x.is_finite() {
                break;
            }
            let term = op.proj_n(&g.eval(&cur).x);
            if !term.is_finite() {
                break;
            }
            terms.push(term);
        }
        tail = tail + ab * cert.t.powi(terms.len() as i32 + 1) * geometric * g_sup;
        if let Some(last) = terms.pop() {
            let mut acc = op.settle_n(op.apply_inverse(&last)?);
            while let Some(z) = terms.pop() {
                acc = op.settle_n(op.apply_inverse(&(&acc + &z))?);
            }
            n_part = acc;
        }
    }

    Ok(SeriesValue {
        value: &m_part - &n_part,
        m_part,
        n_part,
        tail,
        orbit_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiKind {
    /// `Φ₁(F)(x,j) = 𝓛̄((x,j) + F(x,j))`.
    One,
    /// `Φ₂ = Φ₁ − 𝓛̄`.
    Two,
}

/// `Φ(F)(pt)`, an element of `𝓖` evaluated at `pt`.
pub fn phi_apply<T: Scalar>(
    which: PhiKind,
    tuple: &PerturbationTuple<T>,
    f: &FunElem<T>,
    pt: &TorusPoint<T>,
) -> TorusPoint<T> {
    let l = tuple.get(pt.j as i64);
    let shifted = &pt.x + &f.eval(pt).x;
    let mut x = l.eval(&shifted);
    if which == PhiKind::Two {
        x = &x - &l.eval(&pt.x);
    }
    TorusPoint {
        x,
        j: (pt.j + 1) % tuple.p(),
    }
}

/// `Φ(F)` as a lazily evaluated element of `𝓖`.
pub fn phi_elem<T: Scalar>(which: PhiKind, tuple: &PerturbationTuple<T>, f: &FunElem<T>) -> FunElem<T> {
    let tuple = tuple.clone();
    let f = f.clone();
    let p = tuple.p();
    FunElem::new(FunSpace::G, p, 0, move |x, j| {
        phi_apply(which, &tuple, &f, &TorusPoint { x: x.clone(), j }).x
    })
}

/// The defect `Ψ(F)(pt) = F(R(pt)) − T̃(F(pt))` of an `𝓕` element.
pub fn psi_apply<T: Scalar>(
    op: &SplitOperator<T>,
    dynamics: Dynamics<'_, T>,
    f: impl Fn(&TorusPoint<T>) -> Result<Vector<T>>,
    pt: &TorusPoint<T>,
    p: usize,
) -> Result<Vector<T>> {
    let next = match dynamics {
        Dynamics::Linear => torus_t(op, pt, p),
        Dynamics::Perturbed { tuple, .. } => torus_s(op, tuple, pt),
    };
    Ok(&f(&next)? - &op.apply(&f(pt)?))
}
