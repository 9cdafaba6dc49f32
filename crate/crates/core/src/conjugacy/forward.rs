//! Forward defect `U`, the fixed point of `Ψ₁⁻¹ ∘ Φ₁`.
//!
//! Iterate `d` at `(x, j₀)` only depends on iterate `d − 1` along the
//! `T̃`-orbit of `(x, j₀)`, so all iterates are evaluated on a lattice of
//! orbit indices `i` with `yᵢ = Tⁱx` and fiber `j₀ + i`. With
//! `φ(i) = L_{jᵢ}(yᵢ + u_{d−1}(i))` the two series become sliding sums
//!
//! ```text
//! A(i+1) = P_M φ(i) + T A(i),      B(i) = T⁻¹(P_N φ(i) + B(i+1)),
//! u_d(i) = A(i) − B(i),
//! ```
//!
//! which costs `O(m² K)` evaluations instead of `(2K)ᵐ`. Points far from the
//! window edges get more than `K` terms this way; the uniform variant sums
//! exactly `K` terms everywhere at `O(m² K²)`. Windows start from
//! `[0, 0]` at level `m` and widen by `K` per level. A scalar error lattice
//! tracks dropped tails and their propagation through `Lip(L)`.

use std::collections::VecDeque;

use crate::error::Result;
use crate::mapping_torus::{FunElem, FunSpace, TorusPoint};
use crate::scalar::Scalar;
use crate::vectorspace::Vector;

use super::series::{phi_elem, psi_inverse_apply, Dynamics, PhiKind};
use super::System;

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSolution<T> {
    /// `u_{j₀}(x)` from the last iterate.
    pub u: Vector<T>,
    /// `U_d(x, j₀)` for `d = 0..=m`.
    pub iterates: Vec<Vector<T>>,
    /// `M`-series part of `u`.
    pub m_part: Vector<T>,
    /// `N`-series part of `u` (in `T⁻¹(N)`), so that `u = m_part − n_part`.
    pub n_part: Vector<T>,
    /// Bound on `|u − U(x, j₀)|`.
    pub certified_error: T,
    /// Part of `certified_error` coming from finite series depth.
    pub truncation_error: T,
    /// Set when an orbit left the floating-point range and the window was cut.
    pub clipped: bool,
}

/// Orbit of `x` over a window of indices, computed on demand.
struct Orbit<'a, T: Scalar> {
    sys: &'a System<T>,
    lo: i64,
    points: VecDeque<Vector<T>>,
    min_finite: i64,
    max_finite: i64,
}

impl<'a, T: Scalar> Orbit<'a, T> {
    fn new(sys: &'a System<T>, x: &Vector<T>) -> Self {
        Self {
            sys,
            lo: 0,
            points: VecDeque::from([x.clone()]),
            min_finite: i64::MIN,
            max_finite: i64::MAX,
        }
    }

    fn hi(&self) -> i64 {
        self.lo + self.points.len() as i64 - 1
    }

    /// Extends the orbit to `[lo, hi]` and returns the finite sub-window.
    fn cover(&mut self, lo: i64, hi: i64) -> Result<(i64, i64)> {
        while self.hi() < hi.min(self.max_finite) {
            let next = self.sys.op.apply(self.points.back().expect("orbit is never empty"));
            if next.is_finite() {
                self.points.push_back(next);
            } else {
                self.max_finite = self.hi();
            }
        }
        while self.lo > lo.max(self.min_finite) {
            let prev = self.sys.op.apply_inverse(self.points.front().expect("orbit is never empty"))?;
            if prev.is_finite() {
                self.points.push_front(prev);
                self.lo -= 1;
            } else {
                self.min_finite = self.lo;
            }
        }
        Ok((lo.max(self.lo), hi.min(self.hi())))
    }

    fn at(&self, i: i64) -> &Vector<T> {
        &self.points[(i - self.lo) as usize]
    }
}

/// Values and error bounds of one iterate on a window.
struct Level<T> {
    lo: i64,
    u: Vec<Vector<T>>,
    err: Vec<T>,
}

impl<T: Scalar> Level<T> {
    fn hi(&self) -> i64 {
        self.lo + self.u.len() as i64 - 1
    }
}

pub(crate) fn solve_lattice<T: Scalar>(
    sys: &System<T>,
    x: &Vector<T>,
    j0: usize,
    k: usize,
    m: usize,
    uniform: bool,
) -> Result<ForwardSolution<T>> {
    let zero = x.zeros_like();
    let sigma = sys.tuple.max_sup();
    if m == 0 || sys.tuple.is_zero() {
        let certified_error = if m == 0 { sys.defect_bound() / (T::one() - sys.contraction()) } else { T::zero() };
        return Ok(ForwardSolution {
            u: zero.clone(),
            iterates: vec![zero.clone(); m + 1],
            m_part: zero.clone(),
            n_part: zero,
            certified_error: if sys.tuple.is_zero() { T::zero() } else { certified_error },
            truncation_error: T::zero(),
            clipped: false,
        });
    }

    let op = &sys.op;
    let (has_m, has_n) = (op.has_stable_part(), op.has_unstable_part());
    let k = k as i64;
    let reach_back = if has_m { k } else { 0 };
    let reach_fwd = if has_n { k - 1 } else { 0 };

    // requested windows, from level m (index m) down to level 0
    let mut windows = vec![(0i64, 0i64); m + 1];
    for d in (0..m).rev() {
        let (lo, hi) = windows[d + 1];
        windows[d] = (lo - reach_back, hi + reach_fwd);
    }
    let mut orbit = Orbit::new(sys, x);
    let (lo0, hi0) = windows[0];
    let (flo, fhi) = orbit.cover(lo0, hi0)?;
    let clipped = flo > lo0 || fhi < hi0;

    let one = T::one();
    let t = sys.cert.t;
    let ab = sys.cert.a * sys.cert.b;
    let geometric = one / (one - t);
    let lambda = sys.tuple.max_lip();
    let p = sys.tuple.p() as i64;
    let fiber = |i: i64| (j0 as i64 + i).rem_euclid(p);
    // sparse accumulators shed entries below eta; the dropped mass enters the error
    let eta = if op.is_coordinate_split() { T::epsilon() * sigma } else { T::zero() };
    let a = sys.cert.a;

    let mut prev = Level {
        lo: flo,
        u: vec![zero.clone(); (fhi - flo + 1) as usize],
        err: vec![T::zero(); (fhi - flo + 1) as usize],
    };
    let mut iterates = vec![zero.clone()];
    let mut parts = (zero.clone(), zero.clone());

    for d in 1..=m {
        let (plo, phi) = (prev.lo, prev.hi());
        let (lo, hi) = (windows[d].0.max(plo), windows[d].1.min(phi));

        // near the overflow edge of an orbit L may evaluate to a non-finite
        // value; it is replaced by 0 at a cost of ‖L‖∞ ≤ σ
        let mut phi_err = vec![T::zero(); prev.u.len()];
        let phis: Vec<Vector<T>> = (plo..=phi)
            .map(|i| {
                let idx = (i - plo) as usize;
                let y = orbit.at(i);
                let u = &prev.u[idx];
                let arg = if u.is_zero() { y.clone() } else { y + u };
                let value = sys.tuple.get(fiber(i)).eval(&arg);
                if value.is_finite() {
                    value
                } else {
                    phi_err[idx] = sigma;
                    zero.clone()
                }
            })
            .collect();
        // error of φ(i) from the previous level's error and substitutions
        let eff: Vec<T> = prev.err.iter().zip(&phi_err).map(|(&e, &f)| lambda * e + f).collect();

        let width = (hi - lo + 1) as usize;
        let mut u = vec![zero.clone(); width];
        let mut err = vec![T::zero(); width];

        if uniform {
            for i in lo..=hi {
                let slot = (i - lo) as usize;
                let (mp, np, e) = k_term_at(sys, &phis, &eff, plo, phi, i, k)?;
                if i == 0 && d == m {
                    parts = (mp.clone(), np.clone());
                }
                u[slot] = &mp - &np;
                err[slot] = e;
            }
        }
        if has_m && !uniform {
            let mut acc = zero.clone();
            let mut acc_err = T::zero();
            let mut dropped = T::zero();
            for i in plo..=hi {
                if i >= lo {
                    let slot = (i - lo) as usize;
                    u[slot] = acc.clone();
                    if i == 0 && d == m {
                        parts.0 = acc.clone();
                    }
                    let included = (i - plo) as i32;
                    err[slot] = ab * t.powi(included) * geometric * sigma + ab * acc_err + a * dropped;
                }
                let idx = (i - plo) as usize;
                acc = op.settle_m(&op.apply(&acc) + &op.proj_m(&phis[idx]));
                acc_err = t * acc_err + eff[idx];
                dropped = t * dropped + acc.prune_below(eta);
            }
        }
        if has_n && !uniform {
            let mut acc = zero.clone();
            let mut acc_err = T::zero();
            let mut dropped = T::zero();
            for i in (lo..=phi).rev() {
                let idx = (i - plo) as usize;
                acc = op.settle_n(op.apply_inverse(&(&op.proj_n(&phis[idx]) + &acc))?);
                acc_err = t * (eff[idx] + acc_err);
                dropped = t * dropped + acc.prune_below(eta);
                if i <= hi {
                    let slot = (i - lo) as usize;
                    u[slot] = &u[slot] - &acc;
                    if i == 0 && d == m {
                        parts.1 = acc.clone();
                    }
                    let included = (phi - i + 1) as i32;
                    err[slot] = err[slot] + ab * t.powi(included + 1) * geometric * sigma
                        + ab * acc_err
                        + a * dropped;
                }
            }
        }
        prev = Level { lo, u, err };
        iterates.push(prev.u[(-lo) as usize].clone());
    }

    let truncation_error = prev.err[(-prev.lo) as usize];
    let delta = sys.contraction();
    let fixed_point = delta.powi(m as i32) / (one - delta) * sys.defect_bound();
    Ok(ForwardSolution {
        u: iterates[m].clone(),
        iterates,
        m_part: parts.0,
        n_part: parts.1,
        certified_error: truncation_error + fixed_point,
        truncation_error,
        clipped,
    })
}

/// `M`- and `N`-parts of `(Ψ⁻¹ G)` at orbit index `i` with at most `k`
/// terms per series, from `φ` and its errors on `[plo, phi]`, plus the error bound.
fn k_term_at<T: Scalar>(
    sys: &System<T>,
    phis: &[Vector<T>],
    eff: &[T],
    plo: i64,
    phi: i64,
    i: i64,
    k: i64,
) -> Result<(Vector<T>, Vector<T>, T)> {
    let op = &sys.op;
    let cert = &sys.cert;
    let (ab, t) = (cert.a * cert.b, cert.t);
    let tail = ab / (T::one() - t) * sys.tuple.max_sup();
    let idx = |n: i64| (n - plo) as usize;
    let mut a = phis[0].zeros_like();
    let mut b = a.clone();
    let mut err = T::zero();
    if op.has_stable_part() {
        let first = (i - k).max(plo);
        let mut e = T::zero();
        for n in first..i {
            a = op.settle_m(&op.apply(&a) + &op.proj_m(&phis[idx(n)]));
            e = t * e + eff[idx(n)];
        }
        err = err + tail * t.powi((i - first) as i32) + ab * e;
    }
    if op.has_unstable_part() {
        let last = (i + k - 1).min(phi);
        let mut e = T::zero();
        for n in (i..=last).rev() {
            b = op.settle_n(op.apply_inverse(&(&op.proj_n(&phis[idx(n)]) + &b))?);
            e = t * (eff[idx(n)] + e);
        }
        err = err + tail * t.powi((last - i + 2) as i32) + ab * e;
    }
    Ok((a, b, err))
}

/// Iterate `U_d` as a lazily evaluated, memoized element of `𝓕`, using
/// exactly `k` terms per series application. Costs `(2K)^d`, so only usable
/// at small depths; serves as a reference for [`solve_lattice`].
pub fn lazy_iterate<T: Scalar>(sys: &System<T>, d: usize, k: usize) -> FunElem<T> {
    let p = sys.tuple.p();
    let mut current = FunElem::zero(FunSpace::F, p);
    for depth in 1..=d {
        let g = phi_elem(PhiKind::One, &sys.tuple, &current);
        let op = sys.op.clone();
        let cert = sys.cert;
        let sigma = sys.tuple.max_sup();
        current = FunElem::new(FunSpace::F, p, depth, move |x, j| {
            let pt = TorusPoint { x: x.clone(), j };
            psi_inverse_apply(&op, &cert, Dynamics::Linear, &g, sigma, T::zero(), &pt, k)
                .map(|s| s.value)
                .unwrap_or_else(|_| x.map_entries(|_| T::nan()))
        })
        .with_memo();
    }
    current
}
