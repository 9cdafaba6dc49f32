//! A-priori choice of the truncation depth `K` and the iteration count `m`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operators::{franks_constant, HyperbolicityCertificate};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLimits {
    pub max_k: usize,
    pub max_m: usize,
}

impl Default for BudgetLimits {
    fn default() -> Self {
        Self { max_k: 200, max_m: 60 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget<T> {
    pub tau: T,
    pub k: usize,
    pub m: usize,
    /// A-priori bound on the total error; `≤ tau` for planned budgets.
    pub certified_error: T,
    /// Point tolerance for each backward `S` step (inverse defect only).
    pub orbit_tol: T,
}

/// `a b tᴷ (1+t)/(1−t) σ`: one truncated series application on `|G|∞ ≤ σ`.
pub fn series_tail<T: Scalar>(cert: &HyperbolicityCertificate<T>, k: usize, sigma: T) -> T {
    cert.a * cert.b * cert.t.powi(k as i32) * (T::one() + cert.t) / (T::one() - cert.t) * sigma
}

fn ceil_log_ratio<T: Scalar>(target: T, base: T) -> usize {
    // smallest n ≥ 0 with baseⁿ ≤ target, for 0 < base < 1
    if target >= T::one() {
        return 0;
    }
    let n = (target.ln() / base.ln()).ceil();
    n.to_usize().unwrap_or(usize::MAX)
}

/// Error of `m` Picard steps from `O_𝓕` with `K`-term series, contraction `δ`
/// and `|𝓛̄|∞ ≤ σ`: `tail_K Σ_{i<m} δⁱ + δᵐ/(1−δ)·Cσ`.
pub fn forward_error<T: Scalar>(
    cert: &HyperbolicityCertificate<T>,
    delta: T,
    sigma: T,
    k: usize,
    m: usize,
) -> T {
    if sigma.is_zero() {
        return T::zero();
    }
    let first = franks_constant(cert) * sigma;
    let geometric: T = (0..m).map(|i| delta.powi(i as i32)).sum();
    let fixed_point = if m == 0 {
        first / (T::one() - delta)
    } else {
        delta.powi(m as i32) / (T::one() - delta) * first
    };
    series_tail(cert, k, sigma) * geometric + fixed_point
}

impl<T: Scalar> ErrorBudget<T> {
    /// The a-priori budget of the forward solver at fixed depths.
    pub fn for_depths(cert: &HyperbolicityCertificate<T>, delta: T, sigma: T, k: usize, m: usize) -> Self {
        let certified_error = forward_error(cert, delta, sigma, k, m);
        Self {
            tau: certified_error,
            k,
            m,
            certified_error,
            orbit_tol: T::zero(),
        }
    }

    /// Plans `(K, m)` for the forward defect so that the a-priori error is `≤ τ`.
    pub fn plan_forward(
        cert: &HyperbolicityCertificate<T>,
        delta: T,
        sigma: T,
        tau: T,
        limits: BudgetLimits,
    ) -> Result<Self> {
        if !(tau > T::zero()) {
            return Err(invalid("tau", "must be positive"));
        }
        if !(delta >= T::zero() && delta < T::one()) {
            return Err(invalid("delta", "contraction factor must lie in [0, 1)"));
        }
        if sigma.is_zero() {
            return Ok(Self {
                tau,
                k: 1,
                m: 0,
                certified_error: T::zero(),
                orbit_tol: T::zero(),
            });
        }
        let first = franks_constant(cert) * sigma;
        let mut m = if delta.is_zero() {
            1
        } else {
            let two = T::of(2.0);
            ceil_log_ratio((T::one() - delta) * tau / (two * first), delta).max(1)
        };
        if m > limits.max_m {
            return Err(Error::BudgetInfeasible(format!(
                "τ = {tau} needs m = {m} iterations, above max_m = {}",
                limits.max_m
            )));
        }
        loop {
            let four = T::of(4.0);
            let target = (T::one() - cert.t) * tau / (four * cert.a * cert.b * sigma * T::of(m as f64));
            let mut k = ceil_log_ratio(target, cert.t).max(1);
            while k <= limits.max_k {
                let certified_error = forward_error(cert, delta, sigma, k, m);
                if certified_error <= tau {
                    return Ok(Self {
                        tau,
                        k,
                        m,
                        certified_error,
                        orbit_tol: T::zero(),
                    });
                }
                k += 1;
            }
            m += 1;
            if m > limits.max_m {
                return Err(Error::BudgetInfeasible(format!(
                    "τ = {tau} not reachable within max_K = {}, max_m = {}",
                    limits.max_k, limits.max_m
                )));
            }
        }
    }

    /// Plans `K` and the backward-orbit tolerance of the single series
    /// application behind the inverse defect.
    ///
    /// `lambda` bounds `Lip(L_j)`; backward orbit errors grow at most by
    /// `ℓ = ‖T⁻¹‖/(1 − ‖T⁻¹‖λ)` per step.
    pub fn plan_inverse(
        cert: &HyperbolicityCertificate<T>,
        lambda: T,
        sigma: T,
        tau: T,
        limits: BudgetLimits,
    ) -> Result<Self> {
        if !(tau > T::zero()) {
            return Err(invalid("tau", "must be positive"));
        }
        if sigma.is_zero() {
            return Ok(Self {
                tau,
                k: 1,
                m: 1,
                certified_error: T::zero(),
                orbit_tol: tau,
            });
        }
        let slack = T::of(1.1);
        let unit = series_tail(cert, 0, sigma);
        let k = ceil_log_ratio(tau / (slack * unit), cert.t).max(1);
        if k > limits.max_k {
            return Err(Error::BudgetInfeasible(format!(
                "τ = {tau} needs K = {k} series terms, above max_K = {}",
                limits.max_k
            )));
        }
        let tail = series_tail(cert, k, sigma);
        let coeff = orbit_coefficient(cert, lambda, k);
        let orbit_tol = if coeff.is_zero() {
            tau
        } else {
            tail / (T::of(10.0) * coeff)
        };
        Ok(Self {
            tau,
            k,
            m: 1,
            certified_error: tail + coeff * orbit_tol,
            orbit_tol,
        })
    }
}

/// `a b λ Σ_{k<K} tᵏ Σ_{i≤k} ℓⁱ`: the series error per unit of backward
/// orbit tolerance.
fn orbit_coefficient<T: Scalar>(cert: &HyperbolicityCertificate<T>, lambda: T, k: usize) -> T {
    if lambda.is_zero() {
        return T::zero();
    }
    let ell = cert.inv_norm / (T::one() - cert.inv_norm * lambda);
    let mut acc = T::zero();
    let mut partial = T::zero();
    let mut ell_pow = T::one();
    let mut t_pow = T::one();
    for _ in 0..k {
        partial = partial + ell_pow;
        acc = acc + t_pow * partial;
        ell_pow = ell_pow * ell;
        t_pow = t_pow * cert.t;
    }
    cert.a * cert.b * lambda * acc
}
