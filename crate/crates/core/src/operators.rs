//! Invertible operators with a generalized hyperbolic splitting `X = M ⊕ N`,
//! and certification of their decay constants.
//!
//! A certificate `(a, t, b, ‖T⁻¹‖)` guarantees for every `n ≥ 0`
//!
//! ```text
//! ‖Tⁿ y‖ ≤ a tⁿ ‖y‖  (y ∈ M),     ‖T⁻ⁿ z‖ ≤ a tⁿ ‖z‖  (z ∈ N),
//! ```
//!
//! and `b ≥ max(‖P_M‖, ‖P_N‖)`. Certification finds the least `n₀ ≥ 1` with
//! both restricted power norms below `t^{n₀}` and takes `a` from the finite
//! prefix `r < n₀`; submultiplicativity extends the bound to all `n`.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::vectorspace::{SpaceFamily, Vector};

/// Power horizon used when certifying.
pub const DEFAULT_HORIZON: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockModel<T> {
    stable_dim: usize,
    basis: Matrix<T>,
    basis_inv: Matrix<T>,
    stable: Matrix<T>,
    unstable_inv: Matrix<T>,
    forward: Matrix<T>,
    inverse: Option<Matrix<T>>,
    proj_m: Matrix<T>,
    proj_n: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorModel<T> {
    /// `T(x)ᵢ = wᵢ xᵢ` on `ℝⁿ`.
    Diagonal { weights: Vec<T> },
    /// `T = P·diag(A_M, A_N)·P⁻¹` on `ℝⁿ`.
    Block(Box<BlockModel<T>>),
    /// Bilateral weighted backward shift `T(x)ₙ = wₙ xₙ₋₁` with
    /// `wₙ = λ₋` for `n ≤ m₀` and `wₙ = λ₊` for `n > m₀`.
    Shift {
        lambda_minus: T,
        lambda_plus: T,
        split: i64,
    },
}

/// An invertible operator together with its splitting and projections.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitOperator<T> {
    model: OperatorModel<T>,
}

/// Constants `(a, t, b, ‖T⁻¹‖)` plus the certifying horizon `n₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityCertificate<T> {
    pub a: T,
    pub t: T,
    pub b: T,
    pub inv_norm: T,
    pub n0: usize,
}

/// How the decay rate `t` is chosen during certification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateChoice<T> {
    Fixed(T),
    Auto,
}

pub fn make_diagonal_operator<T: Scalar>(weights: &[T]) -> Result<SplitOperator<T>> {
    if weights.is_empty() {
        return Err(invalid("weights", "at least one weight is required"));
    }
    for (i, w) in weights.iter().enumerate() {
        if !w.is_finite() || w.is_zero() {
            return Err(invalid("weights", format!("weight {i} must be finite and nonzero")));
        }
        if w.abs() == T::one() {
            return Err(Error::NotHyperbolicCoordinate(i));
        }
    }
    Ok(SplitOperator {
        model: OperatorModel::Diagonal {
            weights: weights.to_vec(),
        },
    })
}

/// Builds `P·diag(A_M, A_N)·P⁻¹` and checks that it certifies.
pub fn make_block_operator<T: Scalar>(
    basis: &Matrix<T>,
    stable: &Matrix<T>,
    unstable: &Matrix<T>,
) -> Result<SplitOperator<T>> {
    if !basis.is_square() || !stable.is_square() || !unstable.is_square() {
        return Err(invalid("block", "P, A_M and A_N must be square"));
    }
    let n = basis.rows();
    let k = stable.rows();
    if k + unstable.rows() != n {
        return Err(invalid(
            "block",
            format!("dim A_M + dim A_N = {} but P is {n}×{n}", k + unstable.rows()),
        ));
    }
    let basis_inv = basis
        .inverse()
        .ok_or_else(|| Error::Singular("basis change P".into()))?;
    let unstable_inv = unstable.inverse().ok_or_else(|| {
        Error::NotCertifiable("unstable block A_N is singular, so ρ(A_N⁻¹) < 1 fails".into())
    })?;
    let conj = |d: &Matrix<T>| basis.mul(d).mul(&basis_inv);
    let zero_m = Matrix::zeros(k, k);
    let zero_n = Matrix::zeros(n - k, n - k);
    let forward = conj(&Matrix::block_diag(stable, unstable));
    let inverse = stable
        .inverse()
        .map(|s| conj(&Matrix::block_diag(&s, &unstable_inv)));
    let proj_m = conj(&Matrix::block_diag(&Matrix::identity(k), &zero_n));
    let proj_n = conj(&Matrix::block_diag(&zero_m, &Matrix::identity(n - k)));
    let op = SplitOperator {
        model: OperatorModel::Block(Box::new(BlockModel {
            stable_dim: k,
            basis: basis.clone(),
            basis_inv,
            stable: stable.clone(),
            unstable_inv,
            forward,
            inverse,
            proj_m,
            proj_n,
        })),
    };
    certify_constants(&op, RateChoice::Auto)?;
    Ok(op)
}

pub fn make_weighted_shift<T: Scalar>(
    lambda_minus: T,
    lambda_plus: T,
    split: i64,
) -> Result<SplitOperator<T>> {
    if !lambda_minus.is_finite() || lambda_minus.abs() <= T::one() {
        return Err(invalid("lambda_minus", "need |λ₋| > 1"));
    }
    if !lambda_plus.is_finite() || lambda_plus.is_zero() || lambda_plus.abs() >= T::one() {
        return Err(invalid("lambda_plus", "need 0 < |λ₊| < 1"));
    }
    Ok(SplitOperator {
        model: OperatorModel::Shift {
            lambda_minus,
            lambda_plus,
            split,
        },
    })
}

fn dense_slice<T: Scalar>(x: &Vector<T>, n: usize) -> &[T] {
    match x {
        Vector::Dense(v) if v.len() == n => v,
        other => panic!(
            "operator on ℝ^{n} applied to a vector of {}",
            other.family()
        ),
    }
}

fn sparse_map<T: Scalar>(x: &Vector<T>) -> &std::collections::BTreeMap<i64, T> {
    match x {
        Vector::SparseBilateral(m) => m,
        other => panic!("shift operator applied to a vector of {}", other.family()),
    }
}

impl<T: Scalar> SplitOperator<T> {
    pub fn model(&self) -> &OperatorModel<T> {
        &self.model
    }

    pub fn kind(&self) -> &'static str {
        match self.model {
            OperatorModel::Diagonal { .. } => "diagonal",
            OperatorModel::Block(_) => "block",
            OperatorModel::Shift { .. } => "shift",
        }
    }

    pub fn family(&self) -> SpaceFamily {
        match &self.model {
            OperatorModel::Diagonal { weights } => SpaceFamily::Dense(weights.len()),
            OperatorModel::Block(b) => SpaceFamily::Dense(b.forward.rows()),
            OperatorModel::Shift { .. } => SpaceFamily::Sparse,
        }
    }

    /// Finite-dimensional splittings are hyperbolic; the shift is not
    /// (`e_{m₀} ∈ M ∩ T(N)`).
    pub fn is_hyperbolic(&self) -> bool {
        !matches!(self.model, OperatorModel::Shift { .. })
    }

    /// Whether `M` and `N` are spanned by coordinate vectors, so that
    /// dropping entries keeps vectors inside them.
    pub fn is_coordinate_split(&self) -> bool {
        !matches!(self.model, OperatorModel::Block(_))
    }

    /// Re-projects a vector that should lie in `M`. Without a coordinate
    /// split, round-off leaks into `N` where `T` amplifies it.
    pub(crate) fn settle_m(&self, x: Vector<T>) -> Vector<T> {
        if self.is_coordinate_split() {
            x
        } else {
            self.proj_m(&x)
        }
    }

    /// Same as [`Self::settle_m`] for vectors in `N`, where `T⁻¹` amplifies `M`-components.
    pub(crate) fn settle_n(&self, x: Vector<T>) -> Vector<T> {
        if self.is_coordinate_split() {
            x
        } else {
            self.proj_n(&x)
        }
    }

    pub fn is_invertible(&self) -> bool {
        match &self.model {
            OperatorModel::Block(b) => b.inverse.is_some(),
            _ => true,
        }
    }

    fn shift_weight(lambda_minus: T, lambda_plus: T, split: i64, n: i64) -> T {
        if n <= split {
            lambda_minus
        } else {
            lambda_plus
        }
    }

    pub fn apply(&self, x: &Vector<T>) -> Vector<T> {
        match &self.model {
            OperatorModel::Diagonal { weights } => {
                let v = dense_slice(x, weights.len());
                Vector::Dense(v.iter().zip(weights).map(|(&a, &w)| a * w).collect())
            }
            OperatorModel::Block(b) => {
                let v = dense_slice(x, b.forward.rows());
                Vector::Dense(SmallVec::from_vec(b.forward.mul_slice(v)))
            }
            &OperatorModel::Shift {
                lambda_minus,
                lambda_plus,
                split,
            } => Vector::sparse(sparse_map(x).iter().map(|(&k, &v)| {
                (k + 1, Self::shift_weight(lambda_minus, lambda_plus, split, k + 1) * v)
            })),
        }
    }

    pub fn apply_inverse(&self, x: &Vector<T>) -> Result<Vector<T>> {
        Ok(match &self.model {
            OperatorModel::Diagonal { weights } => {
                let v = dense_slice(x, weights.len());
                Vector::Dense(v.iter().zip(weights).map(|(&a, &w)| a / w).collect())
            }
            OperatorModel::Block(b) => {
                let inv = b.inverse.as_ref().ok_or(Error::NotInvertible)?;
                let v = dense_slice(x, inv.rows());
                Vector::Dense(SmallVec::from_vec(inv.mul_slice(v)))
            }
            &OperatorModel::Shift {
                lambda_minus,
                lambda_plus,
                split,
            } => Vector::sparse(sparse_map(x).iter().map(|(&k, &v)| {
                (k - 1, v / Self::shift_weight(lambda_minus, lambda_plus, split, k))
            })),
        })
    }

    /// `Tⁿ(x)` for any integer `n`.
    pub fn power(&self, x: &Vector<T>, n: i64) -> Result<Vector<T>> {
        let mut y = x.clone();
        if n >= 0 {
            for _ in 0..n {
                y = self.apply(&y);
            }
        } else {
            for _ in 0..(-n) {
                y = self.apply_inverse(&y)?;
            }
        }
        Ok(y)
    }

    pub fn proj_m(&self, x: &Vector<T>) -> Vector<T> {
        match &self.model {
            OperatorModel::Diagonal { weights } => {
                let v = dense_slice(x, weights.len());
                Vector::Dense(
                    v.iter()
                        .zip(weights)
                        .map(|(&a, w)| if w.abs() < T::one() { a } else { T::zero() })
                        .collect(),
                )
            }
            OperatorModel::Block(b) => {
                let v = dense_slice(x, b.proj_m.rows());
                Vector::Dense(SmallVec::from_vec(b.proj_m.mul_slice(v)))
            }
            &OperatorModel::Shift { split, .. } => Vector::SparseBilateral(
                sparse_map(x).range(split..).map(|(&k, &v)| (k, v)).collect(),
            ),
        }
    }

    pub fn proj_n(&self, x: &Vector<T>) -> Vector<T> {
        match &self.model {
            OperatorModel::Diagonal { weights } => {
                let v = dense_slice(x, weights.len());
                Vector::Dense(
                    v.iter()
                        .zip(weights)
                        .map(|(&a, w)| if w.abs() > T::one() { a } else { T::zero() })
                        .collect(),
                )
            }
            OperatorModel::Block(b) => {
                let v = dense_slice(x, b.proj_n.rows());
                Vector::Dense(SmallVec::from_vec(b.proj_n.mul_slice(v)))
            }
            &OperatorModel::Shift { split, .. } => Vector::SparseBilateral(
                sparse_map(x).range(..split).map(|(&k, &v)| (k, v)).collect(),
            ),
        }
    }

    /// `(‖P_M‖, ‖P_N‖)`, exact in the sup norm.
    pub fn projection_norms(&self) -> (T, T) {
        match &self.model {
            OperatorModel::Diagonal { weights } => {
                let has = |f: &dyn Fn(T) -> bool| {
                    if weights.iter().any(|&w| f(w.abs())) {
                        T::one()
                    } else {
                        T::zero()
                    }
                };
                (has(&|w| w < T::one()), has(&|w| w > T::one()))
            }
            OperatorModel::Block(b) => (b.proj_m.row_sum_norm(), b.proj_n.row_sum_norm()),
            OperatorModel::Shift { .. } => (T::one(), T::one()),
        }
    }

    pub fn has_stable_part(&self) -> bool {
        !self.projection_norms().0.is_zero()
    }

    pub fn has_unstable_part(&self) -> bool {
        !self.projection_norms().1.is_zero()
    }

    /// `‖T‖` in the sup norm.
    pub fn norm(&self) -> T {
        match &self.model {
            OperatorModel::Diagonal { weights } => {
                weights.iter().fold(T::zero(), |m, w| m.max(w.abs()))
            }
            OperatorModel::Block(b) => b.forward.row_sum_norm(),
            OperatorModel::Shift {
                lambda_minus,
                lambda_plus,
                ..
            } => lambda_minus.abs().max(lambda_plus.abs()),
        }
    }

    /// `‖T⁻¹‖`, or `+∞` when the operator is not invertible.
    pub fn inverse_norm(&self) -> T {
        match &self.model {
            OperatorModel::Diagonal { weights } => weights
                .iter()
                .fold(T::zero(), |m, w| m.max(T::one() / w.abs())),
            OperatorModel::Block(b) => b
                .inverse
                .as_ref()
                .map_or(T::infinity(), Matrix::row_sum_norm),
            OperatorModel::Shift {
                lambda_minus,
                lambda_plus,
                ..
            } => (T::one() / lambda_minus.abs()).max(T::one() / lambda_plus.abs()),
        }
    }

    /// Upper bounds on `‖Tⁿ|_M‖` and `‖T⁻ⁿ|_N‖` for `n = 0..=horizon`.
    ///
    /// Diagonal and shift models are analytic. Block models use the exact
    /// row-sum norms of `TⁿP_M` and `T⁻ⁿP_N`, which dominate the restricted
    /// norms and are submultiplicative because `T` commutes with both projections.
    pub fn restricted_power_norms(&self, horizon: usize) -> (Vec<T>, Vec<T>) {
        let mut stable = Vec::with_capacity(horizon + 1);
        let mut unstable = Vec::with_capacity(horizon + 1);
        match &self.model {
            OperatorModel::Diagonal { weights } => {
                let rate = |pred: &dyn Fn(T) -> bool, f: &dyn Fn(T) -> T| {
                    weights
                        .iter()
                        .map(|w| w.abs())
                        .filter(|&w| pred(w))
                        .map(f)
                        .fold(None, |m: Option<T>, r| Some(m.map_or(r, |m| m.max(r))))
                };
                let rs = rate(&|w| w < T::one(), &|w| w);
                let ru = rate(&|w| w > T::one(), &|w| T::one() / w);
                for n in 0..=horizon {
                    stable.push(rs.map_or(T::zero(), |r| r.powi(n as i32)));
                    unstable.push(ru.map_or(T::zero(), |r| r.powi(n as i32)));
                }
            }
            OperatorModel::Block(b) => {
                let k = b.stable_dim;
                let n = b.basis.rows();
                let zero_m = Matrix::zeros(k, k);
                let zero_n = Matrix::zeros(n - k, n - k);
                let conj = |d: &Matrix<T>| b.basis.mul(d).mul(&b.basis_inv).row_sum_norm();
                let mut sp = Matrix::identity(k);
                let mut up = Matrix::identity(n - k);
                for _ in 0..=horizon {
                    stable.push(conj(&Matrix::block_diag(&sp, &zero_n)));
                    unstable.push(conj(&Matrix::block_diag(&zero_m, &up)));
                    sp = sp.mul(&b.stable);
                    up = up.mul(&b.unstable_inv);
                }
            }
            OperatorModel::Shift {
                lambda_minus,
                lambda_plus,
                ..
            } => {
                for n in 0..=horizon {
                    stable.push(lambda_plus.abs().powi(n as i32));
                    unstable.push((T::one() / lambda_minus.abs()).powi(n as i32));
                }
            }
        }
        (stable, unstable)
    }
}

fn certify_with_rate<T: Scalar>(
    stable: &[T],
    unstable: &[T],
    t: T,
    b: T,
    inv_norm: T,
) -> Option<HyperbolicityCertificate<T>> {
    let horizon = stable.len() - 1;
    let n0 = (1..=horizon)
        .take_while(|&n| t.powi(n as i32) >= T::min_positive_value())
        .find(|&n| {
            let tn = t.powi(n as i32);
            stable[n] <= tn && unstable[n] <= tn
        })?;
    let a = (0..n0)
        .map(|r| stable[r].max(unstable[r]) / t.powi(r as i32))
        .fold(T::one(), T::max);
    Some(HyperbolicityCertificate {
        a,
        t,
        b,
        inv_norm,
        n0,
    })
}

/// Gelfand-style estimate of the spectral radii of `T|_M` and `T⁻¹|_N`:
/// `min_n ‖·ⁿ‖^{1/n}`, ignoring underflowed powers.
pub fn spectral_radius_estimate<T: Scalar>(stable: &[T], unstable: &[T]) -> T {
    let side = |seq: &[T]| {
        if seq.iter().skip(1).all(|v| v.is_zero()) {
            return T::zero();
        }
        seq.iter()
            .enumerate()
            .skip(1)
            .filter(|(_, v)| **v >= T::min_positive_value())
            .map(|(n, v)| v.powf(T::one() / T::of(n as f64)))
            .fold(T::infinity(), T::min)
    };
    side(stable).max(side(unstable))
}

pub fn certify_constants<T: Scalar>(
    op: &SplitOperator<T>,
    rate: RateChoice<T>,
) -> Result<HyperbolicityCertificate<T>> {
    certify_constants_with_horizon(op, rate, DEFAULT_HORIZON)
}

pub fn certify_constants_with_horizon<T: Scalar>(
    op: &SplitOperator<T>,
    rate: RateChoice<T>,
    horizon: usize,
) -> Result<HyperbolicityCertificate<T>> {
    if horizon == 0 {
        return Err(invalid("horizon", "must be positive"));
    }
    let (stable, unstable) = op.restricted_power_norms(horizon);
    let (bm, bn) = op.projection_norms();
    let b = bm.max(bn).max(T::one());
    let inv_norm = op.inverse_norm();
    match rate {
        RateChoice::Fixed(t) => {
            if !(t > T::zero() && t < T::one()) {
                return Err(invalid("t", "must lie in (0, 1)"));
            }
            certify_with_rate(&stable, &unstable, t, b, inv_norm).ok_or_else(|| {
                Error::NotCertifiable(format!("no n ≤ {horizon} with restricted norms ≤ tⁿ at t = {t}"))
            })
        }
        RateChoice::Auto => {
            let rho = spectral_radius_estimate(&stable, &unstable);
            if !(rho < T::one()) {
                return Err(Error::NotCertifiable(format!(
                    "spectral radius estimate {rho} is not below 1"
                )));
            }
            (1..10)
                .map(|s| {
                    let s = T::of(f64::from(s) / 10.0);
                    rho + s * (T::one() - rho)
                })
                .find_map(|t| certify_with_rate(&stable, &unstable, t, b, inv_norm))
                .ok_or_else(|| {
                    Error::NotCertifiable(format!("no rate t < 1 certifies within horizon {horizon}"))
                })
        }
    }
}

fn check_delta<T: Scalar>(delta: T) -> Result<()> {
    if delta > T::zero() && delta < T::one() {
        Ok(())
    } else {
        Err(invalid("delta", "must lie in (0, 1)"))
    }
}

/// `ε = min{(1−t)/(a b (1+t)), 1/‖T⁻¹‖}·δ`.
pub fn epsilon_threshold<T: Scalar>(cert: &HyperbolicityCertificate<T>, delta: T) -> Result<T> {
    check_delta(delta)?;
    let one = T::one();
    let decay = (one - cert.t) / (cert.a * cert.b * (one + cert.t));
    Ok(decay.min(one / cert.inv_norm) * delta)
}

/// `C = a b (1+t)/(1−t)`, the bound on `‖Ψ⁻¹‖` and the absolute-stability constant.
pub fn franks_constant<T: Scalar>(cert: &HyperbolicityCertificate<T>) -> T {
    cert.a * cert.b * (T::one() + cert.t) / (T::one() - cert.t)
}

/// `2ab(1+t)/((1−δ)(1−t))`, the Lipschitz constant of `𝓛 ↦ h_𝓛`. Independent of `p`.
pub fn correspondence_lip_constant<T: Scalar>(
    cert: &HyperbolicityCertificate<T>,
    delta: T,
) -> Result<T> {
    check_delta(delta)?;
    Ok(T::of(2.0) * franks_constant(cert) / (T::one() - delta))
}
