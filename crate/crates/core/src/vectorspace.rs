//! State-space vectors and sup-norm arithmetic.
//!
//! Two families are supported: dense vectors of `ℝⁿ` and finitely supported
//! bilateral sequences indexed by `ℤ`. Both carry the supremum norm.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::de::{self, Deserializer};
use serde::ser::{SerializeMap, SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Inline storage for dense vectors; low dimensions never touch the heap.
pub type DenseStorage<T> = SmallVec<[T; 4]>;

/// Which concrete space a vector (or an operator, or a map) lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpaceFamily {
    Dense(usize),
    Sparse,
}

impl fmt::Display for SpaceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceFamily::Dense(n) => write!(f, "dense(ℝ^{n})"),
            SpaceFamily::Sparse => write!(f, "sparse bilateral"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Vector<T> {
    Dense(DenseStorage<T>),
    /// Finitely supported bilateral sequence. Never stores an exact zero.
    SparseBilateral(BTreeMap<i64, T>),
}

impl<T: Scalar> Vector<T> {
    pub fn dense<I: IntoIterator<Item = T>>(values: I) -> Self {
        Vector::Dense(values.into_iter().collect())
    }

    /// Builds a sparse vector, dropping exact zeros.
    pub fn sparse<I: IntoIterator<Item = (i64, T)>>(entries: I) -> Self {
        let mut map = BTreeMap::new();
        for (i, v) in entries {
            let slot = map.entry(i).or_insert_with(T::zero);
            *slot = *slot + v;
        }
        map.retain(|_, v| !v.is_zero());
        Vector::SparseBilateral(map)
    }

    pub fn zero(family: SpaceFamily) -> Self {
        match family {
            SpaceFamily::Dense(n) => Vector::Dense(SmallVec::from_elem(T::zero(), n)),
            SpaceFamily::Sparse => Vector::SparseBilateral(BTreeMap::new()),
        }
    }

    /// The `i`-th standard basis vector. For dense vectors `i` must lie in `0..n`.
    pub fn basis(family: SpaceFamily, i: i64) -> Self {
        match family {
            SpaceFamily::Dense(n) => {
                let mut v = SmallVec::from_elem(T::zero(), n);
                v[i as usize] = T::one();
                Vector::Dense(v)
            }
            SpaceFamily::Sparse => Vector::sparse([(i, T::one())]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Vector::zero(self.family())
    }

    pub fn family(&self) -> SpaceFamily {
        match self {
            Vector::Dense(v) => SpaceFamily::Dense(v.len()),
            Vector::SparseBilateral(_) => SpaceFamily::Sparse,
        }
    }

    /// Entry at index `i` (zero outside the stored range).
    pub fn get(&self, i: i64) -> T {
        match self {
            Vector::Dense(v) => {
                if i < 0 {
                    T::zero()
                } else {
                    v.get(i as usize).copied().unwrap_or_else(T::zero)
                }
            }
            Vector::SparseBilateral(m) => m.get(&i).copied().unwrap_or_else(T::zero),
        }
    }

    /// `max |xᵢ|`, NaN if any entry is NaN.
    pub fn sup_norm(&self) -> T {
        let fold = |acc: T, v: &T| if acc.is_nan() || v.is_nan() { T::nan() } else { acc.max(v.abs()) };
        match self {
            Vector::Dense(v) => v.iter().fold(T::zero(), fold),
            Vector::SparseBilateral(m) => m.values().fold(T::zero(), fold),
        }
    }

    /// Indices carrying a nonzero entry.
    pub fn support(&self) -> BTreeSet<i64> {
        match self {
            Vector::Dense(v) => v
                .iter()
                .enumerate()
                .filter(|(_, x)| !x.is_zero())
                .map(|(i, _)| i as i64)
                .collect(),
            Vector::SparseBilateral(m) => m.keys().copied().collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Vector::Dense(v) => v.iter().all(|x| x.is_zero()),
            Vector::SparseBilateral(m) => m.is_empty(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Vector::Dense(v) => v.iter().all(|x| x.is_finite()),
            Vector::SparseBilateral(m) => m.values().all(|x| x.is_finite()),
        }
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        match (self.family(), other.family()) {
            (a, b) if a == b => Ok(()),
            (a, b) => Err(Error::Incompatible(format!("{a} vs {b}"))),
        }
    }

    /// `αx + βy`, checking that both operands live in the same space.
    pub fn linear_combine(alpha: T, x: &Self, beta: T, y: &Self) -> Result<Self> {
        x.check_compatible(y)?;
        Ok(x.combined(alpha, y, beta))
    }

    /// `αself + βother` without the compatibility check.
    ///
    /// # Panics
    /// On mixed families or dimensions.
    pub fn combined(&self, alpha: T, other: &Self, beta: T) -> Self {
        match (self, other) {
            (Vector::Dense(a), Vector::Dense(b)) => {
                assert_eq!(a.len(), b.len(), "dense dimension mismatch");
                Vector::Dense(
                    a.iter()
                        .zip(b.iter())
                        .map(|(&x, &y)| alpha * x + beta * y)
                        .collect(),
                )
            }
            (Vector::SparseBilateral(a), Vector::SparseBilateral(b)) => {
                let mut out = BTreeMap::new();
                for (&i, &x) in a {
                    out.insert(i, alpha * x);
                }
                for (&i, &y) in b {
                    let slot = out.entry(i).or_insert_with(T::zero);
                    *slot = *slot + beta * y;
                }
                out.retain(|_, v| !v.is_zero());
                Vector::SparseBilateral(out)
            }
            _ => panic!("cannot combine dense and sparse vectors"),
        }
    }

    pub fn scaled(&self, alpha: T) -> Self {
        self.map_entries(|v| alpha * v)
    }

    /// Applies `f` entrywise. Sparse results drop exact zeros.
    pub fn map_entries(&self, f: impl Fn(T) -> T) -> Self {
        match self {
            Vector::Dense(v) => Vector::Dense(v.iter().map(|&x| f(x)).collect()),
            Vector::SparseBilateral(m) => {
                let mut out: BTreeMap<i64, T> = m.iter().map(|(&i, &x)| (i, f(x))).collect();
                out.retain(|_, v| !v.is_zero());
                Vector::SparseBilateral(out)
            }
        }
    }

    /// Drops sparse entries with `|v| ≤ eta` and returns the sup norm of the
    /// removed part. Dense vectors are left untouched.
    pub fn prune_below(&mut self, eta: T) -> T {
        match self {
            Vector::Dense(_) => T::zero(),
            Vector::SparseBilateral(m) => {
                let mut dropped = T::zero();
                m.retain(|_, v| {
                    let keep = v.abs() > eta;
                    if !keep {
                        dropped = dropped.max(v.abs());
                    }
                    keep
                });
                dropped
            }
        }
    }

    /// Sup-norm distance `‖self − other‖`.
    pub fn distance(&self, other: &Self) -> T {
        (self - other).sup_norm()
    }

    /// Entries as `(index, value)` pairs, including dense zeros.
    pub fn entries(&self) -> Vec<(i64, T)> {
        match self {
            Vector::Dense(v) => v.iter().enumerate().map(|(i, &x)| (i as i64, x)).collect(),
            Vector::SparseBilateral(m) => m.iter().map(|(&i, &x)| (i, x)).collect(),
        }
    }

    /// Exact bit representation, used as a memo key component.
    pub fn key_bits(&self) -> Vec<u64> {
        match self {
            Vector::Dense(v) => v.iter().map(|x| x.key_bits()).collect(),
            Vector::SparseBilateral(m) => m
                .iter()
                .flat_map(|(&i, x)| [i as u64, x.key_bits()])
                .collect(),
        }
    }
}

impl<T: Scalar> Add for &Vector<T> {
    type Output = Vector<T>;

    fn add(self, rhs: Self) -> Vector<T> {
        self.combined(T::one(), rhs, T::one())
    }
}

impl<T: Scalar> Sub for &Vector<T> {
    type Output = Vector<T>;

    fn sub(self, rhs: Self) -> Vector<T> {
        self.combined(T::one(), rhs, -T::one())
    }
}

impl<T: Scalar> Neg for &Vector<T> {
    type Output = Vector<T>;

    fn neg(self) -> Vector<T> {
        self.scaled(-T::one())
    }
}

impl<T: Scalar> Serialize for Vector<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Vector::Dense(v) => {
                let mut seq = serializer.serialize_seq(Some(v.len()))?;
                for x in v {
                    seq.serialize_element(&x.as_f64())?;
                }
                seq.end()
            }
            Vector::SparseBilateral(m) => {
                let mut map = serializer.serialize_map(Some(m.len()))?;
                for (i, x) in m {
                    map.serialize_entry(&i.to_string(), &x.as_f64())?;
                }
                map.end()
            }
        }
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Vector<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Dense(Vec<f64>),
            Sparse(BTreeMap<String, f64>),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Dense(v) => Ok(Vector::dense(v.into_iter().map(T::of))),
            Repr::Sparse(m) => {
                let mut entries = Vec::with_capacity(m.len());
                for (k, v) in m {
                    let i: i64 = k
                        .trim()
                        .parse()
                        .map_err(|_| de::Error::custom(format!("bad sparse index `{k}`")))?;
                    entries.push((i, T::of(v)));
                }
                Ok(Vector::sparse(entries))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(v: &[f64]) -> Vector<f64> {
        Vector::dense(v.iter().copied())
    }

    #[test]
    fn combine_examples() {
        let sum = Vector::linear_combine(1.0, &d(&[1.0, 2.0]), 1.0, &d(&[3.0, 4.0])).unwrap();
        assert_eq!(sum, d(&[4.0, 6.0]));

        let e0 = Vector::sparse([(0, 1.0)]);
        let cancel = Vector::linear_combine(2.0, &e0, -2.0, &e0).unwrap();
        assert_eq!(cancel, Vector::sparse([]));
        assert!(cancel.support().is_empty());

        let id = Vector::linear_combine(1.0, &d(&[1.0, 0.0]), 0.0, &d(&[5.0, 5.0])).unwrap();
        assert_eq!(id, d(&[1.0, 0.0]));
    }

    #[test]
    fn combine_rejects_mixed_spaces() {
        assert!(Vector::linear_combine(1.0, &d(&[1.0]), 1.0, &d(&[1.0, 2.0])).is_err());
        let s = Vector::sparse([(0, 1.0)]);
        assert!(Vector::linear_combine(1.0, &d(&[1.0]), 1.0, &s).is_err());
    }

    #[test]
    fn norms_and_supports() {
        assert_eq!(d(&[3.0, -4.0]).sup_norm(), 4.0);
        assert_eq!(Vector::sparse([(0, 1.0), (5, -2.0)]).sup_norm(), 2.0);
        assert_eq!(Vector::<f64>::sparse([]).sup_norm(), 0.0);

        let s = Vector::sparse([(-2, 1.0), (3, 0.5)]);
        assert_eq!(s.support().into_iter().collect::<Vec<_>>(), vec![-2, 3]);
        assert!(d(&[0.0, 0.0]).support().is_empty());
        assert_eq!(
            Vector::sparse([(0, 1.0)]).support().into_iter().collect::<Vec<_>>(),
            vec![0]
        );
    }

    #[test]
    fn sparse_never_stores_zero() {
        let v = Vector::sparse([(1, 0.0), (2, 1.5), (2, -1.5), (4, 2.0)]);
        assert_eq!(v, Vector::sparse([(4, 2.0)]));
        if let Vector::SparseBilateral(m) = v.scaled(0.0) {
            assert!(m.is_empty());
        }
    }

    #[test]
    fn json_shapes() {
        let dv = d(&[1.0, -0.5]);
        assert_eq!(serde_json::to_string(&dv).unwrap(), "[1.0,-0.5]");
        let sv = Vector::sparse([(-1, 0.5), (2, 1.0)]);
        let js = serde_json::to_string(&sv).unwrap();
        assert_eq!(js, r#"{"-1":0.5,"2":1.0}"#);
        let back: Vector<f64> = serde_json::from_str(&js).unwrap();
        assert_eq!(back, sv);
    }

    fn dense3() -> impl Strategy<Value = Vector<f64>> {
        prop::collection::vec(-1e3..1e3f64, 3).prop_map(Vector::dense)
    }

    fn sparse_vec() -> impl Strategy<Value = Vector<f64>> {
        prop::collection::btree_map(-20i64..20, -1e3..1e3f64, 0..8).prop_map(Vector::sparse)
    }

    proptest! {
        #[test]
        fn triangle_inequality_dense(x in dense3(), y in dense3()) {
            let s = Vector::linear_combine(1.0, &x, 1.0, &y).unwrap();
            prop_assert!(s.sup_norm() <= x.sup_norm() + y.sup_norm());
        }

        #[test]
        fn triangle_inequality_sparse(x in sparse_vec(), y in sparse_vec()) {
            let s = Vector::linear_combine(1.0, &x, 1.0, &y).unwrap();
            prop_assert!(s.sup_norm() <= x.sup_norm() + y.sup_norm());
        }

        #[test]
        fn homogeneity(x in sparse_vec(), alpha in -8.0..8.0f64) {
            // rounding is monotone, so the maximum entry rounds identically
            prop_assert_eq!(x.scaled(alpha).sup_norm(), alpha.abs() * x.sup_norm());
        }

        #[test]
        fn sparse_addition_keeps_every_index(x in sparse_vec(), y in sparse_vec()) {
            let s = &x + &y;
            for i in x.support().union(&y.support()) {
                prop_assert_eq!(s.get(*i), x.get(*i) + y.get(*i));
            }
        }
    }
}
