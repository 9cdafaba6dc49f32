//! The product `X̃ = X × ℤ_p` with the lifted maps `T̃`, `S` and the
//! function spaces `𝓕` (fiber preserving) and `𝓖` (fiber advancing).

use std::fmt;
use std::sync::Arc;

use dashmap::DashMap;

use crate::error::Result;
use crate::operators::SplitOperator;
use crate::perturbations::{invert_perturbed, invert_perturbed_point, PerturbationTuple};
use crate::scalar::Scalar;
use crate::vectorspace::Vector;

#[derive(Debug, Clone, PartialEq)]
pub struct TorusPoint<T> {
    pub x: Vector<T>,
    pub j: usize,
}

impl<T: Scalar> TorusPoint<T> {
    /// Reduces `j` modulo `p`.
    pub fn new(x: Vector<T>, j: i64, p: usize) -> Self {
        assert!(p > 0, "p must be positive");
        Self {
            x,
            j: j.rem_euclid(p as i64) as usize,
        }
    }
}

fn advance(j: usize, by: i64, p: usize) -> usize {
    (j as i64 + by).rem_euclid(p as i64) as usize
}

/// `T̃(x, j) = (T x, j + 1)`.
pub fn torus_t<T: Scalar>(op: &SplitOperator<T>, pt: &TorusPoint<T>, p: usize) -> TorusPoint<T> {
    TorusPoint {
        x: op.apply(&pt.x),
        j: advance(pt.j, 1, p),
    }
}

/// `T̃⁻¹(x, j) = (T⁻¹ x, j − 1)`.
pub fn torus_t_inv<T: Scalar>(op: &SplitOperator<T>, pt: &TorusPoint<T>, p: usize) -> Result<TorusPoint<T>> {
    Ok(TorusPoint {
        x: op.apply_inverse(&pt.x)?,
        j: advance(pt.j, -1, p),
    })
}

/// `S_j(x) = T x + L_j(x)`.
pub fn perturbed_apply<T: Scalar>(
    op: &SplitOperator<T>,
    tuple: &PerturbationTuple<T>,
    x: &Vector<T>,
    j: usize,
) -> Vector<T> {
    let l = tuple.get(j as i64);
    if l.is_zero_map() {
        op.apply(x)
    } else {
        &op.apply(x) + &l.eval(x)
    }
}

/// `S(x, j) = (S_j x, j + 1)`.
pub fn torus_s<T: Scalar>(
    op: &SplitOperator<T>,
    tuple: &PerturbationTuple<T>,
    pt: &TorusPoint<T>,
) -> TorusPoint<T> {
    TorusPoint {
        x: perturbed_apply(op, tuple, &pt.x, pt.j),
        j: advance(pt.j, 1, tuple.p()),
    }
}

/// `S⁻¹(x, j) = (S_{j−1}⁻¹ x, j − 1)` with `‖S_{j−1}(result) − x‖ ≤ tol`.
pub fn torus_s_inv<T: Scalar>(
    op: &SplitOperator<T>,
    tuple: &PerturbationTuple<T>,
    pt: &TorusPoint<T>,
    tol: T,
) -> Result<TorusPoint<T>> {
    let j = advance(pt.j, -1, tuple.p());
    Ok(TorusPoint {
        x: invert_perturbed(op, tuple.get(j as i64), &pt.x, tol)?,
        j,
    })
}

/// Like [`torus_s_inv`] but controls the point error `‖result − S⁻¹(pt)‖`
/// and reports the bound achieved.
pub(crate) fn torus_s_inv_point<T: Scalar>(
    op: &SplitOperator<T>,
    tuple: &PerturbationTuple<T>,
    pt: &TorusPoint<T>,
    x_tol: T,
) -> Result<(TorusPoint<T>, T)> {
    let j = advance(pt.j, -1, tuple.p());
    let (x, err) = invert_perturbed_point(op, tuple.get(j as i64), &pt.x, x_tol)?;
    Ok((TorusPoint { x, j }, err))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FunSpace {
    /// `F(X × {j}) ⊂ X × {j}`.
    F,
    /// `F(X × {j}) ⊂ X × {j + 1}`.
    G,
}

type FiberFn<T> = dyn Fn(&Vector<T>, usize) -> Vector<T> + Send + Sync;
type MemoKey = (Vec<u64>, usize, usize);

/// A lazily evaluated element of `𝓕` or `𝓖`, given by its fiber maps.
#[derive(Clone)]
pub struct FunElem<T> {
    space: FunSpace,
    p: usize,
    depth: usize,
    fiber: Arc<FiberFn<T>>,
    memo: Option<Arc<DashMap<MemoKey, Vector<T>>>>,
}

impl<T> fmt::Debug for FunElem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunElem")
            .field("space", &self.space)
            .field("p", &self.p)
            .field("depth", &self.depth)
            .field("memoized", &self.memo.is_some())
            .finish()
    }
}

impl<T: Scalar> FunElem<T> {
    /// `depth` tags the element in memo keys, so successive iterates never collide.
    pub fn new(
        space: FunSpace,
        p: usize,
        depth: usize,
        fiber: impl Fn(&Vector<T>, usize) -> Vector<T> + Send + Sync + 'static,
    ) -> Self {
        assert!(p > 0, "p must be positive");
        Self {
            space,
            p,
            depth,
            fiber: Arc::new(fiber),
            memo: None,
        }
    }

    /// `O_𝓕` or `O_𝓖`.
    pub fn zero(space: FunSpace, p: usize) -> Self {
        Self::new(space, p, 0, |x: &Vector<T>, _| x.zeros_like())
    }

    /// `𝓛̄(x, j) = (L_j(x), j + 1)`.
    pub fn lbar(tuple: &PerturbationTuple<T>) -> Self {
        let tuple = tuple.clone();
        let p = tuple.p();
        Self::new(FunSpace::G, p, 0, move |x, j| tuple.get(j as i64).eval(x))
    }

    pub fn with_memo(mut self) -> Self {
        self.memo = Some(Arc::new(DashMap::new()));
        self
    }

    pub fn space(&self) -> FunSpace {
        self.space
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn memo_len(&self) -> usize {
        self.memo.as_ref().map_or(0, |m| m.len())
    }

    /// The fiber map `f_j`.
    pub fn fiber(&self, x: &Vector<T>, j: usize) -> Vector<T> {
        let j = j % self.p;
        match &self.memo {
            None => (self.fiber)(x, j),
            Some(memo) => {
                let key = (x.key_bits(), j, self.depth);
                if let Some(hit) = memo.get(&key) {
                    return hit.clone();
                }
                let value = (self.fiber)(x, j);
                memo.insert(key, value.clone());
                value
            }
        }
    }

    pub fn eval(&self, pt: &TorusPoint<T>) -> TorusPoint<T> {
        let j = match self.space {
            FunSpace::F => pt.j,
            FunSpace::G => advance(pt.j, 1, self.p),
        };
        TorusPoint {
            x: self.fiber(&pt.x, pt.j),
            j,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::make_diagonal_operator;
    use crate::perturbations::LipMap;
    use crate::vectorspace::SpaceFamily;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(v: f64) -> Vector<f64> {
        Vector::dense([v])
    }

    fn scalar_two() -> SplitOperator<f64> {
        make_diagonal_operator(&[2.0]).unwrap()
    }

    fn consts(cs: &[f64]) -> PerturbationTuple<f64> {
        PerturbationTuple::new(cs.iter().map(|&c| LipMap::constant(s(c)).unwrap()).collect()).unwrap()
    }

    #[test]
    fn point_reduces_fiber() {
        assert_eq!(TorusPoint::new(s(0.0), 5, 2).j, 1);
        assert_eq!(TorusPoint::new(s(0.0), -1, 3).j, 2);
    }

    #[test]
    fn lifted_linear_map() {
        let op = scalar_two();
        let pt = TorusPoint::new(s(1.0), 1, 2);
        assert_eq!(torus_t(&op, &pt, 2), TorusPoint::new(s(2.0), 0, 2));
        assert_eq!(torus_t(&op, &TorusPoint::new(s(1.0), 0, 1), 1).j, 0);
        assert_eq!(
            torus_t_inv(&op, &TorusPoint::new(s(2.0), 0, 2), 2).unwrap(),
            TorusPoint::new(s(1.0), 1, 2)
        );
    }

    #[test]
    fn lifted_perturbed_map() {
        let op = scalar_two();
        let t = consts(&[0.3, 0.0]);
        let one = torus_s(&op, &t, &TorusPoint::new(s(1.0), 0, 2));
        assert_relative_eq!(one.x.get(0), 2.3);
        assert_eq!(one.j, 1);
        let two = torus_s(&op, &t, &one);
        assert_relative_eq!(two.x.get(0), 4.6);
        assert_eq!(two.j, 0);

        let single = consts(&[0.3]);
        let back = torus_s_inv(&op, &single, &TorusPoint::new(s(1.3), 0, 1), 1e-12).unwrap();
        assert_relative_eq!(back.x.get(0), 0.5, epsilon = 1e-12);

        let zero = PerturbationTuple::zero(SpaceFamily::Dense(1), 2).unwrap();
        let pt = TorusPoint::new(s(0.7), 1, 2);
        assert_eq!(torus_s(&op, &zero, &pt), torus_t(&op, &pt, 2));
        assert_eq!(
            torus_s_inv(&op, &zero, &pt, 1e-12).unwrap(),
            torus_t_inv(&op, &pt, 2).unwrap()
        );
    }

    #[test]
    fn fiber_bookkeeping() {
        let op = make_diagonal_operator(&[0.5, 3.0]).unwrap();
        let r2 = SpaceFamily::Dense(2);
        let tuple = PerturbationTuple::new(vec![
            LipMap::sine(r2, 0, 1, 0.1, 1.0).unwrap(),
            LipMap::constant(Vector::dense([0.05, -0.02])).unwrap(),
            LipMap::sine(r2, 1, 0, 0.08, 2.0).unwrap(),
        ])
        .unwrap();
        let zero = PerturbationTuple::zero(r2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = Vector::dense([rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let mut pt = TorusPoint::new(x.clone(), 0, 3);
            let mut lin = pt.clone();
            let mut plain = x.clone();
            for j in 0..3 {
                pt = torus_s(&op, &tuple, &pt);
                lin = torus_s(&op, &zero, &lin);
                plain = &op.apply(&plain) + &tuple.get(j).eval(&plain);
            }
            assert_eq!(pt.j, 0);
            assert_eq!(pt.x, plain);
            assert_eq!(lin.x, op.power(&x, 3).unwrap());

            let mut back = pt.clone();
            for _ in 0..3 {
                let tol = 1e-12;
                let prev = torus_s_inv(&op, &tuple, &back, tol).unwrap();
                assert!(torus_s(&op, &tuple, &prev).x.distance(&back.x) <= tol);
                back = prev;
            }
            assert!(back.x.distance(&x) <= 1e-9);
        }
    }

    #[test]
    fn lbar_and_zero_elements() {
        let tuple = PerturbationTuple::new(vec![LipMap::constant(Vector::dense([0.1, 0.1])).unwrap()]).unwrap();
        let lbar = FunElem::lbar(&tuple);
        let v = lbar.eval(&TorusPoint::new(Vector::dense([5.0, 5.0]), 0, 1));
        assert_eq!(v, TorusPoint::new(Vector::dense([0.1, 0.1]), 0, 1));

        let zero_tuple = PerturbationTuple::zero(SpaceFamily::Dense(1), 2).unwrap();
        let z = FunElem::lbar(&zero_tuple).eval(&TorusPoint::new(s(3.0), 0, 2));
        assert_eq!(z, FunElem::zero(FunSpace::G, 2).eval(&TorusPoint::new(s(3.0), 0, 2)));
        assert_eq!(z.j, 1);
        assert_eq!(FunElem::<f64>::zero(FunSpace::F, 2).eval(&TorusPoint::new(s(3.0), 1, 2)).j, 1);
    }

    #[test]
    fn memo_agrees_bit_for_bit() {
        let f = |x: &Vector<f64>, j: usize| x.map_entries(|v| (v * 1.7 + j as f64).sin() / 3.0);
        let plain = FunElem::new(FunSpace::F, 2, 4, f);
        let memo = FunElem::new(FunSpace::F, 2, 4, f).with_memo();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<_> = (0..30)
            .map(|_| TorusPoint::new(s(rng.gen_range(-3.0..3.0)), rng.gen_range(0..2), 2))
            .collect();
        for _ in 0..2 {
            for pt in &pts {
                let a = plain.eval(pt);
                let b = memo.eval(pt);
                assert_eq!(a.x.key_bits(), b.x.key_bits());
                assert_eq!(a.j, b.j);
            }
        }
        assert_eq!(memo.memo_len(), 30);
    }
}
