//! Bounded Lipschitz perturbations with bounds certified by construction.
//!
//! Every [`LipMap`] is a combinator tree over a few primitives. The sup and
//! Lipschitz bounds are propagated through the tree with the usual calculus,
//! so they hold on the whole space rather than only on samples.

use std::collections::BTreeSet;

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::operators::SplitOperator;
use crate::scalar::{strict_margin, Scalar};
use crate::vectorspace::{SpaceFamily, Vector};

/// Iteration cap for [`invert_perturbed`].
pub const MAX_INVERSION_STEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum LipExpr<T> {
    Zero,
    Const(Vector<T>),
    /// `x ↦ A sin(ω xᵢ) e_target`.
    Sine {
        coord: i64,
        target: i64,
        amplitude: T,
        frequency: T,
    },
    /// `x ↦ B clamp(x, R)`. On bilateral sequences `B` reads entries
    /// `offset..offset+cols` and writes `offset..offset+rows`.
    ClampLinear {
        matrix: Matrix<T>,
        radius: T,
        offset: i64,
    },
    Sum(Vec<LipMap<T>>),
    Scale(T, Box<LipMap<T>>),
    /// `x ↦ f(x + g(x))`.
    Compose(Box<LipMap<T>>, Box<LipMap<T>>),
}

/// A bounded Lipschitz map `X → X`.
#[derive(Debug, Clone, PartialEq)]
pub struct LipMap<T> {
    expr: LipExpr<T>,
    family: SpaceFamily,
    sup_bound: T,
    lip_bound: T,
    reads: BTreeSet<i64>,
    writes: BTreeSet<i64>,
}

fn check_finite<T: Scalar>(name: &'static str, v: T) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, "must be finite"))
    }
}

fn check_index(name: &'static str, family: SpaceFamily, i: i64) -> Result<()> {
    match family {
        SpaceFamily::Dense(n) if i < 0 || i as usize >= n => {
            Err(invalid(name, format!("index {i} out of range for ℝ^{n}")))
        }
        _ => Ok(()),
    }
}

impl<T: Scalar> LipMap<T> {
    pub fn zero(family: SpaceFamily) -> Self {
        Self {
            expr: LipExpr::Zero,
            family,
            sup_bound: T::zero(),
            lip_bound: T::zero(),
            reads: BTreeSet::new(),
            writes: BTreeSet::new(),
        }
    }

    pub fn constant(c: Vector<T>) -> Result<Self> {
        if !c.is_finite() {
            return Err(invalid("c", "entries must be finite"));
        }
        Ok(Self {
            family: c.family(),
            sup_bound: c.sup_norm(),
            lip_bound: T::zero(),
            reads: BTreeSet::new(),
            writes: c.support(),
            expr: LipExpr::Const(c),
        })
    }

    /// `A sin(ω xᵢ)` placed on coordinate `target`.
    pub fn sine(family: SpaceFamily, coord: i64, target: i64, amplitude: T, frequency: T) -> Result<Self> {
        check_finite("A", amplitude)?;
        check_finite("w", frequency)?;
        check_index("i", family, coord)?;
        check_index("target", family, target)?;
        Ok(Self {
            expr: LipExpr::Sine {
                coord,
                target,
                amplitude,
                frequency,
            },
            family,
            sup_bound: amplitude.abs(),
            lip_bound: (amplitude * frequency).abs(),
            reads: [coord].into(),
            writes: [target].into(),
        })
    }

    pub fn clamp_linear(family: SpaceFamily, matrix: Matrix<T>, radius: T, offset: i64) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(invalid("R", "radius must be positive and finite"));
        }
        if (0..matrix.rows()).any(|i| matrix.row(i).iter().any(|v| !v.is_finite())) {
            return Err(invalid("B", "entries must be finite"));
        }
        if let SpaceFamily::Dense(n) = family {
            if matrix.rows() != n || matrix.cols() != n || offset != 0 {
                return Err(invalid("B", format!("must be {n}×{n} with zero offset on ℝ^{n}")));
            }
        }
        let norm = matrix.row_sum_norm();
        Ok(Self {
            family,
            sup_bound: norm * radius,
            lip_bound: norm,
            reads: (offset..offset + matrix.cols() as i64).collect(),
            writes: (offset..offset + matrix.rows() as i64).collect(),
            expr: LipExpr::ClampLinear {
                matrix,
                radius,
                offset,
            },
        })
    }

    pub fn sum(args: Vec<LipMap<T>>) -> Result<Self> {
        let first = args
            .first()
            .ok_or_else(|| invalid("args", "sum needs at least one argument"))?;
        let family = first.family;
        if let Some(bad) = args.iter().find(|m| m.family != family) {
            return Err(Error::Incompatible(format!("{family} vs {}", bad.family)));
        }
        Ok(Self {
            family,
            sup_bound: args.iter().map(|m| m.sup_bound).sum(),
            lip_bound: args.iter().map(|m| m.lip_bound).sum(),
            reads: args.iter().flat_map(|m| m.reads.iter().copied()).collect(),
            writes: args.iter().flat_map(|m| m.writes.iter().copied()).collect(),
            expr: LipExpr::Sum(args),
        })
    }

    pub fn scale(alpha: T, f: LipMap<T>) -> Result<Self> {
        check_finite("alpha", alpha)?;
        if alpha.is_zero() {
            return Ok(Self::zero(f.family));
        }
        Ok(Self {
            family: f.family,
            sup_bound: alpha.abs() * f.sup_bound,
            lip_bound: alpha.abs() * f.lip_bound,
            reads: f.reads.clone(),
            writes: f.writes.clone(),
            expr: LipExpr::Scale(alpha, Box::new(f)),
        })
    }

    /// `x ↦ f(x + g(x))`.
    pub fn compose(f: LipMap<T>, g: LipMap<T>) -> Result<Self> {
        if f.family != g.family {
            return Err(Error::Incompatible(format!("{} vs {}", f.family, g.family)));
        }
        Ok(Self {
            family: f.family,
            sup_bound: f.sup_bound,
            lip_bound: f.lip_bound * (T::one() + g.lip_bound),
            reads: f.reads.union(&g.reads).copied().collect(),
            writes: f.writes.clone(),
            expr: LipExpr::Compose(Box::new(f), Box::new(g)),
        })
    }

    pub fn expr(&self) -> &LipExpr<T> {
        &self.expr
    }

    pub fn family(&self) -> SpaceFamily {
        self.family
    }

    /// Certified `≥ ‖L‖∞`.
    pub fn sup_bound(&self) -> T {
        self.sup_bound
    }

    /// Certified `≥ Lip(L)`.
    pub fn lip_bound(&self) -> T {
        self.lip_bound
    }

    /// Indices the map may read.
    pub fn read_window(&self) -> &BTreeSet<i64> {
        &self.reads
    }

    /// Indices the map may write.
    pub fn write_window(&self) -> &BTreeSet<i64> {
        &self.writes
    }

    pub fn is_zero_map(&self) -> bool {
        matches!(self.expr, LipExpr::Zero)
    }

    pub fn eval(&self, x: &Vector<T>) -> Vector<T> {
        match &self.expr {
            LipExpr::Zero => Vector::zero(self.family),
            LipExpr::Const(c) => c.clone(),
            &LipExpr::Sine {
                coord,
                target,
                amplitude,
                frequency,
            } => {
                let v = amplitude * (frequency * x.get(coord)).sin();
                match self.family {
                    SpaceFamily::Dense(n) => {
                        let mut out = smallvec::SmallVec::from_elem(T::zero(), n);
                        out[target as usize] = v;
                        Vector::Dense(out)
                    }
                    SpaceFamily::Sparse => Vector::sparse([(target, v)]),
                }
            }
            LipExpr::ClampLinear {
                matrix,
                radius,
                offset,
            } => {
                let r = *radius;
                let input: Vec<T> = (0..matrix.cols() as i64)
                    .map(|c| x.get(offset + c).max(-r).min(r))
                    .collect();
                let out = matrix.mul_slice(&input);
                match self.family {
                    SpaceFamily::Dense(_) => Vector::dense(out),
                    SpaceFamily::Sparse => {
                        Vector::sparse(out.into_iter().enumerate().map(|(i, v)| (offset + i as i64, v)))
                    }
                }
            }
            LipExpr::Sum(args) => {
                let mut acc = args[0].eval(x);
                for m in &args[1..] {
                    acc = &acc + &m.eval(x);
                }
                acc
            }
            LipExpr::Scale(alpha, f) => f.eval(x).scaled(*alpha),
            LipExpr::Compose(f, g) => f.eval(&(x + &g.eval(x))),
        }
    }
}

/// An ordered tuple `𝓛 = (L₀, …, L_{p−1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationTuple<T> {
    maps: Vec<LipMap<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    /// `Lip(L_j) < ε`.
    A,
    /// `Lip(L_j) < ε` and `‖L_j‖∞ < ε`.
    B,
}

impl<T: Scalar> PerturbationTuple<T> {
    pub fn new(maps: Vec<LipMap<T>>) -> Result<Self> {
        let family = maps
            .first()
            .ok_or_else(|| invalid("p", "a tuple needs at least one map"))?
            .family;
        if let Some(bad) = maps.iter().find(|m| m.family != family) {
            return Err(Error::Incompatible(format!("{family} vs {}", bad.family)));
        }
        Ok(Self { maps })
    }

    /// `p` copies of the zero map.
    pub fn zero(family: SpaceFamily, p: usize) -> Result<Self> {
        Self::new(vec![LipMap::zero(family); p])
    }

    pub fn p(&self) -> usize {
        self.maps.len()
    }

    pub fn family(&self) -> SpaceFamily {
        self.maps[0].family
    }

    pub fn maps(&self) -> &[LipMap<T>] {
        &self.maps
    }

    /// `L_{j mod p}`.
    pub fn get(&self, j: i64) -> &LipMap<T> {
        &self.maps[j.rem_euclid(self.maps.len() as i64) as usize]
    }

    pub fn max_lip(&self) -> T {
        self.maps.iter().fold(T::zero(), |m, l| m.max(l.lip_bound))
    }

    pub fn max_sup(&self) -> T {
        self.maps.iter().fold(T::zero(), |m, l| m.max(l.sup_bound))
    }

    pub fn is_zero(&self) -> bool {
        self.maps.iter().all(LipMap::is_zero_map)
    }

    /// Checks the strict admissibility inequalities against `ε`, with a
    /// relative safety margin of `1e−12`.
    pub fn check_admissible(&self, eps: T, mode: Mode) -> Result<()> {
        let limit = eps * strict_margin::<T>();
        let lip = self.max_lip();
        if !(lip < limit) && !(lip.is_zero() && eps > T::zero()) {
            return Err(Error::Inadmissible(format!(
                "max Lip(L_j) = {lip} is not below ε = {eps}"
            )));
        }
        if mode == Mode::B {
            let sup = self.max_sup();
            if !(sup < limit) && !(sup.is_zero() && eps > T::zero()) {
                return Err(Error::Inadmissible(format!(
                    "max ‖L_j‖∞ = {sup} is not below ε = {eps}"
                )));
            }
        }
        Ok(())
    }
}

/// Estimate of `D(𝓛, 𝓛′) = max_j ‖L_j − L′_j‖∞`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TupleDistance<T> {
    /// Certified upper bound. Loose (`sup L + sup L′`) when `sampled` is set.
    pub upper: T,
    /// Maximum of `‖L_j(x) − L′_j(x)‖` over the sample set.
    pub sampled_lower: T,
    /// Set when some pair of maps differs in tree shape, so only the sampled
    /// value is informative.
    pub sampled: bool,
}

impl<T: Scalar> TupleDistance<T> {
    /// The reported value of `D`: the certified bound, or the sampled one
    /// when shapes differ.
    pub fn value(&self) -> T {
        if self.sampled {
            self.sampled_lower
        } else {
            self.upper
        }
    }
}

/// Certified `‖f − g‖∞` when both trees share a shape.
fn structural_distance<T: Scalar>(f: &LipMap<T>, g: &LipMap<T>) -> Option<T> {
    use LipExpr::*;
    if f == g {
        return Some(T::zero());
    }
    match (&f.expr, &g.expr) {
        (Zero, _) => Some(g.sup_bound),
        (_, Zero) => Some(f.sup_bound),
        (Const(a), Const(b)) => Some(a.distance(b)),
        (
            Sine {
                coord: i,
                target: s,
                amplitude: a,
                frequency: w,
            },
            Sine {
                coord: i2,
                target: s2,
                amplitude: a2,
                frequency: w2,
            },
        ) if i == i2 && s == s2 && w == w2 => Some((*a - *a2).abs()),
        (
            ClampLinear {
                matrix: b,
                radius: r,
                offset: o,
            },
            ClampLinear {
                matrix: b2,
                radius: r2,
                offset: o2,
            },
        ) if r == r2 && o == o2 && b.rows() == b2.rows() && b.cols() == b2.cols() => {
            Some(b.sub(b2).row_sum_norm() * *r)
        }
        (Sum(xs), Sum(ys)) if xs.len() == ys.len() => xs
            .iter()
            .zip(ys)
            .map(|(x, y)| structural_distance(x, y))
            .sum(),
        (Scale(a, x), Scale(b, y)) => {
            let d = structural_distance(x, y)?;
            Some(a.abs() * d + (*a - *b).abs() * y.sup_bound)
        }
        (Compose(f1, g1), Compose(f2, g2)) => {
            let df = structural_distance(f1, f2)?;
            let dg = structural_distance(g1, g2)?;
            Some(df + f1.lip_bound * dg)
        }
        _ => None,
    }
}

pub fn tuple_distance<T: Scalar>(
    lhs: &PerturbationTuple<T>,
    rhs: &PerturbationTuple<T>,
    samples: &[Vector<T>],
) -> Result<TupleDistance<T>> {
    if lhs.p() != rhs.p() {
        return Err(invalid("p", format!("tuples have lengths {} and {}", lhs.p(), rhs.p())));
    }
    if lhs.family() != rhs.family() {
        return Err(Error::Incompatible(format!("{} vs {}", lhs.family(), rhs.family())));
    }
    let mut upper = T::zero();
    let mut lower = T::zero();
    let mut sampled = false;
    for (f, g) in lhs.maps.iter().zip(&rhs.maps) {
        match structural_distance(f, g) {
            Some(d) => upper = upper.max(d),
            None => {
                sampled = true;
                upper = upper.max(f.sup_bound + g.sup_bound);
            }
        }
        for x in samples {
            lower = lower.max(f.eval(x).distance(&g.eval(x)));
        }
    }
    Ok(TupleDistance {
        upper: upper.max(lower),
        sampled_lower: lower,
        sampled,
    })
}

/// Solves `(T + L)(x) = y` by the contraction `x ↦ T⁻¹(y − L(x))` and returns
/// `x` together with an a-priori bound on `‖x − x*‖`.
pub(crate) fn invert_perturbed_point<T: Scalar>(
    op: &SplitOperator<T>,
    l: &LipMap<T>,
    y: &Vector<T>,
    x_tol: T,
) -> Result<(Vector<T>, T)> {
    let q = op.inverse_norm() * l.lip_bound();
    if !(q < T::one()) {
        return Err(Error::PerturbedNotInvertible { product: q.as_f64() });
    }
    let step = |x: &Vector<T>| op.apply_inverse(&(y - &l.eval(x)));
    let mut x = op.apply_inverse(y)?;
    if l.is_zero_map() {
        return Ok((x, T::zero()));
    }
    let next = step(&x)?;
    let first = next.distance(&x);
    x = next;
    // after k steps from the start, ‖x_k − x*‖ ≤ qᵏ/(1−q)·first
    let mut bound = q * first / (T::one() - q);
    let mut k = 1;
    while bound > x_tol && k < MAX_INVERSION_STEPS {
        x = step(&x)?;
        bound = bound * q;
        k += 1;
    }
    Ok((x, bound))
}

/// Returns `x` with `‖(T + L)(x) − y‖ ≤ tol`.
pub fn invert_perturbed<T: Scalar>(
    op: &SplitOperator<T>,
    l: &LipMap<T>,
    y: &Vector<T>,
    tol: T,
) -> Result<Vector<T>> {
    if !(tol > T::zero()) {
        return Err(invalid("tol", "must be positive"));
    }
    let x_tol = tol / (op.norm() + l.lip_bound());
    invert_perturbed_point(op, l, y, x_tol).map(|(x, _)| x)
}
