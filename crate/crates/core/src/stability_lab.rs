//! Sampled verification of the quantitative claims, reported as
//! [`ResidualReport`]s: sampled residuals against certified bounds.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conjugacy::series::{psi_apply, psi_inverse_apply, Dynamics};
use crate::conjugacy::{ErrorBudget, System};
use crate::error::{invalid, Error, Result};
use crate::mapping_torus::{perturbed_apply, torus_s, torus_t, FunElem, TorusPoint};
use crate::operators::{correspondence_lip_constant, HyperbolicityCertificate, OperatorModel, SplitOperator};
use crate::perturbations::{tuple_distance, Mode, PerturbationTuple};
use crate::scalar::Scalar;
use crate::vectorspace::{SpaceFamily, Vector};

/// Pseudo-random sample points plus corner cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleSpec {
    pub count: usize,
    pub radius: f64,
    pub seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            count: 100,
            radius: 10.0,
            seed: 0,
        }
    }
}

/// Index window used for sparse samples, around the split of a shift.
pub fn sample_window<T: Scalar>(op: &SplitOperator<T>) -> (i64, i64) {
    match op.model() {
        OperatorModel::Shift { split, .. } => (split - 3, split + 3),
        _ => (0, 0),
    }
}

/// `0`, `±eᵢ` and `spec.count` points with entries uniform in `[−r, r]`.
pub fn generate_samples<T: Scalar>(family: SpaceFamily, spec: &SampleSpec, window: (i64, i64)) -> Vec<Vector<T>> {
    let indices: Vec<i64> = match family {
        SpaceFamily::Dense(n) => (0..n as i64).collect(),
        SpaceFamily::Sparse => (window.0..=window.1).collect(),
    };
    let mut out = vec![Vector::zero(family)];
    for &i in &indices {
        let e = Vector::basis(family, i);
        out.push(e.scaled(-T::one()));
        out.push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let r = spec.radius;
    for _ in 0..spec.count {
        let values = indices.iter().map(|&i| (i, T::of(rng.gen_range(-r..=r))));
        out.push(match family {
            SpaceFamily::Dense(_) => Vector::dense(values.map(|(_, v)| v)),
            SpaceFamily::Sparse => Vector::sparse(values),
        });
    }
    out
}

/// Random torus points over all fibers.
pub fn generate_torus_points<T: Scalar>(
    family: SpaceFamily,
    p: usize,
    spec: &SampleSpec,
    window: (i64, i64),
) -> Vec<TorusPoint<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    generate_samples(family, spec, window)
        .into_iter()
        .map(|x| TorusPoint::new(x, rng.gen_range(0..p as i64), p))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSummary {
    pub tau: f64,
    pub k: usize,
    pub m: usize,
    pub certified_error: f64,
}

impl<T: Scalar> From<&ErrorBudget<T>> for BudgetSummary {
    fn from(b: &ErrorBudget<T>) -> Self {
        Self {
            tau: b.tau.as_f64(),
            k: b.k,
            m: b.m,
            certified_error: b.certified_error.as_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub scenario: String,
    pub verifier: String,
    pub mode: Mode,
    pub p: usize,
    pub seed: u64,
    pub budget: Option<BudgetSummary>,
    pub samples: usize,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub bound: f64,
    pub pass: bool,
    pub wall_time_ms: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ResidualReport {
    fn new(verifier: &str, mode: Mode, p: usize, residuals: Vec<f64>, bound: f64, started: Instant) -> Self {
        let max_residual = residuals.iter().copied().fold(0.0, worst);
        let finite = residuals.iter().all(|r| r.is_finite());
        Self {
            scenario: String::new(),
            verifier: verifier.to_string(),
            mode,
            p,
            seed: 0,
            budget: None,
            samples: residuals.len(),
            pass: finite && max_residual <= bound,
            max_residual,
            bound,
            residuals,
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
            extra: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn with_scenario(mut self, id: &str, seed: u64) -> Self {
        self.scenario = id.to_string();
        self.seed = seed;
        self
    }

    fn note(mut self, text: impl Into<String>) -> Self {
        self.notes.push(text.into());
        self
    }

    fn extra(mut self, key: &str, value: f64) -> Self {
        self.extra.insert(key.to_string(), value);
        self
    }

    /// Fails the report with an explanatory note.
    fn fail(mut self, text: impl Into<String>) -> Self {
        self.pass = false;
        self.notes.push(text.into());
        self
    }
}

/// `max(a, b)`, propagating NaN so that broken evaluations cannot pass.
pub fn worst<T: Scalar>(a: T, b: T) -> T {
    if a.is_nan() || b.is_nan() {
        T::nan()
    } else {
        a.max(b)
    }
}

/// `(S_{p−1} ∘ ⋯ ∘ S₀)(x)`.
pub fn compose_perturbed<T: Scalar>(sys: &System<T>, x: &Vector<T>) -> Vector<T> {
    (0..sys.p()).fold(x.clone(), |y, j| perturbed_apply(&sys.op, &sys.tuple, &y, j))
}

/// `Π_j (‖T‖ + Lip L_j)`, a Lipschitz bound of the composition.
fn composition_lip<T: Scalar>(sys: &System<T>) -> T {
    let norm = sys.op.norm();
    sys.tuple.maps().iter().map(|l| norm + l.lip_bound()).fold(T::one(), |a, b| a * b)
}

/// Floating-point allowance for residuals of size-`scale` quantities pushed
/// through maps with Lipschitz factor `lip`.
fn roundoff<T: Scalar>(scale: T, lip: T) -> T {
    T::of(1e3) * T::epsilon() * (T::one() + scale) * (T::one() + lip)
}

fn max_norm<T: Scalar>(samples: &[Vector<T>]) -> T {
    samples.iter().fold(T::zero(), |m, x| worst(m, x.sup_norm()))
}

fn collect<T: Scalar>(items: Vec<Result<T>>) -> Result<Vec<f64>> {
    items.into_iter().map(|r| r.map(T::as_f64)).collect()
}

/// Residuals `‖(S_{p−1}∘⋯∘S₀)(h(x)) − h(Tᵖx)‖`.
///
/// `h` is evaluated to `τ/(1 + Π)` so that the propagated evaluation error
/// stays below `τ`; the bound adds a round-off allowance.
pub fn verify_conjugacy<T: Scalar>(sys: &System<T>, samples: &[Vector<T>], tau: T) -> Result<ResidualReport> {
    let started = Instant::now();
    let lip = composition_lip(sys);
    let tau_h = tau / (T::one() + lip);
    let budget = sys.forward_budget(tau_h)?;
    let residuals: Vec<Result<T>> = samples
        .par_iter()
        .map(|x| {
            let lhs = compose_perturbed(sys, &sys.conjugacy_h(x, tau_h)?);
            let tpx = sys.op.power(x, sys.p() as i64)?;
            Ok(lhs.distance(&sys.conjugacy_h(&tpx, tau_h)?))
        })
        .collect();
    let scale = max_norm(samples) * sys.op.norm().powi(sys.p() as i32) + sys.defect_bound();
    let allowance = roundoff(scale, lip);
    let mut report = ResidualReport::new(
        "conjugacy",
        sys.mode,
        sys.p(),
        collect(residuals)?,
        (tau + allowance).as_f64(),
        started,
    )
    .note(format!("bound = τ + round-off allowance {:.3e}", allowance.as_f64()));
    report.budget = Some((&budget).into());
    Ok(report)
}

/// Residuals `max(‖h⁻¹(h(x)) − x‖, ‖h(h⁻¹(x)) − x‖)` against `2τ`.
pub fn verify_inverse_pair<T: Scalar>(sys: &System<T>, samples: &[Vector<T>], tau: T) -> Result<ResidualReport> {
    let started = Instant::now();
    let half = tau / T::of(2.0);
    let budget = sys.forward_budget(half)?;
    let residuals: Vec<Result<T>> = samples
        .par_iter()
        .map(|x| {
            let a = sys.conjugacy_h_inverse(&sys.conjugacy_h(x, half)?, half)?;
            let b = sys.conjugacy_h(&sys.conjugacy_h_inverse(x, half)?, half)?;
            Ok(worst(a.distance(x), b.distance(x)))
        })
        .collect();
    let allowance = roundoff(max_norm(samples) + sys.defect_bound(), T::one());
    let mut report = ResidualReport::new(
        "inverse_pair",
        sys.mode,
        sys.p(),
        collect(residuals)?,
        (tau + tau + allowance).as_f64(),
        started,
    )
    .note("h and h⁻¹ evaluated to τ/2 each; the 2τ bound presumes h⁻¹ is locally 1-Lipschitz at scale τ");
    report.budget = Some((&budget).into());
    Ok(report)
}

/// Sampled `‖h(x) − x‖` against `C·max_j sup L_j + τ`; in mode B also
/// requires `‖h − I‖ < δ`.
pub fn verify_franks_bound<T: Scalar>(sys: &System<T>, samples: &[Vector<T>], tau: T) -> Result<ResidualReport> {
    let started = Instant::now();
    let budget = sys.forward_budget(tau)?;
    let residuals: Vec<Result<T>> = samples
        .par_iter()
        .map(|x| Ok(sys.conjugacy_h(x, tau)?.distance(x)))
        .collect();
    let franks = sys.defect_bound();
    let mut report = ResidualReport::new(
        "franks_bound",
        sys.mode,
        sys.p(),
        collect(residuals)?,
        (franks + tau).as_f64(),
        started,
    )
    .extra("franks_bound", franks.as_f64())
    .extra("franks_constant", sys.franks_constant().as_f64());
    report.budget = Some((&budget).into());
    if sys.mode == Mode::B {
        let delta = sys.delta.as_f64();
        report = report.extra("delta", delta);
        if report.max_residual >= delta {
            report = report.fail(format!("mode B requires ‖h − I‖ < δ = {delta}"));
        }
    }
    Ok(report)
}

/// Sampled `‖h_𝓛(x) − h_𝓛′(x)‖` against `2ab(1+t)/((1−δ)(1−t))·D + 2τ`.
pub fn verify_correspondence_lip<T: Scalar>(
    sys: &System<T>,
    other: &System<T>,
    samples: &[Vector<T>],
    tau: T,
) -> Result<ResidualReport> {
    let started = Instant::now();
    if sys.eps != other.eps || sys.op != other.op {
        return Err(invalid("perturbations_alt", "both tuples must share the operator and ε(δ)"));
    }
    let distance = tuple_distance(&sys.tuple, &other.tuple, samples)?;
    let corr = correspondence_lip_constant(&sys.cert, sys.delta)?;
    let budget = sys.forward_budget(tau)?;
    let residuals: Vec<Result<T>> = samples
        .par_iter()
        .map(|x| Ok(sys.conjugacy_h(x, tau)?.distance(&other.conjugacy_h(x, tau)?)))
        .collect();
    let bound = corr * distance.upper + tau + tau;
    let mut report = ResidualReport::new(
        "correspondence_lip",
        sys.mode,
        sys.p(),
        collect(residuals)?,
        bound.as_f64(),
        started,
    )
    .extra("distance", distance.upper.as_f64())
    .extra("distance_sampled", distance.sampled_lower.as_f64())
    .extra("lip_constant", corr.as_f64());
    if distance.upper > T::zero() {
        let ratio = report.max_residual / distance.upper.as_f64();
        report = report.extra("ratio", ratio);
    }
    if distance.sampled {
        report = report.note("D: tree shapes differ, sampled lower bound only");
    }
    report.budget = Some((&budget).into());
    Ok(report)
}

/// A fixed point `z = Σ_{|n|≤K} Tⁿ y` of a non-hyperbolic operator.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointVector<T> {
    pub z: Vector<T>,
    pub k: usize,
    /// Certified `≥ ‖Tz − z‖`.
    pub residual_bound: T,
    /// Computed `‖Tz − z‖`.
    pub residual: T,
}

/// Builds `z` from `y ∈ M ∩ T(N)`, `y ≠ 0`.
///
/// `Tz − z = T^{K+1} y − T^{−K} y`, and since `y ∈ M`, `T⁻¹y ∈ N`, the
/// residual is at most `a t^{K+1} ‖y‖ + a t^{K−1} ‖T⁻¹y‖`.
pub fn fixed_point_vector<T: Scalar>(
    op: &SplitOperator<T>,
    cert: &HyperbolicityCertificate<T>,
    y: &Vector<T>,
    k: usize,
) -> Result<FixedPointVector<T>> {
    if op.is_hyperbolic() {
        return Err(invalid("op", "hyperbolic operators have no nontrivial fixed point of this kind"));
    }
    if k < 1 {
        return Err(invalid("K", "must be at least 1"));
    }
    if y.is_zero() {
        return Err(Error::NotInStableUnstableIntersection("y = 0 gives the trivial fixed point".into()));
    }
    if op.proj_m(y).distance(y) > T::zero() {
        return Err(Error::NotInStableUnstableIntersection("y ∉ M".into()));
    }
    let pre = op.apply_inverse(y)?;
    if op.proj_n(&pre).distance(&pre) > T::zero() {
        return Err(Error::NotInStableUnstableIntersection("T⁻¹y ∉ N".into()));
    }
    let mut z = y.clone();
    let (mut fwd, mut bwd) = (y.clone(), y.clone());
    for _ in 0..k {
        fwd = op.apply(&fwd);
        bwd = op.apply_inverse(&bwd)?;
        z = &(&z + &fwd) + &bwd;
    }
    let residual = op.apply(&z).distance(&z);
    let residual_bound = cert.a * cert.t.powi(k as i32 + 1) * y.sup_norm()
        + cert.a * cert.t.powi(k as i32 - 1) * pre.sup_norm();
    Ok(FixedPointVector {
        z,
        k,
        residual_bound,
        residual,
    })
}

/// Conjugacy residuals of `h_λ(x) = h(x + λz)`, whose inverse is
/// `h_λ⁻¹(x) = h⁻¹(x) − λz`.
///
/// Since `h(Tᵖw) = Sᵖ(h(w))`, the residual at `x` equals
/// `‖h(Tᵖx + λTᵖz) − h(Tᵖx + λz)‖`, a difference of `h` at points
/// `|λ|‖Tᵖz − z‖` apart; the bound charges that distance once. This is exact
/// when `h` is a translation.
pub fn nonuniqueness_family<T: Scalar>(
    sys: &System<T>,
    fp: &FixedPointVector<T>,
    lambda: T,
    samples: &[Vector<T>],
    tau: T,
) -> Result<ResidualReport> {
    let started = Instant::now();
    let lip = composition_lip(sys);
    let tau_h = tau / (T::one() + lip);
    let budget = sys.forward_budget(tau_h)?;
    let shift = fp.z.scaled(lambda);
    let h_lambda = |x: &Vector<T>| sys.conjugacy_h(&(x + &shift), tau_h);
    let rows: Vec<Result<(T, T, T)>> = samples
        .par_iter()
        .map(|x| {
            let hl = h_lambda(x)?;
            let lhs = compose_perturbed(sys, &hl);
            let tpx = sys.op.power(x, sys.p() as i64)?;
            let residual = lhs.distance(&h_lambda(&tpx)?);
            let h0 = sys.conjugacy_h(x, tau_h)?;
            Ok((residual, hl.distance(&h0), hl.distance(x)))
        })
        .collect();
    let rows: Vec<(T, T, T)> = rows.into_iter().collect::<Result<_>>()?;
    let tpz = sys.op.power(&fp.z, sys.p() as i64)?;
    let drift = lambda.abs() * tpz.distance(&fp.z);
    let scale = (max_norm(samples) + shift.sup_norm()) * sys.op.norm().powi(sys.p() as i32) + sys.defect_bound();
    let allowance = roundoff(scale, lip);
    let bound = tau + drift + allowance;
    let residuals = rows.iter().map(|r| r.0.as_f64()).collect();
    let distinct = rows.iter().fold(T::zero(), |m, r| worst(m, r.1));
    let dist_identity = rows.iter().fold(T::zero(), |m, r| worst(m, r.2));
    let h0_zero = sys.conjugacy_h(&Vector::zero(sys.op.family()), tau_h)?;
    let at_zero = sys.conjugacy_h(&shift, tau_h)?.distance(&h0_zero);
    let identity_bound = sys.defect_bound() + lambda.abs() * fp.z.sup_norm() + tau;
    let mut report = ResidualReport::new("nonuniqueness", sys.mode, sys.p(), residuals, bound.as_f64(), started)
        .extra("lambda", lambda.as_f64())
        .extra("z_norm", fp.z.sup_norm().as_f64())
        .extra("fixed_point_residual", fp.residual.as_f64())
        .extra("distinct_sup", distinct.as_f64())
        .extra("distinct_at_zero", at_zero.as_f64())
        .extra("identity_distance", dist_identity.as_f64())
        .extra("identity_bound", identity_bound.as_f64())
        .note("bound = τ + |λ|‖Tᵖz − z‖ + round-off; the drift term is exact when h is a translation");
    report.budget = Some((&budget).into());
    if dist_identity > identity_bound {
        report = report.fail("‖h_λ − I‖ exceeds ‖h − I‖ + |λ|‖z‖");
    }
    if !lambda.is_zero() && !(distinct > T::zero()) {
        report = report.fail("h_λ coincides with h on all samples");
    }
    Ok(report)
}

/// Checks a candidate conjugacy `g` through the recursion
/// `b₀ = g`, `b_j = S_{j−1} ∘ b_{j−1} ∘ T⁻¹` and the fixed-point defect
/// `Ψ₁(B) − Φ₁(B)` with `B(x, j) = (b_j(x) − x, j)`.
///
/// Residuals are `‖g(x) − h(x)‖`; an approximate fixed point with defect `η`
/// lies within `C η/(1 − δ)` of `U`. Refuses non-hyperbolic operators, where
/// uniqueness fails.
pub fn uniqueness_witness_check<T: Scalar>(
    sys: &System<T>,
    g: &(dyn Fn(&Vector<T>) -> Vector<T> + Sync),
    samples: &[Vector<T>],
    tau: T,
) -> Result<ResidualReport> {
    if !sys.op.is_hyperbolic() {
        return Err(Error::NotHyperbolic);
    }
    let started = Instant::now();
    let p = sys.p();
    let lip = composition_lip(sys);
    let tau_h = tau / (T::one() + lip);
    let budget = sys.forward_budget(tau_h)?;
    let b = |x: &Vector<T>, j: usize| -> Result<Vector<T>> {
        let mut y = sys.op.power(x, -(j as i64))?;
        y = g(&y);
        for i in 0..j {
            y = perturbed_apply(&sys.op, &sys.tuple, &y, i);
        }
        Ok(y)
    };
    let rows: Vec<Result<(T, T)>> = samples
        .par_iter()
        .map(|x| {
            let mut defect = T::zero();
            for j in 0..p {
                // Ψ₁(B)(x,j) − Φ₁(B)(x,j) = b_{j+1}(Tx) − S_j(b_j(x)), with b_p = b₀
                let next = b(&sys.op.apply(x), (j + 1) % p)?;
                let step = perturbed_apply(&sys.op, &sys.tuple, &b(x, j)?, j);
                defect = worst(defect, next.distance(&step));
            }
            Ok((defect, g(x).distance(&sys.conjugacy_h(x, tau_h)?)))
        })
        .collect();
    let rows: Vec<(T, T)> = rows.into_iter().collect::<Result<_>>()?;
    let defect = rows.iter().fold(T::zero(), |m, r| worst(m, r.0));
    let scale = max_norm(samples) * sys.op.norm().powi(p as i32) + sys.defect_bound();
    let allowance = roundoff(scale, lip);
    let witness_tol = tau + allowance;
    let delta = sys.contraction();
    let bound = sys.franks_constant() * defect / (T::one() - delta) + tau_h + allowance;
    let residuals = rows.iter().map(|r| r.1.as_f64()).collect();
    let mut report = ResidualReport::new("uniqueness_witness", sys.mode, p, residuals, bound.as_f64(), started)
        .extra("defect", defect.as_f64())
        .extra("witness_tolerance", witness_tol.as_f64())
        .note("witness check of a supplied candidate, not a search over all conjugacies");
    report.budget = Some((&budget).into());
    if defect > witness_tol {
        report = report.fail("not a conjugacy witness: fixed-point defect exceeds tolerance");
    }
    Ok(report)
}

/// Defects `‖Ψ(Ψ⁻¹(G))(pt) − G(pt)‖` for `G = 𝓛̄`, with per-point certified
/// bounds `err(R pt) + ‖T‖ err(pt)`. `orbit_tol = None` uses `R = T̃`.
pub fn verify_series_round_trip<T: Scalar>(
    op: &SplitOperator<T>,
    cert: &HyperbolicityCertificate<T>,
    tuple: &PerturbationTuple<T>,
    points: &[TorusPoint<T>],
    k: usize,
    orbit_tol: Option<T>,
) -> Result<ResidualReport> {
    let started = Instant::now();
    let p = tuple.p();
    let dynamics = match orbit_tol {
        None => Dynamics::Linear,
        Some(orbit_tol) => Dynamics::Perturbed { tuple, orbit_tol },
    };
    let g = FunElem::lbar(tuple);
    let (sup, lip) = (tuple.max_sup(), tuple.max_lip());
    let series = |q: &TorusPoint<T>| psi_inverse_apply(op, cert, dynamics, &g, sup, lip, q, k);
    let rows: Vec<Result<(T, T)>> = points
        .par_iter()
        .map(|pt| {
            let defect = psi_apply(op, dynamics, |q| series(q).map(|s| s.value), pt, p)?;
            let next = match dynamics {
                Dynamics::Linear => torus_t(op, pt, p),
                Dynamics::Perturbed { tuple, .. } => torus_s(op, tuple, pt),
            };
            let scale = pt.x.sup_norm() * op.norm() + sup;
            let bound = series(&next)?.error() + op.norm() * series(pt)?.error() + roundoff(scale, op.norm());
            Ok((defect.distance(&g.eval(pt).x), bound))
        })
        .collect();
    let rows: Vec<(T, T)> = rows.into_iter().collect::<Result<_>>()?;
    let bound = rows.iter().fold(T::zero(), |m, r| worst(m, r.1));
    let violations = rows.iter().filter(|r| r.0 > r.1).count();
    let mode = if orbit_tol.is_some() { "S" } else { "T" };
    let mut report = ResidualReport::new(
        "series_round_trip",
        Mode::A,
        p,
        rows.iter().map(|r| r.0.as_f64()).collect(),
        bound.as_f64(),
        started,
    )
    .extra("violations", violations as f64)
    .note(format!("R = {mode}; each point is checked against its own bound, `bound` is their maximum"));
    if violations > 0 {
        report = report.fail(format!("{violations} points exceed their certified bound"));
    }
    Ok(report)
}

/// Compares `(K, m)` with `(2K, 2m)` for `u₀`, and `K` with `2K` for `v₀`.
/// Residuals are differences, each checked against the smaller budget's
/// certified error at that point plus a round-off allowance.
pub fn doubling_check<T: Scalar>(sys: &System<T>, samples: &[Vector<T>], k: usize, m: usize) -> Result<ResidualReport> {
    let started = Instant::now();
    let sigma = sys.tuple.max_sup();
    let small = ErrorBudget::for_depths(&sys.cert, sys.contraction(), sigma, k, m);
    let large = ErrorBudget::for_depths(&sys.cert, sys.contraction(), sigma, 2 * k, 2 * m);
    let inv = sys.inverse_budget(small.certified_error.max(T::min_positive_value()))?;
    let inv_small = ErrorBudget { k, ..inv };
    let inv_large = ErrorBudget { k: 2 * k, ..inv };
    let norm = sys.op.norm();
    let rows: Vec<Result<(T, T, T)>> = samples
        .par_iter()
        .map(|x| {
            let a = sys.solve_forward_defect(x, 0, &small)?;
            let b = sys.solve_forward_defect(x, 0, &large)?;
            let va = sys.solve_inverse_defect(x, 0, &inv_small)?;
            let vb = sys.solve_inverse_defect(x, 0, &inv_large)?;
            let allowance = roundoff(x.sup_norm() * norm + sys.defect_bound(), norm);
            let slack_f = a.certified_error + allowance - a.u.distance(&b.u);
            let slack_v = va.certified_error + allowance - va.v.distance(&vb.v);
            Ok((worst(a.u.distance(&b.u), va.v.distance(&vb.v)), slack_f.min(slack_v), allowance))
        })
        .collect();
    let rows: Vec<(T, T, T)> = rows.into_iter().collect::<Result<_>>()?;
    let violations = rows.iter().filter(|r| !(r.1 >= T::zero())).count();
    let allowance = rows.iter().fold(T::zero(), |m, r| worst(m, r.2));
    let mut report = ResidualReport::new(
        "doubling",
        sys.mode,
        sys.p(),
        rows.iter().map(|r| r.0.as_f64()).collect(),
        (small.certified_error.max(inv_small.certified_error) + allowance).as_f64(),
        started,
    )
    .extra("violations", violations as f64)
    .extra("roundoff_allowance", allowance.as_f64());
    report.budget = Some((&small).into());
    if violations > 0 {
        report = report.fail(format!("{violations} points differ by more than their certified error"));
    }
    Ok(report)
}

/// Observed ratios `max_x ‖U_{d+1} − U_d‖ / max_x ‖U_d − U_{d−1}‖` of the
/// uniform `K`-term iteration, skipping denominators below `1e−12`.
pub fn contraction_ratios<T: Scalar>(sys: &System<T>, samples: &[Vector<T>], budget: &ErrorBudget<T>) -> Result<Vec<f64>> {
    let sols: Vec<Result<Vec<Vector<T>>>> = samples
        .par_iter()
        .map(|x| sys.solve_forward_uniform(x, 0, budget).map(|s| s.iterates))
        .collect();
    let sols: Vec<Vec<Vector<T>>> = sols.into_iter().collect::<Result<_>>()?;
    let levels = sols.first().map_or(0, Vec::len);
    let diff = |d: usize| {
        sols.iter()
            .map(|it| it[d + 1].distance(&it[d]).as_f64())
            .fold(0.0, worst)
    };
    Ok((1..levels.saturating_sub(1))
        .filter_map(|d| {
            let den = diff(d - 1);
            (den > 1e-12).then(|| diff(d) / den)
        })
        .collect())
}
