use approx::assert_relative_eq;
use conjulab_core::conjugacy::forward::lazy_iterate;
use conjulab_core::conjugacy::{ErrorBudget, System};
use conjulab_core::mapping_torus::TorusPoint;
use conjulab_core::operators::{certify_constants, make_diagonal_operator, make_weighted_shift, RateChoice, SplitOperator};
use conjulab_core::perturbations::{LipMap, Mode, PerturbationTuple};
use conjulab_core::vectorspace::{SpaceFamily, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn system(op: SplitOperator<f64>, maps: Vec<LipMap<f64>>, delta: f64) -> System<f64> {
    let cert = certify_constants(&op, RateChoice::Auto).unwrap();
    System::new(op, cert, PerturbationTuple::new(maps).unwrap(), delta, Mode::A).unwrap()
}

fn fixed_system(op: SplitOperator<f64>, maps: Vec<LipMap<f64>>, delta: f64) -> System<f64> {
    let cert = certify_constants(&op, RateChoice::Fixed(0.5)).unwrap();
    System::new(op, cert, PerturbationTuple::new(maps).unwrap(), delta, Mode::A).unwrap()
}

fn s(v: f64) -> Vector<f64> {
    Vector::dense([v])
}

fn sine_system() -> System<f64> {
    system(
        make_diagonal_operator(&[2.0]).unwrap(),
        vec![LipMap::sine(SpaceFamily::Dense(1), 0, 0, 0.1, 1.0).unwrap()],
        0.5,
    )
}

/// Backward recursion `u_k + L(y_k + u_k)/2 = u_{k+1}/2` along `y_k = 2ᵏ x`
/// from `u_60 = 0`, each step solved by bisection.
fn sine_oracle(x: f64) -> f64 {
    let depth = 60;
    let ys: Vec<f64> = (0..=depth).map(|k| x * 2f64.powi(k)).collect();
    let mut next = 0.0;
    for k in (0..depth).rev() {
        let y = ys[k as usize];
        let g = |u: f64| u + 0.05 * (y + u).sin() - 0.5 * next;
        let (mut lo, mut hi) = (-1.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        next = 0.5 * (lo + hi);
    }
    next
}

#[test]
fn diagonal_constant_translation() {
    let c = Vector::dense([0.1, 0.1]);
    let sys = fixed_system(
        make_diagonal_operator(&[0.5, 2.0]).unwrap(),
        vec![LipMap::constant(c).unwrap()],
        0.5,
    );
    let tau = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let x = Vector::dense([rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)]);
        let budget = sys.forward_budget(tau).unwrap();
        let u = sys.solve_forward_defect(&x, 0, &budget).unwrap();
        assert!(u.u.distance(&Vector::dense([0.2, -0.1])) <= tau);
        let ib = sys.inverse_budget(tau).unwrap();
        let v = sys.solve_inverse_defect(&x, 0, &ib).unwrap();
        assert!(v.v.distance(&Vector::dense([-0.2, 0.1])) <= tau);
    }
    let h0 = sys.conjugacy_h(&Vector::dense([0.0, 0.0]), tau).unwrap();
    assert!(h0.distance(&Vector::dense([0.2, -0.1])) <= tau);
    let back = sys.conjugacy_h_inverse(&Vector::dense([0.2, -0.1]), tau).unwrap();
    assert!(back.sup_norm() <= 2.0 * tau);
}

#[test]
fn two_periodic_scalar_translation() {
    let sys = fixed_system(
        make_diagonal_operator(&[2.0]).unwrap(),
        vec![LipMap::constant(s(0.3)).unwrap(), LipMap::constant(s(0.0)).unwrap()],
        0.5,
    );
    // oracle: u₁ = 2u₀ + c₀, u₀ = 2u₁ + c₁
    let (c0, c1) = (0.3, 0.0);
    let u0 = -(2.0 * c0 + c1) / 3.0;
    let u1 = 2.0 * u0 + c0;
    let tau = 1e-10;
    let budget = sys.forward_budget(tau).unwrap();
    for x in [0.0, 1.5, -7.0] {
        assert!((sys.solve_forward_defect(&s(x), 0, &budget).unwrap().u.get(0) - u0).abs() <= tau);
        assert!((sys.solve_forward_defect(&s(x), 1, &budget).unwrap().u.get(0) - u1).abs() <= tau);
        let ib = sys.inverse_budget(tau).unwrap();
        assert!((sys.solve_inverse_defect(&s(x), 0, &ib).unwrap().v.get(0) + u0).abs() <= tau);
    }
    assert!((sys.conjugacy_h(&s(0.0), tau).unwrap().get(0) - u0).abs() <= tau);
}

#[test]
fn zero_perturbation_is_identity() {
    let sys = system(
        make_weighted_shift(2.0, 0.5, 0).unwrap(),
        vec![LipMap::zero(SpaceFamily::Sparse)],
        0.5,
    );
    let x = Vector::sparse([(-2, 1.0), (3, 0.25)]);
    let budget = sys.forward_budget(1e-9).unwrap();
    assert_eq!(budget.m, 0);
    assert!(sys.solve_forward_defect(&x, 0, &budget).unwrap().u.is_zero());
    assert_eq!(sys.conjugacy_h(&x, 1e-9).unwrap(), x);
    assert_eq!(sys.conjugacy_h_inverse(&x, 1e-9).unwrap(), x);
}

#[test]
fn sine_matches_deep_recursion_oracle() {
    let sys = sine_system();
    for x in [1.0, -0.3, 2.5] {
        let tau = 1e-9;
        let h = sys.conjugacy_h(&s(x), tau).unwrap().get(0);
        let oracle = x + sine_oracle(x);
        assert!((h - oracle).abs() <= tau, "x={x}: {h} vs {oracle}");
    }
}

#[test]
fn lattice_agrees_with_lazy_recursion() {
    let op = make_diagonal_operator(&[0.5, 3.0]).unwrap();
    let r2 = SpaceFamily::Dense(2);
    let sys = system(
        op,
        vec![
            LipMap::sum(vec![
                LipMap::sine(r2, 1, 0, 0.03, 1.0).unwrap(),
                LipMap::sine(r2, 0, 1, 0.02, 2.0).unwrap(),
            ])
            .unwrap(),
            LipMap::constant(Vector::dense([0.01, -0.02])).unwrap(),
        ],
        0.5,
    );
    let (k, m) = (6, 3);
    let lazy = lazy_iterate(&sys, m, k);
    let budget = ErrorBudget::for_depths(&sys.cert, sys.contraction(), sys.tuple.max_sup(), k, m);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let x = Vector::dense([rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
        let j = rng.gen_range(0..2usize);
        let lat = sys.solve_forward_defect(&x, j, &budget).unwrap();
        let lz = lazy.eval(&TorusPoint { x: x.clone(), j }).x;
        // both approximate the same iterate U_m with their own truncations
        let iter_bound = lat.truncation_error + sys.cert.a * sys.cert.b * sys.tuple.max_sup()
            * sys.cert.t.powi(k as i32) * (1.0 + sys.cert.t) / (1.0 - sys.cert.t)
            / (1.0 - sys.contraction());
        assert!(lat.u.distance(&lz) <= iter_bound, "{} > {iter_bound}", lat.u.distance(&lz));
    }
}

#[test]
fn conjugacy_identity_holds_fiberwise() {
    let op = make_diagonal_operator(&[0.5, -2.5]).unwrap();
    let r2 = SpaceFamily::Dense(2);
    let sys = system(
        op,
        vec![
            LipMap::sine(r2, 1, 0, 0.05, 1.0).unwrap(),
            LipMap::sum(vec![
                LipMap::sine(r2, 0, 1, 0.04, 1.5).unwrap(),
                LipMap::constant(Vector::dense([0.02, 0.0])).unwrap(),
            ])
            .unwrap(),
            LipMap::zero(r2),
        ],
        0.6,
    );
    let tau = 1e-9;
    let budget = sys.forward_budget(tau).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let x = Vector::dense([rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
        for j in 0..3 {
            let uj = sys.solve_forward_defect(&x, j, &budget).unwrap();
            let tx = sys.op.apply(&x);
            let un = sys.solve_forward_defect(&tx, j + 1, &budget).unwrap();
            let rhs = &sys.op.apply(&uj.u) + &sys.tuple.get(j as i64).eval(&(&x + &uj.u));
            let bound = un.certified_error + (sys.op.norm() + sys.tuple.max_lip()) * uj.certified_error + 1e-13;
            assert!(un.u.distance(&rhs) <= bound);
            assert!(uj.u.sup_norm() <= sys.defect_bound() + tau);
        }
    }
}

#[test]
fn doubling_stays_within_smaller_budget() {
    let sys = sine_system();
    let (k, m) = (12, 6);
    let small = ErrorBudget::for_depths(&sys.cert, sys.contraction(), 0.1, k, m);
    let large = ErrorBudget::for_depths(&sys.cert, sys.contraction(), 0.1, 2 * k, 2 * m);
    for x in [0.4, 1.0, -2.0] {
        let a = sys.solve_forward_defect(&s(x), 0, &small).unwrap();
        let b = sys.solve_forward_defect(&s(x), 0, &large).unwrap();
        assert!(a.certified_error <= small.certified_error * (1.0 + 1e-12));
        assert!((a.u.get(0) - b.u.get(0)).abs() <= a.certified_error);
    }
}

#[test]
fn contraction_ratio_is_below_delta() {
    let sys = sine_system();
    let budget = sys.forward_budget(1e-10).unwrap();
    let delta = sys.contraction();
    for x in [0.3, 1.0, 4.0] {
        let sol = sys.solve_forward_defect(&s(x), 0, &budget).unwrap();
        let diffs: Vec<f64> = sol.iterates.windows(2).map(|w| w[1].distance(&w[0])).collect();
        for pair in diffs.windows(2) {
            if pair[0] > 1e-12 {
                assert!(pair[1] / pair[0] <= delta + 0.05);
            }
        }
    }
}

#[test]
fn overflowing_orbits_are_clipped_honestly() {
    let sys = sine_system();
    let budget = sys.forward_budget(1e-12).unwrap();
    let sol = sys.solve_forward_defect(&s(3.0), 0, &budget).unwrap();
    let oracle = sine_oracle(3.0);
    assert!((sol.u.get(0) - oracle).abs() <= sol.certified_error.max(1e-12));
}

#[test]
fn inadmissible_tuples_are_rejected() {
    let op = make_diagonal_operator(&[2.0]).unwrap();
    let cert = certify_constants(&op, RateChoice::Auto).unwrap();
    let tuple = PerturbationTuple::new(vec![LipMap::sine(SpaceFamily::Dense(1), 0, 0, 1.0, 1.0).unwrap()]).unwrap();
    assert!(System::new(op, cert, tuple, 0.5, Mode::A).is_err());
}

#[test]
fn mode_a_allows_large_sup() {
    let op = make_diagonal_operator(&[0.5, 2.0]).unwrap();
    let cert = certify_constants(&op, RateChoice::Fixed(0.5)).unwrap();
    let big = PerturbationTuple::new(vec![LipMap::constant(Vector::dense([3.0, -1.0])).unwrap()]).unwrap();
    assert!(System::new(op.clone(), cert, big.clone(), 0.5, Mode::B).is_err());
    let sys = System::new(op, cert, big, 0.5, Mode::A).unwrap();
    let h = sys.conjugacy_h(&Vector::dense([0.0, 0.0]), 1e-9).unwrap();
    assert_relative_eq!(h.get(0), 6.0, epsilon = 1e-9);
    assert_relative_eq!(h.get(1), 1.0, epsilon = 1e-9);
}

fn block_system() -> System<f64> {
    use conjulab_core::matrix::Matrix;
    use conjulab_core::operators::make_block_operator;
    let p = Matrix::from_rows(&[vec![1.0, 0.5, 0.0], vec![0.0, 1.0, 0.3], vec![0.2, 0.0, 1.0]]).unwrap();
    let am = Matrix::from_rows(&[vec![0.5, 0.2], vec![0.0, 0.4]]).unwrap();
    let an = Matrix::from_rows(&[vec![3.0]]).unwrap();
    let op = make_block_operator(&p, &am, &an).unwrap();
    let family = SpaceFamily::Dense(3);
    system(
        op,
        vec![
            LipMap::sine(family, 0, 2, 0.02, 1.0).unwrap(),
            LipMap::sine(family, 1, 1, 0.02, 2.0).unwrap(),
        ],
        0.5,
    )
}

#[test]
fn block_splitting_survives_round_off_and_overflow() {
    let sys = block_system();
    let x = Vector::dense([4.75, -0.6, 0.48]);
    let small = sys.forward_budget(1e-7).unwrap();
    let (sigma, delta) = (sys.tuple.max_sup(), sys.contraction());
    let large = ErrorBudget::for_depths(&sys.cert, delta, sigma, 2 * small.k, 2 * small.m);
    let a = sys.solve_forward_defect(&x, 0, &small).unwrap();
    let b = sys.solve_forward_defect(&x, 0, &large).unwrap();
    // the deep lattice reaches the end of the floating-point range
    assert!(b.clipped);
    assert!(a.u.is_finite() && b.u.is_finite());
    assert!(a.u.sup_norm() <= sys.defect_bound());
    assert!(a.u.distance(&b.u) <= a.certified_error);
    let h = |y: &Vector<f64>| {
        let sol = sys.solve_forward_defect(y, 0, &small).unwrap();
        (y + &sol.u, sol.certified_error)
    };
    let (hx, ex) = h(&x);
    let lhs = conjulab_core::mapping_torus::perturbed_apply(&sys.op, &sys.tuple, &hx, 0);
    let lhs = conjulab_core::mapping_torus::perturbed_apply(&sys.op, &sys.tuple, &lhs, 1);
    let ttx = sys.op.power(&x, 2).unwrap();
    let (httx, ettx) = h(&ttx);
    let lip = (sys.op.norm() + 0.02) * (sys.op.norm() + 0.04);
    assert!(lhs.distance(&httx) <= lip * ex + ettx + 1e-9, "{}", lhs.distance(&httx));
}

#[test]
fn uniform_iteration_matches_prefix_lattice() {
    let sys = sine_system();
    let budget = sys.forward_budget(1e-8).unwrap();
    for x in [-3.0, 0.4, 7.5] {
        let a = sys.solve_forward_defect(&s(x), 0, &budget).unwrap();
        let b = sys.solve_forward_uniform(&s(x), 0, &budget).unwrap();
        assert!(a.u.distance(&b.u) <= a.certified_error + b.certified_error);
        assert!(b.certified_error <= budget.certified_error * (1.0 + 1e-12));
    }
}
