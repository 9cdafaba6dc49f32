use conjulab_core::conjugacy::System;
use conjulab_core::operators::{certify_constants, make_diagonal_operator, make_weighted_shift, RateChoice, SplitOperator};
use conjulab_core::perturbations::{LipMap, Mode, PerturbationTuple};
use conjulab_core::stability_lab::*;
use conjulab_core::vectorspace::{SpaceFamily, Vector};
use conjulab_core::Error;

fn build(op: SplitOperator<f64>, rate: RateChoice<f64>, maps: Vec<LipMap<f64>>, delta: f64, mode: Mode) -> System<f64> {
    let cert = certify_constants(&op, rate).unwrap();
    System::new(op, cert, PerturbationTuple::new(maps).unwrap(), delta, mode).unwrap()
}

fn diag_constant() -> System<f64> {
    build(
        make_diagonal_operator(&[0.5, 2.0]).unwrap(),
        RateChoice::Fixed(0.5),
        vec![LipMap::constant(Vector::dense([0.1, 0.1])).unwrap()],
        0.5,
        Mode::A,
    )
}

fn scalar_pair() -> System<f64> {
    build(
        make_diagonal_operator(&[2.0]).unwrap(),
        RateChoice::Auto,
        vec![
            LipMap::constant(Vector::dense([0.3])).unwrap(),
            LipMap::constant(Vector::dense([0.0])).unwrap(),
        ],
        0.5,
        Mode::A,
    )
}

fn scalar_const(c: f64, p: usize) -> System<f64> {
    build(
        make_diagonal_operator(&[2.0]).unwrap(),
        RateChoice::Fixed(0.5),
        vec![LipMap::constant(Vector::dense([c])).unwrap(); p],
        0.5,
        Mode::A,
    )
}

fn samples(sys: &System<f64>, count: usize) -> Vec<Vector<f64>> {
    let spec = SampleSpec { count, radius: 10.0, seed: 7 };
    generate_samples(sys.op.family(), &spec, sample_window(&sys.op))
}

#[test]
fn samples_are_reproducible_and_bounded() {
    let spec = SampleSpec { count: 20, radius: 3.0, seed: 42 };
    let a: Vec<Vector<f64>> = generate_samples(SpaceFamily::Dense(2), &spec, (0, 0));
    let b: Vec<Vector<f64>> = generate_samples(SpaceFamily::Dense(2), &spec, (0, 0));
    assert_eq!(a, b);
    assert_eq!(a.len(), 1 + 4 + 20);
    assert!(a.iter().all(|x| x.sup_norm() <= 3.0));
    let s: Vec<Vector<f64>> = generate_samples(SpaceFamily::Sparse, &spec, (-3, 3));
    assert!(s.iter().all(|x| x.support().iter().all(|i| (-3..=3).contains(i))));
}

#[test]
fn conjugacy_examples() {
    let zero = build(
        make_diagonal_operator(&[0.5, 2.0]).unwrap(),
        RateChoice::Auto,
        vec![LipMap::zero(SpaceFamily::Dense(2))],
        0.5,
        Mode::B,
    );
    let r = verify_conjugacy(&zero, &samples(&zero, 10), 1e-10).unwrap();
    assert!(r.pass && r.max_residual == 0.0);

    let diag = diag_constant();
    let r = verify_conjugacy(&diag, &samples(&diag, 20), 1e-12).unwrap();
    assert!(r.pass && r.max_residual <= 1e-10, "{r:?}");

    let pair = scalar_pair();
    let xs: Vec<_> = [-1.0, 0.0, 1.0].iter().map(|&x| Vector::dense([x])).collect();
    let r = verify_conjugacy(&pair, &xs, 1e-10).unwrap();
    assert!(r.pass && r.max_residual <= 1e-10);
}

#[test]
fn reports_are_deterministic() {
    let sys = build(
        make_diagonal_operator(&[2.0]).unwrap(),
        RateChoice::Auto,
        vec![LipMap::sine(SpaceFamily::Dense(1), 0, 0, 0.1, 1.0).unwrap()],
        0.5,
        Mode::B,
    );
    let xs = samples(&sys, 10);
    let a = verify_conjugacy(&sys, &xs, 1e-8).unwrap();
    let b = verify_conjugacy(&sys, &xs, 1e-8).unwrap();
    assert_eq!(a.residuals, b.residuals);
    assert!(a.pass);
}

#[test]
fn inverse_pair_examples() {
    for sys in [diag_constant(), scalar_pair(), scalar_const(0.0, 1)] {
        let r = verify_inverse_pair(&sys, &samples(&sys, 10), 1e-9).unwrap();
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn franks_bound_examples() {
    let diag = diag_constant();
    let r = verify_franks_bound(&diag, &samples(&diag, 10), 1e-10).unwrap();
    assert!((r.max_residual - 0.2).abs() < 1e-9);
    assert!((r.extra["franks_bound"] - 0.3).abs() < 1e-12);
    assert!(r.pass);

    let zero = scalar_const(0.0, 1);
    let r = verify_franks_bound(&zero, &samples(&zero, 5), 1e-10).unwrap();
    assert_eq!(r.max_residual, 0.0);

    let b = build(
        make_diagonal_operator(&[0.5, 2.0]).unwrap(),
        RateChoice::Fixed(0.5),
        vec![LipMap::sum(vec![
            LipMap::sine(SpaceFamily::Dense(2), 1, 0, 0.05, 1.0).unwrap(),
            LipMap::constant(Vector::dense([0.0, 0.05])).unwrap(),
        ])
        .unwrap()],
        0.9,
        Mode::B,
    );
    let r = verify_franks_bound(&b, &samples(&b, 10), 1e-10).unwrap();
    assert!(r.pass && r.max_residual < 0.9);
}

#[test]
fn correspondence_examples() {
    for p in [1, 2, 5] {
        let (a, b) = (scalar_const(0.10, p), scalar_const(0.12, p));
        let r = verify_correspondence_lip(&a, &b, &samples(&a, 10), 1e-10).unwrap();
        assert!(r.pass);
        assert!((r.max_residual - 0.02).abs() < 1e-9, "p={p}: {}", r.max_residual);
        assert_eq!(r.extra["lip_constant"], 12.0);
        let same = verify_correspondence_lip(&a, &a, &samples(&a, 5), 1e-10).unwrap();
        assert_eq!(same.max_residual, 0.0);
    }
}

#[test]
fn fixed_point_vector_examples() {
    let op = make_weighted_shift(2.0, 0.5, 0).unwrap();
    let cert = certify_constants(&op, RateChoice::Fixed(0.5)).unwrap();
    let fp = fixed_point_vector(&op, &cert, &Vector::sparse([(0, 1.0)]), 40).unwrap();
    for n in -40i64..=40 {
        assert_eq!(fp.z.get(n), 2f64.powi(-(n.abs() as i32)));
    }
    assert!(fp.residual <= 2.0 * 2f64.powi(-40));
    assert!(fp.residual <= fp.residual_bound);
    let wide = fixed_point_vector(&op, &cert, &Vector::sparse([(0, 1.0)]), 20).unwrap();
    assert!((wide.residual_bound / fp.residual_bound - 2f64.powi(20)).abs() < 1e-3);

    assert!(matches!(
        fixed_point_vector(&op, &cert, &Vector::zero(SpaceFamily::Sparse), 10),
        Err(Error::NotInStableUnstableIntersection(_))
    ));
    assert!(fixed_point_vector(&op, &cert, &Vector::sparse([(-1, 1.0)]), 10).is_err());
    assert!(fixed_point_vector(&op, &cert, &Vector::sparse([(1, 1.0)]), 10).is_err());
}

#[test]
fn nonuniqueness_examples() {
    let op = make_weighted_shift(2.0, 0.5, 0).unwrap();
    let cert = certify_constants(&op, RateChoice::Auto).unwrap();
    let fp = fixed_point_vector(&op, &cert, &Vector::sparse([(0, 1.0)]), 40).unwrap();
    let tuple = PerturbationTuple::new(vec![LipMap::zero(SpaceFamily::Sparse)]).unwrap();
    let sys = System::new(op, cert, tuple, 0.5, Mode::B).unwrap();
    let xs = samples(&sys, 10);
    let base = verify_conjugacy(&sys, &xs, 1e-6).unwrap();
    for lambda in [0.0, 0.1, 1.0] {
        let r = nonuniqueness_family(&sys, &fp, lambda, &xs, 1e-6).unwrap();
        assert!(r.pass && r.max_residual <= 1e-6, "{r:?}");
        assert!((r.extra["distinct_at_zero"] - lambda).abs() <= 1e-9);
        assert!((r.max_residual - base.max_residual).abs() <= 1e-12);
    }
}

#[test]
fn nonuniqueness_with_constant_perturbation() {
    let op = make_weighted_shift(2.0, 0.5, 0).unwrap();
    let cert = certify_constants(&op, RateChoice::Auto).unwrap();
    let fp = fixed_point_vector(&op, &cert, &Vector::sparse([(0, 1.0)]), 40).unwrap();
    let tuple = PerturbationTuple::new(vec![LipMap::constant(Vector::sparse([(0, 0.05)])).unwrap()]).unwrap();
    let sys = System::new(op, cert, tuple, 0.5, Mode::B).unwrap();
    let xs = samples(&sys, 5);
    for lambda in [0.1, 1.0] {
        let r = nonuniqueness_family(&sys, &fp, lambda, &xs, 1e-6).unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.extra["distinct_at_zero"] - lambda).abs() <= 1e-9);
    }
}

#[test]
fn shift_defect_splits_into_its_series_parts() {
    let op = make_weighted_shift(2.0, 0.5, 0).unwrap();
    let cert = certify_constants(&op, RateChoice::Auto).unwrap();
    let sp = SpaceFamily::Sparse;
    let tuple = PerturbationTuple::new(vec![LipMap::sum(vec![
        LipMap::sine(sp, 0, -1, 0.05, 1.0).unwrap(),
        LipMap::constant(Vector::sparse([(1, 0.03)])).unwrap(),
    ])
    .unwrap()])
    .unwrap();
    let sys = System::new(op, cert, tuple, 0.5, Mode::B).unwrap();
    let budget = sys.forward_budget(1e-8).unwrap();
    for x in samples(&sys, 5) {
        let sol = sys.solve_forward_defect(&x, 0, &budget).unwrap();
        assert_eq!(sys.op.proj_m(&sol.m_part), sol.m_part);
        let tn = sys.op.apply(&sol.n_part);
        assert_eq!(sys.op.proj_n(&tn), tn);
        assert!(sol.u.distance(&(&sol.m_part - &sol.n_part)) <= 1e-15);
    }
}

#[test]
fn uniqueness_witness_examples() {
    let diag = diag_constant();
    let xs = samples(&diag, 10);
    let closed = |x: &Vector<f64>| x + &Vector::dense([0.2, -0.1]);
    let r = uniqueness_witness_check(&diag, &closed, &xs, 1e-10).unwrap();
    assert!(r.pass && r.max_residual <= 1e-10 && r.extra["defect"] <= 1e-10, "{r:?}");

    let shifted = |x: &Vector<f64>| x + &Vector::dense([0.21, -0.1]);
    let r = uniqueness_witness_check(&diag, &shifted, &xs, 1e-10).unwrap();
    assert!(!r.pass);
    assert!(r.notes.iter().any(|n| n.contains("not a conjugacy witness")));

    let sine = build(
        make_diagonal_operator(&[2.0]).unwrap(),
        RateChoice::Auto,
        vec![LipMap::sine(SpaceFamily::Dense(1), 0, 0, 0.1, 1.0).unwrap()],
        0.5,
        Mode::B,
    );
    let h = |x: &Vector<f64>| sine.conjugacy_h(x, 1e-12).unwrap();
    let few: Vec<_> = [0.0, 0.5, -1.2].iter().map(|&v| Vector::dense([v])).collect();
    let r = uniqueness_witness_check(&sine, &h, &few, 1e-9).unwrap();
    assert!(r.pass, "{r:?}");

    let shift = build(
        make_weighted_shift(2.0, 0.5, 0).unwrap(),
        RateChoice::Auto,
        vec![LipMap::zero(SpaceFamily::Sparse)],
        0.5,
        Mode::B,
    );
    let id = |x: &Vector<f64>| x.clone();
    assert!(matches!(
        uniqueness_witness_check(&shift, &id, &[], 1e-9),
        Err(Error::NotHyperbolic)
    ));
}

#[test]
fn series_round_trip_both_modes() {
    let op = make_diagonal_operator(&[0.5, 2.0]).unwrap();
    let cert = certify_constants(&op, RateChoice::Auto).unwrap();
    let r2 = SpaceFamily::Dense(2);
    let tuple = PerturbationTuple::new(vec![
        LipMap::sine(r2, 1, 0, 0.05, 1.0).unwrap(),
        LipMap::constant(Vector::dense([0.01, 0.02])).unwrap(),
    ])
    .unwrap();
    let pts = generate_torus_points(r2, 2, &SampleSpec { count: 30, radius: 5.0, seed: 1 }, (0, 0));
    for tol in [None, Some(1e-13)] {
        let r = verify_series_round_trip(&op, &cert, &tuple, &pts, 30, tol).unwrap();
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn doubling_and_contraction() {
    let sys = build(
        make_diagonal_operator(&[2.0]).unwrap(),
        RateChoice::Auto,
        vec![LipMap::sine(SpaceFamily::Dense(1), 0, 0, 0.1, 1.0).unwrap()],
        0.5,
        Mode::B,
    );
    let xs = samples(&sys, 10);
    let r = doubling_check(&sys, &xs, 10, 5).unwrap();
    assert!(r.pass, "{r:?}");
    let budget = sys.forward_budget(1e-10).unwrap();
    let ratios = contraction_ratios(&sys, &xs, &budget).unwrap();
    assert!(!ratios.is_empty());
    assert!(ratios.iter().all(|&q| q <= sys.contraction() + 0.05), "{ratios:?}");
}

#[test]
fn report_serializes_expected_fields() {
    let diag = diag_constant();
    let r = verify_conjugacy(&diag, &samples(&diag, 3), 1e-10)
        .unwrap()
        .with_scenario("diag", 7);
    let json = serde_json::to_value(&r).unwrap();
    for key in ["scenario", "mode", "p", "max_residual", "bound", "pass", "seed", "budget", "samples"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert_eq!(json["mode"], "A");
}
