use nalgebra::{DMatrix, DVector};
use nilsys::catalog::{heisenberg_quotient_system, r2_system};
use nilsys::reach::DEFAULT_EPSILON;
use nilsys::{
    estimate_control_set, estimate_per_set, reachable_from_laws, sample_reachable, CellClass,
    ControlBox, ControlLaw, Direction, FKind, GridSpec, LieAlgebra, LinearSystemSpec,
    NilGroupSpec, PerSetQuery, SamplingParams,
};

fn r2_params(n: usize, seed: u64) -> SamplingParams {
    SamplingParams::new(n, 8.0, seed).with_explore(vec![3.0, 3.0])
}

fn r2_grid() -> GridSpec {
    let sys = r2_system().unwrap();
    GridSpec::window(sys.group(), -1.5, 1.5, 61, 64).unwrap()
}

#[test]
fn r2_forward_samples_have_bounded_y() {
    let sys = r2_system().unwrap();
    let est = sample_reachable(
        &sys,
        &sys.group().identity(),
        None,
        &r2_params(300, 3),
        Direction::Forward,
    )
    .unwrap();
    assert!(est.len() > 100);
    for p in &est.points {
        assert!(p.coords()[1].abs() < 1.0, "{}", p.coords()[1]);
    }
}

#[test]
fn zero_law_gives_drift_orbit() {
    let sys = r2_system().unwrap();
    let x0 = sys.group().point(DVector::from_vec(vec![0.1, 0.5])).unwrap();
    let law = ControlLaw::constant(vec![0.0], 2.0).unwrap();
    let est = reachable_from_laws(&sys, &x0, &[law], 0.01, Direction::Forward).unwrap();
    assert!(est.len() > 5);
    for p in &est.points {
        let c = p.coords();
        let t = (c[0] / 0.1).ln();
        assert!((-0.01..=2.01).contains(&t));
        assert!((c[1] - 0.5 * (-t).exp()).abs() < 1e-9);
    }
}

#[test]
fn zero_control_vector_gives_identity_only() {
    let sys = LinearSystemSpec::new(
        NilGroupSpec::simply_connected(LieAlgebra::abelian(2)).unwrap(),
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0])),
        vec![DVector::zeros(2)],
        ControlBox::symmetric(1, 1.0).unwrap(),
    )
    .unwrap();
    let q = PerSetQuery::new(FKind::Identity, DEFAULT_EPSILON).unwrap();
    let est = estimate_per_set(&sys, &q, None, &r2_params(200, 1)).unwrap();
    assert!(!est.is_empty());
    for p in &est.points {
        assert!(p.coords().amax() < 1e-12);
    }
}

#[test]
fn zero_budget_is_empty_with_diagnostic() {
    let sys = r2_system().unwrap();
    let q = PerSetQuery::new(FKind::Identity, DEFAULT_EPSILON).unwrap();
    let est = estimate_per_set(&sys, &q, None, &r2_params(0, 1)).unwrap();
    assert!(est.is_empty());
    assert!(!est.diagnostics.is_empty());
}

#[test]
fn larger_budget_only_adds_cells() {
    let sys = r2_system().unwrap();
    let q = PerSetQuery::new(FKind::Identity, DEFAULT_EPSILON).unwrap();
    let grid = r2_grid();
    let small = estimate_per_set(&sys, &q, Some(&grid), &r2_params(1024, 5)).unwrap();
    let large = estimate_per_set(&sys, &q, Some(&grid), &r2_params(2048, 5)).unwrap();
    let (a, b) = (small.grid.unwrap(), large.grid.unwrap());
    let mut grew = 0;
    for (ca, cb) in a.classes().iter().zip(b.classes()) {
        if *ca == CellClass::In {
            assert_eq!(*cb, CellClass::In);
        } else if *cb == CellClass::In {
            grew += 1;
        }
    }
    assert!(grew > 0);
}

#[test]
fn witness_trajectories_stay_marked() {
    let sys = r2_system().unwrap();
    let q = PerSetQuery::new(FKind::Identity, DEFAULT_EPSILON).unwrap();
    let grid = r2_grid();
    let est = estimate_per_set(&sys, &q, Some(&grid), &r2_params(2048, 9)).unwrap();
    let cls = est.grid.as_ref().unwrap();
    let spec = cls.spec();
    for i in (0..est.len()).step_by(est.len() / 25 + 1) {
        let w = est.witness(&sys, i).unwrap();
        for leg in w.inbound.iter().chain(&w.outbound) {
            if leg.law.is_empty() {
                continue;
            }
            let tr = sys.simulate_directed(&leg.start, &leg.law, 0.01, leg.direction).unwrap();
            for p in &tr.points[1..tr.points.len() - 1] {
                let c = spec.cell_of(p.coords().as_slice()).unwrap();
                let near = spec.neighborhood(c, 1);
                assert!(near.iter().any(|&d| cls.classes()[d] == CellClass::In));
            }
        }
    }
}

#[test]
fn witnesses_pass_audit() {
    let sys = r2_system().unwrap();
    let q = PerSetQuery::new(FKind::Identity, DEFAULT_EPSILON).unwrap();
    let est = estimate_per_set(&sys, &q, None, &r2_params(1024, 2)).unwrap();
    for i in (0..est.len()).step_by(est.len() / 40 + 1) {
        let w = est.witness(&sys, i).unwrap();
        let a = w.audit(&sys, est.params.step).unwrap();
        assert!(a.leg_gap < 1e-9, "{a:?}");
        assert!(a.point_gap < 1e-9, "{a:?}");
        assert!(a.jump < DEFAULT_EPSILON);
        assert!(q.distance_to_f(&sys, w.start()).unwrap() < 1e-12);
        assert!(q.distance_to_f(&sys, w.end()).unwrap() < 1e-12);
    }
}

#[test]
fn central_subgroup_is_contained() {
    let sys = heisenberg_quotient_system().unwrap();
    let q = PerSetQuery::new(FKind::CentralSubgroup, DEFAULT_EPSILON).unwrap();
    let grid = GridSpec::window(sys.group(), -1.5, 1.5, 31, 16).unwrap();
    let params = SamplingParams::new(1024, 4.0, 4).with_explore(vec![3.0, 3.0, 1.0]);
    let est = estimate_per_set(&sys, &q, Some(&grid), &params).unwrap();
    let cls = est.grid.unwrap();
    for b in 0..16 {
        let z = (b as f64 + 0.5) / 16.0;
        assert_eq!(cls.class_at(&[0.0, 0.0, z]), Some(CellClass::In), "bin {b}");
    }
}

#[test]
fn abelian_control_set_grows_with_horizon() {
    let sys = LinearSystemSpec::new(
        NilGroupSpec::simply_connected(LieAlgebra::abelian(1)).unwrap(),
        DMatrix::zeros(1, 1),
        vec![DVector::from_vec(vec![1.0])],
        ControlBox::symmetric(1, 1.0).unwrap(),
    )
    .unwrap();
    let q = PerSetQuery::new(FKind::Identity, DEFAULT_EPSILON).unwrap();
    let width = |t: f64| {
        let mut p = SamplingParams::new(1024, t, 6);
        p.restart_prob = 0.0;
        estimate_control_set(&sys, &q, None, &p).unwrap().widths()[0]
    };
    let w: Vec<f64> = [2.0, 4.0, 8.0].iter().map(|&t| width(t)).collect();
    for (wi, t) in w.iter().zip([2.0, 4.0, 8.0]) {
        assert!(*wi <= 2.0 * t + 1e-9 && *wi >= 0.75 * t, "{w:?}");
    }
    assert!(w[0] < w[1] && w[1] < w[2] && w[2] > 2.0 * w[0], "{w:?}");
}
