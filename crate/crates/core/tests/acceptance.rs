use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use nilsys::catalog::{heisenberg_full_system, heisenberg_quotient_system, r2_system, test_algebras};
use nilsys::reach::{random_law, DEFAULT_EPSILON};
use nilsys::system::DEFAULT_STEP;
use nilsys::verify::{example_boundedness, example_params, HEISENBERG_BUDGET, R2_BUDGET, WINDOW};
use nilsys::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 2024;
const COLLAR: f64 = 0.05;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn in_open_square(c: &[f64]) -> bool {
    c[0].abs() < 1.0 && c[1].abs() < 1.0
}

fn in_control_set(c: &[f64]) -> bool {
    c[0].abs() < 1.0 && c[1].abs() <= 1.0
}

/// Fraction of cells outside the collar of the unit square whose class
/// matches `target`. Unknown cells count as outside the estimate.
fn agreement(grid: &GridClassification, target: fn(&[f64]) -> bool) -> (f64, usize) {
    let spec = grid.spec();
    let (mut scored, mut agree) = (0usize, 0usize);
    for (idx, class) in grid.classes().iter().enumerate() {
        let c = spec.center(idx);
        let collar = (c[0].abs() - 1.0).abs().min((c[1].abs() - 1.0).abs());
        if collar <= COLLAR {
            continue;
        }
        scored += 1;
        if (*class == CellClass::In) == target(&c) {
            agree += 1;
        }
    }
    (agree as f64 / scored.max(1) as f64, scored)
}

fn window_grid(sys: &LinearSystemSpec) -> GridSpec {
    GridSpec::window(sys.group(), -WINDOW, WINDOW, 101, 64).unwrap()
}

struct Estimates {
    quotient_per: RegionEstimate,
    quotient_bounded: BoundednessReport,
}

fn criterion_1() -> Outcome {
    let sys = r2_system().unwrap();
    let q = PerSetQuery::new(FKind::Identity, DEFAULT_EPSILON).unwrap();
    let est = estimate_control_set(&sys, &q, Some(&window_grid(&sys)), &example_params(&sys, R2_BUDGET, SEED)).unwrap();
    let (a, n) = agreement(est.grid.as_ref().unwrap(), in_control_set);
    outcome(a >= 0.95, format!("control set agreement {a:.4} on {n} cells"))
}

fn criterion_2() -> Outcome {
    let sys = r2_system().unwrap();
    let q = PerSetQuery::new(FKind::Identity, DEFAULT_EPSILON).unwrap();
    let est = estimate_per_set(&sys, &q, Some(&window_grid(&sys)), &example_params(&sys, R2_BUDGET, SEED)).unwrap();
    let (a, n) = agreement(est.grid.as_ref().unwrap(), in_open_square);
    outcome(a >= 0.95, format!("periodic set agreement {a:.4} on {n} cells"))
}

fn criterion_3() -> (Outcome, RegionEstimate, BoundednessReport) {
    let sys = heisenberg_quotient_system().unwrap();
    let q = PerSetQuery::new(FKind::CentralSubgroup, DEFAULT_EPSILON).unwrap();
    let est = estimate_per_set(
        &sys,
        &q,
        Some(&window_grid(&sys)),
        &example_params(&sys, HEISENBERG_BUDGET, SEED),
    )
    .unwrap();
    let (a, n) = agreement(est.grid.as_ref().unwrap(), in_open_square);
    let b = example_boundedness(&sys, SEED).unwrap();
    let ok = a >= 0.93 && b.verdict == Verdict::Bounded;
    (
        outcome(ok, format!("periodic set agreement {a:.4} on {n} cells, verdict {}", b.verdict.as_str())),
        est,
        b,
    )
}

/// Closed-form end of `ẋ = x + u, ẏ = −y + u, ż = (u/2)(y − x)` with
/// constant `u` over time `tau`.
fn heisenberg_piece(p: [f64; 3], u: f64, tau: f64) -> [f64; 3] {
    let (x0, y0, z0) = (p[0], p[1], p[2]);
    let (a, b) = (x0 + u, y0 - u);
    let et = tau.exp();
    let x = a * et - u;
    let y = b / et + u;
    let int_y = b * (1.0 - 1.0 / et) + u * tau;
    let int_x = a * (et - 1.0) - u * tau;
    [x, y, z0 + 0.5 * u * (int_y - int_x)]
}

fn heisenberg_leg(start: &GroupPoint, law: &ControlLaw) -> [f64; 3] {
    let c = start.coords();
    let mut p = [c[0], c[1], c[2]];
    for piece in law.pieces() {
        p = heisenberg_piece(p, piece.value[0], piece.duration);
    }
    p
}

fn criterion_4(quotient: &BoundednessReport) -> Outcome {
    let full = heisenberg_full_system().unwrap();
    let quot = heisenberg_quotient_system().unwrap();
    let full_compact = central_subgroup_is_compact(&full).unwrap();
    let quot_compact = central_subgroup_is_compact(&quot).unwrap();
    let b = example_boundedness(&full, SEED).unwrap();
    let verdicts = b.verdict == Verdict::Unbounded
        && !full_compact
        && quotient.verdict == Verdict::Bounded
        && quot_compact;
    let est = &b.final_estimate;
    let far: Vec<usize> = (0..est.len())
        .filter(|&i| est.points[i].coords()[2].abs() > 10.0)
        .collect();
    let mut certified = 0usize;
    let mut worst: f64 = 0.0;
    for &i in far.iter().take(20) {
        let w = est.witness(&full, i).unwrap();
        let mut gap: f64 = 0.0;
        let mut chained = true;
        let legs: Vec<&WitnessLeg> = w.inbound.iter().chain(&w.outbound).collect();
        for leg in &legs {
            if leg.direction != Direction::Forward {
                chained = false;
                continue;
            }
            let end = heisenberg_leg(&leg.start, &leg.law);
            for k in 0..3 {
                let scale = 1.0 + leg.end.coords()[k].abs();
                gap = gap.max((end[k] - leg.end.coords()[k]).abs() / scale);
            }
        }
        for pair in w.inbound.windows(2).chain(w.outbound.windows(2)) {
            chained &= pair[0].end == pair[1].start;
        }
        let (s, e) = (w.start().coords(), w.end().coords());
        let (jf, jt) = (w.jump_from().coords(), w.jump_to().coords());
        let jump = (jf[0] - jt[0]).abs().max((jf[1] - jt[1]).abs());
        let roots = s[0].abs().max(s[1].abs()).max(e[0].abs()).max(e[1].abs());
        worst = worst.max(gap);
        if chained && gap < 1e-6 && jump < DEFAULT_EPSILON && roots < DEFAULT_EPSILON {
            certified += 1;
        }
    }
    let checked = far.len().min(20);
    let ok = verdicts && checked > 0 && certified == checked;
    outcome(
        ok,
        format!(
            "full {} (G0 compact {full_compact}), quotient {} (G0 compact {quot_compact}); {certified}/{checked} witnesses at |z| > 10 certified, worst closed-form gap {worst:.2e}",
            b.verdict.as_str(),
            quotient.verdict.as_str()
        ),
    )
}

fn sup_gap(sys: &LinearSystemSpec, x0: &GroupPoint, law: &ControlLaw, h: f64) -> f64 {
    let tf = triangular_form(sys).unwrap();
    let path = LawPath::new(sys, law).unwrap();
    let sol = triangular_solve(&tf, x0, &path, law.duration(), h).unwrap();
    let tr = sys.simulate(x0, law, h).unwrap();
    assert_eq!(sol.points.len(), tr.points.len());
    sol.points
        .iter()
        .zip(&tr.points)
        .map(|(a, b)| sys.group().distance(a, b))
        .fold(0.0, f64::max)
}

/// Random simply connected systems of class at most 3 with spectral
/// radius in `[3, 4]` and real parts at most `1.5`.
fn random_systems(count: usize, rng: &mut ChaCha8Rng) -> Vec<(LinearSystemSpec, GroupPoint, ControlLaw)> {
    (0..count)
        .map(|s| {
            let alg = match s % 4 {
                0 => LieAlgebra::abelian(3),
                1 => LieAlgebra::heisenberg(),
                _ => LieAlgebra::filiform(4),
            };
            let n = alg.dim();
            let d = loop {
                let d = alg.random_derivation(rng, 1.0);
                let r = d.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max);
                if r > 0.1 {
                    let sign = if d.trace() > 0.0 { -1.0 } else { 1.0 };
                    let d = d * (sign * rng.random_range(3.0..4.0) / r);
                    let top = d.complex_eigenvalues().iter().map(|c| c.re).fold(f64::MIN, f64::max);
                    if top <= 1.5 {
                        break d;
                    }
                }
            };
            let zs = (0..2)
                .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
                .collect();
            let sys = LinearSystemSpec::new(
                NilGroupSpec::simply_connected(alg).unwrap(),
                d,
                zs,
                ControlBox::symmetric(2, 1.0).unwrap(),
            )
            .unwrap();
            let law = random_law(sys.omega(), 5.0, (0.2, 1.0), rng);
            let x0 = GroupPoint::from_coords(DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)));
            (sys, x0, law)
        })
        .collect()
}

fn criterion_5() -> Outcome {
    let quot = heisenberg_quotient_system().unwrap();
    let mut cases = vec![(quot.clone(), quot.group().identity(), ControlLaw::constant(vec![1.0], 5.0).unwrap())];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    cases.extend(random_systems(20, &mut rng));
    let (mut worst, mut min_ratio) = (0.0f64, f64::INFINITY);
    for (sys, x0, law) in &cases {
        let a = sup_gap(sys, x0, law, DEFAULT_STEP);
        let b = sup_gap(sys, x0, law, DEFAULT_STEP / 2.0);
        worst = worst.max(a);
        min_ratio = min_ratio.min(a / b);
    }
    outcome(
        worst < 1e-6 && min_ratio >= 8.0,
        format!("{} systems, max gap {worst:.2e}, min halving ratio {min_ratio:.2}", cases.len()),
    )
}

/// `|φ(t, x0 ∗ g) − φ(t, x0) ∗ e^{tD} g|` at the final time.
fn equivariance_residual(sys: &LinearSystemSpec, x0: &GroupPoint, g: &GroupPoint, law: &ControlLaw, h: f64) -> f64 {
    let grp = sys.group();
    let t = law.duration();
    let lhs = sys.simulate(&grp.bch_product(x0, g).unwrap(), law, h).unwrap();
    let base = sys.simulate(x0, law, h).unwrap();
    let flow = (sys.drift().matrix() * t).exp();
    let gt = GroupPoint::from_coords(flow * g.coords());
    let rhs = grp.bch_product(base.end(), &gt).unwrap();
    grp.distance(lhs.end(), &rhs)
}

fn criterion_6() -> Outcome {
    let sys = heisenberg_full_system().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let pt = |rng: &mut ChaCha8Rng| GroupPoint::from_coords(DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0)));
    let triples: Vec<(GroupPoint, GroupPoint, ControlLaw)> = (0..100)
        .map(|_| (pt(&mut rng), pt(&mut rng), random_law(sys.omega(), 2.0, (0.2, 1.0), &mut rng)))
        .collect();
    let worst = triples
        .iter()
        .map(|(x0, g, law)| equivariance_residual(&sys, x0, g, law, DEFAULT_STEP))
        .fold(0.0, f64::max);
    // refinement on a law with dwell times that are multiples of both steps
    let mut orders = Vec::new();
    for (x0, g, _) in triples.iter().take(10) {
        let pieces = (0..4)
            .map(|_| Piece {
                duration: 0.5,
                value: sys.omega().sample_uniform(&mut rng),
            })
            .collect();
        let law = ControlLaw::new(pieces).unwrap();
        let a = equivariance_residual(&sys, x0, g, &law, 0.1);
        let b = equivariance_residual(&sys, x0, g, &law, 0.05);
        orders.push((a / b).log2());
    }
    let order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        worst < 1e-7 && order >= 3.5,
        format!("max residual {worst:.2e} over 100 triples, min observed order {order:.2}"),
    )
}

fn fd_derivative(grp: &NilGroupSpec, z: &DVector<f64>, x: &GroupPoint) -> DVector<f64> {
    let h = 0.25;
    let at = |s: f64| {
        grp.bch_product(&GroupPoint::from_coords(z * s), x)
            .unwrap()
            .into_coords()
    };
    (at(-2.0 * h) - at(-h) * 8.0 + at(h) * 8.0 - at(2.0 * h)) / (12.0 * h)
}

fn criterion_7() -> Outcome {
    let grp = NilGroupSpec::simply_connected(LieAlgebra::filiform(5)).unwrap();
    let alg = grp.algebra();
    let coeffs = bch_coefficients(4).unwrap();
    let c = coeffs.as_slice();
    let d = fd_derivative(&grp, &alg.basis_vector(1), &GroupPoint::from_coords(alg.basis_vector(0)));
    let fd: Vec<f64> = (0..4).map(|p| d[p + 1]).collect();
    let mut err = (0..4).map(|p| (fd[p] - c[p]).abs()).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for _ in 0..50 {
        let x = GroupPoint::from_coords(DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0)));
        let z = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        let series = grp.invariant_field_eval(&z, &x).unwrap();
        err = err.max((fd_derivative(&grp, &z, &x) - series).amax());
    }
    let exact = c[0] == 1.0 && c[1] == -0.5 && c[2] == 1.0 / 12.0;
    outcome(
        err < 1e-8 && exact,
        format!("finite-difference coefficients {fd:?}, max error {err:.2e}, c0..c2 exact {exact}"),
    )
}

/// Drift with a compact or trivial `G⁰` on each bundled algebra: a graded
/// diagonal derivation conjugated by a random automorphism that fixes the
/// lattice directions.
fn decomposable_system(name: &str, alg: &LieAlgebra, rng: &mut ChaCha8Rng) -> LinearSystemSpec {
    let (diag, lattice): (Vec<f64>, Vec<usize>) = match name {
        "abelian1" => (vec![1.0], vec![]),
        "abelian2" => (vec![1.0, 0.0], vec![1]),
        "abelian3" => (vec![1.0, -1.0, 0.0], vec![2]),
        "heisenberg" => (vec![1.0, 1.0, 2.0], vec![]),
        "filiform4" => (vec![1.0, 1.0, 2.0, 3.0], vec![]),
        _ => (vec![1.0, 1.0, 2.0, 3.0, 4.0], vec![]),
    };
    let n = alg.dim();
    let a = if alg.is_abelian() {
        let mut a = DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.3..0.3));
        for &j in &lattice {
            a.set_column(j, &alg.basis_vector(j));
        }
        a
    } else {
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        alg.ad(&v).unwrap().exp()
    };
    let d = &a * DMatrix::from_diagonal(&DVector::from_vec(diag)) * a.clone().try_inverse().unwrap();
    LinearSystemSpec::new(
        NilGroupSpec::new(alg.clone(), lattice).unwrap(),
        d,
        vec![DVector::from_element(n, 1.0)],
        ControlBox::symmetric(1, 1.0).unwrap(),
    )
    .unwrap()
}

fn psi_residual(sys: &LinearSystemSpec, rng: &mut ChaCha8Rng) -> f64 {
    let (spec, psi) = build_from_decomposable(sys).unwrap();
    let r = psi.basis().ncols() - psi.torus_axes().len();
    let draw = |rng: &mut ChaCha8Rng| {
        let h = DVector::from_fn(spec.torus_dim(), |_, _| rng.random_range(0.0..1.0));
        let x = DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0));
        spec.point(h, x).unwrap()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (p, q) = (draw(rng), draw(rng));
        let lhs = psi.apply(&spec.product(&p, &q).unwrap()).unwrap();
        let rhs = sys
            .group()
            .bch_product(&psi.apply(&p).unwrap(), &psi.apply(&q).unwrap())
            .unwrap();
        worst = worst.max(sys.group().distance(&lhs, &rhs));
    }
    worst
}

/// Sample points of every witness leg, strictly inside the witness
/// interval, must lie within one resolution cell of an estimate point.
fn closure_violations(sys: &LinearSystemSpec, est: &RegionEstimate, witnesses: usize) -> (usize, usize) {
    let res = est.params.resolution;
    let grp = sys.group();
    let cell = |x: &[f64]| -> Vec<i64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| {
                if grp.is_lattice(i) {
                    0
                } else {
                    (v / res).floor() as i64
                }
            })
            .collect()
    };
    let mut index: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, p) in est.points.iter().enumerate() {
        index.entry(cell(p.coords().as_slice())).or_default().push(i);
    }
    let n = sys.dim();
    let near = |x: &GroupPoint| -> bool {
        let base = cell(x.coords().as_slice());
        for code in 0..3usize.pow(n as u32) {
            let mut c = code;
            let key: Vec<i64> = base
                .iter()
                .map(|b| {
                    let d = (c % 3) as i64 - 1;
                    c /= 3;
                    b + d
                })
                .collect();
            if let Some(ids) = index.get(&key) {
                if ids.iter().any(|&j| grp.distance(&est.points[j], x) <= res + 1e-9) {
                    return true;
                }
            }
        }
        false
    };
    let (mut samples, mut bad) = (0usize, 0usize);
    let stride = (est.len() / witnesses).max(1);
    for i in (0..est.len()).step_by(stride).take(witnesses) {
        let w = est.witness(sys, i).unwrap();
        let legs: Vec<&WitnessLeg> = w.inbound.iter().chain(&w.outbound).collect();
        let last = legs.len();
        for (li, leg) in legs.into_iter().enumerate() {
            if leg.law.is_empty() {
                continue;
            }
            let tr = sys
                .simulate_directed(&leg.start, &leg.law, est.params.step, leg.direction)
                .unwrap();
            let m = tr.points.len();
            for (k, p) in tr.points.iter().enumerate() {
                if (li == 0 && k == 0) || (li + 1 == last && k + 1 == m) {
                    continue;
                }
                samples += 1;
                if !near(p) {
                    bad += 1;
                }
            }
        }
    }
    (samples, bad)
}

/// Mixed-sign diagonal drift with control vectors `e1` and `(1, …, 1) / 2`.
fn closure_system(name: &str, alg: &LieAlgebra) -> LinearSystemSpec {
    let diag = match name {
        "abelian1" => vec![1.0],
        "abelian2" => vec![1.0, -1.0],
        "abelian3" => vec![1.0, -1.0, 0.5],
        "heisenberg" => vec![1.0, -1.0, 0.0],
        "filiform4" => vec![1.0, -1.0, 0.0, 1.0],
        _ => vec![1.0, -1.0, 0.0, 1.0, 2.0],
    };
    let n = alg.dim();
    LinearSystemSpec::new(
        NilGroupSpec::simply_connected(alg.clone()).unwrap(),
        DMatrix::from_diagonal(&DVector::from_vec(diag)),
        vec![alg.basis_vector(0), DVector::from_element(n, 0.5)],
        ControlBox::symmetric(2, 1.0).unwrap(),
    )
    .unwrap()
}

fn projection_consistency(r2: &RegionEstimate, quot: &RegionEstimate) -> (usize, usize, usize, usize) {
    let g2 = r2.grid.as_ref().unwrap();
    let gq = quot.grid.as_ref().unwrap();
    let s2 = g2.spec();
    let sq = gq.spec();
    let mut fiber_marked = vec![false; s2.cell_count()];
    let mut down_checked = 0usize;
    let mut down_bad = 0usize;
    for (idx, class) in gq.classes().iter().enumerate() {
        if *class != CellClass::In {
            continue;
        }
        let parts = sq.unflatten(idx);
        let flat = s2.flatten(&parts[..2]);
        fiber_marked[flat] = true;
        down_checked += 1;
        let ok = s2
            .neighborhood(flat, 1)
            .into_iter()
            .any(|c| g2.classes()[c] == CellClass::In);
        if !ok {
            down_bad += 1;
        }
    }
    let mut up_checked = 0usize;
    let mut up_bad = 0usize;
    for (idx, class) in g2.classes().iter().enumerate() {
        if *class != CellClass::In {
            continue;
        }
        up_checked += 1;
        if !s2.neighborhood(idx, 1).into_iter().any(|c| fiber_marked[c]) {
            up_bad += 1;
        }
    }
    (down_checked, down_bad, up_checked, up_bad)
}

fn criterion_8(est: &Estimates) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    for (name, alg) in test_algebras() {
        let v = alg.validate();
        if !v.passed() {
            failures.push(format!("{name}: algebra validation"));
        }
        let mut grading: f64 = 0.0;
        for _ in 0..5 {
            let d = Derivation::new(&alg, alg.random_derivation(&mut rng, 1.0)).unwrap();
            let decomp = spectral_decompose(&alg, &d).unwrap();
            let (ok, r) = check_grading(&alg, &decomp);
            grading = grading.max(r);
            if !ok {
                failures.push(format!("{name}: grading residual {r:.2e}"));
            }
        }
        let grp = NilGroupSpec::simply_connected(alg.clone()).unwrap();
        let tf = TriangularForm::new(grp, &alg.random_derivation(&mut rng, 1.0)).unwrap();
        let mut pattern_bad = 0;
        for _ in 0..100 {
            let x = DVector::from_fn(alg.dim(), |_, _| rng.random_range(-1.0..1.0));
            for p in 0..=tf.class_k() {
                if !block_structure_check(&tf, &x, p).unwrap() {
                    pattern_bad += 1;
                }
            }
        }
        if pattern_bad > 0 {
            failures.push(format!("{name}: {pattern_bad} block pattern violations"));
        }
        let psi = psi_residual(&decomposable_system(name, &alg, &mut rng), &mut rng);
        if !(psi < 1e-9) {
            failures.push(format!("{name}: psi residual {psi:.2e}"));
        }
        let sys = closure_system(name, &alg);
        let q = PerSetQuery::new(FKind::Identity, DEFAULT_EPSILON).unwrap();
        let mut params = SamplingParams::new(1_000, 4.0, SEED)
            .with_explore(vec![3.0; alg.dim()])
            .with_resolution(0.1);
        params.batch_size = 256;
        let per = estimate_per_set(&sys, &q, None, &params).unwrap();
        let (samples, bad) = closure_violations(&sys, &per, 50);
        if bad > 0 || samples == 0 {
            failures.push(format!("{name}: closure {bad}/{samples}"));
        }
        notes.push(format!("{name} grading {grading:.1e} psi {psi:.1e} closure {bad}/{samples}"));
    }
    let r2 = r2_system().unwrap();
    let q = PerSetQuery::new(FKind::Identity, DEFAULT_EPSILON).unwrap();
    let r2_per = estimate_per_set(
        &r2,
        &q,
        Some(&window_grid(&r2)),
        &example_params(&r2, HEISENBERG_BUDGET, SEED),
    )
    .unwrap();
    let (dc, db, uc, ub) = projection_consistency(&r2_per, &est.quotient_per);
    if db > 0 || ub > 0 || dc == 0 || uc == 0 {
        failures.push(format!("projection {db}/{dc} down, {ub}/{uc} up"));
    }
    notes.push(format!("projection {db}/{dc} down, {ub}/{uc} up"));
    let detail = if failures.is_empty() {
        notes.join("; ")
    } else {
        failures.join("; ")
    };
    outcome(failures.is_empty(), detail)
}

fn report(n: usize, o: &Outcome, started: Instant) -> bool {
    let tag = if o.passed { "PASS" } else { "FAIL" };
    println!("criterion {n}: {tag} {} [{:.0}s]", o.detail, started.elapsed().as_secs_f64());
    o.passed
}

fn main() -> ExitCode {
    let mut ok = true;
    let t = Instant::now();
    ok &= report(1, &criterion_1(), t);
    let t = Instant::now();
    ok &= report(2, &criterion_2(), t);
    let t = Instant::now();
    let (o3, quotient_per, quotient_bounded) = criterion_3();
    ok &= report(3, &o3, t);
    let est = Estimates {
        quotient_per,
        quotient_bounded,
    };
    let t = Instant::now();
    ok &= report(4, &criterion_4(&est.quotient_bounded), t);
    let t = Instant::now();
    ok &= report(5, &criterion_5(), t);
    let t = Instant::now();
    ok &= report(6, &criterion_6(), t);
    let t = Instant::now();
    ok &= report(7, &criterion_7(), t);
    let t = Instant::now();
    ok &= report(8, &criterion_8(&est), t);
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
