//! Bundled example protocols: the `R²` system, the Heisenberg quotient and
//! the simply connected Heisenberg group.

use crate::catalog::{heisenberg_full_system, heisenberg_quotient_system, r2_system};
use crate::error::{Error, Result};
use crate::reach::{
    boundedness_report, estimate_control_set, estimate_per_set, no_return_check,
    BoundednessReport, FKind, GridSpec, PerSetQuery, RegionEstimate, SamplingParams, Verdict,
    DEFAULT_AXIS_POINTS, DEFAULT_CIRCLE_BINS, DEFAULT_EPSILON, DEFAULT_GROWTH_THRESHOLD, MAX_NORM,
};
use crate::system::LinearSystemSpec;

pub const EXAMPLES: [&str; 3] = ["r2", "heisenberg", "heisenberg-unbounded"];

/// Trajectories per tree for the `R²` estimates.
pub const R2_BUDGET: usize = 20_000;
/// Trajectories per tree for the Heisenberg quotient estimate.
pub const HEISENBERG_BUDGET: usize = 50_000;
pub const EXAMPLE_T_MAX: f64 = 8.0;
/// Grid window `[−WINDOW, WINDOW]` on non-lattice axes.
pub const WINDOW: f64 = 1.5;
/// Collar half-width excluded from agreement scoring.
pub const COLLAR: f64 = 0.05;
/// `(t_max, budget)` entries of the boundedness runs.
pub const BOUNDEDNESS_SCHEDULE: [(f64, usize); 7] = [
    (2.0, 1_000),
    (4.0, 2_000),
    (8.0, 4_000),
    (8.0, 8_000),
    (8.0, 16_000),
    (8.0, 32_000),
    (8.0, 64_000),
];
/// Point-cloud resolution of the boundedness runs.
pub const BOUNDEDNESS_RESOLUTION: f64 = 0.2;
/// Witnesses sampled by the no-return check.
pub const NO_RETURN_SAMPLES: usize = 200;

/// One pass/fail line of an example report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleReport {
    pub name: String,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl ExampleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Plain text: one `PASS`/`FAIL` line per check.
    pub fn render(&self) -> String {
        let mut s = format!("example {} seed {}\n", self.name, self.seed);
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            s += &format!("{tag} {}: {}\n", c.name, c.detail);
        }
        s += &format!("result {}\n", if self.passed() { "PASS" } else { "FAIL" });
        s
    }
}

fn square_grid(sys: &LinearSystemSpec) -> Result<GridSpec> {
    GridSpec::window(sys.group(), -WINDOW, WINDOW, DEFAULT_AXIS_POINTS, DEFAULT_CIRCLE_BINS)
}

/// Distance from `c` to the boundary of `(−1, 1)²` in the first two
/// coordinates.
fn unit_square_boundary(c: &[f64]) -> f64 {
    let d = |v: f64| (v.abs() - 1.0).abs();
    d(c[0]).min(d(c[1]))
}

fn in_unit_square(c: &[f64]) -> bool {
    c[0].abs() < 1.0 && c[1].abs() < 1.0
}

fn in_r2_control_set(c: &[f64]) -> bool {
    c[0].abs() < 1.0 && c[1].abs() <= 1.0
}

fn agreement_check(name: &str, est: &RegionEstimate, target: fn(&[f64]) -> bool, min: f64) -> Check {
    match &est.grid {
        Some(g) => {
            let a = g.agreement(target, unit_square_boundary, COLLAR);
            Check {
                name: name.into(),
                passed: a.fraction() >= min,
                detail: format!(
                    "agreement {:.4} on {} cells (need {min})",
                    a.fraction(),
                    a.scored
                ),
            }
        }
        None => Check {
            name: name.into(),
            passed: false,
            detail: "no grid classification".into(),
        },
    }
}

/// Sampling parameters of the example estimates.
pub fn example_params(sys: &LinearSystemSpec, budget: usize, seed: u64) -> SamplingParams {
    SamplingParams::new(budget, EXAMPLE_T_MAX, seed).with_explore(explore_radius(sys))
}

/// Exploration radius: twice the grid window on axes of the unit-square
/// examples, unbounded along `g⁰` of the simply connected group.
fn explore_radius(sys: &LinearSystemSpec) -> Vec<f64> {
    (0..sys.dim())
        .map(|i| if i < 2 { 2.0 * WINDOW } else { MAX_NORM })
        .collect()
}

pub fn boundedness_params(sys: &LinearSystemSpec, seed: u64) -> SamplingParams {
    example_params(sys, 1, seed).with_resolution(BOUNDEDNESS_RESOLUTION)
}

/// Boundedness report for `Per(Σ)` along [`BOUNDEDNESS_SCHEDULE`].
pub fn example_boundedness(sys: &LinearSystemSpec, seed: u64) -> Result<BoundednessReport> {
    let q = PerSetQuery::new(FKind::CentralSubgroup, DEFAULT_EPSILON)?;
    boundedness_report(
        sys,
        &q,
        &BOUNDEDNESS_SCHEDULE,
        &boundedness_params(sys, seed),
        DEFAULT_GROWTH_THRESHOLD,
    )
}

fn verdict_check(r: &BoundednessReport, expected: Verdict) -> Check {
    Check {
        name: "boundedness".into(),
        passed: r.verdict == expected && r.agrees == Some(true),
        detail: format!(
            "{} (expected {}), G0 compact {}, sizes {:.3} -> {:.3}, last growth {:.4} {:.4}",
            r.verdict.as_str(),
            expected.as_str(),
            r.central_compact,
            r.sizes[0],
            r.sizes[r.sizes.len() - 1],
            r.growth[r.growth.len() - 2],
            r.growth[r.growth.len() - 1]
        ),
    }
}

fn verify_r2(seed: u64) -> Result<Vec<Check>> {
    let sys = r2_system()?;
    let grid = square_grid(&sys)?;
    let p = example_params(&sys, R2_BUDGET, seed);
    let q = PerSetQuery::new(FKind::Identity, DEFAULT_EPSILON)?;
    let cs = estimate_control_set(&sys, &q, Some(&grid), &p)?;
    let per = estimate_per_set(&sys, &q, Some(&grid), &p)?;
    let nr = no_return_check(&sys, &cs, NO_RETURN_SAMPLES, seed, 1)?;
    Ok(vec![
        agreement_check("control set (-1,1)x[-1,1]", &cs, in_r2_control_set, 0.95),
        agreement_check("periodic set (-1,1)x(-1,1)", &per, in_unit_square, 0.95),
        Check {
            name: "no-return".into(),
            passed: nr.violations == 0 && nr.trajectories > 0,
            detail: format!("{} violations in {} witness paths", nr.violations, nr.trajectories),
        },
    ])
}

fn verify_heisenberg(seed: u64) -> Result<Vec<Check>> {
    let sys = heisenberg_quotient_system()?;
    let grid = square_grid(&sys)?;
    let q = PerSetQuery::new(FKind::CentralSubgroup, DEFAULT_EPSILON)?;
    let per = estimate_per_set(&sys, &q, Some(&grid), &example_params(&sys, HEISENBERG_BUDGET, seed))?;
    let b = example_boundedness(&sys, seed)?;
    Ok(vec![
        agreement_check("periodic set (-1,1)^2 x R/Z", &per, in_unit_square, 0.93),
        verdict_check(&b, Verdict::Bounded),
    ])
}

/// Height above which a central periodic point counts as far out.
pub const FAR_Z: f64 = 10.0;

fn verify_unbounded(seed: u64) -> Result<Vec<Check>> {
    let sys = heisenberg_full_system()?;
    let b = example_boundedness(&sys, seed)?;
    let est = &b.final_estimate;
    let q = PerSetQuery::new(FKind::CentralSubgroup, DEFAULT_EPSILON)?;
    let far = est
        .points
        .iter()
        .position(|p| p.coords()[2].abs() > FAR_Z);
    let witness = match far {
        Some(i) => {
            let w = est.witness(&sys, i)?;
            let a = w.audit(&sys, est.params.step)?;
            let ends = q.distance_to_f(&sys, w.start())?.max(q.distance_to_f(&sys, w.end())?);
            Check {
                name: format!("witness at |z| > {FAR_Z}"),
                passed: a.leg_gap < 1e-6 && a.point_gap < 1e-6 && a.jump < q.epsilon && ends < q.epsilon,
                detail: format!(
                    "z = {:.3}, {} legs, leg gap {:.2e}, point gap {:.2e}, jump {:.4}, F distance {:.2e}",
                    w.point.coords()[2],
                    w.inbound.len() + w.outbound.len(),
                    a.leg_gap,
                    a.point_gap,
                    a.jump,
                    ends
                ),
            }
        }
        None => Check {
            name: format!("witness at |z| > {FAR_Z}"),
            passed: false,
            detail: "no point found".into(),
        },
    };
    Ok(vec![verdict_check(&b, Verdict::Unbounded), witness])
}

/// Runs the protocol of a bundled example.
pub fn verify_example(name: &str, seed: u64) -> Result<ExampleReport> {
    let checks = match name {
        "r2" => verify_r2(seed)?,
        "heisenberg" => verify_heisenberg(seed)?,
        "heisenberg-unbounded" => verify_unbounded(seed)?,
        _ => {
            return Err(Error::InvalidInput(format!(
                "unknown example {name:?}; expected one of {}",
                EXAMPLES.join(", ")
            )))
        }
    };
    Ok(ExampleReport {
        name: name.into(),
        seed,
        checks,
    })
}
