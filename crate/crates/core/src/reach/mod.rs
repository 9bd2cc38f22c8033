//! Monte-Carlo estimates of reachable sets, the control set containing
//! the identity, and periodic point sets, plus boundedness reports.
//!
//! Sampling grows two trees of trajectories: one under the field and one
//! under the time-reversed field. A new trajectory either starts from a
//! root or restarts from a point already in its own tree, so every sampled
//! point carries a concatenated law from a root. Estimates only keep
//! references into the trees; witness laws are rebuilt on demand.

mod cloud;
mod grid;

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::linalg;
use crate::nilgroup::GroupPoint;
use crate::spectral::spectral_decompose;
use crate::system::{substeps, ControlBox, ControlLaw, Direction, Kernel, LinearSystemSpec, Piece};

use cloud::{CellIndexer, Chart, FineCloud, Occupancy, MAX_KEY_DIM};
pub use grid::{
    Agreement, CellClass, GridAxis, GridClassification, GridSpec, DEFAULT_AXIS_POINTS,
    DEFAULT_CIRCLE_BINS,
};

pub const DEFAULT_EPSILON: f64 = 0.02;
pub const REACH_STEP: f64 = 0.01;
/// Trajectories stop once a coordinate exceeds this magnitude.
pub const MAX_NORM: f64 = 1e6;
pub const DEFAULT_GROWTH_THRESHOLD: f64 = 10.0;
pub const STABLE_GROWTH: f64 = 0.02;

const FORWARD_TAG: u64 = 1;
const BACKWARD_TAG: u64 = 2;
/// Cells kept per coordinate extreme in the restart pool.
const FRONTIER_CELLS: usize = 16;

/// Sampling configuration shared by all estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingParams {
    /// Trajectories per tree.
    pub n_samples: usize,
    /// Horizon of each sampled law.
    pub t_max: f64,
    pub seed: u64,
    pub step: f64,
    /// Piece durations are uniform in this range.
    pub dwell: (f64, f64),
    /// Probability that a trajectory restarts from a point already sampled.
    pub restart_prob: f64,
    /// Probability that a restart picks a cell extreme in some coordinate.
    pub frontier_prob: f64,
    /// Cell side of the restart occupancy map.
    pub restart_cell: f64,
    pub batch_size: usize,
    /// Per-coordinate radius of the exploration box; lattice coordinates
    /// are ignored. `None` means [`MAX_NORM`] everywhere.
    pub explore: Option<Vec<f64>>,
    /// Cell side used to thin the reported point cloud.
    pub resolution: f64,
}

impl SamplingParams {
    pub fn new(n_samples: usize, t_max: f64, seed: u64) -> Self {
        Self {
            n_samples,
            t_max,
            seed,
            step: REACH_STEP,
            dwell: (0.05, 0.5),
            restart_prob: 0.5,
            frontier_prob: 0.5,
            restart_cell: 0.1,
            batch_size: 512,
            explore: None,
            resolution: 0.05,
        }
    }

    pub fn with_explore(mut self, radius: Vec<f64>) -> Self {
        self.explore = Some(radius);
        self
    }

    pub fn with_resolution(mut self, resolution: f64) -> Self {
        self.resolution = resolution;
        self
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(format!("sampling parameter: {what}")));
        if !(self.t_max > 0.0) || !self.t_max.is_finite() {
            return bad("t_max must be positive");
        }
        if !(self.step > 0.0) {
            return bad("step must be positive");
        }
        if !(self.dwell.0 > 0.0 && self.dwell.0 <= self.dwell.1) {
            return bad("dwell range must be positive and ordered");
        }
        if !(0.0..=1.0).contains(&self.restart_prob) || !(0.0..=1.0).contains(&self.frontier_prob) {
            return bad("restart probabilities must lie in [0, 1]");
        }
        if !(self.restart_cell > 0.0) || !(self.resolution > 0.0) || self.batch_size == 0 {
            return bad("cell sizes and batch size must be positive");
        }
        if let Some(r) = &self.explore {
            check_len(dim, r.len())?;
            if r.iter().any(|v| !(*v > 0.0)) {
                return bad("exploration radii must be positive");
            }
        }
        if dim > MAX_KEY_DIM {
            return Err(Error::Unsupported(format!(
                "sampling supports dimension up to {MAX_KEY_DIM}, got {dim}"
            )));
        }
        Ok(())
    }
}

/// A random law: pieces with uniform dwell times, values uniform in `Ω`
/// or at a vertex of `Ω` with equal probability, cut at `t_max`.
pub fn random_law<R: Rng + ?Sized>(
    omega: &ControlBox,
    t_max: f64,
    dwell: (f64, f64),
    rng: &mut R,
) -> ControlLaw {
    let mut pieces = Vec::new();
    let mut t = 0.0;
    while t < t_max {
        let d = if dwell.1 > dwell.0 {
            rng.random_range(dwell.0..dwell.1)
        } else {
            dwell.0
        };
        let d = d.min(t_max - t);
        let value = if rng.random_bool(0.5) {
            omega.sample_uniform(rng)
        } else {
            omega.sample_vertex(rng)
        };
        pieces.push(Piece { duration: d, value });
        t += d;
    }
    ControlLaw::new(pieces).expect("sampled pieces are valid")
}

/// Which set plays the role of `F`.
#[derive(Debug, Clone, PartialEq)]
pub enum FKind {
    Identity,
    /// `G⁰`, the subgroup of the central subalgebra.
    CentralSubgroup,
    PointList(Vec<GroupPoint>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerSetQuery {
    pub f_kind: FKind,
    pub epsilon: f64,
}

impl PerSetQuery {
    pub fn new(f_kind: FKind, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidInput(format!("tolerance {epsilon} must be positive")));
        }
        if let FKind::PointList(p) = &f_kind {
            if p.is_empty() {
                return Err(Error::InvalidInput("point list must be nonempty".into()));
            }
        }
        Ok(Self { f_kind, epsilon })
    }

    /// Distance from `x` to `F`, measured in the matching chart.
    pub fn distance_to_f(&self, sys: &LinearSystemSpec, x: &GroupPoint) -> Result<f64> {
        check_len(sys.dim(), x.dim())?;
        let fset = FSet::new(sys, &self.f_kind)?;
        Ok(fset.distance(sys, x.coords().as_slice()))
    }
}

/// `G⁰` in coordinates: lattice axes, the remaining (non-compact)
/// directions, and coordinates along `g^{+,-}` that vanish on `G⁰`.
#[derive(Debug, Clone)]
struct CentralData {
    lattice_axes: Vec<usize>,
    free: DMatrix<f64>,
    pm_rows: DMatrix<f64>,
    central: bool,
}

fn central_data(sys: &LinearSystemSpec) -> Result<CentralData> {
    let alg = sys.group().algebra();
    let n = sys.dim();
    let decomp = spectral_decompose(alg, sys.drift())?;
    let zero = decomp.zero().clone();
    let lattice_axes = sys.group().lattice().to_vec();
    let lat = linalg::from_columns(
        n,
        &lattice_axes.iter().map(|&i| alg.basis_vector(i)).collect::<Vec<_>>(),
    );
    let free = linalg::complement_within(&lat, &zero);
    let pm = decomp.plus_minus();
    let r = pm.ncols();
    let mut full = DMatrix::zeros(n, n);
    full.columns_mut(0, r).copy_from(&pm);
    full.columns_mut(r, n - r).copy_from(&zero);
    let inv = full
        .try_inverse()
        .ok_or_else(|| Error::Numerical("spectral basis is singular".into()))?;
    let pm_rows = inv.rows(0, r).into_owned();
    let mut central = true;
    for b in zero.column_iter() {
        for j in 0..n {
            let br = alg.bracket(&b.into_owned(), &alg.basis_vector(j))?;
            if br.amax() > 1e-9 {
                central = false;
            }
        }
    }
    Ok(CentralData {
        lattice_axes,
        free,
        pm_rows,
        central,
    })
}

/// Whether `G⁰` is compact: the central subalgebra is spanned by lattice
/// directions.
pub fn central_subgroup_is_compact(sys: &LinearSystemSpec) -> Result<bool> {
    Ok(central_data(sys)?.free.ncols() == 0)
}

#[derive(Debug, Clone)]
enum Roots {
    Identity,
    Points(Vec<Vec<f64>>),
    Subgroup {
        lattice_axes: Vec<usize>,
        free: DMatrix<f64>,
    },
}

impl Roots {
    fn sample(&self, sys: &LinearSystemSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = sys.dim();
        match self {
            Roots::Identity => vec![0.0; n],
            Roots::Points(p) => p[rng.random_range(0..p.len())].clone(),
            Roots::Subgroup { lattice_axes, free } => {
                let mut x = vec![0.0; n];
                for &i in lattice_axes {
                    x[i] = rng.random::<f64>();
                }
                for b in free.column_iter() {
                    let c = rng.random_range(-1.0..=1.0);
                    for i in 0..n {
                        x[i] += c * b[i];
                    }
                }
                sys.group().reduce_in_place(&mut x);
                x
            }
        }
    }
}

/// Internal realization of `F`.
#[derive(Debug, Clone)]
struct FSet {
    roots: Roots,
    chart: Chart,
    phi_invariant: bool,
    pm_rows: Option<DMatrix<f64>>,
}

impl FSet {
    fn new(sys: &LinearSystemSpec, kind: &FKind) -> Result<Self> {
        let identity_chart = Chart::identity(lattice_mask(sys));
        match kind {
            FKind::Identity => Ok(Self {
                roots: Roots::Identity,
                chart: identity_chart,
                phi_invariant: true,
                pm_rows: None,
            }),
            FKind::PointList(points) => {
                let d = sys.drift().matrix();
                let mut phi_invariant = true;
                let mut raw = Vec::new();
                for p in points {
                    check_len(sys.dim(), p.dim())?;
                    if (d * p.coords()).amax() > 1e-12 {
                        phi_invariant = false;
                    }
                    raw.push(sys.group().point(p.coords().clone())?.into_coords().as_slice().to_vec());
                }
                Ok(Self {
                    roots: Roots::Points(raw),
                    chart: identity_chart,
                    phi_invariant,
                    pm_rows: None,
                })
            }
            FKind::CentralSubgroup => {
                let c = central_data(sys)?;
                if c.free.ncols() + c.lattice_axes.len() == 0 {
                    return Self::new(sys, &FKind::Identity);
                }
                let chart = if c.central {
                    Chart::projection(c.pm_rows.clone())
                } else {
                    identity_chart
                };
                Ok(Self {
                    roots: Roots::Subgroup {
                        lattice_axes: c.lattice_axes,
                        free: c.free,
                    },
                    chart,
                    phi_invariant: true,
                    pm_rows: Some(c.pm_rows),
                })
            }
        }
    }

    fn distance(&self, sys: &LinearSystemSpec, x: &[f64]) -> f64 {
        match (&self.roots, &self.pm_rows) {
            (_, Some(rows)) => (rows * DVector::from_column_slice(x)).amax(),
            (Roots::Points(p), None) => p
                .iter()
                .map(|q| sys.group().distance_slices(x, q))
                .fold(f64::INFINITY, f64::min),
            _ => sys.group().distance_slices(x, &vec![0.0; x.len()]),
        }
    }
}

fn lattice_mask(sys: &LinearSystemSpec) -> Vec<bool> {
    (0..sys.dim()).map(|i| sys.group().is_lattice(i)).collect()
}

#[derive(Debug, Clone)]
struct Window {
    radius: Vec<f64>,
}

impl Window {
    fn new(sys: &LinearSystemSpec, params: &SamplingParams) -> Self {
        let radius = (0..sys.dim())
            .map(|i| {
                if sys.group().is_lattice(i) {
                    f64::INFINITY
                } else {
                    params.explore.as_ref().map_or(MAX_NORM, |r| r[i].min(MAX_NORM))
                }
            })
            .collect();
        Self { radius }
    }

    #[inline]
    fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.radius)
            .all(|(v, r)| v.is_finite() && v.abs() <= *r)
    }
}

/// Time of sample `idx` on the boundary-aligned grid of `law`.
fn index_time(law: &ControlLaw, step: f64, idx: usize) -> f64 {
    let mut count = 0;
    let mut t0 = 0.0;
    for p in law.pieces() {
        let nsub = substeps(p.duration, step);
        let t1 = t0 + p.duration;
        if idx <= count + nsub {
            let s = idx - count;
            return if s == nsub {
                t1
            } else {
                t0 + s as f64 * (p.duration / nsub as f64)
            };
        }
        count += nsub;
        t0 = t1;
    }
    t0
}

#[derive(Debug, Clone)]
struct TrajRecord {
    start: Vec<f64>,
    law: ControlLaw,
    parent: Option<(u32, u32)>,
    elapsed0: f64,
}

#[derive(Debug, Clone)]
struct Tree {
    direction: Direction,
    trajs: Vec<TrajRecord>,
}

impl Tree {
    fn elapsed(&self, t: u32, idx: u32, step: f64) -> f64 {
        let r = &self.trajs[t as usize];
        r.elapsed0 + index_time(&r.law, step, idx as usize)
    }

    /// `(trajectory, cut index)` pairs from a root down to sample `idx` of `t`.
    fn chain(&self, t: u32, idx: u32) -> Vec<(u32, u32)> {
        let mut chain = vec![(t, idx)];
        let mut cur = t;
        while let Some((p, pi)) = self.trajs[cur as usize].parent {
            chain.push((p, pi));
            cur = p;
        }
        chain.reverse();
        chain
    }
}

/// Runs a trajectory, visiting samples while they stay in the window.
fn replay<F>(
    kernel: &mut Kernel,
    rec: &TrajRecord,
    step: f64,
    direction: Direction,
    window: &Window,
    mut visit: F,
) where
    F: FnMut(u32, &[f64]) -> bool,
{
    let mut k = 0u32;
    kernel.integrate(&rec.start, &rec.law, step, direction, |_, x| {
        if !window.contains(x) {
            return false;
        }
        let go = visit(k, x);
        k += 1;
        go
    });
}

struct Sampler<'a> {
    sys: &'a LinearSystemSpec,
    params: &'a SamplingParams,
    window: Window,
    grid: Option<&'a GridSpec>,
}

impl<'a> Sampler<'a> {
    fn new(sys: &'a LinearSystemSpec, params: &'a SamplingParams, grid: Option<&'a GridSpec>) -> Self {
        Self {
            sys,
            params,
            window: Window::new(sys, params),
            grid,
        }
    }

    /// Simulates trajectories `range` of one tree. Restart choices only
    /// see the pool fixed before the round, so results do not depend on
    /// scheduling and a smaller budget yields a prefix of a larger one.
    fn run_batch(
        &self,
        roots: &Roots,
        growth: &Growth,
        pool: &Pool,
        tag: u64,
        range: std::ops::Range<usize>,
    ) -> Vec<(TrajRecord, Vec<f64>)> {
        let p = self.params;
        let direction = growth.tree.direction;
        range
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
                rng.set_stream((tag << 48) ^ i as u64);
                let restart = !pool.cells.is_empty()
                    && p.restart_prob > 0.0
                    && rng.random_bool(p.restart_prob);
                let (start, parent, elapsed0) = if restart {
                    let frontier = !pool.extremes.is_empty()
                        && p.frontier_prob > 0.0
                        && rng.random_bool(p.frontier_prob);
                    let j = if frontier {
                        let e = &pool.extremes[rng.random_range(0..pool.extremes.len())];
                        e[rng.random_range(0..e.len())]
                    } else {
                        pool.cells[rng.random_range(0..pool.cells.len())]
                    };
                    let (pt, pi) = growth.occ.list[j];
                    (
                        growth.occ.point(j).to_vec(),
                        Some((pt, pi)),
                        growth.tree.elapsed(pt, pi, p.step),
                    )
                } else {
                    (roots.sample(self.sys, &mut rng), None, 0.0)
                };
                let law = random_law(self.sys.omega(), p.t_max, p.dwell, &mut rng);
                let rec = TrajRecord {
                    start,
                    law,
                    parent,
                    elapsed0,
                };
                let mut pts = Vec::new();
                let mut kernel = Kernel::new(self.sys);
                replay(&mut kernel, &rec, p.step, direction, &self.window, |_, x| {
                    pts.extend_from_slice(x);
                    true
                });
                (rec, pts)
            })
            .collect()
    }

    fn absorb(
        &self,
        growth: &mut Growth,
        results: Vec<(TrajRecord, Vec<f64>)>,
        visited: &mut Option<Vec<bool>>,
    ) {
        let n = self.sys.dim();
        let mut cbuf = vec![0.0; growth.chart.dim()];
        for (rec, pts) in results {
            let id = growth.tree.trajs.len() as u32;
            for (k, x) in pts.chunks(n).enumerate() {
                let src = (id, k as u32);
                growth.chart.apply(x, &mut cbuf);
                growth.cloud.insert(&cbuf, src);
                let before = growth.occ.list.len();
                growth.occ.insert(x, src);
                if growth.occ.list.len() > before {
                    growth.unmatched.push(before);
                }
                if let (Some(g), Some(v)) = (self.grid, visited.as_mut()) {
                    if let Some(c) = g.cell_of(x) {
                        v[c] = true;
                    }
                }
            }
            growth.tree.trajs.push(rec);
        }
    }

    /// Moves occupied cells that have come within `eps` of `other` into
    /// the restart pool.
    fn refresh(&self, growth: &mut Growth, other: &FineCloud) {
        let mut keys = Vec::new();
        let mut cbuf = vec![0.0; growth.chart.dim()];
        let pending = std::mem::take(&mut growth.unmatched);
        for j in pending {
            growth.chart.apply(growth.occ.point(j), &mut cbuf);
            if other
                .find_within(&growth.chart, &cbuf, growth.eps, &mut keys)
                .is_some()
            {
                growth.matched.push(j);
            } else {
                growth.unmatched.push(j);
            }
        }
        growth.matched.sort_unstable();
    }

    fn pool(&self, growth: &Growth) -> Pool {
        let n = self.sys.dim();
        let mut extremes = Vec::new();
        if !growth.matched.is_empty() {
            for i in (0..n).filter(|&i| !self.sys.group().is_lattice(i)) {
                let mut by: Vec<usize> = growth.matched.clone();
                by.sort_by(|&a, &b| {
                    growth.occ.point(a)[i]
                        .total_cmp(&growth.occ.point(b)[i])
                        .then(a.cmp(&b))
                });
                let k = FRONTIER_CELLS.min(by.len());
                extremes.push(by[..k].to_vec());
                extremes.push(by[by.len() - k..].to_vec());
            }
        }
        Pool {
            cells: growth.matched.clone(),
            extremes,
        }
    }

    /// Grows the forward and backward trees in rounds of one batch each.
    /// Restarts come from cells already within `eps` of the other tree,
    /// half of them from the cells extreme in some coordinate.
    fn grow_pair(
        &self,
        roots: &Roots,
        chart: &Chart,
        eps: f64,
        visited: &mut Option<Vec<bool>>,
    ) -> (Growth, Growth) {
        let mask = lattice_mask(self.sys);
        let new = |direction| Growth {
            tree: Tree {
                direction,
                trajs: Vec::new(),
            },
            cloud: FineCloud::new(eps / 2.0, chart.circle_mask()),
            occ: Occupancy::new(self.params.restart_cell, &mask),
            chart: chart.clone(),
            eps,
            matched: Vec::new(),
            unmatched: Vec::new(),
        };
        let mut fwd = new(Direction::Forward);
        let mut bwd = new(Direction::Backward);
        let mut b0 = 0;
        while b0 < self.params.n_samples {
            let b1 = (b0 + self.params.batch_size).min(self.params.n_samples);
            let (fp, bp) = (self.pool(&fwd), self.pool(&bwd));
            let fres = self.run_batch(roots, &fwd, &fp, FORWARD_TAG, b0..b1);
            let bres = self.run_batch(roots, &bwd, &bp, BACKWARD_TAG, b0..b1);
            self.absorb(&mut fwd, fres, visited);
            self.absorb(&mut bwd, bres, visited);
            self.refresh(&mut fwd, &bwd.cloud);
            self.refresh(&mut bwd, &fwd.cloud);
            b0 = b1;
        }
        (fwd, bwd)
    }

    /// A single tree without restarts.
    fn grow_plain(&self, roots: &Roots, direction: Direction) -> Tree {
        let chart = Chart::identity(lattice_mask(self.sys));
        let mut g = Growth {
            tree: Tree {
                direction,
                trajs: Vec::new(),
            },
            cloud: FineCloud::new(1.0, chart.circle_mask()),
            occ: Occupancy::new(self.params.restart_cell, &lattice_mask(self.sys)),
            chart,
            eps: 1.0,
            matched: Vec::new(),
            unmatched: Vec::new(),
        };
        let pool = Pool {
            cells: Vec::new(),
            extremes: Vec::new(),
        };
        let mut b0 = 0;
        while b0 < self.params.n_samples {
            let b1 = (b0 + self.params.batch_size).min(self.params.n_samples);
            let res = self.run_batch(roots, &g, &pool, FORWARD_TAG, b0..b1);
            for (rec, _) in res {
                g.tree.trajs.push(rec);
            }
            b0 = b1;
        }
        g.tree
    }

    /// Replays every trajectory of `tree` in parallel batches; `merge`
    /// receives the per-trajectory results in creation order.
    fn scan<T, F, M>(&self, tree: &Tree, work: F, mut merge: M)
    where
        T: Send,
        F: Fn(u32, &TrajRecord, &mut Kernel) -> T + Sync,
        M: FnMut(u32, T),
    {
        let total = tree.trajs.len();
        let mut b0 = 0;
        while b0 < total {
            let b1 = (b0 + self.params.batch_size).min(total);
            let out: Vec<T> = (b0..b1)
                .into_par_iter()
                .map(|i| {
                    let mut kernel = Kernel::new(self.sys);
                    work(i as u32, &tree.trajs[i], &mut kernel)
                })
                .collect();
            for (i, t) in out.into_iter().enumerate() {
                merge((b0 + i) as u32, t);
            }
            b0 = b1;
        }
    }

    fn point_of(&self, tree: &Tree, t: u32, idx: u32) -> Vec<f64> {
        let mut kernel = Kernel::new(self.sys);
        let mut out = Vec::new();
        replay(
            &mut kernel,
            &tree.trajs[t as usize],
            self.params.step,
            tree.direction,
            &self.window,
            |k, x| {
                if k == idx {
                    out = x.to_vec();
                    false
                } else {
                    true
                }
            },
        );
        out
    }

    /// Recorded legs from a root to sample `idx` of `t`; with `reversed`
    /// (backward trees only) the legs run forward in time from the sample
    /// back to the root.
    fn legs(&self, tree: &Tree, t: u32, idx: u32, reversed: bool) -> Vec<WitnessLeg> {
        let pt = |v: &[f64]| GroupPoint::from_coords(DVector::from_column_slice(v));
        let chain = tree.chain(t, idx);
        let mut legs: Vec<WitnessLeg> = chain
            .iter()
            .enumerate()
            .map(|(k, &(tr, cut))| {
                let rec = &tree.trajs[tr as usize];
                let end = match chain.get(k + 1) {
                    Some(&(next, _)) => tree.trajs[next as usize].start.clone(),
                    None => self.point_of(tree, t, idx),
                };
                let law = rec.law.truncate(index_time(&rec.law, self.params.step, cut as usize));
                WitnessLeg {
                    start: pt(&rec.start),
                    law,
                    direction: tree.direction,
                    end: pt(&end),
                }
            })
            .collect();
        if reversed {
            legs.reverse();
            for leg in &mut legs {
                std::mem::swap(&mut leg.start, &mut leg.end);
                leg.law = leg.law.reversed();
                leg.direction = Direction::Forward;
            }
        }
        legs
    }

    /// Last sample of each trajectory within `eps` of `other` (in `chart`).
    fn last_matches(&self, tree: &Tree, other: &FineCloud, chart: &Chart, eps: f64) -> Vec<Exit> {
        let mut out = Vec::with_capacity(tree.trajs.len());
        self.scan(
            tree,
            |_, rec, kernel| {
                let mut keys = Vec::new();
                let mut cbuf = vec![0.0; chart.dim()];
                let mut last = Exit::none();
                replay(kernel, rec, self.params.step, tree.direction, &self.window, |k, x| {
                    chart.apply(x, &mut cbuf);
                    if let Some(src) = other.find_within(chart, &cbuf, eps, &mut keys) {
                        last = Exit {
                            end: k as i64,
                            via: Via::Own(src),
                        };
                    }
                    true
                });
                last
            },
            |_, e| out.push(e),
        );
        out
    }
}

/// One tree under construction with its lookup structures.
struct Growth {
    tree: Tree,
    cloud: FineCloud,
    occ: Occupancy,
    chart: Chart,
    eps: f64,
    /// Occupied cells within `eps` of the other tree, ascending.
    matched: Vec<usize>,
    unmatched: Vec<usize>,
}

struct Pool {
    cells: Vec<usize>,
    extremes: Vec<Vec<usize>>,
}

/// How a trajectory reaches the other tree.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Via {
    None,
    /// Its own sample `end` matches this sample of the other tree.
    Own((u32, u32)),
    /// Through a child trajectory branching at sample `end`.
    Child(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Exit {
    end: i64,
    via: Via,
}

impl Exit {
    fn none() -> Self {
        Self {
            end: -1,
            via: Via::None,
        }
    }
}

/// Pushes match information from children to their ancestors.
fn propagate(tree: &Tree, exits: &mut [Exit]) {
    for c in (0..tree.trajs.len()).rev() {
        if exits[c].end < 0 {
            continue;
        }
        if let Some((p, idx)) = tree.trajs[c].parent {
            let pe = &mut exits[p as usize];
            if (idx as i64) > pe.end {
                *pe = Exit {
                    end: idx as i64,
                    via: Via::Child(c as u32),
                };
            }
        }
    }
}

/// Reference from an estimate point into the sampling archive.
#[derive(Debug, Clone, Copy, PartialEq)]
enum PointRef {
    /// Root of a trajectory, kept because `F` is flow-invariant.
    Root { tree: u8, traj: u32 },
    /// Interior sample of a periodic witness.
    Marked { tree: u8, traj: u32, idx: u32 },
    /// Sample matched against the other tree.
    Matched {
        tree: u8,
        traj: u32,
        idx: u32,
        partner: (u32, u32),
    },
    /// Plain reachable sample.
    Sampled { traj: u32, idx: u32 },
}

impl PointRef {
    fn tag(&self) -> &'static str {
        match self {
            PointRef::Root { .. } => "root",
            PointRef::Marked { tree: 0, .. } | PointRef::Matched { tree: 0, .. } => "forward",
            PointRef::Marked { .. } | PointRef::Matched { .. } => "backward",
            PointRef::Sampled { .. } => "sample",
        }
    }
}

#[derive(Debug)]
struct Archive {
    trees: Vec<Tree>,
    exits: Vec<Vec<Exit>>,
    chart: Chart,
}

/// Which object an estimate approximates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateKind {
    Reachable(Direction),
    PeriodicSet,
    ControlSet,
}

/// A point cloud (and optional grid labelling) approximating a region.
#[derive(Debug, Clone)]
pub struct RegionEstimate {
    pub kind: EstimateKind,
    pub points: Vec<GroupPoint>,
    pub grid: Option<GridClassification>,
    /// Min/max per coordinate; `None` on lattice coordinates.
    pub bbox: Vec<Option<(f64, f64)>>,
    pub params: SamplingParams,
    pub epsilon: f64,
    pub diagnostics: Vec<String>,
    refs: Vec<PointRef>,
    archive: Option<Arc<Archive>>,
}

/// One recorded trajectory piece of a witness: `law`, run from `start`
/// in `direction`, ends at `end`.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessLeg {
    pub start: GroupPoint,
    pub law: ControlLaw,
    pub direction: Direction,
    pub end: GroupPoint,
}

/// Certificate for an estimate point. The inbound legs lead from a root
/// (a point of `F`, the identity, or the sampling origin) to `jump_from`;
/// the outbound legs lead from `jump_to` back to a root. Consecutive legs
/// share their endpoints exactly, and `jump` is the matching-chart
/// distance between `jump_from` and `jump_to`, below the estimate's `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub inbound: Vec<WitnessLeg>,
    pub outbound: Vec<WitnessLeg>,
    pub jump: f64,
    pub point: GroupPoint,
    /// Leg holding the point (inbound legs first, then outbound) and the
    /// time along it.
    pub location: (usize, f64),
}

/// Numerical re-check of a witness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessAudit {
    /// Largest gap between a re-simulated leg and its recorded end.
    pub leg_gap: f64,
    /// Gap between the re-simulated leg and the point.
    pub point_gap: f64,
    pub jump: f64,
}

impl Witness {
    fn legs(&self) -> impl Iterator<Item = &WitnessLeg> {
        self.inbound.iter().chain(&self.outbound)
    }

    pub fn start(&self) -> &GroupPoint {
        self.legs().next().map_or(&self.point, |l| &l.start)
    }

    pub fn end(&self) -> &GroupPoint {
        self.legs().last().map_or(&self.point, |l| &l.end)
    }

    pub fn jump_from(&self) -> &GroupPoint {
        self.inbound.last().map_or(self.start(), |l| &l.end)
    }

    pub fn jump_to(&self) -> &GroupPoint {
        self.outbound.first().map_or(self.jump_from(), |l| &l.start)
    }

    /// Total time along all legs.
    pub fn duration(&self) -> f64 {
        self.legs().map(|l| l.law.duration()).sum()
    }

    /// Re-simulates every leg at `step`.
    pub fn audit(&self, sys: &LinearSystemSpec, step: f64) -> Result<WitnessAudit> {
        let g = sys.group();
        let run = |leg: &WitnessLeg, law: &ControlLaw| -> Result<GroupPoint> {
            if law.is_empty() {
                return Ok(leg.start.clone());
            }
            Ok(sys.simulate_directed(&leg.start, law, step, leg.direction)?.end().clone())
        };
        let mut leg_gap: f64 = 0.0;
        for leg in self.legs() {
            leg_gap = leg_gap.max(g.distance(&run(leg, &leg.law)?, &leg.end));
        }
        let point_gap = match self.legs().nth(self.location.0) {
            Some(leg) => g.distance(&run(leg, &leg.law.truncate(self.location.1))?, &self.point),
            None => g.distance(self.start(), &self.point),
        };
        Ok(WitnessAudit {
            leg_gap,
            point_gap,
            jump: self.jump,
        })
    }
}

impl RegionEstimate {
    fn empty(kind: EstimateKind, sys: &LinearSystemSpec, params: &SamplingParams, epsilon: f64) -> Self {
        Self {
            kind,
            points: Vec::new(),
            grid: None,
            bbox: vec![None; sys.dim()],
            params: params.clone(),
            epsilon,
            diagnostics: Vec::new(),
            refs: Vec::new(),
            archive: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Label of point `i`: `root`, `forward`, `backward` or `sample`.
    pub fn tag(&self, i: usize) -> &'static str {
        self.refs[i].tag()
    }

    /// Widths of the bounding box on non-lattice coordinates.
    pub fn widths(&self) -> Vec<f64> {
        self.bbox.iter().flatten().map(|(lo, hi)| hi - lo).collect()
    }

    /// Rebuilds the witness of point `i` from the sampling archive.
    pub fn witness(&self, sys: &LinearSystemSpec, i: usize) -> Result<Witness> {
        let archive = self
            .archive
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("estimate has no archive".into()))?;
        let r = *self
            .refs
            .get(i)
            .ok_or_else(|| Error::InvalidInput(format!("point index {i} out of range")))?;
        let step = self.params.step;
        let sampler = Sampler::new(sys, &self.params, None);
        let point = self.points[i].clone();
        let (fw, bw) = (&archive.trees[0], archive.trees.get(1));
        let bw = || bw.ok_or_else(|| Error::InvalidInput("estimate has one tree".into()));
        let jump = |inb: &[WitnessLeg], out: &[WitnessLeg]| match (inb.last(), out.first()) {
            (Some(a), Some(b)) => archive.chart_distance(&a.end, &b.start),
            _ => 0.0,
        };
        let locate = |tree: &Tree, chain: &[(u32, u32)], traj: u32, idx: u32, reversed: bool| {
            let k = chain.iter().position(|c| c.0 == traj).expect("point lies on its chain");
            let law = &tree.trajs[traj as usize].law;
            let t = index_time(law, step, idx as usize);
            if reversed {
                let d = index_time(law, step, chain[k].1 as usize);
                (chain.len() - 1 - k, d - t)
            } else {
                (k, t)
            }
        };
        let w = match r {
            PointRef::Root { .. } => Witness {
                inbound: Vec::new(),
                outbound: Vec::new(),
                jump: 0.0,
                point,
                location: (0, 0.0),
            },
            PointRef::Sampled { traj, idx } => {
                let inbound = sampler.legs(fw, traj, idx, false);
                let last = inbound.len() - 1;
                let d = inbound[last].law.duration();
                Witness {
                    inbound,
                    outbound: Vec::new(),
                    jump: 0.0,
                    point,
                    location: (last, d),
                }
            }
            PointRef::Matched {
                tree,
                traj,
                idx,
                partner,
            } => {
                let bt = bw()?;
                let (f_ref, b_ref) = if tree == 0 {
                    ((traj, idx), partner)
                } else {
                    (partner, (traj, idx))
                };
                let inbound = sampler.legs(fw, f_ref.0, f_ref.1, false);
                let outbound = sampler.legs(bt, b_ref.0, b_ref.1, true);
                let location = if tree == 0 {
                    (inbound.len() - 1, inbound[inbound.len() - 1].law.duration())
                } else {
                    (inbound.len(), 0.0)
                };
                Witness {
                    jump: jump(&inbound, &outbound),
                    inbound,
                    outbound,
                    point,
                    location,
                }
            }
            PointRef::Marked { tree, traj, idx } => {
                let bt = bw()?;
                let exits = &archive.exits[tree as usize];
                let mut cur = traj;
                let (exit, partner) = loop {
                    match exits[cur as usize].via {
                        Via::Own(src) => break ((cur, exits[cur as usize].end as u32), src),
                        Via::Child(c) => cur = c,
                        Via::None => {
                            return Err(Error::Numerical("marked point without exit".into()))
                        }
                    }
                };
                if tree == 0 {
                    let inbound = sampler.legs(fw, exit.0, exit.1, false);
                    let outbound = sampler.legs(bt, partner.0, partner.1, true);
                    let location = locate(fw, &fw.chain(exit.0, exit.1), traj, idx, false);
                    Witness {
                        jump: jump(&inbound, &outbound),
                        inbound,
                        outbound,
                        point,
                        location,
                    }
                } else {
                    let inbound = sampler.legs(fw, partner.0, partner.1, false);
                    let outbound = sampler.legs(bt, exit.0, exit.1, true);
                    let (k, t) = locate(bt, &bt.chain(exit.0, exit.1), traj, idx, true);
                    Witness {
                        jump: jump(&inbound, &outbound),
                        location: (inbound.len() + k, t),
                        inbound,
                        outbound,
                        point,
                    }
                }
            }
        };
        Ok(w)
    }
}

impl Archive {
    fn chart_distance(&self, a: &GroupPoint, b: &GroupPoint) -> f64 {
        let mut ca = vec![0.0; self.chart.dim()];
        let mut cb = ca.clone();
        self.chart.apply(a.coords().as_slice(), &mut ca);
        self.chart.apply(b.coords().as_slice(), &mut cb);
        self.chart.distance(&ca, &cb)
    }
}

/// Collects estimate points, thinned to one per `resolution` cell, and
/// labels grid cells.
struct PointSink {
    lattice: Vec<bool>,
    indexer: CellIndexer,
    seen: HashMap<u128, ()>,
    points: Vec<Vec<f64>>,
    refs: Vec<PointRef>,
    marked: Option<Vec<bool>>,
    grid: Option<GridSpec>,
    extremes: Vec<Option<[(f64, usize); 2]>>,
    extreme_points: Vec<(Vec<f64>, PointRef)>,
}

impl PointSink {
    fn new(sys: &LinearSystemSpec, resolution: f64, grid: Option<&GridSpec>) -> Self {
        let lattice = lattice_mask(sys);
        Self {
            indexer: CellIndexer::new(resolution, &lattice),
            lattice,
            seen: HashMap::new(),
            points: Vec::new(),
            refs: Vec::new(),
            marked: grid.map(|g| vec![false; g.cell_count()]),
            grid: grid.cloned(),
            extremes: vec![None; sys.dim()],
            extreme_points: Vec::new(),
        }
    }

    fn add(&mut self, x: &[f64], r: PointRef) {
        if let (Some(g), Some(m)) = (&self.grid, self.marked.as_mut()) {
            if let Some(c) = g.cell_of(x) {
                m[c] = true;
            }
        }
        for i in 0..x.len() {
            if self.lattice[i] {
                continue;
            }
            let e = &mut self.extremes[i];
            let lo_new = e.is_none_or(|v| x[i] < v[0].0);
            let hi_new = e.is_none_or(|v| x[i] > v[1].0);
            if lo_new || hi_new {
                let slot = self.extreme_points.len();
                self.extreme_points.push((x.to_vec(), r));
                let cur = e.get_or_insert([(x[i], slot), (x[i], slot)]);
                if lo_new {
                    cur[0] = (x[i], slot);
                }
                if hi_new {
                    cur[1] = (x[i], slot);
                }
            }
        }
        if let Some(k) = self.indexer.key(x) {
            if self.seen.insert(k, ()).is_none() {
                self.points.push(x.to_vec());
                self.refs.push(r);
            }
        }
    }

    fn finish(mut self, est: &mut RegionEstimate, visited: Option<Vec<bool>>) {
        let mut slots: Vec<usize> = self
            .extremes
            .iter()
            .flatten()
            .flat_map(|e| [e[0].1, e[1].1])
            .collect();
        slots.sort_unstable();
        slots.dedup();
        for s in slots {
            let (x, r) = self.extreme_points[s].clone();
            if !self.points.contains(&x) {
                self.points.push(x);
                self.refs.push(r);
            }
        }
        est.bbox = self
            .extremes
            .iter()
            .map(|e| e.map(|v| (v[0].0, v[1].0)))
            .collect();
        est.points = self
            .points
            .drain(..)
            .map(|v| GroupPoint::from_coords(DVector::from_vec(v)))
            .collect();
        est.refs = std::mem::take(&mut self.refs);
        if let (Some(g), Some(m)) = (self.grid, self.marked) {
            let visited = visited.unwrap_or_else(|| vec![false; g.cell_count()]);
            let visited: Vec<bool> = visited.iter().zip(&m).map(|(v, m)| *v || *m).collect();
            est.grid = Some(GridClassification::new(g, &visited, &m));
        }
    }
}

fn validate_grid(sys: &LinearSystemSpec, grid: Option<&GridSpec>) -> Result<()> {
    if let Some(g) = grid {
        check_len(sys.dim(), g.dim())?;
        for (i, a) in g.axes().iter().enumerate() {
            if a.is_circle() != sys.group().is_lattice(i) {
                return Err(Error::InvalidInput(format!(
                    "grid axis {i} must be a circle exactly when the coordinate is a lattice coordinate"
                )));
            }
        }
    }
    Ok(())
}

/// Points of trajectories under random laws from `x0`, run forward
/// (reachable set) or under the time-reversed field (points that reach
/// `x0`). No restarts: each law starts at `x0`.
pub fn sample_reachable(
    sys: &LinearSystemSpec,
    x0: &GroupPoint,
    grid: Option<&GridSpec>,
    params: &SamplingParams,
    direction: Direction,
) -> Result<RegionEstimate> {
    check_len(sys.dim(), x0.dim())?;
    params.validate(sys.dim())?;
    validate_grid(sys, grid)?;
    if params.n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be positive".into()));
    }
    let mut p = params.clone();
    p.restart_prob = 0.0;
    let start = sys.group().point(x0.coords().clone())?;
    let roots = Roots::Points(vec![start.coords().as_slice().to_vec()]);
    let sampler = Sampler::new(sys, &p, None);
    let tree = sampler.grow_plain(&roots, direction);
    Ok(collect_samples(sys, &p, tree, sampler.window.clone(), direction, grid))
}

/// Points of trajectories under the given laws from `x0`.
pub fn reachable_from_laws(
    sys: &LinearSystemSpec,
    x0: &GroupPoint,
    laws: &[ControlLaw],
    step: f64,
    direction: Direction,
) -> Result<RegionEstimate> {
    check_len(sys.dim(), x0.dim())?;
    for l in laws {
        l.check_in(sys.omega())?;
    }
    let t_max = laws.iter().map(|l| l.duration()).fold(0.0, f64::max);
    let mut p = SamplingParams::new(laws.len(), t_max.max(step), 0);
    p.step = step;
    p.restart_prob = 0.0;
    p.validate(sys.dim())?;
    let start = sys.group().point(x0.coords().clone())?.into_coords().as_slice().to_vec();
    let tree = Tree {
        direction,
        trajs: laws
            .iter()
            .map(|l| TrajRecord {
                start: start.clone(),
                law: l.clone(),
                parent: None,
                elapsed0: 0.0,
            })
            .collect(),
    };
    let window = Window::new(sys, &p);
    Ok(collect_samples(sys, &p, tree, window, direction, None))
}

fn collect_samples(
    sys: &LinearSystemSpec,
    p: &SamplingParams,
    tree: Tree,
    window: Window,
    direction: Direction,
    grid: Option<&GridSpec>,
) -> RegionEstimate {
    let mut est = RegionEstimate::empty(EstimateKind::Reachable(direction), sys, p, 0.0);
    let sampler = Sampler::new(sys, p, None);
    let mut sink = PointSink::new(sys, p.resolution, grid);
    sampler.scan(
        &tree,
        |_, rec, kernel| {
            let mut pts = Vec::new();
            replay(kernel, rec, p.step, direction, &window, |_, x| {
                pts.extend_from_slice(x);
                true
            });
            pts
        },
        |t, pts| {
            for (k, x) in pts.chunks(sys.dim()).enumerate() {
                sink.add(x, PointRef::Sampled { traj: t, idx: k as u32 });
            }
        },
    );
    sink.finish(&mut est, None);
    est.archive = Some(Arc::new(Archive {
        trees: vec![tree],
        exits: Vec::new(),
        chart: Chart::identity(lattice_mask(sys)),
    }));
    est
}

/// Estimate of `Per(F; Σ)`: samples on witness trajectories that start
/// in `F`, pass within `ε` of a point that reaches `F`, and lie strictly
/// inside the witness time interval. Roots are included when `F` is
/// invariant under the drift flow.
pub fn estimate_per_set(
    sys: &LinearSystemSpec,
    query: &PerSetQuery,
    grid: Option<&GridSpec>,
    params: &SamplingParams,
) -> Result<RegionEstimate> {
    params.validate(sys.dim())?;
    validate_grid(sys, grid)?;
    let fset = FSet::new(sys, &query.f_kind)?;
    let eps = query.epsilon;
    let mut est = RegionEstimate::empty(EstimateKind::PeriodicSet, sys, params, eps);
    let sampler = Sampler::new(sys, params, grid);
    let mut visited = grid.map(|g| vec![false; g.cell_count()]);
    let (fg, bg) = sampler.grow_pair(&fset.roots, &fset.chart, eps, &mut visited);
    let (ft, fcloud, bt, bcloud) = (fg.tree, fg.cloud, bg.tree, bg.cloud);
    let mut fexit = sampler.last_matches(&ft, &bcloud, &fset.chart, eps);
    let mut bexit = sampler.last_matches(&bt, &fcloud, &fset.chart, eps);
    drop((fcloud, bcloud));
    propagate(&ft, &mut fexit);
    propagate(&bt, &mut bexit);

    let mut sink = PointSink::new(sys, params.resolution, grid);
    let mut matched = 0usize;
    for (tag, tree, exits) in [(0u8, &ft, &fexit), (1u8, &bt, &bexit)] {
        matched += exits.iter().filter(|e| e.end >= 0).count();
        sampler.scan(
            tree,
            |t, rec, kernel| {
                let end = exits[t as usize].end;
                let root = rec.parent.is_none() && fset.phi_invariant;
                let lo = if rec.parent.is_some() && rec.elapsed0 > 0.0 { 0 } else { 1 };
                let mut pts: Vec<(u32, Vec<f64>)> = Vec::new();
                if end <= lo as i64 && !root {
                    return pts;
                }
                replay(kernel, rec, params.step, tree.direction, &sampler.window, |k, x| {
                    if (k == 0 && root) || (k >= lo && (k as i64) < end) {
                        pts.push((k, x.to_vec()));
                    }
                    (k as i64) + 1 < end
                });
                pts
            },
            |t, pts| {
                for (k, x) in pts {
                    let r = if k == 0 && tree.trajs[t as usize].parent.is_none() {
                        PointRef::Root { tree: tag, traj: t }
                    } else {
                        PointRef::Marked {
                            tree: tag,
                            traj: t,
                            idx: k,
                        }
                    };
                    sink.add(&x, r);
                }
            },
        );
    }
    sink.finish(&mut est, visited);
    if matched == 0 {
        est.diagnostics
            .push("no witness found: no forward sample came within tolerance of a backward sample".into());
    }
    if est.is_empty() {
        est.diagnostics.push("estimate is empty".into());
    }
    est.archive = Some(Arc::new(Archive {
        trees: vec![ft, bt],
        exits: vec![fexit, bexit],
        chart: fset.chart.clone(),
    }));
    Ok(est)
}

/// Estimate of the interior of the control set containing the identity:
/// forward samples within `ε` of backward samples and vice versa, both
/// trees rooted at the identity, or at `G⁰` when `query` asks for the
/// central subgroup (whose points are kept as a seed region).
pub fn estimate_control_set(
    sys: &LinearSystemSpec,
    query: &PerSetQuery,
    grid: Option<&GridSpec>,
    params: &SamplingParams,
) -> Result<RegionEstimate> {
    params.validate(sys.dim())?;
    validate_grid(sys, grid)?;
    if matches!(query.f_kind, FKind::PointList(_)) {
        return Err(Error::InvalidInput(
            "control set seeds are the identity or the central subgroup".into(),
        ));
    }
    let fset = FSet::new(sys, &query.f_kind)?;
    let eps = query.epsilon;
    let chart = Chart::identity(lattice_mask(sys));
    let mut est = RegionEstimate::empty(EstimateKind::ControlSet, sys, params, eps);
    let sampler = Sampler::new(sys, params, grid);
    let mut visited = grid.map(|g| vec![false; g.cell_count()]);
    let (fg, bg) = sampler.grow_pair(&fset.roots, &chart, eps, &mut visited);
    let (ft, fcloud, bt, bcloud) = (fg.tree, fg.cloud, bg.tree, bg.cloud);
    if let Some(msg) = degeneracy(&fcloud, sys.dim()) {
        est.diagnostics.push(msg);
    }
    let mut sink = PointSink::new(sys, params.resolution, grid);
    for (tag, tree, other) in [(0u8, &ft, &bcloud), (1u8, &bt, &fcloud)] {
        sampler.scan(
            tree,
            |_, rec, kernel| {
                let mut keys = Vec::new();
                let mut pts: Vec<(u32, (u32, u32), Vec<f64>)> = Vec::new();
                replay(kernel, rec, params.step, tree.direction, &sampler.window, |k, x| {
                    if let Some(src) = other.find_within(&chart, x, eps, &mut keys) {
                        pts.push((k, src, x.to_vec()));
                    }
                    true
                });
                pts
            },
            |t, pts| {
                for (k, partner, x) in pts {
                    let r = if k == 0 && tree.trajs[t as usize].parent.is_none() {
                        PointRef::Root { tree: tag, traj: t }
                    } else {
                        PointRef::Matched {
                            tree: tag,
                            traj: t,
                            idx: k,
                            partner,
                        }
                    };
                    sink.add(&x, r);
                }
            },
        );
    }
    if matches!(query.f_kind, FKind::CentralSubgroup) {
        for (t, rec) in ft.trajs.iter().enumerate() {
            if rec.parent.is_none() && sampler.window.contains(&rec.start) {
                sink.add(&rec.start, PointRef::Root { tree: 0, traj: t as u32 });
            }
        }
    }
    drop((fcloud, bcloud));
    sink.finish(&mut est, visited);
    if est.is_empty() {
        est.diagnostics.push("estimate is empty".into());
    }
    est.archive = Some(Arc::new(Archive {
        trees: vec![ft, bt],
        exits: Vec::new(),
        chart,
    }));
    Ok(est)
}

/// Flags a forward cloud that is flat in some direction.
fn degeneracy(cloud: &FineCloud, n: usize) -> Option<String> {
    let m = cloud.len();
    if m < n + 1 {
        return Some(format!("forward samples occupy only {m} cells"));
    }
    let mut mean = DVector::zeros(n);
    for i in 0..m {
        mean += DVector::from_column_slice(cloud.rep(i));
    }
    mean /= m as f64;
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..m {
        let d = DVector::from_column_slice(cloud.rep(i)) - &mean;
        cov += &d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov / m as f64);
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    (max <= 0.0 || min < 1e-8 * max)
        .then(|| "forward samples look confined to a lower-dimensional set".to_string())
}

/// Result of the no-return spot check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoReturnReport {
    pub trajectories: usize,
    pub violations: usize,
}

/// Re-simulates the witness trajectories of randomly chosen estimate
/// points and counts those that are inside the estimate, then clearly
/// outside (no `In` cell within `tolerance` cells, or off the grid), then
/// inside again.
pub fn no_return_check(
    sys: &LinearSystemSpec,
    est: &RegionEstimate,
    samples: usize,
    seed: u64,
    tolerance: usize,
) -> Result<NoReturnReport> {
    let grid = est
        .grid
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("no-return check needs a grid classification".into()))?;
    if est.is_empty() {
        return Ok(NoReturnReport {
            trajectories: 0,
            violations: 0,
        });
    }
    let spec = grid.spec();
    let near_in: Vec<bool> = (0..spec.cell_count())
        .map(|c| {
            spec.neighborhood(c, tolerance)
                .iter()
                .any(|&d| grid.classes()[d] == CellClass::In)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = NoReturnReport {
        trajectories: 0,
        violations: 0,
    };
    for _ in 0..samples {
        let i = rng.random_range(0..est.len());
        let w = est.witness(sys, i)?;
        let mut path: Vec<GroupPoint> = Vec::new();
        for leg in w.inbound.iter().chain(&w.outbound) {
            if leg.law.is_empty() {
                continue;
            }
            let traj = sys.simulate_directed(&leg.start, &leg.law, est.params.step, leg.direction)?;
            path.extend(traj.points);
        }
        if path.is_empty() {
            continue;
        }
        report.trajectories += 1;
        // 0: before entering, 1: inside, 2: left after being inside
        let mut state = 0;
        let mut violated = false;
        for p in &path {
            let x = p.coords().as_slice();
            let cell = spec.cell_of(x);
            let inside = cell.is_some_and(|c| grid.classes()[c] == CellClass::In);
            let clearly_out = cell.is_none_or(|c| !near_in[c]);
            state = match (state, inside, clearly_out) {
                (0, true, _) => 1,
                (1, _, true) => 2,
                (2, true, _) => {
                    violated = true;
                    2
                }
                (s, _, _) => s,
            };
        }
        if violated {
            report.violations += 1;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Bounded,
    Unbounded,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Bounded => "BOUNDED",
            Verdict::Unbounded => "UNBOUNDED",
            Verdict::Inconclusive => "INCONCLUSIVE",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundednessReport {
    pub verdict: Verdict,
    pub schedule: Vec<(f64, usize)>,
    /// Bounding-box widths on non-lattice coordinates in whole resolution
    /// cells, per schedule entry.
    pub widths: Vec<Vec<f64>>,
    /// Largest width per schedule entry.
    pub sizes: Vec<f64>,
    /// Relative growth between consecutive entries.
    pub growth: Vec<f64>,
    pub central_compact: bool,
    /// `None` when the verdict is inconclusive.
    pub agrees: Option<bool>,
    pub final_estimate: RegionEstimate,
}

/// Runs [`estimate_per_set`] at each `(t_max, budget)` entry and reads the
/// growth of the bounding box, measured in whole cells of the point-cloud
/// resolution: stable to within 2% over the last two
/// entries is bounded, monotone growth past `threshold` times the first
/// size is unbounded, anything else is inconclusive.
pub fn boundedness_report(
    sys: &LinearSystemSpec,
    query: &PerSetQuery,
    schedule: &[(f64, usize)],
    base: &SamplingParams,
    threshold: f64,
) -> Result<BoundednessReport> {
    if schedule.len() < 3 {
        return Err(Error::InvalidInput("schedule needs at least three entries".into()));
    }
    if schedule
        .windows(2)
        .any(|w| w[1].0 < w[0].0 || w[1].1 < w[0].1 || w[1] == w[0])
    {
        return Err(Error::InvalidInput("schedule must be increasing".into()));
    }
    let mut widths = Vec::new();
    let mut last = None;
    for &(t_max, budget) in schedule {
        let mut p = base.clone();
        p.t_max = t_max;
        p.n_samples = budget;
        let est = estimate_per_set(sys, query, None, &p)?;
        widths.push(cell_widths(&est, p.resolution));
        last = Some(est);
    }
    let sizes: Vec<f64> = widths
        .iter()
        .map(|w| w.iter().cloned().fold(0.0, f64::max))
        .collect();
    let growth: Vec<f64> = widths
        .windows(2)
        .map(|w| relative_growth(&w[0], &w[1]))
        .collect();
    let k = growth.len();
    let stable = growth[k - 2] < STABLE_GROWTH && growth[k - 1] < STABLE_GROWTH && sizes[0] > 0.0;
    let monotone = sizes.windows(2).all(|w| w[1] >= w[0]);
    let verdict = if stable {
        Verdict::Bounded
    } else if monotone && sizes[0] > 0.0 && sizes[sizes.len() - 1] >= threshold * sizes[0] {
        Verdict::Unbounded
    } else {
        Verdict::Inconclusive
    };
    let central_compact = central_subgroup_is_compact(sys)?;
    let agrees = match verdict {
        Verdict::Inconclusive => None,
        v => Some((v == Verdict::Bounded) == central_compact),
    };
    Ok(BoundednessReport {
        verdict,
        schedule: schedule.to_vec(),
        widths,
        sizes,
        growth,
        central_compact,
        agrees,
        final_estimate: last.expect("nonempty schedule"),
    })
}

/// Bounding-box widths rounded out to whole cells of side `res`, with
/// cells centered on multiples of `res`.
fn cell_widths(est: &RegionEstimate, res: f64) -> Vec<f64> {
    let cell = |v: f64| (v / res + 0.5).floor();
    est.bbox
        .iter()
        .flatten()
        .map(|(lo, hi)| (cell(*hi) - cell(*lo) + 1.0) * res)
        .collect()
}

fn relative_growth(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            if *x > 0.0 {
                (y - x).abs() / x
            } else if *y > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}
