//! Linear control systems `ẋ = Dx + Σ u_j Z_j(x)` on a nilpotent group, with
//! piecewise-constant controls and a boundary-aligned RK4 integrator.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::algebra::{Derivation, AUTOMORPHISM_TOL};
use crate::error::{check_len, Error, Result};
use crate::nilgroup::{GroupPoint, NilGroupSpec};

/// Default integration step.
pub const DEFAULT_STEP: f64 = 1e-3;
const BOX_TOL: f64 = 1e-12;

/// Axis-aligned control range `Ω = Π [lo_j, hi_j]` with `0` in its interior.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBox {
    bounds: Vec<(f64, f64)>,
}

impl ControlBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidInput("control box needs at least one axis".into()));
        }
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo < 0.0 && 0.0 < hi) {
                return Err(Error::InvalidInput(format!(
                    "control axis {} is [{lo}, {hi}]; 0 must be interior",
                    j + 1
                )));
            }
        }
        Ok(Self { bounds })
    }

    /// `[-r, r]^m`.
    pub fn symmetric(m: usize, r: f64) -> Result<Self> {
        Self::new(vec![(-r, r); m])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u
                .iter()
                .zip(&self.bounds)
                .all(|(v, &(lo, hi))| *v >= lo - BOX_TOL && *v <= hi + BOX_TOL)
    }

    /// Uniform sample from the box.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.bounds
            .iter()
            .map(|&(lo, hi)| rng.random_range(lo..=hi))
            .collect()
    }

    /// Uniform sample from the vertex set.
    pub fn sample_vertex<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.bounds
            .iter()
            .map(|&(lo, hi)| if rng.random_bool(0.5) { hi } else { lo })
            .collect()
    }
}

/// One constant piece of a control law.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub duration: f64,
    pub value: Vec<f64>,
}

/// Finite-horizon piecewise-constant control.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControlLaw {
    pieces: Vec<Piece>,
}

impl ControlLaw {
    pub fn new(pieces: Vec<Piece>) -> Result<Self> {
        if let Some(p) = pieces.iter().find(|p| !(p.duration > 0.0) || !p.duration.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "piece duration {} must be positive",
                p.duration
            )));
        }
        if let Some(first) = pieces.first() {
            let m = first.value.len();
            if pieces.iter().any(|p| p.value.len() != m) {
                return Err(Error::InvalidInput("pieces have different control dimensions".into()));
            }
        }
        Ok(Self { pieces })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn constant(value: Vec<f64>, duration: f64) -> Result<Self> {
        Self::new(vec![Piece { duration, value }])
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Total horizon.
    pub fn duration(&self) -> f64 {
        self.pieces.iter().map(|p| p.duration).sum()
    }

    /// Right-continuous value at time `t`; `None` past the horizon.
    pub fn value_at(&self, t: f64) -> Option<&[f64]> {
        let mut start = 0.0;
        for p in &self.pieces {
            if t < start + p.duration {
                return Some(&p.value);
            }
            start += p.duration;
        }
        None
    }

    /// Piece start times plus the final horizon.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        let mut t = 0.0;
        for p in &self.pieces {
            t += p.duration;
            out.push(t);
        }
        out
    }

    /// Restriction to `[0, tau]`.
    pub fn truncate(&self, tau: f64) -> Self {
        let mut pieces = Vec::new();
        let mut t = 0.0;
        for p in &self.pieces {
            if t >= tau {
                break;
            }
            let d = p.duration.min(tau - t);
            if d > 0.0 {
                pieces.push(Piece {
                    duration: d,
                    value: p.value.clone(),
                });
            }
            t += p.duration;
        }
        Self { pieces }
    }

    /// Shifted law `θ_τ u = u(· + τ)`.
    pub fn shift(&self, tau: f64) -> Self {
        let mut pieces = Vec::new();
        let mut t = 0.0;
        for p in &self.pieces {
            let end = t + p.duration;
            if end > tau {
                let d = end - t.max(tau);
                if d > 0.0 {
                    pieces.push(Piece {
                        duration: d,
                        value: p.value.clone(),
                    });
                }
            }
            t = end;
        }
        Self { pieces }
    }

    /// Time-reversed law `u(T − t)`.
    pub fn reversed(&self) -> Self {
        Self {
            pieces: self.pieces.iter().rev().cloned().collect(),
        }
    }

    pub fn check_in(&self, omega: &ControlBox) -> Result<()> {
        match self.pieces.iter().find(|p| !omega.contains(&p.value)) {
            Some(p) => Err(Error::InvalidInput(format!(
                "control value {:?} outside Ω",
                p.value
            ))),
            None => Ok(()),
        }
    }
}

/// `u1` on `[0, tau1)` followed by `u2` shifted to start at `tau1`.
pub fn concatenate_laws(law1: &ControlLaw, tau1: f64, law2: &ControlLaw) -> Result<ControlLaw> {
    if tau1 < 0.0 || tau1 > law1.duration() * (1.0 + 1e-12) + 1e-15 {
        return Err(Error::InvalidInput(format!(
            "split time {tau1} exceeds first law horizon {}",
            law1.duration()
        )));
    }
    let mut out = law1.truncate(tau1);
    out.pieces.extend(law2.pieces.iter().cloned());
    Ok(out)
}

/// Sampled solution `t ↦ φ(t, start, law)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<GroupPoint>,
    pub law: ControlLaw,
    pub start: GroupPoint,
}

impl Trajectory {
    pub fn end(&self) -> &GroupPoint {
        self.points.last().expect("trajectory has at least the start point")
    }
}

/// Time direction for integration. `Backward` integrates the negated field,
/// i.e. the time-reversed system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// A linear system `Σ`: drift derivation `D`, control vectors `Z_j`, box `Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystemSpec {
    group: NilGroupSpec,
    drift: Derivation,
    controls: Vec<DVector<f64>>,
    omega: ControlBox,
}

impl LinearSystemSpec {
    pub fn new(
        group: NilGroupSpec,
        drift: DMatrix<f64>,
        controls: Vec<DVector<f64>>,
        omega: ControlBox,
    ) -> Result<Self> {
        let n = group.dim();
        let drift = Derivation::new(group.algebra(), drift)?;
        for z in &controls {
            check_len(n, z.len())?;
        }
        if controls.len() != omega.dim() {
            return Err(Error::InvalidInput(format!(
                "{} control vectors but Ω has {} axes",
                controls.len(),
                omega.dim()
            )));
        }
        for &j in group.lattice() {
            if drift.matrix().column(j).amax() > AUTOMORPHISM_TOL {
                return Err(Error::InvalidInput(format!(
                    "drift must vanish on lattice direction e{}",
                    j + 1
                )));
            }
        }
        Ok(Self {
            group,
            drift,
            controls,
            omega,
        })
    }

    pub fn group(&self) -> &NilGroupSpec {
        &self.group
    }

    pub fn drift(&self) -> &Derivation {
        &self.drift
    }

    pub fn controls(&self) -> &[DVector<f64>] {
        &self.controls
    }

    pub fn omega(&self) -> &ControlBox {
        &self.omega
    }

    pub fn dim(&self) -> usize {
        self.group.dim()
    }

    /// `Σ_j u_j Z_j`.
    pub fn control_vector(&self, u: &[f64]) -> Result<DVector<f64>> {
        check_len(self.controls.len(), u.len())?;
        let mut z = DVector::zeros(self.dim());
        for (uj, zj) in u.iter().zip(&self.controls) {
            z.axpy(*uj, zj, 1.0);
        }
        Ok(z)
    }

    /// `D x + Z_u(x)` with `Z_u = Σ u_j Z_j`.
    pub fn vector_field(&self, x: &GroupPoint, u: &[f64]) -> Result<DVector<f64>> {
        check_len(self.dim(), x.dim())?;
        if !self.omega.contains(u) {
            return Err(Error::InvalidInput(format!("control value {u:?} outside Ω")));
        }
        let mut k = Kernel::new(self);
        let mut out = vec![0.0; self.dim()];
        k.eval(x.coords().as_slice(), u, 1.0, &mut out);
        Ok(DVector::from_vec(out))
    }

    /// Drift flow `φ_t = e^{tD}` acting as an automorphism.
    pub fn drift_flow(&self, t: f64, x: &GroupPoint) -> Result<GroupPoint> {
        self.group.automorphism_apply(&self.drift.flow_matrix(t), x)
    }

    /// Solution under `law`, sampled at every integration step.
    pub fn simulate(&self, x0: &GroupPoint, law: &ControlLaw, step: f64) -> Result<Trajectory> {
        self.simulate_directed(x0, law, step, Direction::Forward)
    }

    /// Solution of the time-reversed system `ẋ = −(Dx + Z_u(x))`.
    pub fn simulate_reversed(
        &self,
        x0: &GroupPoint,
        law: &ControlLaw,
        step: f64,
    ) -> Result<Trajectory> {
        self.simulate_directed(x0, law, step, Direction::Backward)
    }

    pub fn simulate_directed(
        &self,
        x0: &GroupPoint,
        law: &ControlLaw,
        step: f64,
        direction: Direction,
    ) -> Result<Trajectory> {
        check_len(self.dim(), x0.dim())?;
        if !(step > 0.0) {
            return Err(Error::InvalidInput(format!("step {step} must be positive")));
        }
        law.check_in(&self.omega)?;
        let start = self.group.point(x0.coords().clone())?;
        let mut times = Vec::new();
        let mut points = Vec::new();
        let mut kernel = Kernel::new(self);
        kernel.integrate(start.coords().as_slice(), law, step, direction, |t, x| {
            times.push(t);
            points.push(GroupPoint::from_coords(DVector::from_column_slice(x)));
            true
        });
        Ok(Trajectory {
            times,
            points,
            law: law.clone(),
            start,
        })
    }

    /// Sup over the sample grid of the gap in
    /// `φ(t, x0 ∗ g, u) = φ(t, x0, u) ∗ φ_t(g)`.
    ///
    /// Control fields here are `Σ c_p ad(x)^p Z`, which commute with left
    /// translations, so solutions are equivariant under right translations.
    pub fn check_flow_property(
        &self,
        g: &GroupPoint,
        x0: &GroupPoint,
        law: &ControlLaw,
        step: f64,
    ) -> Result<f64> {
        let shifted_start = self.group.bch_product(x0, g)?;
        let lhs = self.simulate(&shifted_start, law, step)?;
        let base = self.simulate(x0, law, step)?;
        let mut residual: f64 = 0.0;
        for ((t, a), b) in lhs.times.iter().zip(&lhs.points).zip(&base.points) {
            let gt = self.drift_flow(*t, g)?;
            let rhs = self.group.bch_product(b, &gt)?;
            residual = residual.max(self.group.distance(a, &rhs));
        }
        Ok(residual)
    }
}

/// Allocation-free field evaluation and RK4 stepping.
pub(crate) struct Kernel<'a> {
    sys: &'a LinearSystemSpec,
    n: usize,
    drift: Vec<f64>,
    z: Vec<f64>,
    field: Vec<f64>,
    scratch: Vec<f64>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a> Kernel<'a> {
    pub(crate) fn new(sys: &'a LinearSystemSpec) -> Self {
        let n = sys.dim();
        let d = sys.drift.matrix();
        let drift = (0..n * n).map(|idx| d[(idx / n, idx % n)]).collect();
        Self {
            sys,
            n,
            drift,
            z: vec![0.0; n],
            field: vec![0.0; n],
            scratch: vec![0.0; 2 * n],
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
        }
    }

    fn set_control(&mut self, u: &[f64]) {
        self.z.iter_mut().for_each(|v| *v = 0.0);
        for (uj, zj) in u.iter().zip(&self.sys.controls) {
            if *uj != 0.0 {
                for i in 0..self.n {
                    self.z[i] += uj * zj[i];
                }
            }
        }
    }

    /// `out = sign · (D x + Z_u(x))`.
    pub(crate) fn eval(&mut self, x: &[f64], u: &[f64], sign: f64, out: &mut [f64]) {
        self.set_control(u);
        self.eval_with_current(x, sign, out);
    }

    #[inline]
    fn eval_with_current(&mut self, x: &[f64], sign: f64, out: &mut [f64]) {
        let n = self.n;
        self.sys
            .group
            .field_into(&self.z, x, &mut self.field, &mut self.scratch);
        for i in 0..n {
            let row = &self.drift[i * n..(i + 1) * n];
            let mut acc = self.field[i];
            for j in 0..n {
                acc += row[j] * x[j];
            }
            out[i] = sign * acc;
        }
    }

    /// One RK4 step; the increment is added with compensated summation,
    /// `comp` carrying the lost low-order bits between steps.
    #[inline]
    fn rk4_step(&mut self, x: &mut [f64], comp: &mut [f64], h: f64, sign: f64) {
        let n = self.n;
        let mut k = std::mem::take(&mut self.k);
        let mut tmp = std::mem::take(&mut self.tmp);
        self.eval_with_current(x, sign, &mut k[0]);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k[0][i];
        }
        self.eval_with_current(&tmp, sign, &mut k[1]);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k[1][i];
        }
        self.eval_with_current(&tmp, sign, &mut k[2]);
        for i in 0..n {
            tmp[i] = x[i] + h * k[2][i];
        }
        self.eval_with_current(&tmp, sign, &mut k[3]);
        for i in 0..n {
            let inc = h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]) - comp[i];
            let sum = x[i] + inc;
            comp[i] = (sum - x[i]) - inc;
            x[i] = sum;
        }
        self.k = k;
        self.tmp = tmp;
    }

    /// Integrates over `law`, calling `visit(t, x)` at the start and after
    /// every step. Each piece is split into `ceil(duration / step)` equal
    /// substeps so no step straddles a control switch. Returning `false`
    /// from `visit` stops the integration.
    pub(crate) fn integrate<F>(
        &mut self,
        x0: &[f64],
        law: &ControlLaw,
        step: f64,
        direction: Direction,
        mut visit: F,
    ) where
        F: FnMut(f64, &[f64]) -> bool,
    {
        let sign = direction.sign();
        let mut x = x0.to_vec();
        let mut comp = vec![0.0; self.n];
        let mut t = 0.0;
        if !visit(t, &x) {
            return;
        }
        let breaks = law.breakpoints();
        for (piece, w) in law.pieces().iter().zip(breaks.windows(2)) {
            self.set_control(&piece.value);
            let (t0, t1) = (w[0], w[1]);
            let nsub = substeps(t1 - t0, step);
            let h = (t1 - t0) / nsub as f64;
            for s in 1..=nsub {
                self.rk4_step(&mut x, &mut comp, h, sign);
                self.sys.group.reduce_in_place(&mut x);
                t = if s == nsub { t1 } else { t0 + s as f64 * h };
                if !visit(t, &x) {
                    return;
                }
            }
        }
        let _ = t;
    }
}

/// Number of equal substeps for a piece.
pub(crate) fn substeps(duration: f64, step: f64) -> usize {
    ((duration / step) - 1e-9).ceil().max(1.0) as usize
}
