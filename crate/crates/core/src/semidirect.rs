//! Linear systems on `H ×_ρ u` with `H = (R/Z)^d` a torus acting on a
//! nilpotent group `u` by `ρ(θ) = exp(Σ θ_i A_i)`, and the splitting
//! `G ≅ G⁰ ×_Ad g^{+,-}` of decomposable systems.

use nalgebra::{DMatrix, DVector};

use crate::algebra::{Derivation, LieAlgebra, AUTOMORPHISM_TOL};
use crate::error::{check_len, Error, Result};
use crate::linalg;
use crate::nilgroup::{wrap_unit, GroupPoint, NilGroupSpec};
use crate::spectral::spectral_decompose;
use crate::system::{substeps, ControlBox, ControlLaw, LinearSystemSpec};

/// Tolerance for `[g^{+,-}, g^{+,-}] ⊂ g^{+,-}` and `g⁰ = span(lattice)`.
pub const SUBALGEBRA_TOL: f64 = 1e-9;

/// A point `(h, x)` with `h ∈ [0,1)^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemidirectPoint {
    pub h: DVector<f64>,
    pub x: GroupPoint,
}

/// Sampled solution of a semidirect system.
#[derive(Debug, Clone, PartialEq)]
pub struct SemidirectTrajectory {
    pub times: Vec<f64>,
    pub points: Vec<SemidirectPoint>,
}

/// The system `ḣ = Σ u_j Y_j`, `ẋ = Dx + (ρ(h) Σ u_j Z_j)(x)` on `H ×_ρ u`.
///
/// Every linear vector field on a torus vanishes, so the `h` equation only
/// carries the invariant fields `Y_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemidirectSpec {
    torus_dim: usize,
    rho_generators: Vec<DMatrix<f64>>,
    nil: NilGroupSpec,
    drift: Derivation,
    torus_controls: Vec<DVector<f64>>,
    nil_controls: Vec<DVector<f64>>,
    omega: ControlBox,
    rho_trivial: bool,
}

impl SemidirectSpec {
    pub fn new(
        rho_generators: Vec<DMatrix<f64>>,
        nil: NilGroupSpec,
        drift: DMatrix<f64>,
        torus_controls: Vec<DVector<f64>>,
        nil_controls: Vec<DVector<f64>>,
        omega: ControlBox,
    ) -> Result<Self> {
        let d = rho_generators.len();
        let n = nil.dim();
        let alg = nil.algebra();
        for (i, a) in rho_generators.iter().enumerate() {
            if a.shape() != (n, n) {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: a.nrows(),
                });
            }
            let (ok, residual) = alg.is_derivation(a)?;
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "ρ generator {} is not a derivation (residual {residual:.3e})",
                    i + 1
                )));
            }
            let e = linalg::expm(a);
            let aut = alg.automorphism_residual(&e)?;
            if aut > AUTOMORPHISM_TOL {
                return Err(Error::NotAutomorphism { residual: aut });
            }
            let period = linalg::max_abs(&(e - DMatrix::identity(n, n)));
            if period > AUTOMORPHISM_TOL {
                return Err(Error::InvalidInput(format!(
                    "exp(A_{}) differs from the identity by {period:.3e}",
                    i + 1
                )));
            }
            for &j in nil.lattice() {
                if a.column(j).amax() > AUTOMORPHISM_TOL {
                    return Err(Error::InvalidInput(format!(
                        "ρ generator {} moves lattice direction e{}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        for (i, a) in rho_generators.iter().enumerate() {
            for b in &rho_generators[i + 1..] {
                let c = linalg::max_abs(&(a * b - b * a));
                if c > AUTOMORPHISM_TOL {
                    return Err(Error::InvalidInput(format!(
                        "ρ generators do not commute (residual {c:.3e})"
                    )));
                }
            }
        }
        let drift = Derivation::new(alg, drift)?;
        let m = omega.dim();
        if torus_controls.len() != m || nil_controls.len() != m {
            return Err(Error::InvalidInput(format!(
                "Ω has {m} axes but {} torus and {} group control vectors were given",
                torus_controls.len(),
                nil_controls.len()
            )));
        }
        for y in &torus_controls {
            check_len(d, y.len())?;
        }
        for z in &nil_controls {
            check_len(n, z.len())?;
        }
        let rho_trivial = rho_generators.iter().all(|a| linalg::max_abs(a) == 0.0);
        Ok(Self {
            torus_dim: d,
            rho_generators,
            nil,
            drift,
            torus_controls,
            nil_controls,
            omega,
            rho_trivial,
        })
    }

    pub fn torus_dim(&self) -> usize {
        self.torus_dim
    }

    pub fn rho_generators(&self) -> &[DMatrix<f64>] {
        &self.rho_generators
    }

    pub fn nil(&self) -> &NilGroupSpec {
        &self.nil
    }

    pub fn drift(&self) -> &Derivation {
        &self.drift
    }

    pub fn torus_controls(&self) -> &[DVector<f64>] {
        &self.torus_controls
    }

    pub fn nil_controls(&self) -> &[DVector<f64>] {
        &self.nil_controls
    }

    pub fn omega(&self) -> &ControlBox {
        &self.omega
    }

    /// `max_i ‖A_i D − D A_i‖`. Nonzero values mean `ρ(h)` does not commute
    /// with the drift flow; reported, not rejected.
    pub fn drift_commutation_residual(&self) -> f64 {
        let d = self.drift.matrix();
        self.rho_generators
            .iter()
            .map(|a| linalg::max_abs(&(a * d - d * a)))
            .fold(0.0, f64::max)
    }

    /// `ρ(h) = exp(Σ h_i A_i)`.
    pub fn rho(&self, h: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len(self.torus_dim, h.len())?;
        Ok(self.rho_slice(h.as_slice()))
    }

    fn rho_slice(&self, h: &[f64]) -> DMatrix<f64> {
        let n = self.nil.dim();
        if self.rho_trivial {
            return DMatrix::identity(n, n);
        }
        let mut gen = DMatrix::zeros(n, n);
        for (hi, a) in h.iter().zip(&self.rho_generators) {
            gen += a * *hi;
        }
        linalg::expm(&gen)
    }

    pub fn identity(&self) -> SemidirectPoint {
        SemidirectPoint {
            h: DVector::zeros(self.torus_dim),
            x: self.nil.identity(),
        }
    }

    /// Point with `h` reduced mod 1 and `x` reduced mod the lattice.
    pub fn point(&self, h: DVector<f64>, x: DVector<f64>) -> Result<SemidirectPoint> {
        check_len(self.torus_dim, h.len())?;
        Ok(SemidirectPoint {
            h: h.map(wrap_unit),
            x: self.nil.reduce_mod_lattice(x)?,
        })
    }

    /// `(h1, x1)(h2, x2) = (h1 + h2, x1 ∗ ρ(h1) x2)`.
    pub fn product(&self, p: &SemidirectPoint, q: &SemidirectPoint) -> Result<SemidirectPoint> {
        let rx2 = self.nil.automorphism_apply(&self.rho(&p.h)?, &q.x)?;
        let x = self.nil.bch_product(&p.x, &rx2)?;
        self.point(&p.h + &q.h, x.into_coords())
    }

    /// `(h, x)⁻¹ = (−h, ρ(−h) x⁻¹)`.
    pub fn inverse(&self, p: &SemidirectPoint) -> Result<SemidirectPoint> {
        let minus_h = -&p.h;
        let xinv = self.nil.inverse(&p.x)?;
        let x = self.nil.automorphism_apply(&self.rho(&minus_h)?, &xinv)?;
        self.point(minus_h, x.into_coords())
    }

    /// Sup-norm distance, along the circle on torus and lattice coordinates.
    pub fn distance(&self, p: &SemidirectPoint, q: &SemidirectPoint) -> f64 {
        let dh = p
            .h
            .iter()
            .zip(q.h.iter())
            .map(|(a, b)| {
                let d = wrap_unit(a - b);
                d.min(1.0 - d)
            })
            .fold(0.0, f64::max);
        dh.max(self.nil.distance(&p.x, &q.x))
    }

    /// `(ḣ, ẋ)` at `p` under control value `u`.
    pub fn vector_field(&self, p: &SemidirectPoint, u: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        check_len(self.torus_dim, p.h.len())?;
        check_len(self.nil.dim(), p.x.dim())?;
        if !self.omega.contains(u) {
            return Err(Error::InvalidInput(format!("control value {u:?} outside Ω")));
        }
        let state: Vec<f64> = p.h.iter().chain(p.x.coords().iter()).copied().collect();
        let mut out = vec![0.0; state.len()];
        let mut ws = Workspace::new(self.nil.dim());
        self.eval(&state, u, &mut out, &mut ws);
        let d = self.torus_dim;
        Ok((
            DVector::from_column_slice(&out[..d]),
            DVector::from_column_slice(&out[d..]),
        ))
    }

    fn eval(&self, state: &[f64], u: &[f64], out: &mut [f64], ws: &mut Workspace) {
        let d = self.torus_dim;
        let n = self.nil.dim();
        for c in 0..d {
            out[c] = u
                .iter()
                .zip(&self.torus_controls)
                .map(|(uj, y)| uj * y[c])
                .sum();
        }
        ws.z.fill(0.0);
        for (uj, z) in u.iter().zip(&self.nil_controls) {
            ws.z.axpy(*uj, z, 1.0);
        }
        let zt = if self.rho_trivial {
            ws.z.clone()
        } else {
            self.rho_slice(&state[..d]) * &ws.z
        };
        let x = &state[d..];
        self.nil
            .field_into(zt.as_slice(), x, &mut ws.field, &mut ws.scratch);
        let dm = self.drift.matrix();
        for i in 0..n {
            let mut acc = ws.field[i];
            for j in 0..n {
                acc += dm[(i, j)] * x[j];
            }
            out[d + i] = acc;
        }
    }

    /// Boundary-aligned RK4 solution; torus and lattice coordinates are
    /// reduced mod 1 after every step.
    pub fn simulate_semidirect(
        &self,
        p0: &SemidirectPoint,
        law: &ControlLaw,
        step: f64,
    ) -> Result<SemidirectTrajectory> {
        check_len(self.torus_dim, p0.h.len())?;
        check_len(self.nil.dim(), p0.x.dim())?;
        if !(step > 0.0) {
            return Err(Error::InvalidInput(format!("step {step} must be positive")));
        }
        law.check_in(&self.omega)?;
        let d = self.torus_dim;
        let n = self.nil.dim();
        let dim = d + n;
        let start = self.point(p0.h.clone(), p0.x.coords().clone())?;
        let mut x: Vec<f64> = start.h.iter().chain(start.x.coords().iter()).copied().collect();
        let mut comp = vec![0.0; dim];
        let mut ws = Workspace::new(n);
        let mut k: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; dim]);
        let mut tmp = vec![0.0; dim];
        let mut times = vec![0.0];
        let mut points = vec![start];
        let breaks = law.breakpoints();
        for (piece, w) in law.pieces().iter().zip(breaks.windows(2)) {
            let u = &piece.value;
            let (t0, t1) = (w[0], w[1]);
            let nsub = substeps(t1 - t0, step);
            let h = (t1 - t0) / nsub as f64;
            for s in 1..=nsub {
                self.eval(&x, u, &mut k[0], &mut ws);
                for i in 0..dim {
                    tmp[i] = x[i] + 0.5 * h * k[0][i];
                }
                self.eval(&tmp, u, &mut k[1], &mut ws);
                for i in 0..dim {
                    tmp[i] = x[i] + 0.5 * h * k[1][i];
                }
                self.eval(&tmp, u, &mut k[2], &mut ws);
                for i in 0..dim {
                    tmp[i] = x[i] + h * k[2][i];
                }
                self.eval(&tmp, u, &mut k[3], &mut ws);
                for i in 0..dim {
                    let inc = h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]) - comp[i];
                    let sum = x[i] + inc;
                    comp[i] = (sum - x[i]) - inc;
                    x[i] = sum;
                }
                for v in &mut x[..d] {
                    *v = wrap_unit(*v);
                }
                self.nil.reduce_in_place(&mut x[d..]);
                times.push(if s == nsub { t1 } else { t0 + s as f64 * h });
                points.push(SemidirectPoint {
                    h: DVector::from_column_slice(&x[..d]),
                    x: GroupPoint::from_coords(DVector::from_column_slice(&x[d..])),
                });
            }
        }
        Ok(SemidirectTrajectory { times, points })
    }
}

struct Workspace {
    z: DVector<f64>,
    field: Vec<f64>,
    scratch: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            z: DVector::zeros(n),
            field: vec![0.0; n],
            scratch: vec![0.0; 2 * n],
        }
    }
}

/// The isomorphism `ψ(h, X) = X ∗ h` from `G⁰ ×_Ad g^{+,-}` onto `G`.
///
/// `X` is written in an orthonormal basis of `g^{+,-}` and `h` in the lattice
/// coordinates spanning `g⁰`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiMap {
    target: NilGroupSpec,
    basis: DMatrix<f64>,
    basis_inv: DMatrix<f64>,
    rank_pm: usize,
    torus_axes: Vec<usize>,
}

impl PsiMap {
    pub fn target(&self) -> &NilGroupSpec {
        &self.target
    }

    /// Columns `[g^{+,-} basis | lattice directions]`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn torus_axes(&self) -> &[usize] {
        &self.torus_axes
    }

    pub fn apply(&self, p: &SemidirectPoint) -> Result<GroupPoint> {
        check_len(self.torus_axes.len(), p.h.len())?;
        check_len(self.rank_pm, p.x.dim())?;
        let n = self.target.dim();
        let x = self.basis.columns(0, self.rank_pm) * p.x.coords();
        let mut h = DVector::zeros(n);
        for (hi, &axis) in p.h.iter().zip(&self.torus_axes) {
            h[axis] = *hi;
        }
        self.target.bch_product(
            &GroupPoint::from_coords(x),
            &self.target.reduce_mod_lattice(h)?,
        )
    }

    /// `ψ⁻¹`, splitting `g = X + h` along `g^{+,-} ⊕ g⁰`.
    pub fn invert(&self, g: &GroupPoint) -> Result<SemidirectPoint> {
        check_len(self.target.dim(), g.dim())?;
        let c = &self.basis_inv * g.coords();
        Ok(SemidirectPoint {
            h: c.rows(self.rank_pm, self.torus_axes.len()).map(wrap_unit),
            x: GroupPoint::from_coords(c.rows(0, self.rank_pm).into_owned()),
        })
    }
}

/// Splits a decomposable system as a semidirect system over `G⁰`.
///
/// Requires `g^{+,-}` to be a subalgebra and `G⁰` to be the torus spanned by
/// the lattice directions. Lattice directions are central, so `Ad` is trivial
/// on `G⁰` and the `ρ` generators vanish.
pub fn build_from_decomposable(sys: &LinearSystemSpec) -> Result<(SemidirectSpec, PsiMap)> {
    let group = sys.group();
    let alg = group.algebra();
    let n = alg.dim();
    let decomp = spectral_decompose(alg, sys.drift())?;
    let pm = decomp.plus_minus();
    let r = pm.ncols();
    let cols: Vec<DVector<f64>> = pm.column_iter().map(|c| c.into_owned()).collect();

    let mut sub_residual: f64 = 0.0;
    for (a, x) in cols.iter().enumerate() {
        for y in &cols[a + 1..] {
            let b = alg.bracket(x, y)?;
            sub_residual = sub_residual.max(linalg::distance_to_span(&b, &pm));
        }
    }
    if sub_residual > SUBALGEBRA_TOL {
        return Err(Error::NotApplicable(format!(
            "g^{{+,-}} is not a subalgebra (bracket leaves it by {sub_residual:.3e})"
        )));
    }

    let lattice = group.lattice().to_vec();
    let zero = decomp.zero();
    let lattice_basis = linalg::from_columns(
        n,
        &lattice.iter().map(|&j| alg.basis_vector(j)).collect::<Vec<_>>(),
    );
    let outside = zero
        .column_iter()
        .map(|c| linalg::distance_to_span(&c.into_owned(), &lattice_basis))
        .fold(0.0, f64::max);
    if zero.ncols() != lattice.len() || outside > SUBALGEBRA_TOL {
        return Err(Error::Unsupported(format!(
            "G⁰ is not the compact torus of the lattice directions (dim g⁰ = {}, {} lattice directions)",
            zero.ncols(),
            lattice.len()
        )));
    }
    if r == 0 {
        return Err(Error::Unsupported("g^{+,-} is trivial; G = G⁰".into()));
    }

    let mut basis_cols = cols.clone();
    basis_cols.extend(lattice.iter().map(|&j| alg.basis_vector(j)));
    let basis = DMatrix::from_columns(&basis_cols);
    let basis_inv = basis
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("g^{+,-} ⊕ g⁰ basis is singular".into()))?;
    let coords_pm = |v: &DVector<f64>| -> DVector<f64> { (&basis_inv * v).rows(0, r).into_owned() };
    let coords_0 =
        |v: &DVector<f64>| -> DVector<f64> { (&basis_inv * v).rows(r, lattice.len()).into_owned() };

    let mut brackets = Vec::new();
    for a in 0..r {
        for b in (a + 1)..r {
            let c = coords_pm(&alg.bracket(&cols[a], &cols[b])?);
            for (k, v) in c.iter().enumerate() {
                if v.abs() > 1e-14 {
                    brackets.push((a, b, k, *v));
                }
            }
        }
    }
    let sub_alg = LieAlgebra::from_brackets(r, &brackets)?;
    let nil = NilGroupSpec::simply_connected(sub_alg)?;
    let d_full = sys.drift().matrix();
    let drift = DMatrix::from_fn(r, r, |i, j| coords_pm(&(d_full * &cols[j]))[i]);
    let torus_controls = sys.controls().iter().map(coords_0).collect();
    let nil_controls = sys.controls().iter().map(coords_pm).collect();
    let rho = vec![DMatrix::zeros(r, r); lattice.len()];
    let spec = SemidirectSpec::new(
        rho,
        nil,
        drift,
        torus_controls,
        nil_controls,
        sys.omega().clone(),
    )?;
    Ok((
        spec,
        PsiMap {
            target: group.clone(),
            basis,
            basis_inv,
            rank_pm: r,
            torus_axes: lattice,
        },
    ))
}
