//! Real generalized eigenspace splitting of a derivation into λ-levels and
//! the unstable / central / stable subalgebras.

use nalgebra::{Complex, DMatrix, DVector};

use crate::algebra::{Derivation, LieAlgebra};
use crate::error::{check_len, Error, Result};
use crate::linalg;

/// Real parts closer than this are merged into a single λ-level, and real
/// parts this close to zero are central.
pub const LEVEL_TOL: f64 = 1e-9;
/// Complex eigenvalues within this (relative) distance are treated as one
/// eigenvalue when building generalized eigenspaces. Defective eigenvalues
/// come out of the QR iteration perturbed by roughly `sqrt(eps)`.
pub const EIGEN_CLUSTER_RTOL: f64 = 1e-6;
/// Relative bound on the weak kernel of a clustered level and on its gap
/// to the rest of the spectrum.
pub const SEPARATION_RTOL: f64 = 1e-4;
/// Invariance residual threshold for each level.
pub const INVARIANCE_TOL: f64 = 1e-8;
/// Threshold for the grading inclusion check.
pub const GRADING_TOL: f64 = 1e-8;

/// One λ-level `g_λ = ⊕_{Re α = λ} g_α`.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub lambda: f64,
    /// Orthonormal basis as columns.
    pub basis: DMatrix<f64>,
    /// Eigenvalues (with `Im ≥ 0` representatives) grouped in this level.
    pub eigenvalues: Vec<Complex<f64>>,
}

/// Splitting `g = g⁺ ⊕ g⁰ ⊕ g⁻` of a derivation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    levels: Vec<Level>,
    plus: DMatrix<f64>,
    zero: DMatrix<f64>,
    minus: DMatrix<f64>,
    full_basis: DMatrix<f64>,
    full_inverse: DMatrix<f64>,
    invariance_residual: f64,
    warnings: Vec<String>,
}

impl SpectralDecomposition {
    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Orthonormal basis of `g⁺`.
    pub fn plus(&self) -> &DMatrix<f64> {
        &self.plus
    }

    /// Orthonormal basis of `g⁰`.
    pub fn zero(&self) -> &DMatrix<f64> {
        &self.zero
    }

    /// Orthonormal basis of `g⁻`.
    pub fn minus(&self) -> &DMatrix<f64> {
        &self.minus
    }

    /// Orthonormal basis of `g^{+,-} = g⁺ ⊕ g⁻`.
    pub fn plus_minus(&self) -> DMatrix<f64> {
        let n = self.full_basis.nrows();
        let cols: Vec<DVector<f64>> = self
            .plus
            .column_iter()
            .chain(self.minus.column_iter())
            .map(|c| c.into_owned())
            .collect();
        linalg::gram_schmidt(&cols, n)
    }

    /// Max over levels of `‖P_λ D − D P_λ‖` for the oblique level projectors.
    pub fn invariance_residual(&self) -> f64 {
        self.invariance_residual
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Oblique projection of `x` onto level `idx` along the other levels.
    pub fn project(&self, idx: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.full_basis.nrows(), x.len())?;
        let coeffs = &self.full_inverse * x;
        let (start, len) = self.level_span(idx);
        let mut out = DVector::zeros(x.len());
        for c in start..start + len {
            out.axpy(coeffs[c], &self.full_basis.column(c).into_owned(), 1.0);
        }
        Ok(out)
    }

    /// Index of the level whose λ matches `lambda` within `tol`.
    pub fn level_for(&self, lambda: f64, tol: f64) -> Option<usize> {
        self.levels.iter().position(|l| (l.lambda - lambda).abs() <= tol)
    }

    fn level_span(&self, idx: usize) -> (usize, usize) {
        let start: usize = self.levels[..idx].iter().map(|l| l.basis.ncols()).sum();
        (start, self.levels[idx].basis.ncols())
    }
}

#[derive(Debug, Clone)]
struct Cluster {
    value: Complex<f64>,
    multiplicity: usize,
}

fn cluster_eigenvalues(eigs: &[Complex<f64>], tol: f64) -> Vec<Cluster> {
    let mut members: Vec<Vec<Complex<f64>>> = Vec::new();
    for &e in eigs {
        match members
            .iter_mut()
            .find(|m| m.iter().any(|x| (x - e).norm() <= tol))
        {
            Some(m) => m.push(e),
            None => members.push(vec![e]),
        }
    }
    members
        .into_iter()
        .map(|m| {
            let n = m.len() as f64;
            let sum: Complex<f64> = m.iter().sum();
            Cluster {
                value: sum / n,
                multiplicity: m.len(),
            }
        })
        .collect()
}

/// Real generalized eigenspaces of `D`, grouped by real part.
///
/// For each λ the level is `ker ∏ q_α(D)^{m_α}` over the eigenvalues `α`
/// with `Re α = λ`, where `q_α(s) = s − α` for real `α` and
/// `q_α(s) = s² − 2 Re α s + |α|²` for a conjugate pair.
pub fn spectral_decompose(alg: &LieAlgebra, d: &Derivation) -> Result<SpectralDecomposition> {
    let n = alg.dim();
    check_len(n, d.dim())?;
    let dm = d.matrix();
    let scale = linalg::max_abs(dm).max(1.0);
    let eigs: Vec<Complex<f64>> = dm.complex_eigenvalues().iter().cloned().collect();
    let clusters = cluster_eigenvalues(&eigs, EIGEN_CLUSTER_RTOL * scale);

    // one representative per conjugate pair
    let mut reps: Vec<Cluster> = Vec::new();
    for c in clusters {
        let mut v = c.value;
        if v.im.abs() <= EIGEN_CLUSTER_RTOL * scale {
            v.im = 0.0;
        }
        if v.re.abs() <= LEVEL_TOL {
            v.re = 0.0;
        }
        if v.im < 0.0 {
            continue;
        }
        reps.push(Cluster { value: v, ..c });
    }
    reps.sort_by(|a, b| b.value.re.total_cmp(&a.value.re));

    let mut warnings = Vec::new();
    let mut grouped: Vec<(f64, Vec<Cluster>)> = Vec::new();
    for c in reps {
        match grouped.last_mut() {
            Some((lambda, members)) if (*lambda - c.value.re).abs() <= LEVEL_TOL => {
                members.push(c)
            }
            Some((lambda, _)) => {
                if (*lambda - c.value.re).abs() <= EIGEN_CLUSTER_RTOL * scale {
                    warnings.push(format!(
                        "real parts {:.3e} and {:.3e} are closer than {:.0e} but kept apart",
                        *lambda, c.value.re, EIGEN_CLUSTER_RTOL
                    ));
                }
                grouped.push((c.value.re, vec![c]));
            }
            None => grouped.push((c.value.re, vec![c])),
        }
    }

    let id = DMatrix::<f64>::identity(n, n);
    let dnorm = dm.norm();
    let mut levels = Vec::new();
    for (lambda, members) in grouped {
        let mut poly = id.clone();
        // bound on the size of the polynomial, used as the rank scale
        let mut poly_scale = 1.0;
        for c in &members {
            let (factor, norm) = if c.value.im == 0.0 {
                (dm - &id * c.value.re, dnorm + c.value.re.abs())
            } else {
                let (re, a2) = (c.value.re, c.value.norm_sqr());
                (
                    dm * dm - dm * (2.0 * re) + &id * a2,
                    dnorm * dnorm + 2.0 * re.abs() * dnorm + a2,
                )
            };
            let norm = norm.max(f64::MIN_POSITIVE);
            for _ in 0..c.multiplicity {
                poly = &poly * &factor;
                poly_scale *= norm;
            }
        }
        let expected: usize = members
            .iter()
            .map(|c| if c.value.im == 0.0 { c.multiplicity } else { 2 * c.multiplicity })
            .sum();
        let mut basis = linalg::null_space_below(&poly, linalg::RANK_RTOL * poly_scale);
        if basis.ncols() != expected {
            // clustered eigenvalues leave a weak but well separated kernel
            let (cand, sigma) = linalg::smallest_singular_vectors(&poly, expected);
            let weak = sigma[n - expected];
            let next = if expected < n { sigma[n - expected - 1] } else { poly_scale };
            if !(weak <= SEPARATION_RTOL * poly_scale && next >= weak / SEPARATION_RTOL) {
                return Err(Error::Numerical(format!(
                    "generalized eigenspace for λ = {lambda:.6} has dimension {} but multiplicity {expected}",
                    basis.ncols()
                )));
            }
            warnings.push(format!(
                "level λ = {lambda:.6} taken from a weak kernel (singular value {weak:.2e})"
            ));
            basis = cand;
        }
        levels.push(Level {
            lambda,
            basis,
            eigenvalues: members.iter().map(|c| c.value).collect(),
        });
    }

    let cols: Vec<DVector<f64>> = levels
        .iter()
        .flat_map(|l| l.basis.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>())
        .collect();
    if cols.len() != n {
        return Err(Error::Numerical(format!(
            "levels span {} of {n} dimensions",
            cols.len()
        )));
    }
    let full_basis = DMatrix::from_columns(&cols);
    let full_inverse = full_basis
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("level bases are not independent".into()))?;
    let svd = full_basis.clone().svd(false, false);
    let smin = svd.singular_values.min();
    if smin < linalg::RANK_RTOL * svd.singular_values.max() {
        return Err(Error::Numerical("level bases are nearly dependent".into()));
    }

    let assemble = |pred: &dyn Fn(f64) -> bool| {
        let cols: Vec<DVector<f64>> = levels
            .iter()
            .filter(|l| pred(l.lambda))
            .flat_map(|l| l.basis.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>())
            .collect();
        linalg::gram_schmidt(&cols, n)
    };
    let plus = assemble(&|l| l > 0.0);
    let zero = assemble(&|l| l == 0.0);
    let minus = assemble(&|l| l < 0.0);

    let mut decomp = SpectralDecomposition {
        levels,
        plus,
        zero,
        minus,
        full_basis,
        full_inverse,
        invariance_residual: 0.0,
        warnings,
    };

    let mut invariance: f64 = 0.0;
    for idx in 0..decomp.levels.len() {
        let (start, len) = decomp.level_span(idx);
        let mut sel = DMatrix::zeros(n, n);
        for c in start..start + len {
            sel[(c, c)] = 1.0;
        }
        let p = &decomp.full_basis * sel * &decomp.full_inverse;
        invariance = invariance.max(linalg::max_abs(&(&p * dm - dm * &p)));
    }
    decomp.invariance_residual = invariance;
    if invariance >= INVARIANCE_TOL * scale {
        decomp
            .warnings
            .push(format!("level invariance residual {invariance:.3e}"));
    }
    Ok(decomp)
}

/// Checks `[g_{λ1}, g_{λ2}] ⊂ g_{λ1+λ2}` (zero when `λ1+λ2` is not a level)
/// on all pairs of level basis vectors. Returns the pass flag and the largest
/// distance of a bracket from its target level.
pub fn check_grading(alg: &LieAlgebra, decomp: &SpectralDecomposition) -> (bool, f64) {
    let n = alg.dim();
    let mut residual: f64 = 0.0;
    let levels = decomp.levels();
    for a in levels {
        for b in levels {
            let target = decomp.level_for(a.lambda + b.lambda, 1e3 * LEVEL_TOL);
            for x in a.basis.column_iter() {
                for y in b.basis.column_iter() {
                    let mut br = vec![0.0; n];
                    alg.bracket_into(x.as_slice(), y.as_slice(), &mut br);
                    let v = DVector::from_vec(br);
                    let r = match target {
                        Some(t) => linalg::distance_to_span(&v, &levels[t].basis),
                        None => v.norm(),
                    };
                    residual = residual.max(r);
                }
            }
        }
    }
    (residual < GRADING_TOL, residual)
}
