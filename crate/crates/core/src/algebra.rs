//! Finite-dimensional real Lie algebras given by structure constants, and
//! derivations on them.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::linalg;

/// Tolerance for the antisymmetry and Jacobi checks.
pub const STRUCTURE_TOL: f64 = 1e-12;
/// Tolerance for the Leibniz rule.
pub const DERIVATION_TOL: f64 = 1e-9;
/// Tolerance for the automorphism identity `A[X,Y] = [AX,AY]`.
pub const AUTOMORPHISM_TOL: f64 = 1e-8;
const BASIS_SNAP: f64 = 1e-12;

/// A real Lie algebra over a fixed basis `e_1..e_n`.
///
/// `C[k][i][j]` is the coefficient of `e_k` in `[e_i, e_j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LieAlgebra {
    dim: usize,
    structure: Vec<f64>,
    labels: Vec<String>,
    nonzero: Vec<(usize, usize, usize, f64)>,
}

/// Result of [`LieAlgebra::validate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationReport {
    pub antisymmetry_residual: f64,
    pub jacobi_residual: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.antisymmetry_residual < STRUCTURE_TOL && self.jacobi_residual < STRUCTURE_TOL
    }
}

impl LieAlgebra {
    /// Builds an algebra from bracket relations `[e_i, e_j] ∋ coeff·e_k`
    /// (0-based indices). `[e_j, e_i]` is filled in with the opposite sign;
    /// repeated entries accumulate.
    pub fn from_brackets(dim: usize, brackets: &[(usize, usize, usize, f64)]) -> Result<Self> {
        let mut structure = vec![0.0; dim * dim * dim];
        for &(i, j, k, c) in brackets {
            if i >= dim || j >= dim || k >= dim {
                return Err(Error::InvalidInput(format!(
                    "bracket index out of range in ({}, {}, {}) for dim {dim}",
                    i + 1,
                    j + 1,
                    k + 1
                )));
            }
            if i == j {
                if c != 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "[e{0}, e{0}] must vanish",
                        i + 1
                    )));
                }
                continue;
            }
            structure[k * dim * dim + i * dim + j] += c;
            structure[k * dim * dim + j * dim + i] -= c;
        }
        Self::from_structure_constants(dim, structure)
    }

    /// Builds an algebra from a raw `dim³` array laid out as `C[k][i][j]`,
    /// without any completion. Use [`validate`](Self::validate) to check it.
    pub fn from_structure_constants(dim: usize, structure: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("algebra dimension must be positive".into()));
        }
        check_len(dim * dim * dim, structure.len())?;
        let mut nonzero = Vec::new();
        for k in 0..dim {
            for i in 0..dim {
                for j in 0..dim {
                    let c = structure[k * dim * dim + i * dim + j];
                    if c != 0.0 {
                        nonzero.push((k, i, j, c));
                    }
                }
            }
        }
        let labels = (1..=dim).map(|i| format!("e{i}")).collect();
        Ok(Self {
            dim,
            structure,
            labels,
            nonzero,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        check_len(self.dim, labels.len())?;
        self.labels = labels;
        Ok(self)
    }

    /// Abelian algebra `R^n`.
    pub fn abelian(dim: usize) -> Self {
        Self::from_brackets(dim, &[]).expect("abelian algebra")
    }

    /// Heisenberg algebra: `[e1, e2] = e3`.
    pub fn heisenberg() -> Self {
        Self::from_brackets(3, &[(0, 1, 2, 1.0)]).expect("heisenberg algebra")
    }

    /// Standard filiform algebra of dimension `dim ≥ 3`:
    /// `[e1, e_i] = e_{i+1}` for `i = 2..dim-1`. Nilpotency class `dim - 1`.
    pub fn filiform(dim: usize) -> Self {
        assert!(dim >= 3, "filiform algebras start at dimension 3");
        let brackets: Vec<_> = (1..dim - 1).map(|i| (0, i, i + 1, 1.0)).collect();
        Self::from_brackets(dim, &brackets).expect("filiform algebra")
    }

    /// `sl(2, R)` with basis `h, e, f`: `[h,e] = 2e`, `[h,f] = -2f`, `[e,f] = h`.
    pub fn sl2() -> Self {
        Self::from_brackets(3, &[(0, 1, 1, 2.0), (0, 2, 2, -2.0), (1, 2, 0, 1.0)])
            .expect("sl2")
            .with_labels(vec!["h".into(), "e".into(), "f".into()])
            .expect("labels")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Coefficient of `e_k` in `[e_i, e_j]`.
    pub fn constant(&self, k: usize, i: usize, j: usize) -> f64 {
        self.structure[k * self.dim * self.dim + i * self.dim + j]
    }

    pub fn is_abelian(&self) -> bool {
        self.nonzero.is_empty()
    }

    /// `[x, y]`.
    pub fn bracket(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.dim, x.len())?;
        check_len(self.dim, y.len())?;
        let mut out = DVector::zeros(self.dim);
        self.bracket_into(x.as_slice(), y.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// Allocation-free bracket on slices; `out` is overwritten.
    #[inline]
    pub(crate) fn bracket_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(k, i, j, c) in &self.nonzero {
            out[k] += c * x[i] * y[j];
        }
    }

    /// Matrix of `ad(x) = [x, ·]`.
    pub fn ad(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_len(self.dim, x.len())?;
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(k, i, j, c) in &self.nonzero {
            m[(k, j)] += c * x[i];
        }
        Ok(m)
    }

    /// Basis vector `e_i` (0-based).
    pub fn basis_vector(&self, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim);
        v[i] = 1.0;
        v
    }

    /// Antisymmetry and Jacobi residuals over all basis pairs and triples.
    pub fn validate(&self) -> ValidationReport {
        let n = self.dim;
        let mut anti: f64 = 0.0;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    anti = anti.max((self.constant(k, i, j) + self.constant(k, j, i)).abs());
                }
            }
        }
        let mut jacobi: f64 = 0.0;
        let mut xy = vec![0.0; n];
        let mut t = vec![0.0; n];
        let mut acc = vec![0.0; n];
        let e = |i: usize| {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            v
        };
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let (ei, ej, el) = (e(i), e(j), e(l));
                    acc.iter_mut().for_each(|v| *v = 0.0);
                    for (a, b, c) in [(&ei, &ej, &el), (&ej, &el, &ei), (&el, &ei, &ej)] {
                        self.bracket_into(a, b, &mut xy);
                        self.bracket_into(&xy, c, &mut t);
                        acc.iter_mut().zip(&t).for_each(|(s, v)| *s += v);
                    }
                    jacobi = acc.iter().fold(jacobi, |m, v| m.max(v.abs()));
                }
            }
        }
        ValidationReport {
            antisymmetry_residual: anti,
            jacobi_residual: jacobi,
        }
    }

    /// Leibniz residual `max |D[e_i,e_j] - [De_i,e_j] - [e_i,De_j]|` and
    /// whether it is below [`DERIVATION_TOL`].
    pub fn is_derivation(&self, d: &DMatrix<f64>) -> Result<(bool, f64)> {
        self.check_square(d)?;
        let n = self.dim;
        let mut residual: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let ei = self.basis_vector(i);
                let ej = self.basis_vector(j);
                let br = self.bracket(&ei, &ej)?;
                let lhs = d * br;
                let rhs = self.bracket(&(d * &ei), &ej)? + self.bracket(&ei, &(d * &ej))?;
                residual = residual.max((lhs - rhs).amax());
            }
        }
        Ok((residual < DERIVATION_TOL, residual))
    }

    /// Residual of `A[e_i,e_j] = [Ae_i, Ae_j]` over basis pairs.
    pub fn automorphism_residual(&self, a: &DMatrix<f64>) -> Result<f64> {
        self.check_square(a)?;
        let n = self.dim;
        let mut residual: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let ai = a.column(i).into_owned();
                let aj = a.column(j).into_owned();
                let lhs = a * self.bracket(&self.basis_vector(i), &self.basis_vector(j))?;
                let rhs = self.bracket(&ai, &aj)?;
                residual = residual.max((lhs - rhs).amax());
            }
        }
        if a.determinant().abs() < 1e-12 {
            residual = residual.max(1.0);
        }
        Ok(residual)
    }

    /// Basis of the space of derivations, obtained as the kernel of the
    /// linear Leibniz constraint system in the `n²` matrix entries.
    pub fn derivation_basis(&self) -> Vec<DMatrix<f64>> {
        let n = self.dim;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                for k in 0..n {
                    let mut row = vec![0.0; n * n];
                    for l in 0..n {
                        // D[e_i,e_j] component k
                        row[k * n + l] += self.constant(l, i, j);
                        // -[De_i, e_j] component k
                        row[l * n + i] -= self.constant(k, l, j);
                        // -[e_i, De_j] component k
                        row[l * n + j] -= self.constant(k, i, l);
                    }
                    if row.iter().any(|v| *v != 0.0) {
                        rows.push(row);
                    }
                }
            }
        }
        if rows.is_empty() {
            // every linear map is a derivation of an abelian algebra
            return (0..n * n)
                .map(|idx| {
                    let mut m = DMatrix::zeros(n, n);
                    m[(idx / n, idx % n)] = 1.0;
                    m
                })
                .collect();
        }
        let a = DMatrix::from_fn(rows.len(), n * n, |r, c| rows[r][c]);
        let ns = linalg::null_space(&a);
        // unit basis vectors; entries at roundoff level are structural zeros
        ns.column_iter()
            .map(|c| {
                let snapped: Vec<f64> = c
                    .iter()
                    .map(|v| if v.abs() < BASIS_SNAP { 0.0 } else { *v })
                    .collect();
                DMatrix::from_row_slice(n, n, &snapped)
            })
            .collect()
    }

    /// Random derivation: a uniform random combination of the
    /// derivation basis, scaled so the largest entry is `scale`.
    pub fn random_derivation<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64) -> DMatrix<f64> {
        let basis = self.derivation_basis();
        let mut d = DMatrix::zeros(self.dim, self.dim);
        for b in &basis {
            d += b * rng.random_range(-1.0..1.0);
        }
        let m = linalg::max_abs(&d);
        if m > 0.0 {
            d *= scale / m;
        }
        d
    }

    fn check_square(&self, m: &DMatrix<f64>) -> Result<()> {
        check_len(self.dim, m.nrows())?;
        check_len(self.dim, m.ncols())
    }
}

/// A matrix that satisfies the Leibniz rule on a given algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivation {
    matrix: DMatrix<f64>,
}

impl Derivation {
    pub fn new(alg: &LieAlgebra, matrix: DMatrix<f64>) -> Result<Self> {
        let (ok, residual) = alg.is_derivation(&matrix)?;
        if ok {
            Ok(Self { matrix })
        } else {
            Err(Error::NotDerivation { residual })
        }
    }

    pub fn zero(alg: &LieAlgebra) -> Self {
        Self {
            matrix: DMatrix::zeros(alg.dim(), alg.dim()),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `e^{tD}`.
    pub fn flow_matrix(&self, t: f64) -> DMatrix<f64> {
        linalg::expm(&(&self.matrix * t))
    }
}
