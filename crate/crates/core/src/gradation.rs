//! Lower central series and the graded complements `V_1, …, V_k`.

use nalgebra::{DMatrix, DVector};

use crate::algebra::LieAlgebra;
use crate::error::{check_len, Error, Result};
use crate::linalg;

/// Lower central series `u¹ ⊇ u² ⊇ … ⊇ u^k ⊋ {0}` of a nilpotent algebra with
/// orthogonal complements `V_i ⊕ u^{i+1} = u^i`.
///
/// Stacking the `V_i` bases gives an orthogonal "adapted" basis; adapted
/// coordinates of `x` are `Pᵀx` with `P = [V_1 | … | V_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradation {
    series: Vec<DMatrix<f64>>,
    complements: Vec<DMatrix<f64>>,
    adapted: DMatrix<f64>,
    offsets: Vec<usize>,
    component_index: Vec<usize>,
}

impl Gradation {
    /// Nilpotency class `k`.
    pub fn class_k(&self) -> usize {
        self.complements.len()
    }

    pub fn dim(&self) -> usize {
        self.adapted.nrows()
    }

    /// Orthonormal bases of `u¹, …, u^k` (the trailing `{0}` is omitted).
    pub fn series(&self) -> &[DMatrix<f64>] {
        &self.series
    }

    /// Orthonormal bases of `V_1, …, V_k`.
    pub fn complements(&self) -> &[DMatrix<f64>] {
        &self.complements
    }

    /// The orthogonal change of basis `P = [V_1 | … | V_k]`.
    pub fn adapted_basis(&self) -> &DMatrix<f64> {
        &self.adapted
    }

    /// Block index (0-based) of each adapted coordinate.
    pub fn component_index(&self) -> &[usize] {
        &self.component_index
    }

    /// Adapted-coordinate range of block `i` (0-based).
    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn to_adapted(&self, x: &DVector<f64>) -> DVector<f64> {
        self.adapted.transpose() * x
    }

    pub fn from_adapted(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.adapted * y
    }

    /// Components `x = (x¹, …, x^k)` with `x^i ∈ V_i` in the `V_i` basis.
    pub fn components(&self, x: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        check_len(self.dim(), x.len())?;
        let y = self.to_adapted(x);
        Ok((0..self.class_k())
            .map(|i| y.rows_range(self.block_range(i)).into_owned())
            .collect())
    }

    /// Inverse of [`components`](Self::components).
    pub fn assemble(&self, parts: &[DVector<f64>]) -> Result<DVector<f64>> {
        check_len(self.class_k(), parts.len())?;
        let mut y = DVector::zeros(self.dim());
        for (i, p) in parts.iter().enumerate() {
            let r = self.block_range(i);
            check_len(r.len(), p.len())?;
            y.rows_range_mut(r).copy_from(p);
        }
        Ok(self.from_adapted(&y))
    }
}

/// Lower central series `u¹ = u`, `u^{i+1} = [u^i, u]` with complements.
pub fn lower_central_series(alg: &LieAlgebra) -> Result<Gradation> {
    let n = alg.dim();
    let mut series = vec![DMatrix::<f64>::identity(n, n)];
    loop {
        let current = series.last().expect("nonempty");
        let mut brackets = Vec::new();
        for a in current.column_iter() {
            let a = a.into_owned();
            for j in 0..n {
                brackets.push(alg.bracket(&a, &alg.basis_vector(j))?);
            }
        }
        let next = linalg::gram_schmidt(&brackets, n);
        if next.ncols() == 0 {
            break;
        }
        if next.ncols() == current.ncols() {
            return Err(Error::NotNilpotent {
                stable_dim: next.ncols(),
            });
        }
        series.push(next);
    }

    let k = series.len();
    let mut complements = Vec::with_capacity(k);
    for i in 0..k {
        let outer = &series[i];
        let c = if i + 1 < k {
            linalg::complement_within(&series[i + 1], outer)
        } else {
            outer.clone()
        };
        complements.push(c);
    }

    let mut offsets = vec![0];
    let mut component_index = Vec::with_capacity(n);
    for (i, c) in complements.iter().enumerate() {
        offsets.push(offsets[i] + c.ncols());
        component_index.extend(std::iter::repeat_n(i, c.ncols()));
    }
    if offsets[k] != n {
        return Err(Error::Numerical(format!(
            "graded complements span dimension {} of {n}",
            offsets[k]
        )));
    }
    let cols: Vec<DVector<f64>> = complements
        .iter()
        .flat_map(|c| c.column_iter().map(|v| v.into_owned()).collect::<Vec<_>>())
        .collect();
    let adapted = DMatrix::from_columns(&cols);

    Ok(Gradation {
        series,
        complements,
        adapted,
        offsets,
        component_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn same_span(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
        a.ncols() == b.ncols()
            && a.column_iter()
                .all(|c| linalg::distance_to_span(&c.into_owned(), b) < 1e-12)
    }

    #[test]
    fn heisenberg_series() {
        let g = lower_central_series(&LieAlgebra::heisenberg()).unwrap();
        assert_eq!(g.class_k(), 2);
        assert_eq!(g.series()[0].ncols(), 3);
        let e3 = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]);
        assert!(same_span(&g.series()[1], &e3));
        let v1 = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(same_span(&g.complements()[0], &v1));
        assert!(same_span(&g.complements()[1], &e3));
        assert_eq!(g.component_index(), &[0, 0, 1]);
        // coordinate-aligned inputs give the identity change of basis
        assert_relative_eq!(g.adapted_basis().clone(), DMatrix::identity(3, 3));
    }

    #[test]
    fn abelian_is_class_one() {
        let g = lower_central_series(&LieAlgebra::abelian(4)).unwrap();
        assert_eq!(g.class_k(), 1);
        assert_eq!(g.block_dims(), vec![4]);
    }

    #[test]
    fn filiform_classes() {
        assert_eq!(lower_central_series(&LieAlgebra::filiform(4)).unwrap().class_k(), 3);
        let g = lower_central_series(&LieAlgebra::filiform(5)).unwrap();
        assert_eq!(g.class_k(), 4);
        assert_eq!(g.block_dims(), vec![2, 1, 1, 1]);
    }

    #[test]
    fn sl2_is_not_nilpotent() {
        assert_eq!(
            lower_central_series(&LieAlgebra::sl2()),
            Err(Error::NotNilpotent { stable_dim: 3 })
        );
    }

    #[test]
    fn series_satisfies_bracket_recursion() {
        let alg = LieAlgebra::filiform(5);
        let g = lower_central_series(&alg).unwrap();
        for i in 0..g.class_k() - 1 {
            // every [u^i, u] lies in u^{i+1}
            for a in g.series()[i].column_iter() {
                for j in 0..5 {
                    let b = alg.bracket(&a.into_owned(), &alg.basis_vector(j)).unwrap();
                    assert!(linalg::distance_to_span(&b, &g.series()[i + 1]) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn components_round_trip() {
        let g = lower_central_series(&LieAlgebra::filiform(4)).unwrap();
        let x = DVector::from_vec(vec![0.4, -1.0, 3.5, 2.25]);
        let parts = g.components(&x).unwrap();
        let back = g.assemble(&parts).unwrap();
        assert!((back - x).amax() < 1e-12);
    }
}
