//! Simply connected nilpotent groups `(u, ∗)` in exponential coordinates,
//! optionally quotiented by a unit lattice in central coordinate directions.

use nalgebra::{DMatrix, DVector};

use crate::algebra::{LieAlgebra, AUTOMORPHISM_TOL};
use crate::error::{check_len, Error, Result};
use crate::gradation::{lower_central_series, Gradation};

/// Largest nilpotency class with an exact hard-coded BCH product.
pub const MAX_CLASS: usize = 4;

/// Coefficients `c_p` of the invariant-field series `Σ c_p ad(x)^p Z`,
/// `c_p = (−1)^p B_p / p!` with `B_1 = +1/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BchCoefficients {
    c: Vec<f64>,
}

impl BchCoefficients {
    pub fn as_slice(&self) -> &[f64] {
        &self.c
    }
}

/// Bernoulli numbers `B_0..B_{count-1}` with the `B_1 = +1/2` convention.
fn bernoulli_plus(count: usize) -> Vec<f64> {
    let mut b = vec![0.0; count];
    if count == 0 {
        return b;
    }
    b[0] = 1.0;
    for m in 1..count {
        let mut acc = 0.0;
        let mut binom = 1.0; // C(m+1, 0)
        for (j, bj) in b.iter().enumerate().take(m) {
            acc += binom * bj;
            binom = binom * (m + 1 - j) as f64 / (j + 1) as f64;
        }
        b[m] = -acc / (m + 1) as f64;
    }
    if count > 1 {
        b[1] = 0.5;
    }
    b
}

/// `c_0..c_{k-1}` for nilpotency class `k ≤ 4`.
pub fn bch_coefficients(class_k: usize) -> Result<BchCoefficients> {
    if class_k == 0 || class_k > MAX_CLASS {
        return Err(Error::Unsupported(format!(
            "nilpotency class {class_k} (supported: 1..={MAX_CLASS})"
        )));
    }
    let b = bernoulli_plus(class_k);
    let mut fact = 1.0;
    let c = b
        .iter()
        .enumerate()
        .map(|(p, bp)| {
            if p > 0 {
                fact *= p as f64;
            }
            let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
            sign * bp / fact
        })
        .collect();
    Ok(BchCoefficients { c })
}

/// A point of the group in exponential coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPoint {
    coords: DVector<f64>,
}

impl GroupPoint {
    /// Wraps raw coordinates. Use [`NilGroupSpec::point`] to get the
    /// lattice-reduced canonical form.
    pub fn from_coords(coords: DVector<f64>) -> Self {
        Self { coords }
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn into_coords(self) -> DVector<f64> {
        self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// The group `(u, ∗)` of a nilpotent algebra of class at most 4, optionally
/// reduced modulo `Z` in central basis directions.
#[derive(Debug, Clone, PartialEq)]
pub struct NilGroupSpec {
    algebra: LieAlgebra,
    gradation: Gradation,
    lattice: Vec<usize>,
    lattice_mask: Vec<bool>,
    coeffs: BchCoefficients,
}

impl NilGroupSpec {
    /// `lattice` holds 0-based indices of central basis vectors that are
    /// taken modulo 1.
    pub fn new(algebra: LieAlgebra, lattice: Vec<usize>) -> Result<Self> {
        let gradation = lower_central_series(&algebra)?;
        let coeffs = bch_coefficients(gradation.class_k())?;
        let n = algebra.dim();
        let mut lattice_mask = vec![false; n];
        for &j in &lattice {
            if j >= n {
                return Err(Error::InvalidInput(format!(
                    "lattice index {} out of range for dim {n}",
                    j + 1
                )));
            }
            let ej = algebra.basis_vector(j);
            for i in 0..n {
                if algebra.bracket(&ej, &algebra.basis_vector(i))?.amax() != 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "lattice direction e{} is not central",
                        j + 1
                    )));
                }
            }
            lattice_mask[j] = true;
        }
        let mut lattice = lattice;
        lattice.sort_unstable();
        lattice.dedup();
        Ok(Self {
            algebra,
            gradation,
            lattice,
            lattice_mask,
            coeffs,
        })
    }

    pub fn simply_connected(algebra: LieAlgebra) -> Result<Self> {
        Self::new(algebra, Vec::new())
    }

    pub fn algebra(&self) -> &LieAlgebra {
        &self.algebra
    }

    pub fn gradation(&self) -> &Gradation {
        &self.gradation
    }

    pub fn class_k(&self) -> usize {
        self.gradation.class_k()
    }

    pub fn dim(&self) -> usize {
        self.algebra.dim()
    }

    pub fn lattice(&self) -> &[usize] {
        &self.lattice
    }

    pub fn is_lattice(&self, i: usize) -> bool {
        self.lattice_mask[i]
    }

    pub fn coefficients(&self) -> &BchCoefficients {
        &self.coeffs
    }

    pub fn identity(&self) -> GroupPoint {
        GroupPoint::from_coords(DVector::zeros(self.dim()))
    }

    /// Canonical point from raw coordinates.
    pub fn point(&self, coords: DVector<f64>) -> Result<GroupPoint> {
        self.reduce_mod_lattice(coords)
    }

    /// Reduces lattice coordinates into `[0, 1)`.
    pub fn reduce_mod_lattice(&self, coords: DVector<f64>) -> Result<GroupPoint> {
        check_len(self.dim(), coords.len())?;
        let mut coords = coords;
        self.reduce_in_place(coords.as_mut_slice());
        Ok(GroupPoint::from_coords(coords))
    }

    #[inline]
    pub(crate) fn reduce_in_place(&self, x: &mut [f64]) {
        for &j in &self.lattice {
            x[j] = wrap_unit(x[j]);
        }
    }

    /// BCH product `x ∗ y`, exact for class ≤ 4.
    pub fn bch_product(&self, x: &GroupPoint, y: &GroupPoint) -> Result<GroupPoint> {
        check_len(self.dim(), x.dim())?;
        check_len(self.dim(), y.dim())?;
        let mut out = vec![0.0; self.dim()];
        self.bch_into(x.coords.as_slice(), y.coords.as_slice(), &mut out);
        self.reduce_in_place(&mut out);
        Ok(GroupPoint::from_coords(DVector::from_vec(out)))
    }

    /// `X + Y + ½[X,Y] + (1/12)([X,[X,Y]] + [Y,[Y,X]]) − (1/24)[Y,[X,[X,Y]]]`,
    /// without lattice reduction.
    pub(crate) fn bch_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            out[i] = x[i] + y[i];
        }
        let k = self.class_k();
        if k < 2 {
            return;
        }
        let alg = &self.algebra;
        let mut xy = vec![0.0; n];
        alg.bracket_into(x, y, &mut xy);
        for i in 0..n {
            out[i] += 0.5 * xy[i];
        }
        if k < 3 {
            return;
        }
        let mut xxy = vec![0.0; n];
        let mut yx = vec![0.0; n];
        let mut yyx = vec![0.0; n];
        alg.bracket_into(x, &xy, &mut xxy);
        alg.bracket_into(y, x, &mut yx);
        alg.bracket_into(y, &yx, &mut yyx);
        for i in 0..n {
            out[i] += (xxy[i] + yyx[i]) / 12.0;
        }
        if k < 4 {
            return;
        }
        let mut yxxy = vec![0.0; n];
        alg.bracket_into(y, &xxy, &mut yxxy);
        for i in 0..n {
            out[i] -= yxxy[i] / 24.0;
        }
    }

    /// Inverse, which is negation in exponential coordinates.
    pub fn inverse(&self, x: &GroupPoint) -> Result<GroupPoint> {
        self.reduce_mod_lattice(-x.coords.clone())
    }

    /// `Σ_{p<k} c_p ad(x)^p Z`, the invariant field generated by `Z`
    /// evaluated at `x`. This is `d/ds|₀ (sZ) ∗ x`.
    pub fn invariant_field_eval(&self, z: &DVector<f64>, x: &GroupPoint) -> Result<DVector<f64>> {
        check_len(self.dim(), z.len())?;
        check_len(self.dim(), x.dim())?;
        let n = self.dim();
        let mut out = vec![0.0; n];
        let mut scratch = vec![0.0; 2 * n];
        self.field_into(z.as_slice(), x.coords.as_slice(), &mut out, &mut scratch);
        Ok(DVector::from_vec(out))
    }

    /// Allocation-free field evaluation; `scratch` needs `2n` entries.
    #[inline]
    pub(crate) fn field_into(&self, z: &[f64], x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        let n = z.len();
        let c = self.coeffs.as_slice();
        out.copy_from_slice(z);
        if c.len() < 2 {
            return;
        }
        let (t, u) = scratch.split_at_mut(n);
        t.copy_from_slice(z);
        for &cp in &c[1..] {
            self.algebra.bracket_into(x, t, &mut u[..n]);
            t.copy_from_slice(&u[..n]);
            if cp != 0.0 {
                for i in 0..n {
                    out[i] += cp * t[i];
                }
            }
        }
    }

    /// Applies an algebra automorphism (e.g. `e^{tD}`) to a point.
    pub fn automorphism_apply(&self, a: &DMatrix<f64>, x: &GroupPoint) -> Result<GroupPoint> {
        let residual = self.algebra.automorphism_residual(a)?;
        if residual >= AUTOMORPHISM_TOL {
            return Err(Error::NotAutomorphism { residual });
        }
        check_len(self.dim(), x.dim())?;
        self.check_lattice_preserved(a)?;
        self.reduce_mod_lattice(a * &x.coords)
    }

    /// A lattice-compatible map must send each lattice direction to itself.
    pub(crate) fn check_lattice_preserved(&self, a: &DMatrix<f64>) -> Result<()> {
        for &j in &self.lattice {
            for i in 0..self.dim() {
                let expected = if i == j { 1.0 } else { 0.0 };
                if (a[(i, j)] - expected).abs() > AUTOMORPHISM_TOL {
                    return Err(Error::InvalidInput(format!(
                        "map does not fix lattice direction e{}",
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Sup-norm distance, measured along the circle on lattice coordinates.
    pub fn distance(&self, x: &GroupPoint, y: &GroupPoint) -> f64 {
        self.distance_slices(x.coords.as_slice(), y.coords.as_slice())
    }

    #[inline]
    pub(crate) fn distance_slices(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..x.len() {
            let mut diff = (x[i] - y[i]).abs();
            if self.lattice_mask[i] {
                diff = diff.rem_euclid(1.0);
                diff = diff.min(1.0 - diff);
            }
            d = d.max(diff);
        }
        d
    }
}

/// Maps a real number into `[0, 1)`.
#[inline]
pub fn wrap_unit(v: f64) -> f64 {
    let r = v.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn heis() -> NilGroupSpec {
        NilGroupSpec::simply_connected(LieAlgebra::heisenberg()).unwrap()
    }

    fn heis_quotient() -> NilGroupSpec {
        NilGroupSpec::new(LieAlgebra::heisenberg(), vec![2]).unwrap()
    }

    fn pt(v: &[f64]) -> GroupPoint {
        GroupPoint::from_coords(DVector::from_column_slice(v))
    }

    #[test]
    fn coefficients_match_series() {
        let c = bch_coefficients(4).unwrap();
        assert_eq!(c.as_slice()[0], 1.0);
        assert_eq!(c.as_slice()[1], -0.5);
        assert_relative_eq!(c.as_slice()[2], 1.0 / 12.0, epsilon = 1e-16);
        assert_eq!(c.as_slice()[3], 0.0);
        assert_eq!(bch_coefficients(1).unwrap().as_slice(), &[1.0]);
        assert!(matches!(bch_coefficients(5), Err(Error::Unsupported(_))));
    }

    #[test]
    fn heisenberg_product() {
        let g = heis();
        let p = g.bch_product(&pt(&[1.0, 0.0, 0.0]), &pt(&[0.0, 1.0, 0.0])).unwrap();
        assert_eq!(p, pt(&[1.0, 1.0, 0.5]));
    }

    #[test]
    fn identity_and_inverse() {
        let g = NilGroupSpec::simply_connected(LieAlgebra::filiform(5)).unwrap();
        let x = pt(&[0.3, -1.1, 2.0, 0.7, -0.4]);
        assert_eq!(g.bch_product(&x, &g.identity()).unwrap(), x);
        let inv = g.inverse(&x).unwrap();
        assert!(g.bch_product(&x, &inv).unwrap().coords().amax() < 1e-12);
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(heis().inverse(&pt(&[1.0, 1.0, 0.5])).unwrap(), pt(&[-1.0, -1.0, -0.5]));
        assert_eq!(heis().inverse(&heis().identity()).unwrap().coords().amax(), 0.0);
        assert_eq!(heis_quotient().inverse(&pt(&[0.0, 0.0, 0.25])).unwrap(), pt(&[0.0, 0.0, 0.75]));
    }

    #[test]
    fn lattice_reduction() {
        let q = heis_quotient();
        let r = q.reduce_mod_lattice(DVector::from_vec(vec![0.3, -2.0, 1.75])).unwrap();
        assert_eq!(r, pt(&[0.3, -2.0, 0.75]));
        let raw = DVector::from_vec(vec![0.3, -2.0, 1.75]);
        assert_eq!(heis().reduce_mod_lattice(raw.clone()).unwrap().coords(), &raw);
        let p = q.bch_product(&pt(&[0.0, 0.0, 0.9]), &pt(&[0.0, 0.0, 0.3])).unwrap();
        assert_relative_eq!(p.coords()[2], 0.2, epsilon = 1e-15);
        assert_eq!(wrap_unit(-1e-18), 0.0);
    }

    #[test]
    fn non_central_lattice_rejected() {
        assert!(NilGroupSpec::new(LieAlgebra::heisenberg(), vec![0]).is_err());
    }

    #[test]
    fn class_five_unsupported() {
        assert!(matches!(
            NilGroupSpec::simply_connected(LieAlgebra::filiform(6)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn heisenberg_control_field() {
        let g = heis();
        let z = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        let (x, y) = (0.7, -0.2);
        let f = g.invariant_field_eval(&z, &pt(&[x, y, 5.0])).unwrap();
        assert_relative_eq!(f, DVector::from_vec(vec![1.0, 1.0, (y - x) / 2.0]), epsilon = 1e-15);
        assert_eq!(g.invariant_field_eval(&z, &g.identity()).unwrap(), z);
    }

    #[test]
    fn filiform_field_value() {
        let g = NilGroupSpec::simply_connected(LieAlgebra::filiform(4)).unwrap();
        let z = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]);
        let f = g.invariant_field_eval(&z, &pt(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert_relative_eq!(
            f,
            DVector::from_vec(vec![0.0, 1.0, -0.5, 1.0 / 12.0]),
            epsilon = 1e-15
        );
    }

    #[test]
    fn diagonal_flow_automorphism() {
        let g = heis();
        let t: f64 = 0.8;
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![t.exp(), (-t).exp(), 1.0]));
        let y = g.automorphism_apply(&a, &pt(&[1.0, 1.0, 0.5])).unwrap();
        assert_relative_eq!(y.coords()[0], t.exp());
        assert_relative_eq!(y.coords()[1], (-t).exp());
        assert_relative_eq!(y.coords()[2], 0.5);
        let x = pt(&[0.2, 0.4, 0.6]);
        assert_eq!(g.automorphism_apply(&DMatrix::identity(3, 3), &x).unwrap(), x);
        assert!(matches!(
            g.automorphism_apply(&DMatrix::from_diagonal_element(3, 3, 2.0), &x),
            Err(Error::NotAutomorphism { .. })
        ));
    }
}
