//! Bundled algebras and the example systems.

use nalgebra::{DMatrix, DVector};

use crate::algebra::LieAlgebra;
use crate::error::Result;
use crate::nilgroup::NilGroupSpec;
use crate::system::{ControlBox, LinearSystemSpec};

/// Named test algebras: abelian of dimensions 1 to 3, Heisenberg, and the
/// filiform algebras of class 3 and 4.
pub fn test_algebras() -> Vec<(&'static str, LieAlgebra)> {
    vec![
        ("abelian1", LieAlgebra::abelian(1)),
        ("abelian2", LieAlgebra::abelian(2)),
        ("abelian3", LieAlgebra::abelian(3)),
        ("heisenberg", LieAlgebra::heisenberg()),
        ("filiform4", LieAlgebra::filiform(4)),
        ("filiform5", LieAlgebra::filiform(5)),
    ]
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

/// `ẋ = x + u`, `ẏ = −y + u` on `R²` with `u ∈ [−1, 1]`.
pub fn r2_system() -> Result<LinearSystemSpec> {
    LinearSystemSpec::new(
        NilGroupSpec::simply_connected(LieAlgebra::abelian(2))?,
        diag(&[1.0, -1.0]),
        vec![DVector::from_vec(vec![1.0, 1.0])],
        ControlBox::symmetric(1, 1.0)?,
    )
}

fn heisenberg_system(lattice: Vec<usize>) -> Result<LinearSystemSpec> {
    LinearSystemSpec::new(
        NilGroupSpec::new(LieAlgebra::heisenberg(), lattice)?,
        diag(&[1.0, -1.0, 0.0]),
        vec![DVector::from_vec(vec![1.0, 1.0, 0.0])],
        ControlBox::symmetric(1, 1.0)?,
    )
}

/// The Heisenberg group modulo the integer lattice in its center, with
/// drift `diag(1, −1, 0)` and control vector `e1 + e2`.
pub fn heisenberg_quotient_system() -> Result<LinearSystemSpec> {
    heisenberg_system(vec![2])
}

/// The same system on the simply connected Heisenberg group.
pub fn heisenberg_full_system() -> Result<LinearSystemSpec> {
    heisenberg_system(Vec::new())
}
