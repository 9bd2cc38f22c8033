//! TOML system configs. Indices in `brackets` and `lattice` are 1-based.
//!
//! ```toml
//! dim = 3
//! brackets = [[1, 2, 3, 1.0]]
//! lattice = [3]
//! drift = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 0.0]]
//! controls = [[1.0, 1.0, 0.0]]
//! omega = [[-1.0, 1.0]]
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::algebra::LieAlgebra;
use crate::error::{Error, Result};
use crate::nilgroup::NilGroupSpec;
use crate::semidirect::SemidirectSpec;
use crate::system::{ControlBox, LinearSystemSpec};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    dim: usize,
    #[serde(default)]
    brackets: Vec<(usize, usize, usize, f64)>,
    #[serde(default)]
    labels: Option<Vec<String>>,
    #[serde(default)]
    lattice: Vec<usize>,
    #[serde(default)]
    drift: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    controls: Vec<Vec<f64>>,
    #[serde(default)]
    omega: Vec<(f64, f64)>,
    #[serde(default)]
    torus_dim: Option<usize>,
    #[serde(default)]
    rho_generators: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    torus_controls: Vec<Vec<f64>>,
}

/// A parsed config, converted to 0-based indices and checked for shape
/// only. Algebraic checks happen when the objects are built.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub dim: usize,
    pub brackets: Vec<(usize, usize, usize, f64)>,
    pub labels: Option<Vec<String>>,
    pub lattice: Vec<usize>,
    pub drift: Option<DMatrix<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub omega: Vec<(f64, f64)>,
    pub torus_dim: Option<usize>,
    pub rho_generators: Vec<DMatrix<f64>>,
    pub torus_controls: Vec<DVector<f64>>,
    hash: String,
}

fn one_based(i: usize, dim: usize, what: &str) -> Result<usize> {
    if i == 0 || i > dim {
        return Err(Error::Config(format!(
            "{what} index {i} out of range 1..={dim}"
        )));
    }
    Ok(i - 1)
}

fn square(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("{what} must be a {n}x{n} matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn vector(v: &[f64], n: usize, what: &str) -> Result<DVector<f64>> {
    if v.len() != n {
        return Err(Error::Config(format!(
            "{what} has {} entries, expected {n}",
            v.len()
        )));
    }
    Ok(DVector::from_column_slice(v))
}

impl SystemConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let n = raw.dim;
        if n == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        let brackets = raw
            .brackets
            .iter()
            .map(|&(i, j, k, c)| {
                Ok((
                    one_based(i, n, "bracket")?,
                    one_based(j, n, "bracket")?,
                    one_based(k, n, "bracket")?,
                    c,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let lattice = raw
            .lattice
            .iter()
            .map(|&i| one_based(i, n, "lattice"))
            .collect::<Result<Vec<_>>>()?;
        let drift = raw.drift.as_deref().map(|d| square(d, n, "drift")).transpose()?;
        let controls = raw
            .controls
            .iter()
            .enumerate()
            .map(|(j, z)| vector(z, n, &format!("control {}", j + 1)))
            .collect::<Result<Vec<_>>>()?;
        let rho_generators = raw
            .rho_generators
            .iter()
            .enumerate()
            .map(|(j, a)| square(a, n, &format!("rho generator {}", j + 1)))
            .collect::<Result<Vec<_>>>()?;
        let torus_dim = raw.torus_dim;
        if let Some(d) = torus_dim {
            if rho_generators.len() != d {
                return Err(Error::Config(format!(
                    "torus_dim = {d} but {} rho generators given",
                    rho_generators.len()
                )));
            }
        } else if !rho_generators.is_empty() || !raw.torus_controls.is_empty() {
            return Err(Error::Config(
                "rho_generators and torus_controls need torus_dim".into(),
            ));
        }
        let torus_controls = raw
            .torus_controls
            .iter()
            .enumerate()
            .map(|(j, y)| vector(y, torus_dim.unwrap_or(0), &format!("torus control {}", j + 1)))
            .collect::<Result<Vec<_>>>()?;
        let hash = Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        Ok(Self {
            dim: n,
            brackets,
            labels: raw.labels,
            lattice,
            drift,
            controls,
            omega: raw.omega,
            torus_dim,
            rho_generators,
            torus_controls,
            hash,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// SHA-256 of the config text, in hex.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn algebra(&self) -> Result<LieAlgebra> {
        let alg = LieAlgebra::from_brackets(self.dim, &self.brackets)?;
        match &self.labels {
            Some(l) => alg.with_labels(l.clone()),
            None => Ok(alg),
        }
    }

    pub fn group(&self) -> Result<NilGroupSpec> {
        NilGroupSpec::new(self.algebra()?, self.lattice.clone())
    }

    pub fn omega_box(&self) -> Result<ControlBox> {
        ControlBox::new(self.omega.clone())
    }

    fn drift_matrix(&self) -> Result<DMatrix<f64>> {
        self.drift
            .clone()
            .ok_or_else(|| Error::Config("config has no drift".into()))
    }

    pub fn system(&self) -> Result<LinearSystemSpec> {
        LinearSystemSpec::new(
            self.group()?,
            self.drift_matrix()?,
            self.controls.clone(),
            self.omega_box()?,
        )
    }

    /// The semidirect system, when `torus_dim` is set.
    pub fn semidirect(&self) -> Result<SemidirectSpec> {
        let d = self
            .torus_dim
            .ok_or_else(|| Error::Config("config has no torus_dim".into()))?;
        let torus_controls = if self.torus_controls.is_empty() {
            vec![DVector::zeros(d); self.controls.len()]
        } else {
            self.torus_controls.clone()
        };
        SemidirectSpec::new(
            self.rho_generators.clone(),
            self.group()?,
            self.drift_matrix()?,
            torus_controls,
            self.controls.clone(),
            self.omega_box()?,
        )
    }
}
