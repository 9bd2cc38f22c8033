use crate::error::{Error, Result};
use crate::nilgroup::{wrap_unit, NilGroupSpec};

/// Default number of grid points per non-lattice axis.
pub const DEFAULT_AXIS_POINTS: usize = 101;
/// Default number of bins per circle axis.
pub const DEFAULT_CIRCLE_BINS: usize = 64;

/// One axis of a classification grid.
#[derive(Debug, Clone, PartialEq)]
pub enum GridAxis {
    /// `points` cell centers from `lo` to `hi` inclusive.
    Interval { lo: f64, hi: f64, points: usize },
    /// `[0, 1)` split into `bins` equal bins.
    Circle { bins: usize },
}

impl GridAxis {
    fn len(&self) -> usize {
        match *self {
            GridAxis::Interval { points, .. } => points,
            GridAxis::Circle { bins } => bins,
        }
    }

    fn index_of(&self, v: f64) -> Option<usize> {
        match *self {
            GridAxis::Interval { lo, hi, points } => {
                let s = (hi - lo) / (points - 1) as f64;
                let i = ((v - lo) / s).round();
                (i >= 0.0 && i < points as f64).then_some(i as usize)
            }
            GridAxis::Circle { bins } => {
                Some(((wrap_unit(v) * bins as f64) as usize).min(bins - 1))
            }
        }
    }

    fn center(&self, i: usize) -> f64 {
        match *self {
            GridAxis::Interval { lo, hi, points } => lo + i as f64 * (hi - lo) / (points - 1) as f64,
            GridAxis::Circle { bins } => (i as f64 + 0.5) / bins as f64,
        }
    }

    pub fn is_circle(&self) -> bool {
        matches!(self, GridAxis::Circle { .. })
    }
}

/// A rectangular grid over the group coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    axes: Vec<GridAxis>,
}

impl GridSpec {
    pub fn new(axes: Vec<GridAxis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidInput("grid needs at least one axis".into()));
        }
        for a in &axes {
            match *a {
                GridAxis::Interval { lo, hi, points } => {
                    if !(lo < hi) || points < 2 || !lo.is_finite() || !hi.is_finite() {
                        return Err(Error::InvalidInput(format!(
                            "bad interval axis [{lo}, {hi}] with {points} points"
                        )));
                    }
                }
                GridAxis::Circle { bins } => {
                    if bins == 0 {
                        return Err(Error::InvalidInput("circle axis needs bins".into()));
                    }
                }
            }
        }
        Ok(Self { axes })
    }

    /// Same window `[lo, hi]` on every non-lattice coordinate of `group`,
    /// circles on lattice coordinates.
    pub fn window(group: &NilGroupSpec, lo: f64, hi: f64, points: usize, bins: usize) -> Result<Self> {
        let axes = (0..group.dim())
            .map(|i| {
                if group.is_lattice(i) {
                    GridAxis::Circle { bins }
                } else {
                    GridAxis::Interval { lo, hi, points }
                }
            })
            .collect();
        Self::new(axes)
    }

    pub fn axes(&self) -> &[GridAxis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(GridAxis::len).product()
    }

    /// Flat index of the cell containing `x`, if inside the window.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        for (a, v) in self.axes.iter().zip(x) {
            idx = idx * a.len() + a.index_of(*v)?;
        }
        Some(idx)
    }

    /// Per-axis indices of a flat cell index.
    pub fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.axes.len()];
        for (k, a) in self.axes.iter().enumerate().rev() {
            out[k] = idx % a.len();
            idx /= a.len();
        }
        out
    }

    pub fn flatten(&self, parts: &[usize]) -> usize {
        self.axes
            .iter()
            .zip(parts)
            .fold(0, |acc, (a, &i)| acc * a.len() + i)
    }

    pub fn center(&self, idx: usize) -> Vec<f64> {
        self.unflatten(idx)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.center(i))
            .collect()
    }

    /// Flat indices of the cells within `radius` cells (per axis) of `idx`,
    /// wrapping on circle axes.
    pub fn neighborhood(&self, idx: usize, radius: usize) -> Vec<usize> {
        let base = self.unflatten(idx);
        let r = radius as i64;
        let mut out = vec![Vec::new()];
        for (a, &b) in self.axes.iter().zip(&base) {
            let len = a.len() as i64;
            let mut opts = Vec::new();
            for d in -r..=r {
                let j = b as i64 + d;
                if a.is_circle() {
                    let j = j.rem_euclid(len) as usize;
                    if !opts.contains(&j) {
                        opts.push(j);
                    }
                } else if j >= 0 && j < len {
                    opts.push(j as usize);
                }
            }
            out = out
                .into_iter()
                .flat_map(|p| {
                    opts.iter().map(move |&j| {
                        let mut q = p.clone();
                        q.push(j);
                        q
                    })
                })
                .collect();
        }
        out.iter().map(|p| self.flatten(p)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellClass {
    /// Contains a point of the estimate.
    In,
    /// Visited by sampling, no point of the estimate.
    Out,
    /// Never visited.
    Unknown,
}

impl CellClass {
    pub fn as_str(self) -> &'static str {
        match self {
            CellClass::In => "in",
            CellClass::Out => "out",
            CellClass::Unknown => "unknown",
        }
    }
}

/// Grid cells labelled by a region estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct GridClassification {
    spec: GridSpec,
    classes: Vec<CellClass>,
}

/// Cell-level comparison against a reference region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agreement {
    pub scored: usize,
    pub agreeing: usize,
}

impl Agreement {
    pub fn fraction(&self) -> f64 {
        if self.scored == 0 {
            0.0
        } else {
            self.agreeing as f64 / self.scored as f64
        }
    }
}

impl GridClassification {
    pub(crate) fn new(spec: GridSpec, visited: &[bool], marked: &[bool]) -> Self {
        let classes = visited
            .iter()
            .zip(marked)
            .map(|(&v, &m)| {
                if m {
                    CellClass::In
                } else if v {
                    CellClass::Out
                } else {
                    CellClass::Unknown
                }
            })
            .collect();
        Self { spec, classes }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn classes(&self) -> &[CellClass] {
        &self.classes
    }

    pub fn class_at(&self, x: &[f64]) -> Option<CellClass> {
        self.spec.cell_of(x).map(|i| self.classes[i])
    }

    pub fn count(&self, class: CellClass) -> usize {
        self.classes.iter().filter(|c| **c == class).count()
    }

    /// Compares `In` cells against `target` on the cells whose centers are
    /// farther than `delta` from the reference boundary.
    pub fn agreement<T, B>(&self, target: T, boundary_distance: B, delta: f64) -> Agreement
    where
        T: Fn(&[f64]) -> bool,
        B: Fn(&[f64]) -> f64,
    {
        let mut scored = 0;
        let mut agreeing = 0;
        for (idx, class) in self.classes.iter().enumerate() {
            let c = self.spec.center(idx);
            if boundary_distance(&c) <= delta {
                continue;
            }
            scored += 1;
            if (*class == CellClass::In) == target(&c) {
                agreeing += 1;
            }
        }
        Agreement { scored, agreeing }
    }
}
