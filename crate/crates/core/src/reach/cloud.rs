use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::nilgroup::wrap_unit;

const KEY_BITS: u32 = 21;
const KEY_OFFSET: i64 = 1 << (KEY_BITS - 1);
pub(crate) const MAX_KEY_DIM: usize = 6;

/// Packs integer cell coordinates into a single key.
fn pack(cell: &[i64]) -> Option<u128> {
    let mut key: u128 = 0;
    for &c in cell {
        let s = c + KEY_OFFSET;
        if !(0..(1 << KEY_BITS)).contains(&s) {
            return None;
        }
        key = (key << KEY_BITS) | s as u128;
    }
    Some(key)
}

/// Coordinates used for matching: either the raw group coordinates
/// (lattice-aware) or a linear projection along a subspace.
#[derive(Debug, Clone)]
pub(crate) struct Chart {
    rows: Option<DMatrix<f64>>,
    circle: Vec<bool>,
}

impl Chart {
    pub(crate) fn identity(lattice_mask: Vec<bool>) -> Self {
        Self {
            rows: None,
            circle: lattice_mask,
        }
    }

    pub(crate) fn projection(rows: DMatrix<f64>) -> Self {
        let m = rows.nrows();
        Self {
            rows: Some(rows),
            circle: vec![false; m],
        }
    }

    pub(crate) fn dim(&self) -> usize {
        self.circle.len()
    }

    pub(crate) fn circle_mask(&self) -> &[bool] {
        &self.circle
    }

    pub(crate) fn apply(&self, x: &[f64], out: &mut [f64]) {
        match &self.rows {
            None => out.copy_from_slice(x),
            Some(r) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..x.len()).map(|j| r[(i, j)] * x[j]).sum();
                }
            }
        }
    }

    pub(crate) fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..a.len() {
            let mut diff = (a[i] - b[i]).abs();
            if self.circle[i] {
                diff = diff.rem_euclid(1.0);
                diff = diff.min(1.0 - diff);
            }
            d = d.max(diff);
        }
        d
    }
}

/// Cell lattice of side `cell` over chart coordinates.
#[derive(Debug, Clone)]
pub(crate) struct CellIndexer {
    cell: f64,
    circle_bins: Vec<Option<i64>>,
}

impl CellIndexer {
    pub(crate) fn new(cell: f64, circle: &[bool]) -> Self {
        let bins = (1.0 / cell).ceil() as i64;
        Self {
            cell,
            circle_bins: circle.iter().map(|&c| c.then_some(bins)).collect(),
        }
    }

    pub(crate) fn cell(&self, x: &[f64], out: &mut [i64]) {
        for i in 0..x.len() {
            out[i] = match self.circle_bins[i] {
                Some(b) => ((wrap_unit(x[i]) / self.cell) as i64).min(b - 1),
                None => (x[i] / self.cell).floor() as i64,
            };
        }
    }

    pub(crate) fn key(&self, x: &[f64]) -> Option<u128> {
        let mut c = vec![0i64; x.len()];
        self.cell(x, &mut c);
        pack(&c)
    }

    /// Keys of the `3^m` cells around `x`.
    pub(crate) fn neighbor_keys(&self, x: &[f64], out: &mut Vec<u128>) {
        out.clear();
        let m = x.len();
        let mut base = vec![0i64; m];
        self.cell(x, &mut base);
        let mut cur = vec![0i64; m];
        let total = 3usize.pow(m as u32);
        for code in 0..total {
            let mut c = code;
            for i in 0..m {
                let d = (c % 3) as i64 - 1;
                c /= 3;
                cur[i] = match self.circle_bins[i] {
                    Some(b) => (base[i] + d).rem_euclid(b),
                    None => base[i] + d,
                };
            }
            if let Some(k) = pack(&cur) {
                if !out.contains(&k) {
                    out.push(k);
                }
            }
        }
    }
}

/// One representative point per occupied cell, with its source.
#[derive(Debug, Clone)]
pub(crate) struct FineCloud {
    indexer: CellIndexer,
    dim: usize,
    map: HashMap<u128, u32>,
    reps: Vec<f64>,
    sources: Vec<(u32, u32)>,
}

impl FineCloud {
    pub(crate) fn new(cell: f64, circle: &[bool]) -> Self {
        Self {
            indexer: CellIndexer::new(cell, circle),
            dim: circle.len(),
            map: HashMap::new(),
            reps: Vec::new(),
            sources: Vec::new(),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.sources.len()
    }

    pub(crate) fn rep(&self, i: usize) -> &[f64] {
        &self.reps[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn insert(&mut self, x: &[f64], source: (u32, u32)) {
        if let Some(k) = self.indexer.key(x) {
            if let std::collections::hash_map::Entry::Vacant(e) = self.map.entry(k) {
                e.insert(self.sources.len() as u32);
                self.reps.extend_from_slice(x);
                self.sources.push(source);
            }
        }
    }

    /// Source of a representative within `eps` of `x` under `chart`.
    pub(crate) fn find_within(
        &self,
        chart: &Chart,
        x: &[f64],
        eps: f64,
        keys: &mut Vec<u128>,
    ) -> Option<(u32, u32)> {
        self.indexer.neighbor_keys(x, keys);
        let mut best: Option<(f64, u32)> = None;
        for k in keys.iter() {
            if let Some(&i) = self.map.get(k) {
                let d = chart.distance(x, self.rep(i as usize));
                if d < eps && best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                    best = Some((d, i));
                }
            }
        }
        best.map(|(_, i)| self.sources[i as usize])
    }
}

/// Occupied cells in insertion order, for restart selection.
#[derive(Debug, Clone)]
pub(crate) struct Occupancy {
    indexer: CellIndexer,
    seen: HashMap<u128, ()>,
    dim: usize,
    pub(crate) list: Vec<(u32, u32)>,
    points: Vec<f64>,
}

impl Occupancy {
    pub(crate) fn new(cell: f64, circle: &[bool]) -> Self {
        Self {
            indexer: CellIndexer::new(cell, circle),
            seen: HashMap::new(),
            dim: circle.len(),
            list: Vec::new(),
            points: Vec::new(),
        }
    }

    pub(crate) fn insert(&mut self, x: &[f64], source: (u32, u32)) {
        if let Some(k) = self.indexer.key(x) {
            if self.seen.insert(k, ()).is_none() {
                self.list.push(source);
                self.points.extend_from_slice(x);
            }
        }
    }

    pub(crate) fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}
