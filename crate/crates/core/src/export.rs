//! CSV and SVG artifacts. Every file starts with comment lines carrying the
//! config hash and the seed.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::nilgroup::GroupPoint;
use crate::reach::{CellClass, GridAxis, GridClassification, RegionEstimate};
use crate::spectral::SpectralDecomposition;

/// Header data written at the top of every artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, seed: Option<u64>) -> Self {
        Self {
            config_hash: config_hash.into(),
            seed,
        }
    }

    fn lines(&self, prefix: &str, suffix: &str) -> String {
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        format!(
            "{prefix}config_sha256={}{suffix}\n{prefix}seed={seed}{suffix}\n",
            self.config_hash
        )
    }
}

fn csv_table(prov: &Provenance, header: &[String], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Numerical(format!("csv: {e}"));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    let body = w.into_inner().map_err(|e| Error::Numerical(format!("csv: {e}")))?;
    let body = String::from_utf8(body).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(prov.lines("# ", "") + &body)
}

fn coord_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn coords(p: &GroupPoint) -> impl Iterator<Item = String> + '_ {
    p.coords().iter().map(|v| v.to_string())
}

/// `t, x1..xn` rows.
pub fn trajectory_csv(prov: &Provenance, times: &[f64], points: &[GroupPoint]) -> Result<String> {
    let n = points.first().map_or(0, GroupPoint::dim);
    let mut header = vec!["t".to_string()];
    header.extend(coord_names("x", n));
    let rows = times
        .iter()
        .zip(points)
        .map(|(t, p)| std::iter::once(t.to_string()).chain(coords(p)).collect())
        .collect();
    csv_table(prov, &header, rows)
}

/// `x1..xn, tag` rows, one per estimate point.
pub fn points_csv(prov: &Provenance, est: &RegionEstimate) -> Result<String> {
    let n = est.bbox.len();
    let mut header = coord_names("x", n);
    header.push("tag".into());
    let rows = est
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| coords(p).chain(std::iter::once(est.tag(i).to_string())).collect())
        .collect();
    csv_table(prov, &header, rows)
}

/// `c1..cn, class` rows, one per grid cell.
pub fn grid_csv(prov: &Provenance, grid: &GridClassification) -> Result<String> {
    let spec = grid.spec();
    let mut header = coord_names("c", spec.dim());
    header.push("class".into());
    let rows = grid
        .classes()
        .iter()
        .enumerate()
        .map(|(idx, class)| {
            spec.center(idx)
                .iter()
                .map(|v| v.to_string())
                .chain(std::iter::once(class.as_str().to_string()))
                .collect()
        })
        .collect();
    csv_table(prov, &header, rows)
}

/// `subspace, vector, x1..xn` rows listing the `g⁺`, `g⁰`, `g⁻` bases.
pub fn basis_csv(prov: &Provenance, decomp: &SpectralDecomposition) -> Result<String> {
    let n = decomp.zero().nrows();
    let mut header = vec!["subspace".to_string(), "vector".to_string()];
    header.extend(coord_names("x", n));
    let mut rows = Vec::new();
    for (name, m) in [
        ("plus", decomp.plus()),
        ("zero", decomp.zero()),
        ("minus", decomp.minus()),
    ] {
        for (j, col) in m.column_iter().enumerate() {
            let mut r = vec![name.to_string(), (j + 1).to_string()];
            r.extend(col.iter().map(|v| v.to_string()));
            rows.push(r);
        }
    }
    csv_table(prov, &header, rows)
}

const SIZE: f64 = 480.0;
const MARGIN: f64 = 40.0;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, v: f64) -> f64 {
        MARGIN + (v - self.x.0) / (self.x.1 - self.x.0) * SIZE
    }

    fn py(&self, v: f64) -> f64 {
        MARGIN + (self.y.1 - v) / (self.y.1 - self.y.0) * SIZE
    }
}

fn svg_open(prov: &Provenance, title: &str, f: &Frame, ax: (usize, usize)) -> String {
    let total = SIZE + 2.0 * MARGIN;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{total}\" height=\"{total}\">\n"
    );
    s += &prov.lines("<!-- ", " -->");
    let _ = writeln!(
        s,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{SIZE}\" height=\"{SIZE}\" fill=\"none\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        s,
        "<text x=\"{MARGIN}\" y=\"{}\" font-size=\"14\">{title}</text>",
        MARGIN - 12.0
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">x{} [{}, {}]  x{} [{}, {}]</text>",
        MARGIN,
        total - 12.0,
        ax.0 + 1,
        f.x.0,
        f.x.1,
        ax.1 + 1,
        f.y.0,
        f.y.1
    );
    s
}

fn axis_range(est: &RegionEstimate, i: usize) -> (f64, f64) {
    match est.bbox.get(i).copied().flatten() {
        Some((lo, hi)) if hi > lo => {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
        Some((lo, _)) => (lo - 1.0, lo + 1.0),
        None => (0.0, 1.0),
    }
}

fn check_axes(n: usize, ax: (usize, usize)) -> Result<()> {
    if ax.0 >= n || ax.1 >= n || ax.0 == ax.1 {
        return Err(Error::InvalidInput(format!(
            "plot axes ({}, {}) invalid for dimension {n}",
            ax.0 + 1,
            ax.1 + 1
        )));
    }
    Ok(())
}

/// Scatter plot of the estimate points projected on coordinates `ax`.
pub fn scatter_svg(prov: &Provenance, est: &RegionEstimate, ax: (usize, usize)) -> Result<String> {
    check_axes(est.bbox.len(), ax)?;
    let f = Frame {
        x: axis_range(est, ax.0),
        y: axis_range(est, ax.1),
    };
    let mut s = svg_open(prov, &format!("{} points", est.points.len()), &f, ax);
    for p in &est.points {
        let c = p.coords();
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1\" fill=\"steelblue\"/>",
            f.px(c[ax.0]),
            f.py(c[ax.1])
        );
    }
    s += "</svg>\n";
    Ok(s)
}

/// Polyline of a trajectory projected on coordinates `ax`.
pub fn trajectory_svg(prov: &Provenance, points: &[GroupPoint], ax: (usize, usize)) -> Result<String> {
    let n = points.first().map_or(0, GroupPoint::dim);
    check_axes(n, ax)?;
    let range = |i: usize| {
        let (lo, hi) = points
            .iter()
            .map(|p| p.coords()[i])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let pad = if hi > lo { 0.05 * (hi - lo) } else { 1.0 };
        (lo - pad, hi + pad)
    };
    let f = Frame {
        x: range(ax.0),
        y: range(ax.1),
    };
    let mut s = svg_open(prov, &format!("{} samples", points.len()), &f, ax);
    s += "<polyline fill=\"none\" stroke=\"steelblue\" points=\"";
    for p in points {
        let c = p.coords();
        let _ = write!(s, "{:.2},{:.2} ", f.px(c[ax.0]), f.py(c[ax.1]));
    }
    s += "\"/>\n</svg>\n";
    Ok(s)
}

fn axis_extent(a: &GridAxis) -> (f64, f64, usize) {
    match *a {
        GridAxis::Interval { lo, hi, points } => {
            let h = 0.5 * (hi - lo) / (points - 1) as f64;
            (lo - h, hi + h, points)
        }
        GridAxis::Circle { bins } => (0.0, 1.0, bins),
    }
}

/// Heat map of the grid classification projected on coordinates `ax`; a
/// projected cell shows the strongest class over the hidden axes.
pub fn grid_svg(prov: &Provenance, grid: &GridClassification, ax: (usize, usize)) -> Result<String> {
    let spec = grid.spec();
    check_axes(spec.dim(), ax)?;
    let (x0, x1, nx) = axis_extent(&spec.axes()[ax.0]);
    let (y0, y1, ny) = axis_extent(&spec.axes()[ax.1]);
    let rank = |c: CellClass| match c {
        CellClass::In => 2u8,
        CellClass::Out => 1,
        CellClass::Unknown => 0,
    };
    let mut best = vec![0u8; nx * ny];
    for (idx, &c) in grid.classes().iter().enumerate() {
        let parts = spec.unflatten(idx);
        let k = parts[ax.0] * ny + parts[ax.1];
        best[k] = best[k].max(rank(c));
    }
    let f = Frame {
        x: (x0, x1),
        y: (y0, y1),
    };
    let (w, h) = (SIZE / nx as f64, SIZE / ny as f64);
    let mut s = svg_open(prov, "grid classification", &f, ax);
    for i in 0..nx {
        for j in 0..ny {
            let fill = match best[i * ny + j] {
                2 => "steelblue",
                1 => "lightgray",
                _ => continue,
            };
            let _ = writeln!(
                s,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{fill}\"/>",
                MARGIN + i as f64 * w,
                MARGIN + SIZE - (j + 1) as f64 * h,
                w,
                h
            );
        }
    }
    s += "</svg>\n";
    Ok(s)
}
