//! Small dense linear-algebra helpers shared by the algebraic modules.

use nalgebra::{DMatrix, DVector};

/// Relative threshold for numerical rank decisions.
pub const RANK_RTOL: f64 = 1e-10;

/// Orthonormal basis (as columns) of the null space of `a`.
///
/// Singular values below `RANK_RTOL * sigma_max` count as zero.
pub fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let smax = a.clone().svd(false, false).singular_values.iter().cloned().fold(0.0, f64::max);
    null_space_below(a, RANK_RTOL * smax)
}

/// Orthonormal basis of the right singular vectors of `a` with singular
/// value at most `tol`.
pub fn null_space_below(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    // pad to at least n rows so the SVD returns a full right basis
    let padded = if a.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= tol)
        .map(|(i, _)| canonical_sign(v_t.row(i).transpose()))
        .collect();
    from_columns(n, &cols)
}

/// Right singular vectors of the `k` smallest singular values of a square
/// matrix, with all singular values in decreasing order.
pub fn smallest_singular_vectors(a: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, Vec<f64>) {
    let n = a.ncols();
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigmas: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let cols: Vec<DVector<f64>> = order[order.len().saturating_sub(k)..]
        .iter()
        .map(|&i| canonical_sign(v_t.row(i).transpose()))
        .collect();
    (from_columns(n, &cols), sigmas)
}

/// Orthonormalize the given vectors with two-pass modified Gram-Schmidt,
/// dropping vectors whose residual norm falls below `RANK_RTOL` times the
/// largest input norm. Input order is preserved, so coordinate-aligned
/// inputs give coordinate-aligned outputs.
pub fn gram_schmidt(vectors: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    let scale = vectors.iter().map(|v| v.amax()).fold(0.0, f64::max);
    if scale == 0.0 {
        return DMatrix::zeros(dim, 0);
    }
    let tol = RANK_RTOL * scale.max(1.0);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        let norm = w.norm();
        if norm > tol {
            basis.push(w / norm);
        }
    }
    from_columns(dim, &basis)
}

/// Orthonormal basis of the column span of `m`.
pub fn column_span(m: &DMatrix<f64>) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = m.column_iter().map(|c| c.into_owned()).collect();
    gram_schmidt(&cols, m.nrows())
}

/// Orthonormal basis of the orthogonal complement of span(`sub`) inside
/// span(`outer`). Both arguments hold orthonormal columns.
pub fn complement_within(sub: &DMatrix<f64>, outer: &DMatrix<f64>) -> DMatrix<f64> {
    let n = outer.nrows();
    let cols: Vec<DVector<f64>> = outer
        .column_iter()
        .map(|c| {
            let mut w = c.into_owned();
            if sub.ncols() > 0 {
                let coeffs = sub.transpose() * &w;
                w -= sub * coeffs;
            }
            w
        })
        .collect();
    let mut merged: Vec<DVector<f64>> = sub.column_iter().map(|c| c.into_owned()).collect();
    let k = merged.len();
    merged.extend(cols);
    let all = gram_schmidt(&merged, n);
    all.columns(k, all.ncols() - k).into_owned()
}

/// Distance from `v` to span(`basis`) (orthonormal columns).
pub fn distance_to_span(v: &DVector<f64>, basis: &DMatrix<f64>) -> f64 {
    if basis.ncols() == 0 {
        return v.norm();
    }
    let proj = basis * (basis.transpose() * v);
    (v - proj).norm()
}

pub fn from_columns(dim: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    if cols.is_empty() {
        DMatrix::zeros(dim, 0)
    } else {
        DMatrix::from_columns(cols)
    }
}

/// Flip sign so the entry of largest magnitude is positive.
pub fn canonical_sign(mut v: DVector<f64>) -> DVector<f64> {
    let idx = v.iamax();
    if v[idx] < 0.0 {
        v.neg_mut();
    }
    v
}

/// Matrix exponential; diagonal inputs are exponentiated entrywise.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 {
        return m.clone();
    }
    let n = m.nrows();
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0));
    if diagonal {
        return DMatrix::from_fn(n, n, |i, j| if i == j { m[(i, i)].exp() } else { 0.0 });
    }
    m.clone().exp()
}

/// Largest absolute entry, zero for empty matrices.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
