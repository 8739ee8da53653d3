//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// `max |a - b|` entrywise.
pub fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// `trace(a * b)` without forming the product.
pub fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Diagonal matrix from a vector of entries.
pub fn diag(entries: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(entries))
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending, columns
/// of the returned matrix the matching unit eigenvectors.
pub fn symmetric_eigen_sorted(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(m.nrows(), order.len());
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Eigenvalues of a real tridiagonal matrix given by its sub-diagonal `lower`,
/// diagonal `diagonal` and super-diagonal `upper`. When every off-diagonal
/// product is positive the matrix is similar to a symmetric one and the
/// symmetric solver is used; otherwise the general Schur solver is used and
/// only real parts are returned. Result is sorted ascending.
pub fn tridiagonal_eigenvalues(lower: &[f64], diagonal: &[f64], upper: &[f64]) -> Vec<f64> {
    let n = diagonal.len();
    assert_eq!(lower.len() + 1, n.max(1));
    assert_eq!(upper.len() + 1, n.max(1));
    let symmetrizable = lower.iter().zip(upper).all(|(c, b)| c * b > 0.0);
    let mut values: Vec<f64> = if symmetrizable {
        let mut s = DMatrix::zeros(n, n);
        for i in 0..n {
            s[(i, i)] = diagonal[i];
        }
        for i in 0..n.saturating_sub(1) {
            let off = (lower[i] * upper[i]).sqrt();
            s[(i, i + 1)] = off;
            s[(i + 1, i)] = off;
        }
        s.symmetric_eigenvalues().iter().copied().collect()
    } else {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = diagonal[i];
        }
        for i in 0..n.saturating_sub(1) {
            m[(i + 1, i)] = lower[i];
            m[(i, i + 1)] = upper[i];
        }
        m.complex_eigenvalues().iter().map(|z| z.re).collect()
    };
    values.sort_by(|a, b| a.total_cmp(b));
    values
}

/// Eigenvalues of a general real square matrix (real parts), ascending.
pub fn general_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.re).collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Orthonormal basis for the column span of `m`. Directions whose singular
/// value falls below `rel_tol * sigma_max` are dropped.
pub fn orthonormal_column_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    orthonormal_column_basis_scaled(m, None, rel_tol)
}

/// As [`orthonormal_column_basis`], but directions are dropped below
/// `rel_tol * scale` when a scale is given.
pub fn orthonormal_column_basis_scaled(m: &DMatrix<f64>, scale: Option<f64>, rel_tol: f64) -> DMatrix<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    // Thin SVD directly; a Gram matrix would square the noise floor.
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let top = svd.singular_values.max();
    if top <= 0.0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let cutoff = rel_tol * scale.unwrap_or(top);
    let mut keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > cutoff)
        .collect();
    keep.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut basis = DMatrix::from_fn(m.nrows(), keep.len(), |y, k| u[(y, keep[k])]);
    reorthonormalize(&mut basis);
    basis
}

/// Singular values of `m`, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank of `m` relative to `scale`.
pub fn rank_relative(m: &DMatrix<f64>, scale: f64, rel_tol: f64) -> usize {
    singular_values(m)
        .iter()
        .filter(|&&s| s > rel_tol * scale)
        .count()
}

/// Modified Gram-Schmidt in place; columns are assumed independent.
pub fn reorthonormalize(basis: &mut DMatrix<f64>) {
    for k in 0..basis.ncols() {
        for j in 0..k {
            let proj = basis.column(j).dot(&basis.column(k));
            let cj = basis.column(j).clone_owned();
            let mut ck = basis.column_mut(k);
            ck.axpy(-proj, &cj, 1.0);
        }
        let norm = basis.column(k).norm();
        if norm > 0.0 {
            basis.column_mut(k).scale_mut(1.0 / norm);
        }
    }
}

/// Flip the sign of `v` so its first entry with magnitude above `eps` is positive.
pub fn canonical_sign(v: &mut DVector<f64>, eps: f64) {
    if let Some(x) = v.iter().find(|x| x.abs() > eps) {
        if *x < 0.0 {
            v.neg_mut();
        }
    }
}

/// Rows of `m` as nested vectors, for reports.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Serializes a matrix as a list of rows.
pub fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    use serde::Serialize;
    to_rows(m).serialize(s)
}
