//! Shared numerical helpers: sorted symmetric eigendecompositions with a
//! deterministic sign rule, and least-squares solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
pub struct SortedEigen {
    pub values: DVector<f64>,
    /// Columns are eigenvectors, order matching `values`.
    pub vectors: DMatrix<f64>,
}

/// Flip a vector so its entry of largest absolute value is positive.
/// Ties broken by lowest index.
pub fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0usize;
    let mut best_abs = f64::NEG_INFINITY;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if v[best] < 0.0 {
        *v *= -1.0;
    }
}

/// Symmetric eigendecomposition with descending eigenvalues and the
/// deterministic sign convention applied to every eigenvector.
pub fn sym_eig_sorted(m: &DMatrix<f64>) -> SortedEigen {
    let sym = SymmetricEigen::new(m.clone());
    let n = sym.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    // descending eigenvalue, ties by original index
    order.sort_by(|&a, &b| {
        sym.eigenvalues[b]
            .partial_cmp(&sym.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(m.nrows(), n);
    for (j, &idx) in order.iter().enumerate() {
        values[j] = sym.eigenvalues[idx];
        let mut col = sym.eigenvectors.column(idx).clone_owned();
        fix_sign(&mut col);
        vectors.set_column(j, &col);
    }
    SortedEigen { values, vectors }
}

/// Solve the least-squares problem min ||y - X b|| column-by-column for a
/// matrix of responses. Uses QR with an SVD fallback for near-singular
/// cross-products.
pub fn least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension(format!(
            "regressor rows {} != response rows {}",
            x.nrows(),
            y.nrows()
        )));
    }
    // SVD of the design itself: squaring into X'X can hide exact
    // collinearity behind rounding noise and let a numerically explosive
    // solution through.
    let svd = nalgebra::SVD::new(x.clone(), true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10;
    if svd.singular_values.iter().any(|&s| s <= tol) {
        return Err(Error::Rank(
            "regressor matrix is rank deficient (collinear columns)".into(),
        ));
    }
    svd.solve(y, tol).map_err(|e| Error::Rank(e.to_string()))
}

/// Solve A b = y for a symmetric positive semi-definite A, tolerating mild
/// rank deficiency via SVD truncation.
pub fn solve_spd(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(y));
    }
    let svd = nalgebra::SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.max();
    svd.solve(&DMatrix::from_column_slice(y.len(), 1, y.as_slice()), smax * 1e-12)
        .map(|m| DVector::from_column_slice(m.as_slice()))
        .map_err(|e| Error::Rank(e.to_string()))
}

/// Column means of a matrix.
pub fn col_means(m: &DMatrix<f64>) -> DVector<f64> {
    let t = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / t))
}

/// Unbiased (T-1) column standard deviations.
pub fn col_sds(m: &DMatrix<f64>) -> DVector<f64> {
    let t = m.nrows() as f64;
    let means = col_means(m);
    DVector::from_iterator(
        m.ncols(),
        m.column_iter().enumerate().map(|(j, c)| {
            let ss: f64 = c.iter().map(|x| (x - means[j]).powi(2)).sum();
            (ss / (t - 1.0)).sqrt()
        }),
    )
}

/// Pearson correlation of two equal-length slices.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut caa = 0.0;
    let mut cbb = 0.0;
    let mut cab = 0.0;
    for i in 0..a.len() {
        let da = a[i] - ma;
        let db = b[i] - mb;
        caa += da * da;
        cbb += db * db;
        cab += da * db;
    }
    cab / (caa.sqrt() * cbb.sqrt())
}

/// Canonical correlations between the column spaces of two T x k matrices.
pub fn canonical_correlations(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    // orthonormalize both via thin QR, then take singular values of Qa' Qb
    let qa = orthonormal_basis(a);
    let qb = orthonormal_basis(b);
    let m = qa.transpose() * qb;
    let svd = nalgebra::SVD::new(m, false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().map(|&x| x.min(1.0)).collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

fn orthonormal_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.clone().qr();
    let q = qr.q();
    let r = qr.r();
    // drop columns with negligible diagonal in R (rank deficiency)
    let tol = r.diagonal().amax() * 1e-12;
    let keep: Vec<usize> = (0..r.nrows().min(r.ncols()))
        .filter(|&i| r[(i, i)].abs() > tol)
        .collect();
    let mut out = DMatrix::zeros(q.nrows(), keep.len());
    for (j, &i) in keep.iter().enumerate() {
        out.set_column(j, &q.column(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn eig_sorted_descending_and_signed() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        let e = sym_eig_sorted(&m);
        assert_abs_diff_eq!(e.values[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.values[1], 1.0, epsilon = 1e-12);
        // largest-abs entry of each eigenvector is positive
        for j in 0..2 {
            let col = e.vectors.column(j);
            let mx = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(mx > 0.0);
        }
    }

    #[test]
    fn least_squares_recovers_line() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DMatrix::from_column_slice(4, 1, &[1.0, 3.0, 5.0, 7.0]);
        let b = least_squares(&x, &y).unwrap();
        assert_abs_diff_eq!(b[(0, 0)], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(b[(1, 0)], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn canonical_correlations_identical_spaces() {
        let a = DMatrix::from_fn(50, 2, |i, j| ((i * 7 + j * 13) % 11) as f64 - 5.0);
        let rot = DMatrix::from_row_slice(2, 2, &[0.6, -0.8, 0.8, 0.6]);
        let b = &a * rot;
        let cc = canonical_correlations(&a, &b);
        for c in cc {
            assert_abs_diff_eq!(c, 1.0, epsilon = 1e-8);
        }
    }
}
