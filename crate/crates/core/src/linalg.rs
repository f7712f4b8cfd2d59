//! Small dense linear-algebra helpers bridging `ndarray` and `nalgebra`.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

pub(crate) fn to_na(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Eigendecomposition of a symmetric matrix, eigenpairs sorted by
/// descending eigenvalue. Eigenvectors are the columns of the returned matrix.
pub(crate) fn symmetric_eigen(a: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    let eig = nalgebra::SymmetricEigen::new(to_na(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Largest eigenvalue of `aᵀa` by power iteration (deterministic start).
pub(crate) fn largest_gram_eigenvalue(a: ArrayView2<f64>, iters: usize) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    // Start vector with no special alignment to the coordinate axes.
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + 0.1 * ((i * 7919 % 101) as f64 / 101.0));
    v /= v.dot(&v).sqrt();
    let mut value = 0.0;
    for _ in 0..iters {
        let w = a.t().dot(&a.dot(&v));
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - value).abs() <= 1e-12 * next.abs() {
            value = next;
            break;
        }
        value = next;
    }
    // Rayleigh quotients approach from below; a small margin keeps 1/L safe.
    value * 1.000_001
}

/// Solve the symmetric positive-definite system `a x = b`.
pub(crate) fn spd_solve(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Option<Array1<f64>> {
    let chol = nalgebra::Cholesky::new(to_na(a))?;
    let rhs = nalgebra::DVector::from_iterator(b.len(), b.iter().copied());
    let x = chol.solve(&rhs);
    if x.iter().all(|v| v.is_finite()) {
        Some(Array1::from_iter(x.iter().copied()))
    } else {
        None
    }
}

/// Moore–Penrose pseudo-inverse.
pub(crate) fn pseudo_inverse(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let m = to_na(a);
    let svd = m.svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = max_sv * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON;
    let pinv = svd
        .pseudo_inverse(tol)
        .map_err(|e| Error::Numerical(format!("pseudo-inverse failed: {e}")))?;
    Ok(from_na(&pinv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eigen_sorted_descending() {
        let a = array![[2.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 1.0]];
        let (vals, vecs) = symmetric_eigen(a.view());
        assert_eq!(vals.to_vec(), vec![5.0, 2.0, 1.0]);
        assert!((vecs[[1, 0]].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_matches_eigen() {
        let a = array![[1.0, 2.0, 0.5], [0.0, 1.0, -1.0]];
        let gram = a.t().dot(&a);
        let (vals, _) = symmetric_eigen(gram.view());
        let l = largest_gram_eigenvalue(a.view(), 1000);
        assert!((l - vals[0]).abs() < 1e-5 * vals[0]);
        assert!(l >= vals[0]);
    }

    #[test]
    fn pinv_of_tall_matrix_is_left_inverse() {
        let a = array![[1.0, 0.0], [1.0, 1.0], [0.0, 2.0]];
        let p = pseudo_inverse(a.view()).unwrap();
        let id = p.dot(&a);
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id[[i, j]] - e).abs() < 1e-12);
            }
        }
    }
}
