//! PCA reduction with variance equalization, and its inverse.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg;

/// Smallest eigenvalue a retained component may carry.
pub const EIGEN_FLOOR: f64 = 1e-8;

/// A fitted PCA whitening transform.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `k × d`, orthonormal rows.
    pub components: Array2<f64>,
    /// Descending, each at least [`EIGEN_FLOOR`].
    pub eigenvalues: Array1<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Rebuild a model from stored parts, checking shapes.
    pub fn from_parts(mean: Array1<f64>, components: Array2<f64>, eigenvalues: Array1<f64>) -> Result<Self> {
        if components.ncols() != mean.len() {
            return Err(Error::dims(mean.len(), components.ncols(), "PCA component width"));
        }
        if components.nrows() != eigenvalues.len() {
            return Err(Error::dims(eigenvalues.len(), components.nrows(), "PCA component count"));
        }
        if eigenvalues.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidInput("PCA eigenvalues must be positive".into()));
        }
        Ok(PcaModel {
            mean,
            components,
            eigenvalues,
        })
    }

    /// `y = Λ^{-1/2} C (x − mean)`.
    pub fn whiten(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dims(self.input_dim(), x.len(), "whiten input"));
        }
        let centered = &x - &self.mean;
        let mut y = self.components.dot(&centered);
        y.zip_mut_with(&self.eigenvalues, |v, &l| *v /= l.sqrt());
        Ok(y)
    }

    /// Row-wise [`PcaModel::whiten`] of an `n × d` matrix.
    pub fn whiten_rows(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::dims(self.input_dim(), x.ncols(), "whiten input"));
        }
        let centered = &x - &self.mean.view().insert_axis(Axis(0));
        let mut y = centered.dot(&self.components.t());
        let scale = self.eigenvalues.mapv(|l| 1.0 / l.sqrt());
        y *= &scale.view().insert_axis(Axis(0));
        Ok(y)
    }

    /// `x̂ = Cᵀ Λ^{1/2} y + mean`.
    pub fn unwhiten(&self, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        if y.len() != self.k() {
            return Err(Error::dims(self.k(), y.len(), "unwhiten input"));
        }
        let scaled = &y * &self.eigenvalues.mapv(f64::sqrt);
        Ok(self.components.t().dot(&scaled) + &self.mean)
    }

    /// Linear part of [`PcaModel::unwhiten`], without the mean.
    pub fn unwhiten_linear(&self, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        if y.len() != self.k() {
            return Err(Error::dims(self.k(), y.len(), "unwhiten input"));
        }
        let scaled = &y * &self.eigenvalues.mapv(f64::sqrt);
        Ok(self.components.t().dot(&scaled))
    }
}

/// Fit PCA on the rows of `data` (`n × d`) and keep the top `k` components.
///
/// The sample covariance uses the `1/(n−1)` estimator. When `n − 1 < d` the
/// eigenproblem is solved on the `n × n` Gram matrix instead, which has the
/// same nonzero spectrum.
pub fn fit_pca(data: ArrayView2<f64>, k: usize) -> Result<PcaModel> {
    let (n, d) = data.dim();
    if k == 0 {
        return Err(Error::InvalidInput("PCA needs k ≥ 1".into()));
    }
    if n <= k {
        return Err(Error::InvalidInput(format!("PCA needs more samples ({n}) than components ({k})")));
    }
    if d < k {
        return Err(Error::InvalidInput(format!("PCA cannot keep {k} components of {d} dimensions")));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("PCA input contains non-finite values".into()));
    }
    let mean = data.mean_axis(Axis(0)).expect("n > 0");
    let centered = &data - &mean.view().insert_axis(Axis(0));
    let denom = (n - 1) as f64;

    let (values, vectors) = if d <= n - 1 {
        let cov = centered.t().dot(&centered) / denom;
        let (vals, vecs) = linalg::symmetric_eigen(cov.view());
        (vals, vecs.t().to_owned())
    } else {
        let gram = centered.dot(&centered.t()) / denom;
        let (vals, u) = linalg::symmetric_eigen(gram.view());
        // v_i = Xᵀ u_i / √((n−1) λ_i); only positive eigenvalues map to directions.
        let positive = vals.iter().filter(|&&v| v > 0.0).count();
        let mut rows = Array2::zeros((positive, d));
        for i in 0..positive {
            let v = centered.t().dot(&u.column(i)) / (denom * vals[i]).sqrt();
            rows.row_mut(i).assign(&v);
        }
        (vals.slice(ndarray::s![..positive]).to_owned(), rows)
    };

    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let tol = top * 1e-10;
    let rank = values.iter().filter(|&&v| v > tol && v > 0.0).count();
    if k > rank {
        return Err(Error::Data(format!(
            "requested {k} components but the data has effective rank {rank}"
        )));
    }

    let mut components = vectors.slice(ndarray::s![..k, ..]).to_owned();
    for mut row in components.rows_mut() {
        let mut best = 0;
        for (j, v) in row.iter().enumerate() {
            if v.abs() > row[best].abs() {
                best = j;
            }
        }
        if row[best] < 0.0 {
            row.mapv_inplace(|v| -v);
        }
    }
    let eigenvalues = values.slice(ndarray::s![..k]).mapv(|v| v.max(EIGEN_FLOOR));
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut r = crate::rng::root(seed);
        Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut r))
    }

    fn correlated(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let z = gaussian(n, d, seed);
        let mix = gaussian(d, d, seed + 1);
        z.dot(&mix) + 0.5
    }

    #[test]
    fn components_orthonormal_and_whitened_cov_is_identity() {
        let x = correlated(400, 12, 1);
        let m = fit_pca(x.view(), 8).unwrap();
        let gram = m.components.dot(&m.components.t());
        for i in 0..8 {
            for j in 0..8 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - e).abs() < 1e-8);
            }
        }
        assert!(m.eigenvalues.windows(2).into_iter().all(|w| w[0] >= w[1]));
        let y = m.whiten_rows(x.view()).unwrap();
        let cov = y.t().dot(&y) / (y.nrows() - 1) as f64;
        for i in 0..8 {
            for j in 0..8 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((cov[[i, j]] - e).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn isotropic_data_has_flat_spectrum() {
        let x = gaussian(20000, 5, 2);
        let m = fit_pca(x.view(), 5).unwrap();
        for &l in &m.eigenvalues {
            assert!((l - 1.0).abs() < 0.06, "{l}");
        }
    }

    #[test]
    fn mean_maps_to_zero_and_back() {
        let x = correlated(100, 6, 3);
        let m = fit_pca(x.view(), 4).unwrap();
        let y = m.whiten(m.mean.view()).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-12));
        let back = m.unwhiten(Array1::zeros(4).view()).unwrap();
        assert_eq!(back, m.mean);
    }

    #[test]
    fn k_space_roundtrip() {
        let x = correlated(100, 6, 4);
        let m = fit_pca(x.view(), 4).unwrap();
        let y = Array1::from_vec(vec![0.3, -1.2, 2.0, 0.1]);
        let back = m.whiten(m.unwhiten(y.view()).unwrap().view()).unwrap();
        for (a, b) in y.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn gram_route_matches_covariance_route() {
        // 30 samples in 40 dimensions forces the Gram route; compare with the
        // covariance eigendecomposition computed directly.
        let x = correlated(30, 40, 5);
        let m = fit_pca(x.view(), 10).unwrap();
        let mean = x.mean_axis(Axis(0)).unwrap();
        let c = &x - &mean.view().insert_axis(Axis(0));
        let cov = c.t().dot(&c) / 29.0;
        let (vals, vecs) = linalg::symmetric_eigen(cov.view());
        for i in 0..10 {
            assert!((m.eigenvalues[i] - vals[i]).abs() < 1e-8 * vals[0]);
            let dot: f64 = m.components.row(i).dot(&vecs.column(i));
            assert!((dot.abs() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rank_and_shape_errors() {
        let x = correlated(10, 3, 6);
        assert!(fit_pca(x.view(), 4).is_err());
        let low = Array2::from_shape_fn((50, 4), |(i, j)| (i as f64) * (j as f64 + 1.0));
        let err = fit_pca(low.view(), 2).unwrap_err();
        assert!(err.to_string().contains("effective rank 1"));
        let m = fit_pca(x.view(), 2).unwrap();
        assert!(m.whiten(Array1::zeros(2).view()).is_err());
        assert!(m.unwhiten(Array1::zeros(3).view()).is_err());
    }

    #[test]
    fn discarded_energy_matches_full_decomposition() {
        // Oracle: with all components kept, the residual of the rank-k
        // reconstruction equals the energy along the dropped eigenvectors.
        let x = correlated(50, 8, 7);
        let full = fit_pca(x.view(), 8).unwrap();
        let part = fit_pca(x.view(), 5).unwrap();
        for row in x.rows().into_iter().take(10) {
            let rec = part.unwhiten(part.whiten(row).unwrap().view()).unwrap();
            let err: f64 = (&row - &rec).mapv(|v| v * v).sum();
            let centered = &row - &full.mean;
            let dropped: f64 = (5..8).map(|i| full.components.row(i).dot(&centered).powi(2)).sum();
            assert!((err - dropped).abs() < 1e-9 * (1.0 + dropped));
        }
    }
}
