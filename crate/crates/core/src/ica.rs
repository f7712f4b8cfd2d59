//! Overcomplete ICA fitted by score matching, with rectified responses.
//!
//! The energy model is `log p(x) = Σᵢ G(wᵢᵀx) + const` with
//! `G(u) = −log cosh(u)`, for which the score-matching objective is
//!
//! ```text
//! J(W) = meanₙ [ −Σᵢ ‖wᵢ‖² (1 − tanh²(yᵢ)) + ½ ‖Σᵢ wᵢ tanh(yᵢ)‖² ],  y = W xₙ
//! ```
//!
//! It needs no partition function, so the number of filters may exceed
//! the input dimension.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sc::TrainLog;
use crate::{linalg, rng};

/// Filter matrix `W` (`m × k`, rows are filters) and its mixing matrix
/// `A = W⁺` (`k × m`).
#[derive(Debug, Clone, PartialEq)]
pub struct IcaFilters {
    w: Array2<f64>,
    mixing: Array2<f64>,
}

impl IcaFilters {
    /// Wrap filters, computing the pseudo-inverse mixing matrix.
    pub fn new(w: Array2<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("ICA filters contain non-finite values".into()));
        }
        let mixing = linalg::pseudo_inverse(w.view())?;
        Ok(IcaFilters { w, mixing })
    }

    /// Wrap filters with a previously computed mixing matrix.
    pub fn from_parts(w: Array2<f64>, mixing: Array2<f64>) -> Result<Self> {
        if mixing.dim() != (w.ncols(), w.nrows()) {
            return Err(Error::InvalidInput(format!(
                "mixing shape {:?} does not transpose filter shape {:?}",
                mixing.dim(),
                w.dim()
            )));
        }
        Ok(IcaFilters { w, mixing })
    }

    pub fn w(&self) -> ArrayView2<'_, f64> {
        self.w.view()
    }

    pub fn mixing(&self) -> ArrayView2<'_, f64> {
        self.mixing.view()
    }

    pub fn units(&self) -> usize {
        self.w.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    /// Rectified responses `max(Wx, 0)`.
    pub fn respond(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dims(self.input_dim(), x.len(), "ICA input"));
        }
        Ok(self.w.dot(&x).mapv(|v| v.max(0.0)))
    }

    /// `x̂ = A r`.
    pub fn backward(&self, r: ArrayView1<f64>) -> Result<Array1<f64>> {
        if r.len() != self.units() {
            return Err(Error::dims(self.units(), r.len(), "ICA response"));
        }
        Ok(self.mixing.dot(&r))
    }
}

/// Score-matching objective on the rows of `data` (`n × k`).
pub fn sm_objective(w: ArrayView2<f64>, data: ArrayView2<f64>) -> Result<f64> {
    Ok(objective_and_gradient(w, data.t(), false)?.0)
}

/// Analytic gradient of [`sm_objective`] with respect to `W`.
pub fn sm_gradient(w: ArrayView2<f64>, data: ArrayView2<f64>) -> Result<Array2<f64>> {
    Ok(objective_and_gradient(w, data.t(), true)?.1.expect("gradient requested"))
}

/// Objective and (optionally) gradient for samples in the columns of `x`.
///
/// Per sample, with `g = tanh(y)`, `h = 1 − g²` and `u = Wᵀg`:
/// `∂J/∂wᵢ = −2hᵢwᵢ + gᵢu + (2‖wᵢ‖²gᵢhᵢ + (wᵢᵀu)hᵢ) x`.
fn objective_and_gradient(w: ArrayView2<f64>, x: ArrayView2<f64>, want_grad: bool) -> Result<(f64, Option<Array2<f64>>)> {
    let (m, k) = w.dim();
    if x.nrows() != k {
        return Err(Error::dims(k, x.nrows(), "ICA data dimension"));
    }
    let n = x.ncols();
    if n == 0 {
        return Err(Error::InvalidInput("score matching needs at least one sample".into()));
    }
    let y = w.dot(&x);
    let g = y.mapv(f64::tanh);
    let h = g.mapv(|t| 1.0 - t * t);
    let sq_norms = w.map_axis(Axis(1), |row| row.dot(&row));
    let u = w.t().dot(&g);
    let first: f64 = Zip::from(h.rows()).and(&sq_norms).fold(0.0, |acc, row, &s| acc - s * row.sum());
    let second = 0.5 * u.iter().map(|v| v * v).sum::<f64>();
    let value = (first + second) / n as f64;
    if !value.is_finite() {
        return Err(Error::Numerical("score-matching objective is not finite".into()));
    }
    if !want_grad {
        return Ok((value, None));
    }
    let wu = w.dot(&u);
    let mut coef = Array2::<f64>::zeros((m, n));
    Zip::from(coef.rows_mut())
        .and(g.rows())
        .and(h.rows())
        .and(wu.rows())
        .and(&sq_norms)
        .for_each(|mut c, gr, hr, wur, &s| {
            Zip::from(&mut c).and(&gr).and(&hr).and(&wur).for_each(|c, &gi, &hi, &wi| {
                *c = 2.0 * s * gi * hi + wi * hi;
            });
        });
    let h_sum = h.sum_axis(Axis(1));
    let mut grad = &w * &h_sum.mapv(|v| -2.0 * v).insert_axis(Axis(1));
    grad += &g.dot(&u.t());
    grad += &coef.dot(&x.t());
    grad /= n as f64;
    Ok((value, Some(grad)))
}

/// Score-matching ICA training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaTrainConfig {
    pub m: usize,
    pub epochs: usize,
    pub batch: usize,
    pub step: f64,
    pub momentum: f64,
    pub step_decay: f64,
    pub seed: u64,
}

impl Default for IcaTrainConfig {
    fn default() -> Self {
        IcaTrainConfig {
            m: 800,
            epochs: 16,
            batch: 256,
            step: 0.01,
            momentum: 0.9,
            step_decay: 0.95,
            seed: 0,
        }
    }
}

/// Minimize the score-matching objective by minibatch gradient descent with
/// momentum. Filters start as Gaussian rows of unit norm.
pub fn fit_ica(data: ArrayView2<f64>, cfg: &IcaTrainConfig) -> Result<(IcaFilters, TrainLog)> {
    let (n, k) = data.dim();
    if cfg.m < k {
        return Err(Error::InvalidInput(format!("ICA needs at least as many filters as inputs: m = {}, k = {k}", cfg.m)));
    }
    if cfg.batch == 0 || n < cfg.batch {
        return Err(Error::InvalidInput(format!("need at least one full batch: n = {n}, batch = {}", cfg.batch)));
    }
    if cfg.epochs == 0 {
        return Err(Error::InvalidInput("epochs must be ≥ 1".into()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("training data contains non-finite values".into()));
    }
    let mut r = rng::root(rng::derive(cfg.seed, "ica-init"));
    let mut w: Array2<f64> = Array2::from_shape_fn((cfg.m, k), |_| StandardNormal.sample(&mut r));
    for mut row in w.rows_mut() {
        let norm = row.dot(&row).sqrt();
        row.mapv_inplace(|v| v / norm);
    }
    let mut velocity = Array2::<f64>::zeros((cfg.m, k));
    let mut step = cfg.step;
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let mut er = rng::root(rng::derive(cfg.seed, &format!("ica-epoch-{epoch}")));
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut er);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch) {
            let x = data.select(Axis(0), chunk).reversed_axes();
            let (value, grad) = objective_and_gradient(w.view(), x.view(), true).map_err(|e| {
                Error::Numerical(format!("{e} in epoch {epoch}; last stable epoch {}", epoch as isize - 1))
            })?;
            let grad = grad.expect("gradient requested");
            velocity *= cfg.momentum;
            velocity.scaled_add(-step, &grad);
            w += &velocity;
            total += value * chunk.len() as f64;
            batches += chunk.len();
        }
        let mean = total / batches as f64;
        if !mean.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "ICA diverged in epoch {epoch}; last stable epoch {}",
                epoch as isize - 1
            )));
        }
        log::info!("ica epoch {epoch}: mean objective {mean:.6}");
        log.epoch_objective.push(mean);
        step *= cfg.step_decay;
    }
    Ok((IcaFilters::new(w)?, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng as _;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut r = rng::root(seed);
        Array2::from_shape_fn((rows, cols), |_| r.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn zero_filters_give_zero_objective() {
        let x = random_matrix(20, 3, 1);
        assert_eq!(sm_objective(Array2::zeros((5, 3)).view(), x.view()).unwrap(), 0.0);
    }

    #[test]
    fn one_dimensional_specialization() {
        let x = array![[0.3], [-1.2], [2.0], [0.05]];
        let w: f64 = 0.7;
        let expected: f64 = x
            .iter()
            .map(|&xi| {
                let t = (w * xi).tanh();
                -w * w * (1.0 - t * t) + 0.5 * w * w * t * t
            })
            .sum::<f64>()
            / 4.0;
        let got = sm_objective(array![[w]].view(), x.view()).unwrap();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let x = random_matrix(50, 4, 2);
        for point in 0..10u64 {
            let w = random_matrix(7, 4, 100 + point) * 0.7;
            let grad = sm_gradient(w.view(), x.view()).unwrap();
            let h = 1e-5;
            let mut worst = 0.0f64;
            for i in 0..7 {
                for j in 0..4 {
                    let mut wp = w.clone();
                    wp[[i, j]] += h;
                    let mut wm = w.clone();
                    wm[[i, j]] -= h;
                    let fd = (sm_objective(wp.view(), x.view()).unwrap() - sm_objective(wm.view(), x.view()).unwrap()) / (2.0 * h);
                    let rel = (fd - grad[[i, j]]).abs() / fd.abs().max(grad[[i, j]].abs()).max(1e-3);
                    worst = worst.max(rel);
                }
            }
            assert!(worst <= 1e-4, "point {point}: relative error {worst}");
        }
    }

    #[test]
    fn responses_are_rectified_and_sign_complementary() {
        let f = IcaFilters::new(random_matrix(9, 3, 3)).unwrap();
        let x = array![0.5, -1.0, 2.0];
        let pos = f.respond(x.view()).unwrap();
        let neg = f.respond((-&x).view()).unwrap();
        assert!(pos.iter().all(|&v| v >= 0.0));
        let lin = f.w().dot(&x);
        for i in 0..9 {
            assert!((pos[i] - neg[i] - lin[i]).abs() < 1e-12);
        }
        assert!(f.respond(Array1::zeros(3).view()).unwrap().iter().all(|&v| v == 0.0));
        assert!(f.backward(Array1::zeros(9).view()).unwrap().iter().all(|&v| v == 0.0));
        assert!(f.respond(Array1::zeros(2).view()).is_err());
    }

    #[test]
    fn pseudo_inverse_undoes_unrectified_responses() {
        let x = array![0.5, -1.0, 2.0];
        // Complete, orthonormal.
        let theta = 0.3f64;
        let q = array![[theta.cos(), -theta.sin(), 0.0], [theta.sin(), theta.cos(), 0.0], [0.0, 0.0, 1.0]];
        let f = IcaFilters::new(q.clone()).unwrap();
        let back = f.backward(q.dot(&x).view()).unwrap();
        for (a, b) in back.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        // Overcomplete, full column rank.
        let f = IcaFilters::new(random_matrix(24, 3, 4)).unwrap();
        let back = f.backward(f.w().dot(&x).view()).unwrap();
        for (a, b) in back.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn recovers_orthogonally_mixed_laplacian_sources() {
        // Oracle: sources are known, so the unmixing rows are Qᵀ.
        let n = 20_000;
        let mut r = rng::root(5);
        let laplace = |r: &mut rng::Rng| {
            let u: f64 = r.random_range(-0.5..0.5);
            // Unit-variance Laplacian: scale 1/√2.
            -u.signum() * (1.0 - 2.0 * u.abs()).ln() / 2f64.sqrt()
        };
        let s = Array2::from_shape_fn((n, 2), |_| laplace(&mut r));
        let theta = 0.6f64;
        let q = array![[theta.cos(), -theta.sin()], [theta.sin(), theta.cos()]];
        let x = s.dot(&q.t());
        let cfg = IcaTrainConfig {
            m: 2,
            epochs: 20,
            batch: 200,
            step: 0.05,
            seed: 3,
            ..Default::default()
        };
        let (f, log) = fit_ica(x.view(), &cfg).unwrap();
        assert!(log.epoch_objective.last().unwrap() < &log.epoch_objective[0]);
        let unmix = q.t();
        for row in f.w().rows() {
            let nr = row.dot(&row).sqrt();
            let best = unmix
                .rows()
                .into_iter()
                .map(|t| (row.dot(&t) / nr).abs())
                .fold(0.0, f64::max);
            assert!(best > 0.99, "alignment {best}");
        }
        // Both true directions are found.
        let a0 = (f.w().row(0).dot(&unmix.row(0)) / f.w().row(0).dot(&f.w().row(0)).sqrt()).abs();
        let a1 = (f.w().row(1).dot(&unmix.row(0)) / f.w().row(1).dot(&f.w().row(1)).sqrt()).abs();
        assert!((a0 > 0.99) != (a1 > 0.99));
    }

    #[test]
    fn training_is_deterministic() {
        let x = random_matrix(200, 3, 6);
        let cfg = IcaTrainConfig { m: 6, epochs: 2, batch: 50, seed: 1, ..Default::default() };
        let (a, la) = fit_ica(x.view(), &cfg).unwrap();
        let (b, lb) = fit_ica(x.view(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }
}
