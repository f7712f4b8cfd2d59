//! Non-negative sparse coding.
//!
//! Codes minimize `f(a) = ‖x − Φa‖² + λ‖a‖₁` subject to `a ≥ 0`. The
//! objective is deliberately left unhalved, so for an orthonormal
//! dictionary the effective threshold is `λ/2`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{linalg, rng};

/// Generative basis `Φ` (`k × m`, unit-norm columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    phi: Array2<f64>,
    lambda_default: f64,
    lipschitz: f64,
}

impl Dictionary {
    /// Wrap a basis matrix. Columns must already have unit norm.
    pub fn new(phi: Array2<f64>, lambda_default: f64) -> Result<Self> {
        if !(lambda_default >= 0.0) {
            return Err(Error::InvalidInput(format!("lambda must be ≥ 0, got {lambda_default}")));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("dictionary contains non-finite values".into()));
        }
        for (j, col) in phi.columns().into_iter().enumerate() {
            let n = col.dot(&col).sqrt();
            if (n - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidInput(format!("dictionary column {j} has norm {n}")));
            }
        }
        let lipschitz = 2.0 * linalg::largest_gram_eigenvalue(phi.view(), 500);
        Ok(Dictionary {
            phi,
            lambda_default,
            lipschitz,
        })
    }

    /// Normalize each column of `phi` to unit length before wrapping it.
    pub fn from_unnormalized(mut phi: Array2<f64>, lambda_default: f64) -> Result<Self> {
        normalize_columns(&mut phi);
        Dictionary::new(phi, lambda_default)
    }

    pub fn phi(&self) -> ArrayView2<'_, f64> {
        self.phi.view()
    }

    pub fn input_dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn atoms(&self) -> usize {
        self.phi.ncols()
    }

    pub fn lambda_default(&self) -> f64 {
        self.lambda_default
    }

    /// Lipschitz constant of the gradient of the quadratic term, `2‖Φ‖²`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `x̂ = Φa`.
    pub fn reconstruct(&self, a: ArrayView1<f64>) -> Result<Array1<f64>> {
        if a.len() != self.atoms() {
            return Err(Error::dims(self.atoms(), a.len(), "code length"));
        }
        Ok(self.phi.dot(&a))
    }

    pub fn objective(&self, x: ArrayView1<f64>, a: ArrayView1<f64>, lambda: f64) -> f64 {
        let r = &x - &self.phi.dot(&a);
        r.dot(&r) + lambda * a.sum()
    }
}

fn normalize_columns(phi: &mut Array2<f64>) {
    for mut col in phi.columns_mut() {
        let n = col.dot(&col).sqrt();
        if n > 0.0 {
            col.mapv_inplace(|v| v / n);
        }
    }
}

/// Solver settings for a single inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferConfig {
    /// Stop when the relative objective change falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// KKT residual required to call a solution converged.
    pub kkt_tol: f64,
    /// Finish with coordinate sweeps and an exact solve on the active set.
    pub polish: bool,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            tol: 1e-8,
            max_iter: 1000,
            kkt_tol: 1e-6,
            polish: true,
        }
    }
}

/// A non-negative code with its optimality certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub a: Array1<f64>,
    /// Largest KKT violation at `a`.
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest violation of the optimality conditions at `a`:
/// `|g_i + λ|` where `a_i > 0`, and `max(0, −(g_i + λ))` where `a_i = 0`,
/// with `g = −2Φᵀ(x − Φa)`.
pub fn kkt_residual(phi: ArrayView2<f64>, x: ArrayView1<f64>, a: ArrayView1<f64>, lambda: f64) -> f64 {
    let r = &x - &phi.dot(&a);
    let g = phi.t().dot(&r) * -2.0;
    Zip::from(&g).and(&a).fold(0.0f64, |worst, &gi, &ai| {
        let v = if ai > 0.0 { (gi + lambda).abs() } else { (-(gi + lambda)).max(0.0) };
        worst.max(v)
    })
}

/// Monotone accelerated proximal gradient from `a0`; returns `(a, iterations)`.
fn mfista(dict: &Dictionary, x: ArrayView1<f64>, lambda: f64, a0: Array1<f64>, tol: f64, max_iter: usize) -> (Array1<f64>, usize) {
    let phi = dict.phi.view();
    let l = dict.lipschitz.max(f64::MIN_POSITIVE);
    let shrink = lambda / l;
    let mut a = a0;
    let mut y = a.clone();
    let mut t = 1.0f64;
    let mut f = dict.objective(x, a.view(), lambda);
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let resid = &phi.dot(&y) - &x;
        let grad = phi.t().dot(&resid) * 2.0;
        let z = Zip::from(&y).and(&grad).map_collect(|&yi, &gi| (yi - gi / l - shrink).max(0.0));
        let fz = dict.objective(x, z.view(), lambda);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let accepted = fz <= f;
        let a_next = if accepted { z.clone() } else { a.clone() };
        y = &a_next + &((&z - &a_next) * (t / t_next)) + &((&a_next - &a) * ((t - 1.0) / t_next));
        let f_next = if accepted { fz } else { f };
        let change = (f - f_next).abs();
        a = a_next;
        t = t_next;
        let prev = f;
        f = f_next;
        if accepted && change <= tol * prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    (a, it)
}

/// Exact coordinate minimization sweeps (unit-norm columns).
fn coordinate_sweeps(phi: ArrayView2<f64>, x: ArrayView1<f64>, lambda: f64, a: &mut Array1<f64>, sweeps: usize) {
    let mut r = &x - &phi.dot(a);
    for _ in 0..sweeps {
        for i in 0..a.len() {
            let col = phi.column(i);
            let g = -2.0 * col.dot(&r);
            let next = (a[i] - (g + lambda) / 2.0).max(0.0);
            let delta = next - a[i];
            if delta != 0.0 {
                r.scaled_add(-delta, &col);
                a[i] = next;
            }
        }
    }
}

/// Unconstrained minimizer restricted to `support`:
/// `Φ_Sᵀ Φ_S a_S = Φ_Sᵀ x − λ/2`. `None` if the Gram matrix is singular.
fn solve_on_support(phi: ArrayView2<f64>, x: ArrayView1<f64>, lambda: f64, support: &[usize]) -> Option<Array1<f64>> {
    let sub = phi.select(Axis(1), support);
    let gram = sub.t().dot(&sub);
    let rhs = sub.t().dot(&x) - lambda / 2.0;
    linalg::spd_solve(gram.view(), rhs.view())
}

/// Active-set (Lawson–Hanson style) refinement from a feasible `a`.
/// Each inner step moves toward the support minimizer until it is reached
/// or a coordinate hits zero; the outer step admits the most violating
/// inactive atom. `None` if a support Gram matrix turns out singular or the
/// step budget runs out.
fn active_set(phi: ArrayView2<f64>, x: ArrayView1<f64>, lambda: f64, mut a: Array1<f64>, tol: f64) -> Option<Array1<f64>> {
    let m = a.len();
    let mut support: Vec<usize> = (0..m).filter(|&i| a[i] > 0.0).collect();
    for _ in 0..(4 * m + 50) {
        if !support.is_empty() {
            let s = solve_on_support(phi, x, lambda, &support)?;
            if s.iter().all(|&v| v > 0.0) {
                for (&i, &v) in support.iter().zip(s.iter()) {
                    a[i] = v;
                }
            } else {
                let mut alpha = 1.0f64;
                let mut blocking = support[0];
                for (&i, &v) in support.iter().zip(s.iter()) {
                    if v <= 0.0 && a[i] / (a[i] - v) <= alpha {
                        alpha = a[i] / (a[i] - v);
                        blocking = i;
                    }
                }
                for (&i, &v) in support.iter().zip(s.iter()) {
                    a[i] = (a[i] + alpha * (v - a[i])).max(0.0);
                }
                a[blocking] = 0.0;
                support.retain(|&i| a[i] > 0.0);
                continue;
            }
        }
        let r = &x - &phi.dot(&a);
        let g = phi.t().dot(&r) * -2.0;
        let entering = (0..m)
            .filter(|&i| a[i] == 0.0)
            .map(|i| (i, -(g[i] + lambda)))
            .filter(|&(_, v)| v > tol)
            .max_by(|p, q| p.1.total_cmp(&q.1));
        let Some((best, _)) = entering else {
            return Some(a);
        };
        support.push(best);
        support.sort_unstable();
    }
    None
}

/// Non-negative L1-penalized code of `x` under `dict`.
pub fn infer(dict: &Dictionary, x: ArrayView1<f64>, lambda: f64, cfg: &InferConfig) -> Result<SparseCode> {
    check_input(dict, x, lambda)?;
    let (a, iterations) = mfista(dict, x, lambda, Array1::zeros(dict.atoms()), cfg.tol, cfg.max_iter);
    finish(dict, x, lambda, cfg, a, iterations)
}

fn check_input(dict: &Dictionary, x: ArrayView1<f64>, lambda: f64) -> Result<()> {
    if x.len() != dict.input_dim() {
        return Err(Error::dims(dict.input_dim(), x.len(), "sparse coding input"));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda must be a finite value ≥ 0, got {lambda}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("sparse coding input contains non-finite values".into()));
    }
    Ok(())
}

/// Certify `a`, polishing it when the KKT residual is above tolerance.
fn finish(dict: &Dictionary, x: ArrayView1<f64>, lambda: f64, cfg: &InferConfig, mut a: Array1<f64>, mut iterations: usize) -> Result<SparseCode> {
    let phi = dict.phi.view();
    let mut kkt = kkt_residual(phi, x, a.view(), lambda);
    if cfg.polish && kkt > cfg.kkt_tol {
        let refined = active_set(phi, x, lambda, a.clone(), cfg.kkt_tol / 10.0)
            .or_else(|| active_set(phi, x, lambda, Array1::zeros(a.len()), cfg.kkt_tol / 10.0));
        if let Some(p) = refined {
            let pk = kkt_residual(phi, x, p.view(), lambda);
            if pk < kkt {
                a = p;
                kkt = pk;
            }
        }
        let mut rounds = 0;
        while kkt > cfg.kkt_tol && rounds < 200 {
            coordinate_sweeps(phi, x, lambda, &mut a, 5);
            iterations += 5;
            rounds += 1;
            kkt = kkt_residual(phi, x, a.view(), lambda);
        }
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("sparse code diverged".into()));
    }
    Ok(SparseCode {
        a,
        kkt_residual: kkt,
        iterations,
        converged: kkt <= cfg.kkt_tol,
    })
}

/// Codes for many inputs (rows of `xs`), returned as an `n × m` matrix.
///
/// Columns are solved in blocks with the batched solver, then each code is
/// certified and polished individually, so the result satisfies the same
/// contract as [`infer`].
pub fn infer_rows(dict: &Dictionary, xs: ArrayView2<f64>, lambda: f64, cfg: &InferConfig) -> Result<Array2<f64>> {
    const BLOCK: usize = 64;
    if xs.ncols() != dict.input_dim() {
        return Err(Error::dims(dict.input_dim(), xs.ncols(), "sparse coding input"));
    }
    for row in xs.rows() {
        check_input(dict, row, lambda)?;
    }
    let n = xs.nrows();
    let blocks: Vec<Array2<f64>> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let (lo, hi) = (b * BLOCK, ((b + 1) * BLOCK).min(n));
            let x = xs.slice(s![lo..hi, ..]).reversed_axes();
            let warm = infer_batch(dict, x, lambda, cfg.tol, cfg.max_iter);
            let mut out = Array2::zeros((hi - lo, dict.atoms()));
            for j in 0..hi - lo {
                let code = finish(dict, x.column(j), lambda, cfg, warm.column(j).to_owned(), 0)?;
                out.row_mut(j).assign(&code.a);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    if views.is_empty() {
        return Ok(Array2::zeros((0, dict.atoms())));
    }
    Ok(ndarray::concatenate(Axis(0), &views).expect("blocks share width"))
}

/// Batched MFISTA over the columns of `x` (`k × b`), with a per-column
/// monotone safeguard. Used inside dictionary learning, where codes need
/// not be certified. Returns the `m × b` code matrix.
pub fn infer_batch(dict: &Dictionary, x: ArrayView2<f64>, lambda: f64, tol: f64, max_iter: usize) -> Array2<f64> {
    let phi = dict.phi.view();
    let (m, b) = (dict.atoms(), x.ncols());
    let l = dict.lipschitz.max(f64::MIN_POSITIVE);
    let shrink = lambda / l;
    let objective = |a: &Array2<f64>| -> Array1<f64> {
        let r = &x - &phi.dot(a);
        let fit = (&r * &r).sum_axis(Axis(0));
        fit + a.sum_axis(Axis(0)) * lambda
    };
    let mut a = Array2::<f64>::zeros((m, b));
    let mut y = a.clone();
    let mut t = 1.0f64;
    let mut f = objective(&a);
    for _ in 0..max_iter {
        let resid = &phi.dot(&y) - &x;
        let grad = phi.t().dot(&resid) * 2.0;
        let z = Zip::from(&y).and(&grad).map_collect(|&yi, &gi| (yi - gi / l - shrink).max(0.0));
        let fz = objective(&z);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let mut a_next = a.clone();
        let mut worst = 0.0f64;
        for j in 0..b {
            if fz[j] <= f[j] {
                a_next.column_mut(j).assign(&z.column(j));
                worst = worst.max((f[j] - fz[j]).abs() / f[j].abs().max(f64::MIN_POSITIVE));
                f[j] = fz[j];
            } else {
                worst = worst.max(2.0 * tol);
            }
        }
        y = &a_next + &((&z - &a_next) * (t / t_next)) + &((&a_next - &a) * ((t - 1.0) / t_next));
        a = a_next;
        t = t_next;
        if worst <= tol {
            break;
        }
    }
    a
}

/// Dictionary-learning settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScTrainConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub batch: usize,
    /// Step on the batch-mean gradient of the reconstruction term.
    pub dict_step: f64,
    /// Multiplier applied to the step after every epoch.
    pub step_decay: f64,
    pub infer_tol: f64,
    pub infer_max_iter: usize,
    pub seed: u64,
}

impl Default for ScTrainConfig {
    fn default() -> Self {
        ScTrainConfig {
            lambda: 0.5,
            epochs: 16,
            batch: 256,
            dict_step: 0.1,
            step_decay: 0.95,
            infer_tol: 1e-8,
            infer_max_iter: 1000,
            seed: 0,
        }
    }
}

/// Per-epoch mean objective of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_objective: Vec<f64>,
}

/// Learn an `k × m` dictionary from the rows of `data` (`n × k`) by
/// alternating code inference and a gradient step on `Φ`, renormalizing
/// columns after every update.
pub fn learn_dictionary(data: ArrayView2<f64>, m: usize, cfg: &ScTrainConfig) -> Result<(Dictionary, TrainLog)> {
    let (n, k) = data.dim();
    if m <= k {
        return Err(Error::InvalidInput(format!("dictionary must be overcomplete: m = {m}, k = {k}")));
    }
    if cfg.batch == 0 || n < cfg.batch {
        return Err(Error::InvalidInput(format!("need at least one full batch: n = {n}, batch = {}", cfg.batch)));
    }
    if cfg.epochs == 0 {
        return Err(Error::InvalidInput("epochs must be ≥ 1".into()));
    }
    if !(cfg.lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be ≥ 0, got {}", cfg.lambda)));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("training data contains non-finite values".into()));
    }

    // Initialize from data vectors; zero rows fall back to Gaussian draws.
    let mut r = rng::root(rng::derive(cfg.seed, "sc-init"));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut r);
    let mut phi = Array2::<f64>::zeros((k, m));
    for j in 0..m {
        let row = data.row(order[j % n]);
        if row.dot(&row) > 0.0 && j < n {
            phi.column_mut(j).assign(&row);
        } else {
            phi.column_mut(j).assign(&Array1::from_shape_fn(k, |_| StandardNormal.sample(&mut r)));
        }
    }
    let mut dict = Dictionary::from_unnormalized(phi, cfg.lambda)?;

    let mut log = TrainLog::default();
    let mut step = cfg.dict_step;
    for epoch in 0..cfg.epochs {
        let mut er = rng::root(rng::derive(cfg.seed, &format!("sc-epoch-{epoch}")));
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut er);
        let mut total = 0.0;
        let mut counted = 0usize;
        for chunk in order.chunks(cfg.batch) {
            let x = data.select(Axis(0), chunk).reversed_axes();
            let codes = parallel_batch_codes(&dict, x.view(), cfg);
            let resid = &x - &dict.phi.dot(&codes);
            total += (&resid * &resid).sum() + cfg.lambda * codes.sum();
            counted += chunk.len();
            let grad = resid.dot(&codes.t()) * (2.0 / chunk.len() as f64);
            let mut phi = dict.phi.clone();
            phi.scaled_add(step, &grad);
            normalize_columns(&mut phi);
            if phi.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "dictionary diverged in epoch {epoch}; last stable epoch {}",
                    epoch as isize - 1
                )));
            }
            dict = Dictionary::new(phi, cfg.lambda)?;
        }
        let mean = total / counted as f64;
        if !mean.is_finite() {
            return Err(Error::Numerical(format!(
                "objective is not finite in epoch {epoch}; last stable epoch {}",
                epoch as isize - 1
            )));
        }
        log::info!("sc epoch {epoch}: mean objective {mean:.6}");
        log.epoch_objective.push(mean);
        step *= cfg.step_decay;
    }
    Ok((dict, log))
}

/// Codes for one minibatch, split into independent column blocks.
fn parallel_batch_codes(dict: &Dictionary, x: ArrayView2<f64>, cfg: &ScTrainConfig) -> Array2<f64> {
    const BLOCK: usize = 64;
    let b = x.ncols();
    let blocks: Vec<(usize, Array2<f64>)> = (0..b.div_ceil(BLOCK))
        .into_par_iter()
        .map(|i| {
            let (lo, hi) = (i * BLOCK, ((i + 1) * BLOCK).min(b));
            (lo, infer_batch(dict, x.slice(s![.., lo..hi]), cfg.lambda, cfg.infer_tol, cfg.infer_max_iter))
        })
        .collect();
    let mut out = Array2::zeros((dict.atoms(), b));
    for (lo, block) in blocks {
        out.slice_mut(s![.., lo..lo + block.ncols()]).assign(&block);
    }
    out
}

/// Aggregate sparsity of inferred codes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityStats {
    /// Mean number of strictly positive coefficients per code.
    pub mean_active: f64,
    pub mean_l1: f64,
    /// Mean fraction of strictly positive coefficients per code.
    pub mean_l0: f64,
}

pub fn sparsity_stats(dict: &Dictionary, data: ArrayView2<f64>, lambda: f64, cfg: &InferConfig) -> Result<SparsityStats> {
    if data.nrows() == 0 {
        return Err(Error::InvalidInput("sparsity statistics need at least one input".into()));
    }
    Ok(stats_of_codes(infer_rows(dict, data, lambda, cfg)?.view()))
}

pub fn stats_of_codes(codes: ArrayView2<f64>) -> SparsityStats {
    let (n, m) = codes.dim();
    let active = codes.iter().filter(|&&v| v > 0.0).count() as f64 / n as f64;
    SparsityStats {
        mean_active: active,
        mean_l1: codes.sum() / n as f64,
        mean_l0: active / m as f64,
    }
}

/// Random dictionary with unit-norm Gaussian columns.
pub fn random_dictionary(k: usize, m: usize, lambda: f64, seed: u64) -> Result<Dictionary> {
    let mut r = rng::root(seed);
    let phi = Array2::from_shape_fn((k, m), |_| r.sample::<f64, _>(StandardNormal));
    Dictionary::from_unnormalized(phi, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    #[test]
    fn identity_dictionary_thresholds_at_half_lambda() {
        let d = Dictionary::new(Array2::eye(2), 0.6).unwrap();
        let c = infer(&d, array![1.0, -0.2].view(), 0.6, &InferConfig::default()).unwrap();
        assert!((c.a[0] - 0.7).abs() < 1e-10);
        assert_eq!(c.a[1], 0.0);
        assert!(c.converged);
    }

    #[test]
    fn overcomplete_codes_are_certified_to_high_precision() {
        let dict = random_dictionary(60, 400, 1.0, 11).unwrap();
        let x = Array1::from_shape_fn(60, |i| ((i * 7 % 13) as f64 - 6.0) / 3.0);
        for lambda in [0.05, 0.5, 3.0] {
            let c = infer(&dict, x.view(), lambda, &InferConfig::default()).unwrap();
            assert!(c.converged);
            assert!(c.kkt_residual < 1e-9, "λ {lambda}: {}", c.kkt_residual);
        }
    }

    #[test]
    fn huge_lambda_gives_zero_code() {
        let d = random_dictionary(10, 30, 1.0, 3).unwrap();
        let x = Array1::from_shape_fn(10, |i| (i as f64 - 4.5) / 3.0);
        let c = infer(&d, x.view(), 1e3, &InferConfig::default()).unwrap();
        assert!(c.a.iter().all(|&v| v == 0.0));
        let s = sparsity_stats(&d, x.view().insert_axis(Axis(0)), 1e3, &InferConfig::default()).unwrap();
        assert_eq!(s.mean_l0, 0.0);
        assert_eq!(s.mean_active, 0.0);
    }

    #[test]
    fn reconstruct_basis_and_zero() {
        let d = random_dictionary(5, 9, 1.0, 4).unwrap();
        let mut e = Array1::zeros(9);
        e[3] = 1.0;
        assert_eq!(d.reconstruct(e.view()).unwrap(), d.phi().column(3).to_owned());
        assert!(d.reconstruct(Array1::zeros(9).view()).unwrap().iter().all(|&v| v == 0.0));
        assert!(d.reconstruct(Array1::zeros(8).view()).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = random_dictionary(4, 8, 1.0, 5).unwrap();
        let cfg = InferConfig::default();
        assert!(infer(&d, array![1.0, f64::NAN, 0.0, 0.0].view(), 1.0, &cfg).unwrap_err().is_numerical());
        assert!(infer(&d, array![1.0, 0.0, 0.0].view(), 1.0, &cfg).is_err());
        assert!(infer(&d, array![1.0, 0.0, 0.0, 0.0].view(), -1.0, &cfg).is_err());
        assert!(Dictionary::new(Array2::from_elem((2, 3), 1.0), 0.5).is_err());
    }

    #[test]
    fn zero_lambda_reconstructs_cone_projection() {
        // With Φ = [I, -I] every vector lies in the cone, so λ = 0 is exact.
        let mut phi = Array2::zeros((3, 6));
        for i in 0..3 {
            phi[[i, i]] = 1.0;
            phi[[i, i + 3]] = -1.0;
        }
        let d = Dictionary::new(phi, 0.0).unwrap();
        let x = array![0.4, -1.3, 2.2];
        let c = infer(&d, x.view(), 0.0, &InferConfig::default()).unwrap();
        let rec = d.reconstruct(c.a.view()).unwrap();
        for (a, b) in rec.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn learning_keeps_columns_unit_norm_and_is_deterministic() {
        let mut r = rng::root(9);
        let data = Array2::from_shape_fn((300, 8), |_| {
            let v: f64 = r.sample(StandardNormal);
            v.powi(3)
        });
        let cfg = ScTrainConfig {
            lambda: 0.5,
            epochs: 3,
            batch: 50,
            infer_tol: 1e-6,
            infer_max_iter: 200,
            seed: 1,
            ..Default::default()
        };
        let (d1, log1) = learn_dictionary(data.view(), 16, &cfg).unwrap();
        let (d2, log2) = learn_dictionary(data.view(), 16, &cfg).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(log1, log2);
        assert_eq!(log1.epoch_objective.len(), 3);
        for col in d1.phi().columns() {
            assert!((col.dot(&col).sqrt() - 1.0).abs() < 1e-8);
        }
        assert!(learn_dictionary(data.view(), 8, &cfg).is_err());
    }

    #[test]
    fn batch_solver_agrees_with_single_solver() {
        let d = random_dictionary(12, 40, 1.0, 11).unwrap();
        let mut r = rng::root(12);
        let x = Array2::from_shape_fn((12, 5), |_| r.sample::<f64, _>(StandardNormal));
        let codes = infer_batch(&d, x.view(), 0.8, 1e-12, 5000);
        for j in 0..5 {
            let single = infer(&d, x.column(j), 0.8, &InferConfig::default()).unwrap();
            let fb = d.objective(x.column(j), codes.column(j), 0.8);
            let fs = d.objective(x.column(j), single.a.view(), 0.8);
            assert!((fb - fs).abs() < 1e-6 * fs.max(1.0), "{fb} vs {fs}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn codes_nonnegative_and_certified(seed in 0u64..10_000, lambda in 0.0f64..3.0) {
            let d = random_dictionary(8, 24, lambda, seed).unwrap();
            let mut r = rng::root(seed + 1);
            let x = Array1::from_shape_fn(8, |_| r.sample::<f64, _>(StandardNormal));
            let c = infer(&d, x.view(), lambda, &InferConfig::default()).unwrap();
            prop_assert!(c.a.iter().all(|&v| v >= 0.0));
            prop_assert!(c.kkt_residual <= 1e-6);
        }

        #[test]
        fn mfista_objective_is_monotone(seed in 0u64..10_000) {
            let d = random_dictionary(6, 18, 1.0, seed).unwrap();
            let mut r = rng::root(seed + 7);
            let x = Array1::from_shape_fn(6, |_| r.sample::<f64, _>(StandardNormal));
            let mut prev = f64::INFINITY;
            for iters in 1..40 {
                let (a, _) = mfista(&d, x.view(), 1.0, Array1::zeros(18), 0.0, iters);
                let f = d.objective(x.view(), a.view(), 1.0);
                prop_assert!(f <= prev + 1e-12);
                prev = f;
            }
        }
    }
}
