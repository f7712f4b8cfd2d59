//! Linear max-margin classifiers and stratified cross-validation.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    /// Stop when the spread of projected dual gradients falls below this.
    pub tol: f64,
    pub max_epochs: usize,
    /// Z-score each feature with training-set statistics first.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            tol: 1e-4,
            max_epochs: 2000,
            standardize: false,
            seed: 0,
        }
    }
}

/// One-vs-rest linear classifier; a single score vector when binary.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    /// `scorers × features`; one row for binary problems.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub classes: usize,
    pub c: f64,
    /// Per-feature `(mean, scale)` when standardizing.
    pub scaling: Option<(Array1<f64>, Array1<f64>)>,
}

/// Binary hinge-loss SVM on labels ±1 by dual coordinate descent. The bias
/// is learned as the weight of a constant unit feature.
fn train_binary(x: ArrayView2<f64>, y: &[f64], cfg: &SvmConfig, seed: u64) -> (Array1<f64>, f64) {
    let (n, d) = x.dim();
    let qii: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&r) + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = Array1::<f64>::zeros(d);
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut r = rng::root(seed);
    for _ in 0..cfg.max_epochs {
        order.shuffle(&mut r);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let xi = x.row(i);
            let g = y[i] * (w.dot(&xi) + b) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == cfg.c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qii[i]).clamp(0.0, cfg.c);
                let delta = (alpha[i] - old) * y[i];
                w.scaled_add(delta, &xi);
                b += delta;
            }
        }
        if pg_max - pg_min < cfg.tol {
            break;
        }
    }
    (w, b)
}

fn scaling_of(x: ArrayView2<f64>) -> (Array1<f64>, Array1<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("nonempty");
    let sd = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
    (mean, sd)
}

fn check_features(x: ArrayView2<f64>) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("features contain non-finite values".into()));
    }
    Ok(())
}

/// Train on `features` (`n × m`) with labels in `0..classes`.
pub fn train(features: ArrayView2<f64>, labels: &[usize], cfg: &SvmConfig) -> Result<LinearClassifier> {
    if features.nrows() != labels.len() {
        return Err(Error::dims(features.nrows(), labels.len(), "labels vs feature rows"));
    }
    check_features(features)?;
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::InvalidInput("training needs at least two classes".into()));
    }
    if let Some(c) = counts.iter().position(|&c| c == 1) {
        return Err(Error::InvalidInput(format!("class {c} has a single example")));
    }
    let scaling = cfg.standardize.then(|| scaling_of(features));
    let x = match &scaling {
        Some((mean, sd)) => (&features - mean) / sd,
        None => features.to_owned(),
    };
    let scorers: Vec<usize> = if classes == 2 { vec![1] } else { (0..classes).collect() };
    let fitted: Vec<(Array1<f64>, f64)> = scorers
        .par_iter()
        .map(|&k| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == k { 1.0 } else { -1.0 }).collect();
            train_binary(x.view(), &y, cfg, rand::Rng::random(&mut rng::stream(cfg.seed, k as u64)))
        })
        .collect();
    let mut weights = Array2::zeros((scorers.len(), features.ncols()));
    let mut biases = Array1::zeros(scorers.len());
    for (i, (w, b)) in fitted.into_iter().enumerate() {
        weights.row_mut(i).assign(&w);
        biases[i] = b;
    }
    Ok(LinearClassifier { weights, biases, classes, c: cfg.c, scaling })
}

impl LinearClassifier {
    pub fn features(&self) -> usize {
        self.weights.ncols()
    }

    /// Scores per scorer (`n × scorers`).
    pub fn scores(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.features() {
            return Err(Error::dims(self.features(), features.ncols(), "classifier features"));
        }
        let x = match &self.scaling {
            Some((mean, sd)) => (&features - mean) / sd,
            None => features.to_owned(),
        };
        Ok(x.dot(&self.weights.t()) + &self.biases)
    }

    /// Argmax of class scores, ties to the lowest class index; binary
    /// problems predict class 1 only for strictly positive scores.
    pub fn predict(&self, features: ArrayView2<f64>) -> Result<Vec<usize>> {
        let s = self.scores(features)?;
        Ok(s.rows().into_iter().map(|r| self.decide(r)).collect())
    }

    fn decide(&self, scores: ArrayView1<f64>) -> usize {
        if self.weights.nrows() == 1 {
            return usize::from(scores[0] > 0.0);
        }
        let mut best = 0;
        for (k, &v) in scores.iter().enumerate() {
            if v > scores[best] {
                best = k;
            }
        }
        best
    }
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation across folds.
    pub std: f64,
    /// Correct test predictions summed over folds.
    pub correct: usize,
    pub total: usize,
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin,
/// continuing where the previous class stopped.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {k}")));
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut fold = vec![0usize; labels.len()];
    let mut next = 0;
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(Error::InvalidInput(format!(
                "class {c} has {} examples, fewer than {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng::stream(seed, c as u64));
        for i in members {
            fold[i] = next % k;
            next += 1;
        }
    }
    Ok(fold)
}

pub fn kfold_cv(features: ArrayView2<f64>, labels: &[usize], k: usize, cfg: &SvmConfig) -> Result<CvReport> {
    if features.nrows() != labels.len() {
        return Err(Error::dims(features.nrows(), labels.len(), "labels vs feature rows"));
    }
    let fold = stratified_folds(labels, k, rng::derive(cfg.seed, "folds"))?;
    let results: Vec<Result<(usize, usize)>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train_idx: Vec<usize> = (0..labels.len()).filter(|&i| fold[i] != f).collect();
            let test_idx: Vec<usize> = (0..labels.len()).filter(|&i| fold[i] == f).collect();
            let xtr = features.select(Axis(0), &train_idx);
            let ytr: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
            let model = train(xtr.view(), &ytr, cfg)?;
            let pred = model.predict(features.select(Axis(0), &test_idx).view())?;
            let correct = pred.iter().zip(&test_idx).filter(|(p, &i)| **p == labels[i]).count();
            Ok((correct, test_idx.len()))
        })
        .collect();
    let mut fold_accuracies = Vec::with_capacity(k);
    let (mut correct, mut total) = (0, 0);
    for r in results {
        let (c, t) = r?;
        fold_accuracies.push(c as f64 / t as f64);
        correct += c;
        total += t;
    }
    let mean = fold_accuracies.iter().sum::<f64>() / k as f64;
    let std = (fold_accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / k as f64).sqrt();
    Ok(CvReport { fold_accuracies, mean, std, correct, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(n: usize, classes: usize, sep: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut r = rng::root(seed);
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % classes;
            let a = c as f64 * std::f64::consts::TAU / classes as f64;
            let g1: f64 = StandardNormal.sample(&mut r);
            let g2: f64 = StandardNormal.sample(&mut r);
            x[[i, 0]] = sep * a.cos() + 0.3 * g1;
            x[[i, 1]] = sep * a.sin() + 0.3 * g2;
            y.push(c);
        }
        (x, y)
    }

    #[test]
    fn separable_blobs_fit_perfectly() {
        for classes in [2, 3] {
            let (x, y) = blobs(90, classes, 5.0, 1);
            let m = train(x.view(), &y, &SvmConfig::default()).unwrap();
            assert_eq!(accuracy(&m.predict(x.view()).unwrap(), &y), 1.0);
        }
    }

    #[test]
    fn single_class_and_bad_dims_are_errors() {
        let x = Array2::zeros((4, 2));
        assert!(train(x.view(), &[0, 0, 0, 0], &SvmConfig::default()).is_err());
        let (x, y) = blobs(10, 2, 3.0, 0);
        let m = train(x.view(), &y, &SvmConfig::default()).unwrap();
        assert!(m.predict(Array2::zeros((1, 3)).view()).is_err());
        assert!(m.predict(Array2::zeros((0, 2)).view()).unwrap().is_empty());
    }

    #[test]
    fn ties_go_to_lowest_class() {
        let m = LinearClassifier {
            weights: Array2::zeros((3, 2)),
            biases: Array1::from(vec![0.5, 1.0, 1.0]),
            classes: 3,
            c: 1.0,
            scaling: None,
        };
        assert_eq!(m.predict(Array2::ones((2, 2)).view()).unwrap(), vec![1, 1]);
        let b = LinearClassifier {
            weights: Array2::zeros((1, 2)),
            biases: Array1::zeros(1),
            classes: 2,
            c: 1.0,
            scaling: None,
        };
        assert_eq!(b.predict(Array2::ones((1, 2)).view()).unwrap(), vec![0]);
    }

    #[test]
    fn bias_shift_leaves_decisions() {
        let (x, y) = blobs(60, 3, 2.0, 4);
        let m = train(x.view(), &y, &SvmConfig::default()).unwrap();
        let mut shifted = m.clone();
        shifted.biases += 7.5;
        assert_eq!(m.predict(x.view()).unwrap(), shifted.predict(x.view()).unwrap());
    }

    #[test]
    fn duplicated_columns_share_weights() {
        let (x, y) = blobs(60, 3, 2.0, 5);
        let xx = ndarray::concatenate(Axis(1), &[x.view(), x.view()]).unwrap();
        let m = train(xx.view(), &y, &SvmConfig::default()).unwrap();
        for row in m.weights.rows() {
            assert!((row[0] - row[2]).abs() < 1e-12 && (row[1] - row[3]).abs() < 1e-12);
        }
        assert_eq!(accuracy(&m.predict(xx.view()).unwrap(), &y), 1.0);
    }

    #[test]
    fn folds_are_stratified_and_seeded() {
        let labels: Vec<usize> = (0..103).map(|i| if i < 50 { 0 } else if i < 80 { 1 } else { 2 }).collect();
        let f = stratified_folds(&labels, 5, 9).unwrap();
        for c in 0..3 {
            let n_c = labels.iter().filter(|&&l| l == c).count() as f64;
            for k in 0..5 {
                let h = (0..labels.len()).filter(|&i| labels[i] == c && f[i] == k).count() as f64;
                assert!((h - n_c / 5.0).abs() <= 1.0);
            }
        }
        assert_eq!(f, stratified_folds(&labels, 5, 9).unwrap());
        assert!(stratified_folds(&[0, 0, 0, 1, 1, 1, 1, 1], 5, 0).is_err());
    }

    #[test]
    fn cv_report_is_consistent_and_deterministic() {
        let (x, y) = blobs(100, 4, 1.0, 2);
        let cfg = SvmConfig::default();
        let r = kfold_cv(x.view(), &y, 5, &cfg).unwrap();
        assert_eq!(r.fold_accuracies.len(), 5);
        let mean = r.fold_accuracies.iter().sum::<f64>() / 5.0;
        assert!((r.mean - mean).abs() < 1e-15);
        assert_eq!(r.total, 100);
        assert_eq!(r, kfold_cv(x.view(), &y, 5, &cfg).unwrap());
    }

    #[test]
    fn shuffled_labels_sit_near_chance() {
        let mut r = rng::root(6);
        let x = Array2::from_shape_fn((300, 10), |_| r.sample::<f64, _>(StandardNormal));
        let y: Vec<usize> = (0..300).map(|i| i % 3).collect();
        let rep = kfold_cv(x.view(), &y, 5, &SvmConfig::default()).unwrap();
        let sigma = ((1.0 / 3.0) * (2.0 / 3.0) / 300.0f64).sqrt();
        let acc = rep.correct as f64 / rep.total as f64;
        assert!((acc - 1.0 / 3.0).abs() < 3.0 * sigma, "accuracy {acc}");
    }

    #[test]
    fn standardization_flag_is_applied() {
        let (mut x, y) = blobs(60, 2, 3.0, 8);
        x.column_mut(0).mapv_inplace(|v| v * 1e3 + 50.0);
        let cfg = SvmConfig { standardize: true, ..SvmConfig::default() };
        let m = train(x.view(), &y, &cfg).unwrap();
        assert!(m.scaling.is_some());
        assert_eq!(accuracy(&m.predict(x.view()).unwrap(), &y), 1.0);
    }
}
