//! Texture modulation, response statistics and significance tests.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, StudentsT};

use crate::corpus::{cut_patch, sample_texture_patches, ImageGray, Patch, TextureImage};
use crate::error::{Error, Result};
use crate::pipeline::ModelPipeline;
use crate::rng;

/// Texture-vs-noise preference `(t − n)/(t + n)`; `None` when both
/// responses are zero and the pair carries no information.
pub fn modulation_index(r_tex: f64, r_noise: f64) -> Option<f64> {
    let s = r_tex + r_noise;
    if s == 0.0 {
        None
    } else {
        Some(((r_tex - r_noise) / s).clamp(-1.0, 1.0))
    }
}

fn fft2(data: &mut Array2<Complex64>, inverse: bool) {
    let (h, w) = data.dim();
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for mut row in data.rows_mut() {
        let mut buf = row.to_vec();
        row_fft.process(&mut buf);
        row.assign(&ndarray::Array1::from(buf));
    }
    for mut col in data.columns_mut() {
        let mut buf = col.to_vec();
        col_fft.process(&mut buf);
        col.assign(&ndarray::Array1::from(buf));
    }
    if inverse {
        let n = (h * w) as f64;
        data.mapv_inplace(|v| v / n);
    }
}

/// Centered 2-D spectrum of a real array.
pub fn spectrum(image: ArrayView2<f64>) -> Array2<Complex64> {
    let mut f = image.mapv(|v| Complex64::new(v, 0.0));
    fft2(&mut f, false);
    f
}

/// Random phases with `θ(−u) = −θ(u)`; self-conjugate bins (DC and
/// Nyquist) get zero so they stay real.
fn hermitian_phases(h: usize, w: usize, seed: u64) -> Array2<f64> {
    let mut r = rng::root(seed);
    let mut theta = Array2::<f64>::zeros((h, w));
    for u in 0..h {
        for v in 0..w {
            let (pu, pv) = ((h - u) % h, (w - v) % w);
            if (u, v) == (pu, pv) {
                continue;
            }
            if (u, v) < (pu, pv) {
                theta[[u, v]] = r.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            } else {
                theta[[u, v]] = -theta[[pu, pv]];
            }
        }
    }
    theta
}

/// Phase-randomized image before the real part is taken.
pub fn spectral_noise_complex(image: ArrayView2<f64>, seed: u64) -> Array2<Complex64> {
    let (h, w) = image.dim();
    let theta = hermitian_phases(h, w, seed);
    let mut f = spectrum(image);
    ndarray::Zip::from(&mut f).and(&theta).for_each(|c, &t| *c *= Complex64::from_polar(1.0, t));
    fft2(&mut f, true);
    f
}

/// An image with the amplitude spectrum of `image` and random phases.
pub fn spectral_noise(image: &ImageGray, seed: u64) -> ImageGray {
    let out = spectral_noise_complex(image.data.view(), seed).mapv(|c| c.re);
    ImageGray { data: out }
}

/// Summary of a modulation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationReport {
    /// Mean over the informative (unit, pair) entries.
    pub mean_index: f64,
    /// Fraction of (unit, pair) entries with some response.
    pub responsive_fraction: f64,
    pub pairs: usize,
    pub entries: usize,
}

/// Per-(unit, pair) aggregation of texture and noise responses, both
/// `pairs × units`.
pub fn modulation_from_responses(tex: ArrayView2<f64>, noise: ArrayView2<f64>) -> Result<ModulationReport> {
    if tex.dim() != noise.dim() {
        return Err(Error::InvalidInput(format!(
            "texture responses {:?} vs noise responses {:?}",
            tex.dim(),
            noise.dim()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (&t, &n) in tex.iter().zip(noise.iter()) {
        if t < 0.0 || n < 0.0 {
            return Err(Error::InvalidInput("modulation needs nonnegative responses".into()));
        }
        if let Some(m) = modulation_index(t, n) {
            sum += m;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Data("no unit responded to any texture/noise pair".into()));
    }
    Ok(ModulationReport {
        mean_index: sum / count as f64,
        responsive_fraction: count as f64 / tex.len() as f64,
        pairs: tex.nrows(),
        entries: count,
    })
}

/// `n` texture patches and their spectrally matched noise counterparts,
/// cut at the same offsets.
pub fn modulation_pairs(
    textures: &[TextureImage],
    class_names: &[String],
    n: usize,
    seed: u64,
) -> Result<(Vec<Patch>, Vec<Patch>)> {
    let set = sample_texture_patches(textures, class_names, n, rng::derive(seed, "modulation-patches"))?;
    let noise_seed = rng::derive(seed, "modulation-noise");
    let mut noise_images: HashMap<usize, ImageGray> = HashMap::new();
    let mut noise = Vec::with_capacity(n);
    for p in &set.patches {
        let meta = p.meta.expect("texture patches carry offsets");
        let img = noise_images
            .entry(meta.source)
            .or_insert_with(|| spectral_noise(&textures[meta.source].image, rng::stream(noise_seed, meta.source as u64).random()));
        let mut q = cut_patch(img, meta.row, meta.col)?;
        q.meta = Some(meta);
        noise.push(q);
    }
    Ok((set.patches, noise))
}

/// Modulation of the V2 responses of `pipeline`.
pub fn run_modulation_experiment(
    pipeline: &ModelPipeline,
    textures: &[TextureImage],
    class_names: &[String],
    n: usize,
    seed: u64,
) -> Result<ModulationReport> {
    let (tex, noise) = modulation_pairs(textures, class_names, n, seed)?;
    modulation_from_responses(pipeline.encode(&tex)?.view(), pipeline.encode(&noise)?.view())
}

/// Modulation of the V1 complex energies feeding `pipeline`.
pub fn run_v1_modulation_experiment(
    pipeline: &ModelPipeline,
    textures: &[TextureImage],
    class_names: &[String],
    n: usize,
    seed: u64,
) -> Result<ModulationReport> {
    let (tex, noise) = modulation_pairs(textures, class_names, n, seed)?;
    let energies = |ps: &[Patch]| {
        let d = pipeline.bank().complex_len();
        let mut x = Array2::zeros((ps.len(), d));
        for (mut row, p) in x.rows_mut().into_iter().zip(ps) {
            row.assign(&pipeline.flatten(&pipeline.complex(p).0));
        }
        x
    };
    modulation_from_responses(energies(&tex).view(), energies(&noise).view())
}

fn central_moments(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &v in x {
        let d = (v - mean) * (v - mean);
        m2 += d;
        m4 += d * d;
    }
    (mean, m2 / n, m4 / n)
}

/// Fourth standardized moment (3 for a Gaussian).
pub fn kurtosis(samples: &[f64]) -> Result<f64> {
    if samples.len() < 4 {
        return Err(Error::InvalidInput(format!("kurtosis needs at least 4 samples, got {}", samples.len())));
    }
    let (mean, m2, m4) = central_moments(samples);
    if !(m2 > 16.0 * (f64::EPSILON * mean).powi(2)) || !m4.is_finite() {
        return Err(Error::Numerical("kurtosis of a constant sample".into()));
    }
    Ok(m4 / (m2 * m2))
}

/// Five-number summary with Tukey fences at 1.5 IQR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Most extreme values inside the fences.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Some(quantile_sorted(&s, 0.5))
}

impl BoxSummary {
    pub fn of(values: &[f64]) -> Option<BoxSummary> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&s, 0.25);
        let q3 = quantile_sorted(&s, 0.75);
        let iqr = q3 - q1;
        let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside: Vec<f64> = s.iter().copied().filter(|v| (lo..=hi).contains(v)).collect();
        Some(BoxSummary {
            min: s[0],
            q1,
            median: quantile_sorted(&s, 0.5),
            q3,
            max: s[s.len() - 1],
            whisker_low: inside.first().copied().unwrap_or(q1),
            whisker_high: inside.last().copied().unwrap_or(q3),
            outliers: s.iter().copied().filter(|v| !(lo..=hi).contains(v)).collect(),
        })
    }
}

/// Per-unit kurtosis of a `samples × units` response table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KurtosisReport {
    /// Units with nonzero response variance.
    pub units: Vec<usize>,
    pub per_unit: Vec<f64>,
    /// Units that never varied.
    pub silent: Vec<usize>,
    pub summary: Option<BoxSummary>,
}

impl KurtosisReport {
    pub fn median(&self) -> Option<f64> {
        self.summary.as_ref().map(|s| s.median)
    }
}

pub fn kurtosis_report(responses: ArrayView2<f64>) -> KurtosisReport {
    let mut units = Vec::new();
    let mut per_unit = Vec::new();
    let mut silent = Vec::new();
    for (j, col) in responses.columns().into_iter().enumerate() {
        match kurtosis(&col.to_vec()) {
            Ok(k) => {
                units.push(j);
                per_unit.push(k);
            }
            Err(_) => silent.push(j),
        }
    }
    let summary = BoxSummary::of(&per_unit);
    KurtosisReport { units, per_unit, silent, summary }
}

/// Two-sided Student t-test with pooled variance: `(t, p)`.
pub fn t_test_independent(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput("t-test needs at least 2 samples per group".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va, _) = central_moments(a);
    let (mb, vb, _) = central_moments(b);
    let df = na + nb - 2.0;
    let pooled = (va * na + vb * nb) / df;
    if !pooled.is_finite() {
        return Err(Error::Numerical("non-finite sample variance".into()));
    }
    if pooled == 0.0 {
        if ma == mb {
            return Ok((0.0, 1.0));
        }
        return Err(Error::Numerical("t-test on two constant, different samples".into()));
    }
    let t = (ma - mb) / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numerical(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok((t, p))
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation, ties given average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput("spearman needs two equal-length series of length ≥ 2".into()));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, vx, _) = central_moments(&rx);
    let (my, vy, _) = central_moments(&ry);
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::Numerical("spearman of a constant series".into()));
    }
    let cov = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / rx.len() as f64;
    Ok(cov / (vx * vy).sqrt())
}

/// One-sided `P(X ≥ successes)` for `X ~ Binomial(trials, p)`.
pub fn binomial_upper_p(successes: u64, trials: u64, p: f64) -> Result<f64> {
    if successes > trials {
        return Err(Error::InvalidInput(format!("{successes} successes out of {trials} trials")));
    }
    let dist = Binomial::new(p, trials).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(if successes == 0 { 1.0 } else { dist.sf(successes - 1) })
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let (mean, var, _) = central_moments(values);
        Some(MeanStd { mean, std: var.sqrt(), n: values.len() })
    }
}
