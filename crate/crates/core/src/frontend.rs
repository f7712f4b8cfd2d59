//! V1 stage: Gabor simple cells, quadrature energy pooling with recorded
//! phases, region deletion and the backward maps to image space.

use std::f64::consts::PI;

use ndarray::{s, Array2, Array4, Array5, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::corpus::{Patch, PATCH_SIZE};
use crate::error::{Error, Result};

/// Gabor bank parameters. Frequencies are in cycles per receptive field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaborConfig {
    pub rf_size: usize,
    pub frequencies: Vec<f64>,
    pub orientations_deg: Vec<f64>,
    pub phases_deg: Vec<f64>,
    pub stride: usize,
}

impl Default for GaborConfig {
    fn default() -> Self {
        GaborConfig {
            rf_size: 12,
            frequencies: vec![1.25, 1.5, 1.75],
            orientations_deg: (0..12).map(|i| 15.0 * i as f64).collect(),
            phases_deg: vec![0.0, 90.0],
            stride: 4,
        }
    }
}

impl GaborConfig {
    /// Default bank at the given stride (4 → 6×6 grid, 2 → 11×11 grid).
    pub fn with_stride(stride: usize) -> Self {
        GaborConfig {
            stride,
            ..Default::default()
        }
    }
}

/// An immutable bank of unit-norm, zero-DC Gabor kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct GaborBank {
    config: GaborConfig,
    grid: usize,
    /// Kernels indexed `[freq][orient][phase]`, flattened in that order.
    filters: Vec<Array2<f64>>,
}

/// Simple-cell responses, indexed `(row, col, freq, orient, phase)`.
pub type V1Simple = Array5<f64>;
/// Complex-cell energies, indexed `(row, col, freq, orient)`.
pub type V1Complex = Array4<f64>;
/// Quadrature angles in `(-π, π]`, same shape as [`V1Complex`].
pub type PhaseRecord = Array4<f64>;

/// Gaussian envelope width as a fraction of the receptive field.
const SIGMA_PER_RF: f64 = 1.0 / 5.0;

pub fn gabor_kernel(rf_size: usize, frequency: f64, orientation_deg: f64, phase_deg: f64) -> Array2<f64> {
    let sigma = rf_size as f64 * SIGMA_PER_RF;
    let center = (rf_size as f64 - 1.0) / 2.0;
    let (theta, phi) = (orientation_deg.to_radians(), phase_deg.to_radians());
    let k = 2.0 * PI * frequency / rf_size as f64;
    let mut g = Array2::from_shape_fn((rf_size, rf_size), |(i, j)| {
        let (x, y) = (j as f64 - center, i as f64 - center);
        let xr = x * theta.cos() + y * theta.sin();
        (-(x * x + y * y) / (2.0 * sigma * sigma)).exp() * (k * xr + phi).cos()
    });
    let mean = g.mean().unwrap_or(0.0);
    g.mapv_inplace(|v| v - mean);
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    g.mapv_inplace(|v| v / norm);
    g
}

impl GaborBank {
    pub fn new(config: GaborConfig) -> Result<Self> {
        if config.frequencies.is_empty() || config.frequencies.iter().any(|&f| !(f > 0.0)) {
            return Err(Error::InvalidInput("Gabor frequencies must be positive".into()));
        }
        if config.orientations_deg.is_empty() {
            return Err(Error::InvalidInput("at least one orientation is required".into()));
        }
        if config.rf_size == 0 || config.rf_size % 2 != 0 || config.rf_size > PATCH_SIZE {
            return Err(Error::InvalidInput(format!(
                "receptive field size must be even and at most {PATCH_SIZE}, got {}",
                config.rf_size
            )));
        }
        if config.phases_deg.len() != 2 {
            return Err(Error::InvalidInput(format!(
                "a quadrature pair needs exactly 2 phases, got {}",
                config.phases_deg.len()
            )));
        }
        let diff = (config.phases_deg[1] - config.phases_deg[0]).rem_euclid(360.0);
        if (diff - 90.0).abs() > 1e-9 && (diff - 270.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "phases {:?} are not in quadrature",
                config.phases_deg
            )));
        }
        let span = PATCH_SIZE - config.rf_size;
        if config.stride == 0 || span % config.stride != 0 {
            return Err(Error::InvalidInput(format!(
                "stride {} does not tile {} positions evenly",
                config.stride, span
            )));
        }
        let grid = span / config.stride + 1;
        let mut filters = Vec::new();
        for &f in &config.frequencies {
            for &o in &config.orientations_deg {
                for &p in &config.phases_deg {
                    filters.push(gabor_kernel(config.rf_size, f, o, p));
                }
            }
        }
        Ok(GaborBank {
            config,
            grid,
            filters,
        })
    }

    pub fn config(&self) -> &GaborConfig {
        &self.config
    }

    /// Spatial positions per side.
    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn n_freq(&self) -> usize {
        self.config.frequencies.len()
    }

    pub fn n_orient(&self) -> usize {
        self.config.orientations_deg.len()
    }

    /// Channels per spatial cell in the complex stage.
    pub fn channels(&self) -> usize {
        self.n_freq() * self.n_orient()
    }

    /// Length of a flattened complex-cell vector.
    pub fn complex_len(&self) -> usize {
        self.grid * self.grid * self.channels()
    }

    pub fn complex_shape(&self) -> (usize, usize, usize, usize) {
        (self.grid, self.grid, self.n_freq(), self.n_orient())
    }

    pub fn kernel(&self, freq: usize, orient: usize, phase: usize) -> ArrayView2<'_, f64> {
        self.filters[(freq * self.n_orient() + orient) * 2 + phase].view()
    }

    pub fn kernels(&self) -> &[Array2<f64>] {
        &self.filters
    }

    /// Strided valid-mode correlation of the patch with every kernel.
    pub fn simple(&self, patch: &Patch) -> V1Simple {
        self.simple_from(patch.data.view())
    }

    pub(crate) fn simple_from(&self, image: ArrayView2<f64>) -> V1Simple {
        let (l, nf, no) = (self.grid, self.n_freq(), self.n_orient());
        let (rf, stride) = (self.config.rf_size, self.config.stride);
        let mut out = Array5::zeros((l, l, nf, no, 2));
        for r in 0..l {
            for c in 0..l {
                let window = image.slice(s![r * stride..r * stride + rf, c * stride..c * stride + rf]);
                for (idx, k) in self.filters.iter().enumerate() {
                    let (f, rest) = (idx / (no * 2), idx % (no * 2));
                    let v = Zip::from(&window).and(k).fold(0.0, |acc, &a, &b| acc + a * b);
                    out[[r, c, f, rest / 2, rest % 2]] = v;
                }
            }
        }
        out
    }

    /// Adjoint of [`GaborBank::simple`]: scatter each response back through
    /// its kernel. This approximates, but does not equal, the inverse.
    pub fn simple_inverse(&self, simple: &V1Simple) -> Result<Patch> {
        let (l, nf, no) = (self.grid, self.n_freq(), self.n_orient());
        if simple.dim() != (l, l, nf, no, 2) {
            return Err(Error::InvalidInput(format!(
                "simple tensor shape {:?} does not match bank {:?}",
                simple.dim(),
                (l, l, nf, no, 2)
            )));
        }
        let (rf, stride) = (self.config.rf_size, self.config.stride);
        let mut img = Array2::<f64>::zeros((PATCH_SIZE, PATCH_SIZE));
        for r in 0..l {
            for c in 0..l {
                let mut window = img.slice_mut(s![r * stride..r * stride + rf, c * stride..c * stride + rf]);
                for (idx, k) in self.filters.iter().enumerate() {
                    let (f, rest) = (idx / (no * 2), idx % (no * 2));
                    let w = simple[[r, c, f, rest / 2, rest % 2]];
                    if w != 0.0 {
                        window.scaled_add(w, k);
                    }
                }
            }
        }
        Patch::raw(img)
    }
}

/// Quadrature energy and phase per cell: `e = √(s₀² + s₁²)`, `φ = atan2(s₁, s₀)`.
/// Zero-energy cells get phase 0.
pub fn v1_complex(simple: &V1Simple) -> (V1Complex, PhaseRecord) {
    let s0 = simple.index_axis(Axis(4), 0);
    let s1 = simple.index_axis(Axis(4), 1);
    let mut energy = Array4::zeros(s0.raw_dim());
    let mut phase = Array4::zeros(s0.raw_dim());
    Zip::from(&mut energy)
        .and(&mut phase)
        .and(&s0)
        .and(&s1)
        .for_each(|e, p, &a, &b| {
            *e = a.hypot(b);
            *p = if *e == 0.0 {
                0.0
            } else {
                let t = b.atan2(a);
                if t <= -PI {
                    PI
                } else {
                    t
                }
            };
        });
    (energy, phase)
}

/// Rebuild quadrature pairs from energies and recorded phases.
pub fn v1_complex_inverse(complex: &V1Complex, phases: &PhaseRecord) -> Result<V1Simple> {
    if complex.dim() != phases.dim() {
        return Err(Error::InvalidInput(format!(
            "energy shape {:?} differs from phase shape {:?}",
            complex.dim(),
            phases.dim()
        )));
    }
    let (a, b, c, d) = complex.dim();
    let mut out = Array5::zeros((a, b, c, d, 2));
    Zip::from(out.index_axis_mut(Axis(4), 0))
        .and(complex)
        .and(phases)
        .for_each(|s, &e, &p| *s = e * p.cos());
    Zip::from(out.index_axis_mut(Axis(4), 1))
        .and(complex)
        .and(phases)
        .for_each(|s, &e, &p| *s = e * p.sin());
    Ok(out)
}

/// Overwrite every channel of a `size`×`size` block of cells starting at
/// `origin = (row, col)` with `min(complex) − 1`. Size 0 is a no-op.
pub fn delete_region(complex: &V1Complex, origin: (usize, usize), size: usize) -> Result<V1Complex> {
    let (l0, l1, _, _) = complex.dim();
    if origin.0 + size > l0 || origin.1 + size > l1 {
        return Err(Error::InvalidInput(format!(
            "region at {origin:?} of size {size} exceeds the {l0}x{l1} grid"
        )));
    }
    let mut out = complex.clone();
    if size == 0 {
        return Ok(out);
    }
    let fill = complex.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    out.slice_mut(s![origin.0..origin.0 + size, origin.1..origin.1 + size, .., ..])
        .fill(fill);
    Ok(out)
}

/// Top-left cell of the centered `size`×`size` region of a `grid`×`grid` lattice.
pub fn centered_origin(grid: usize, size: usize) -> (usize, usize) {
    let o = grid.saturating_sub(size) / 2;
    (o, o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn bank() -> GaborBank {
        GaborBank::new(GaborConfig::default()).unwrap()
    }

    fn random_patch(seed: u64) -> Patch {
        let mut r = crate::rng::root(seed);
        Patch::raw(Array2::from_shape_fn((32, 32), |_| r.random_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn default_bank_has_72_unit_kernels() {
        let b = bank();
        assert_eq!(b.kernels().len(), 72);
        assert_eq!(b.grid(), 6);
        for k in b.kernels() {
            assert_eq!(k.dim(), (12, 12));
            let n: f64 = k.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9);
            assert!(k.sum().abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = GaborConfig::default();
        c.phases_deg = vec![0.0, 45.0];
        assert!(GaborBank::new(c).is_err());
        let mut c = GaborConfig::default();
        c.phases_deg = vec![0.0];
        assert!(GaborBank::new(c).is_err());
        assert!(GaborBank::new(GaborConfig::with_stride(3)).is_err());
        let mut c = GaborConfig::default();
        c.frequencies = vec![0.0];
        assert!(GaborBank::new(c).is_err());
        let mut c = GaborConfig::default();
        c.rf_size = 11;
        assert!(GaborBank::new(c).is_err());
    }

    #[test]
    fn grids_for_both_strides() {
        assert_eq!(GaborBank::new(GaborConfig::with_stride(2)).unwrap().grid(), 11);
        let s = bank().simple(&random_patch(1));
        assert_eq!(s.dim(), (6, 6, 3, 12, 2));
        assert_eq!(s.len(), 2592);
    }

    #[test]
    fn opposite_orientations_give_equal_energy() {
        let mut c = GaborConfig::default();
        c.orientations_deg = vec![30.0, 210.0];
        let b = GaborBank::new(c).unwrap();
        let cos_diff = &b.kernel(0, 0, 0) - &b.kernel(0, 1, 0);
        let sin_sum = &b.kernel(0, 0, 1) + &b.kernel(0, 1, 1);
        assert!(cos_diff.iter().all(|v| v.abs() < 1e-12));
        assert!(sin_sum.iter().all(|v| v.abs() < 1e-12));
        let (e, _) = v1_complex(&b.simple(&random_patch(2)));
        let a = e.index_axis(Axis(3), 0);
        let bb = e.index_axis(Axis(3), 1);
        Zip::from(&a).and(&bb).for_each(|x, y| assert!((x - y).abs() < 1e-12));
    }

    #[test]
    fn zero_and_constant_patches_give_zero_response() {
        let b = bank();
        assert!(b.simple(&Patch::zeros()).iter().all(|&v| v == 0.0));
        let flat = Patch::raw(Array2::from_elem((32, 32), 3.0)).unwrap();
        assert!(b.simple(&flat).iter().all(|v| v.abs() < 1e-12));
        let z = b.simple_inverse(&Array5::zeros((6, 6, 3, 12, 2))).unwrap();
        assert!(z.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn energy_phase_of_three_four_pair() {
        let mut s = Array5::zeros((1, 1, 1, 1, 2));
        s[[0, 0, 0, 0, 0]] = 3.0;
        s[[0, 0, 0, 0, 1]] = 4.0;
        let (e, p) = v1_complex(&s);
        assert_eq!(e[[0, 0, 0, 0]], 5.0);
        assert_eq!(p[[0, 0, 0, 0]], 4f64.atan2(3.0));
        let back = v1_complex_inverse(&e, &p).unwrap();
        assert!((back[[0, 0, 0, 0, 0]] - 3.0).abs() < 1e-12);
        assert!((back[[0, 0, 0, 0, 1]] - 4.0).abs() < 1e-12);
        let (e0, p0) = v1_complex(&Array5::zeros((1, 1, 1, 1, 2)));
        assert_eq!((e0[[0, 0, 0, 0]], p0[[0, 0, 0, 0]]), (0.0, 0.0));
    }

    #[test]
    fn phase_range_excludes_minus_pi() {
        let mut s = Array5::zeros((1, 1, 1, 1, 2));
        s[[0, 0, 0, 0, 0]] = -1.0;
        s[[0, 0, 0, 0, 1]] = -0.0;
        let (_, p) = v1_complex(&s);
        assert_eq!(p[[0, 0, 0, 0]], PI);
    }

    #[test]
    fn deletion_touches_only_selected_cells() {
        let (e, _) = v1_complex(&bank().simple(&random_patch(3)));
        let min = e.iter().cloned().fold(f64::INFINITY, f64::min);
        let d1 = delete_region(&e, (0, 0), 1).unwrap();
        let changed = Zip::from(&e).and(&d1).fold(0, |n, a, b| n + (a != b) as usize);
        assert_eq!(changed, 36);
        assert!(d1.slice(s![0, 0, .., ..]).iter().all(|&v| v == min - 1.0));
        let d2 = delete_region(&e, (2, 3), 2).unwrap();
        let changed = Zip::from(&e).and(&d2).fold(0, |n, a, b| n + (a != b) as usize);
        assert_eq!(changed, 144);
        assert!(delete_region(&e, (5, 5), 2).is_err());
        assert_eq!(delete_region(&e, (0, 0), 0).unwrap(), e);
        assert_eq!(centered_origin(6, 2), (2, 2));
        assert_eq!(centered_origin(11, 1), (5, 5));
    }

    #[test]
    fn zero_minimum_deletes_to_minus_one() {
        let mut e = Array4::from_elem((6, 6, 3, 12), 2.0);
        e[[4, 4, 0, 0]] = 0.0;
        let d = delete_region(&e, (1, 1), 1).unwrap();
        assert!(d.slice(s![1, 1, .., ..]).iter().all(|&v| v == -1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn simple_is_linear(seed in 0u64..1000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let b = bank();
            let (p, q) = (random_patch(seed), random_patch(seed + 1));
            let mix = Patch::raw(&p.data * alpha + &q.data * beta).unwrap();
            let lhs = b.simple(&mix);
            let rhs = b.simple(&p) * alpha + b.simple(&q) * beta;
            for (x, y) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((x - y).abs() <= 1e-10);
            }
        }

        #[test]
        fn adjoint_identity(seed in 0u64..1000, stride in prop::sample::select(vec![2usize, 4])) {
            let b = GaborBank::new(GaborConfig::with_stride(stride)).unwrap();
            let p = random_patch(seed);
            let mut r = crate::rng::root(seed ^ 0xabc);
            let l = b.grid();
            let s = Array5::from_shape_fn((l, l, 3, 12, 2), |_| r.random_range(-1.0..1.0));
            let lhs: f64 = Zip::from(&b.simple(&p)).and(&s).fold(0.0, |a, x, y| a + x * y);
            let back = b.simple_inverse(&s).unwrap();
            let rhs: f64 = Zip::from(&p.data).and(&back.data).fold(0.0, |a, x, y| a + x * y);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        }

        #[test]
        fn energy_is_rotation_invariant(s0 in -5.0f64..5.0, s1 in -5.0f64..5.0, delta in -3.0f64..3.0) {
            let mut a = Array5::zeros((1, 1, 1, 1, 2));
            a[[0, 0, 0, 0, 0]] = s0;
            a[[0, 0, 0, 0, 1]] = s1;
            let mut b = a.clone();
            b[[0, 0, 0, 0, 0]] = s0 * delta.cos() - s1 * delta.sin();
            b[[0, 0, 0, 0, 1]] = s0 * delta.sin() + s1 * delta.cos();
            let (ea, pa) = v1_complex(&a);
            let (eb, _) = v1_complex(&b);
            prop_assert!((ea[[0, 0, 0, 0]] - eb[[0, 0, 0, 0]]).abs() < 1e-12);
            prop_assert!(pa[[0, 0, 0, 0]] > -PI && pa[[0, 0, 0, 0]] <= PI);
            let back = v1_complex_inverse(&ea, &pa).unwrap();
            prop_assert!((back[[0, 0, 0, 0, 0]] - s0).abs() <= 1e-12);
            prop_assert!((back[[0, 0, 0, 0, 1]] - s1).abs() <= 1e-12);
        }
    }
}
