//! Image ingestion, patch sampling and the labelled stimulus sets.

mod io;
mod lines;
pub mod synth;

use ndarray::{s, Array2, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub(crate) use io::to_u8;
pub use io::{
    export_patch_set, image_files, load_image, load_images, load_label_map, load_patch_dir, load_texture_dir, save_image,
    save_pgm, save_texture_dir,
};
pub use lines::{gen_line_stimuli, LINE_ANGLES_DEG, LINE_LENGTHS, LINE_ROTATIONS_DEG};

/// Side length of every model input patch.
pub const PATCH_SIZE: usize = 32;

/// Candidate windows whose variance falls below this are treated as low contrast.
pub const LOW_CONTRAST_VARIANCE: f64 = 0.32;

/// A grayscale image, row-major `(height, width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray {
    pub data: Array2<f64>,
}

impl ImageGray {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("image contains non-finite values".into()));
        }
        Ok(ImageGray { data })
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn height(&self) -> usize {
        self.data.nrows()
    }

    /// Whether a full patch window fits inside the image.
    pub fn admits_patch(&self) -> bool {
        self.width() >= PATCH_SIZE && self.height() >= PATCH_SIZE
    }

    /// Zero-mean, unit-variance copy. Constant images cannot be normalized.
    pub fn normalized(&self) -> Result<ImageGray> {
        let (mean, var) = mean_var(self.data.view());
        if var <= 0.0 || !var.is_finite() {
            return Err(Error::Data("image has zero variance and cannot be normalized".into()));
        }
        let sd = var.sqrt();
        Ok(ImageGray {
            data: self.data.mapv(|v| (v - mean) / sd),
        })
    }

    pub fn window(&self, row: usize, col: usize) -> ArrayView2<'_, f64> {
        self.data
            .slice(s![row..row + PATCH_SIZE, col..col + PATCH_SIZE])
    }
}

/// Where a patch was cut from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchMeta {
    pub source: usize,
    pub row: usize,
    pub col: usize,
}

/// A normalized `PATCH_SIZE`×`PATCH_SIZE` model input.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub data: Array2<f64>,
    pub meta: Option<PatchMeta>,
}

impl Patch {
    /// Mean-subtract and variance-normalize a raw window.
    pub fn normalize(raw: ArrayView2<f64>, meta: Option<PatchMeta>) -> Result<Patch> {
        if raw.dim() != (PATCH_SIZE, PATCH_SIZE) {
            return Err(Error::InvalidInput(format!(
                "patch must be {PATCH_SIZE}x{PATCH_SIZE}, got {:?}",
                raw.dim()
            )));
        }
        let (mean, var) = mean_var(raw);
        if var <= 0.0 || !var.is_finite() {
            return Err(Error::Data("patch has zero variance".into()));
        }
        let sd = var.sqrt();
        Ok(Patch {
            data: raw.mapv(|v| (v - mean) / sd),
            meta,
        })
    }

    /// A patch taken as-is, without normalization (e.g. model reconstructions).
    pub fn raw(data: Array2<f64>) -> Result<Patch> {
        if data.dim() != (PATCH_SIZE, PATCH_SIZE) {
            return Err(Error::InvalidInput(format!(
                "patch must be {PATCH_SIZE}x{PATCH_SIZE}, got {:?}",
                data.dim()
            )));
        }
        Ok(Patch { data, meta: None })
    }

    pub fn zeros() -> Patch {
        Patch {
            data: Array2::zeros((PATCH_SIZE, PATCH_SIZE)),
            meta: None,
        }
    }
}

/// Patches paired with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPatchSet {
    pub patches: Vec<Patch>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl LabeledPatchSet {
    pub fn new(patches: Vec<Patch>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if patches.len() != labels.len() {
            return Err(Error::dims(patches.len(), labels.len(), "labels per patch"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::InvalidInput(format!(
                "label {bad} outside 0..{}",
                class_names.len()
            )));
        }
        Ok(LabeledPatchSet {
            patches,
            labels,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_names.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Population mean and variance.
pub(crate) fn mean_var(a: ArrayView2<f64>) -> (f64, f64) {
    let n = a.len() as f64;
    let mean = a.sum() / n;
    let var = a.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

fn random_window(rng: &mut rng::Rng, image: &ImageGray) -> (usize, usize) {
    let row = rng.random_range(0..=image.height() - PATCH_SIZE);
    let col = rng.random_range(0..=image.width() - PATCH_SIZE);
    (row, col)
}

/// Draw `n` normalized patches, rejecting low-contrast windows.
///
/// Images are expected to be normalized already (see [`load_images`]); the
/// contrast test runs on the window before patch normalization. Draw `j`
/// uses its own random stream, so the result depends only on
/// `(images, n, seed)`.
pub fn sample_patches(images: &[ImageGray], n: usize, seed: u64) -> Result<Vec<Patch>> {
    if n == 0 {
        return Err(Error::InvalidInput("patch count must be at least 1".into()));
    }
    let eligible: Vec<usize> = (0..images.len()).filter(|&i| images[i].admits_patch()).collect();
    if eligible.is_empty() {
        return Err(Error::Data(format!(
            "no image admits a {PATCH_SIZE}x{PATCH_SIZE} window"
        )));
    }
    let max_draws = 10 * n;
    let mut patches = Vec::with_capacity(n);
    let mut draws = 0;
    while patches.len() < n && draws < max_draws {
        let mut r = rng::stream(seed, draws as u64);
        draws += 1;
        let source = eligible[r.random_range(0..eligible.len())];
        let (row, col) = random_window(&mut r, &images[source]);
        let window = images[source].window(row, col);
        let (_, var) = mean_var(window);
        if var < LOW_CONTRAST_VARIANCE {
            continue;
        }
        patches.push(Patch::normalize(window, Some(PatchMeta { source, row, col }))?);
    }
    if patches.len() < n {
        return Err(Error::Data(format!(
            "only {} of {n} patches accepted after {draws} draws (acceptance rate {:.4})",
            patches.len(),
            patches.len() as f64 / draws as f64
        )));
    }
    Ok(patches)
}

/// Figure-ground label-map codes.
pub const LABEL_NONE: u16 = 0;
pub const LABEL_FIGURE_LEFT: u16 = 1;
pub const LABEL_FIGURE_RIGHT: u16 = 2;

/// Figure-ground sample plus bookkeeping about skipped windows.
#[derive(Debug, Clone)]
pub struct FigureGroundSet {
    pub set: LabeledPatchSet,
    /// Windows skipped because they contained both side codes.
    pub ambiguous: usize,
    /// Windows skipped because they contained no contour.
    pub empty: usize,
}

/// Sample figure-ground patches labelled by the side code of the contour
/// pixels inside each window.
pub fn load_figure_ground(
    images: &[ImageGray],
    label_maps: &[Array2<u16>],
    n: usize,
    seed: u64,
) -> Result<FigureGroundSet> {
    if images.len() != label_maps.len() {
        return Err(Error::dims(images.len(), label_maps.len(), "label maps per image"));
    }
    for (i, (img, map)) in images.iter().zip(label_maps).enumerate() {
        if img.data.dim() != map.dim() {
            return Err(Error::InvalidInput(format!(
                "label map {i} is {:?} but image is {:?}",
                map.dim(),
                img.data.dim()
            )));
        }
    }
    let eligible: Vec<usize> = (0..images.len()).filter(|&i| images[i].admits_patch()).collect();
    if n == 0 || eligible.is_empty() {
        return Err(Error::Data("no labeled windows available".into()));
    }
    let max_draws = 10 * n;
    let (mut patches, mut labels) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut ambiguous, mut empty, mut draws) = (0, 0, 0);
    while patches.len() < n && draws < max_draws {
        let mut r = rng::stream(seed, draws as u64);
        draws += 1;
        let source = eligible[r.random_range(0..eligible.len())];
        let (row, col) = random_window(&mut r, &images[source]);
        let region = label_maps[source].slice(s![row..row + PATCH_SIZE, col..col + PATCH_SIZE]);
        let left = region.iter().filter(|&&c| c == LABEL_FIGURE_LEFT).count();
        let right = region.iter().filter(|&&c| c == LABEL_FIGURE_RIGHT).count();
        let label = match (left > 0, right > 0) {
            (false, false) => {
                empty += 1;
                continue;
            }
            (true, true) => {
                ambiguous += 1;
                continue;
            }
            (true, false) => 0,
            (false, true) => 1,
        };
        match Patch::normalize(images[source].window(row, col), Some(PatchMeta { source, row, col })) {
            Ok(p) => {
                patches.push(p);
                labels.push(label);
            }
            Err(_) => continue,
        }
    }
    if patches.is_empty() {
        return Err(Error::Data("no labeled windows available".into()));
    }
    if patches.len() < n {
        return Err(Error::Data(format!(
            "only {} of {n} labeled windows found in {draws} draws",
            patches.len()
        )));
    }
    if ambiguous > 0 {
        log::info!("figure-ground: skipped {ambiguous} windows with both side codes");
    }
    let set = LabeledPatchSet::new(
        patches,
        labels,
        vec!["figure-left".into(), "figure-right".into()],
    )?;
    Ok(FigureGroundSet {
        set,
        ambiguous,
        empty,
    })
}

/// A texture source image with its class id.
#[derive(Debug, Clone)]
pub struct TextureImage {
    pub image: ImageGray,
    pub label: usize,
}

/// Draw `n` texture patches balanced across classes. Patch `j` belongs to
/// class `j mod classes`; offsets are recorded in the patch metadata so
/// matched noise patches can be cut at the same places.
pub fn sample_texture_patches(
    textures: &[TextureImage],
    class_names: &[String],
    n: usize,
    seed: u64,
) -> Result<LabeledPatchSet> {
    let classes = class_names.len();
    if classes < 2 {
        return Err(Error::InvalidInput(format!(
            "texture sampling needs at least 2 classes, got {classes}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, t) in textures.iter().enumerate() {
        if t.label >= classes {
            return Err(Error::InvalidInput(format!("texture {i} has label {} >= {classes}", t.label)));
        }
        if t.image.admits_patch() {
            by_class[t.label].push(i);
        }
    }
    if let Some(c) = by_class.iter().position(|v| v.is_empty()) {
        return Err(Error::Data(format!("texture class '{}' has no usable image", class_names[c])));
    }
    let mut patches = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for j in 0..n {
        let class = j % classes;
        let mut r = rng::stream(seed, j as u64);
        let pool = &by_class[class];
        let source = pool[r.random_range(0..pool.len())];
        let image = &textures[source].image;
        // Flat windows cannot be normalized; redraw a bounded number of times.
        let mut accepted = None;
        for _ in 0..100 {
            let (row, col) = random_window(&mut r, image);
            if let Ok(p) = Patch::normalize(image.window(row, col), Some(PatchMeta { source, row, col })) {
                accepted = Some(p);
                break;
            }
        }
        let patch = accepted.ok_or_else(|| {
            Error::Data(format!("texture image {source} has no window with nonzero variance"))
        })?;
        patches.push(patch);
        labels.push(class);
    }
    LabeledPatchSet::new(patches, labels, class_names.to_vec())
}

/// Cut and normalize the window at `meta` from `image`.
pub fn cut_patch(image: &ImageGray, row: usize, col: usize) -> Result<Patch> {
    if row + PATCH_SIZE > image.height() || col + PATCH_SIZE > image.width() {
        return Err(Error::InvalidInput(format!(
            "window at ({row}, {col}) exceeds {}x{} image",
            image.height(),
            image.width()
        )));
    }
    Patch::normalize(image.window(row, col), None)
}
