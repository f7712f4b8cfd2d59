//! Loading experiment inputs from disk.

use std::path::{Path, PathBuf};

use clap::Args;
use v2model::corpus::{
    self, gen_line_stimuli, image_files, load_figure_ground, load_images, load_label_map, load_patch_dir,
    sample_patches, sample_texture_patches, LabeledPatchSet, Patch,
};
use v2model::{rng, Error, Result};

/// Patches either read from a directory or sampled from images.
#[derive(Debug, Args, Clone)]
pub struct PatchInput {
    /// Directory of 32×32 patch images (with optional manifest.csv).
    #[arg(long, conflicts_with = "images")]
    pub patch_dir: Option<PathBuf>,
    /// Directory of natural images to sample patches from.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Number of patches sampled from `--images`.
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
}

/// Like [`PatchInput`] but entirely optional.
#[derive(Debug, Args, Clone)]
pub struct OptionalPatchInput {
    #[arg(long, conflicts_with = "images")]
    pub patch_dir: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
}

const FETCH_HINT: &str = "supply --patch-dir or --images (any directory of PNG/PGM photographs; \
`v2model synth --out DIR` writes a procedural stand-in)";

fn missing(what: &str, path: &Path) -> Error {
    Error::Data(format!(
        "{what} not found at {}; run `v2model synth --out DIR` for a procedural corpus or point at real data",
        path.display()
    ))
}

fn existing(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(missing(what, path))
    }
}

/// Patches with a name per row.
pub fn load_patches(dir: Option<&Path>, images: Option<&Path>, count: usize, seed: u64) -> Result<(Vec<Patch>, Vec<String>)> {
    if let Some(dir) = dir {
        existing(dir, "patch directory")?;
        let (patches, names, _) = load_patch_dir(dir)?;
        return Ok((patches, names));
    }
    let Some(images) = images else {
        return Err(Error::Data(format!("no patches given; {FETCH_HINT}")));
    };
    existing(images, "image directory")?;
    let imgs = load_images(images)?;
    let patches = sample_patches(&imgs, count, rng::derive(seed, "patches"))?;
    let names = patches
        .iter()
        .map(|p| match p.meta {
            Some(m) => format!("image{}-r{}-c{}", m.source, m.row, m.col),
            None => String::new(),
        })
        .collect();
    Ok((patches, names))
}

impl PatchInput {
    pub fn load(&self, seed: u64) -> Result<(Vec<Patch>, Vec<String>)> {
        load_patches(self.patch_dir.as_deref(), self.images.as_deref(), self.count, seed)
    }
}

impl OptionalPatchInput {
    pub fn load(&self, seed: u64) -> Result<Option<Vec<Patch>>> {
        if self.patch_dir.is_none() && self.images.is_none() {
            return Ok(None);
        }
        Ok(Some(load_patches(self.patch_dir.as_deref(), self.images.as_deref(), self.count, seed)?.0))
    }
}

/// Classification task selection.
#[derive(Debug, Args, Clone)]
pub struct TaskInput {
    /// lines, texture or figure-ground.
    #[arg(long)]
    pub task: String,
    /// Texture corpus (texture task).
    #[arg(long)]
    pub textures: Option<PathBuf>,
    /// Images with contours (figure-ground task).
    #[arg(long)]
    pub fg_images: Option<PathBuf>,
    /// Label maps with the same file names as `--fg-images`.
    #[arg(long)]
    pub fg_labels: Option<PathBuf>,
    /// Patches to sample for texture and figure-ground tasks.
    #[arg(long, default_value_t = 1500)]
    pub count: usize,
}

impl TaskInput {
    pub fn load(&self, seed: u64) -> Result<LabeledPatchSet> {
        match self.task.as_str() {
            "lines" => gen_line_stimuli(),
            "texture" => {
                let dir = self
                    .textures
                    .as_deref()
                    .ok_or_else(|| Error::Data("texture task needs --textures DIR".into()))?;
                let (tex, names) = load_textures(dir)?;
                sample_texture_patches(&tex, &names, self.count, rng::derive(seed, "texture-patches"))
            }
            "figure-ground" => {
                let (Some(imgs), Some(labels)) = (self.fg_images.as_deref(), self.fg_labels.as_deref()) else {
                    return Err(Error::Data(
                        "figure-ground task needs --fg-images and --fg-labels (label maps: 0 none, 1 figure left, 2 figure right)"
                            .into(),
                    ));
                };
                existing(imgs, "figure-ground images")?;
                existing(labels, "figure-ground label maps")?;
                let images = load_images(imgs)?;
                let maps = image_files(imgs)?
                    .iter()
                    .map(|p| load_label_map(&labels.join(p.file_name().unwrap_or_default())))
                    .collect::<Result<Vec<_>>>()?;
                let fg = load_figure_ground(&images, &maps, self.count, rng::derive(seed, "figure-ground"))?;
                log::info!("figure-ground: {} ambiguous and {} empty windows skipped", fg.ambiguous, fg.empty);
                Ok(fg.set)
            }
            other => Err(Error::InvalidInput(format!(
                "unknown task '{other}', expected lines, texture or figure-ground"
            ))),
        }
    }
}

pub fn load_textures(dir: &Path) -> Result<(Vec<corpus::TextureImage>, Vec<String>)> {
    existing(dir, "texture directory")?;
    corpus::load_texture_dir(dir)
}
