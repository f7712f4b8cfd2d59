use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageReader};
use ndarray::Array2;

use super::{ImageGray, LabeledPatchSet, Patch, TextureImage, PATCH_SIZE};
use crate::error::{Error, Result};

const IMAGE_EXTENSIONS: &[&str] = &["png", "pgm"];

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn decode(path: &Path) -> Result<DynamicImage> {
    ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::io(path, e))
}

/// Read one image as grayscale intensities. Color images are reduced by the
/// unweighted mean of their RGB channels; alpha is ignored.
pub fn load_image(path: &Path) -> Result<ImageGray> {
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = if img.color().has_color() {
        let rgb = img.to_rgb32f();
        Array2::from_shape_fn((h, w), |(r, c)| {
            let p = rgb.get_pixel(c as u32, r as u32).0;
            (p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0
        })
    } else {
        let luma = img.to_luma32f();
        Array2::from_shape_fn((h, w), |(r, c)| luma.get_pixel(c as u32, r as u32).0[0] as f64)
    };
    ImageGray::new(data).map_err(|e| Error::io(path, e))
}

/// Image files of a directory in filename order.
/// PNG and PGM files directly inside `dir`, sorted by name.
pub fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    files.sort();
    Ok(files)
}

/// Load every PNG/PGM image in `dir`, each normalized to zero mean and unit
/// variance.
pub fn load_images(dir: &Path) -> Result<Vec<ImageGray>> {
    let files = image_files(dir)?;
    if files.is_empty() {
        return Err(Error::io(dir, "directory contains no PNG or PGM images"));
    }
    files
        .iter()
        .map(|p| load_image(p)?.normalized().map_err(|e| Error::io(p, e)))
        .collect()
}

/// Read a figure-ground label map; raw sample values are the side codes.
pub fn load_label_map(path: &Path) -> Result<Array2<u16>> {
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => Ok(Array2::from_shape_fn((h, w), |(r, c)| {
            buf.get_pixel(c as u32, r as u32).0[0] as u16
        })),
        DynamicImage::ImageLuma16(buf) => Ok(Array2::from_shape_fn((h, w), |(r, c)| {
            buf.get_pixel(c as u32, r as u32).0[0]
        })),
        _ => Err(Error::io(path, "label map must be a single-channel image")),
    }
}

/// Write an 8-bit binary PGM (P5).
pub fn save_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::dims(width * height, pixels.len(), "PGM pixel count"));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write!(f, "P5\n{width} {height}\n255\n").map_err(|e| Error::io(path, e))?;
    f.write_all(pixels).map_err(|e| Error::io(path, e))
}

/// Affine map of a patch onto 0..=255 (min to 0, max to 255).
pub(crate) fn to_u8(data: &Array2<f64>) -> Vec<u8> {
    let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    data.iter()
        .map(|v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Save an image as 8-bit PGM, min/max-stretched.
pub fn save_image(path: &Path, image: &ImageGray) -> Result<()> {
    save_pgm(path, image.width(), image.height(), &to_u8(&image.data))
}

/// Load a texture corpus laid out as one subdirectory per class; class
/// names are the subdirectory names in sorted order.
pub fn load_texture_dir(dir: &Path) -> Result<(Vec<TextureImage>, Vec<String>)> {
    let mut classes: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    classes.sort();
    if classes.is_empty() {
        return Err(Error::io(dir, "expected one subdirectory per texture class"));
    }
    let mut textures = Vec::new();
    let mut names = Vec::new();
    for (label, class_dir) in classes.iter().enumerate() {
        names.push(class_dir.file_name().unwrap_or_default().to_string_lossy().into_owned());
        for image in load_images(class_dir)? {
            textures.push(TextureImage { image, label });
        }
    }
    Ok((textures, names))
}

/// Inverse of [`load_texture_dir`].
pub fn save_texture_dir(dir: &Path, textures: &[TextureImage], class_names: &[String]) -> Result<()> {
    let mut counts = vec![0usize; class_names.len()];
    for t in textures {
        let name = class_names
            .get(t.label)
            .ok_or_else(|| Error::InvalidInput(format!("texture label {} has no class name", t.label)))?;
        let class_dir = dir.join(name);
        fs::create_dir_all(&class_dir).map_err(|e| Error::io(&class_dir, e))?;
        save_image(&class_dir.join(format!("{:03}.pgm", counts[t.label])), &t.image)?;
        counts[t.label] += 1;
    }
    Ok(())
}

/// Write a labelled patch set as numbered PGM files plus `manifest.csv`
/// with `filename,label` rows. Intensities are min/max-stretched to 8 bits,
/// which patch normalization undoes on reload up to quantization.
pub fn export_patch_set(set: &LabeledPatchSet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = dir.join("manifest.csv");
    let mut w = csv::Writer::from_path(&manifest).map_err(|e| Error::io(&manifest, e))?;
    w.write_record(["filename", "label"]).map_err(|e| Error::io(&manifest, e))?;
    let digits = set.len().max(1).to_string().len();
    for (i, (p, &label)) in set.patches.iter().zip(&set.labels).enumerate() {
        let name = format!("{i:0digits$}.pgm");
        save_pgm(&dir.join(&name), PATCH_SIZE, PATCH_SIZE, &to_u8(&p.data))?;
        w.write_record([name.as_str(), set.class_names[label].as_str()])
            .map_err(|e| Error::io(&manifest, e))?;
    }
    w.flush().map_err(|e| Error::io(&manifest, e))
}

/// Read a directory of 32×32 patch images. When `manifest.csv` exists its
/// row order and labels are used; otherwise files are taken in name order.
/// Returns the normalized patches, their names and, if present, the label
/// strings.
pub fn load_patch_dir(dir: &Path) -> Result<(Vec<Patch>, Vec<String>, Option<Vec<String>>)> {
    let manifest = dir.join("manifest.csv");
    let (names, labels) = if manifest.exists() {
        let mut r = csv::Reader::from_path(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let mut names = Vec::new();
        let mut labels = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::io(&manifest, e))?;
            names.push(rec.get(0).unwrap_or_default().to_string());
            labels.push(rec.get(1).unwrap_or_default().to_string());
        }
        (names, Some(labels))
    } else {
        let names = image_files(dir)?
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect();
        (names, None)
    };
    let patches = names
        .iter()
        .map(|name| {
            let path = dir.join(name);
            let img = load_image(&path)?;
            Patch::normalize(img.data.view(), None).map_err(|e| Error::io(&path, e))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((patches, names, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, Luma, Rgb, RgbImage};

    #[test]
    fn loads_png_and_pgm_sorted_and_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let mut g = GrayImage::new(40, 36);
        for (x, y, p) in g.enumerate_pixels_mut() {
            *p = Luma([((x * 5 + y * 3) % 256) as u8]);
        }
        g.save(dir.path().join("b.png")).unwrap();
        let mut c = RgbImage::new(33, 33);
        for (x, y, p) in c.enumerate_pixels_mut() {
            *p = Rgb([x as u8, y as u8, 100]);
        }
        c.save(dir.path().join("a.png")).unwrap();
        let pix: Vec<u8> = (0..(50 * 40)).map(|i| (i % 200) as u8).collect();
        save_pgm(&dir.path().join("c.pgm"), 50, 40, &pix).unwrap();
        fs::write(dir.path().join("notes.txt"), "skip").unwrap();

        let imgs = load_images(dir.path()).unwrap();
        assert_eq!(imgs.len(), 3);
        assert_eq!((imgs[0].width(), imgs[0].height()), (33, 33));
        assert_eq!((imgs[2].width(), imgs[2].height()), (50, 40));
        for img in &imgs {
            let (m, v) = super::super::mean_var(img.data.view());
            assert!(m.abs() < 1e-9 && (v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rgb_uses_unweighted_channel_mean() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RgbImage::new(2, 1);
        c.put_pixel(0, 0, Rgb([255, 0, 0]));
        c.put_pixel(1, 0, Rgb([0, 0, 255]));
        let path = dir.path().join("x.png");
        c.save(&path).unwrap();
        let img = load_image(&path).unwrap();
        assert!((img.data[[0, 0]] - img.data[[0, 1]]).abs() < 1e-7);
    }

    #[test]
    fn empty_and_broken_inputs_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_images(dir.path()).is_err());
        fs::write(dir.path().join("bad.png"), b"not an image").unwrap();
        let err = load_images(dir.path()).unwrap_err();
        assert!(err.to_string().contains("bad.png"));
    }

    #[test]
    fn label_map_keeps_raw_codes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.pgm");
        save_pgm(&path, 3, 1, &[0, 1, 2]).unwrap();
        let map = load_label_map(&path).unwrap();
        assert_eq!(map.row(0).to_vec(), vec![0, 1, 2]);
    }

    #[test]
    fn texture_dir_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let names = vec!["grass".to_string(), "bark".to_string()];
        let mk = |k: usize| ImageGray::new(Array2::from_shape_fn((40, 40), |(r, c)| ((r * k + c) % 7) as f64)).unwrap();
        let textures = vec![
            TextureImage { image: mk(1), label: 0 },
            TextureImage { image: mk(2), label: 1 },
            TextureImage { image: mk(3), label: 0 },
        ];
        save_texture_dir(dir.path(), &textures, &names).unwrap();
        let (back, back_names) = load_texture_dir(dir.path()).unwrap();
        // Classes come back in sorted order.
        assert_eq!(back_names, vec!["bark", "grass"]);
        let labels: Vec<usize> = back.iter().map(|t| t.label).collect();
        assert_eq!(labels, vec![0, 1, 1]);
        assert!(back.iter().all(|t| t.image.width() == 40 && t.image.height() == 40));
        let bad = [TextureImage { image: mk(1), label: 5 }];
        assert!(save_texture_dir(dir.path(), &bad, &names).is_err());
    }
}
