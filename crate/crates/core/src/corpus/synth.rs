//! Procedural desk corpora: occlusion ("dead leaves") scenes standing in for
//! natural images, and fifteen texture classes built from five structured
//! families at three scales each.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{ImageGray, TextureImage};
use crate::error::Result;
use crate::rng;

/// Box blur with a `(2r+1)`-wide kernel, clamped at the borders.
fn box_blur(img: &Array2<f64>, radius: usize) -> Array2<f64> {
    if radius == 0 {
        return img.clone();
    }
    let (h, w) = img.dim();
    let r = radius as isize;
    let pass = |src: &Array2<f64>, horizontal: bool| {
        Array2::from_shape_fn((h, w), |(y, x)| {
            let mut acc = 0.0;
            for d in -r..=r {
                let (yy, xx) = if horizontal {
                    (y as isize, (x as isize + d).clamp(0, w as isize - 1))
                } else {
                    ((y as isize + d).clamp(0, h as isize - 1), x as isize)
                };
                acc += src[[yy as usize, xx as usize]];
            }
            acc / (2 * r + 1) as f64
        })
    };
    pass(&pass(img, true), false)
}

fn add_noise(img: &mut Array2<f64>, sigma: f64, r: &mut rng::Rng) {
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    img.mapv_inplace(|v| v + normal.sample(r));
}

/// One occlusion scene: overlapping discs, ellipses and rectangles with
/// power-law sizes, shaded, lightly blurred and noised. Normalized.
pub fn dead_leaves(size: usize, seed: u64) -> Result<ImageGray> {
    let mut r = rng::root(seed);
    let mut img = Array2::from_elem((size, size), r.random_range(0.2..0.8));
    let (rmin, rmax) = (1.5f64, size as f64 / 3.0);
    let shapes = 12 * size;
    for _ in 0..shapes {
        // Inverse-CDF draw from p(r) ∝ r⁻³ on [rmin, rmax].
        let u: f64 = r.random();
        let inv = 1.0 / (rmin * rmin) - u * (1.0 / (rmin * rmin) - 1.0 / (rmax * rmax));
        let radius = inv.powf(-0.5);
        let cx = r.random_range(-radius..size as f64 + radius);
        let cy = r.random_range(-radius..size as f64 + radius);
        let theta: f64 = r.random_range(0.0..std::f64::consts::PI);
        let aspect = r.random_range(0.35..1.0);
        let kind = r.random_range(0..3);
        let base: f64 = r.random();
        let (gx, gy) = (r.random_range(-0.3..0.3) / radius, r.random_range(-0.3..0.3) / radius);
        let (ct, st) = (theta.cos(), theta.sin());
        let y0 = (cy - radius).floor().max(0.0) as usize;
        let y1 = ((cy + radius).ceil() as usize).min(size);
        let x0 = (cx - radius).floor().max(0.0) as usize;
        let x1 = ((cx + radius).ceil() as usize).min(size);
        for y in y0..y1 {
            for x in x0..x1 {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let u = dx * ct + dy * st;
                let v = -dx * st + dy * ct;
                let inside = match kind {
                    0 => dx * dx + dy * dy <= radius * radius,
                    1 => (u / radius).powi(2) + (v / (radius * aspect)).powi(2) <= 1.0,
                    _ => u.abs() <= radius * 0.8 && v.abs() <= radius * aspect * 0.8,
                };
                if inside {
                    img[[y, x]] = base + gx * dx + gy * dy;
                }
            }
        }
    }
    let mut img = box_blur(&img, 1);
    add_noise(&mut img, 0.01, &mut r);
    ImageGray::new(img)?.normalized()
}

/// `count` occlusion scenes of side `size`, seeded independently.
pub fn dead_leaves_corpus(count: usize, size: usize, seed: u64) -> Result<Vec<ImageGray>> {
    (0..count)
        .map(|i| dead_leaves(size, rng::derive(seed, &format!("leaves-{i}"))))
        .collect()
}

/// Texture families; each is rendered at three scales.
const FAMILIES: [&str; 5] = ["bricks", "dots", "strokes", "weave", "cells"];

pub fn texture_class_names() -> Vec<String> {
    FAMILIES
        .iter()
        .flat_map(|f| (0..3).map(move |s| format!("{f}-{s}")))
        .collect()
}

fn bricks(size: usize, scale: usize, r: &mut rng::Rng) -> Array2<f64> {
    let h = [6.0, 9.0, 13.0][scale];
    let w = 2.0 * h;
    let rows = (size as f64 / h).ceil() as usize + 1;
    let cols = (size as f64 / w).ceil() as usize + 2;
    let shade: Vec<f64> = (0..rows * cols).map(|_| r.random_range(0.55..0.95)).collect();
    let jitter = r.random_range(0.0..w);
    Array2::from_shape_fn((size, size), |(y, x)| {
        let row = (y as f64 / h).floor() as usize;
        let offset = if row % 2 == 0 { 0.0 } else { w / 2.0 } + jitter;
        let xs = x as f64 + offset;
        let col = (xs / w).floor() as usize;
        let (fy, fx) = (y as f64 - row as f64 * h, xs - col as f64 * w);
        if fy < 1.5 || fx < 1.5 {
            0.1
        } else {
            shade[(row * cols + col) % shade.len()]
        }
    })
}

fn dots(size: usize, scale: usize, r: &mut rng::Rng) -> Array2<f64> {
    let radius = [2.0, 3.5, 5.0][scale];
    let count = (0.35 * (size * size) as f64 / (std::f64::consts::PI * radius * radius)) as usize;
    let mut img = Array2::from_elem((size, size), 0.15);
    for _ in 0..count {
        let cx = r.random_range(0.0..size as f64);
        let cy = r.random_range(0.0..size as f64);
        let level = r.random_range(0.7..1.0);
        let span = radius.ceil() as isize + 1;
        for dy in -span..=span {
            for dx in -span..=span {
                let (x, y) = (cx as isize + dx, cy as isize + dy);
                if x < 0 || y < 0 || x >= size as isize || y >= size as isize {
                    continue;
                }
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                let cover = (radius + 0.5 - d).clamp(0.0, 1.0);
                let px = &mut img[[y as usize, x as usize]];
                *px = *px * (1.0 - cover) + level * cover;
            }
        }
    }
    img
}

fn strokes(size: usize, scale: usize, r: &mut rng::Rng) -> Array2<f64> {
    let orientation = [0.0f64, 60.0, 120.0][scale].to_radians();
    let count = size * size / 14;
    let mut img = Array2::from_elem((size, size), 0.2);
    for _ in 0..count {
        let theta = orientation + r.random_range(-0.25..0.25);
        let len = r.random_range(6.0..14.0);
        let cx = r.random_range(0.0..size as f64);
        let cy = r.random_range(0.0..size as f64);
        let level = r.random_range(0.5..1.0);
        let steps = (len * 2.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64 - 0.5;
            let x = (cx + t * len * theta.cos()).round() as isize;
            let y = (cy - t * len * theta.sin()).round() as isize;
            if x >= 0 && y >= 0 && (x as usize) < size && (y as usize) < size {
                img[[y as usize, x as usize]] = level;
            }
        }
    }
    img
}

fn weave(size: usize, scale: usize, r: &mut rng::Rng) -> Array2<f64> {
    let block = [8usize, 12, 16][scale];
    let strands = 3usize;
    let phase = r.random_range(0..block);
    Array2::from_shape_fn((size, size), |(y, x)| {
        let (y, x) = (y + phase, x + phase);
        let (by, bx) = (y / block, x / block);
        let horizontal = (by + bx) % 2 == 0;
        let along = if horizontal { y % block } else { x % block };
        let strand = along * strands / block;
        let within = (along * strands) % block;
        let edge = within < strands || strand == strands;
        let base = 0.45 + 0.15 * (strand as f64);
        if edge {
            0.1
        } else {
            base
        }
    })
}

fn cells(size: usize, scale: usize, r: &mut rng::Rng) -> Array2<f64> {
    let spacing = [10.0, 16.0, 24.0][scale];
    let n = ((size as f64 / spacing).powi(2) as usize).max(4);
    let seeds: Vec<(f64, f64, f64)> = (0..n)
        .map(|_| {
            (
                r.random_range(0.0..size as f64),
                r.random_range(0.0..size as f64),
                r.random_range(0.5..0.9),
            )
        })
        .collect();
    Array2::from_shape_fn((size, size), |(y, x)| {
        let (mut d1, mut d2, mut shade) = (f64::INFINITY, f64::INFINITY, 0.0);
        for &(sx, sy, s) in &seeds {
            let d = ((x as f64 - sx).powi(2) + (y as f64 - sy).powi(2)).sqrt();
            if d < d1 {
                d2 = d1;
                d1 = d;
                shade = s;
            } else if d < d2 {
                d2 = d;
            }
        }
        if d2 - d1 < 1.5 {
            0.1
        } else {
            shade
        }
    })
}

/// One texture image of class `label` (see [`texture_class_names`]).
pub fn texture(label: usize, size: usize, seed: u64) -> Result<ImageGray> {
    let mut r = rng::root(seed);
    let (family, scale) = (label / 3, label % 3);
    let mut img = match family {
        0 => bricks(size, scale, &mut r),
        1 => dots(size, scale, &mut r),
        2 => strokes(size, scale, &mut r),
        3 => weave(size, scale, &mut r),
        _ => cells(size, scale, &mut r),
    };
    add_noise(&mut img, 0.03, &mut r);
    ImageGray::new(img)?.normalized()
}

/// `per_class` images for each of the fifteen texture classes.
pub fn texture_corpus(per_class: usize, size: usize, seed: u64) -> Result<(Vec<TextureImage>, Vec<String>)> {
    let names = texture_class_names();
    let mut out = Vec::with_capacity(names.len() * per_class);
    for label in 0..names.len() {
        for k in 0..per_class {
            let image = texture(label, size, rng::derive(seed, &format!("texture-{label}-{k}")))?;
            out.push(TextureImage { image, label });
        }
    }
    Ok((out, names))
}
