//! Static figures: oval glyphs for units, max-activating patch grids, box
//! plots and log-count histograms. Every renderer returns the file contents
//! so output is a pure function of the input.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::ArrayView1;

use crate::corpus::{save_pgm, to_u8, Patch, PATCH_SIZE};
use crate::error::{Error, Result};
use crate::frontend::V1Complex;
use crate::metrics::BoxSummary;

/// Normalized magnitudes below this are not drawn.
pub const VISIBILITY_FLOOR: f64 = 0.02;
/// Receptive field size assumed when placing grid centers.
const RF_SIZE: f64 = 12.0;
const SCALE: f64 = 10.0;

pub fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// One drawable oval.
#[derive(Debug, Clone, PartialEq)]
pub struct Glyph {
    pub row: usize,
    pub col: usize,
    pub freq: usize,
    pub orient: usize,
    /// |value| over the unit's max |value|.
    pub opacity: f64,
    pub excitatory: bool,
}

/// Ovals to draw for a backprojected unit, in (row, col, freq, orient) order.
pub fn glyphs(unit: &V1Complex) -> Result<Vec<Glyph>> {
    if unit.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("unit pattern contains NaN".into()));
    }
    let max = unit.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return Ok(Vec::new());
    }
    Ok(unit
        .indexed_iter()
        .filter_map(|((row, col, freq, orient), &v)| {
            let opacity = v.abs() / max;
            (opacity >= VISIBILITY_FLOOR).then_some(Glyph {
                row,
                col,
                freq,
                orient,
                opacity,
                excitatory: v > 0.0,
            })
        })
        .collect())
}

fn cell_center(index: usize, grid: usize) -> f64 {
    let span = PATCH_SIZE as f64 - RF_SIZE;
    let stride = if grid > 1 { span / (grid - 1) as f64 } else { 0.0 };
    let offset = if grid > 1 { 0.0 } else { span / 2.0 };
    offset + RF_SIZE / 2.0 + index as f64 * stride
}

/// SVG of a unit's complex-cell pattern: red ovals excite, blue inhibit,
/// larger ovals are lower frequencies, long axes follow the orientation.
pub fn render_unit(unit: &V1Complex, frequencies: &[f64], orientations_deg: &[f64]) -> Result<String> {
    let (l, l2, nf, no) = unit.dim();
    if l != l2 || nf != frequencies.len() || no != orientations_deg.len() {
        return Err(Error::InvalidInput(format!(
            "unit shape {:?} does not match {} frequencies × {} orientations",
            unit.dim(),
            frequencies.len(),
            orientations_deg.len()
        )));
    }
    let size = PATCH_SIZE as f64 * SCALE;
    let mut s = svg_open(size, size);
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{size}" height="{size}" fill="white" stroke="black"/>"#);
    for g in glyphs(unit)? {
        let cx = cell_center(g.col, l) * SCALE;
        let cy = cell_center(g.row, l) * SCALE;
        let rx = RF_SIZE / (4.0 * frequencies[g.freq]) * SCALE;
        let ry = rx / 3.0;
        let color = if g.excitatory { "#d62728" } else { "#1f77b4" };
        let _ = writeln!(
            s,
            r#"<ellipse cx="{cx:.2}" cy="{cy:.2}" rx="{rx:.2}" ry="{ry:.2}" transform="rotate({:.2} {cx:.2} {cy:.2})" fill="{color}" fill-opacity="{:.4}"/>"#,
            -orientations_deg[g.orient],
            g.opacity
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    )
}

/// Indices of the `top_k` patches with the largest positive response,
/// strongest first; ties keep patch order.
pub fn top_patches(responses: ArrayView1<f64>, top_k: usize) -> Vec<(usize, f64)> {
    let mut idx: Vec<(usize, f64)> = responses
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, v)| *v > 0.0)
        .collect();
    idx.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    idx.truncate(top_k);
    idx
}

/// Tile patches left to right with a 2-pixel gap, each stretched to 0..255.
/// Returns `(width, height, pixels)`.
pub fn patch_strip(patches: &[&Patch]) -> (usize, usize, Vec<u8>) {
    const GAP: usize = 2;
    let n = patches.len();
    let width = if n == 0 { 0 } else { n * PATCH_SIZE + (n - 1) * GAP };
    let mut px = vec![255u8; width * PATCH_SIZE];
    for (k, p) in patches.iter().enumerate() {
        let tile = to_u8(&p.data);
        let x0 = k * (PATCH_SIZE + GAP);
        for r in 0..PATCH_SIZE {
            px[r * width + x0..r * width + x0 + PATCH_SIZE].copy_from_slice(&tile[r * PATCH_SIZE..(r + 1) * PATCH_SIZE]);
        }
    }
    (width, PATCH_SIZE, px)
}

/// Save the strongest patches for one unit; returns the selection, which is
/// empty when the unit never responded (nothing is written then).
pub fn render_max_patches(
    responses: ArrayView1<f64>,
    patches: &[Patch],
    top_k: usize,
    path: &Path,
) -> Result<Vec<(usize, f64)>> {
    if responses.len() != patches.len() {
        return Err(Error::dims(patches.len(), responses.len(), "responses vs patches"));
    }
    let sel = top_patches(responses, top_k);
    if !sel.is_empty() {
        let chosen: Vec<&Patch> = sel.iter().map(|&(i, _)| &patches[i]).collect();
        let (w, h, px) = patch_strip(&chosen);
        save_pgm(path, w, h, &px)?;
    }
    Ok(sel)
}

fn log_axis(v: f64) -> f64 {
    v.max(1e-12).log10()
}

/// Box plots of labeled value lists on a log10 value axis when all values
/// are positive, a linear one otherwise.
pub fn render_box_plot(groups: &[(String, Vec<f64>)]) -> Result<String> {
    let summaries: Vec<(&str, BoxSummary)> = groups
        .iter()
        .map(|(name, v)| {
            BoxSummary::of(v)
                .map(|b| (name.as_str(), b))
                .ok_or_else(|| Error::InvalidInput(format!("group '{name}' is empty or non-finite")))
        })
        .collect::<Result<_>>()?;
    let log = groups.iter().all(|(_, v)| v.iter().all(|&x| x > 0.0));
    let tf = |v: f64| if log { log_axis(v) } else { v };
    let lo = summaries.iter().map(|(_, b)| tf(b.min)).fold(f64::INFINITY, f64::min);
    let hi = summaries.iter().map(|(_, b)| tf(b.max)).fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (w, h, margin) = (120.0 * summaries.len().max(1) as f64 + 80.0, 400.0, 40.0);
    let y = |v: f64| h - margin - (tf(v) - lo) / span * (h - 2.0 * margin);
    let mut s = svg_open(w, h);
    let _ = writeln!(s, r#"<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{:.2}" stroke="black"/>"#, h - margin);
    let _ = writeln!(
        s,
        r#"<text x="4" y="20" font-size="12">{}</text>"#,
        if log { "log10 value" } else { "value" }
    );
    for (i, (name, b)) in summaries.iter().enumerate() {
        let cx = margin + 60.0 + 120.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y(b.whisker_low),
            y(b.whisker_high)
        );
        let (top, bottom) = (y(b.q3), y(b.q1));
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{top:.2}" width="60" height="{:.2}" fill="lightgray" stroke="black"/>"#,
            cx - 30.0,
            bottom - top
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            cx - 30.0,
            y(b.median),
            cx + 30.0,
            y(b.median)
        );
        for &o in &b.outliers {
            let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{:.2}" r="3" fill="none" stroke="black"/>"#, y(o));
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
            cx,
            h - 12.0,
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Counts of exact zeros and of positive values in equal-width bins over
/// `(0, max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub zeros: usize,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn histogram(values: &[f64], bins: usize, max: f64) -> Result<Histogram> {
    if bins == 0 || !(max > 0.0) {
        return Err(Error::InvalidInput("histogram needs bins > 0 and a positive range".into()));
    }
    if values.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidInput("histogram values must be nonnegative".into()));
    }
    let width = max / bins as f64;
    let edges = (0..=bins).map(|i| i as f64 * width).collect();
    let mut counts = vec![0; bins];
    let mut zeros = 0;
    for &v in values {
        if v == 0.0 {
            zeros += 1;
        } else {
            counts[((v / width) as usize).min(bins - 1)] += 1;
        }
    }
    Ok(Histogram { zeros, edges, counts })
}

/// Log10-count bars per model with the zero mass as a separate bar on the
/// left; empty bins are left blank.
pub fn render_log_histogram(models: &[(String, Vec<f64>)], bins: usize) -> Result<String> {
    let max = models
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(0.0f64, f64::max);
    let range = if max > 0.0 { max } else { 1.0 };
    let hists: Vec<(&str, Histogram)> = models
        .iter()
        .map(|(n, v)| histogram(v, bins, range).map(|h| (n.as_str(), h)))
        .collect::<Result<_>>()?;
    let top = hists
        .iter()
        .flat_map(|(_, h)| h.counts.iter().copied().chain([h.zeros]))
        .max()
        .unwrap_or(0)
        .max(1);
    let ymax = (top as f64).log10().max(1.0);
    let (panel_w, panel_h, margin) = (400.0, 200.0, 30.0);
    let h = (panel_h + margin) * hists.len().max(1) as f64 + margin;
    let mut s = svg_open(panel_w + 2.0 * margin, h);
    let bar_w = (panel_w - 20.0) / (bins + 1) as f64;
    for (i, (name, hist)) in hists.iter().enumerate() {
        let y0 = margin + (panel_h + margin) * i as f64 + panel_h;
        let _ = writeln!(
            s,
            r#"<text x="{margin}" y="{:.2}" font-size="12">{} (log10 count)</text>"#,
            y0 - panel_h - 6.0,
            xml_escape(name)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{margin}" y1="{y0:.2}" x2="{:.2}" y2="{y0:.2}" stroke="black"/>"#,
            margin + panel_w
        );
        let bar = |s: &mut String, x: f64, count: usize, fill: &str| {
            if count > 0 {
                let bh = ((count as f64).log10() + 0.1) / (ymax + 0.1) * panel_h;
                let _ = writeln!(
                    s,
                    r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{bh:.2}" fill="{fill}"/>"#,
                    y0 - bh,
                    bar_w * 0.9
                );
            }
        };
        bar(&mut s, margin, hist.zeros, "#555555");
        for (b, &c) in hist.counts.iter().enumerate() {
            bar(&mut s, margin + 20.0 + bar_w * (b + 1) as f64, c, "#1f77b4");
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::GaborConfig;
    use crate::rng;
    use ndarray::{Array1, Array4};
    use rand::Rng;

    fn render(u: &V1Complex) -> String {
        let c = GaborConfig::default();
        render_unit(u, &c.frequencies, &c.orientations_deg).unwrap()
    }

    #[test]
    fn zero_unit_is_empty_canvas() {
        let s = render(&Array4::zeros((6, 6, 3, 12)));
        assert!(!s.contains("<ellipse"));
        assert!(s.contains("<rect"));
    }

    #[test]
    fn single_entry_is_one_red_oval() {
        let mut u = Array4::zeros((6, 6, 3, 12));
        u[[2, 3, 1, 4]] = 0.25;
        let g = glyphs(&u).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!((g[0].row, g[0].col, g[0].opacity, g[0].excitatory), (2, 3, 1.0, true));
        let s = render(&u);
        assert_eq!(s.matches("<ellipse").count(), 1);
        assert!(s.contains("#d62728") && s.contains(r#"fill-opacity="1.0000""#));
        assert_eq!(s, render(&u));
    }

    #[test]
    fn opacity_is_scale_invariant_and_floored() {
        let mut r = rng::root(2);
        let u = Array4::from_shape_fn((6, 6, 3, 12), |_| r.random_range(-1.0..1.0));
        let a = glyphs(&u).unwrap();
        let b = glyphs(&(&u * 3.7)).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x.opacity - y.opacity).abs() < 1e-12);
        }
        assert!(a.iter().all(|g| g.opacity >= VISIBILITY_FLOOR));
        let mut nan = u.clone();
        nan[[0, 0, 0, 0]] = f64::NAN;
        assert!(glyphs(&nan).is_err());
    }

    #[test]
    fn lower_frequency_draws_larger_ovals() {
        let c = GaborConfig::default();
        let mut u = Array4::zeros((6, 6, 3, 12));
        u[[0, 0, 0, 0]] = 1.0;
        let big = render_unit(&u, &c.frequencies, &c.orientations_deg).unwrap();
        u[[0, 0, 0, 0]] = 0.0;
        u[[0, 0, 2, 0]] = -1.0;
        let small = render_unit(&u, &c.frequencies, &c.orientations_deg).unwrap();
        let rx = |s: &str| -> f64 {
            let i = s.find("rx=\"").unwrap() + 4;
            s[i..].split('"').next().unwrap().parse().unwrap()
        };
        assert!(rx(&big) > rx(&small));
        assert!(small.contains("#1f77b4"));
    }

    #[test]
    fn top_patches_sorted_and_empty_when_silent() {
        let r = Array1::from(vec![0.5, 2.0, 0.0, 2.0, 1.0, 0.1, 0.3, 0.7]);
        let t = top_patches(r.view(), 6);
        assert_eq!(t.iter().map(|x| x.0).collect::<Vec<_>>(), vec![1, 3, 4, 7, 0, 6]);
        assert!(t.windows(2).all(|w| w[0].1 >= w[1].1));
        assert!(top_patches(Array1::zeros(5).view(), 6).is_empty());
    }

    #[test]
    fn patch_strip_layout() {
        let p = Patch::zeros();
        let (w, h, px) = patch_strip(&[&p, &p, &p]);
        assert_eq!((w, h, px.len()), (100, 32, 3200));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.pgm");
        let sel = render_max_patches(Array1::zeros(2).view(), &[p.clone(), p], 6, &path).unwrap();
        assert!(sel.is_empty() && !path.exists());
    }

    #[test]
    fn quartiles_match_order_statistics() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let b = BoxSummary::of(&v).unwrap();
        // Linear interpolation between order statistics at (n−1)q.
        let order = |q: f64| {
            let pos = 99.0 * q;
            let (i, f) = (pos.floor() as usize, pos.fract());
            v[i] + f * (v[(i + 1).min(99)] - v[i])
        };
        assert_eq!((b.q1, b.median, b.q3), (order(0.25), order(0.5), order(0.75)));
        assert_eq!((b.q1, b.median, b.q3), (25.75, 50.5, 75.25));
        let s = render_box_plot(&[("one".into(), vec![4.0])]).unwrap();
        assert!(s.contains("<rect") && !s.contains("<circle"));
        assert!(render_box_plot(&[("none".into(), vec![])]).is_err());
    }

    #[test]
    fn histogram_zero_bar_and_exponential_decay() {
        let h = histogram(&[0.0; 10], 20, 1.0).unwrap();
        assert_eq!(h.zeros, 10);
        assert!(h.counts.iter().all(|&c| c == 0));
        let s = render_log_histogram(&[("z".into(), vec![0.0; 10])], 20).unwrap();
        assert_eq!(s.matches("<rect").count(), 1);

        let mut r = rng::root(5);
        let v: Vec<f64> = (0..200_000).map(|_| -r.random::<f64>().max(1e-300).ln()).collect();
        let h = histogram(&v, 30, 6.0).unwrap();
        let pts: Vec<(f64, f64)> = h.counts[..20]
            .iter()
            .enumerate()
            .map(|(i, &c)| (i as f64, (c as f64).ln()))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
        assert!(sxy / sxx < 0.0);
        assert!(sxy * sxy / (sxx * syy) > 0.99);
        assert_eq!(h.edges, histogram(&v, 30, 6.0).unwrap().edges);
        assert!(histogram(&[-1.0], 3, 1.0).is_err());
    }
}
