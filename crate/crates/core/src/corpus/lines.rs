//! Two line segments joined at one end-point.

use ndarray::Array2;

use super::{LabeledPatchSet, Patch, PATCH_SIZE};
use crate::error::Result;

pub const LINE_LENGTHS: [f64; 3] = [10.0, 15.0, 20.0];
pub const LINE_ROTATIONS_DEG: [f64; 12] = [
    0.0, 30.0, 60.0, 90.0, 120.0, 150.0, 180.0, 210.0, 240.0, 270.0, 300.0, 330.0,
];
pub const LINE_ANGLES_DEG: [f64; 6] = [30.0, 60.0, 90.0, 120.0, 150.0, 180.0];

/// Joint offsets from the patch center, one V1 stride apart.
const JOINT_OFFSETS: [f64; 3] = [-4.0, 0.0, 4.0];

/// Distance from `p` to the segment `a`–`b`.
fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Render the joined pair white-on-black with linear-coverage anti-aliasing.
/// `joint` is in (x, y) pixel coordinates; angles in degrees.
pub(crate) fn render_line_pair(joint: (f64, f64), length: f64, rotation: f64, angle: f64) -> Array2<f64> {
    let dir = |deg: f64| {
        let r = deg.to_radians();
        (r.cos(), -r.sin())
    };
    let d1 = dir(rotation);
    let d2 = dir(rotation + angle);
    let end1 = (joint.0 + length * d1.0, joint.1 + length * d1.1);
    let end2 = (joint.0 + length * d2.0, joint.1 + length * d2.1);
    Array2::from_shape_fn((PATCH_SIZE, PATCH_SIZE), |(r, c)| {
        let p = (c as f64, r as f64);
        let d = segment_distance(p, joint, end1).min(segment_distance(p, joint, end2));
        (1.0 - d).clamp(0.0, 1.0)
    })
}

/// The full line-angle stimulus grid: 3 lengths × 9 joint locations ×
/// 12 rotations × 6 angles. Labels index [`LINE_ANGLES_DEG`].
pub fn gen_line_stimuli() -> Result<LabeledPatchSet> {
    let center = (PATCH_SIZE as f64 - 1.0) / 2.0;
    let mut patches = Vec::with_capacity(1944);
    let mut labels = Vec::with_capacity(1944);
    for &length in &LINE_LENGTHS {
        for &oy in &JOINT_OFFSETS {
            for &ox in &JOINT_OFFSETS {
                for &rotation in &LINE_ROTATIONS_DEG {
                    for (label, &angle) in LINE_ANGLES_DEG.iter().enumerate() {
                        let img = render_line_pair((center + ox, center + oy), length, rotation, angle);
                        patches.push(Patch::normalize(img.view(), None)?);
                        labels.push(label);
                    }
                }
            }
        }
    }
    let names = LINE_ANGLES_DEG.iter().map(|a| format!("{a:.0}deg")).collect();
    LabeledPatchSet::new(patches, labels, names)
}
