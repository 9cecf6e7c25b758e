//! Area resampling to the evaluation resolution.
//!
//! Source pixel `s` spans `[s * target, (s + 1) * target)` and target pixel `t` spans
//! `[t * source, (t + 1) * source)` on a common integer axis, so every overlap weight
//! is an exact integer.

use crate::camera::Vec3;
use crate::error::{Error, Result};
use crate::raster::{DepthImage, NormalMap, TransparencyMask};

pub const EVAL_WIDTH: usize = 256;
pub const EVAL_HEIGHT: usize = 144;

/// `(source index, overlap)` pairs covering each target index along one axis.
fn footprints(source: usize, target: usize) -> Vec<Vec<(usize, u64)>> {
    (0..target)
        .map(|t| {
            let (lo, hi) = (t * source, (t + 1) * source);
            (lo / target..hi.div_ceil(target))
                .filter_map(|s| {
                    let overlap = hi.min((s + 1) * target).saturating_sub(lo.max(s * target));
                    (overlap > 0).then_some((s, overlap as u64))
                })
                .collect()
        })
        .collect()
}

fn check_aspect(src: (usize, usize), dst: (usize, usize)) -> Result<()> {
    if dst.0 == 0 || dst.1 == 0 {
        return Err(Error::Invalid(format!("empty target {}x{}", dst.0, dst.1)));
    }
    if src.0 * dst.1 != src.1 * dst.0 {
        return Err(Error::Invalid(format!(
            "aspect of {}x{} differs from target {}x{}; letterbox before resizing",
            src.0, src.1, dst.0, dst.1
        )));
    }
    Ok(())
}

/// Visits every target pixel with its weighted source footprint.
fn resample<T>(
    src: (usize, usize),
    dst: (usize, usize),
    mut cell: impl FnMut(&mut dyn Iterator<Item = (usize, u64)>) -> T,
) -> Vec<T> {
    let xs = footprints(src.0, dst.0);
    let ys = footprints(src.1, dst.1);
    let mut out = Vec::with_capacity(dst.0 * dst.1);
    for fy in &ys {
        for fx in &xs {
            let mut it = fy
                .iter()
                .flat_map(|(sy, wy)| fx.iter().map(move |(sx, wx)| (sy * src.0 + sx, wy * wx)));
            out.push(cell(&mut it));
        }
    }
    out
}

/// Area average over valid source pixels. A target pixel is invalid when more than
/// half of its footprint is invalid.
pub fn eval_resize_depth(img: &DepthImage, width: usize, height: usize) -> Result<DepthImage> {
    let src = img.dims();
    if src == (width, height) {
        return Ok(img.clone());
    }
    check_aspect(src, (width, height))?;
    let values = resample(src, (width, height), |cells| {
        let (mut total, mut valid, mut acc) = (0u64, 0u64, 0.0);
        for (i, w) in cells {
            total += w;
            if img.is_valid_at(i) {
                valid += w;
                acc += w as f64 * img.values()[i];
            }
        }
        if 2 * (total - valid) > total {
            0.0
        } else {
            acc / valid as f64
        }
    });
    DepthImage::with_z_max(width, height, values, f64::MAX)
}

/// Majority vote by covered area; ties go to transparent.
pub fn eval_resize_mask(mask: &TransparencyMask, width: usize, height: usize) -> Result<TransparencyMask> {
    let src = mask.dims();
    if src == (width, height) {
        return Ok(mask.clone());
    }
    check_aspect(src, (width, height))?;
    let values = resample(src, (width, height), |cells| {
        let (mut total, mut on) = (0u64, 0u64);
        for (i, w) in cells {
            total += w;
            if mask.values()[i] {
                on += w;
            }
        }
        2 * on >= total
    });
    TransparencyMask::new(width, height, values)
}

/// Area average of defined normals, renormalised. Undefined when more than half the
/// footprint is undefined or the average vanishes.
pub fn eval_resize_normals(normals: &NormalMap, width: usize, height: usize) -> Result<NormalMap> {
    let src = normals.dims();
    if src == (width, height) {
        return Ok(normals.clone());
    }
    check_aspect(src, (width, height))?;
    let values = resample(src, (width, height), |cells| {
        let (mut total, mut defined, mut acc) = (0u64, 0u64, Vec3::zeros());
        for (i, w) in cells {
            total += w;
            if normals.is_defined_at(i) {
                defined += w;
                acc += normals.values()[i] * w as f64;
            }
        }
        let norm = acc.norm();
        if 2 * (total - defined) > total || norm == 0.0 {
            Vec3::zeros()
        } else {
            acc / norm
        }
    });
    NormalMap::new(width, height, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn footprints_cover_each_axis_exactly() {
        for (s, t) in [(1280, 256), (256, 1280), (7, 3), (3, 7), (5, 5)] {
            let f = footprints(s, t);
            for cells in &f {
                assert_eq!(cells.iter().map(|c| c.1).sum::<u64>(), s as u64);
            }
            let mut per_source = vec![0u64; s];
            for (src, w) in f.iter().flatten() {
                per_source[*src] += w;
            }
            assert!(per_source.iter().all(|w| *w == t as u64));
        }
    }

    #[test]
    fn constant_depth_stays_constant() {
        let img = DepthImage::constant(1280, 720, 0.5).unwrap();
        let out = eval_resize_depth(&img, EVAL_WIDTH, EVAL_HEIGHT).unwrap();
        assert_eq!(out.dims(), (256, 144));
        assert!(out.values().iter().all(|d| *d == 0.5));
    }

    #[test]
    fn same_size_is_identity() {
        let img = DepthImage::from_fn(256, 144, |u, v| if (u + v) % 3 == 0 { 0.0 } else { 0.3 + u as f64 * 1e-3 }).unwrap();
        assert_eq!(eval_resize_depth(&img, 256, 144).unwrap(), img);
    }

    #[test]
    fn checkerboard_votes_with_ties_to_transparent() {
        // 2x2 blocks of a 1-pixel checkerboard tie 2:2, so every target is transparent.
        let fine = TransparencyMask::from_fn(32, 18, |u, v| (u + v) % 2 == 0).unwrap();
        let out = eval_resize_mask(&fine, 16, 9).unwrap();
        assert!(out.values().iter().all(|t| *t));
        // A checkerboard of 2x2 blocks reproduces the 1-pixel checkerboard.
        let blocks = TransparencyMask::from_fn(32, 18, |u, v| (u / 2 + v / 2) % 2 == 0).unwrap();
        let out = eval_resize_mask(&blocks, 16, 9).unwrap();
        let expected = TransparencyMask::from_fn(16, 9, |u, v| (u + v) % 2 == 0).unwrap();
        assert_eq!(out, expected);
    }

    #[test]
    fn mostly_invalid_footprints_become_invalid() {
        // Each 2x2 block has k invalid pixels for k = 0..=3 across the row.
        let img = DepthImage::from_fn(8, 2, |u, v| {
            let block = u / 2;
            let idx = (u % 2) + 2 * v;
            if idx < block { 0.0 } else { 1.0 }
        })
        .unwrap();
        let out = eval_resize_depth(&img, 4, 1).unwrap();
        assert_eq!(out.values(), &[1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn aspect_mismatch_is_rejected() {
        let img = DepthImage::constant(100, 100, 0.5).unwrap();
        assert!(eval_resize_depth(&img, 256, 144).is_err());
    }
}
