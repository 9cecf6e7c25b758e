//! PNG panels: false-colour depth, normal RGB, boundary overlays and error heatmaps.

use std::path::{Path, PathBuf};

use crate::camera::Vec3;
use crate::error::Result;
use crate::io;
use crate::raster::{BoundaryClass, BoundaryMap, DepthImage, NormalMap};

const VIRIDIS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

pub const OCCLUSION_RGB: [u8; 3] = [255, 0, 0];
pub const CONTACT_RGB: [u8; 3] = [0, 255, 0];

fn channel(x: f64) -> u8 {
    (x + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// `(n + 1) / 2 * 255` per channel, rounded half up. Undefined normals are black.
pub fn normal_rgb(n: &Vec3) -> [u8; 3] {
    if *n == Vec3::zeros() {
        return [0, 0, 0];
    }
    [0, 1, 2].map(|k| channel((n[k] + 1.0) / 2.0 * 255.0))
}

/// Viridis over `range`, saturating outside it. Invalid depth is black.
pub fn depth_rgb(d: f64, range: [f64; 2]) -> [u8; 3] {
    if !crate::raster::is_valid_depth(d) {
        return [0, 0, 0];
    }
    let span = range[1] - range[0];
    let t = if span > 0.0 { ((d - range[0]) / span).clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (VIRIDIS.len() - 1) as f64;
    let k = (x.floor() as usize).min(VIRIDIS.len() - 2);
    let f = x - k as f64;
    [0, 1, 2].map(|c| channel(VIRIDIS[k][c] + f * (VIRIDIS[k + 1][c] - VIRIDIS[k][c])))
}

pub fn depth_panel(depth: &DepthImage, range: [f64; 2]) -> Vec<u8> {
    depth.values().iter().flat_map(|d| depth_rgb(*d, range)).collect()
}

pub fn normals_panel(normals: &NormalMap) -> Vec<u8> {
    normals.values().iter().flat_map(normal_rgb).collect()
}

/// Boundary labels over a grey rendering of `base` (black where absent or invalid).
pub fn boundary_panel(boundary: &BoundaryMap, base: Option<&DepthImage>, range: [f64; 2]) -> Vec<u8> {
    let span = (range[1] - range[0]).max(f64::MIN_POSITIVE);
    boundary
        .labels()
        .iter()
        .enumerate()
        .flat_map(|(i, l)| match l {
            BoundaryClass::Occlusion => OCCLUSION_RGB,
            BoundaryClass::Contact => CONTACT_RGB,
            BoundaryClass::NonEdge => {
                let g = base
                    .filter(|b| b.is_valid_at(i))
                    .map(|b| channel(64.0 + 128.0 * (1.0 - ((b.values()[i] - range[0]) / span).clamp(0.0, 1.0))))
                    .unwrap_or(0);
                [g; 3]
            }
        })
        .collect()
}

/// `|pred - gt|` scaled so that `error_max` is white. Pixels without valid ground
/// truth are black.
pub fn error_panel(pred: &DepthImage, gt: &DepthImage, error_max: f64) -> Result<Vec<u8>> {
    crate::raster::check_dims("prediction", gt.dims(), pred.dims())?;
    Ok(pred
        .values()
        .iter()
        .zip(gt.values())
        .map(|(p, g)| {
            if !crate::raster::is_valid_depth(*g) {
                0
            } else {
                channel(((p - g).abs() / error_max).min(1.0) * 255.0)
            }
        })
        .collect())
}

pub fn depth_file(prefix: &str, range: [f64; 2]) -> String {
    format!("{prefix}_{:.3}-{:.3}m.png", range[0], range[1])
}

pub fn error_file(error_max: f64) -> String {
    format!("error_{error_max:.3}m.png")
}

pub fn write_depth_panel(path: &Path, depth: &DepthImage, range: [f64; 2]) -> Result<()> {
    io::write_rgb_png(path, depth.width(), depth.height(), depth_panel(depth, range))
}

pub fn write_normals_panel(path: &Path, normals: &NormalMap) -> Result<()> {
    io::write_rgb_png(path, normals.width(), normals.height(), normals_panel(normals))
}

fn skip<T>(what: &Path, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("skipping panel for {}: {e}", what.display());
            None
        }
    }
}

/// Directories under `input` that hold a scene manifest or a completed `depth.png`.
pub fn panel_sources(input: &Path) -> Result<Vec<PathBuf>> {
    let is_source = |d: &Path| d.join(io::MANIFEST).is_file() || d.join("depth.png").is_file();
    if is_source(input) {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(input)
        .map_err(|e| crate::Error::io(input, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && is_source(p))
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Ground-truth depth for a result directory named `id`, if any.
fn gt_depth_for(gt_dir: &Path, id: &str) -> Option<DepthImage> {
    let dir = if gt_dir.join(id).join(io::MANIFEST).is_file() {
        gt_dir.join(id)
    } else {
        match io::load_manifest(gt_dir) {
            Ok(m) if m.scene_id == id => gt_dir.to_path_buf(),
            _ => return None,
        }
    };
    let m = io::load_manifest(&dir).ok()?;
    let path = dir.join(&m.files.gt_depth);
    skip(&path, io::read_depth_png(&path))
}

/// Writes the panels of one scene or result directory into `out`; returns how many
/// were written.
pub fn render_source(
    src: &Path,
    out: &Path,
    gt_dir: Option<&Path>,
    range: [f64; 2],
    error_max: f64,
) -> Result<usize> {
    std::fs::create_dir_all(out).map_err(|e| crate::Error::io(out, e))?;
    let mut written = 0;
    if src.join(io::MANIFEST).is_file() {
        let Some(m) = skip(src, io::load_manifest(src)) else {
            return Ok(0);
        };
        let f = &m.files;
        let gt = skip(&src.join(&f.gt_depth), io::read_depth_png(&src.join(&f.gt_depth)));
        if let Some(d) = &gt {
            write_depth_panel(&out.join(depth_file("depth_gt", range)), d, range)?;
            written += 1;
        }
        if let Some(d) = skip(&src.join(&f.raw_depth), io::read_depth_png(&src.join(&f.raw_depth))) {
            write_depth_panel(&out.join(depth_file("depth_raw", range)), &d, range)?;
            written += 1;
        }
        for (name, file) in [("normals_gt.png", &f.gt_normals), ("normals_input.png", &f.input_normals)] {
            if let Some(n) = skip(&src.join(file), io::read_normals_pfm(&src.join(file))) {
                write_normals_panel(&out.join(name), &n)?;
                written += 1;
            }
        }
        for (name, file, prob) in [
            ("boundary_gt.png", &f.gt_boundary, &f.gt_occlusion_prob),
            ("boundary_input.png", &f.input_boundary, &f.input_occlusion_prob),
        ] {
            let prob = prob.as_ref().map(|p| src.join(p));
            if let Some(b) = skip(&src.join(file), io::read_boundary(&src.join(file), prob.as_deref())) {
                let rgb = boundary_panel(&b, gt.as_ref().filter(|g| g.dims() == b.dims()), range);
                io::write_rgb_png(&out.join(name), b.width(), b.height(), rgb)?;
                written += 1;
            }
        }
        return Ok(written);
    }

    let depth_path = src.join("depth.png");
    if let Some(d) = skip(&depth_path, io::read_depth_png(&depth_path)) {
        write_depth_panel(&out.join(depth_file("depth", range)), &d, range)?;
        written += 1;
        let id = src.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if let Some(gt) = gt_dir.and_then(|g| gt_depth_for(g, &id)) {
            if let Some(px) = skip(src, error_panel(&d, &gt, error_max)) {
                io::write_gray_png(&out.join(error_file(error_max)), d.width(), d.height(), px)?;
                written += 1;
            }
        }
    }
    let normals_path = src.join("normals.pfm");
    if normals_path.is_file() {
        if let Some(n) = skip(&normals_path, io::read_normals_pfm(&normals_path)) {
            write_normals_panel(&out.join("normals.png"), &n)?;
            written += 1;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn camera_facing_normal_encodes_half_up() {
        assert_eq!(normal_rgb(&Vec3::new(0.0, 0.0, -1.0)), [128, 128, 0]);
        assert_eq!(normal_rgb(&Vec3::new(1.0, -1.0, 0.0)), [255, 0, 128]);
        assert_eq!(normal_rgb(&Vec3::zeros()), [0, 0, 0]);
    }

    #[test]
    fn constant_depth_is_uniform() {
        let d = DepthImage::constant(6, 4, 0.7).unwrap();
        let px = depth_panel(&d, [0.3, 1.2]);
        assert!(px.chunks(3).all(|c| c == &px[..3]));
        assert_eq!(depth_rgb(0.3, [0.3, 1.2]), [68, 1, 84]);
        assert_eq!(depth_rgb(5.0, [0.3, 1.2]), [253, 231, 37]);
        assert_eq!(depth_rgb(0.0, [0.3, 1.2]), [0, 0, 0]);
    }

    #[test]
    fn equal_depth_has_zero_error() {
        let d = DepthImage::from_fn(5, 3, |u, v| 0.4 + 0.01 * (u * v) as f64).unwrap();
        assert!(error_panel(&d, &d, 0.05).unwrap().iter().all(|g| *g == 0));
        let far = DepthImage::constant(5, 3, 1.0).unwrap();
        assert!(error_panel(&far, &d, 0.05).unwrap().iter().all(|g| *g == 255));
    }

    #[test]
    fn boundary_classes_get_distinct_colours() {
        let b = BoundaryMap::from_raw_labels(3, 1, &[0, 1, 2]).unwrap();
        let px = boundary_panel(&b, None, [0.3, 1.2]);
        assert_eq!(px, vec![0, 0, 0, 255, 0, 0, 0, 255, 0]);
    }

    #[test]
    fn file_names_carry_the_range() {
        assert_eq!(depth_file("depth", [0.3, 1.2]), "depth_0.300-1.200m.png");
        assert_eq!(error_file(0.05), "error_0.050m.png");
    }
}
