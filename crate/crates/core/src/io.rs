//! On-disk formats.
//!
//! Depth is stored as 16-bit PNG in millimetres, normals and float fields as PFM,
//! masks and boundary labels as 8-bit PNG. A scene directory holds one JSON manifest
//! plus its rasters.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, Vec3};
use crate::error::{Error, Result};
use crate::raster::{BoundaryClass, BoundaryMap, DepthImage, NormalMap, TransparencyMask};
use crate::scene::{Scene, SceneMetadata};
use crate::synthgen::Primitive;

/// Largest depth a 16-bit millimetre PNG can hold, in metres.
pub const MAX_PNG_DEPTH: f64 = u16::MAX as f64 / 1000.0;

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn image_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    }
}

fn decode(path: &Path) -> Result<DynamicImage> {
    image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| image_error(path, e))
}

fn save_png<P>(path: &Path, img: &ImageBuffer<P, Vec<P::Subpixel>>) -> Result<()>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
{
    create_parent(path)?;
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|e| image_error(path, e))
}

fn dims_u32(path: &Path, w: usize, h: usize) -> Result<(u32, u32)> {
    match (u32::try_from(w), u32::try_from(h)) {
        (Ok(w), Ok(h)) => Ok((w, h)),
        _ => Err(Error::format(path, format!("raster {w}x{h} too large for PNG"))),
    }
}

/// Millimetre code for a depth value; clamps at 65535 and reports whether it did.
pub fn depth_to_mm(depth: f64) -> (u16, bool) {
    let mm = (depth * 1000.0).round();
    if mm > u16::MAX as f64 {
        (u16::MAX, true)
    } else {
        (mm as u16, false)
    }
}

pub fn write_depth_png(path: &Path, depth: &DepthImage) -> Result<()> {
    let (w, h) = dims_u32(path, depth.width(), depth.height())?;
    let mut clamped = 0usize;
    let data: Vec<u16> = depth
        .values()
        .iter()
        .map(|d| {
            let (mm, c) = depth_to_mm(*d);
            clamped += c as usize;
            mm
        })
        .collect();
    if clamped > 0 {
        log::warn!("{}: {clamped} depth values above {MAX_PNG_DEPTH} m clamped", path.display());
    }
    let img = ImageBuffer::<Luma<u16>, _>::from_raw(w, h, data).expect("buffer matches dimensions");
    save_png(path, &img)
}

pub fn read_depth_png(path: &Path) -> Result<DepthImage> {
    let img = match decode(path)? {
        DynamicImage::ImageLuma16(img) => img,
        other => {
            return Err(Error::format(
                path,
                format!("expected 16-bit grayscale depth, found {:?}", other.color()),
            ))
        }
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = img.into_raw().into_iter().map(|mm| mm as f64 / 1000.0).collect();
    DepthImage::with_z_max(w, h, values, MAX_PNG_DEPTH).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_mask_png(path: &Path, mask: &TransparencyMask) -> Result<()> {
    let (w, h) = dims_u32(path, mask.width(), mask.height())?;
    let data = mask.values().iter().map(|t| if *t { 255u8 } else { 0 }).collect();
    save_png(path, &ImageBuffer::<Luma<u8>, _>::from_raw(w, h, data).expect("buffer matches dimensions"))
}

fn read_gray8(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    match decode(path)? {
        DynamicImage::ImageLuma8(img) => Ok((img.width() as usize, img.height() as usize, img.into_raw())),
        other => Err(Error::format(
            path,
            format!("expected 8-bit grayscale, found {:?}", other.color()),
        )),
    }
}

/// Values above 127 read as transparent.
pub fn read_mask_png(path: &Path) -> Result<TransparencyMask> {
    let (w, h, data) = read_gray8(path)?;
    TransparencyMask::new(w, h, data.into_iter().map(|b| b > 127).collect())
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_label_png(path: &Path, boundary: &BoundaryMap) -> Result<()> {
    let (w, h) = dims_u32(path, boundary.width(), boundary.height())?;
    let data = boundary.labels().iter().map(|l| *l as u8).collect();
    save_png(path, &ImageBuffer::<Luma<u8>, _>::from_raw(w, h, data).expect("buffer matches dimensions"))
}

/// Writes the label PNG, and the occlusion probability as PFM when it is not just a
/// function of the labels.
pub fn write_boundary(png: &Path, prob_pfm: &Path, boundary: &BoundaryMap) -> Result<bool> {
    write_label_png(png, boundary)?;
    if boundary.is_binary() {
        return Ok(false);
    }
    write_scalar_pfm(prob_pfm, boundary.width(), boundary.height(), boundary.occlusion_prob())?;
    Ok(true)
}

pub fn read_boundary(png: &Path, prob_pfm: Option<&Path>) -> Result<BoundaryMap> {
    let (w, h, data) = read_gray8(png)?;
    let labels = data
        .iter()
        .map(|l| {
            BoundaryClass::from_u8(*l).ok_or_else(|| Error::format(png, format!("boundary label {l} not in {{0,1,2}}")))
        })
        .collect::<Result<Vec<_>>>()?;
    match prob_pfm {
        None => BoundaryMap::from_labels(w, h, labels).map_err(|e| Error::format(png, e.to_string())),
        Some(pfm) => {
            let (pw, ph, prob) = read_scalar_pfm(pfm)?;
            if (pw, ph) != (w, h) {
                return Err(Error::DimensionMismatch {
                    what: "occlusion probability",
                    expected: (w, h),
                    actual: (pw, ph),
                });
            }
            BoundaryMap::with_occlusion_prob(w, h, labels, prob).map_err(|e| Error::format(pfm, e.to_string()))
        }
    }
}

pub fn write_rgb_png(path: &Path, width: usize, height: usize, rgb: Vec<u8>) -> Result<()> {
    let (w, h) = dims_u32(path, width, height)?;
    let img = ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, rgb)
        .ok_or_else(|| Error::Invalid(format!("rgb buffer does not match {width}x{height}")))?;
    save_png(path, &img)
}

pub fn write_gray_png(path: &Path, width: usize, height: usize, gray: Vec<u8>) -> Result<()> {
    let (w, h) = dims_u32(path, width, height)?;
    let img = ImageBuffer::<Luma<u8>, _>::from_raw(w, h, gray)
        .ok_or_else(|| Error::Invalid(format!("gray buffer does not match {width}x{height}")))?;
    save_png(path, &img)
}

fn write_pfm(path: &Path, width: usize, height: usize, channels: usize, data: &[f32]) -> Result<()> {
    debug_assert_eq!(data.len(), width * height * channels);
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let magic = if channels == 3 { "PF" } else { "Pf" };
    let mut bytes = format!("{magic}\n{width} {height}\n-1.0\n").into_bytes();
    bytes.reserve(data.len() * 4);
    // PFM stores the bottom row first.
    for v in (0..height).rev() {
        for x in &data[v * width * channels..(v + 1) * width * channels] {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    out.write_all(&bytes)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Returns (width, height, channels, top-down samples).
fn read_pfm(path: &Path) -> Result<(usize, usize, usize, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |why: &str| Error::format(path, format!("PFM: {why}"));
    let mut pos = 0;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        let t = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        Ok(t)
    };
    let channels = match token()?.as_str() {
        "PF" => 3,
        "Pf" => 1,
        m => return Err(bad(&format!("unknown magic {m:?}"))),
    };
    let width: usize = token()?.parse().map_err(|_| bad("bad width"))?;
    let height: usize = token()?.parse().map_err(|_| bad("bad height"))?;
    let scale: f32 = token()?.parse().map_err(|_| bad("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("scale must be nonzero"));
    }
    // exactly one whitespace byte separates the header from the samples
    pos += 1;
    let n = width * height * channels;
    if bytes.len() < pos + 4 * n {
        return Err(bad("truncated data"));
    }
    let little = scale < 0.0;
    let row = width * channels;
    let mut data = vec![0f32; n];
    for (k, chunk) in bytes[pos..pos + 4 * n].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let x = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (file_row, col) = (k / row, k % row);
        data[(height - 1 - file_row) * row + col] = x;
    }
    Ok((width, height, channels, data))
}

pub fn write_normals_pfm(path: &Path, normals: &NormalMap) -> Result<()> {
    let data: Vec<f32> = normals
        .values()
        .iter()
        .flat_map(|n| [n.x as f32, n.y as f32, n.z as f32])
        .collect();
    write_pfm(path, normals.width(), normals.height(), 3, &data)
}

pub fn read_normals_pfm(path: &Path) -> Result<NormalMap> {
    let (w, h, c, data) = read_pfm(path)?;
    if c != 3 {
        return Err(Error::format(path, "expected a 3-channel PFM"));
    }
    let values = data
        .chunks_exact(3)
        .map(|n| Vec3::new(n[0] as f64, n[1] as f64, n[2] as f64))
        .collect();
    NormalMap::new(w, h, values).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_scalar_pfm(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    if values.len() != width * height {
        return Err(Error::Invalid(format!(
            "{} values for a {width}x{height} field",
            values.len()
        )));
    }
    let data: Vec<f32> = values.iter().map(|x| *x as f32).collect();
    write_pfm(path, width, height, 1, &data)
}

pub fn read_scalar_pfm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let (w, h, c, data) = read_pfm(path)?;
    if c != 1 {
        return Err(Error::format(path, "expected a single-channel PFM"));
    }
    Ok((w, h, data.into_iter().map(|x| x as f64).collect()))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub const MANIFEST: &str = "manifest.json";

/// Raster file names, relative to the scene directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneFiles {
    pub raw_depth: String,
    pub gt_depth: String,
    pub gt_normals: String,
    pub input_normals: String,
    pub gt_mask: String,
    pub input_mask: String,
    pub gt_boundary: String,
    pub input_boundary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_occlusion_prob: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_occlusion_prob: Option<String>,
}

impl Default for SceneFiles {
    fn default() -> Self {
        Self {
            raw_depth: "raw_depth.png".into(),
            gt_depth: "gt_depth.png".into(),
            gt_normals: "gt_normals.pfm".into(),
            input_normals: "input_normals.pfm".into(),
            gt_mask: "gt_mask.png".into(),
            input_mask: "input_mask.png".into(),
            gt_boundary: "gt_boundary.png".into(),
            input_boundary: "input_boundary.png".into(),
            gt_occlusion_prob: None,
            input_occlusion_prob: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub scene_id: String,
    pub seed: u64,
    pub intrinsics: CameraIntrinsics,
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub support_plane: Option<usize>,
    pub files: SceneFiles,
}

impl SceneManifest {
    pub fn metadata(&self) -> SceneMetadata {
        SceneMetadata {
            scene_id: self.scene_id.clone(),
            seed: self.seed,
            primitives: self.primitives.clone(),
            support_plane: self.support_plane,
        }
    }
}

pub fn save_scene(dir: &Path, scene: &Scene) -> Result<()> {
    scene.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = SceneFiles::default();
    write_depth_png(&dir.join(&files.raw_depth), &scene.raw_depth)?;
    write_depth_png(&dir.join(&files.gt_depth), &scene.gt_depth)?;
    write_normals_pfm(&dir.join(&files.gt_normals), &scene.gt_normals)?;
    write_normals_pfm(&dir.join(&files.input_normals), &scene.input_normals)?;
    write_mask_png(&dir.join(&files.gt_mask), &scene.gt_mask)?;
    write_mask_png(&dir.join(&files.input_mask), &scene.input_mask)?;
    let gt_prob = "gt_occlusion_prob.pfm";
    if write_boundary(&dir.join(&files.gt_boundary), &dir.join(gt_prob), &scene.gt_boundary)? {
        files.gt_occlusion_prob = Some(gt_prob.into());
    }
    let input_prob = "input_occlusion_prob.pfm";
    if write_boundary(&dir.join(&files.input_boundary), &dir.join(input_prob), &scene.input_boundary)? {
        files.input_occlusion_prob = Some(input_prob.into());
    }
    let manifest = SceneManifest {
        scene_id: scene.metadata.scene_id.clone(),
        seed: scene.metadata.seed,
        intrinsics: scene.intrinsics,
        primitives: scene.metadata.primitives.clone(),
        support_plane: scene.metadata.support_plane,
        files,
    };
    write_json(&dir.join(MANIFEST), &manifest)
}

pub fn load_manifest(dir: &Path) -> Result<SceneManifest> {
    read_json(&dir.join(MANIFEST))
}

pub fn load_scene(dir: &Path) -> Result<Scene> {
    let manifest = load_manifest(dir)?;
    let id = manifest.scene_id.clone();
    let load = || -> Result<Scene> {
        let f = &manifest.files;
        let path = |name: &str| -> PathBuf { dir.join(name) };
        let prob = |name: &Option<String>| name.as_ref().map(|n| path(n));
        let scene = Scene {
            intrinsics: manifest.intrinsics,
            raw_depth: read_depth_png(&path(&f.raw_depth))?,
            gt_depth: read_depth_png(&path(&f.gt_depth))?,
            gt_normals: read_normals_pfm(&path(&f.gt_normals))?,
            input_normals: read_normals_pfm(&path(&f.input_normals))?,
            gt_mask: read_mask_png(&path(&f.gt_mask))?,
            input_mask: read_mask_png(&path(&f.input_mask))?,
            gt_boundary: read_boundary(&path(&f.gt_boundary), prob(&f.gt_occlusion_prob).as_deref())?,
            input_boundary: read_boundary(&path(&f.input_boundary), prob(&f.input_occlusion_prob).as_deref())?,
            metadata: manifest.metadata(),
        };
        scene.validate()?;
        Ok(scene)
    };
    load().map_err(|e| e.in_scene(id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn depth_is_stored_in_millimetres() {
        assert_eq!(depth_to_mm(0.5), (500, false));
        assert_eq!(depth_to_mm(0.0), (0, false));
        assert_eq!(depth_to_mm(0.0125), (13, false));
        assert_eq!(depth_to_mm(70.0), (u16::MAX, true));
    }

    #[test]
    fn clamped_depth_reads_back_at_the_limit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let depth = DepthImage::with_z_max(2, 1, vec![0.25, 70.0], 100.0).unwrap();
        write_depth_png(&path, &depth).unwrap();
        let back = read_depth_png(&path).unwrap();
        assert_eq!(back.values(), &[0.25, MAX_PNG_DEPTH]);
    }

    #[test]
    fn pfm_rows_are_bottom_up() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.pfm");
        write_scalar_pfm(&path, 2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = fs::read(&path).unwrap();
        let header = b"Pf\n2 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        let first = f32::from_le_bytes(bytes[header.len()..header.len() + 4].try_into().unwrap());
        assert_eq!(first, 3.0);
        assert_eq!(read_scalar_pfm(&path).unwrap(), (2, 2, vec![1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn big_endian_pfm_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("be.pfm");
        let mut bytes = b"Pf\n1 2\n1.0\n".to_vec();
        bytes.extend_from_slice(&0.5f32.to_be_bytes());
        bytes.extend_from_slice(&0.25f32.to_be_bytes());
        fs::write(&path, bytes).unwrap();
        assert_eq!(read_scalar_pfm(&path).unwrap(), (1, 2, vec![0.25, 0.5]));
    }

    #[test]
    fn wrong_bit_depth_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        write_mask_png(&path, &TransparencyMask::full(3, 2).unwrap()).unwrap();
        assert!(matches!(read_depth_png(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn bad_label_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.png");
        write_gray_png(&path, 2, 1, vec![0, 7]).unwrap();
        assert!(matches!(read_boundary(&path, None), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_file_is_an_io_error_with_path() {
        let err = read_depth_png(Path::new("/nonexistent/depth.png")).unwrap_err();
        match err {
            Error::Io { path, .. } => assert!(path.ends_with("depth.png")),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn raster_dims() -> impl Strategy<Value = (usize, usize)> {
        (1usize..12, 1usize..12)
    }

    proptest! {
        #[test]
        fn millimetre_depth_round_trips_exactly(
            ((w, h), seed) in (raster_dims(), any::<u64>())
        ) {
            let mut state = seed;
            let depth = DepthImage::from_fn(w, h, |_, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let mm = (state >> 40) % 10_001;
                mm as f64 / 1000.0
            }).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("d.png");
            write_depth_png(&path, &depth).unwrap();
            prop_assert_eq!(read_depth_png(&path).unwrap(), depth);
        }

        #[test]
        fn f32_normals_round_trip_exactly(
            (w, h) in raster_dims(),
            raw in proptest::collection::vec((-1f32..1.0, -1f32..1.0, -1f32..-0.1), 144)
        ) {
            let normals = NormalMap::from_fn(w, h, |u, v| {
                let (x, y, z) = raw[(v * w + u) % raw.len()];
                let len = (x * x + y * y + z * z).sqrt();
                Vec3::new((x / len) as f64, (y / len) as f64, (z / len) as f64)
            }).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("n.pfm");
            write_normals_pfm(&path, &normals).unwrap();
            prop_assert_eq!(read_normals_pfm(&path).unwrap(), normals);
        }

        #[test]
        fn masks_and_labels_round_trip(
            (w, h) in raster_dims(),
            bits in proptest::collection::vec(0u8..3, 144),
            prob in proptest::collection::vec(0f32..=1.0, 144)
        ) {
            let n = w * h;
            let mask = TransparencyMask::new(w, h, (0..n).map(|i| bits[i % 144] == 1).collect()).unwrap();
            let labels: Vec<BoundaryClass> = (0..n).map(|i| BoundaryClass::from_u8(bits[i % 144]).unwrap()).collect();
            let hard = BoundaryMap::from_labels(w, h, labels.clone()).unwrap();
            let soft = BoundaryMap::with_occlusion_prob(w, h, labels, (0..n).map(|i| prob[i % 144] as f64).collect()).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let (png, pfm) = (dir.path().join("b.png"), dir.path().join("p.pfm"));
            write_mask_png(&png, &mask).unwrap();
            prop_assert_eq!(read_mask_png(&png).unwrap(), mask);
            prop_assert!(!write_boundary(&png, &pfm, &hard).unwrap());
            prop_assert_eq!(read_boundary(&png, None).unwrap(), hard);
            let wrote = write_boundary(&png, &pfm, &soft).unwrap();
            let back = read_boundary(&png, wrote.then_some(pfm.as_path())).unwrap();
            prop_assert_eq!(back, soft);
        }
    }
}
