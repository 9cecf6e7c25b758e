//! Per-pixel image containers. All rasters are row-major with index `v * width + u`
//! and are immutable once built.

use serde::{Deserialize, Serialize};

use crate::camera::Vec3;
use crate::error::{Error, Result};

/// Default upper bound on valid depth, in meters.
pub const DEFAULT_Z_MAX: f64 = 10.0;

/// Tolerance on the L2 norm of a defined normal.
pub const UNIT_NORM_TOL: f64 = 1e-6;

pub(crate) fn check_dims(
    what: &'static str,
    expected: (usize, usize),
    actual: (usize, usize),
) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}

fn check_len(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Invalid(format!("empty raster {width}x{height}")));
    }
    if width * height != len {
        return Err(Error::Invalid(format!(
            "raster {width}x{height} needs {} values, got {len}",
            width * height
        )));
    }
    Ok(())
}

/// Iterates `(u, v)` for a `width` x `height` grid in raster order.
pub fn pixels(width: usize, height: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..height).flat_map(move |v| (0..width).map(move |u| (u, v)))
}

/// In-bounds 4-neighbours of pixel `(u, v)`.
pub(crate) fn neighbors4(u: usize, v: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let (u, v) = (u as isize, v as isize);
    [(u - 1, v), (u + 1, v), (u, v - 1), (u, v + 1)]
        .into_iter()
        .filter(move |(x, y)| *x >= 0 && *y >= 0 && (*x as usize) < w && (*y as usize) < h)
        .map(|(x, y)| (x as usize, y as usize))
}

/// Depth along the camera z-axis in meters. Invalid pixels hold exactly `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        Self::with_z_max(width, height, values, DEFAULT_Z_MAX)
    }

    pub fn with_z_max(width: usize, height: usize, mut values: Vec<f64>, z_max: f64) -> Result<Self> {
        check_len(width, height, values.len())?;
        for (i, d) in values.iter_mut().enumerate() {
            if *d == 0.0 {
                // normalise -0.0
                *d = 0.0;
            } else if !(d.is_finite() && *d > 0.0 && *d <= z_max) {
                return Err(Error::Invalid(format!(
                    "depth {d} at pixel ({}, {}) outside (0, {z_max}]",
                    i % width,
                    i / width
                )));
            }
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Builds an image from arbitrary floats, replacing anything that is not a valid
    /// depth in `(0, z_max]` with the sentinel. Returns the image and the number of
    /// values that were replaced (original zeros are not counted).
    pub fn sanitized(width: usize, height: usize, values: Vec<f64>, z_max: f64) -> Result<(Self, usize)> {
        check_len(width, height, values.len())?;
        let mut replaced = 0;
        let values = values
            .into_iter()
            .map(|d| {
                if d.is_finite() && d > 0.0 && d <= z_max {
                    d
                } else {
                    if d != 0.0 {
                        replaced += 1;
                    }
                    0.0
                }
            })
            .collect();
        Ok((
            Self {
                width,
                height,
                values,
            },
            replaced,
        ))
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(width, height, pixels(width, height).map(|(u, v)| f(u, v)).collect())
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Result<Self> {
        Self::new(width, height, vec![depth; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }

    pub fn is_valid_at(&self, idx: usize) -> bool {
        is_valid_depth(self.values[idx])
    }

    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.is_valid_at(v * self.width + u)
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|d| is_valid_depth(**d)).count()
    }

    /// Copy with the listed pixel indices set to the sentinel.
    pub fn with_invalidated(&self, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut values = self.values.clone();
        for i in indices {
            values[i] = 0.0;
        }
        Self {
            width: self.width,
            height: self.height,
            values,
        }
    }
}

pub fn is_valid_depth(d: f64) -> bool {
    d > 0.0 && d.is_finite()
}

/// Unit surface normals in camera coordinates. The zero vector marks pixels with no
/// defined normal (e.g. rays that hit nothing).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    width: usize,
    height: usize,
    values: Vec<Vec3>,
}

impl NormalMap {
    pub fn new(width: usize, height: usize, values: Vec<Vec3>) -> Result<Self> {
        check_len(width, height, values.len())?;
        for (i, n) in values.iter().enumerate() {
            if *n == Vec3::zeros() {
                continue;
            }
            let norm = n.norm();
            if !((norm - 1.0).abs() <= UNIT_NORM_TOL) {
                return Err(Error::Invalid(format!(
                    "normal at pixel ({}, {}) has norm {norm}",
                    i % width,
                    i / width
                )));
            }
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Vec3) -> Result<Self> {
        Self::new(width, height, pixels(width, height).map(|(u, v)| f(u, v)).collect())
    }

    pub fn constant(width: usize, height: usize, n: Vec3) -> Result<Self> {
        Self::new(width, height, vec![n; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    pub fn get(&self, u: usize, v: usize) -> Vec3 {
        self.values[v * self.width + u]
    }

    pub fn is_defined_at(&self, idx: usize) -> bool {
        self.values[idx] != Vec3::zeros()
    }

    /// True when every defined normal points back toward the camera (`n_z < 0`).
    pub fn is_camera_facing(&self) -> bool {
        self.values
            .iter()
            .all(|n| *n == Vec3::zeros() || n.z < 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum BoundaryClass {
    NonEdge = 0,
    Occlusion = 1,
    Contact = 2,
}

impl BoundaryClass {
    pub fn from_u8(label: u8) -> Option<Self> {
        match label {
            0 => Some(Self::NonEdge),
            1 => Some(Self::Occlusion),
            2 => Some(Self::Contact),
            _ => None,
        }
    }
}

/// Boundary class labels plus the per-pixel occlusion probability that drives the
/// normal-term down-weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMap {
    width: usize,
    height: usize,
    labels: Vec<BoundaryClass>,
    occlusion_prob: Vec<f64>,
}

impl BoundaryMap {
    /// Hard labels; occlusion probability is 1 on occlusion pixels and 0 elsewhere.
    pub fn from_labels(width: usize, height: usize, labels: Vec<BoundaryClass>) -> Result<Self> {
        check_len(width, height, labels.len())?;
        let occlusion_prob = labels
            .iter()
            .map(|l| if *l == BoundaryClass::Occlusion { 1.0 } else { 0.0 })
            .collect();
        Ok(Self {
            width,
            height,
            labels,
            occlusion_prob,
        })
    }

    pub fn from_raw_labels(width: usize, height: usize, labels: &[u8]) -> Result<Self> {
        let labels = labels
            .iter()
            .map(|l| {
                BoundaryClass::from_u8(*l)
                    .ok_or_else(|| Error::Invalid(format!("boundary label {l} not in {{0,1,2}}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_labels(width, height, labels)
    }

    pub fn with_occlusion_prob(
        width: usize,
        height: usize,
        labels: Vec<BoundaryClass>,
        occlusion_prob: Vec<f64>,
    ) -> Result<Self> {
        check_len(width, height, labels.len())?;
        check_len(width, height, occlusion_prob.len())?;
        if let Some(p) = occlusion_prob.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
            return Err(Error::Invalid(format!("occlusion probability {p} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            labels,
            occlusion_prob,
        })
    }

    pub fn non_edge(width: usize, height: usize) -> Result<Self> {
        Self::from_labels(width, height, vec![BoundaryClass::NonEdge; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[BoundaryClass] {
        &self.labels
    }

    pub fn label(&self, u: usize, v: usize) -> BoundaryClass {
        self.labels[v * self.width + u]
    }

    pub fn occlusion_prob(&self) -> &[f64] {
        &self.occlusion_prob
    }

    /// Whether the probability field is exactly the indicator of the occlusion labels.
    pub fn is_binary(&self) -> bool {
        self.labels.iter().zip(&self.occlusion_prob).all(|(l, p)| {
            *p == if *l == BoundaryClass::Occlusion { 1.0 } else { 0.0 }
        })
    }

    pub fn count(&self, class: BoundaryClass) -> usize {
        self.labels.iter().filter(|l| **l == class).count()
    }
}

/// Per-pixel transparency flags; `true` marks a transparent surface.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransparencyMask {
    width: usize,
    height: usize,
    values: Vec<bool>,
}

impl TransparencyMask {
    pub fn new(width: usize, height: usize, values: Vec<bool>) -> Result<Self> {
        check_len(width, height, values.len())?;
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        Self::new(width, height, pixels(width, height).map(|(u, v)| f(u, v)).collect())
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn full(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![true; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.values[v * self.width + u]
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|m| **m).count()
    }
}
