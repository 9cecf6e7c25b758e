//! Top-down orthographic heightmaps for grasp planning.

use nalgebra::{Matrix3, Rotation2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, Vec3};
use crate::error::{Error, Result};
use crate::raster::{check_dims, pixels, DepthImage};

const RIGID_TOL: f64 = 1e-9;

/// Rotation (row-major) plus translation taking camera coordinates to world
/// coordinates: `p_world = R * p_cam + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransform", into = "RawTransform")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransform {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl TryFrom<RawTransform> for RigidTransform {
    type Error = Error;
    fn try_from(raw: RawTransform) -> Result<Self> {
        let r = raw.rotation;
        Self::new(
            Matrix3::new(
                r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
            ),
            Vec3::from(raw.translation),
        )
    }
}

impl From<RigidTransform> for RawTransform {
    fn from(t: RigidTransform) -> Self {
        let m = t.rotation;
        RawTransform {
            rotation: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl RigidTransform {
    /// Rejects anything that is not a proper rotation (orthonormal, determinant +1).
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|x| x.is_finite()) {
            return Err(Error::Config("transform has non-finite entries".into()));
        }
        let off = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if off > RIGID_TOL {
            return Err(Error::Config(format!("rotation is not orthonormal (deviation {off:.3e})")));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > RIGID_TOL {
            return Err(Error::Config(format!("rotation determinant {det} is not +1")));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Camera looking straight down from height `h`: world z up, world y opposite
    /// the image rows.
    pub fn overhead(height: f64) -> Self {
        Self {
            rotation: Matrix3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0)),
            translation: Vec3::new(0.0, 0.0, height),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Bounds {
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub bounds: Bounds,
    /// Metres per heightmap cell.
    pub resolution: f64,
    pub cam_to_world: RigidTransform,
}

/// `n` such that `n - 1 < extent / res <= n`, tolerant to rounding when the ratio is
/// integral.
fn cells_along(extent: f64, res: f64) -> usize {
    let ratio = extent / res;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

impl Workspace {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::Config(format!("resolution {} must be positive", self.resolution)));
        }
        for k in 0..3 {
            let (lo, hi) = (self.bounds.min[k], self.bounds.max[k]);
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::Config(format!("workspace axis {k} has empty extent [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Grid size as (columns along x, rows along y).
    pub fn grid_dims(&self) -> (usize, usize) {
        let b = &self.bounds;
        (
            cells_along(b.max[0] - b.min[0], self.resolution),
            cells_along(b.max[1] - b.min[1], self.resolution),
        )
    }

    /// Cell containing world point `p`, ignoring z. Points on the upper bound belong
    /// to the last cell.
    pub fn cell_of(&self, p: &Vec3) -> Option<(usize, usize)> {
        if !self.bounds.contains(p) {
            return None;
        }
        let (cols, rows) = self.grid_dims();
        let idx = |k: usize, n: usize| (((p[k] - self.bounds.min[k]) / self.resolution).floor() as usize).min(n - 1);
        Some((idx(0, cols), idx(1, rows)))
    }
}

/// One world-frame point per valid depth pixel.
pub fn backproject_cloud(depth: &DepthImage, intr: &CameraIntrinsics, cam_to_world: &RigidTransform) -> Result<Vec<Vec3>> {
    check_dims("intrinsics", depth.dims(), intr.dims())?;
    let (w, h) = depth.dims();
    pixels(w, h)
        .filter(|(u, v)| depth.is_valid(*u, *v))
        .map(|(u, v)| {
            let p = intr.backproject(u as f64, v as f64, depth.get(u, v))?;
            Ok(cam_to_world.apply(&p))
        })
        .collect()
}

/// Grid of maximum world z per cell; row `r`, column `c` covers
/// `[min_x + c*res, min_x + (c+1)*res) x [min_y + r*res, ...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightmap {
    width: usize,
    height: usize,
    resolution: f64,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl Heightmap {
    pub fn new(width: usize, height: usize, resolution: f64, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height || valid.len() != width * height {
            return Err(Error::Invalid(format!("heightmap {width}x{height} with mismatched buffers")));
        }
        if let Some(i) = (0..values.len()).find(|i| valid[*i] && !values[*i].is_finite()) {
            return Err(Error::Invalid(format!("non-finite height at cell {i}")));
        }
        // invalid cells always store 0 so that equality is well defined
        let values = values.into_iter().zip(&valid).map(|(v, ok)| if *ok { v } else { 0.0 }).collect();
        Ok(Self {
            width,
            height,
            resolution,
            values,
            valid,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, c: usize, r: usize) -> Option<f64> {
        let i = r * self.width + c;
        self.valid[i].then_some(self.values[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Highest valid cell value.
    pub fn peak(&self) -> Option<f64> {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, ok)| **ok)
            .map(|(v, _)| *v)
            .reduce(f64::max)
    }
}

pub fn build_heightmap(cloud: &[Vec3], ws: &Workspace) -> Result<Heightmap> {
    ws.validate()?;
    let (cols, rows) = ws.grid_dims();
    let mut values = vec![f64::NEG_INFINITY; cols * rows];
    let mut valid = vec![false; cols * rows];
    for p in cloud {
        if let Some((c, r)) = ws.cell_of(p) {
            let i = r * cols + c;
            valid[i] = true;
            values[i] = values[i].max(p.z);
        }
    }
    Heightmap::new(cols, rows, ws.resolution, values, valid)
}

/// Rounds coordinates within 1e-9 of an integer so that quarter turns land exactly on
/// cell centres.
fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x
    }
}

/// Bilinear sample at fractional cell coordinates; `None` if any source with nonzero
/// weight is invalid or outside the grid.
fn sample(h: &Heightmap, x: f64, y: f64) -> Option<f64> {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let mut acc = 0.0;
    for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
        for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
            let wgt = wx * wy;
            if wgt == 0.0 {
                continue;
            }
            let (cx, cy) = (x0 + dx, y0 + dy);
            if cx < 0.0 || cy < 0.0 || cx >= h.width as f64 || cy >= h.height as f64 {
                return None;
            }
            acc += wgt * h.get(cx as usize, cy as usize)?;
        }
    }
    Some(acc)
}

/// Rotates the map about its centre by `angle` radians (counter-clockwise in
/// column/row coordinates), keeping the grid size.
pub fn rotate(h: &Heightmap, angle: f64) -> Heightmap {
    let centre = Vector2::new((h.width as f64 - 1.0) / 2.0, (h.height as f64 - 1.0) / 2.0);
    // destination -> source uses the inverse rotation
    let inv = Rotation2::new(-angle);
    let cells: Vec<Option<f64>> = (0..h.width * h.height)
        .into_par_iter()
        .map(|i| {
            let d = Vector2::new((i % h.width) as f64, (i / h.width) as f64) - centre;
            let s = inv * d + centre;
            sample(h, snap(s.x), snap(s.y))
        })
        .collect();
    Heightmap::new(
        h.width,
        h.height,
        h.resolution,
        cells.iter().map(|c| c.unwrap_or(0.0)).collect(),
        cells.iter().map(|c| c.is_some()).collect(),
    )
    .expect("rotation preserves dimensions")
}

/// Rotations by `k * 360 / n` degrees for `k = 0..n`; element 0 is the input itself.
pub fn rotation_stack(h: &Heightmap, n: usize) -> Result<Vec<Heightmap>> {
    if n == 0 {
        return Err(Error::Config("rotation count must be at least 1".into()));
    }
    Ok((0..n)
        .map(|k| {
            if k == 0 {
                h.clone()
            } else {
                rotate(h, std::f64::consts::TAU * k as f64 / n as f64)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ws(res: f64) -> Workspace {
        Workspace {
            bounds: Bounds {
                min: [-0.5, -0.5, 0.0],
                max: [0.5, 0.5, 0.5],
            },
            resolution: res,
            cam_to_world: RigidTransform::identity(),
        }
    }

    #[test]
    fn rigid_transform_validation() {
        assert!(RigidTransform::new(Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0)), Vec3::zeros()).is_err());
        assert!(RigidTransform::new(Matrix3::identity() * 2.0, Vec3::zeros()).is_err());
        let t = RigidTransform::overhead(1.0);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<RigidTransform>(&json).unwrap(), t);
        assert!(serde_json::from_str::<RigidTransform>(
            r#"{"rotation":[[1,0,0],[0,1,0],[0,0,-1]],"translation":[0,0,0]}"#
        )
        .is_err());
    }

    #[test]
    fn principal_pixel_backprojects_to_axis() {
        let intr = CameraIntrinsics::new(100.0, 100.0, 2.0, 1.0, 5, 3).unwrap();
        let depth = DepthImage::from_fn(5, 3, |u, v| if (u, v) == (2, 1) { 0.7 } else { 0.0 }).unwrap();
        let cloud = backproject_cloud(&depth, &intr, &RigidTransform::identity()).unwrap();
        assert_eq!(cloud, vec![Vec3::new(0.0, 0.0, 0.7)]);
    }

    #[test]
    fn translation_moves_the_cloud_exactly() {
        let intr = CameraIntrinsics::d415_like(32, 18);
        let depth = DepthImage::from_fn(32, 18, |u, v| 0.5 + 0.01 * (u + v) as f64).unwrap();
        let t = Vec3::new(0.25, -0.5, 2.0);
        let base = backproject_cloud(&depth, &intr, &RigidTransform::identity()).unwrap();
        let moved = backproject_cloud(&depth, &intr, &RigidTransform::new(Matrix3::identity(), t).unwrap()).unwrap();
        for (a, b) in base.iter().zip(&moved) {
            assert_eq!(*b, a + t);
        }
    }

    #[test]
    fn frontal_plane_cloud_is_coplanar() {
        let intr = CameraIntrinsics::d415_like(64, 36);
        let depth = DepthImage::constant(64, 36, 0.6).unwrap();
        let cloud = backproject_cloud(&depth, &intr, &RigidTransform::overhead(1.0)).unwrap();
        assert!(cloud.iter().all(|p| (p.z - 0.4).abs() < 1e-9));
    }

    #[test]
    fn single_point_and_max_rule() {
        let w = ws(0.1);
        assert_eq!(w.grid_dims(), (10, 10));
        let h = build_heightmap(&[Vec3::new(0.05, 0.05, 0.3)], &w).unwrap();
        assert_eq!(h.valid_count(), 1);
        assert_eq!(h.get(5, 5), Some(0.3));
        let h = build_heightmap(&[Vec3::new(0.01, 0.01, 0.1), Vec3::new(0.02, 0.03, 0.2)], &w).unwrap();
        assert_eq!(h.get(5, 5), Some(0.2));
        let h = build_heightmap(&[Vec3::new(0.0, 0.0, 0.9), Vec3::new(2.0, 0.0, 0.1)], &w).unwrap();
        assert_eq!(h.valid_count(), 0);
    }

    #[test]
    fn identity_element_is_bit_exact() {
        let h = build_heightmap(&[Vec3::new(0.12, -0.3, 0.25)], &ws(0.05)).unwrap();
        let stack = rotation_stack(&h, 16).unwrap();
        assert_eq!(stack.len(), 16);
        assert_eq!(stack[0], h);
    }

    fn ramp(n: usize) -> Heightmap {
        let values: Vec<f64> = (0..n * n).map(|i| 0.01 * (i % n) as f64 + 0.003 * (i / n) as f64).collect();
        Heightmap::new(n, n, 0.01, values, vec![true; n * n]).unwrap()
    }

    #[test]
    fn quarter_turns_compose() {
        let h = ramp(9);
        let s = rotation_stack(&h, 4).unwrap();
        let twice = rotation_stack(&s[1], 4).unwrap()[1].clone();
        assert_eq!(twice.valid(), s[2].valid());
        for (a, b) in twice.values().iter().zip(s[2].values()) {
            assert!((a - b).abs() < 1e-6);
        }
        // a full turn of quarter turns is lossless
        let mut x = h.clone();
        for _ in 0..4 {
            x = rotate(&x, std::f64::consts::FRAC_PI_2);
        }
        assert_eq!(x, h);
    }

    #[test]
    fn invalid_cells_propagate() {
        let mut valid = vec![true; 49];
        valid[3 * 7 + 3] = false;
        let h = Heightmap::new(7, 7, 0.01, vec![0.1; 49], valid).unwrap();
        let r = rotate(&h, 0.3);
        assert!(!r.valid()[3 * 7 + 3]);
        assert!(r.valid_count() < 49);
    }

    #[test]
    fn symmetric_disk_agrees_across_orientations() {
        let n = 41;
        let c = (n as f64 - 1.0) / 2.0;
        let inside = |i: usize| {
            let (x, y) = ((i % n) as f64 - c, (i / n) as f64 - c);
            x * x + y * y <= 15.0 * 15.0
        };
        let h = Heightmap::new(n, n, 0.005, vec![0.12; n * n], (0..n * n).map(inside).collect()).unwrap();
        let stack = rotation_stack(&h, 16).unwrap();
        for r in &stack {
            let mut common = 0;
            for i in 0..n * n {
                if r.valid()[i] && h.valid()[i] {
                    common += 1;
                    assert!((r.values()[i] - h.values()[i]).abs() < 1e-6);
                }
            }
            assert!(common > 500);
        }
    }

    proptest! {
        #[test]
        fn heightmap_ignores_cloud_order(
            pts in proptest::collection::vec((-0.6f64..0.6, -0.6f64..0.6, -0.1f64..0.6), 1..60),
            rot in 0usize..60,
        ) {
            let cloud: Vec<Vec3> = pts.iter().map(|(x, y, z)| Vec3::new(*x, *y, *z)).collect();
            let mut shuffled = cloud.clone();
            shuffled.rotate_left(rot % cloud.len());
            shuffled.reverse();
            prop_assert_eq!(build_heightmap(&cloud, &ws(0.07)).unwrap(), build_heightmap(&shuffled, &ws(0.07)).unwrap());
        }

        #[test]
        fn rigid_motion_preserves_distances(
            axis in (-1f64..1.0, -1f64..1.0, 0.1f64..1.0),
            angle in -3.0f64..3.0,
            t in (-1f64..1.0, -1f64..1.0, -1f64..1.0),
        ) {
            let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vec3::new(axis.0, axis.1, axis.2)), angle);
            let tf = RigidTransform::new(*rot.matrix(), Vec3::new(t.0, t.1, t.2)).unwrap();
            let intr = CameraIntrinsics::d415_like(16, 9);
            let depth = DepthImage::from_fn(16, 9, |u, v| 0.3 + 0.02 * u as f64 + 0.01 * v as f64).unwrap();
            let a = backproject_cloud(&depth, &intr, &RigidTransform::identity()).unwrap();
            let b = backproject_cloud(&depth, &intr, &tf).unwrap();
            for i in (0..a.len()).step_by(7) {
                for j in (0..a.len()).step_by(11) {
                    let (da, db) = ((a[i] - a[j]).norm(), (b[i] - b[j]).norm());
                    prop_assert!((da - db).abs() <= 1e-9 * da.max(1.0));
                }
            }
        }
    }
}
