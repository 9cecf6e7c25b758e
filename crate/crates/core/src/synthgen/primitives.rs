//! Analytic primitives and the per-pixel ray caster.

use nalgebra::Rotation3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, Vec3};
use crate::error::{Error, Result};
use crate::raster::{DepthImage, NormalMap, TransparencyMask};

/// Smallest accepted ray parameter; hits closer than this are ignored.
const T_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Infinite plane through `point` with the given (not necessarily unit) normal.
    Plane { point: Vec3, normal: Vec3 },
    Sphere { center: Vec3, radius: f64 },
    /// Oriented box. `rotation` is an axis-angle vector taking box axes to camera axes.
    Box {
        center: Vec3,
        half_extents: Vec3,
        rotation: Vec3,
    },
    /// Capped cylinder from `base` along `axis` for `height` meters.
    Cylinder {
        base: Vec3,
        axis: Vec3,
        radius: f64,
        height: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(flatten)]
    pub shape: Shape,
    pub transparent: bool,
}

impl Primitive {
    pub fn opaque(shape: Shape) -> Self {
        Self {
            shape,
            transparent: false,
        }
    }

    pub fn transparent(shape: Shape) -> Self {
        Self {
            shape,
            transparent: true,
        }
    }
}

fn finite(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSpec(format!("{msg}: {self:?}")));
        match self {
            Shape::Plane { point, normal } => {
                if !finite(point) || !finite(normal) || normal.norm() == 0.0 {
                    return bad("plane needs a finite point and non-zero normal");
                }
            }
            Shape::Sphere { center, radius } => {
                if !finite(center) || !(*radius > 0.0 && radius.is_finite()) {
                    return bad("sphere needs a finite centre and positive radius");
                }
            }
            Shape::Box {
                center,
                half_extents,
                rotation,
            } => {
                if !finite(center)
                    || !finite(rotation)
                    || !half_extents.iter().all(|h| *h > 0.0 && h.is_finite())
                {
                    return bad("box needs positive half extents");
                }
            }
            Shape::Cylinder {
                base,
                axis,
                radius,
                height,
            } => {
                if !finite(base) || !finite(axis) || axis.norm() == 0.0 {
                    return bad("cylinder needs a non-zero axis");
                }
                if !(*radius > 0.0 && radius.is_finite() && *height > 0.0 && height.is_finite()) {
                    return bad("cylinder needs positive radius and height");
                }
            }
        }
        Ok(())
    }

    /// First intersection of the ray `t * dir` (origin at the camera centre) with
    /// `t > 0`. Returns the ray parameter and the outward unit normal.
    pub fn intersect(&self, dir: &Vec3) -> Option<(f64, Vec3)> {
        match self {
            Shape::Plane { point, normal } => {
                let n = normal.normalize();
                let denom = n.dot(dir);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = n.dot(point) / denom;
                (t > T_EPS).then_some((t, n))
            }
            Shape::Sphere { center, radius } => {
                let a = dir.dot(dir);
                let b = dir.dot(center);
                let c = center.dot(center) - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = [(b - sq) / a, (b + sq) / a]
                    .into_iter()
                    .find(|t| *t > T_EPS)?;
                Some((t, (dir * t - center) / *radius))
            }
            Shape::Box {
                center,
                half_extents,
                rotation,
            } => intersect_box(center, half_extents, rotation, dir),
            Shape::Cylinder {
                base,
                axis,
                radius,
                height,
            } => intersect_cylinder(base, &axis.normalize(), *radius, *height, dir),
        }
    }
}

fn intersect_box(center: &Vec3, half: &Vec3, rotation: &Vec3, dir: &Vec3) -> Option<(f64, Vec3)> {
    let rot = Rotation3::new(*rotation);
    let inv = rot.inverse();
    let origin = inv * (-center);
    let d = inv * dir;
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut near_axis = 0;
    let mut far_axis = 0;
    for i in 0..3 {
        if d[i].abs() < 1e-15 {
            if origin[i].abs() > half[i] {
                return None;
            }
            continue;
        }
        let mut t0 = (-half[i] - origin[i]) / d[i];
        let mut t1 = (half[i] - origin[i]) / d[i];
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        if t0 > t_near {
            t_near = t0;
            near_axis = i;
        }
        if t1 < t_far {
            t_far = t1;
            far_axis = i;
        }
    }
    if t_near > t_far {
        return None;
    }
    let (t, axis) = if t_near > T_EPS {
        (t_near, near_axis)
    } else if t_far > T_EPS {
        (t_far, far_axis)
    } else {
        return None;
    };
    let hit_local = origin + d * t;
    let mut n = Vec3::zeros();
    n[axis] = hit_local[axis].signum();
    Some((t, rot * n))
}

fn intersect_cylinder(base: &Vec3, axis: &Vec3, radius: f64, height: f64, dir: &Vec3) -> Option<(f64, Vec3)> {
    let mut best: Option<(f64, Vec3)> = None;
    let mut consider = |t: f64, n: Vec3| {
        if t > T_EPS && best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, n));
        }
    };

    // Lateral surface: |perp(t*dir - base)| = radius.
    let q = dir - axis * dir.dot(axis);
    let m = -base + axis * base.dot(axis);
    let a = q.dot(&q);
    if a > 1e-18 {
        let b = q.dot(&m);
        let c = m.dot(&m) - radius * radius;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / a, (-b + sq) / a] {
                let p = dir * t;
                let s = (p - base).dot(axis);
                if (0.0..=height).contains(&s) {
                    consider(t, (p - base - axis * s) / radius);
                }
            }
        }
    }

    // Caps.
    let da = dir.dot(axis);
    if da.abs() > 1e-15 {
        for (offset, n) in [(0.0, -axis), (height, *axis)] {
            let cap = base + axis * offset;
            let t = cap.dot(axis) / da;
            let p = dir * t;
            let r = p - cap;
            if r.norm_squared() <= radius * radius {
                consider(t, n);
            }
        }
    }
    best
}

/// Outcome of casting one ray per pixel through a primitive list.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub depth: DepthImage,
    pub normals: NormalMap,
    /// Index of the first primitive hit at each pixel.
    pub hit_ids: Vec<Option<usize>>,
}

impl RenderOutput {
    pub fn transparency(&self, primitives: &[Primitive]) -> TransparencyMask {
        let (w, h) = self.depth.dims();
        let values = self
            .hit_ids
            .iter()
            .map(|id| id.is_some_and(|i| primitives[i].transparent))
            .collect();
        TransparencyMask::new(w, h, values).expect("dimensions come from the render")
    }
}

/// First hit along the pixel ray `(u, v)` over all primitives.
pub fn first_hit(
    intr: &CameraIntrinsics,
    primitives: &[Primitive],
    u: usize,
    v: usize,
) -> Option<(usize, f64, Vec3)> {
    let dir = intr.ray(u as f64, v as f64);
    let mut best: Option<(usize, f64, Vec3)> = None;
    for (i, prim) in primitives.iter().enumerate() {
        if let Some((t, n)) = prim.shape.intersect(&dir) {
            if best.as_ref().is_none_or(|(_, bt, _)| t < *bt) {
                best = Some((i, t, n));
            }
        }
    }
    best
}

/// Casts one ray per pixel. Because the ray direction has unit z, the ray parameter
/// of a hit equals its depth. Hits beyond `z_max` become sentinel pixels. Normals are
/// flipped so that `n_z <= 0`.
pub fn raycast(intr: &CameraIntrinsics, primitives: &[Primitive], z_max: f64) -> Result<RenderOutput> {
    for p in primitives {
        p.shape.validate()?;
    }
    let (w, h) = intr.dims();
    let samples: Vec<(f64, Vec3, Option<usize>)> = (0..w * h)
        .into_par_iter()
        .map(|i| match first_hit(intr, primitives, i % w, i / w) {
            Some((id, t, n)) if t <= z_max => {
                let n = if n.z > 0.0 { -n } else { n };
                (t, n.normalize(), Some(id))
            }
            _ => (0.0, Vec3::zeros(), None),
        })
        .collect();
    let depth = DepthImage::with_z_max(w, h, samples.iter().map(|s| s.0).collect(), z_max)?;
    let normals = NormalMap::new(w, h, samples.iter().map(|s| s.1).collect())?;
    let hit_ids = samples.into_iter().map(|s| s.2).collect();
    Ok(RenderOutput {
        depth,
        normals,
        hit_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(120.0, 120.0, 32.0, 24.0, 64, 48).unwrap()
    }

    #[test]
    fn frontal_plane_principal_pixel() {
        let prims = [Primitive::opaque(Shape::Plane {
            point: Vec3::new(0.0, 0.0, 0.5),
            normal: Vec3::new(0.0, 0.0, 1.0),
        })];
        let out = raycast(&intr(), &prims, 10.0).unwrap();
        assert_eq!(out.depth.get(32, 24), 0.5);
        assert_eq!(out.normals.get(32, 24), Vec3::new(0.0, 0.0, -1.0));
        // every pixel of a frontal plane sits at z = 0.5
        assert!(out.depth.values().iter().all(|d| (*d - 0.5).abs() < 1e-15));
    }

    #[test]
    fn sphere_principal_ray() {
        let prims = [Primitive::transparent(Shape::Sphere {
            center: Vec3::new(0.0, 0.0, 0.5),
            radius: 0.1,
        })];
        let out = raycast(&intr(), &prims, 10.0).unwrap();
        assert!((out.depth.get(32, 24) - 0.4).abs() < 1e-12);
        assert!((out.normals.get(32, 24) - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        assert!(out.transparency(&prims).get(32, 24));
        assert!(out.normals.is_camera_facing());
    }

    #[test]
    fn tilted_plane_matches_closed_form() {
        // z = 0.5 + y * tan(30 deg), i.e. the frontal plane at 0.5 m rotated about x.
        let tilt = 30f64.to_radians();
        let prims = [Primitive::opaque(Shape::Plane {
            point: Vec3::new(0.0, 0.0, 0.5),
            normal: Vec3::new(0.0, tilt.sin(), -tilt.cos()),
        })];
        let k = intr();
        let out = raycast(&k, &prims, 10.0).unwrap();
        for v in 0..48 {
            for u in 0..64 {
                let b = (v as f64 - k.cy) / k.fy;
                let expected = 0.5 / (1.0 - b * tilt.tan());
                assert!((out.depth.get(u, v) - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn nearest_primitive_wins() {
        let prims = [
            Primitive::opaque(Shape::Plane {
                point: Vec3::new(0.0, 0.0, 0.8),
                normal: Vec3::new(0.0, 0.0, -1.0),
            }),
            Primitive::transparent(Shape::Sphere {
                center: Vec3::new(0.0, 0.0, 0.5),
                radius: 0.1,
            }),
        ];
        let out = raycast(&intr(), &prims, 10.0).unwrap();
        assert_eq!(out.hit_ids[24 * 64 + 32], Some(1));
        assert_eq!(out.hit_ids[0], Some(0));
        assert!((out.depth.get(0, 0) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn box_front_face() {
        let dir = Vec3::new(0.0, 0.0, 1.0);
        let shape = Shape::Box {
            center: Vec3::new(0.0, 0.0, 1.0),
            half_extents: Vec3::new(0.1, 0.2, 0.3),
            rotation: Vec3::zeros(),
        };
        let (t, n) = shape.intersect(&dir).unwrap();
        assert!((t - 0.7).abs() < 1e-12);
        assert_eq!(n, Vec3::new(0.0, 0.0, -1.0));
        let rotated = Shape::Box {
            center: Vec3::new(0.0, 0.0, 1.0),
            half_extents: Vec3::new(0.1, 0.1, 0.1),
            rotation: Vec3::new(0.0, std::f64::consts::FRAC_PI_4, 0.0),
        };
        let (t, _) = rotated.intersect(&dir).unwrap();
        assert!((t - (1.0 - 0.1 * 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn cylinder_side_and_cap() {
        // Axis along y (down), base at y = 0.1: the principal ray hits the side.
        let shape = Shape::Cylinder {
            base: Vec3::new(0.0, 0.1, 1.0),
            axis: Vec3::new(0.0, -1.0, 0.0),
            radius: 0.05,
            height: 0.2,
        };
        let (t, n) = shape.intersect(&Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert!((t - 0.95).abs() < 1e-12);
        assert!((n - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        // Axis along z: the principal ray hits the near cap.
        let shape = Shape::Cylinder {
            base: Vec3::new(0.0, 0.0, 1.0),
            axis: Vec3::new(0.0, 0.0, -1.0),
            radius: 0.05,
            height: 0.2,
        };
        let (t, n) = shape.intersect(&Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert!((t - 0.8).abs() < 1e-12);
        assert_eq!(n, Vec3::new(0.0, 0.0, -1.0));
    }

    #[test]
    fn degenerate_primitives_rejected() {
        for shape in [
            Shape::Sphere {
                center: Vec3::new(0.0, 0.0, 1.0),
                radius: 0.0,
            },
            Shape::Cylinder {
                base: Vec3::zeros(),
                axis: Vec3::zeros(),
                radius: 0.1,
                height: 0.1,
            },
            Shape::Plane {
                point: Vec3::zeros(),
                normal: Vec3::zeros(),
            },
        ] {
            assert!(matches!(shape.validate(), Err(Error::InvalidSpec(_))));
        }
    }
}
