//! Pinhole camera model.
//!
//! Frame convention: x right, y down, z forward into the scene. Integer pixel
//! coordinates `(u, v)` address column `u` and row `v`; the pixel centre is at the
//! integer coordinate itself.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIntrinsics")]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Deserialize)]
struct RawIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

impl TryFrom<RawIntrinsics> for CameraIntrinsics {
    type Error = Error;

    fn try_from(r: RawIntrinsics) -> Result<Self> {
        CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::Invalid(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !(cx > 0.0 && cx < width as f64 && cy > 0.0 && cy < height as f64) {
            return Err(Error::Invalid(format!(
                "principal point ({cx}, {cy}) outside image {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Intrinsics of a RealSense D415 colour stream (1280x720, fx = fy = 920 px, centred
    /// principal point) rescaled to `width` x `height`.
    pub fn d415_like(width: usize, height: usize) -> Self {
        let sx = width as f64 / 1280.0;
        let sy = height as f64 / 720.0;
        Self {
            fx: 920.0 * sx,
            fy: 920.0 * sy,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Projects a camera-frame point onto the image plane.
    pub fn project(&self, point: &Vec3) -> Result<(f64, f64)> {
        if !(point.z > 0.0) {
            return Err(Error::Domain(format!(
                "cannot project point with z = {}",
                point.z
            )));
        }
        Ok((
            self.fx * point.x / point.z + self.cx,
            self.fy * point.y / point.z + self.cy,
        ))
    }

    /// Lifts pixel `(u, v)` at z-depth `depth` back into the camera frame.
    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Result<Vec3> {
        if !(depth > 0.0) {
            return Err(Error::Domain(format!(
                "cannot backproject non-positive depth {depth}"
            )));
        }
        Ok(self.ray(u, v) * depth)
    }

    /// `K^-1 [u, v, 1]`: the ray through pixel `(u, v)` scaled to unit z.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vga() -> CameraIntrinsics {
        CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn principal_ray_projects_to_principal_point() {
        let k = vga();
        assert_eq!(k.project(&Vec3::new(0.0, 0.0, 0.5)).unwrap(), (320.0, 240.0));
        assert_eq!(
            k.backproject(320.0, 240.0, 0.5).unwrap(),
            Vec3::new(0.0, 0.0, 0.5)
        );
    }

    #[test]
    fn off_axis_projection_matches_hand_computation() {
        let k = vga();
        let (u, v) = k.project(&Vec3::new(0.1, 0.0, 0.5)).unwrap();
        assert!((u - 440.0).abs() < 1e-12);
        assert_eq!(v, 240.0);
        let p = k.backproject(440.0, 240.0, 0.5).unwrap();
        assert!((p - Vec3::new(0.1, 0.0, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn backprojection_is_homogeneous_in_depth() {
        let k = vga();
        let p1 = k.backproject(17.0, 401.0, 1.0).unwrap();
        let p2 = k.backproject(17.0, 401.0, 2.0).unwrap();
        assert_eq!(p2, p1 * 2.0);
    }

    #[test]
    fn domain_errors() {
        let k = vga();
        assert!(matches!(
            k.project(&Vec3::new(0.0, 0.0, 0.0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(k.backproject(1.0, 1.0, -0.1), Err(Error::Domain(_))));
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
    }

    #[test]
    fn deserialization_enforces_invariants() {
        let bad = r#"{"fx":600,"fy":600,"cx":700,"cy":240,"width":640,"height":480}"#;
        assert!(serde_json::from_str::<CameraIntrinsics>(bad).is_err());
        let good = serde_json::to_string(&vga()).unwrap();
        assert_eq!(serde_json::from_str::<CameraIntrinsics>(&good).unwrap(), vga());
    }

    proptest! {
        #[test]
        fn project_backproject_round_trip(u in 0.0f64..640.0, v in 0.0f64..480.0, d in 0.05f64..10.0) {
            let k = vga();
            let p = k.backproject(u, v, d).unwrap();
            let (u2, v2) = k.project(&p).unwrap();
            prop_assert!((u2 - u).abs() < 1e-9 && (v2 - v).abs() < 1e-9);
            let p2 = k.backproject(u2, v2, p.z).unwrap();
            prop_assert!((p2 - p).norm() <= 1e-9 * p.norm());
        }
    }
}
