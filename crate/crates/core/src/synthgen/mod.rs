//! Synthetic oracle scenes: analytic ray casting of primitive arrangements, ground-truth
//! boundary labelling, the transparent-surface sensor error model and a perturbation
//! model standing in for learned predictions.

mod boundaries;
mod corruption;
mod perturb;
mod primitives;
pub mod recipe;

pub use boundaries::{derive_boundaries, BoundaryParams};
pub use corruption::{corrupt_depth, CorruptionModel};
pub use perturb::{perturb_inputs, PerturbationModel};
pub use primitives::{first_hit, raycast, Primitive, RenderOutput, Shape};

use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::raster::DEFAULT_Z_MAX;
use crate::scene::{Scene, SceneMetadata};

pub const MAX_TRANSPARENT_PRIMITIVES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub scene_id: String,
    pub intrinsics: CameraIntrinsics,
    pub primitives: Vec<Primitive>,
    /// Index into `primitives` of the support plane.
    pub support_plane: usize,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        for p in &self.primitives {
            p.shape.validate()?;
        }
        match self.primitives.get(self.support_plane) {
            Some(Primitive {
                shape: Shape::Plane { .. },
                ..
            }) => {}
            _ => {
                return Err(Error::InvalidSpec(format!(
                    "support plane index {} does not name a plane",
                    self.support_plane
                )))
            }
        }
        let transparent = self.primitives.iter().filter(|p| p.transparent).count();
        if !(1..=MAX_TRANSPARENT_PRIMITIVES).contains(&transparent) {
            return Err(Error::InvalidSpec(format!(
                "scene needs 1 to {MAX_TRANSPARENT_PRIMITIVES} transparent primitives, has {transparent}"
            )));
        }
        Ok(())
    }
}

/// Renders ground truth for `spec`. The returned scene is uncorrupted: its inputs
/// equal its ground truth, with boundaries derived under `BoundaryParams::default()`.
pub fn render_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let out = raycast(&spec.intrinsics, &spec.primitives, DEFAULT_Z_MAX)?;
    let mask = out.transparency(&spec.primitives);
    let boundary = derive_boundaries(&out.depth, &mask, &BoundaryParams::default())?;
    Scene::from_ground_truth(
        spec.intrinsics,
        out.depth,
        out.normals,
        mask,
        boundary,
        SceneMetadata {
            scene_id: spec.scene_id.clone(),
            seed: spec.seed,
            primitives: spec.primitives.clone(),
            support_plane: Some(spec.support_plane),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Vec3;

    fn spec(primitives: Vec<Primitive>, support: usize) -> SceneSpec {
        SceneSpec {
            scene_id: "t".into(),
            intrinsics: CameraIntrinsics::new(60.0, 60.0, 16.0, 12.0, 32, 24).unwrap(),
            primitives,
            support_plane: support,
            seed: 0,
        }
    }

    fn table() -> Primitive {
        Primitive::opaque(Shape::Plane {
            point: Vec3::new(0.0, 0.0, 0.8),
            normal: Vec3::new(0.0, 0.0, -1.0),
        })
    }

    fn ball() -> Primitive {
        Primitive::transparent(Shape::Sphere {
            center: Vec3::new(0.0, 0.0, 0.5),
            radius: 0.1,
        })
    }

    #[test]
    fn spec_validation() {
        assert!(spec(vec![table(), ball()], 0).validate().is_ok());
        assert!(spec(vec![table(), ball()], 1).validate().is_err());
        assert!(spec(vec![table()], 0).validate().is_err());
        assert!(spec(vec![table(), ball(), ball(), ball(), ball(), ball(), ball()], 0)
            .validate()
            .is_err());
    }

    #[test]
    fn rendering_is_deterministic_and_fixed_point() {
        let s = spec(vec![table(), ball()], 0);
        let a = render_scene(&s).unwrap();
        let b = render_scene(&s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.raw_depth, a.gt_depth);
        assert_eq!(a.input_normals, a.gt_normals);
        assert_eq!(a.input_mask, a.gt_mask);
        assert!(a.gt_mask.get(16, 12) && !a.gt_mask.get(0, 0));
        assert!(a.gt_normals.is_camera_facing());
    }
}
