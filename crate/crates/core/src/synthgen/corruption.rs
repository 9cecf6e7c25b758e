//! Sensor error model for transparent surfaces: missing depth (Type I) and depth that
//! passes through the object to the background (Type II), plus Gaussian noise on
//! opaque surfaces.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{DepthImage, DEFAULT_Z_MAX};
use crate::scene::Scene;
use crate::seed::substream;
use crate::synthgen::primitives::first_hit;
use crate::synthgen::Primitive;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionModel {
    /// Fraction of transparent pixels turned into holes.
    pub type1_hole_rate: f64,
    /// Radius of each hole blob in pixels.
    pub type1_blob_radius: f64,
    /// Replace transparent depth with whatever lies behind the transparent objects.
    pub type2_passthrough: bool,
    /// Standard deviation of additive noise on opaque pixels, meters.
    pub depth_noise_sigma: f64,
    pub seed: u64,
}

impl Default for CorruptionModel {
    fn default() -> Self {
        Self::identity()
    }
}

impl CorruptionModel {
    pub fn identity() -> Self {
        Self {
            type1_hole_rate: 0.0,
            type1_blob_radius: 3.0,
            type2_passthrough: false,
            depth_noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.type1_hole_rate) {
            return Err(Error::Config(format!(
                "type1_hole_rate {} outside [0, 1]",
                self.type1_hole_rate
            )));
        }
        if !(self.type1_blob_radius >= 0.0) || !(self.depth_noise_sigma >= 0.0) {
            return Err(Error::Config(
                "blob radius and noise sigma must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Produces the raw sensor depth for `scene` from its ground truth.
pub fn corrupt_depth(scene: &Scene, model: &CorruptionModel) -> Result<DepthImage> {
    model.validate()?;
    let (w, h) = scene.dims();
    let mask = scene.gt_mask.values();
    let mut depth = scene.gt_depth.values().to_vec();

    if model.type2_passthrough {
        let behind: Vec<Primitive> = scene
            .metadata
            .primitives
            .iter()
            .filter(|p| !p.transparent)
            .cloned()
            .collect();
        for (i, d) in depth.iter_mut().enumerate() {
            if mask[i] {
                *d = match first_hit(&scene.intrinsics, &behind, i % w, i / w) {
                    Some((_, t, _)) if t <= DEFAULT_Z_MAX => t,
                    _ => 0.0,
                };
            }
        }
    }

    if model.type1_hole_rate > 0.0 {
        let mut rng = substream(model.seed, "type1");
        let mut remaining: Vec<usize> = (0..w * h).filter(|i| mask[*i]).collect();
        let target = (model.type1_hole_rate * remaining.len() as f64).round() as usize;
        let mut holed = vec![false; w * h];
        let mut count = 0;
        let r = model.type1_blob_radius;
        let reach = r.floor() as isize;
        while count < target {
            let centre = remaining[rng.random_range(0..remaining.len())];
            let (cu, cv) = ((centre % w) as isize, (centre / w) as isize);
            'blob: for dv in -reach..=reach {
                for du in -reach..=reach {
                    let (u, v) = (cu + du, cv + dv);
                    if u < 0 || v < 0 || u as usize >= w || v as usize >= h {
                        continue;
                    }
                    if ((du * du + dv * dv) as f64) > r * r {
                        continue;
                    }
                    let i = v as usize * w + u as usize;
                    if mask[i] && !holed[i] {
                        holed[i] = true;
                        count += 1;
                        if count == target {
                            break 'blob;
                        }
                    }
                }
            }
            remaining.retain(|i| !holed[*i]);
        }
        for (d, hole) in depth.iter_mut().zip(&holed) {
            if *hole {
                *d = 0.0;
            }
        }
    }

    if model.depth_noise_sigma > 0.0 {
        let mut rng = substream(model.seed, "noise");
        let noise = Normal::new(0.0, model.depth_noise_sigma)
            .map_err(|e| Error::Config(format!("noise sigma: {e}")))?;
        for (i, d) in depth.iter_mut().enumerate() {
            if !mask[i] && *d > 0.0 {
                let noisy = *d + noise.sample(&mut rng);
                if noisy > 0.0 && noisy <= DEFAULT_Z_MAX {
                    *d = noisy;
                }
            }
        }
    }

    DepthImage::new(w, h, depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{CameraIntrinsics, Vec3};
    use crate::synthgen::{render_scene, SceneSpec, Shape};

    fn sphere_over_plane() -> Scene {
        render_scene(&SceneSpec {
            scene_id: "sphere".into(),
            intrinsics: CameraIntrinsics::new(120.0, 120.0, 32.0, 24.0, 64, 48).unwrap(),
            primitives: vec![
                Primitive::opaque(Shape::Plane {
                    point: Vec3::new(0.0, 0.0, 0.8),
                    normal: Vec3::new(0.0, 0.0, -1.0),
                }),
                Primitive::transparent(Shape::Sphere {
                    center: Vec3::new(0.0, 0.0, 0.5),
                    radius: 0.1,
                }),
            ],
            support_plane: 0,
            seed: 1,
        })
        .unwrap()
    }

    #[test]
    fn passthrough_returns_background() {
        let scene = sphere_over_plane();
        let model = CorruptionModel {
            type2_passthrough: true,
            ..CorruptionModel::identity()
        };
        let raw = corrupt_depth(&scene, &model).unwrap();
        assert!((scene.gt_depth.get(32, 24) - 0.4).abs() < 1e-12);
        assert!((raw.get(32, 24) - 0.8).abs() < 1e-12);
        for (r, g) in raw.values().iter().zip(scene.gt_depth.values()) {
            assert!(*r >= *g);
        }
    }

    #[test]
    fn identity_corruption_is_bit_exact() {
        let scene = sphere_over_plane();
        let raw = corrupt_depth(&scene, &CorruptionModel::identity()).unwrap();
        assert_eq!(raw, scene.gt_depth);
    }

    #[test]
    fn holes_stay_inside_mask_and_hit_target_count() {
        let scene = sphere_over_plane();
        let n_mask = scene.gt_mask.count();
        for rate in [0.3, 1.0] {
            let model = CorruptionModel {
                type1_hole_rate: rate,
                type1_blob_radius: 2.0,
                seed: 5,
                ..CorruptionModel::identity()
            };
            let raw = corrupt_depth(&scene, &model).unwrap();
            let holes: Vec<usize> = (0..raw.values().len()).filter(|i| !raw.is_valid_at(*i)).collect();
            assert_eq!(holes.len(), (rate * n_mask as f64).round() as usize);
            assert!(holes.iter().all(|i| scene.gt_mask.values()[*i]));
            assert_eq!(raw, corrupt_depth(&scene, &model).unwrap());
        }
    }

    #[test]
    fn noise_only_touches_opaque_pixels() {
        let scene = sphere_over_plane();
        let model = CorruptionModel {
            depth_noise_sigma: 0.002,
            seed: 9,
            ..CorruptionModel::identity()
        };
        let raw = corrupt_depth(&scene, &model).unwrap();
        for i in 0..raw.values().len() {
            let same = raw.values()[i] == scene.gt_depth.values()[i];
            assert_eq!(same, scene.gt_mask.values()[i], "pixel {i}");
        }
    }
}
