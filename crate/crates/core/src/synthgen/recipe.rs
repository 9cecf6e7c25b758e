//! Seeded random tabletop arrangements for batch generation.
//!
//! Objects are posed explicitly on a tilted support plane. Spheres sink slightly into
//! it; boxes and cylinders stand on it.

use nalgebra::{Rotation3, Unit};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, Vec3};
use crate::error::{Error, Result};
use crate::raster::DEFAULT_Z_MAX;
use crate::scene::Scene;
use crate::seed::{derive_seed, substream};
use crate::synthgen::{
    corrupt_depth, derive_boundaries, perturb_inputs, raycast, BoundaryParams, CorruptionModel,
    PerturbationModel, Primitive, SceneSpec, Shape,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Sphere,
    Box,
    Cylinder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchConfig {
    pub count: usize,
    pub master_seed: u64,
    pub width: usize,
    pub height: usize,
    /// Overrides the D415-like default camera.
    pub intrinsics: Option<CameraIntrinsics>,
    /// Inclusive range of transparent objects per scene.
    pub transparent_count: [usize; 2],
    pub opaque_count: [usize; 2],
    pub kinds: Vec<ShapeKind>,
    /// Characteristic object radius range, meters.
    pub size_range: [f64; 2],
    /// Distance of the support plane along the optical axis, meters.
    pub table_distance: [f64; 2],
    /// Angle between the support-plane normal and the optical axis, degrees.
    pub table_tilt_deg: [f64; 2],
    /// Fraction of a sphere's radius sunk below the support plane.
    pub sphere_sink: f64,
    pub boundary: BoundaryParams,
    pub corruption: CorruptionModel,
    pub perturbation: PerturbationModel,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            count: 10,
            master_seed: 0,
            width: 256,
            height: 144,
            intrinsics: None,
            transparent_count: [1, 3],
            opaque_count: [0, 1],
            kinds: vec![ShapeKind::Sphere, ShapeKind::Box, ShapeKind::Cylinder],
            size_range: [0.03, 0.06],
            table_distance: [0.6, 0.8],
            table_tilt_deg: [35.0, 50.0],
            sphere_sink: 0.3,
            boundary: BoundaryParams::default(),
            corruption: CorruptionModel {
                type2_passthrough: true,
                ..CorruptionModel::identity()
            },
            perturbation: PerturbationModel::identity(),
        }
    }
}

impl BatchConfig {
    pub fn intrinsics(&self) -> CameraIntrinsics {
        self.intrinsics
            .unwrap_or_else(|| CameraIntrinsics::d415_like(self.width, self.height))
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0] <= r[1] && r[0].is_finite() && r[1].is_finite();
        if self.transparent_count[0] < 1
            || self.transparent_count[1] > super::MAX_TRANSPARENT_PRIMITIVES
            || self.transparent_count[0] > self.transparent_count[1]
        {
            return Err(Error::Config(format!(
                "transparent_count {:?} must lie within [1, {}]",
                self.transparent_count,
                super::MAX_TRANSPARENT_PRIMITIVES
            )));
        }
        if self.opaque_count[0] > self.opaque_count[1] {
            return Err(Error::Config("opaque_count range is reversed".into()));
        }
        if self.kinds.is_empty() {
            return Err(Error::Config("kinds must not be empty".into()));
        }
        if !ordered(self.size_range) || self.size_range[0] <= 0.0 {
            return Err(Error::Config("size_range must be positive and ordered".into()));
        }
        if !ordered(self.table_distance) || self.table_distance[0] <= 0.0 {
            return Err(Error::Config("table_distance must be positive and ordered".into()));
        }
        if !ordered(self.table_tilt_deg) || self.table_tilt_deg[0] < 0.0 || self.table_tilt_deg[1] >= 80.0 {
            return Err(Error::Config("table_tilt_deg must lie within [0, 80)".into()));
        }
        if !(0.0..1.0).contains(&self.sphere_sink) {
            return Err(Error::Config("sphere_sink must lie within [0, 1)".into()));
        }
        self.corruption.validate()?;
        self.perturbation.validate()
    }

    pub fn scene_seed(&self, index: usize) -> u64 {
        derive_seed(self.master_seed, "scene", index as u64)
    }

    pub fn scene_id(index: usize) -> String {
        format!("scene_{index:04}")
    }
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..range[1])
    }
}

struct Placed {
    contact: Vec3,
    footprint: f64,
}

/// Draws the arrangement for scene `index` of the batch.
pub fn random_spec(cfg: &BatchConfig, index: usize) -> Result<SceneSpec> {
    cfg.validate()?;
    let seed = cfg.scene_seed(index);
    let mut rng = substream(seed, "layout");
    let intr = cfg.intrinsics();

    let tilt = uniform(&mut rng, cfg.table_tilt_deg).to_radians();
    let distance = uniform(&mut rng, cfg.table_distance);
    let up = Vec3::new(0.0, -tilt.sin(), -tilt.cos());
    let table_point = Vec3::new(0.0, 0.0, distance);
    let mut primitives = vec![Primitive::opaque(Shape::Plane {
        point: table_point,
        normal: up,
    })];

    let n_transparent = rng.random_range(cfg.transparent_count[0]..=cfg.transparent_count[1]);
    let n_opaque = rng.random_range(cfg.opaque_count[0]..=cfg.opaque_count[1]);
    let mut placed: Vec<Placed> = Vec::new();
    let mut transparent_placed = 0;
    for k in 0..n_transparent + n_opaque {
        let transparent = k < n_transparent;
        for _attempt in 0..64 {
            let size = uniform(&mut rng, cfg.size_range);
            let kind = cfg.kinds[rng.random_range(0..cfg.kinds.len())];
            let u = rng.random_range(0.25..0.75) * intr.width as f64;
            let v = rng.random_range(0.3..0.8) * intr.height as f64;
            let dir = intr.ray(u, v);
            let t = up.dot(&table_point) / up.dot(&dir);
            if !(t > 0.0) {
                continue;
            }
            let contact = dir * t;
            let footprint = size * std::f64::consts::SQRT_2;
            if placed
                .iter()
                .any(|p| (p.contact - contact).norm() < p.footprint + footprint + 0.01)
            {
                continue;
            }
            let shape = pose(kind, size, &contact, &up, cfg.sphere_sink, &mut rng);
            primitives.push(Primitive { shape, transparent });
            placed.push(Placed { contact, footprint });
            if transparent {
                transparent_placed += 1;
            }
            break;
        }
    }
    if transparent_placed == 0 {
        return Err(Error::InvalidSpec(format!(
            "could not place any transparent object in scene {index}"
        )));
    }
    Ok(SceneSpec {
        scene_id: BatchConfig::scene_id(index),
        intrinsics: intr,
        primitives,
        support_plane: 0,
        seed,
    })
}

fn pose(kind: ShapeKind, size: f64, contact: &Vec3, up: &Vec3, sink: f64, rng: &mut ChaCha8Rng) -> Shape {
    // sink flat-bottomed objects by 1 mm so they never float above the plane
    let seat = 0.001;
    match kind {
        ShapeKind::Sphere => Shape::Sphere {
            center: contact + up * (size * (1.0 - sink)),
            radius: size,
        },
        ShapeKind::Cylinder => {
            let height = uniform(rng, [1.5 * size, 3.0 * size]);
            Shape::Cylinder {
                base: contact - up * seat,
                axis: *up,
                radius: size,
                height: height + seat,
            }
        }
        ShapeKind::Box => {
            let half = Vec3::new(
                size,
                uniform(rng, [0.6 * size, size]),
                uniform(rng, [0.6 * size, 1.5 * size]),
            );
            let yaw = rng.random_range(0.0..std::f64::consts::PI);
            let align = Rotation3::rotation_between(&Vec3::z(), up)
                .unwrap_or_else(|| Rotation3::from_axis_angle(&Vec3::x_axis(), std::f64::consts::PI));
            let rot = align * Rotation3::from_axis_angle(&Unit::new_unchecked(Vec3::z()), yaw);
            Shape::Box {
                center: contact + up * (half.z - seat),
                half_extents: half,
                rotation: rot.scaled_axis(),
            }
        }
    }
}

/// Full generation for one batch element: render, derive boundaries, corrupt the depth
/// and perturb the prediction stand-ins.
pub fn generate_scene(cfg: &BatchConfig, index: usize) -> Result<Scene> {
    let spec = random_spec(cfg, index)?;
    scene_from_spec(&spec, &cfg.boundary, &cfg.corruption, &cfg.perturbation)
}

pub fn scene_from_spec(
    spec: &SceneSpec,
    boundary: &BoundaryParams,
    corruption: &CorruptionModel,
    perturbation: &PerturbationModel,
) -> Result<Scene> {
    let mut scene = super::render_scene(spec)?;
    if *boundary != BoundaryParams::default() {
        let gt = derive_boundaries(&scene.gt_depth, &scene.gt_mask, boundary)?;
        scene.gt_boundary = gt.clone();
        scene.input_boundary = gt;
    }
    let corruption = CorruptionModel {
        seed: derive_seed(spec.seed, "corrupt", corruption.seed),
        ..corruption.clone()
    };
    scene.raw_depth = corrupt_depth(&scene, &corruption)?;
    let perturbation = PerturbationModel {
        seed: derive_seed(spec.seed, "perturb", perturbation.seed),
        ..perturbation.clone()
    };
    perturb_inputs(&scene, &perturbation)
}

/// Depth of the support plane alone, used to check object placement.
pub fn support_depth(spec: &SceneSpec) -> Result<crate::raster::DepthImage> {
    let plane = spec.primitives[spec.support_plane].clone();
    Ok(raycast(&spec.intrinsics, &[plane], DEFAULT_Z_MAX)?.depth)
}
