//! Perturbations of the ground truth that emulate imperfect normal, boundary and mask
//! predictions.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::Vec3;
use crate::error::{Error, Result};
use crate::raster::{BoundaryClass, BoundaryMap, NormalMap, TransparencyMask};
use crate::scene::Scene;
use crate::seed::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationModel {
    /// Scale of the per-pixel normal rotation, degrees.
    pub normal_angle_sigma: f64,
    /// Fraction of boundary pixels relabelled non-edge.
    pub boundary_dropout: f64,
    /// Dilation radius for boundary labels, pixels.
    pub boundary_dilation: usize,
    pub mask_fn_rate: f64,
    pub mask_fp_rate: f64,
    pub seed: u64,
}

impl Default for PerturbationModel {
    fn default() -> Self {
        Self::identity()
    }
}

impl PerturbationModel {
    pub fn identity() -> Self {
        Self {
            normal_angle_sigma: 0.0,
            boundary_dropout: 0.0,
            boundary_dilation: 0,
            mask_fn_rate: 0.0,
            mask_fp_rate: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [
            ("boundary_dropout", self.boundary_dropout),
            ("mask_fn_rate", self.mask_fn_rate),
            ("mask_fp_rate", self.mask_fp_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} {rate} outside [0, 1]")));
            }
        }
        if !(self.normal_angle_sigma >= 0.0) {
            return Err(Error::Config("normal_angle_sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// Returns `scene` with `input_normals`, `input_boundary` and `input_mask` regenerated
/// from ground truth under `model`.
pub fn perturb_inputs(scene: &Scene, model: &PerturbationModel) -> Result<Scene> {
    model.validate()?;
    let mut out = scene.clone();
    out.input_normals = perturb_normals(&scene.gt_normals, model)?;
    out.input_boundary = perturb_boundary(&scene.gt_boundary, model)?;
    out.input_mask = perturb_mask(&scene.gt_mask, model)?;
    Ok(out)
}

fn tangent_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let e1 = n.cross(&helper).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

fn perturb_normals(gt: &NormalMap, model: &PerturbationModel) -> Result<NormalMap> {
    if model.normal_angle_sigma == 0.0 {
        return Ok(gt.clone());
    }
    let mut rng = substream(model.seed, "normals");
    let angle = Normal::new(0.0, model.normal_angle_sigma.to_radians())
        .map_err(|e| Error::Config(format!("normal_angle_sigma: {e}")))?;
    let values = gt
        .values()
        .iter()
        .map(|n| {
            if *n == Vec3::zeros() {
                return *n;
            }
            let theta: f64 = angle.sample(&mut rng);
            let theta = theta.abs();
            let phi = rng.random_range(0.0..TAU);
            let (e1, e2) = tangent_basis(n);
            let axis_dir = e1 * phi.cos() + e2 * phi.sin();
            let mut rotated = (n * theta.cos() + axis_dir * theta.sin()).normalize();
            if rotated.z.signum() != n.z.signum() {
                rotated.z = -rotated.z;
            }
            rotated
        })
        .collect();
    NormalMap::new(gt.width(), gt.height(), values)
}

fn perturb_boundary(gt: &BoundaryMap, model: &PerturbationModel) -> Result<BoundaryMap> {
    if model.boundary_dropout == 0.0 && model.boundary_dilation == 0 {
        return Ok(gt.clone());
    }
    let (w, h) = gt.dims();
    let mut labels = gt.labels().to_vec();
    if model.boundary_dropout > 0.0 {
        let mut rng = substream(model.seed, "boundary");
        for l in labels.iter_mut() {
            if *l != BoundaryClass::NonEdge && rng.random::<f64>() < model.boundary_dropout {
                *l = BoundaryClass::NonEdge;
            }
        }
    }
    let r = model.boundary_dilation as isize;
    if r > 0 {
        let src = labels.clone();
        for v in 0..h as isize {
            for u in 0..w as isize {
                let i = v as usize * w + u as usize;
                if src[i] != BoundaryClass::NonEdge {
                    continue;
                }
                let mut near = BoundaryClass::NonEdge;
                for dv in -r..=r {
                    for du in -r..=r {
                        let (x, y) = (u + du, v + dv);
                        if x < 0 || y < 0 || x as usize >= w || y as usize >= h {
                            continue;
                        }
                        match src[y as usize * w + x as usize] {
                            BoundaryClass::Occlusion => near = BoundaryClass::Occlusion,
                            BoundaryClass::Contact if near == BoundaryClass::NonEdge => {
                                near = BoundaryClass::Contact
                            }
                            _ => {}
                        }
                    }
                }
                labels[i] = near;
            }
        }
    }
    BoundaryMap::from_labels(w, h, labels)
}

fn perturb_mask(gt: &TransparencyMask, model: &PerturbationModel) -> Result<TransparencyMask> {
    if model.mask_fn_rate == 0.0 && model.mask_fp_rate == 0.0 {
        return Ok(gt.clone());
    }
    let mut rng = substream(model.seed, "mask");
    let values = gt
        .values()
        .iter()
        .map(|m| {
            let rate = if *m {
                model.mask_fn_rate
            } else {
                model.mask_fp_rate
            };
            let flip = rng.random::<f64>() < rate;
            *m != flip
        })
        .collect();
    TransparencyMask::new(gt.width(), gt.height(), values)
}
