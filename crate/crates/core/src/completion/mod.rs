//! Depth completion by global optimization.
//!
//! Depth under the transparency mask is discarded, then every pixel depth is solved
//! for jointly by minimising
//!
//! ```text
//! E = lambda_d * E_data + lambda_s * E_smooth + lambda_n * E_normal * B
//! ```
//!
//! where `B = (1 - p_occ)^2` relaxes the normal constraints across likely occlusion
//! boundaries.

mod regions;
mod solver;
mod system;

pub use regions::{detect_indeterminate_regions, Region, DEFAULT_B_CUT};
pub use solver::{solve, Solution, SolveDiagnostics, SolverConfig};
pub use system::{build_system, ConstraintRow, EnergyBreakdown, SparseSystem, StencilMatrix, TermKind};

use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::raster::{check_dims, BoundaryMap, DepthImage, NormalMap, TransparencyMask};
use crate::scene::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyWeights {
    pub lambda_d: f64,
    pub lambda_s: f64,
    pub lambda_n: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self {
            lambda_d: 1000.0,
            lambda_s: 0.001,
            lambda_n: 1.0,
        }
    }
}

impl EnergyWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_d, self.lambda_s, self.lambda_n];
        if all.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::Config(format!("energy weights must be non-negative: {self:?}")));
        }
        if all.iter().all(|l| *l == 0.0) {
            return Err(Error::Config("energy weights are all zero".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            lambda_d: self.lambda_d * c,
            lambda_s: self.lambda_s * c,
            lambda_n: self.lambda_n * c,
        }
    }
}

/// Per-pixel multiplier in `[0, 1]` for the normal terms.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl WeightField {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Invalid(format!(
                "weight field {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(b) = values.iter().find(|b| !(**b >= 0.0 && **b <= 1.0)) {
            return Err(Error::Invalid(format!("boundary weight {b} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![1.0; width * height],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Removes depth under the transparency mask.
pub fn clean_depth(raw: &DepthImage, mask: &TransparencyMask) -> Result<DepthImage> {
    check_dims("mask", raw.dims(), mask.dims())?;
    Ok(raw.with_invalidated(
        mask.values()
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(i, _)| i),
    ))
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

fn blur(values: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; values.len()];
    for v in 0..height {
        for u in 0..width {
            tmp[v * width + u] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * values[v * width + clamp(u as isize + k as isize - radius, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; values.len()];
    for v in 0..height {
        for u in 0..width {
            out[v * width + u] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[clamp(v as isize + k as isize - radius, height) * width + u])
                .sum();
        }
    }
    out
}

/// `B = (1 - p)^2` where `p` is the occlusion probability, optionally Gaussian-blurred.
/// Contact edges carry `p = 0` and leave `B` untouched.
pub fn boundary_downweight(boundary: &BoundaryMap, smoothing_sigma: f64) -> WeightField {
    let (w, h) = boundary.dims();
    let p = if smoothing_sigma > 0.0 {
        blur(boundary.occlusion_prob(), w, h, smoothing_sigma)
    } else {
        boundary.occlusion_prob().to_vec()
    };
    WeightField {
        width: w,
        height: h,
        values: p
            .into_iter()
            .map(|p| {
                let q = 1.0 - p.clamp(0.0, 1.0);
                q * q
            })
            .collect(),
    }
}

/// Switches reproducing the ablation conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    /// Remove depth under the transparency mask before optimizing.
    pub use_mask: bool,
    /// Down-weight normal terms near occlusion boundaries.
    pub use_boundary_weighting: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            use_mask: true,
            use_boundary_weighting: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompletionConfig {
    pub weights: EnergyWeights,
    pub solver: SolverConfig,
    /// Gaussian sigma (pixels) applied to occlusion probabilities; 0 disables.
    pub boundary_sigma: f64,
    pub b_cut: f64,
    pub flags: AblationFlags,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self {
            weights: EnergyWeights::default(),
            solver: SolverConfig::default(),
            boundary_sigma: 0.0,
            b_cut: DEFAULT_B_CUT,
            flags: AblationFlags::default(),
        }
    }
}

/// Everything the optimizer consumes for one frame.
#[derive(Debug, Clone, Copy)]
pub struct CompletionInputs<'a> {
    pub intrinsics: &'a CameraIntrinsics,
    pub raw_depth: &'a DepthImage,
    pub normals: &'a NormalMap,
    pub mask: &'a TransparencyMask,
    pub boundary: &'a BoundaryMap,
}

impl<'a> CompletionInputs<'a> {
    /// The scene's pipeline inputs (not its ground truth).
    pub fn from_scene(scene: &'a Scene) -> Self {
        Self {
            intrinsics: &scene.intrinsics,
            raw_depth: &scene.raw_depth,
            normals: &scene.input_normals,
            mask: &scene.input_mask,
            boundary: &scene.input_boundary,
        }
    }
}

/// Cleans, weights, assembles and solves. The returned diagnostics include the
/// missing-depth regions with their determinacy flags.
pub fn complete_depth(inputs: &CompletionInputs<'_>, cfg: &CompletionConfig) -> Result<Solution> {
    let dims = inputs.intrinsics.dims();
    check_dims("raw depth", dims, inputs.raw_depth.dims())?;
    check_dims("normals", dims, inputs.normals.dims())?;
    check_dims("mask", dims, inputs.mask.dims())?;
    check_dims("boundary", dims, inputs.boundary.dims())?;

    let cleaned = if cfg.flags.use_mask {
        clean_depth(inputs.raw_depth, inputs.mask)?
    } else {
        inputs.raw_depth.clone()
    };
    let b = if cfg.flags.use_boundary_weighting {
        boundary_downweight(inputs.boundary, cfg.boundary_sigma)
    } else {
        WeightField::ones(dims.0, dims.1)
    };
    let sys = build_system(&cleaned, inputs.normals, &b, inputs.intrinsics, &cfg.weights)?;
    let mut solution = solve(&sys, &cfg.solver)?;
    solution.diagnostics.regions = detect_indeterminate_regions(&cleaned, &b, cfg.b_cut)?;
    Ok(solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Vec3;
    use crate::raster::BoundaryClass;

    #[test]
    fn clean_single_pixel() {
        let raw = DepthImage::constant(8, 10, 0.81).unwrap();
        let mask = TransparencyMask::from_fn(8, 10, |u, v| (u, v) == (3, 7)).unwrap();
        let out = clean_depth(&raw, &mask).unwrap();
        for v in 0..10 {
            for u in 0..8 {
                let expected = if (u, v) == (3, 7) { 0.0 } else { 0.81 };
                assert_eq!(out.get(u, v), expected);
            }
        }
        assert_eq!(raw.get(3, 7), 0.81);
    }

    #[test]
    fn clean_identity_and_full() {
        let raw = DepthImage::from_fn(5, 5, |u, v| 0.5 + 0.01 * (u + v) as f64).unwrap();
        assert_eq!(clean_depth(&raw, &TransparencyMask::empty(5, 5).unwrap()).unwrap(), raw);
        let all = clean_depth(&raw, &TransparencyMask::full(5, 5).unwrap()).unwrap();
        assert_eq!(all.valid_count(), 0);
        assert!(clean_depth(&raw, &TransparencyMask::empty(4, 5).unwrap()).is_err());
    }

    #[test]
    fn downweight_values() {
        let none = BoundaryMap::non_edge(4, 4).unwrap();
        assert!(boundary_downweight(&none, 0.0).values().iter().all(|b| *b == 1.0));
        let hard = BoundaryMap::from_raw_labels(3, 1, &[0, 1, 2]).unwrap();
        assert_eq!(boundary_downweight(&hard, 0.0).values(), &[1.0, 0.0, 1.0]);
        let soft = BoundaryMap::with_occlusion_prob(1, 1, vec![BoundaryClass::NonEdge], vec![0.5]).unwrap();
        assert_eq!(boundary_downweight(&soft, 0.0).values(), &[0.25]);
    }

    #[test]
    fn blurred_downweight_stays_in_unit_interval() {
        let b = BoundaryMap::from_raw_labels(9, 1, &[0, 0, 0, 0, 1, 0, 0, 0, 0]).unwrap();
        let w = boundary_downweight(&b, 1.0);
        assert!(w.values().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(w.values()[4] > 0.0 && w.values()[4] < w.values()[3]);
        assert!(w.values()[3] < w.values()[0]);
    }

    #[test]
    fn weights_validation() {
        assert!(EnergyWeights::default().validate().is_ok());
        let zero = EnergyWeights {
            lambda_d: 0.0,
            lambda_s: 0.0,
            lambda_n: 0.0,
        };
        assert!(zero.validate().is_err());
        let negative = EnergyWeights {
            lambda_s: -1.0,
            ..Default::default()
        };
        assert!(negative.validate().is_err());
    }

    #[test]
    fn uncorrupted_frame_is_a_fixed_point() {
        let (w, h) = (24, 18);
        let intr = CameraIntrinsics::new(40.0, 40.0, 12.0, 9.0, w, h).unwrap();
        let depth = DepthImage::constant(w, h, 0.6).unwrap();
        let normals = NormalMap::constant(w, h, Vec3::new(0.0, 0.0, -1.0)).unwrap();
        let mask = TransparencyMask::empty(w, h).unwrap();
        let boundary = BoundaryMap::non_edge(w, h).unwrap();
        let inputs = CompletionInputs {
            intrinsics: &intr,
            raw_depth: &depth,
            normals: &normals,
            mask: &mask,
            boundary: &boundary,
        };
        let sol = complete_depth(&inputs, &CompletionConfig::default()).unwrap();
        for (a, b) in sol.depth.values().iter().zip(depth.values()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(sol.diagnostics.regions.is_empty());
    }
}
