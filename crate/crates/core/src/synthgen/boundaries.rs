use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::raster::{check_dims, neighbors4, BoundaryClass, BoundaryMap, DepthImage, TransparencyMask};

/// Depth-jump thresholds separating object silhouettes from surface slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundaryParams {
    /// Absolute jump in meters.
    pub occ_threshold: f64,
    /// Jump relative to the nearer depth.
    pub rel_threshold: f64,
}

impl Default for BoundaryParams {
    fn default() -> Self {
        Self {
            occ_threshold: 0.02,
            rel_threshold: 0.03,
        }
    }
}

impl BoundaryParams {
    fn jump(&self, depth: f64) -> f64 {
        self.occ_threshold.max(self.rel_threshold * depth)
    }
}

/// Labels occlusion boundaries on the near side of every depth discontinuity and
/// contact edges on transparent-mask borders whose outside neighbour continues the
/// surface. A sentinel neighbour counts as infinitely far.
pub fn derive_boundaries(
    depth: &DepthImage,
    mask: &TransparencyMask,
    params: &BoundaryParams,
) -> Result<BoundaryMap> {
    check_dims("mask", depth.dims(), mask.dims())?;
    let (w, h) = depth.dims();
    let mut labels = vec![BoundaryClass::NonEdge; w * h];
    for v in 0..h {
        for u in 0..w {
            if !depth.is_valid(u, v) {
                continue;
            }
            let d = depth.get(u, v);
            let thr = params.jump(d);
            let occluding = neighbors4(u, v, w, h).any(|(x, y)| {
                !depth.is_valid(x, y) || depth.get(x, y) - d > thr
            });
            if occluding {
                labels[v * w + u] = BoundaryClass::Occlusion;
                continue;
            }
            if mask.get(u, v) {
                let touching = neighbors4(u, v, w, h).any(|(x, y)| {
                    !mask.get(x, y) && depth.is_valid(x, y) && (depth.get(x, y) - d).abs() <= thr
                });
                if touching {
                    labels[v * w + u] = BoundaryClass::Contact;
                }
            }
        }
    }
    BoundaryMap::from_labels(w, h, labels)
}
