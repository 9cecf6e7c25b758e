//! Evaluation metrics over transparent-object pixels.
//!
//! Every metric takes an evaluation mask and ignores pixels outside it. An empty
//! evaluation set yields `None` rather than a fabricated score.

mod report;
mod resize;

pub use report::{
    ablation_report, write_eval_csv, AblationReport, AblationRow, DirectionCheck, EvalRow, RunMetrics,
    EVAL_CSV_HEADER,
};
pub use resize::{eval_resize_depth, eval_resize_mask, eval_resize_normals, EVAL_HEIGHT, EVAL_WIDTH};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::raster::{check_dims, DepthImage, NormalMap, TransparencyMask};

/// Thresholds X of the δ_X accuracy scores.
pub const DELTA_THRESHOLDS: [f64; 3] = [1.05, 1.10, 1.25];

/// Angular thresholds in degrees.
pub const ANGLE_THRESHOLDS: [f64; 3] = [11.25, 22.5, 30.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub rmse: f64,
    pub rel: f64,
    pub mae: f64,
    pub delta_105: f64,
    pub delta_110: f64,
    pub delta_125: f64,
    pub pixels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalMetrics {
    pub mean_deg: f64,
    pub median_deg: f64,
    pub pct_1125: f64,
    pub pct_225: f64,
    pub pct_30: f64,
    pub pixels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskMetrics {
    pub iou: f64,
    pub tpr: f64,
}

/// Lower median: element `(n - 1) / 2` of the sorted values.
fn lower_median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values[(values.len() - 1) / 2]
}

fn percent(count: usize, total: usize) -> f64 {
    100.0 * count as f64 / total as f64
}

/// Depth errors over pixels where `eval_mask` is set and the ground truth is valid.
/// An invalid prediction counts as depth 0.
pub fn depth_metrics(
    pred: &DepthImage,
    gt: &DepthImage,
    eval_mask: &TransparencyMask,
) -> Result<Option<DepthMetrics>> {
    check_dims("prediction", gt.dims(), pred.dims())?;
    check_dims("evaluation mask", gt.dims(), eval_mask.dims())?;
    let pairs: Vec<(f64, f64)> = eval_mask
        .values()
        .iter()
        .enumerate()
        .filter(|(i, m)| **m && gt.is_valid_at(*i))
        .map(|(i, _)| (pred.values()[i], gt.values()[i]))
        .collect();
    if pairs.is_empty() {
        return Ok(None);
    }
    let n = pairs.len();
    let sq: f64 = pairs.iter().map(|(p, t)| (p - t) * (p - t)).sum();
    let abs: f64 = pairs.iter().map(|(p, t)| (p - t).abs()).sum();
    let ratios: Vec<f64> = pairs.iter().map(|(p, t)| (p - t).abs() / t).collect();
    let delta = |x: f64| percent(ratios.iter().filter(|r| **r < x - 1.0).count(), n);
    Ok(Some(DepthMetrics {
        rmse: (sq / n as f64).sqrt(),
        mae: abs / n as f64,
        delta_105: delta(DELTA_THRESHOLDS[0]),
        delta_110: delta(DELTA_THRESHOLDS[1]),
        delta_125: delta(DELTA_THRESHOLDS[2]),
        rel: lower_median(ratios),
        pixels: n,
    }))
}

/// Angle between two vectors in degrees. An undefined (zero) vector is orthogonal to
/// everything, i.e. 90 degrees.
pub fn angle_deg(a: &crate::Vec3, b: &crate::Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b)).to_degrees()
}

/// Angular errors over pixels where `eval_mask` is set and the ground-truth normal is
/// defined.
pub fn normal_metrics(
    pred: &NormalMap,
    gt: &NormalMap,
    eval_mask: &TransparencyMask,
) -> Result<Option<NormalMetrics>> {
    check_dims("prediction", gt.dims(), pred.dims())?;
    check_dims("evaluation mask", gt.dims(), eval_mask.dims())?;
    let angles: Vec<f64> = eval_mask
        .values()
        .iter()
        .enumerate()
        .filter(|(i, m)| **m && gt.is_defined_at(*i))
        .map(|(i, _)| {
            let p = pred.values()[i];
            if p == crate::Vec3::zeros() {
                90.0
            } else {
                angle_deg(&p, &gt.values()[i])
            }
        })
        .collect();
    if angles.is_empty() {
        return Ok(None);
    }
    let n = angles.len();
    let below = |t: f64| percent(angles.iter().filter(|a| **a < t).count(), n);
    Ok(Some(NormalMetrics {
        mean_deg: angles.iter().sum::<f64>() / n as f64,
        pct_1125: below(ANGLE_THRESHOLDS[0]),
        pct_225: below(ANGLE_THRESHOLDS[1]),
        pct_30: below(ANGLE_THRESHOLDS[2]),
        median_deg: lower_median(angles),
        pixels: n,
    }))
}

/// IoU and true-positive rate of a predicted mask. Two empty masks agree perfectly;
/// with an empty ground truth every (absent) positive counts as found.
pub fn mask_metrics(pred: &TransparencyMask, gt: &TransparencyMask) -> Result<MaskMetrics> {
    check_dims("predicted mask", gt.dims(), pred.dims())?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (p, g) in pred.values().iter().zip(gt.values()) {
        inter += (*p && *g) as usize;
        union += (*p || *g) as usize;
    }
    let positives = gt.count();
    Ok(MaskMetrics {
        iou: if union == 0 { 1.0 } else { inter as f64 / union as f64 },
        tpr: if positives == 0 { 100.0 } else { percent(inter, positives) },
    })
}
