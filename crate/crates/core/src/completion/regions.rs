//! Missing-depth regions that occlusion boundaries cut off from every observation.
//! The energy leaves their absolute depth unanchored apart from the weak smoothness
//! term, so they are reported rather than trusted.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::completion::WeightField;
use crate::error::{Error, Result};
use crate::raster::{check_dims, neighbors4, DepthImage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    /// Raster indices `v * width + u`, ascending.
    pub pixels: Vec<usize>,
    pub indeterminate: bool,
}

pub const DEFAULT_B_CUT: f64 = 0.01;

/// Groups sentinel pixels with `B >= b_cut` into 4-connected regions and flags every
/// region that cannot reach an observed pixel without crossing a pixel with
/// `B < b_cut`. Low-weight pixels act as walls and belong to no region.
pub fn detect_indeterminate_regions(
    depth: &DepthImage,
    boundary_weight: &WeightField,
    b_cut: f64,
) -> Result<Vec<Region>> {
    check_dims("boundary weights", depth.dims(), boundary_weight.dims())?;
    if !(0.0..=1.0).contains(&b_cut) {
        return Err(Error::Config(format!("b_cut {b_cut} outside [0, 1]")));
    }
    let (w, h) = depth.dims();
    let n = w * h;
    let open: Vec<bool> = boundary_weight.values().iter().map(|b| *b >= b_cut).collect();

    // Flood from all observed open pixels through open pixels.
    let mut reached = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n)
        .filter(|i| open[*i] && depth.is_valid_at(*i))
        .collect();
    for i in &queue {
        reached[*i] = true;
    }
    while let Some(i) = queue.pop_front() {
        for (x, y) in neighbors4(i % w, i / w, w, h) {
            let j = y * w + x;
            if open[j] && !reached[j] {
                reached[j] = true;
                queue.push_back(j);
            }
        }
    }

    let mut seen = vec![false; n];
    let mut regions = Vec::new();
    for start in 0..n {
        if seen[start] || !open[start] || depth.is_valid_at(start) {
            continue;
        }
        let mut pixels = vec![start];
        seen[start] = true;
        let mut cursor = 0;
        while cursor < pixels.len() {
            let i = pixels[cursor];
            cursor += 1;
            for (x, y) in neighbors4(i % w, i / w, w, h) {
                let j = y * w + x;
                if !seen[j] && open[j] && !depth.is_valid_at(j) {
                    seen[j] = true;
                    pixels.push(j);
                }
            }
        }
        pixels.sort_unstable();
        let indeterminate = pixels.iter().all(|p| !reached[*p]);
        regions.push(Region {
            pixels,
            indeterminate,
        });
    }
    Ok(regions)
}
