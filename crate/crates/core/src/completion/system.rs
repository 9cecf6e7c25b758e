//! Assembly of the depth least-squares problem.
//!
//! Every pixel is an unknown depth. Constraint rows come in three kinds:
//!
//! * data: `D_i - D_obs_i`, one per observed pixel, weight `lambda_d`;
//! * smoothness: `D_i - D_j`, one per 4-neighbour pair, weight `lambda_s`;
//! * normal: `N_i . (P_j - P_i)` with `P = D * K^-1 [u, v, 1]`, one per right/down
//!   neighbour pair, weight `lambda_n * min(B_i, B_j)`.
//!
//! All rows touch at most two 4-adjacent columns, so the normal equations have a
//! five-point stencil.

use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::completion::{EnergyWeights, WeightField};
use crate::error::{Error, Result};
use crate::raster::{check_dims, DepthImage, NormalMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    Data,
    Smooth,
    Normal,
}

/// One weighted residual `weight * (coeffs . x[cols] - rhs)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintRow {
    pub kind: TermKind,
    cols: [usize; 2],
    coeffs: [f64; 2],
    nnz: u8,
    pub rhs: f64,
    pub weight: f64,
}

impl ConstraintRow {
    fn unary(kind: TermKind, col: usize, coeff: f64, rhs: f64, weight: f64) -> Self {
        Self {
            kind,
            cols: [col, col],
            coeffs: [coeff, 0.0],
            nnz: 1,
            rhs,
            weight,
        }
    }

    fn binary(kind: TermKind, cols: [usize; 2], coeffs: [f64; 2], rhs: f64, weight: f64) -> Self {
        Self {
            kind,
            cols,
            coeffs,
            nnz: 2,
            rhs,
            weight,
        }
    }

    /// Non-zero `(column, coefficient)` pairs.
    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.cols
            .iter()
            .copied()
            .zip(self.coeffs.iter().copied())
            .take(self.nnz as usize)
    }

    pub fn nnz(&self) -> usize {
        self.nnz as usize
    }

    pub fn residual(&self, x: &[f64]) -> f64 {
        self.entries().map(|(c, a)| a * x[c]).sum::<f64>() - self.rhs
    }
}

/// Weighted energy split by term. Components already include their lambda and `B`
/// weights, so `total = data + smooth + normal`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub data: f64,
    pub smooth: f64,
    pub normal: f64,
}

#[derive(Debug, Clone)]
pub struct SparseSystem {
    width: usize,
    height: usize,
    rows: Vec<ConstraintRow>,
    observed: Vec<bool>,
}

impl SparseSystem {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_unknowns(&self) -> usize {
        self.width * self.height
    }

    pub fn rows(&self) -> &[ConstraintRow] {
        &self.rows
    }

    pub fn count(&self, kind: TermKind) -> usize {
        self.rows.iter().filter(|r| r.kind == kind).count()
    }

    pub fn column_of(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    pub fn pixel_of(&self, col: usize) -> (usize, usize) {
        (col % self.width, col / self.width)
    }

    /// Whether a data row anchors the unknown.
    pub fn is_observed(&self, col: usize) -> bool {
        self.observed[col]
    }

    pub fn energy(&self, x: &[f64]) -> EnergyBreakdown {
        let mut e = EnergyBreakdown::default();
        for row in &self.rows {
            let r = row.residual(x);
            let term = row.weight * r * r;
            match row.kind {
                TermKind::Data => e.data += term,
                TermKind::Smooth => e.smooth += term,
                TermKind::Normal => e.normal += term,
            }
        }
        e.total = e.data + e.smooth + e.normal;
        e
    }

    /// `A^T W A` and `A^T W b`.
    pub fn normal_equations(&self) -> (StencilMatrix, Vec<f64>) {
        let n = self.n_unknowns();
        let mut m = StencilMatrix {
            width: self.width,
            coeffs: vec![[0.0; 5]; n],
        };
        let mut rhs = vec![0.0; n];
        for row in &self.rows {
            for (a, ca) in row.entries() {
                rhs[a] += row.weight * ca * row.rhs;
                for (b, cb) in row.entries() {
                    m.add(a, b, row.weight * ca * cb);
                }
            }
        }
        (m, rhs)
    }
}

/// Symmetric matrix whose row `i` couples only pixel `i` and its 4-neighbours.
/// Slot order: centre, left, right, up, down.
#[derive(Debug, Clone)]
pub struct StencilMatrix {
    width: usize,
    coeffs: Vec<[f64; 5]>,
}

impl StencilMatrix {
    fn slot(&self, row: usize, col: usize) -> usize {
        if col == row {
            0
        } else if col + 1 == row {
            1
        } else if col == row + 1 {
            2
        } else if col + self.width == row {
            3
        } else if col == row + self.width {
            4
        } else {
            panic!("columns {row} and {col} are not 4-neighbours")
        }
    }

    fn add(&mut self, row: usize, col: usize, value: f64) {
        let s = self.slot(row, col);
        self.coeffs[row][s] += value;
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c[0]).collect()
    }

    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        let w = self.width;
        let n = self.coeffs.len();
        for (i, (c, out)) in self.coeffs.iter().zip(y.iter_mut()).enumerate() {
            let mut acc = c[0] * x[i];
            if c[1] != 0.0 {
                acc += c[1] * x[i - 1];
            }
            if c[2] != 0.0 {
                acc += c[2] * x[i + 1];
            }
            if c[3] != 0.0 {
                acc += c[3] * x[i - w];
            }
            if c[4] != 0.0 && i + w < n {
                acc += c[4] * x[i + w];
            }
            *out = acc;
        }
    }
}

/// Builds the least-squares system for completing `depth`. Sentinel pixels get no data
/// row; pixels without a defined normal contribute no normal rows; rows of zero weight
/// are omitted.
pub fn build_system(
    depth: &DepthImage,
    normals: &NormalMap,
    boundary_weight: &WeightField,
    intr: &CameraIntrinsics,
    w: &EnergyWeights,
) -> Result<SparseSystem> {
    w.validate()?;
    let dims = depth.dims();
    check_dims("normals", dims, normals.dims())?;
    check_dims("boundary weights", dims, boundary_weight.dims())?;
    check_dims("intrinsics", dims, intr.dims())?;
    let (width, height) = dims;
    let observed: Vec<bool> = (0..width * height).map(|i| depth.is_valid_at(i)).collect();
    if !observed.iter().any(|o| *o) {
        return Err(Error::Unsolvable("no observed depth pixels".into()));
    }

    let mut rows = Vec::new();
    if w.lambda_d > 0.0 {
        for (i, obs) in observed.iter().enumerate() {
            if *obs {
                rows.push(ConstraintRow::unary(
                    TermKind::Data,
                    i,
                    1.0,
                    depth.values()[i],
                    w.lambda_d,
                ));
            }
        }
    }

    let b = boundary_weight.values();
    for v in 0..height {
        for u in 0..width {
            let i = v * width + u;
            let neighbours = [(u + 1 < width).then_some(i + 1), (v + 1 < height).then_some(i + width)];
            for j in neighbours.into_iter().flatten() {
                if w.lambda_s > 0.0 {
                    rows.push(ConstraintRow::binary(TermKind::Smooth, [i, j], [1.0, -1.0], 0.0, w.lambda_s));
                }
                let weight = w.lambda_n * b[i].min(b[j]);
                if weight > 0.0 && normals.is_defined_at(i) {
                    let n = normals.values()[i];
                    let (uj, vj) = (j % width, j / width);
                    let ray_i = intr.ray(u as f64, v as f64);
                    let ray_j = intr.ray(uj as f64, vj as f64);
                    rows.push(ConstraintRow::binary(
                        TermKind::Normal,
                        [i, j],
                        [-n.dot(&ray_i), n.dot(&ray_j)],
                        0.0,
                        weight,
                    ));
                }
            }
        }
    }

    Ok(SparseSystem {
        width,
        height,
        rows,
        observed,
    })
}
