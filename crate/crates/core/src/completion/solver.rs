//! Jacobi-preconditioned conjugate gradients on the normal equations.
//!
//! Inner products are plain sequential sums so that repeated solves are bit-identical.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::completion::regions::Region;
use crate::completion::system::{EnergyBreakdown, SparseSystem};
use crate::error::Result;
use crate::raster::{DepthImage, DEFAULT_Z_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Stop once the preconditioned residual norm falls below this fraction of its
    /// value at the initial guess.
    pub tolerance: f64,
    /// Iteration cap; `None` means ten times the number of unknowns.
    pub max_iterations: Option<usize>,
    /// Evaluate the full energy after every iteration.
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: None,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub relative_residual: f64,
    pub energy: EnergyBreakdown,
    /// Seconds spent in the solve. Not serialized so that artifacts stay reproducible.
    #[serde(skip)]
    pub wall_time: f64,
    /// Total energy of the initial guess and of every iterate, when recorded.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub energy_trace: Vec<f64>,
    /// Solution values outside `(0, z_max]` that were written out as sentinel.
    pub sanitized_pixels: usize,
    #[serde(default)]
    pub regions: Vec<Region>,
}

impl SolveDiagnostics {
    pub fn indeterminate_pixels(&self) -> usize {
        self.regions
            .iter()
            .filter(|r| r.indeterminate)
            .map(|r| r.pixels.len())
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub depth: DepthImage,
    /// Unclamped minimizer, one value per pixel.
    pub raw: Vec<f64>,
    pub diagnostics: SolveDiagnostics,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Starting point: observed depth where a data row exists, the mean observation
/// elsewhere.
fn initial_guess(sys: &SparseSystem) -> Vec<f64> {
    let n = sys.n_unknowns();
    let mut x = vec![f64::NAN; n];
    let mut sum = 0.0;
    let mut count = 0usize;
    for row in sys.rows() {
        if row.kind == crate::completion::TermKind::Data {
            let (col, _) = row.entries().next().expect("data rows have one entry");
            x[col] = row.rhs;
            sum += row.rhs;
            count += 1;
        }
    }
    let fill = if count > 0 { sum / count as f64 } else { 0.0 };
    for v in x.iter_mut() {
        if v.is_nan() {
            *v = fill;
        }
    }
    x
}

pub fn solve(sys: &SparseSystem, cfg: &SolverConfig) -> Result<Solution> {
    let start = Instant::now();
    let n = sys.n_unknowns();
    let max_iterations = cfg.max_iterations.unwrap_or(10 * n);
    let (a, b) = sys.normal_equations();
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let precondition = |r: &[f64], z: &mut [f64]| {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&inv_diag) {
            *zi = ri * di;
        }
    };

    let mut x = initial_guess(sys);
    let mut q = vec![0.0; n];
    a.mul_into(&x, &mut q);
    let mut r: Vec<f64> = b.iter().zip(&q).map(|(bi, qi)| bi - qi).collect();
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rho = dot(&r, &z);

    let r0_norm = rho.max(0.0).sqrt();

    let mut trace = Vec::new();
    if cfg.record_trace {
        trace.push(sys.energy(&x).total);
    }

    let relative = |rho: f64| if r0_norm > 0.0 { rho.max(0.0).sqrt() / r0_norm } else { 0.0 };
    let mut iterations = 0;
    let mut converged = relative(rho) <= cfg.tolerance;
    while !converged && iterations < max_iterations {
        a.mul_into(&p, &mut q);
        let curvature = dot(&p, &q);
        if !(curvature > 0.0) {
            break;
        }
        let alpha = rho / curvature;
        for ((xi, pi), (ri, qi)) in x.iter_mut().zip(&p).zip(r.iter_mut().zip(&q)) {
            *xi += alpha * pi;
            *ri -= alpha * qi;
        }
        precondition(&r, &mut z);
        let rho_next = dot(&r, &z);
        let beta = rho_next / rho;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        rho = rho_next;
        iterations += 1;
        if cfg.record_trace {
            trace.push(sys.energy(&x).total);
        }
        converged = relative(rho) <= cfg.tolerance;
    }

    // Report the residual of the returned iterate rather than the recurrence value.
    a.mul_into(&x, &mut q);
    let true_r: Vec<f64> = b.iter().zip(&q).map(|(bi, qi)| bi - qi).collect();
    precondition(&true_r, &mut z);
    let relative_residual = relative(dot(&true_r, &z));

    if !converged {
        log::warn!(
            "solver stopped after {iterations} iterations at relative residual {relative_residual:.3e}"
        );
    }

    let (depth, sanitized_pixels) =
        DepthImage::sanitized(sys.width(), sys.height(), x.clone(), DEFAULT_Z_MAX)?;
    let diagnostics = SolveDiagnostics {
        iterations,
        converged,
        relative_residual,
        energy: sys.energy(&x),
        wall_time: start.elapsed().as_secs_f64(),
        energy_trace: trace,
        sanitized_pixels,
        regions: Vec::new(),
    };
    Ok(Solution {
        depth,
        raw: x,
        diagnostics,
    })
}
