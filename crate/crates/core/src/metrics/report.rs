//! Per-scene evaluation rows and ablation comparisons.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DepthMetrics, MaskMetrics, NormalMetrics};
use crate::error::{Error, Result};

pub const EVAL_CSV_HEADER: [&str; 14] = [
    "scene_id", "rmse", "rel", "mae", "d105", "d110", "d125", "n_mean", "n_median", "n_1125", "n_225", "n_30",
    "iou", "tpr",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub scene_id: String,
    pub depth: Option<DepthMetrics>,
    pub normals: Option<NormalMetrics>,
    pub mask: Option<MaskMetrics>,
}

impl EvalRow {
    fn fields(&self) -> Vec<String> {
        let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let d = self.depth.as_ref();
        let n = self.normals.as_ref();
        let m = self.mask.as_ref();
        vec![
            self.scene_id.clone(),
            f(d.map(|d| d.rmse)),
            f(d.map(|d| d.rel)),
            f(d.map(|d| d.mae)),
            f(d.map(|d| d.delta_105)),
            f(d.map(|d| d.delta_110)),
            f(d.map(|d| d.delta_125)),
            f(n.map(|n| n.mean_deg)),
            f(n.map(|n| n.median_deg)),
            f(n.map(|n| n.pct_1125)),
            f(n.map(|n| n.pct_225)),
            f(n.map(|n| n.pct_30)),
            f(m.map(|m| m.iou)),
            f(m.map(|m| m.tpr)),
        ]
    }
}

/// Writes rows sorted by scene id. Metrics with no evaluable pixels are left blank.
pub fn write_eval_csv(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let mut sorted: Vec<&EvalRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    let to_err = |e: csv::Error| Error::format(path, e.to_string());
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record(EVAL_CSV_HEADER).map_err(to_err)?;
    for row in sorted {
        w.write_record(row.fields()).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Depth metrics of one pipeline configuration, keyed by scene id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub label: String,
    pub scenes: BTreeMap<String, Option<DepthMetrics>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    /// Means over scenes with evaluable pixels.
    pub mean: Option<DepthMetrics>,
    /// Difference of each mean from the reference run's.
    pub delta: Option<DepthMetrics>,
    /// Names of the metrics on which this run is best (ties share the mark).
    pub best: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionCheck {
    pub better: String,
    pub worse: String,
    /// Scenes where `better` has strictly lower RMSE.
    pub wins: usize,
    pub scenes: usize,
    pub mean_better: f64,
    pub mean_worse: f64,
    /// Whether a strict improvement is required for `passed`.
    pub strict: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub reference: String,
    pub scene_ids: Vec<String>,
    /// Sorted by mean RMSE, best first.
    pub rows: Vec<AblationRow>,
    pub checks: Vec<DirectionCheck>,
}

const METRIC_NAMES: [&str; 6] = ["rmse", "rel", "mae", "d105", "d110", "d125"];

fn metric(m: &DepthMetrics, k: usize) -> f64 {
    [m.rmse, m.rel, m.mae, m.delta_105, m.delta_110, m.delta_125][k]
}

fn lower_is_better(k: usize) -> bool {
    k < 3
}

fn mean_metrics(run: &RunMetrics) -> Option<DepthMetrics> {
    let scored: Vec<&DepthMetrics> = run.scenes.values().flatten().collect();
    if scored.is_empty() {
        return None;
    }
    let n = scored.len() as f64;
    let avg = |k: usize| scored.iter().map(|m| metric(m, k)).sum::<f64>() / n;
    Some(DepthMetrics {
        rmse: avg(0),
        rel: avg(1),
        mae: avg(2),
        delta_105: avg(3),
        delta_110: avg(4),
        delta_125: avg(5),
        pixels: scored.iter().map(|m| m.pixels).sum(),
    })
}

fn difference(a: &DepthMetrics, b: &DepthMetrics) -> DepthMetrics {
    DepthMetrics {
        rmse: a.rmse - b.rmse,
        rel: a.rel - b.rel,
        mae: a.mae - b.mae,
        delta_105: a.delta_105 - b.delta_105,
        delta_110: a.delta_110 - b.delta_110,
        delta_125: a.delta_125 - b.delta_125,
        pixels: 0,
    }
}

/// Expected orderings between the standard ablation modes, as (better, worse, strict).
const EXPECTED: [(&str, &str, bool); 3] = [
    ("full", "no-mask", true),
    ("full", "no-edge-weights", false),
    ("full", "no-contact-edge", false),
];

fn direction(better: &RunMetrics, worse: &RunMetrics, strict: bool) -> DirectionCheck {
    let mut wins = 0;
    let (mut sb, mut sw, mut n) = (0.0, 0.0, 0usize);
    for (id, b) in &better.scenes {
        if let (Some(b), Some(Some(w))) = (b, worse.scenes.get(id)) {
            wins += (b.rmse < w.rmse) as usize;
            sb += b.rmse;
            sw += w.rmse;
            n += 1;
        }
    }
    let (mean_better, mean_worse) = if n == 0 { (f64::NAN, f64::NAN) } else { (sb / n as f64, sw / n as f64) };
    let passed = n > 0 && if strict { mean_better < mean_worse } else { mean_better <= mean_worse };
    DirectionCheck {
        better: better.label.clone(),
        worse: worse.label.clone(),
        wins,
        scenes: n,
        mean_better,
        mean_worse,
        strict,
        passed,
    }
}

/// Compares runs over the same scenes. The reference for deltas is the run labelled
/// `full` when present, otherwise the first run.
pub fn ablation_report(runs: &[RunMetrics]) -> Result<AblationReport> {
    if runs.len() < 2 {
        return Err(Error::Config(format!("ablation needs at least 2 runs, got {}", runs.len())));
    }
    let ids: Vec<String> = runs[0].scenes.keys().cloned().collect();
    for run in &runs[1..] {
        if !run.scenes.keys().eq(ids.iter()) {
            return Err(Error::Config(format!(
                "run {:?} covers different scenes than run {:?}",
                run.label, runs[0].label
            )));
        }
    }
    let reference = runs.iter().find(|r| r.label == "full").unwrap_or(&runs[0]);
    let ref_mean = mean_metrics(reference);
    let means: Vec<Option<DepthMetrics>> = runs.iter().map(mean_metrics).collect();

    let best_value = |k: usize| {
        let vals = means.iter().flatten().map(|m| metric(m, k));
        if lower_is_better(k) {
            vals.fold(f64::INFINITY, f64::min)
        } else {
            vals.fold(f64::NEG_INFINITY, f64::max)
        }
    };
    let best: Vec<f64> = (0..METRIC_NAMES.len()).map(best_value).collect();

    let mut rows: Vec<AblationRow> = runs
        .iter()
        .zip(&means)
        .map(|(run, mean)| AblationRow {
            label: run.label.clone(),
            mean: *mean,
            delta: match (mean, &ref_mean) {
                (Some(m), Some(r)) => Some(difference(m, r)),
                _ => None,
            },
            best: mean
                .map(|m| {
                    (0..METRIC_NAMES.len())
                        .filter(|k| metric(&m, *k) == best[*k])
                        .map(|k| METRIC_NAMES[k].to_string())
                        .collect()
                })
                .unwrap_or_default(),
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = |r: &AblationRow| r.mean.map(|m| m.rmse).unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b)).then_with(|| a.label.cmp(&b.label))
    });

    let find = |label: &str| runs.iter().find(|r| r.label == label);
    let checks = EXPECTED
        .iter()
        .filter_map(|(b, w, strict)| Some(direction(find(b)?, find(w)?, *strict)))
        .collect();

    Ok(AblationReport {
        reference: reference.label.clone(),
        scene_ids: ids,
        rows,
        checks,
    })
}

impl AblationReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let to_err = |e: csv::Error| Error::format(path, e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(to_err)?;
        let mut header = vec!["label".to_string()];
        header.extend(METRIC_NAMES.iter().map(|m| m.to_string()));
        header.extend(METRIC_NAMES.iter().map(|m| format!("delta_{m}")));
        header.push("best".into());
        w.write_record(&header).map_err(to_err)?;
        for row in &self.rows {
            let mut rec = vec![row.label.clone()];
            for src in [&row.mean, &row.delta] {
                rec.extend((0..METRIC_NAMES.len()).map(|k| src.map(|m| metric(&m, k).to_string()).unwrap_or_default()));
            }
            rec.push(row.best.join(" "));
            w.write_record(&rec).map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Fixed-width console table; the best value of each metric is starred.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<18}", "run");
        for m in METRIC_NAMES {
            let _ = write!(out, "{m:>12}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<18}", row.label);
            for (k, name) in METRIC_NAMES.iter().enumerate() {
                let cell = match &row.mean {
                    Some(m) => {
                        let star = if row.best.iter().any(|b| b == name) { "*" } else { " " };
                        format!("{:.4}{star}", metric(m, k))
                    }
                    None => "-".into(),
                };
                let _ = write!(out, "{cell:>12}");
            }
            out.push('\n');
        }
        for c in &self.checks {
            let op = if c.strict { "<" } else { "<=" };
            let _ = writeln!(
                out,
                "{} rmse({}) {op} rmse({}): {:.4} vs {:.4}, wins {}/{}",
                if c.passed { "PASS" } else { "FAIL" },
                c.better,
                c.worse,
                c.mean_better,
                c.mean_worse,
                c.wins,
                c.scenes
            );
        }
        out
    }
}
