//! The `clearfill` command line.
//!
//! Every subcommand resolves a [`RunConfig`] from an optional `--config` file and its
//! flags (flags win), writes that config as `config.json` in its output directory and
//! then produces its artifacts. Exit codes: 0 success, 2 configuration error, 3 I/O or
//! format error, 4 numerical failure.

mod commands;
pub mod config;
pub mod visualize;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use commands::{run, scene_dirs};
pub use config::{AblationMode, RunConfig};

use crate::completion::CompletionConfig;
use crate::error::Error;

#[derive(Debug, Parser)]
#[command(name = "clearfill", version, about = "Depth completion for transparent objects")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a batch of synthetic scenes with exact ground truth.
    Generate(GenerateArgs),
    /// Complete the depth of one scene or a directory of scenes.
    Complete(CompleteArgs),
    /// Score completed depth against ground truth.
    Eval(EvalArgs),
    /// Run several ablation modes over a batch and compare them.
    Ablate(AblateArgs),
    /// Project depth into a top-down heightmap.
    Heightmap(HeightmapArgs),
    /// Render PNG panels for scenes or completion results.
    Visualize(VisualizeArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Complete(_) => "complete",
            Command::Eval(_) => "eval",
            Command::Ablate(_) => "ablate",
            Command::Heightmap(_) => "heightmap",
            Command::Visualize(_) => "visualize",
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::Generate(a) => &a.common,
            Command::Complete(a) => &a.common,
            Command::Eval(a) => &a.common,
            Command::Ablate(a) => &a.common,
            Command::Heightmap(a) => &a.common,
            Command::Visualize(a) => &a.common,
        }
    }
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run config; flags given on the command line override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory. Defaults to `$CLEARFILL_OUTPUT_ROOT/<command>`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Scenes processed in parallel. Artifacts do not depend on it.
    #[arg(short, long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_d: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_s: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_n: Option<f64>,
    /// Keep the raw depth under the transparency mask.
    #[arg(long)]
    pub no_mask: bool,
    /// Do not relax normal terms at occlusion boundaries.
    #[arg(long)]
    pub no_edge_weights: bool,
    /// Gaussian sigma in pixels applied to occlusion probabilities.
    #[arg(long)]
    pub boundary_sigma: Option<f64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Boundary weight below which a pixel walls off indeterminate regions.
    #[arg(long)]
    pub b_cut: Option<f64>,
}

impl SolveArgs {
    fn apply(&self, c: &mut CompletionConfig) {
        if let Some(v) = self.lambda_d {
            c.weights.lambda_d = v;
        }
        if let Some(v) = self.lambda_s {
            c.weights.lambda_s = v;
        }
        if let Some(v) = self.lambda_n {
            c.weights.lambda_n = v;
        }
        if self.no_mask {
            c.flags.use_mask = false;
        }
        if self.no_edge_weights {
            c.flags.use_boundary_weighting = false;
        }
        if let Some(v) = self.boundary_sigma {
            c.boundary_sigma = v;
        }
        if let Some(v) = self.tolerance {
            c.solver.tolerance = v;
        }
        if self.max_iters.is_some() {
            c.solver.max_iterations = self.max_iters;
        }
        if let Some(v) = self.b_cut {
            c.b_cut = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// JSON batch config (counts, primitive ranges, corruption and perturbation models).
    #[arg(long)]
    pub batch: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CompleteArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// A scene directory, or a directory of scene directories.
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Also write false-colour depth and normal RGB panels.
    #[arg(long)]
    pub visualize: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Completion output: one `<scene_id>/depth.png` per scene.
    #[arg(long)]
    pub pred_dir: Option<PathBuf>,
    /// Scene directories holding the ground truth.
    #[arg(long)]
    pub gt_dir: Option<PathBuf>,
    /// Evaluation masks as `<scene_id>.png`; defaults to each scene's ground-truth mask.
    #[arg(long)]
    pub mask_dir: Option<PathBuf>,
    /// CSV report path. Defaults to `<output>/eval.csv`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also score every valid pixel, written to `<report>_full.csv`.
    #[arg(long)]
    pub also_full_image: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// Comma-separated: full, no-mask, no-edge-weights, no-contact-edge.
    #[arg(long, value_delimiter = ',')]
    pub modes: Vec<String>,
    #[command(flatten)]
    pub solve: SolveArgs,
}

#[derive(Debug, Args)]
pub struct HeightmapArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Scene directory supplying intrinsics and, by default, ground-truth depth.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Depth PNG to project instead, e.g. a completion result.
    #[arg(long)]
    pub depth: Option<PathBuf>,
    /// Workspace JSON: bounds, resolution and camera-to-world transform.
    #[arg(long)]
    pub workspace: Option<PathBuf>,
    /// Also write the rotation stack.
    #[arg(long)]
    pub stack: bool,
    #[arg(long)]
    pub rotations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VisualizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Scene or result directory, or a directory of them.
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// Scenes used as ground truth for error heatmaps of result directories.
    #[arg(long)]
    pub gt_dir: Option<PathBuf>,
    #[arg(long)]
    pub depth_min: Option<f64>,
    #[arg(long)]
    pub depth_max: Option<f64>,
    /// Error in metres that saturates the heatmap.
    #[arg(long)]
    pub error_max: Option<f64>,
}

/// Merges the config file and flags of `cmd`.
pub fn resolve(cmd: &Command) -> crate::Result<RunConfig> {
    let mut cfg = RunConfig::load_or_default(cmd.common().config.as_deref(), cmd.name())?;
    if let Some(o) = &cmd.common().output {
        cfg.output = Some(o.clone());
    }
    match cmd {
        Command::Generate(a) => {
            if let Some(p) = &a.batch {
                cfg.batch = crate::io::read_json(p).map_err(as_config)?;
            }
            if let Some(n) = a.count {
                cfg.batch.count = n;
            }
            if let Some(s) = a.seed {
                cfg.batch.master_seed = s;
            }
        }
        Command::Complete(a) => {
            set(&mut cfg.input, &a.input);
            a.solve.apply(&mut cfg.completion);
            cfg.visualize_outputs |= a.visualize;
        }
        Command::Eval(a) => {
            set(&mut cfg.input, &a.pred_dir);
            set(&mut cfg.eval.gt_dir, &a.gt_dir);
            set(&mut cfg.eval.mask_dir, &a.mask_dir);
            set(&mut cfg.eval.report, &a.report);
            cfg.eval.also_full_image |= a.also_full_image;
        }
        Command::Ablate(a) => {
            set(&mut cfg.input, &a.input);
            a.solve.apply(&mut cfg.completion);
            if !a.modes.is_empty() {
                cfg.ablate.modes = a
                    .modes
                    .iter()
                    .map(|m| AblationMode::parse(m.trim()))
                    .collect::<crate::Result<_>>()?;
            }
        }
        Command::Heightmap(a) => {
            set(&mut cfg.input, &a.scene);
            set(&mut cfg.heightmap.depth, &a.depth);
            if let Some(p) = &a.workspace {
                cfg.heightmap.workspace = Some(crate::io::read_json(p).map_err(as_config)?);
            }
            cfg.heightmap.stack |= a.stack;
            if let Some(n) = a.rotations {
                cfg.heightmap.rotations = n;
            }
        }
        Command::Visualize(a) => {
            set(&mut cfg.input, &a.input);
            set(&mut cfg.visualize.gt_dir, &a.gt_dir);
            if let Some(v) = a.depth_min {
                cfg.visualize.depth_range[0] = v;
            }
            if let Some(v) = a.depth_max {
                cfg.visualize.depth_range[1] = v;
            }
            if let Some(v) = a.error_max {
                cfg.visualize.error_max = v;
            }
        }
    }
    Ok(cfg)
}

fn set(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if flag.is_some() {
        slot.clone_from(flag);
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Format { path, reason } => Error::Config(format!("{}: {reason}", path.display())),
        other => other,
    }
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::InvalidSpec(_) => 2,
        Error::Io { .. } | Error::Format { .. } | Error::DimensionMismatch { .. } | Error::Invalid(_) => 3,
        Error::Unsolvable(_) | Error::Domain(_) => 4,
        Error::Scene { .. } => unreachable!("root skips scene wrappers"),
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let jobs = cli.command.common().jobs;
    match resolve(&cli.command).and_then(|cfg| run(cfg, jobs)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> RunConfig {
        let cli = Cli::try_parse_from(std::iter::once("clearfill").chain(args.iter().copied())).unwrap();
        resolve(&cli.command).unwrap()
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        let mut base = RunConfig {
            command: "complete".into(),
            ..Default::default()
        };
        base.completion.weights.lambda_s = 0.5;
        base.completion.weights.lambda_n = 3.0;
        base.write(&p).unwrap();
        let cfg = parse(&["complete", "--config", p.to_str().unwrap(), "--lambda-s", "0.01", "--no-mask"]);
        assert_eq!(cfg.completion.weights.lambda_s, 0.01);
        assert_eq!(cfg.completion.weights.lambda_n, 3.0);
        assert!(!cfg.completion.flags.use_mask);
    }

    #[test]
    fn modes_parse_from_a_list() {
        let cfg = parse(&["ablate", "--modes", "full,no-contact-edge"]);
        assert_eq!(cfg.ablate.modes, vec![AblationMode::Full, AblationMode::NoContactEdge]);
        let cli = Cli::try_parse_from(["clearfill", "ablate", "--modes", "half"]).unwrap();
        assert_eq!(exit_code(&resolve(&cli.command).unwrap_err()), 2);
    }

    #[test]
    fn exit_codes_follow_error_category() {
        let io = Error::io("x", std::io::Error::from(std::io::ErrorKind::NotFound)).in_scene("s");
        assert_eq!(exit_code(&io), 3);
        assert_eq!(exit_code(&Error::Unsolvable("x".into()).in_scene("s")), 4);
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
    }
}
