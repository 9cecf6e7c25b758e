use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::completion::CompletionConfig;
use crate::error::{Error, Result};
use crate::heightmap::Workspace;
use crate::synthgen::recipe::BatchConfig;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "CLEARFILL_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "clearfill-out";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    Full,
    NoMask,
    NoEdgeWeights,
    /// Contact labels are treated as occlusion boundaries.
    NoContactEdge,
}

impl AblationMode {
    pub const ALL: [AblationMode; 4] = [
        AblationMode::Full,
        AblationMode::NoMask,
        AblationMode::NoEdgeWeights,
        AblationMode::NoContactEdge,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::NoMask => "no-mask",
            AblationMode::NoEdgeWeights => "no-edge-weights",
            AblationMode::NoContactEdge => "no-contact-edge",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation mode {s:?}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub gt_dir: Option<PathBuf>,
    pub mask_dir: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub also_full_image: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateOptions {
    pub modes: Vec<AblationMode>,
}

impl Default for AblateOptions {
    fn default() -> Self {
        Self {
            modes: vec![AblationMode::Full, AblationMode::NoMask, AblationMode::NoEdgeWeights],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeightmapOptions {
    pub workspace: Option<Workspace>,
    /// Depth PNG to use instead of the scene's ground truth.
    pub depth: Option<PathBuf>,
    pub stack: bool,
    pub rotations: usize,
}

impl Default for HeightmapOptions {
    fn default() -> Self {
        Self {
            workspace: None,
            depth: None,
            stack: false,
            rotations: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisualizeOptions {
    /// Scene directory (or root) holding ground truth for error panels.
    pub gt_dir: Option<PathBuf>,
    /// False-colour depth range in metres.
    pub depth_range: [f64; 2],
    /// Error that saturates the heatmap, metres.
    pub error_max: f64,
}

impl Default for VisualizeOptions {
    fn default() -> Self {
        Self {
            gt_dir: None,
            depth_range: [0.3, 1.2],
            error_max: 0.05,
        }
    }
}

/// Fully resolved settings of one invocation. Written as `config.json` beside the
/// outputs; feeding it back through `--config` reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub batch: BatchConfig,
    pub completion: CompletionConfig,
    pub visualize_outputs: bool,
    pub eval: EvalOptions,
    pub ablate: AblateOptions,
    pub heightmap: HeightmapOptions,
    pub visualize: VisualizeOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            input: None,
            output: None,
            batch: BatchConfig::default(),
            completion: CompletionConfig::default(),
            visualize_outputs: false,
            eval: EvalOptions::default(),
            ablate: AblateOptions::default(),
            heightmap: HeightmapOptions::default(),
            visualize: VisualizeOptions::default(),
        }
    }
}

impl RunConfig {
    /// Loads `path` if given, otherwise defaults, and checks it belongs to `command`.
    pub fn load_or_default(path: Option<&Path>, command: &str) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => crate::io::read_json::<RunConfig>(p).map_err(|e| match e {
                Error::Format { path, reason } => Error::Config(format!("{}: {reason}", path.display())),
                other => other,
            })?,
            None => RunConfig::default(),
        };
        if !cfg.command.is_empty() && cfg.command != command {
            return Err(Error::Config(format!(
                "config was written for `{}`, not `{command}`",
                cfg.command
            )));
        }
        cfg.command = command.to_string();
        Ok(cfg)
    }

    /// Explicit output, else `$CLEARFILL_OUTPUT_ROOT/<command>`, else
    /// `clearfill-out/<command>`.
    pub fn resolve_output(&mut self) -> PathBuf {
        if self.output.is_none() {
            let root = std::env::var_os(OUTPUT_ROOT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT));
            self.output = Some(root.join(&self.command));
        }
        self.output.clone().expect("just set")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }
}
