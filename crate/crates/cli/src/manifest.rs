use std::fs;
use std::path::{Path, PathBuf};

use qgeom::FitConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Which step of `prepare` runs first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PrepareOrder {
    /// Split into connected components, then simplify each one.
    SplitFirst,
    /// Simplify the whole mesh, then split the result.
    SimplifyFirst,
}

/// Everything a command needs beyond its input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum CommandConfig {
    Prepare {
        target_vertices: usize,
        split_components: bool,
        normalize: bool,
        order: PrepareOrder,
    },
    Fit {
        preset: Option<String>,
        fit: FitConfig,
        metro_samples: usize,
    },
    Eval {
        samples: usize,
        csv: bool,
    },
    Quadrics,
}

/// Record of one invocation, sufficient to rerun it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub inputs: Vec<PathBuf>,
    pub seed: u64,
    /// Output directory (or file, for `quadrics`); `None` means stdout.
    pub output: Option<PathBuf>,
    pub config: CommandConfig,
}

impl RunManifest {
    pub fn new(inputs: Vec<PathBuf>, seed: u64, output: Option<PathBuf>, config: CommandConfig) -> Self {
        Self { tool_version: env!("CARGO_PKG_VERSION").to_string(), inputs, seed, output, config }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: invalid manifest: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        fs::write(path, text).map_err(|e| CliError::io(path, e))
    }
}
