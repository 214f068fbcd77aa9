//! The `qgeom` command line: prepare meshes, fit point clouds under the geometric losses,
//! evaluate them and dump per-vertex quadrics.
//!
//! Every run is described by a [`RunManifest`]; `qgeom replay` re-executes a
//! saved one and reproduces its artifacts byte for byte.

pub mod commands;
pub mod error;
pub mod manifest;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use qgeom::fit::{default_config, InitKind, LossKind};
use qgeom::metrics::DEFAULT_METRO_SAMPLES;
use qgeom::LossWeights;

pub use crate::error::CliError;
pub use crate::manifest::{CommandConfig, PrepareOrder, RunManifest};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "qgeom", version, about = "Quadric-loss point-cloud fitting and mesh evaluation")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Seed for every random choice the command makes.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Write the run manifest here instead of the default location.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split a mesh into components, simplify and normalise each one.
    Prepare {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2500)]
        target_vertices: usize,
        /// Keep the mesh whole instead of writing one file per component.
        #[arg(long)]
        no_split: bool,
        /// Keep the original placement and scale.
        #[arg(long)]
        no_normalize: bool,
        #[arg(long, value_enum, default_value_t = PrepareOrder::SplitFirst)]
        order: PrepareOrder,
        #[command(flatten)]
        common: Common,
    },
    /// Fit a point cloud to a mesh by direct optimisation.
    Fit {
        mesh: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Chamfer and Metro errors of a cloud against a mesh.
    Eval {
        cloud: PathBuf,
        mesh: PathBuf,
        #[arg(long, default_value_t = DEFAULT_METRO_SAMPLES)]
        samples: usize,
        /// Emit a one-row CSV table instead of JSON.
        #[arg(long)]
        csv: bool,
        /// Also write the report and manifest into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Per-vertex quadric coefficients as CSV.
    Quadrics {
        mesh: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Re-run a saved manifest.
    Replay {
        manifest_path: PathBuf,
        /// Redirect the outputs; the manifest written alongside records the
        /// new location.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Named loss combination: chamfer, quadric, normal, surface,
    /// chamfer+quadric, chamfer+surface, chamfer+normal.
    #[arg(long)]
    preset: Option<LossKind>,
    #[arg(long)]
    loss_chamfer: Option<f64>,
    #[arg(long)]
    loss_quadric: Option<f64>,
    #[arg(long)]
    loss_normal: Option<f64>,
    #[arg(long)]
    loss_surface: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Defaults to 1e-4 when the quadric term is active, 1e-3 otherwise.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    #[arg(long)]
    lr_decay_every: Option<usize>,
    /// Number of output points; defaults to the mesh vertex count.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long, value_parser = parse_init)]
    init: Option<InitKind>,
    #[arg(long)]
    freeze_correspondences: bool,
    /// Metro samples used for the final report.
    #[arg(long, default_value_t = DEFAULT_METRO_SAMPLES)]
    samples: usize,
}

fn parse_init(s: &str) -> Result<InitKind, String> {
    match s {
        "jittered_vertices" | "jittered-vertices" => Ok(InitKind::JitteredVertices),
        "uniform_sphere" | "uniform-sphere" => Ok(InitKind::UniformSphere),
        _ => Err(format!("unknown init {s:?} (expected jittered_vertices or uniform_sphere)")),
    }
}

impl FitArgs {
    /// Preset weights (chamfer when neither a preset nor any weight is
    /// given), overridden flag by flag.
    fn config(&self, seed: u64) -> CommandConfig {
        let overrides = [self.loss_chamfer, self.loss_quadric, self.loss_normal, self.loss_surface];
        let base = match self.preset {
            Some(kind) => kind.weights(),
            None if overrides.iter().any(Option::is_some) => LossWeights::new(0.0, 0.0, 0.0, 0.0),
            None => LossKind::Chamfer.weights(),
        };
        let weights = LossWeights::new(
            self.loss_chamfer.unwrap_or(base.chamfer),
            self.loss_quadric.unwrap_or(base.quadric),
            self.loss_normal.unwrap_or(base.normal),
            self.loss_surface.unwrap_or(base.surface),
        );
        let preset = match self.preset {
            Some(kind) if kind.weights() == weights => Some(kind),
            None if overrides.iter().all(Option::is_none) => Some(LossKind::Chamfer),
            _ => LossKind::ALL.into_iter().find(|k| k.weights() == weights),
        };

        // Schedule defaults follow the final weights, not the preset.
        let kind_for_defaults = if weights.quadric > 0.0 { LossKind::Quadric } else { LossKind::Chamfer };
        let mut fit = default_config(kind_for_defaults);
        fit.weights = weights;
        fit.seed = seed;
        if let Some(v) = self.steps {
            fit.steps = v;
        }
        if let Some(v) = self.lr {
            fit.learning_rate = v;
        }
        if let Some(v) = self.lr_decay {
            fit.lr_decay_factor = v;
        }
        if let Some(v) = self.lr_decay_every {
            fit.lr_decay_every = v;
        }
        if let Some(v) = self.jitter {
            fit.jitter_sigma = v;
        }
        if let Some(v) = self.init {
            fit.init = v;
        }
        fit.num_points = self.points;
        fit.freeze_correspondences = self.freeze_correspondences;
        CommandConfig::Fit { preset: preset.map(|k| k.name().to_string()), fit, metro_samples: self.samples }
    }
}

/// Turns parsed arguments into the manifest to execute and an optional
/// manifest destination.
fn build(command: Command) -> Result<(RunManifest, Option<PathBuf>), CliError> {
    Ok(match command {
        Command::Prepare { input, out, target_vertices, no_split, no_normalize, order, common } => {
            let config = CommandConfig::Prepare {
                target_vertices,
                split_components: !no_split,
                normalize: !no_normalize,
                order,
            };
            (RunManifest::new(vec![input], common.seed, Some(out), config), common.manifest)
        }
        Command::Fit { mesh, out, fit, common } => {
            let config = fit.config(common.seed);
            if let CommandConfig::Fit { fit, .. } = &config {
                fit.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            }
            (RunManifest::new(vec![mesh], common.seed, Some(out), config), common.manifest)
        }
        Command::Eval { cloud, mesh, samples, csv, out, common } => {
            if samples == 0 {
                return Err(CliError::Usage("--samples must be positive".into()));
            }
            let config = CommandConfig::Eval { samples, csv };
            (RunManifest::new(vec![cloud, mesh], common.seed, out, config), common.manifest)
        }
        Command::Quadrics { mesh, out, common } => {
            (RunManifest::new(vec![mesh], common.seed, out, CommandConfig::Quadrics), common.manifest)
        }
        Command::Replay { manifest_path, out } => {
            let mut manifest = RunManifest::load(&manifest_path)?;
            if manifest.tool_version != env!("CARGO_PKG_VERSION") {
                log::warn!(
                    "manifest was written by version {}, replaying with {}",
                    manifest.tool_version,
                    env!("CARGO_PKG_VERSION")
                );
            }
            if out.is_some() {
                manifest.output = out;
            }
            manifest.tool_version = env!("CARGO_PKG_VERSION").to_string();
            (manifest, None)
        }
    })
}

/// Parses `QGEOM_THREADS`; `None` leaves the pool size to rayon.
pub fn threads_from_env(value: Option<&str>) -> Result<Option<usize>, CliError> {
    let Some(value) = value else {
        return Ok(None);
    };
    value
        .trim()
        .parse()
        .ok()
        .filter(|&n: &usize| n > 0)
        .map(Some)
        .ok_or_else(|| CliError::Usage(format!("QGEOM_THREADS must be a positive integer, got {value:?}")))
}

/// Executes one invocation; normal output goes to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (manifest, manifest_path) = build(cli.command)?;
    commands::execute(&manifest, manifest_path.as_deref(), stdout)
}
