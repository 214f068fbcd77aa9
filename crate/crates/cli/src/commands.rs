use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use qgeom::io::{load_mesh, load_points, save_mesh, save_points, MeshFormat, PointFormat};
use qgeom::losses::LossReport;
use qgeom::{accumulate_vertex_quadrics, combined_loss, fit_points, simplify_to, EvalReport, FitError, TargetBundle, TriangleMesh};
use serde::Serialize;

use crate::error::CliError;
use crate::manifest::{CommandConfig, PrepareOrder, RunManifest, MANIFEST_FILE};

pub const CLOUD_FILE: &str = "cloud.xyz";
pub const TRACE_FILE: &str = "trace.csv";
pub const REPORT_FILE: &str = "report.json";

/// Runs the command a manifest describes. The manifest is saved to
/// `manifest_path` when given, otherwise into the output directory (if any).
pub fn execute(manifest: &RunManifest, manifest_path: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &manifest.config {
        CommandConfig::Prepare { target_vertices, split_components, normalize, order } => {
            let out = require_output(manifest)?;
            for path in prepare(&manifest.inputs[0], out, *target_vertices, *split_components, *normalize, *order)? {
                writeln!(stdout, "{}", path.display()).map_err(stdout_err)?;
            }
            manifest.save(&manifest_path.map(Path::to_path_buf).unwrap_or_else(|| out.join(MANIFEST_FILE)))
        }
        CommandConfig::Fit { preset, fit, metro_samples } => {
            let out = require_output(manifest)?;
            let mut config = fit.clone();
            config.seed = manifest.seed;
            create_dir(out)?;
            // The manifest goes first so a failed run can still be replayed.
            manifest.save(&manifest_path.map(Path::to_path_buf).unwrap_or_else(|| out.join(MANIFEST_FILE)))?;
            run_fit(&manifest.inputs[0], out, preset.as_deref(), &config, *metro_samples)
        }
        CommandConfig::Eval { samples, csv } => {
            let [cloud, mesh] = &manifest.inputs[..] else {
                return Err(CliError::Usage("eval needs a cloud and a mesh".into()));
            };
            let text = eval(cloud, mesh, *samples, manifest.seed, *csv)?;
            match &manifest.output {
                Some(out) => {
                    create_dir(out)?;
                    let name = if *csv { "report.csv" } else { REPORT_FILE };
                    write_file(&out.join(name), text.as_bytes())?;
                    manifest.save(&manifest_path.map(Path::to_path_buf).unwrap_or_else(|| out.join(MANIFEST_FILE)))?;
                }
                None => {
                    if let Some(path) = manifest_path {
                        manifest.save(path)?;
                    }
                }
            }
            stdout.write_all(text.as_bytes()).map_err(stdout_err)?;
            Ok(())
        }
        CommandConfig::Quadrics => {
            let mesh = read_mesh(&manifest.inputs[0])?;
            let quadrics = accumulate_vertex_quadrics(&mesh);
            let mut buf = Vec::new();
            quadrics.write_csv(&mut buf).expect("writing to memory");
            match &manifest.output {
                Some(path) => write_file(path, &buf)?,
                None => stdout.write_all(&buf).map_err(stdout_err)?,
            }
            if let Some(path) = manifest_path {
                manifest.save(path)?;
            }
            Ok(())
        }
    }
}

fn stdout_err(e: std::io::Error) -> CliError {
    CliError::Usage(format!("stdout: {e}"))
}

fn require_output(manifest: &RunManifest) -> Result<&Path, CliError> {
    manifest.output.as_deref().ok_or_else(|| CliError::Usage("an output directory is required (--out)".into()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_mesh(path: &Path) -> Result<TriangleMesh, CliError> {
    load_mesh(path, None).map_err(|e| CliError::at(path, e))
}

/// Writes one mesh per component as `<stem>_<k>.off` and returns the paths.
pub fn prepare(
    input: &Path,
    out: &Path,
    target_vertices: usize,
    split: bool,
    normalize: bool,
    order: PrepareOrder,
) -> Result<Vec<PathBuf>, CliError> {
    let mesh = read_mesh(input)?;
    let simplify = |m: &TriangleMesh| -> Result<TriangleMesh, CliError> {
        let r = simplify_to(m, target_vertices)?;
        if !r.reached_target {
            warn!(
                "{}: stopped at {} vertices (target {target_vertices})",
                input.display(),
                r.mesh.vertex_count()
            );
        }
        Ok(r.mesh)
    };
    let parts = match (split, order) {
        (false, _) => vec![simplify(&mesh)?],
        (true, PrepareOrder::SplitFirst) => {
            mesh.connected_components().iter().map(simplify).collect::<Result<Vec<_>, _>>()?
        }
        (true, PrepareOrder::SimplifyFirst) => simplify(&mesh)?.connected_components(),
    };
    if parts.is_empty() {
        return Err(CliError::Usage(format!("{}: mesh has no faces", input.display())));
    }

    create_dir(out)?;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh");
    let mut written = Vec::with_capacity(parts.len());
    for (k, part) in parts.into_iter().enumerate() {
        let part = if normalize { part.normalize_unit_sphere()?.0 } else { part };
        let path = out.join(format!("{stem}_{k:03}.off"));
        save_mesh(&part, &path, MeshFormat::Off).map_err(|e| CliError::at(&path, e))?;
        info!("{}: {} vertices, {} faces", path.display(), part.vertex_count(), part.face_count());
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Serialize)]
struct FitReport {
    loss: LossReport,
    eval: EvalReport,
    steps: usize,
    points: usize,
}

fn run_fit(
    mesh_path: &Path,
    out: &Path,
    preset: Option<&str>,
    config: &qgeom::FitConfig,
    metro_samples: usize,
) -> Result<(), CliError> {
    let mesh = read_mesh(mesh_path)?;
    let target = TargetBundle::prepare(mesh).map_err(|e| CliError::at(mesh_path, e))?;
    let write_trace = |trace: &qgeom::FitTrace| -> Result<(), CliError> {
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).expect("writing to memory");
        write_file(&out.join(TRACE_FILE), &buf)
    };

    let trace = match fit_points(&target, config) {
        Ok(trace) => trace,
        Err(FitError::NonFiniteLoss { step, component, trace }) => {
            write_trace(&trace)?;
            return Err(CliError::Numerical(format!(
                "non-finite {component} loss at step {step}; trace written to {}",
                out.join(TRACE_FILE).display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    write_trace(&trace)?;
    let cloud_path = out.join(CLOUD_FILE);
    save_points(&trace.final_cloud, &cloud_path, PointFormat::Xyz).map_err(|e| CliError::at(&cloud_path, e))?;

    let final_loss = combined_loss(&trace.final_cloud, &target, &config.weights)?;
    let report = FitReport {
        loss: final_loss.report(preset.unwrap_or("custom")),
        eval: EvalReport::evaluate(&trace.final_cloud, &target.mesh, metro_samples, config.seed)?,
        steps: trace.len(),
        points: trace.final_cloud.len(),
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serialises");
    text.push('\n');
    write_file(&out.join(REPORT_FILE), text.as_bytes())?;
    info!("{}: total loss {:e}", out.display(), report.loss.scalar);
    Ok(())
}

/// Evaluation report as pretty JSON or a one-row CSV table.
pub fn eval(cloud: &Path, mesh: &Path, samples: usize, seed: u64, csv: bool) -> Result<String, CliError> {
    if samples == 0 {
        return Err(CliError::Usage("--samples must be positive".into()));
    }
    let points = load_points(cloud, None).map_err(|e| CliError::at(cloud, e))?;
    let mesh = read_mesh(mesh)?;
    let report = EvalReport::evaluate(&points, &mesh, samples, seed)?;
    if csv {
        let mut buf = Vec::new();
        report.write_csv(&mut buf).expect("writing to memory");
        Ok(String::from_utf8(buf).expect("ascii csv"))
    } else {
        let mut text = serde_json::to_string_pretty(&report).expect("report serialises");
        text.push('\n');
        Ok(text)
    }
}
