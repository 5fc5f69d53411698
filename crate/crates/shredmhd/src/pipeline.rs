//! Campaign orchestration: generate snapshots, build and persist the
//! training bundle, train, evaluate, export, audit.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use shredmhd_core::dataset::{
    build_bundle, make_splits, rebuild_bundle, BundleOptions, DatasetBundle, FieldKind, MinMax,
    ScalingParams, SplitRole,
};
use shredmhd_core::eval::{evaluate_trajectory, ReconstructionResult};
use shredmhd_core::linalg::ReducedBasis;
use shredmhd_core::mhdsim::{run_simulation, SimConfig, SnapshotSeries};
use shredmhd_core::shred::{train, ShredArch, ShredModel};

use crate::config::{drive_label, ExperimentConfig};
use crate::error::{io_err, AppError, Result};
use crate::io::dmx::{read_dmx, write_dmx};
use crate::io::manifest::{sha256_hex, Manifest};
use crate::io::model_file::{load_model, save_model};
use crate::io::vtk::{write_structured_points, VtkScalar, VtkVector};
use crate::report;
use crate::store::{self, DirLock};

fn sim_for(config: &ExperimentConfig, drive: &shredmhd_core::mhdsim::MagneticDrive) -> SimConfig {
    SimConfig {
        drive: drive.clone(),
        ..config.sim.clone()
    }
}

/// Runs the simulator for every split setting that has no current stored
/// run. Returns (new runs, skipped runs).
pub fn cmd_generate(config: &ExperimentConfig) -> Result<(usize, usize)> {
    config.split.validate()?;
    let _lock = DirLock::acquire(&config.out_dir)?;

    let settings = config.split.all_settings();
    let todo: Vec<_> = settings
        .iter()
        .filter(|(drive, _)| !store::run_is_current(&config.out_dir, &sim_for(config, drive)))
        .collect();
    let skipped = settings.len() - todo.len();

    let results: Vec<Result<()>> = todo
        .par_iter()
        .map(|(drive, _)| {
            let sim = sim_for(config, drive);
            let t0 = Instant::now();
            let series = run_simulation(&sim).map_err(|e| {
                AppError::Config(format!("run {} failed: {e}", drive_label(drive)))
            })?;
            store::write_run(&config.out_dir, &series, t0.elapsed().as_millis())?;
            Ok(())
        })
        .collect();
    for r in results {
        r?;
    }
    Ok((todo.len(), skipped))
}

/// Loads every split run from the store, erroring with the list of
/// absent settings.
pub fn load_split_runs(
    config: &ExperimentConfig,
) -> Result<(Vec<SnapshotSeries>, Vec<SplitRole>)> {
    let mut missing = Vec::new();
    let mut runs = Vec::new();
    for (drive, _) in config.split.all_settings() {
        let sim = sim_for(config, &drive);
        if !store::run_is_current(&config.out_dir, &sim) {
            missing.push(drive_label(&drive));
            continue;
        }
        runs.push(store::read_run(&store::run_dir(&config.out_dir, &drive))?);
    }
    if !missing.is_empty() {
        return Err(AppError::MissingRuns(missing.join(", ")));
    }
    let roles = make_splits(&config.split, &runs)?;
    Ok((runs, roles))
}

fn bundle_options(config: &ExperimentConfig) -> BundleOptions {
    BundleOptions {
        rank: config.rank,
        lag: config.lag,
        sensors: config.sensors.clone(),
        compression: config.compression,
        param_head: config.param_head,
    }
}

pub fn bundle_dir(out_dir: &Path) -> PathBuf {
    out_dir.join("bundle")
}

pub fn model_path(out_dir: &Path) -> PathBuf {
    out_dir.join("model.bin")
}

/// Persists the bundle artifacts: bases, latent targets, sensor series,
/// scaling, and the split manifest with its hash links.
fn write_bundle(
    config: &ExperimentConfig,
    runs: &[SnapshotSeries],
    bundle: &DatasetBundle,
) -> Result<String> {
    let dir = bundle_dir(&config.out_dir);
    for sub in ["basis", "latent", "sensors"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(io_err(&p))?;
    }

    let mut scaling = Manifest::new();
    for ((name, _), basis) in bundle.output_map.blocks.iter().zip(&bundle.bases) {
        write_dmx(&dir.join("basis").join(format!("{name}.dmx")), basis.u())?;
        let sigma: Vec<String> = basis
            .singular_values()
            .iter()
            .map(|s| s.to_string())
            .collect();
        scaling.set("singular_values", name, sigma.join(","));
    }
    for (kind, mm) in &bundle.scaling.fields {
        scaling.set("fields", kind.name(), format!("{},{}", mm.min, mm.max));
    }
    for (mode, mm) in bundle.scaling.latent.iter().enumerate() {
        scaling.set("latent", &format!("mode_{mode}"), format!("{},{}", mm.min, mm.max));
    }
    if let Some(mm) = &bundle.scaling.drive {
        scaling.set("drive", "minmax", format!("{},{}", mm.min, mm.max));
    }
    scaling.write(&dir.join("scaling.txt"))?;

    for traj in &bundle.trajectories {
        let label = drive_label(&runs[traj.source].config.drive);
        // Latent targets in coefficient orientation (width x Nt).
        write_dmx(
            &dir.join("latent").join(format!("{label}.dmx")),
            &traj.targets.transpose(),
        )?;
        let mut csv = String::from("frame,t");
        for s in 0..traj.sensor_series.cols() {
            csv.push_str(&format!(",s{s}"));
        }
        csv.push('\n');
        for frame in 0..traj.sensor_series.rows() {
            csv.push_str(&format!("{frame},{}", traj.times[frame]));
            for s in 0..traj.sensor_series.cols() {
                csv.push_str(&format!(",{}", traj.sensor_series[(frame, s)]));
            }
            csv.push('\n');
        }
        let p = dir.join("sensors").join(format!("{label}.csv"));
        fs::write(&p, csv).map_err(io_err(&p))?;
    }

    let mut split = Manifest::new();
    split.set("experiment", "config_hash", config.hash());
    for traj in &bundle.trajectories {
        let run = &runs[traj.source];
        split.set("roles", &drive_label(&run.config.drive), traj.role.name());
        split.set(
            "run_hashes",
            &drive_label(&run.config.drive),
            store::sim_config_hash(&run.config),
        );
    }
    let sources: Vec<String> = bundle
        .basis_sources
        .iter()
        .map(|&i| drive_label(&runs[i].config.drive))
        .collect();
    split.set("basis", "sources", sources.join(","));
    split.set("basis", "scaling_hash", sha256_hex(&scaling.to_text()));
    split.write(&dir.join("split_manifest.txt"))?;
    Ok(sha256_hex(&split.to_text()))
}

/// Reads the persisted bundle and reassembles it over the given runs.
pub fn load_bundle(
    config: &ExperimentConfig,
    runs: &[SnapshotSeries],
    roles: &[SplitRole],
) -> Result<DatasetBundle> {
    let dir = bundle_dir(&config.out_dir);
    let scaling_path = dir.join("scaling.txt");
    let scaling_m = Manifest::read(&scaling_path)?;

    let parse_minmax = |raw: &str| -> Result<MinMax> {
        let (min, max) = raw.split_once(',').ok_or_else(|| AppError::Format {
            what: "scaling",
            path: scaling_path.clone(),
            detail: format!("expected min,max, got {raw:?}"),
        })?;
        Ok(MinMax {
            min: min.trim().parse().map_err(|e| AppError::Format {
                what: "scaling",
                path: scaling_path.clone(),
                detail: format!("{raw:?}: {e}"),
            })?,
            max: max.trim().parse().map_err(|e| AppError::Format {
                what: "scaling",
                path: scaling_path.clone(),
                detail: format!("{raw:?}: {e}"),
            })?,
        })
    };

    let mut fields = Vec::new();
    for kind in FieldKind::ALL {
        let raw = scaling_m.require("fields", kind.name(), &scaling_path)?;
        fields.push((kind, parse_minmax(raw)?));
    }
    let mut latent = Vec::new();
    let mut mode = 0;
    while let Some(raw) = scaling_m.get("latent", &format!("mode_{mode}")) {
        latent.push(parse_minmax(raw)?);
        mode += 1;
    }
    let drive = scaling_m
        .get("drive", "minmax")
        .map(|raw| parse_minmax(raw))
        .transpose()?;
    let scaling = ScalingParams {
        fields,
        latent,
        drive,
    };

    let options = bundle_options(config);
    let block_names: Vec<String> = match config.compression {
        shredmhd_core::dataset::CompressionMode::PerField => FieldKind::ALL
            .iter()
            .map(|k| k.name().to_string())
            .collect(),
        shredmhd_core::dataset::CompressionMode::Stacked => vec!["state".to_string()],
    };
    let mut bases = Vec::new();
    for name in &block_names {
        let u = read_dmx(&dir.join("basis").join(format!("{name}.dmx")))?;
        let sigma_raw = scaling_m.require("singular_values", name, &scaling_path)?;
        let sigma: Vec<f64> = sigma_raw
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| AppError::Format {
                what: "scaling",
                path: scaling_path.clone(),
                detail: format!("singular values for {name}: {e}"),
            })?;
        bases.push(ReducedBasis::new(u, sigma)?);
    }

    // Basis sources resolved against the provided run list by label.
    let split_path = dir.join("split_manifest.txt");
    let split_m = Manifest::read(&split_path)?;
    let sources_raw = split_m.require("basis", "sources", &split_path)?;
    let mut basis_sources = Vec::new();
    for label in sources_raw.split(',').filter(|s| !s.is_empty()) {
        if let Some(i) = runs
            .iter()
            .position(|r| drive_label(&r.config.drive) == label)
        {
            basis_sources.push(i);
        }
    }

    Ok(rebuild_bundle(runs, roles, &options, scaling, bases, basis_sources)?)
}

pub struct TrainOutcome {
    pub model_file: PathBuf,
    pub epochs_run: usize,
    pub best_validation_loss: f64,
    pub wall: std::time::Duration,
}

/// Builds the bundle, trains the network, and persists the model with
/// its loss history and hash-linked manifest.
pub fn cmd_train(config: &ExperimentConfig) -> Result<TrainOutcome> {
    let _lock = DirLock::acquire(&config.out_dir)?;
    let t0 = Instant::now();
    let (runs, roles) = load_split_runs(config)?;
    let bundle = build_bundle(&runs, &roles, &bundle_options(config))?;
    let bundle_hash = write_bundle(config, &runs, &bundle)?;

    let arch = ShredArch::reference(config.sensors.coords.len(), bundle.output_map.clone());
    let mut model = ShredModel::init(arch, bundle.scaling.clone(), config.seed)?;
    let train_samples = bundle.samples_of(SplitRole::Train);
    let val_samples = bundle.samples_of(SplitRole::Validation);
    let mut train_cfg = config.train.clone();
    train_cfg.seed = config.seed;
    let history = train(&mut model, &train_samples, &val_samples, &train_cfg)?;

    let model_file = model_path(&config.out_dir);
    save_model(&model_file, &model)?;

    let mut csv = String::from("epoch,train_loss,val_loss\n");
    for (e, (tr, va)) in history.epochs.iter().enumerate() {
        csv.push_str(&format!("{e},{tr},{va}\n"));
    }
    let hist_path = config.out_dir.join("history.csv");
    fs::write(&hist_path, csv).map_err(io_err(&hist_path))?;

    let mut m = Manifest::new();
    m.set("model", "experiment_hash", config.hash());
    m.set("model", "bundle_hash", bundle_hash);
    m.set("model", "parameter_count", model.parameter_count());
    m.set("model", "epochs_run", history.epochs.len());
    m.set("model", "best_epoch", history.best_epoch);
    m.set("model", "best_validation_loss", history.best_validation_loss);
    m.set("model", "stopped_early", history.stopped_early);
    m.set("model", "seed", config.seed);
    m.set("model", "wall_ms", t0.elapsed().as_millis());
    m.write(&config.out_dir.join("model_manifest.txt"))?;

    Ok(TrainOutcome {
        model_file,
        epochs_run: history.epochs.len(),
        best_validation_loss: history.best_validation_loss,
        wall: t0.elapsed(),
    })
}

pub struct EvaluateOutcome {
    pub results: Vec<(String, ReconstructionResult)>,
    pub all_thresholds_met: bool,
    pub report_dir: PathBuf,
}

/// Evaluates every test trajectory: prediction, back-projection, error
/// series, report CSVs, summary, and VTK frames at the export instant.
pub fn cmd_evaluate(
    config: &ExperimentConfig,
    model_file: &Path,
    oracle_latents: bool,
    export_time: Option<f64>,
) -> Result<EvaluateOutcome> {
    let _lock = DirLock::acquire(&config.out_dir)?;
    let model = load_model(model_file)?;
    let (runs, roles) = load_split_runs(config)?;
    let bundle = load_bundle(config, &runs, &roles)?;

    // The model must carry the same scaling the bundle was built with.
    if model.scaling != bundle.scaling {
        return Err(AppError::Config(
            "model scaling does not match the stored bundle; retrain or re-generate".into(),
        ));
    }

    let report_dir = config.out_dir.join("reports");
    fs::create_dir_all(&report_dir).map_err(io_err(&report_dir))?;

    let mut results = Vec::new();
    for traj in bundle
        .trajectories
        .iter()
        .filter(|t| t.role == SplitRole::Test)
    {
        let truth = &runs[traj.source];
        let label = drive_label(&truth.config.drive);
        let t0 = Instant::now();
        let result = evaluate_trajectory(&model, &bundle, traj, truth, oracle_latents)?;
        let wall = t0.elapsed();

        report::write_case_csv(&report_dir, &label, &result)?;
        if let Some(t_export) = export_time {
            export_vtk_frame(&report_dir, &label, truth, &result, t_export)?;
        }
        let _ = wall;
        results.push((label, result));
    }

    let summary = report::write_summary(
        &report_dir,
        config,
        &results,
        oracle_latents,
        sha256_hex(&String::from_utf8_lossy(
            &fs::read(model_file).map_err(io_err(model_file))?,
        )),
    )?;

    Ok(EvaluateOutcome {
        results,
        all_thresholds_met: summary,
        report_dir,
    })
}

/// One VTK file per test case at the frame closest to `t_export`:
/// truth, reconstruction and residual for each field.
fn export_vtk_frame(
    report_dir: &Path,
    label: &str,
    truth: &SnapshotSeries,
    result: &ReconstructionResult,
    t_export: f64,
) -> Result<()> {
    let frame = truth
        .times
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1 - t_export)
                .abs()
                .partial_cmp(&(b.1 - t_export).abs())
                .unwrap()
        })
        .map(|(i, _)| i)
        .unwrap_or(0);

    let grid = shredmhd_core::mhdsim::build_grid(&truth.config.geometry)
        .map_err(AppError::from)?;
    let col = |m: &shredmhd_core::linalg::DenseMatrix| -> Vec<f64> { m.col(frame) };

    let t_true = col(&truth.t);
    let t_recon = col(result.field("T").expect("T reconstructed"));
    let t_resid: Vec<f64> = t_true
        .iter()
        .zip(&t_recon)
        .map(|(a, b)| (a - b).abs())
        .collect();
    let p_true = col(&truth.p);
    let p_recon = col(result.field("p").expect("p reconstructed"));
    let p_resid: Vec<f64> = p_true
        .iter()
        .zip(&p_recon)
        .map(|(a, b)| (a - b).abs())
        .collect();
    let u_true = [col(&truth.ux), col(&truth.uy), col(&truth.uz)];
    let u_recon = [
        col(result.field("ux").expect("ux reconstructed")),
        col(result.field("uy").expect("uy reconstructed")),
        col(result.field("uz").expect("uz reconstructed")),
    ];
    let u_resid: Vec<f64> = (0..u_true[0].len())
        .map(|i| {
            let dx = u_true[0][i] - u_recon[0][i];
            let dy = u_true[1][i] - u_recon[1][i];
            let dz = u_true[2][i] - u_recon[2][i];
            (dx * dx + dy * dy + dz * dz).sqrt()
        })
        .collect();

    let t_fill = truth.config.t_pipe;
    let p_fill = truth.config.p_ext;
    let path = report_dir.join(format!("{label}_t{t_export:.3}.vtk"));
    write_structured_points(
        &path,
        &format!("{label} at t={:.3}s (frame {frame})", truth.times[frame]),
        &grid,
        &truth.fluid_ids,
        &[
            VtkScalar { name: "T_true", values: &t_true, fill: t_fill },
            VtkScalar { name: "T_recon", values: &t_recon, fill: t_fill },
            VtkScalar { name: "T_residual", values: &t_resid, fill: 0.0 },
            VtkScalar { name: "p_true", values: &p_true, fill: p_fill },
            VtkScalar { name: "p_recon", values: &p_recon, fill: p_fill },
            VtkScalar { name: "p_residual", values: &p_resid, fill: 0.0 },
            VtkScalar { name: "u_residual_mag", values: &u_resid, fill: 0.0 },
        ],
        &[
            VtkVector {
                name: "u_true",
                x: &u_true[0],
                y: &u_true[1],
                z: &u_true[2],
                fill: [0.0; 3],
            },
            VtkVector {
                name: "u_recon",
                x: &u_recon[0],
                y: &u_recon[1],
                z: &u_recon[2],
                fill: [0.0; 3],
            },
        ],
    )
}

/// Exports a stored field frame as VTK or CSV.
pub fn cmd_export(
    run_dir: &Path,
    field: &str,
    frame: usize,
    format: &str,
    out: &Path,
) -> Result<()> {
    let series = store::read_run(run_dir)?;
    let matrix = store::field_of(&series, field).ok_or_else(|| {
        AppError::Config(format!(
            "unknown field {field}; expected one of {}",
            store::FIELD_NAMES.join(", ")
        ))
    })?;
    if frame >= matrix.cols() {
        return Err(AppError::Config(format!(
            "frame {frame} out of range ({} frames)",
            matrix.cols()
        )));
    }
    match format {
        "vtk" => {
            let grid = shredmhd_core::mhdsim::build_grid(&series.config.geometry)?;
            let values = matrix.col(frame);
            let fill = match field {
                "T" => series.config.t_pipe,
                "p" => series.config.p_ext,
                _ => 0.0,
            };
            write_structured_points(
                out,
                &format!("{field} frame {frame}"),
                &grid,
                &series.fluid_ids,
                &[VtkScalar {
                    name: field,
                    values: &values,
                    fill,
                }],
                &[],
            )
        }
        "csv" => {
            let mut csv = String::from("cell_id,x,y,z,value\n");
            for (row, (&id, xyz)) in series
                .fluid_ids
                .iter()
                .zip(&series.cell_coords)
                .enumerate()
            {
                csv.push_str(&format!(
                    "{id},{},{},{},{}\n",
                    xyz[0],
                    xyz[1],
                    xyz[2],
                    matrix[(row, frame)]
                ));
            }
            fs::write(out, csv).map_err(io_err(out))
        }
        other => Err(AppError::Config(format!(
            "unknown export format {other:?}; expected vtk or csv"
        ))),
    }
}

pub struct AuditOutcome {
    pub checks: Vec<(String, bool, String)>,
}

impl AuditOutcome {
    pub fn all_ok(&self) -> bool {
        self.checks.iter().all(|(_, ok, _)| *ok)
    }
}

/// Verifies the manifest chain on disk: experiment hash, run hashes,
/// basis sources free of test trajectories, and scaling reproducible
/// from the recorded sources alone.
pub fn cmd_audit(config: &ExperimentConfig) -> Result<AuditOutcome> {
    let mut checks = Vec::new();
    let dir = bundle_dir(&config.out_dir);
    let split_path = dir.join("split_manifest.txt");
    let split_m = Manifest::read(&split_path)?;

    let stored_hash = split_m.require("experiment", "config_hash", &split_path)?;
    checks.push((
        "experiment hash matches configuration".into(),
        stored_hash == config.hash(),
        format!("stored {stored_hash}"),
    ));

    // Roles and sources.
    let sources_raw = split_m.require("basis", "sources", &split_path)?.to_string();
    let sources: Vec<&str> = sources_raw.split(',').filter(|s| !s.is_empty()).collect();
    let roles = split_m.section("roles").unwrap_or(&[]).to_vec();
    let mut leakage = Vec::new();
    let mut missing_members = Vec::new();
    for (label, role) in &roles {
        let in_sources = sources.contains(&label.as_str());
        if role == "test" && in_sources {
            leakage.push(label.clone());
        }
        if role != "test" && !in_sources {
            missing_members.push(label.clone());
        }
    }
    checks.push((
        "no test trajectory fed the basis or scaling".into(),
        leakage.is_empty(),
        if leakage.is_empty() {
            format!("{} sources checked", sources.len())
        } else {
            format!("leaked: {}", leakage.join(", "))
        },
    ));
    checks.push((
        "every train/validation trajectory is a basis source".into(),
        missing_members.is_empty(),
        if missing_members.is_empty() {
            "complete".into()
        } else {
            format!("missing: {}", missing_members.join(", "))
        },
    ));

    // Recompute per-field scaling from the source runs only.
    let (runs, roles_vec) = load_split_runs(config)?;
    let bundle = load_bundle(config, &runs, &roles_vec)?;
    let audit_result = bundle.audit_no_leakage(&runs);
    checks.push((
        "stored scaling reproduces from train+validation data".into(),
        audit_result.is_ok(),
        match &audit_result {
            Ok(()) => "recomputed min/max match exactly".into(),
            Err(e) => e.to_string(),
        },
    ));

    // Model scaling consistency, when a model exists.
    let model_file = model_path(&config.out_dir);
    if model_file.exists() {
        let model = load_model(&model_file)?;
        checks.push((
            "model file scaling matches the bundle".into(),
            model.scaling == bundle.scaling,
            "compared field, latent and drive ranges".into(),
        ));
    }

    Ok(AuditOutcome { checks })
}
