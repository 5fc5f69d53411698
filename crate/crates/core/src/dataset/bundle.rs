use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::scaling::{FieldKind, MinMax, ScalingParams};
use super::sensors::{extract_sensor_series, ResolvedSensors, SensorSpec};
use super::split::SplitRole;
use super::transform::{remove_hydrostatic, stack_parametric};
use super::window::{build_lagged_sequences, LaggedBatch};
use super::DataError;
use crate::linalg::{truncated_svd, DenseMatrix, ReducedBasis};
use crate::mhdsim::SnapshotSeries;

/// Whether each field gets its own rank-r basis or all fields share one
/// basis over the stacked state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompressionMode {
    PerField,
    Stacked,
}

/// Layout of the network output vector: named latent blocks followed by
/// an optional drive component.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputMap {
    pub blocks: Vec<(String, usize)>,
    pub param_head: bool,
}

impl OutputMap {
    pub fn width(&self) -> usize {
        self.blocks.iter().map(|(_, r)| r).sum::<usize>() + usize::from(self.param_head)
    }

    /// (offset, rank) of a named block.
    pub fn block_span(&self, name: &str) -> Option<(usize, usize)> {
        let mut offset = 0;
        for (n, r) in &self.blocks {
            if n == name {
                return Some((offset, *r));
            }
            offset += r;
        }
        None
    }

    /// Index of the drive component, when present.
    pub fn param_index(&self) -> Option<usize> {
        self.param_head.then(|| self.width() - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleOptions {
    pub rank: usize,
    pub lag: usize,
    pub sensors: SensorSpec,
    pub compression: CompressionMode,
    pub param_head: bool,
}

impl Default for BundleOptions {
    fn default() -> Self {
        Self {
            rank: 5,
            lag: 30,
            sensors: SensorSpec::default(),
            compression: CompressionMode::PerField,
            param_head: false,
        }
    }
}

/// One trajectory's training-ready data.
#[derive(Debug, Clone)]
pub struct TrajectoryData {
    pub role: SplitRole,
    /// Index into the source run list.
    pub source: usize,
    /// Normalized sensor readings, Nt x n_sensors.
    pub sensor_series: DenseMatrix,
    /// Per-frame targets, Nt x output width.
    pub targets: DenseMatrix,
    /// One lag-windowed sample per frame.
    pub samples: Vec<LaggedBatch>,
    /// Raw drive scalar per frame [T].
    pub drive_series: Vec<f64>,
    pub times: Vec<f64>,
}

/// Normalized, compressed, windowed dataset with its scaling and bases.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub options: BundleOptions,
    pub scaling: ScalingParams,
    /// One basis per output block, in block order.
    pub bases: Vec<ReducedBasis>,
    pub output_map: OutputMap,
    pub trajectories: Vec<TrajectoryData>,
    pub sensors: ResolvedSensors,
    /// Source indices whose columns built the bases and scaling
    /// (train and validation only; audited against leakage).
    pub basis_sources: Vec<usize>,
}

impl DatasetBundle {
    pub fn samples_of(&self, role: SplitRole) -> Vec<&LaggedBatch> {
        self.trajectories
            .iter()
            .filter(|t| t.role == role)
            .flat_map(|t| t.samples.iter())
            .collect()
    }

    /// Verifies that no test trajectory contributed to the bases or
    /// scaling, and that the recorded scaling is reproducible from the
    /// recorded sources.
    pub fn audit_no_leakage(&self, runs: &[SnapshotSeries]) -> Result<(), DataError> {
        for t in &self.trajectories {
            let used = self.basis_sources.contains(&t.source);
            if t.role == SplitRole::Test && used {
                return Err(DataError::SplitOverlap {
                    detail: format!("test trajectory {} fed the basis", t.source),
                });
            }
            if t.role != SplitRole::Test && !used {
                return Err(DataError::SplitOverlap {
                    detail: format!(
                        "{} trajectory {} missing from basis sources",
                        t.role.name(),
                        t.source
                    ),
                });
            }
        }
        // Recompute the per-field scaling from the recorded sources.
        for kind in FieldKind::ALL {
            let expected = fit_field_scaling(kind, runs, &self.basis_sources)?;
            let stored = self.scaling.field(kind).ok_or(DataError::Dimension {
                op: "audit",
                detail: format!("missing scaling for {}", kind.name()),
            })?;
            if expected != *stored {
                return Err(DataError::SplitOverlap {
                    detail: format!(
                        "scaling for {} is {stored:?}, but train+validation give {expected:?}",
                        kind.name()
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Physical field matrix of one run: pressure is served with its
/// hydrostatic head removed.
fn field_matrix(run: &SnapshotSeries, kind: FieldKind) -> Result<DenseMatrix, DataError> {
    Ok(match kind {
        FieldKind::Temperature => run.t.clone(),
        FieldKind::VelocityX => run.ux.clone(),
        FieldKind::VelocityY => run.uy.clone(),
        FieldKind::VelocityZ => run.uz.clone(),
        FieldKind::Pressure => remove_hydrostatic(
            &run.p,
            run.config.material.rho0,
            [0.0, run.config.gravity_y, 0.0],
            &run.cell_coords,
        )?,
    })
}

fn fit_field_scaling(
    kind: FieldKind,
    runs: &[SnapshotSeries],
    sources: &[usize],
) -> Result<MinMax, DataError> {
    let mats: Vec<DenseMatrix> = sources
        .iter()
        .map(|&i| field_matrix(&runs[i], kind))
        .collect::<Result<_, _>>()?;
    let refs: Vec<&DenseMatrix> = mats.iter().collect();
    MinMax::fit_matrices(&refs, kind.name())
}

/// Builds the dataset bundle: scaling and bases from train + validation
/// columns only, latent targets for all trajectories, sensor windows, and
/// per-mode latent scaling.
pub fn build_bundle(
    runs: &[SnapshotSeries],
    roles: &[SplitRole],
    options: &BundleOptions,
) -> Result<DatasetBundle, DataError> {
    if runs.is_empty() || runs.len() != roles.len() {
        return Err(DataError::Dimension {
            op: "build_bundle",
            detail: format!("{} runs vs {} roles", runs.len(), roles.len()),
        });
    }
    let nt = runs[0].frame_count();
    let nf = runs[0].t.rows();
    for (i, r) in runs.iter().enumerate() {
        if r.frame_count() != nt || r.t.rows() != nf {
            return Err(DataError::Dimension {
                op: "build_bundle",
                detail: format!("run {i} shape differs from run 0"),
            });
        }
    }

    let trainval: Vec<usize> = (0..runs.len())
        .filter(|&i| roles[i] != SplitRole::Test)
        .collect();
    if trainval.is_empty() {
        return Err(DataError::MissingRun {
            detail: "no train or validation runs".to_string(),
        });
    }

    // Per-field scaling from train + validation.
    let mut field_scaling = Vec::with_capacity(FieldKind::ALL.len());
    for kind in FieldKind::ALL {
        field_scaling.push((kind, fit_field_scaling(kind, runs, &trainval)?));
    }
    let scaling_of = |kind: FieldKind| -> MinMax {
        field_scaling
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, m)| *m)
            .expect("all fields fitted")
    };

    // Bases from stacked normalized train + validation columns.
    let mut bases = Vec::new();
    // Latents per trajectory, concatenated over blocks (rows build up).
    let mut latents: Vec<Vec<Vec<f64>>> = alloc::vec![Vec::new(); runs.len()];

    let mut process_block = |name: &str,
                             normalized: &dyn Fn(usize) -> Result<DenseMatrix, DataError>|
     -> Result<(), DataError> {
        let tv_mats: Vec<DenseMatrix> = trainval
            .iter()
            .map(|&i| normalized(i))
            .collect::<Result<_, _>>()?;
        let refs: Vec<&DenseMatrix> = tv_mats.iter().collect();
        let (stacked, _) = stack_parametric(&refs)?;
        drop(tv_mats);
        let (basis, _) = truncated_svd(&stacked, options.rank)?;
        drop(stacked);
        // Latents of train + validation only; the latent scaling is
        // fitted on these, and the full assembly recomputes everything.
        for &i in &trainval {
            let x = normalized(i)?;
            let v = basis.project(&x)?;
            for mode in 0..v.rows() {
                latents[i].push(v.row(mode).to_vec());
            }
        }
        bases.push(basis);
        let _ = name;
        Ok(())
    };

    match options.compression {
        CompressionMode::PerField => {
            for kind in FieldKind::ALL {
                let mm = scaling_of(kind);
                process_block(kind.name(), &|i: usize| {
                    Ok(mm.normalize_matrix(&field_matrix(&runs[i], kind)?))
                })?;
            }
        }
        CompressionMode::Stacked => {
            process_block("state", &|i: usize| {
                let mut rows = Vec::new();
                let mut data = Vec::new();
                for kind in FieldKind::ALL {
                    let m = scaling_of(kind).normalize_matrix(&field_matrix(&runs[i], kind)?);
                    rows.push(m.rows());
                    data.extend_from_slice(m.data());
                }
                let total_rows: usize = rows.iter().sum();
                DenseMatrix::from_vec(total_rows, nt, data).map_err(DataError::from)
            })?;
        }
    }

    // Per-mode latent scaling over train + validation trajectories.
    let n_modes = latents[trainval[0]].len();
    let mut latent_scaling = Vec::with_capacity(n_modes);
    for mode in 0..n_modes {
        let mm = MinMax::fit(
            trainval
                .iter()
                .flat_map(|&i| latents[i][mode].iter().copied()),
            &format!("latent mode {mode}"),
        )?;
        latent_scaling.push(mm);
    }

    // Drive scaling for the parameter head.
    let drive_scaling = if options.param_head {
        Some(MinMax::fit(
            trainval
                .iter()
                .flat_map(|&i| runs[i].drive.iter().map(|b| b[0])),
            "drive",
        )?)
    } else {
        None
    };

    let scaling = ScalingParams {
        fields: field_scaling,
        latent: latent_scaling,
        drive: drive_scaling,
    };
    rebuild_bundle(runs, roles, options, scaling, bases, trainval)
}

/// Assembles a bundle around existing bases and scaling (as persisted by
/// a training run): latent targets, sensor windows and samples are
/// recomputed deterministically; nothing is refitted.
pub fn rebuild_bundle(
    runs: &[SnapshotSeries],
    roles: &[SplitRole],
    options: &BundleOptions,
    scaling: ScalingParams,
    bases: Vec<ReducedBasis>,
    basis_sources: Vec<usize>,
) -> Result<DatasetBundle, DataError> {
    if runs.is_empty() || runs.len() != roles.len() {
        return Err(DataError::Dimension {
            op: "rebuild_bundle",
            detail: format!("{} runs vs {} roles", runs.len(), roles.len()),
        });
    }
    let nt = runs[0].frame_count();
    let grid = crate::mhdsim::build_grid(&runs[0].config.geometry).map_err(|e| {
        DataError::Dimension {
            op: "rebuild_bundle",
            detail: format!("grid rebuild failed: {e}"),
        }
    })?;
    let sensors = options.sensors.resolve(&grid)?;

    let blocks: Vec<(String, usize)> = match options.compression {
        CompressionMode::PerField => FieldKind::ALL
            .iter()
            .map(|k| (k.name().to_string(), options.rank))
            .collect(),
        CompressionMode::Stacked => alloc::vec![(String::from("state"), options.rank)],
    };
    if bases.len() != blocks.len() || bases.iter().any(|b| b.rank() != options.rank) {
        return Err(DataError::Dimension {
            op: "rebuild_bundle",
            detail: format!(
                "{} bases of ranks {:?} vs {} blocks of rank {}",
                bases.len(),
                bases.iter().map(|b| b.rank()).collect::<Vec<_>>(),
                blocks.len(),
                options.rank
            ),
        });
    }
    let output_map = OutputMap {
        blocks,
        param_head: options.param_head,
    };
    let latent_width: usize = output_map.blocks.iter().map(|(_, r)| r).sum();
    if scaling.latent.len() != latent_width {
        return Err(DataError::Dimension {
            op: "rebuild_bundle",
            detail: format!(
                "{} latent scalings vs width {latent_width}",
                scaling.latent.len()
            ),
        });
    }
    if options.param_head && scaling.drive.is_none() {
        return Err(DataError::Dimension {
            op: "rebuild_bundle",
            detail: String::from("parameter head enabled but no drive scaling"),
        });
    }

    let scaling_of = |kind: FieldKind| -> Result<MinMax, DataError> {
        scaling
            .field(kind)
            .copied()
            .ok_or_else(|| DataError::Dimension {
                op: "rebuild_bundle",
                detail: format!("missing scaling for {}", kind.name()),
            })
    };

    // Latents per trajectory through the given bases.
    let mut latents: Vec<Vec<Vec<f64>>> = alloc::vec![Vec::new(); runs.len()];
    match options.compression {
        CompressionMode::PerField => {
            for (kind, basis) in FieldKind::ALL.iter().zip(&bases) {
                let mm = scaling_of(*kind)?;
                for (i, run) in runs.iter().enumerate() {
                    let x = mm.normalize_matrix(&field_matrix(run, *kind)?);
                    let v = basis.project(&x)?;
                    for mode in 0..v.rows() {
                        latents[i].push(v.row(mode).to_vec());
                    }
                }
            }
        }
        CompressionMode::Stacked => {
            for (i, run) in runs.iter().enumerate() {
                let mut data = Vec::new();
                let mut total_rows = 0;
                for kind in FieldKind::ALL {
                    let m = scaling_of(kind)?.normalize_matrix(&field_matrix(run, kind)?);
                    total_rows += m.rows();
                    data.extend_from_slice(m.data());
                }
                let x = DenseMatrix::from_vec(total_rows, nt, data)?;
                let v = bases[0].project(&x)?;
                for mode in 0..v.rows() {
                    latents[i].push(v.row(mode).to_vec());
                }
            }
        }
    }

    // Per-trajectory targets, sensor series, and windows.
    let t_scaling = scaling_of(FieldKind::Temperature)?;
    let mut trajectories = Vec::with_capacity(runs.len());
    for (i, run) in runs.iter().enumerate() {
        let t_norm = t_scaling.normalize_matrix(&run.t);
        let sensor_series = extract_sensor_series(&t_norm, &sensors)?;
        let drive_series: Vec<f64> = run.drive.iter().map(|b| b[0]).collect();

        let width = output_map.width();
        let mut targets = DenseMatrix::zeros(nt, width);
        for frame in 0..nt {
            for (mode, mm) in scaling.latent.iter().enumerate() {
                targets[(frame, mode)] = mm.normalize(latents[i][mode][frame]);
            }
            if let Some(mm) = &scaling.drive {
                if options.param_head {
                    targets[(frame, width - 1)] = mm.normalize(drive_series[frame]);
                }
            }
        }

        let samples = build_lagged_sequences(&sensor_series, &targets, options.lag, i)?;
        trajectories.push(TrajectoryData {
            role: roles[i],
            source: i,
            sensor_series,
            targets,
            samples,
            drive_series,
            times: run.times.clone(),
        });
    }

    Ok(DatasetBundle {
        options: options.clone(),
        scaling,
        bases,
        output_map,
        trajectories,
        sensors,
        basis_sources,
    })
}
