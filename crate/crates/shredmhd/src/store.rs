//! Snapshot store: one directory per run holding the per-field matrices,
//! the run manifest (config echo, hash, stats), the cell-coordinate
//! table, and the per-frame drive series.

use std::fs;
use std::path::{Path, PathBuf};

use shredmhd_core::linalg::DenseMatrix;
use shredmhd_core::mhdsim::{MagneticDrive, SimConfig, SnapshotSeries};

use crate::config::{drive_label, read_sim_config, write_sim_config};
use crate::error::{io_err, AppError, Result};
use crate::io::dmx::{read_dmx, write_dmx};
use crate::io::manifest::{sha256_hex, Manifest};

pub const FIELD_NAMES: [&str; 5] = ["T", "ux", "uy", "uz", "p"];

/// Canonical hash of one run's simulator configuration.
pub fn sim_config_hash(config: &SimConfig) -> String {
    let mut m = Manifest::new();
    write_sim_config(&mut m, config);
    sha256_hex(&m.to_text())
}

pub fn run_dir(out_dir: &Path, drive: &MagneticDrive) -> PathBuf {
    out_dir.join("runs").join(drive_label(drive))
}

/// True when a stored run exists with a matching configuration hash.
pub fn run_is_current(out_dir: &Path, config: &SimConfig) -> bool {
    let dir = run_dir(out_dir, &config.drive);
    let manifest_path = dir.join("manifest.txt");
    let Ok(m) = Manifest::read(&manifest_path) else {
        return false;
    };
    m.get("run", "config_hash") == Some(sim_config_hash(config).as_str())
}

/// Persists a finished run. `wall_ms` is recorded in the manifest.
pub fn write_run(out_dir: &Path, series: &SnapshotSeries, wall_ms: u128) -> Result<PathBuf> {
    let dir = run_dir(out_dir, &series.config.drive);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    for (name, matrix) in FIELD_NAMES
        .iter()
        .zip([&series.t, &series.ux, &series.uy, &series.uz, &series.p])
    {
        write_dmx(&dir.join(format!("{name}.dmx")), matrix)?;
    }

    // Cell coordinate table.
    let mut cells = String::from("cell_id,x,y,z\n");
    for (id, xyz) in series.fluid_ids.iter().zip(&series.cell_coords) {
        cells.push_str(&format!("{id},{},{},{}\n", xyz[0], xyz[1], xyz[2]));
    }
    let cells_path = dir.join("cells.csv");
    fs::write(&cells_path, cells).map_err(io_err(&cells_path))?;

    // Per-frame drive values.
    let mut drive = String::from("frame,t,bx,by,bz\n");
    for (f, (t, b)) in series.times.iter().zip(&series.drive).enumerate() {
        drive.push_str(&format!("{f},{t},{},{},{}\n", b[0], b[1], b[2]));
    }
    let drive_path = dir.join("drive.csv");
    fs::write(&drive_path, drive).map_err(io_err(&drive_path))?;

    let mut m = Manifest::new();
    m.set("run", "label", drive_label(&series.config.drive));
    m.set("run", "config_hash", sim_config_hash(&series.config));
    m.set("run", "frames", series.frame_count());
    m.set("run", "fluid_cells", series.t.rows());
    m.set("run", "substeps", series.substeps);
    m.set("run", "wall_ms", wall_ms);
    m.set(
        "run",
        "max_velocity_divergence",
        series.max_velocity_divergence,
    );
    m.set("run", "fields", FIELD_NAMES.join(","));
    m.set("run", "files", "T.dmx,ux.dmx,uy.dmx,uz.dmx,p.dmx,cells.csv,drive.csv");
    // Pressure anchoring convention of the projection solver, recorded
    // for reproducibility audits.
    m.set(
        "run",
        "pressure_anchor",
        "reduced pressure pinned to zero at open walls; output p = p_ext + q + rho0 g.y",
    );
    write_sim_config(&mut m, &series.config);
    m.write(&dir.join("manifest.txt"))?;
    Ok(dir)
}

/// Loads a stored run back into a `SnapshotSeries`.
pub fn read_run(dir: &Path) -> Result<SnapshotSeries> {
    let manifest_path = dir.join("manifest.txt");
    let m = Manifest::read(&manifest_path)?;
    let config = read_sim_config(&m, &manifest_path)?;
    let stored_hash = m.require("run", "config_hash", &manifest_path)?;
    if stored_hash != sim_config_hash(&config) {
        return Err(AppError::Format {
            what: "run manifest",
            path: manifest_path.clone(),
            detail: "config_hash does not match the embedded configuration".into(),
        });
    }

    let t = read_dmx(&dir.join("T.dmx"))?;
    let ux = read_dmx(&dir.join("ux.dmx"))?;
    let uy = read_dmx(&dir.join("uy.dmx"))?;
    let uz = read_dmx(&dir.join("uz.dmx"))?;
    let p = read_dmx(&dir.join("p.dmx"))?;

    let cells_path = dir.join("cells.csv");
    let cells_text = fs::read_to_string(&cells_path).map_err(io_err(&cells_path))?;
    let mut fluid_ids = Vec::new();
    let mut cell_coords = Vec::new();
    for line in cells_text.lines().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(AppError::Format {
                what: "cells.csv",
                path: cells_path.clone(),
                detail: format!("bad row {line:?}"),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|e| AppError::Format {
                what: "cells.csv",
                path: cells_path.clone(),
                detail: format!("{s:?}: {e}"),
            })
        };
        fluid_ids.push(parts[0].parse::<usize>().map_err(|e| AppError::Format {
            what: "cells.csv",
            path: cells_path.clone(),
            detail: format!("{line:?}: {e}"),
        })?);
        cell_coords.push([parse(parts[1])?, parse(parts[2])?, parse(parts[3])?]);
    }

    let drive_path = dir.join("drive.csv");
    let drive_text = fs::read_to_string(&drive_path).map_err(io_err(&drive_path))?;
    let mut times = Vec::new();
    let mut drive = Vec::new();
    for line in drive_text.lines().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(AppError::Format {
                what: "drive.csv",
                path: drive_path.clone(),
                detail: format!("bad row {line:?}"),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|e| AppError::Format {
                what: "drive.csv",
                path: drive_path.clone(),
                detail: format!("{s:?}: {e}"),
            })
        };
        times.push(parse(parts[1])?);
        drive.push([parse(parts[2])?, parse(parts[3])?, parse(parts[4])?]);
    }

    let frames: usize = m.parse_value("run", "frames", &manifest_path)?;
    if t.cols() != frames || times.len() != frames {
        return Err(AppError::Format {
            what: "run store",
            path: dir.to_path_buf(),
            detail: format!(
                "frame mismatch: manifest {frames}, T {}, drive {}",
                t.cols(),
                times.len()
            ),
        });
    }

    Ok(SnapshotSeries {
        config,
        times,
        drive,
        t,
        ux,
        uy,
        uz,
        p,
        fluid_ids,
        cell_coords,
        substeps: m.parse_value("run", "substeps", &manifest_path)?,
        max_velocity_divergence: m.parse_value(
            "run",
            "max_velocity_divergence",
            &manifest_path,
        )?,
    })
}

/// Guards an output directory against concurrent writers. The lock file
/// is removed on drop.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
        let path = out_dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(AppError::Locked(path))
            }
            Err(e) => Err(AppError::Io { path, source: e }),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Extracts a named field matrix from a loaded series.
pub fn field_of<'a>(series: &'a SnapshotSeries, name: &str) -> Option<&'a DenseMatrix> {
    series.field(name)
}
