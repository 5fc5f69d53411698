//! Experiment configuration: campaign presets, file round-tripping, and
//! the canonical text form whose hash links every artifact.

use std::path::{Path, PathBuf};

use shredmhd_core::dataset::{CompressionMode, SensorSpec, SplitSpec};
use shredmhd_core::mhdsim::{
    Geometry, InductionMode, MagneticDrive, MaterialProps, SimConfig, WallMode,
};
use shredmhd_core::shred::TrainConfig;

use crate::error::{AppError, Result};
use crate::io::manifest::{sha256_hex, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Campaign {
    Toroidal,
    Combined,
    Oscillating,
    Custom,
}

impl Campaign {
    pub fn name(&self) -> &'static str {
        match self {
            Campaign::Toroidal => "toroidal",
            Campaign::Combined => "combined",
            Campaign::Oscillating => "oscillating",
            Campaign::Custom => "custom",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "toroidal" => Some(Campaign::Toroidal),
            "combined" => Some(Campaign::Combined),
            "oscillating" => Some(Campaign::Oscillating),
            "custom" => Some(Campaign::Custom),
            _ => None,
        }
    }
}

/// Full campaign definition: simulator settings, splits, compression and
/// training hyperparameters, sensors, output directory and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub campaign: Campaign,
    /// Base simulator configuration; the drive field is replaced by each
    /// split setting when generating.
    pub sim: SimConfig,
    pub split: SplitSpec,
    pub rank: usize,
    pub lag: usize,
    pub compression: CompressionMode,
    pub param_head: bool,
    pub sensors: SensorSpec,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Built-in preset for a campaign. The oscillating preset enables the
    /// parameter-estimation head by default.
    pub fn preset(campaign: Campaign, out_dir: impl Into<PathBuf>) -> Result<Self> {
        let split = match campaign {
            Campaign::Toroidal => SplitSpec::toroidal_preset(),
            Campaign::Combined => SplitSpec::combined_preset(),
            Campaign::Oscillating => SplitSpec::oscillating_preset(),
            Campaign::Custom => {
                return Err(AppError::Config(
                    "custom campaigns need a --config file".into(),
                ))
            }
        };
        let mut sim = SimConfig::default();
        sim.drive = split.train[0].clone();
        Ok(Self {
            campaign,
            sim,
            split,
            rank: 5,
            lag: 30,
            compression: CompressionMode::PerField,
            param_head: campaign == Campaign::Oscillating,
            sensors: SensorSpec::default(),
            train: TrainConfig::default(),
            out_dir: out_dir.into(),
            seed: 0,
        })
    }

    /// Canonical text of everything that determines the artifacts. The
    /// output directory is excluded on purpose: moving a store does not
    /// change its contents.
    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::new();
        m.set("experiment", "campaign", self.campaign.name());
        m.set("experiment", "rank", self.rank);
        m.set("experiment", "lag", self.lag);
        m.set(
            "experiment",
            "compression",
            match self.compression {
                CompressionMode::PerField => "per-field",
                CompressionMode::Stacked => "stacked",
            },
        );
        m.set("experiment", "param_head", self.param_head);
        m.set("experiment", "seed", self.seed);

        write_sim_config(&mut m, &self.sim);

        for (i, c) in self.sensors.coords.iter().enumerate() {
            m.set("sensors", &format!("s{i}"), format!("{},{},{}", c[0], c[1], c[2]));
        }

        for (name, list) in [
            ("train", &self.split.train),
            ("validation", &self.split.validation),
            ("test", &self.split.test),
        ] {
            for (i, d) in list.iter().enumerate() {
                m.set("split", &format!("{name}_{i}"), drive_to_string(d));
            }
        }

        m.set("training", "epochs", self.train.epochs);
        m.set("training", "batch_size", self.train.batch_size);
        m.set("training", "learning_rate", self.train.learning_rate);
        m.set("training", "patience", self.train.patience);
        m.set("training", "seed", self.train.seed);
        m
    }

    pub fn from_manifest(m: &Manifest, path: &Path, out_dir: PathBuf) -> Result<Self> {
        let campaign_name = m.require("experiment", "campaign", path)?;
        let campaign = Campaign::from_name(campaign_name).ok_or_else(|| AppError::Format {
            what: "experiment config",
            path: path.to_path_buf(),
            detail: format!("unknown campaign {campaign_name}"),
        })?;
        let compression = match m.require("experiment", "compression", path)? {
            "per-field" => CompressionMode::PerField,
            "stacked" => CompressionMode::Stacked,
            other => {
                return Err(AppError::Format {
                    what: "experiment config",
                    path: path.to_path_buf(),
                    detail: format!("unknown compression {other}"),
                })
            }
        };
        let sim = read_sim_config(m, path)?;

        let mut coords = Vec::new();
        let mut i = 0;
        while let Some(raw) = m.get("sensors", &format!("s{i}")) {
            coords.push(parse_triplet(raw, path)?);
            i += 1;
        }
        if coords.is_empty() {
            return Err(AppError::Format {
                what: "experiment config",
                path: path.to_path_buf(),
                detail: "no sensors listed".into(),
            });
        }

        let read_split = |prefix: &str| -> Result<Vec<MagneticDrive>> {
            let mut out = Vec::new();
            let mut i = 0;
            while let Some(raw) = m.get("split", &format!("{prefix}_{i}")) {
                out.push(drive_from_string(raw, path)?);
                i += 1;
            }
            Ok(out)
        };

        Ok(Self {
            campaign,
            sim,
            split: SplitSpec {
                train: read_split("train")?,
                validation: read_split("validation")?,
                test: read_split("test")?,
            },
            rank: m.parse_value("experiment", "rank", path)?,
            lag: m.parse_value("experiment", "lag", path)?,
            compression,
            param_head: m.parse_value("experiment", "param_head", path)?,
            sensors: SensorSpec { coords },
            train: TrainConfig {
                epochs: m.parse_value("training", "epochs", path)?,
                batch_size: m.parse_value("training", "batch_size", path)?,
                learning_rate: m.parse_value("training", "learning_rate", path)?,
                patience: m.parse_value("training", "patience", path)?,
                seed: m.parse_value("training", "seed", path)?,
            },
            out_dir,
            seed: m.parse_value("experiment", "seed", path)?,
        })
    }

    pub fn load(path: &Path, out_dir: PathBuf) -> Result<Self> {
        let m = Manifest::read(path)?;
        Self::from_manifest(&m, path, out_dir)
    }

    /// Hash of the canonical text; links snapshots, bundles, models and
    /// reports produced under this configuration.
    pub fn hash(&self) -> String {
        sha256_hex(&self.to_manifest().to_text())
    }
}

/// Simulator config as manifest sections (used by experiment files and
/// per-run manifests alike).
pub fn write_sim_config(m: &mut Manifest, sim: &SimConfig) {
    let mat = &sim.material;
    m.set("material", "rho0", mat.rho0);
    m.set("material", "mu_visc", mat.mu_visc);
    m.set("material", "mu_b", mat.mu_b);
    m.set("material", "sigma_el", mat.sigma_el);
    m.set("material", "beta", mat.beta);
    m.set("material", "kappa", mat.kappa);
    m.set("material", "c_p", mat.c_p);

    let g = &sim.geometry;
    m.set("geometry", "length", g.length);
    m.set("geometry", "side", g.side);
    m.set("geometry", "r_pipe", g.r_pipe);
    if let Some(r) = g.annulus_outer_radius {
        m.set("geometry", "annulus_outer_radius", r);
    }
    m.set(
        "geometry",
        "resolution",
        format!("{}x{}x{}", g.resolution.0, g.resolution.1, g.resolution.2),
    );

    m.set("simulation", "drive", drive_to_string(&sim.drive));
    m.set("simulation", "t0", sim.t0);
    m.set("simulation", "t_pipe", sim.t_pipe);
    m.set("simulation", "u0", sim.u0);
    m.set("simulation", "p_ext", sim.p_ext);
    m.set("simulation", "t_end", sim.t_end);
    m.set("simulation", "store_dt", sim.store_dt);
    m.set("simulation", "cfl", sim.cfl);
    m.set(
        "simulation",
        "induction_mode",
        match sim.induction_mode {
            InductionMode::Full => "full",
            InductionMode::QuasiStatic => "quasi-static",
        },
    );
    m.set("simulation", "gravity_y", sim.gravity_y);
    m.set("simulation", "body_force_z", sim.body_force_z);
    m.set("simulation", "wall_x", wall_to_string(sim.wall_x));
    m.set("simulation", "wall_y", wall_to_string(sim.wall_y));
}

pub fn read_sim_config(m: &Manifest, path: &Path) -> Result<SimConfig> {
    let material = MaterialProps {
        rho0: m.parse_value("material", "rho0", path)?,
        mu_visc: m.parse_value("material", "mu_visc", path)?,
        mu_b: m.parse_value("material", "mu_b", path)?,
        sigma_el: m.parse_value("material", "sigma_el", path)?,
        beta: m.parse_value("material", "beta", path)?,
        kappa: m.parse_value("material", "kappa", path)?,
        c_p: m.parse_value("material", "c_p", path)?,
    };
    let resolution = parse_grid(m.require("geometry", "resolution", path)?)
        .ok_or_else(|| AppError::Format {
            what: "sim config",
            path: path.to_path_buf(),
            detail: "resolution must look like 16x16x32".into(),
        })?;
    let geometry = Geometry {
        length: m.parse_value("geometry", "length", path)?,
        side: m.parse_value("geometry", "side", path)?,
        r_pipe: m.parse_value("geometry", "r_pipe", path)?,
        annulus_outer_radius: m
            .get("geometry", "annulus_outer_radius")
            .map(|v| v.parse::<f64>())
            .transpose()
            .map_err(|e| AppError::Format {
                what: "sim config",
                path: path.to_path_buf(),
                detail: format!("annulus_outer_radius: {e}"),
            })?,
        resolution,
    };
    let induction_mode = match m.require("simulation", "induction_mode", path)? {
        "full" => InductionMode::Full,
        "quasi-static" => InductionMode::QuasiStatic,
        other => {
            return Err(AppError::Format {
                what: "sim config",
                path: path.to_path_buf(),
                detail: format!("unknown induction mode {other}"),
            })
        }
    };
    Ok(SimConfig {
        material,
        geometry,
        drive: drive_from_string(m.require("simulation", "drive", path)?, path)?,
        t0: m.parse_value("simulation", "t0", path)?,
        t_pipe: m.parse_value("simulation", "t_pipe", path)?,
        u0: m.parse_value("simulation", "u0", path)?,
        p_ext: m.parse_value("simulation", "p_ext", path)?,
        t_end: m.parse_value("simulation", "t_end", path)?,
        store_dt: m.parse_value("simulation", "store_dt", path)?,
        cfl: m.parse_value("simulation", "cfl", path)?,
        induction_mode,
        gravity_y: m.parse_value("simulation", "gravity_y", path)?,
        body_force_z: m.parse_value("simulation", "body_force_z", path)?,
        wall_x: wall_from_string(m.require("simulation", "wall_x", path)?, path)?,
        wall_y: wall_from_string(m.require("simulation", "wall_y", path)?, path)?,
    })
}

pub fn drive_to_string(d: &MagneticDrive) -> String {
    match d {
        MagneticDrive::ConstantToroidal { bx } => format!("constant-toroidal {bx}"),
        MagneticDrive::ConstantCombined { bx, by } => format!("constant-combined {bx} {by}"),
        MagneticDrive::SinusoidalToroidal {
            amplitude,
            omega,
            phase,
            offset,
        } => format!("sinusoidal-toroidal {amplitude} {omega} {phase} {offset}"),
    }
}

pub fn drive_from_string(raw: &str, path: &Path) -> Result<MagneticDrive> {
    let bad = |detail: String| AppError::Format {
        what: "drive",
        path: path.to_path_buf(),
        detail,
    };
    let mut parts = raw.split_whitespace();
    let kind = parts.next().ok_or_else(|| bad("empty drive".into()))?;
    let mut num = |name: &str| -> Result<f64> {
        parts
            .next()
            .ok_or_else(|| bad(format!("missing {name} in {raw:?}")))?
            .parse::<f64>()
            .map_err(|e| bad(format!("{name} in {raw:?}: {e}")))
    };
    let drive = match kind {
        "constant-toroidal" => MagneticDrive::ConstantToroidal { bx: num("bx")? },
        "constant-combined" => MagneticDrive::ConstantCombined {
            bx: num("bx")?,
            by: num("by")?,
        },
        "sinusoidal-toroidal" => MagneticDrive::SinusoidalToroidal {
            amplitude: num("amplitude")?,
            omega: num("omega")?,
            phase: num("phase")?,
            offset: num("offset")?,
        },
        other => return Err(bad(format!("unknown drive kind {other}"))),
    };
    Ok(drive)
}

/// Filesystem-safe label for a drive setting; doubles as the run id.
pub fn drive_label(d: &MagneticDrive) -> String {
    let fmt = |v: f64| format!("{v:.4}").replace('.', "p").replace('-', "m");
    match d {
        MagneticDrive::ConstantToroidal { bx } => format!("tor-bx{}", fmt(*bx)),
        MagneticDrive::ConstantCombined { bx, by } => {
            format!("comb-bx{}-by{}", fmt(*bx), fmt(*by))
        }
        MagneticDrive::SinusoidalToroidal {
            amplitude,
            omega,
            phase,
            offset,
        } => format!(
            "osc-a{}-w{}-f{}-c{}",
            fmt(*amplitude),
            fmt(*omega),
            fmt(*phase),
            fmt(*offset)
        ),
    }
}

fn wall_to_string(w: WallMode) -> &'static str {
    match w {
        WallMode::Open => "open",
        WallMode::NoSlip => "no-slip",
    }
}

fn wall_from_string(raw: &str, path: &Path) -> Result<WallMode> {
    match raw {
        "open" => Ok(WallMode::Open),
        "no-slip" => Ok(WallMode::NoSlip),
        other => Err(AppError::Format {
            what: "sim config",
            path: path.to_path_buf(),
            detail: format!("unknown wall mode {other}"),
        }),
    }
}

pub fn parse_grid(raw: &str) -> Option<(usize, usize, usize)> {
    let mut it = raw.split('x');
    let a = it.next()?.parse().ok()?;
    let b = it.next()?.parse().ok()?;
    let c = it.next()?.parse().ok()?;
    if it.next().is_some() {
        return None;
    }
    Some((a, b, c))
}

fn parse_triplet(raw: &str, path: &Path) -> Result<[f64; 3]> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(AppError::Format {
            what: "sensor coordinate",
            path: path.to_path_buf(),
            detail: format!("expected x,y,z, got {raw:?}"),
        });
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse::<f64>().map_err(|e| AppError::Format {
            what: "sensor coordinate",
            path: path.to_path_buf(),
            detail: format!("{p:?}: {e}"),
        })?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_manifest_text() {
        for campaign in [Campaign::Toroidal, Campaign::Combined, Campaign::Oscillating] {
            let cfg = ExperimentConfig::preset(campaign, "/tmp/out").unwrap();
            let text = cfg.to_manifest().to_text();
            let m = Manifest::from_text(&text, Path::new("cfg")).unwrap();
            let back =
                ExperimentConfig::from_manifest(&m, Path::new("cfg"), "/tmp/out".into()).unwrap();
            assert_eq!(cfg, back, "{campaign:?} did not round trip");
            assert_eq!(cfg.hash(), back.hash());
        }
    }

    #[test]
    fn drive_strings_round_trip() {
        let drives = [
            MagneticDrive::ConstantToroidal { bx: 0.75 },
            MagneticDrive::ConstantCombined { bx: 1.6, by: 0.45 },
            MagneticDrive::SinusoidalToroidal {
                amplitude: 0.5,
                omega: 2.0 * std::f64::consts::PI / 0.8,
                phase: std::f64::consts::FRAC_PI_2,
                offset: 1.2,
            },
        ];
        for d in drives {
            let s = drive_to_string(&d);
            let back = drive_from_string(&s, Path::new("d")).unwrap();
            assert_eq!(d, back);
        }
    }

    #[test]
    fn labels_are_filesystem_safe_and_distinct() {
        let spec = SplitSpec::oscillating_preset();
        let mut labels: Vec<String> = spec
            .all_settings()
            .iter()
            .map(|(d, _)| drive_label(d))
            .collect();
        let n = labels.len();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), n, "duplicate run labels");
        for l in &labels {
            assert!(l.chars().all(|c| c.is_ascii_alphanumeric() || c == '-'));
        }
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("16x16x32"), Some((16, 16, 32)));
        assert_eq!(parse_grid("64x64x1"), Some((64, 64, 1)));
        assert_eq!(parse_grid("16x16"), None);
        assert_eq!(parse_grid("axbxc"), None);
    }

    #[test]
    fn hash_changes_with_any_parameter() {
        let base = ExperimentConfig::preset(Campaign::Toroidal, "/tmp/o").unwrap();
        let mut changed = base.clone();
        changed.seed = 1;
        assert_ne!(base.hash(), changed.hash());
        let mut changed = base.clone();
        changed.rank = 6;
        assert_ne!(base.hash(), changed.hash());
        let mut changed = base.clone();
        changed.sim.geometry.resolution = (16, 16, 8);
        assert_ne!(base.hash(), changed.hash());
    }
}
