//! Full-state reconstruction from latent predictions and quantitative
//! comparison against held-out simulator truth.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::dataset::{
    remove_hydrostatic, DataError, DatasetBundle, FieldKind, OutputMap, ScalingParams,
    TrajectoryData,
};
use crate::linalg::{DenseMatrix, LinalgError, ReducedBasis};
use crate::math;
use crate::mhdsim::SnapshotSeries;
use crate::shred::{predict, ShredError, ShredModel};

/// Evaluation errors.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    Shape { op: &'static str, detail: String },
    /// Parameter estimation was requested from a model without the head.
    MissingParamHead,
    Data(DataError),
    Network(ShredError),
    Linalg(LinalgError),
}

impl From<DataError> for EvalError {
    fn from(e: DataError) -> Self {
        EvalError::Data(e)
    }
}

impl From<ShredError> for EvalError {
    fn from(e: ShredError) -> Self {
        EvalError::Network(e)
    }
}

impl From<LinalgError> for EvalError {
    fn from(e: LinalgError) -> Self {
        EvalError::Linalg(e)
    }
}

impl core::fmt::Display for EvalError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            EvalError::Shape { op, detail } => write!(f, "shape error in {op}: {detail}"),
            EvalError::MissingParamHead => {
                write!(f, "parameter estimation requires a model with the drive head")
            }
            EvalError::Data(e) => write!(f, "{e}"),
            EvalError::Network(e) => write!(f, "{e}"),
            EvalError::Linalg(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for EvalError {}

/// Per-frame error series; frames with a zero-norm truth are flagged and
/// carry NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub values: Vec<f64>,
    pub undefined_frames: Vec<usize>,
}

impl ErrorSeries {
    pub fn mean_over(&self, from: usize) -> f64 {
        let vals: Vec<f64> = self
            .values
            .iter()
            .copied()
            .skip(from)
            .filter(|v| v.is_finite())
            .collect();
        if vals.is_empty() {
            return f64::NAN;
        }
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    pub fn max_over(&self, from: usize) -> f64 {
        self.values
            .iter()
            .copied()
            .skip(from)
            .filter(|v| v.is_finite())
            .fold(f64::NAN, f64::max)
    }
}

/// Classical relative L2 error per frame over one or more stacked field
/// components: eps = ||truth - recon|| / ||truth||.
pub fn relative_l2_error(
    truths: &[&DenseMatrix],
    recons: &[&DenseMatrix],
) -> Result<ErrorSeries, EvalError> {
    if truths.is_empty() || truths.len() != recons.len() {
        return Err(EvalError::Shape {
            op: "relative_l2_error",
            detail: format!("{} truth vs {} reconstruction blocks", truths.len(), recons.len()),
        });
    }
    let nt = truths[0].cols();
    for (t, r) in truths.iter().zip(recons) {
        if t.rows() != r.rows() || t.cols() != r.cols() || t.cols() != nt {
            return Err(EvalError::Shape {
                op: "relative_l2_error",
                detail: format!(
                    "{}x{} vs {}x{}",
                    t.rows(),
                    t.cols(),
                    r.rows(),
                    r.cols()
                ),
            });
        }
    }
    let mut values = Vec::with_capacity(nt);
    let mut undefined = Vec::new();
    for frame in 0..nt {
        let mut num = 0.0;
        let mut den = 0.0;
        for (t, r) in truths.iter().zip(recons) {
            for row in 0..t.rows() {
                let tv = t[(row, frame)];
                let d = tv - r[(row, frame)];
                num += d * d;
                den += tv * tv;
            }
        }
        if den > 0.0 {
            values.push(math::sqrt(num / den));
        } else {
            undefined.push(frame);
            values.push(f64::NAN);
        }
    }
    Ok(ErrorSeries {
        values,
        undefined_frames: undefined,
    })
}

/// Pointwise absolute difference of one frame.
pub fn residual_field(
    truth: &DenseMatrix,
    recon: &DenseMatrix,
    frame: usize,
) -> Result<Vec<f64>, EvalError> {
    if truth.rows() != recon.rows() || frame >= truth.cols() || frame >= recon.cols() {
        return Err(EvalError::Shape {
            op: "residual_field",
            detail: format!(
                "frame {frame} of {}x{} vs {}x{}",
                truth.rows(),
                truth.cols(),
                recon.rows(),
                recon.cols()
            ),
        });
    }
    Ok((0..truth.rows())
        .map(|r| (truth[(r, frame)] - recon[(r, frame)]).abs())
        .collect())
}

/// Drive-inference quality on the normalized scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMetrics {
    pub rmse_full: f64,
    pub rmse_post_burnin: f64,
    pub max_dev_post_burnin: f64,
}

/// RMSE of the estimated drive against the true profile, full-window and
/// after the `lag`-frame burn-in.
pub fn evaluate_param_estimation(
    estimate_norm: &[f64],
    truth_norm: &[f64],
    lag: usize,
) -> Result<ParamMetrics, EvalError> {
    if estimate_norm.len() != truth_norm.len() || estimate_norm.is_empty() {
        return Err(EvalError::Shape {
            op: "evaluate_param_estimation",
            detail: format!("{} vs {} frames", estimate_norm.len(), truth_norm.len()),
        });
    }
    if lag >= estimate_norm.len() {
        return Err(EvalError::Shape {
            op: "evaluate_param_estimation",
            detail: format!("burn-in {lag} swallows all {} frames", estimate_norm.len()),
        });
    }
    let rmse = |from: usize| -> f64 {
        let n = estimate_norm.len() - from;
        let sse: f64 = estimate_norm[from..]
            .iter()
            .zip(&truth_norm[from..])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        math::sqrt(sse / n as f64)
    };
    let max_dev = estimate_norm[lag..]
        .iter()
        .zip(&truth_norm[lag..])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    Ok(ParamMetrics {
        rmse_full: rmse(0),
        rmse_post_burnin: rmse(lag),
        max_dev_post_burnin: max_dev,
    })
}

/// Reconstructed series with its error diagnostics for one trajectory.
#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    /// Field name -> reconstructed physical series (hydrostatic head
    /// re-added for pressure).
    pub fields: Vec<(String, DenseMatrix)>,
    /// Errors on normalized fields (the convention of the headline
    /// numbers; velocity is the joint norm over its three components).
    pub eps_t: ErrorSeries,
    pub eps_u: ErrorSeries,
    pub eps_p: ErrorSeries,
    /// Errors on physical-unit fields, reported alongside.
    pub eps_t_physical: ErrorSeries,
    pub eps_u_physical: ErrorSeries,
    pub eps_p_physical: ErrorSeries,
    /// Normalized drive estimate per frame, when the head is present.
    pub b_estimate_norm: Option<Vec<f64>>,
    /// Normalized true drive per frame (scaling from the bundle).
    pub b_true_norm: Option<Vec<f64>>,
    pub times: Vec<f64>,
    pub lag: usize,
}

impl ReconstructionResult {
    pub fn field(&self, name: &str) -> Option<&DenseMatrix> {
        self.fields
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
    }

    pub fn param_metrics(&self) -> Result<ParamMetrics, EvalError> {
        match (&self.b_estimate_norm, &self.b_true_norm) {
            (Some(est), Some(truth)) => evaluate_param_estimation(est, truth, self.lag),
            _ => Err(EvalError::MissingParamHead),
        }
    }
}

/// Back-projects normalized latent predictions to physical fields:
/// unscale each latent block, multiply by its basis, denormalize, and
/// re-add the hydrostatic head for pressure.
pub fn reconstruct_full_state(
    latents_norm: &DenseMatrix,
    bases: &[ReducedBasis],
    output_map: &OutputMap,
    scaling: &ScalingParams,
    rho0: f64,
    gravity: [f64; 3],
    cell_coords: &[[f64; 3]],
) -> Result<Vec<(String, DenseMatrix)>, EvalError> {
    let latent_width: usize = output_map.blocks.iter().map(|(_, r)| r).sum();
    if latents_norm.rows() != latent_width {
        return Err(EvalError::Shape {
            op: "reconstruct_full_state",
            detail: format!(
                "{} latent rows vs output map width {latent_width}",
                latents_norm.rows()
            ),
        });
    }
    if bases.len() != output_map.blocks.len() {
        return Err(EvalError::Shape {
            op: "reconstruct_full_state",
            detail: format!(
                "{} bases vs {} blocks",
                bases.len(),
                output_map.blocks.len()
            ),
        });
    }

    let nt = latents_norm.cols();
    let mut offset = 0usize;
    let mut fields = Vec::new();
    for ((name, rank), basis) in output_map.blocks.iter().zip(bases) {
        if basis.rank() != *rank {
            return Err(EvalError::Shape {
                op: "reconstruct_full_state",
                detail: format!("basis rank {} vs block {name} rank {rank}", basis.rank()),
            });
        }
        // Unscale the latent rows of this block.
        let mut v = DenseMatrix::zeros(*rank, nt);
        for mode in 0..*rank {
            let mm = scaling.latent.get(offset + mode).ok_or(EvalError::Shape {
                op: "reconstruct_full_state",
                detail: format!("missing latent scaling for mode {}", offset + mode),
            })?;
            for frame in 0..nt {
                v[(mode, frame)] = mm.denormalize(latents_norm[(offset + mode, frame)]);
            }
        }
        let normalized = basis.reconstruct(&v)?;

        if name == "state" {
            // Stacked compression: split rows into the five fields.
            let nf = normalized.rows() / FieldKind::ALL.len();
            for (fi, kind) in FieldKind::ALL.iter().enumerate() {
                let mm = scaling.field(*kind).ok_or(EvalError::Shape {
                    op: "reconstruct_full_state",
                    detail: format!("missing field scaling for {}", kind.name()),
                })?;
                let mut phys = DenseMatrix::zeros(nf, nt);
                for r in 0..nf {
                    for c in 0..nt {
                        phys[(r, c)] = mm.denormalize(normalized[(fi * nf + r, c)]);
                    }
                }
                if *kind == FieldKind::Pressure {
                    phys = add_hydrostatic(&phys, rho0, gravity, cell_coords)?;
                }
                fields.push((kind.name().to_string(), phys));
            }
        } else {
            let kind = FieldKind::from_name(name).ok_or(EvalError::Shape {
                op: "reconstruct_full_state",
                detail: format!("unknown field block {name}"),
            })?;
            let mm = scaling.field(kind).ok_or(EvalError::Shape {
                op: "reconstruct_full_state",
                detail: format!("missing field scaling for {name}"),
            })?;
            let mut phys = mm.denormalize_matrix(&normalized);
            if kind == FieldKind::Pressure {
                phys = add_hydrostatic(&phys, rho0, gravity, cell_coords)?;
            }
            fields.push((name.clone(), phys));
        }
        offset += rank;
    }
    Ok(fields)
}

fn add_hydrostatic(
    p_prime: &DenseMatrix,
    rho0: f64,
    gravity: [f64; 3],
    cell_coords: &[[f64; 3]],
) -> Result<DenseMatrix, EvalError> {
    remove_hydrostatic(
        p_prime,
        rho0,
        [-gravity[0], -gravity[1], -gravity[2]],
        cell_coords,
    )
    .map_err(EvalError::from)
}

/// Runs the model over one trajectory's windows (or injects the true
/// latents in oracle mode), reconstructs the physical fields, and
/// computes every error series against the simulator truth.
pub fn evaluate_trajectory(
    model: &ShredModel,
    bundle: &DatasetBundle,
    traj: &TrajectoryData,
    truth: &SnapshotSeries,
    oracle_latents: bool,
) -> Result<ReconstructionResult, EvalError> {
    let map = &model.arch.output_map;
    let latent_width: usize = map.blocks.iter().map(|(_, r)| r).sum();
    let nt = traj.samples.len();

    // Latent predictions per frame (columns), plus the drive estimate.
    let mut latents_norm = DenseMatrix::zeros(latent_width, nt);
    let mut b_estimate = map.param_head.then(Vec::new);
    for (frame, sample) in traj.samples.iter().enumerate() {
        if oracle_latents {
            for mode in 0..latent_width {
                latents_norm[(mode, frame)] = sample.target[mode];
            }
            if let Some(est) = b_estimate.as_mut() {
                est.push(sample.target[latent_width]);
            }
        } else {
            let pred = predict(model, &sample.window)?;
            for (mode, v) in pred.latent.iter().enumerate() {
                latents_norm[(mode, frame)] = *v;
            }
            if let Some(est) = b_estimate.as_mut() {
                est.push(pred.drive.ok_or(EvalError::MissingParamHead)?);
            }
        }
    }

    let rho0 = truth.config.material.rho0;
    let gravity = [0.0, truth.config.gravity_y, 0.0];
    let fields = reconstruct_full_state(
        &latents_norm,
        &bundle.bases,
        map,
        &model.scaling,
        rho0,
        gravity,
        &truth.cell_coords,
    )?;

    // Truth fields in physical units (pressure with hydrostatic head, as
    // stored in the series).
    let get = |name: &str| -> &DenseMatrix {
        fields
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .expect("reconstruct_full_state emits all five fields")
    };
    let eps_t_physical = relative_l2_error(&[&truth.t], &[get("T")])?;
    let eps_u_physical = relative_l2_error(
        &[&truth.ux, &truth.uy, &truth.uz],
        &[get("ux"), get("uy"), get("uz")],
    )?;
    let eps_p_physical = relative_l2_error(&[&truth.p], &[get("p")])?;

    // Normalized convention: both sides through the training scaling,
    // pressure compared without its hydrostatic head.
    let norm_of = |kind: FieldKind, truth_m: DenseMatrix, recon: &DenseMatrix| {
        let mm = model.scaling.field(kind).expect("scaling carries all fields");
        let t = mm.normalize_matrix(&truth_m);
        let r = mm.normalize_matrix(recon);
        (t, r)
    };
    let p_prime_truth = remove_hydrostatic(&truth.p, rho0, gravity, &truth.cell_coords)?;
    let p_prime_recon = remove_hydrostatic(get("p"), rho0, gravity, &truth.cell_coords)?;
    let (tn, rn) = norm_of(FieldKind::Temperature, truth.t.clone(), get("T"));
    let eps_t = relative_l2_error(&[&tn], &[&rn])?;
    let (uxn, uxr) = norm_of(FieldKind::VelocityX, truth.ux.clone(), get("ux"));
    let (uyn, uyr) = norm_of(FieldKind::VelocityY, truth.uy.clone(), get("uy"));
    let (uzn, uzr) = norm_of(FieldKind::VelocityZ, truth.uz.clone(), get("uz"));
    let eps_u = relative_l2_error(&[&uxn, &uyn, &uzn], &[&uxr, &uyr, &uzr])?;
    let (pn, pr) = norm_of(FieldKind::Pressure, p_prime_truth, &p_prime_recon);
    let eps_p = relative_l2_error(&[&pn], &[&pr])?;

    let b_true_norm = match (&model.scaling.drive, map.param_head) {
        (Some(mm), true) => Some(traj.drive_series.iter().map(|&b| mm.normalize(b)).collect()),
        _ => None,
    };

    Ok(ReconstructionResult {
        fields,
        eps_t,
        eps_u,
        eps_p,
        eps_t_physical,
        eps_u_physical,
        eps_p_physical,
        b_estimate_norm: b_estimate,
        b_true_norm,
        times: traj.times.clone(),
        lag: model.arch.lag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut state = seed;
        DenseMatrix::from_fn(rows, cols, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 + 0.1
        })
    }

    #[test]
    fn identical_series_have_zero_error() {
        let truth = lcg_matrix(20, 6, 1);
        let eps = relative_l2_error(&[&truth], &[&truth]).unwrap();
        assert!(eps.values.iter().all(|&v| v == 0.0));
        assert!(eps.undefined_frames.is_empty());
    }

    #[test]
    fn null_estimator_has_unit_error() {
        let truth = lcg_matrix(20, 6, 2);
        let zeros = DenseMatrix::zeros(20, 6);
        let eps = relative_l2_error(&[&truth], &[&zeros]).unwrap();
        for v in &eps.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_two_pass_norm_oracle() {
        let truth = lcg_matrix(15, 4, 3);
        let recon = lcg_matrix(15, 4, 4);
        let eps = relative_l2_error(&[&truth], &[&recon]).unwrap();
        for frame in 0..4 {
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for r in 0..15 {
                num += (truth[(r, frame)] - recon[(r, frame)]).powi(2);
                den += truth[(r, frame)].powi(2);
            }
            let expect = (num.sqrt()) / (den.sqrt());
            assert!((eps.values[frame] - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_norm_truth_frame_is_flagged() {
        let mut truth = lcg_matrix(10, 3, 5);
        for r in 0..10 {
            truth[(r, 1)] = 0.0;
        }
        let recon = lcg_matrix(10, 3, 6);
        let eps = relative_l2_error(&[&truth], &[&recon]).unwrap();
        assert_eq!(eps.undefined_frames, vec![1]);
        assert!(eps.values[1].is_nan());
        assert!(eps.values[0].is_finite());
    }

    #[test]
    fn residual_field_examples() {
        let truth = lcg_matrix(12, 3, 7);
        let same = residual_field(&truth, &truth, 2).unwrap();
        assert!(same.iter().all(|&v| v == 0.0));

        let mut offset = truth.clone();
        for v in offset.data_mut() {
            *v += 0.25;
        }
        let res = residual_field(&truth, &offset, 1).unwrap();
        assert!(res.iter().all(|&v| (v - 0.25).abs() < 1e-12));

        // Max of the residual equals a max-norm oracle.
        let other = lcg_matrix(12, 3, 8);
        let res = residual_field(&truth, &other, 0).unwrap();
        let max_res = res.iter().fold(0.0f64, |m, &v| m.max(v));
        let oracle = (0..12)
            .map(|r| (truth[(r, 0)] - other[(r, 0)]).abs())
            .fold(0.0f64, f64::max);
        assert_eq!(max_res, oracle);
    }

    #[test]
    fn param_estimation_metrics() {
        let truth: Vec<f64> = (0..40).map(|i| (i as f64 * 0.1).sin()).collect();
        let m = evaluate_param_estimation(&truth, &truth, 10).unwrap();
        assert_eq!(m.rmse_full, 0.0);
        assert_eq!(m.rmse_post_burnin, 0.0);

        let shifted: Vec<f64> = truth.iter().map(|v| v + 0.1).collect();
        let m = evaluate_param_estimation(&shifted, &truth, 10).unwrap();
        assert!((m.rmse_full - 0.1).abs() < 1e-12);
        assert!((m.rmse_post_burnin - 0.1).abs() < 1e-12);
        assert!((m.max_dev_post_burnin - 0.1).abs() < 1e-12);

        assert!(evaluate_param_estimation(&truth, &truth[..20], 10).is_err());
        assert!(evaluate_param_estimation(&truth, &truth, 40).is_err());
    }

    #[test]
    fn error_series_burnin_stats() {
        let s = ErrorSeries {
            values: vec![1.0, 0.5, 0.2, 0.1],
            undefined_frames: vec![],
        };
        assert!((s.mean_over(0) - 0.45).abs() < 1e-12);
        assert!((s.mean_over(2) - 0.15).abs() < 1e-12);
        assert_eq!(s.max_over(1), 0.5);
    }
}
