//! End-to-end pipeline checks on a small configuration: snapshot
//! generation, bundle building, oracle-latent reconstruction, and the
//! truncation-floor identity.

use shredmhd_core::dataset::{
    build_bundle, make_splits, BundleOptions, FieldKind, SplitRole, SplitSpec,
};
use shredmhd_core::eval::{evaluate_trajectory, relative_l2_error};
use shredmhd_core::linalg::DenseMatrix;
use shredmhd_core::mhdsim::{run_simulation, Geometry, MagneticDrive, SimConfig, SnapshotSeries};
use shredmhd_core::shred::{ShredArch, ShredModel};

fn small_campaign() -> (Vec<SnapshotSeries>, Vec<SplitRole>) {
    let drives = [0.5, 1.0, 1.5, 2.0, 1.25];
    let runs: Vec<SnapshotSeries> = drives
        .iter()
        .map(|&bx| {
            run_simulation(&SimConfig {
                drive: MagneticDrive::ConstantToroidal { bx },
                geometry: Geometry {
                    resolution: (8, 8, 8),
                    ..Geometry::default()
                },
                t_end: 0.5,
                store_dt: 0.025,
                ..SimConfig::default()
            })
            .unwrap()
        })
        .collect();
    let spec = SplitSpec {
        train: vec![
            MagneticDrive::ConstantToroidal { bx: 0.5 },
            MagneticDrive::ConstantToroidal { bx: 1.0 },
            MagneticDrive::ConstantToroidal { bx: 1.5 },
        ],
        validation: vec![MagneticDrive::ConstantToroidal { bx: 2.0 }],
        test: vec![MagneticDrive::ConstantToroidal { bx: 1.25 }],
    };
    let roles = make_splits(&spec, &runs).unwrap();
    (runs, roles)
}

/// With true latents injected, the reconstruction error equals the pure
/// SVD truncation error of each frame.
#[test]
fn oracle_latents_hit_the_truncation_floor() {
    let (runs, roles) = small_campaign();
    let options = BundleOptions {
        rank: 3,
        lag: 5,
        param_head: true,
        ..BundleOptions::default()
    };
    let bundle = build_bundle(&runs, &roles, &options).unwrap();

    let test_idx = roles.iter().position(|r| *r == SplitRole::Test).unwrap();
    let traj = bundle
        .trajectories
        .iter()
        .find(|t| t.role == SplitRole::Test)
        .unwrap();

    // Any model with the right architecture works in oracle mode; the
    // network itself is bypassed.
    let arch = ShredArch {
        n_sensors: 3,
        hidden: 8,
        sdn_hidden: (10, 12),
        lag: 5,
        output_map: bundle.output_map.clone(),
    };
    let model = ShredModel::init(arch, bundle.scaling.clone(), 1).unwrap();
    let result = evaluate_trajectory(&model, &bundle, traj, &runs[test_idx], true).unwrap();

    // Independent truncation floor: project the normalized truth through
    // the basis and reconstruct, per field.
    let t_scaling = bundle.scaling.field(FieldKind::Temperature).unwrap();
    let t_norm = t_scaling.normalize_matrix(&runs[test_idx].t);
    let basis = &bundle.bases[0];
    let floor = basis.reconstruct(&basis.project(&t_norm).unwrap()).unwrap();
    let eps_floor = relative_l2_error(&[&t_norm], &[&floor]).unwrap();

    for (frame, (got, want)) in result
        .eps_t
        .values
        .iter()
        .zip(&eps_floor.values)
        .enumerate()
    {
        assert!(
            (got - want).abs() <= 1e-8 + 1e-6 * want,
            "frame {frame}: oracle error {got:.3e} vs truncation floor {want:.3e}"
        );
    }

    // Oracle drive estimate matches the true normalized profile exactly.
    let metrics = result.param_metrics().unwrap();
    assert!(metrics.rmse_full < 1e-12);
}

/// Reconstruction through the identity chain: normalize, project with a
/// full-rank basis, reconstruct, denormalize returns the field.
#[test]
fn full_rank_round_trip_recovers_fields() {
    let (runs, roles) = small_campaign();
    // Rank = frame count of train+validation stacking keeps every mode
    // that a single trajectory can span.
    let options = BundleOptions {
        rank: 20,
        lag: 5,
        ..BundleOptions::default()
    };
    let bundle = build_bundle(&runs, &roles, &options).unwrap();

    // A train trajectory lies in the span of the stacked basis only up to
    // truncation; with rank 20 = Nt the reconstruction must be exact for
    // any single trajectory in the training set only if the stacked rank
    // covers it. Check the relative error is small rather than exact.
    let traj = &bundle.trajectories[0];
    let arch = ShredArch {
        n_sensors: 3,
        hidden: 8,
        sdn_hidden: (10, 12),
        lag: 5,
        output_map: bundle.output_map.clone(),
    };
    let model = ShredModel::init(arch, bundle.scaling.clone(), 2).unwrap();
    let result = evaluate_trajectory(&model, &bundle, traj, &runs[0], true).unwrap();
    for v in result.eps_t.values.iter().filter(|v| v.is_finite()) {
        assert!(*v < 0.05, "rank-20 oracle error {v}");
    }
    // Physical-unit errors exist and are finite for the same frames.
    assert_eq!(
        result.eps_t_physical.values.len(),
        result.eps_t.values.len()
    );
}

/// The drive parameter of the test trajectory stays inside the
/// normalized range fitted on train + validation for interpolative tests.
#[test]
fn bundle_preserves_test_extrapolation_headroom() {
    let (runs, roles) = small_campaign();
    let options = BundleOptions {
        rank: 2,
        lag: 5,
        param_head: true,
        ..BundleOptions::default()
    };
    let bundle = build_bundle(&runs, &roles, &options).unwrap();
    let mm = bundle.scaling.drive.unwrap();
    // 1.25 T interpolates [0.5, 2.0].
    let norm = mm.normalize(1.25);
    assert!((0.0..=1.0).contains(&norm));
    // An extrapolative value would leave [0, 1] and must not be clipped.
    assert!(mm.normalize(2.5) > 1.0);

    // Sensor windows of the test trajectory exist with one sample per
    // frame and the right window shape.
    let traj = bundle
        .trajectories
        .iter()
        .find(|t| t.role == SplitRole::Test)
        .unwrap();
    assert_eq!(traj.samples.len(), runs[0].frame_count());
    assert_eq!(traj.samples[0].window.rows(), 5);
    assert_eq!(traj.samples[0].window.cols(), 3);
}

/// Stacked-mode reconstruction splits back into the five named fields.
#[test]
fn stacked_mode_reconstructs_named_fields() {
    let (runs, roles) = small_campaign();
    let options = BundleOptions {
        rank: 4,
        lag: 5,
        compression: shredmhd_core::dataset::CompressionMode::Stacked,
        ..BundleOptions::default()
    };
    let bundle = build_bundle(&runs, &roles, &options).unwrap();
    let traj = bundle
        .trajectories
        .iter()
        .find(|t| t.role == SplitRole::Test)
        .unwrap();
    let test_idx = traj.source;
    let arch = ShredArch {
        n_sensors: 3,
        hidden: 8,
        sdn_hidden: (10, 12),
        lag: 5,
        output_map: bundle.output_map.clone(),
    };
    let model = ShredModel::init(arch, bundle.scaling.clone(), 3).unwrap();
    let result = evaluate_trajectory(&model, &bundle, traj, &runs[test_idx], true).unwrap();
    for name in ["T", "ux", "uy", "uz", "p"] {
        let field: &DenseMatrix = result.field(name).unwrap();
        assert_eq!(field.rows(), runs[test_idx].t.rows());
        assert_eq!(field.cols(), runs[test_idx].frame_count());
    }
}
