// Temporary full-scale campaign probe; removed before finalizing.
use shredmhd_core::dataset::{build_bundle, make_splits, BundleOptions, SplitRole, SplitSpec};
use shredmhd_core::eval::evaluate_trajectory;
use shredmhd_core::mhdsim::{run_simulation, SimConfig, SnapshotSeries};
use shredmhd_core::shred::{train, ShredArch, ShredModel, TrainConfig};
use std::time::Instant;

#[test]
#[ignore]
fn toroidal_campaign_probe() {
    let spec = SplitSpec::toroidal_preset();
    let t0 = Instant::now();
    let runs: Vec<SnapshotSeries> = spec
        .all_settings()
        .into_iter()
        .map(|(drive, _)| {
            run_simulation(&SimConfig {
                drive,
                ..SimConfig::default()
            })
            .unwrap()
        })
        .collect();
    println!("generate {} runs: {:.1?}", runs.len(), t0.elapsed());

    let roles = make_splits(&spec, &runs).unwrap();
    let t1 = Instant::now();
    let bundle = build_bundle(&runs, &roles, &BundleOptions::default()).unwrap();
    println!("bundle (SVD x5): {:.1?}", t1.elapsed());
    for (i, b) in bundle.bases.iter().enumerate() {
        let s = b.singular_values();
        println!(
            "  basis {i}: sigma {:.3e} .. {:.3e} (ratio {:.2e})",
            s[0],
            s[s.len() - 1],
            s[s.len() - 1] / s[0]
        );
    }

    let arch = ShredArch::reference(3, bundle.output_map.clone());
    let mut model = ShredModel::init(arch, bundle.scaling.clone(), 7).unwrap();
    let train_samples = bundle.samples_of(SplitRole::Train);
    let val_samples = bundle.samples_of(SplitRole::Validation);
    println!(
        "training on {} samples, validating on {}",
        train_samples.len(),
        val_samples.len()
    );
    let t2 = Instant::now();
    let history = train(
        &mut model,
        &train_samples,
        &val_samples,
        &TrainConfig::default(),
    )
    .unwrap();
    for (e, (tr, va)) in history.epochs.iter().enumerate() {
        if e % 10 == 0 || e + 1 == history.epochs.len() {
            println!("  epoch {e}: train {tr:.4e} val {va:.4e}");
        }
    }
    println!(
        "train: {:.1?}, {} epochs, best val {:.3e} at epoch {}, first val {:.3e}",
        t2.elapsed(),
        history.epochs.len(),
        history.best_validation_loss,
        history.best_epoch,
        history.epochs[0].1
    );

    for traj in bundle.trajectories.iter().filter(|t| t.role == SplitRole::Test) {
        let t3 = Instant::now();
        let res = evaluate_trajectory(&model, &bundle, traj, &runs[traj.source], false).unwrap();
        let oracle = evaluate_trajectory(&model, &bundle, traj, &runs[traj.source], true).unwrap();
        let lag = 30;
        println!(
            "test {:?} ({:.1?}): post-burnin mean eps_T {:.2}% eps_u {:.2}% eps_p {:.2}% | max eps_T {:.2}% eps_u {:.2}% | oracle floor T {:.3}% u {:.3}% p {:.3}%",
            runs[traj.source].config.drive,
            t3.elapsed(),
            100.0 * res.eps_t.mean_over(lag),
            100.0 * res.eps_u.mean_over(lag),
            100.0 * res.eps_p.mean_over(lag),
            100.0 * res.eps_t.max_over(lag),
            100.0 * res.eps_u.max_over(lag),
            100.0 * oracle.eps_t.mean_over(lag),
            100.0 * oracle.eps_u.mean_over(lag),
            100.0 * oracle.eps_p.mean_over(lag),
        );
    }
    println!("total: {:.1?}", t0.elapsed());
}
