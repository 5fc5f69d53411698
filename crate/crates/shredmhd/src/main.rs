use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use shredmhd::config::{parse_grid, Campaign, ExperimentConfig};
use shredmhd::pipeline;

#[derive(Parser)]
#[command(
    name = "shredmhd",
    about = "Reduced-order MHD state reconstruction: generate snapshots, train the sensor-to-state network, evaluate and export"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CampaignArgs {
    /// Campaign preset: toroidal, combined or oscillating.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Experiment configuration file (key = value sections).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for runs, bundle, model and reports.
    #[arg(long)]
    out: PathBuf,
    /// Seed for weight initialization and batch shuffling.
    #[arg(long)]
    seed: Option<u64>,
    /// Grid override, for example 16x16x32 (use nz = 1 for the 2-D mode).
    #[arg(long)]
    grid: Option<String>,
    /// SVD rank override.
    #[arg(long)]
    rank: Option<usize>,
    /// Train and evaluate the magnetic-drive inference head.
    #[arg(long)]
    param_estimation: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulator for every split setting that is missing or stale.
    Generate(CampaignArgs),
    /// Compress the snapshots, train the network, save model and history.
    Train(CampaignArgs),
    /// Reconstruct and score every test case; writes reports and VTK frames.
    Evaluate {
        #[command(flatten)]
        campaign: CampaignArgs,
        /// Model file (defaults to <out>/model.bin).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Inject the true latent coefficients instead of predictions,
        /// reporting the pure truncation floor.
        #[arg(long)]
        oracle_latents: bool,
        /// Physical time of the exported VTK frame (defaults to 2 s, or
        /// 1.75 s for the oscillating campaign).
        #[arg(long)]
        export_time: Option<f64>,
    },
    /// Export one stored field frame as VTK or CSV.
    Export {
        /// Run directory (<out>/runs/<label>).
        #[arg(long)]
        run: PathBuf,
        /// Field name: T, ux, uy, uz or p.
        #[arg(long)]
        field: String,
        #[arg(long)]
        frame: usize,
        /// Output format: vtk or csv.
        #[arg(long, default_value = "vtk")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify the manifest chain and train/test isolation on disk.
    Audit(CampaignArgs),
}

fn resolve_config(args: &CampaignArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match (&args.preset, &args.config) {
        (Some(name), None) => {
            let campaign = Campaign::from_name(name).ok_or_else(|| {
                anyhow!("unknown preset {name}; expected toroidal, combined or oscillating")
            })?;
            ExperimentConfig::preset(campaign, &args.out)?
        }
        (None, Some(path)) => ExperimentConfig::load(path, args.out.clone())
            .with_context(|| format!("loading {}", path.display()))?,
        (None, None) => bail!("one of --preset or --config is required"),
        (Some(_), Some(_)) => unreachable!("clap forbids this combination"),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(grid) = &args.grid {
        cfg.sim.geometry.resolution =
            parse_grid(grid).ok_or_else(|| anyhow!("--grid must look like 16x16x32"))?;
    }
    if let Some(rank) = args.rank {
        cfg.rank = rank;
    }
    if args.param_estimation {
        cfg.param_head = true;
    }
    Ok(cfg)
}

fn run() -> anyhow::Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(args) => {
            let cfg = resolve_config(&args)?;
            let t0 = Instant::now();
            let (new, skipped) = pipeline::cmd_generate(&cfg)?;
            println!(
                "generated {new} runs ({skipped} already current) in {:.1?} under {}",
                t0.elapsed(),
                cfg.out_dir.display()
            );
            Ok(true)
        }
        Command::Train(args) => {
            let cfg = resolve_config(&args)?;
            let outcome = pipeline::cmd_train(&cfg)?;
            println!(
                "trained {} epochs (best validation loss {:.3e}) in {:.1?}; model at {}",
                outcome.epochs_run,
                outcome.best_validation_loss,
                outcome.wall,
                outcome.model_file.display()
            );
            Ok(true)
        }
        Command::Evaluate {
            campaign,
            model,
            oracle_latents,
            export_time,
        } => {
            let cfg = resolve_config(&campaign)?;
            let model_file = model.unwrap_or_else(|| pipeline::model_path(&cfg.out_dir));
            let t_export = export_time.unwrap_or(match cfg.campaign {
                Campaign::Oscillating => 1.75,
                _ => 2.0,
            });
            let outcome =
                pipeline::cmd_evaluate(&cfg, &model_file, oracle_latents, Some(t_export))?;
            for (label, result) in &outcome.results {
                let lag = result.lag;
                println!(
                    "{label}: post-burn-in mean eps_T {:.2}% eps_u {:.2}% eps_p {:.2}%",
                    100.0 * result.eps_t.mean_over(lag),
                    100.0 * result.eps_u.mean_over(lag),
                    100.0 * result.eps_p.mean_over(lag),
                );
                if let Ok(pm) = result.param_metrics() {
                    println!(
                        "{label}: drive RMSE {:.4} (post burn-in {:.4})",
                        pm.rmse_full, pm.rmse_post_burnin
                    );
                }
            }
            println!(
                "reports in {}; thresholds {}",
                outcome.report_dir.display(),
                if outcome.all_thresholds_met {
                    "met"
                } else {
                    "VIOLATED"
                }
            );
            Ok(outcome.all_thresholds_met)
        }
        Command::Export {
            run,
            field,
            frame,
            format,
            out,
        } => {
            pipeline::cmd_export(&run, &field, frame, &format, &out)?;
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Audit(args) => {
            let cfg = resolve_config(&args)?;
            let outcome = pipeline::cmd_audit(&cfg)?;
            for (name, ok, detail) in &outcome.checks {
                println!("[{}] {name}: {detail}", if *ok { "ok" } else { "FAIL" });
            }
            Ok(outcome.all_ok())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
