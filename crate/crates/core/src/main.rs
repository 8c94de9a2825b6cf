use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use zongd::attack::{AttackConfig, Method};
use zongd::geometry::verification_suite;
use zongd::harness::{
    check_against_model, emit_report, emit_reports, gamma_sweep, load_dataset, read_reports,
    run_ablation, run_campaign, run_tuned_campaign, AblationGrid, CampaignReport, ReportFormat,
    STEP_GRID,
};
use zongd::model::{accuracy, load_model, save_model, train_mlp, MlpModel, TrainConfig};
use zongd::zograd::DirectionMode;
use zongd::Error;

#[derive(Parser)]
#[command(
    name = "zongd",
    version,
    about = "Zeroth-order natural gradient adversarial attacks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the desk classifier on a CSV dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 60)]
        epochs: usize,
    },
    /// Run one attack campaign.
    Attack(AttackArgs),
    /// Run a campaign per point of a μ/ε/γ grid.
    Ablate(AblateArgs),
    /// Run the numerical geometry checks.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Summarise a report file.
    Report {
        path: PathBuf,
        #[arg(long, default_value = "json-lines")]
        format: String,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "zo-ngd")]
    method: String,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long = "samples-R", default_value_t = 40)]
    samples_r: usize,
    #[arg(long, default_value_t = 0.0)]
    kappa: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Per-image query budget; 0 disables it.
    #[arg(long, default_value_t = 20_000)]
    max_queries: u64,
    #[arg(long, default_value = "gaussian")]
    direction_mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    n_images: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json-lines")]
    format: String,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, default_value_t = 0.01)]
    gamma: f64,
    /// Tune the step size on this many extra images first (shared grid).
    #[arg(long, default_value_t = 0)]
    tune_images: usize,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    mu: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    /// Instead of campaigns, compare the loss after this many ZO-NGD
    /// iterations across the `--gamma` values.
    #[arg(long)]
    sweep_iters: Option<usize>,
}

enum Failure {
    Error(Error),
    Verify,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verify) => ExitCode::from(4),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) | Error::InvalidArgument(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Train {
            dataset,
            out,
            seed,
            epochs,
        } => {
            let data = load_dataset(&dataset)?;
            let cfg = TrainConfig {
                seed,
                epochs,
                ..TrainConfig::default()
            };
            let model = train_mlp(&data, &cfg)?;
            save_model(&model, &out)?;
            println!(
                "trained {:?} -> {}, training accuracy {:.4}",
                dims(&model),
                out.display(),
                accuracy(&model, &data)?
            );
        }
        Command::Attack(args) => {
            let (model, data, format) = load_inputs(&args.common)?;
            let cfg = config(&args.common, args.eps, args.mu, args.gamma)?;
            let report = if args.tune_images > 0 {
                run_tuned_campaign(
                    &model,
                    &data,
                    &cfg,
                    args.common.n_images,
                    args.tune_images,
                    &STEP_GRID,
                )?
            } else {
                run_campaign(&model, &data, &cfg, args.common.n_images)?
            };
            print_summary(&report);
            if let Some(out) = &args.common.out {
                emit_report(&report, out, format)?;
            }
        }
        Command::Ablate(args) => {
            let (model, data, format) = load_inputs(&args.common)?;
            let base = config(&args.common, 0.2, 1.0, 0.01)?;
            if let Some(iters) = args.sweep_iters {
                let sweep = gamma_sweep(
                    &model,
                    &data,
                    &AttackConfig {
                        epsilon: args.eps.first().copied().unwrap_or(base.epsilon),
                        mu: args.mu.first().copied().unwrap_or(base.mu),
                        ..base
                    },
                    &args.gamma,
                    iters,
                    args.common.n_images,
                )?;
                let text = serde_json::to_string_pretty(&sweep).expect("sweep serializes");
                println!("{text}");
                if let Some(out) = &args.common.out {
                    std::fs::write(out, text + "\n").map_err(|e| Error::Io {
                        path: out.clone(),
                        source: e,
                    })?;
                }
                return Ok(());
            }
            let grid = AblationGrid {
                mu: args.mu,
                epsilon: args.eps,
                gamma: args.gamma,
            };
            let reports = run_ablation(&model, &data, &base, &grid, args.common.n_images)?;
            for r in &reports {
                print_summary(r);
            }
            if let Some(out) = &args.common.out {
                emit_reports(&reports, out, format)?;
            }
        }
        Command::Verify { seed } => {
            let outcomes = verification_suite(seed)?;
            let mut ok = true;
            for o in &outcomes {
                println!(
                    "{} {:<50} worst {:.3e} ({})",
                    if o.passed { "PASS" } else { "FAIL" },
                    o.name,
                    o.worst,
                    o.threshold
                );
                ok &= o.passed;
            }
            if !ok {
                return Err(Failure::Verify);
            }
        }
        Command::Report { path, format } => {
            let format: ReportFormat = format.parse()?;
            for r in read_reports(&path, format)? {
                print_summary(&r);
            }
        }
    }
    Ok(())
}

fn dims(model: &MlpModel) -> Vec<usize> {
    std::iter::once(model.input_dim())
        .chain(model.layers().iter().map(|l| l.out_dim()))
        .collect()
}

fn load_inputs(
    args: &Common,
) -> Result<(MlpModel, Vec<zongd::harness::Sample>, ReportFormat), Failure> {
    let format: ReportFormat = args.format.parse()?;
    let model = load_model(Path::new(&args.model))?;
    let data = load_dataset(&args.dataset)?;
    check_against_model(&data, &model)?;
    Ok((model, data, format))
}

fn config(args: &Common, eps: f64, mu: f64, gamma: f64) -> Result<AttackConfig, Failure> {
    let method: Method = args.method.parse()?;
    let direction_mode: DirectionMode = args.direction_mode.parse()?;
    let cfg = AttackConfig {
        method,
        epsilon: eps,
        mu,
        gamma,
        lr: args.lr,
        samples: args.samples_r,
        kappa: args.kappa,
        max_iters: args.max_iters,
        max_queries: (args.max_queries > 0).then_some(args.max_queries),
        direction_mode,
        seed: args.seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(r: &CampaignReport) {
    let s = &r.summary;
    let show = |v: Option<f64>| v.map_or_else(|| "null".to_string(), |v| format!("{v:.2}"));
    println!(
        "{} eps={} mu={} gamma={} lr={:.4}: {}/{} succeeded (rate {}), avg queries {}, median {}, total {}{}",
        s.method,
        s.config.epsilon,
        s.config.mu,
        s.config.gamma,
        s.config.step_size(),
        s.successes,
        s.attempted,
        show(s.success_rate),
        show(s.avg_queries_successful),
        show(s.median_queries),
        s.total_queries,
        if s.shortfall { " [shortfall]" } else { "" }
    );
}
