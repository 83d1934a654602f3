use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dish_ts::commands;
use dish_ts::error::{CliError, Result};
use dish_ts::{Overrides, RunConfig};

/// Dish-TS forecasting: train, evaluate, sweep, diagnose shift, benchmark.
///
/// Settings come from three layers. Built-in defaults are overridden by flags,
/// and flags are overridden by values in the `--config` file.
#[derive(Parser)]
#[command(name = "dish", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model; writes checkpoint.txt, history.csv, config.toml.
    Train(RunArgs),
    /// Evaluate a checkpoint on the test partition; writes metrics.csv/.txt.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train one model per value of an axis; writes sweep.csv.
    Sweep {
        /// alpha, lookback, horizon or init.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated axis values (default grid per axis otherwise).
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<String>>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Intra/inter-space shift scan; writes shift.csv and shift_summary.txt.
    Diagnose {
        /// Report threshold.
        #[arg(long)]
        delta: Option<f64>,
        /// Number of sampled anchors.
        #[arg(long)]
        anchors: Option<usize>,
        /// forward or symmetric.
        #[arg(long)]
        divergence: Option<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a benchmark suite file; writes runs.csv, summary.csv, summary.txt.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, default_value = "dish-bench")]
        out: PathBuf,
    },
    /// Write a synthetic series as CSV.
    Generate {
        #[arg(long = "synthetic-spec")]
        synthetic_spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML file whose values override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Wide CSV input: header row, one column per series.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Drop the first CSV column (timestamps).
    #[arg(long)]
    drop_timestamp: bool,
    /// Synthetic series definition (TOML) instead of --data.
    #[arg(long)]
    synthetic_spec: Option<PathBuf>,
    #[arg(long)]
    lookback: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Train:val:test ratios, e.g. 7:1:2.
    #[arg(long)]
    split: Option<String>,
    /// identity, linear or mlp.
    #[arg(long)]
    backbone: Option<String>,
    #[arg(long)]
    hidden: Option<usize>,
    /// dish, revin, none or zscore.
    #[arg(long)]
    mode: Option<String>,
    /// Prior-guidance weight.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Coefficient net initialization: avg, norm or uniform.
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    scale_mse: Option<f64>,
    #[arg(long)]
    scale_mae: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            data: self.data.clone(),
            drop_timestamp: self.drop_timestamp.then_some(true),
            synthetic_spec: self.synthetic_spec.clone(),
            lookback: self.lookback,
            horizon: self.horizon,
            split: self.split.clone(),
            backbone: self.backbone.clone(),
            hidden: self.hidden,
            mode: self.mode.clone(),
            init: self.init.clone(),
            alpha: self.alpha,
            lr: self.lr,
            batch: self.batch,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            scale_mse: self.scale_mse,
            scale_mae: self.scale_mae,
            out: self.out.clone(),
            ..Overrides::default()
        }
    }

    fn resolve(&self, extra: Overrides) -> Result<RunConfig> {
        let mut flags = self.overrides();
        flags.delta = extra.delta;
        flags.anchors = extra.anchors;
        flags.divergence = extra.divergence;
        flags.sweep_axis = extra.sweep_axis;
        flags.sweep_values = extra.sweep_values;
        RunConfig::resolve(&flags, self.config.as_deref())
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.resolve(Overrides::default())?;
            let r = commands::cmd_train(&cfg)?;
            let best = r
                .outcome
                .history
                .records
                .iter()
                .find(|e| e.epoch == r.outcome.best_epoch);
            println!(
                "trained {} epoch(s); best epoch {} val_mse {}",
                r.outcome.history.records.len(),
                r.outcome.best_epoch,
                best.map_or(f64::NAN, |e| e.val_mse)
            );
            println!("checkpoint: {}", r.checkpoint.display());
        }
        Command::Eval { checkpoint, run } => {
            let cfg = run.resolve(Overrides::default())?;
            print!("{}", commands::cmd_eval(&cfg, &checkpoint)?.table);
        }
        Command::Sweep { axis, values, run } => {
            let cfg = run.resolve(Overrides {
                sweep_axis: axis,
                sweep_values: values,
                ..Overrides::default()
            })?;
            let rows = commands::cmd_sweep(&cfg)?;
            println!(
                "{:<10} {:<10} {:<9} {:>12} {:>12}",
                "axis", "value", "status", "mse", "mae"
            );
            for r in rows {
                let (mse, mae) = r.metrics.map_or((f64::NAN, f64::NAN), |m| (m.mse, m.mae));
                println!(
                    "{:<10} {:<10} {:<9} {:>12.6} {:>12.6}",
                    r.axis, r.value, r.status, mse, mae
                );
            }
        }
        Command::Diagnose {
            delta,
            anchors,
            divergence,
            run,
        } => {
            let cfg = run.resolve(Overrides {
                delta,
                anchors,
                divergence,
                ..Overrides::default()
            })?;
            print!("{}", commands::cmd_diagnose(&cfg)?.summary);
        }
        Command::Bench { suite, out } => {
            print!("{}", commands::cmd_bench(&suite, &out)?.table);
        }
        Command::Generate { synthetic_spec, out } => {
            let cps = commands::cmd_generate(&synthetic_spec, &out)?;
            println!("wrote {}; change points: {cps:?}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report_line());
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CliError) -> u8 {
    e.category().exit_code() as u8
}
