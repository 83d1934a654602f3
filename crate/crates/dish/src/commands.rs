//! Subcommand implementations. Each writes its artifacts under the run's
//! output directory along with the resolved `config.toml` and a `manifest.csv`.

use std::path::{Path, PathBuf};

use dish_core::bench::{run_suite_with, SuiteReport};
use dish_core::data::build_datasets;
use dish_core::diagnostics::{evaluate, shift_scan, Evaluation, ShiftReport};
use dish_core::experiment::{prepare, run_experiment};
use dish_core::synthetic::gen_synthetic;
use dish_core::training::{train, TrainOutcome};
use dish_core::{DishModel, SeriesFrame, TrainError};

use crate::checkpoint;
use crate::config::{RunConfig, SweepAxis};
use crate::csv_io::{load_csv, write_file, write_frame, CsvConfig};
use crate::error::{CliError, Result};
use crate::report::{self, SweepRow};
use crate::spec_file::{load_suite, load_synthetic};

pub fn load_frame(cfg: &RunConfig) -> Result<SeriesFrame> {
    match (&cfg.data, &cfg.synthetic_spec) {
        (Some(path), None) => load_csv(
            path,
            &CsvConfig {
                drop_timestamp: cfg.drop_timestamp,
            },
        ),
        (None, Some(path)) => Ok(gen_synthetic(&load_synthetic(path)?)?),
        _ => Err(CliError::invalid(
            "exactly one of --data and --synthetic-spec is required",
        )),
    }
}

fn write_config(cfg: &RunConfig) -> Result<()> {
    write_file(&cfg.out.join("config.toml"), cfg.to_toml().as_bytes())
}

fn finish(cfg: &RunConfig, files: &[&str]) -> Result<()> {
    let mut all = vec!["config.toml"];
    all.extend_from_slice(files);
    report::write_manifest(&cfg.out, &all)
}

pub struct TrainReport {
    pub outcome: TrainOutcome,
    pub checkpoint: PathBuf,
    pub history: PathBuf,
}

/// Trains one model; writes `checkpoint.txt` (best epoch) and `history.csv`.
///
/// On divergence the last good parameters and the partial history are still
/// written before the error is returned.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainReport> {
    let frame = load_frame(cfg)?;
    let spec = cfg.run_spec()?;
    let (data, model) = prepare(&frame, &spec)?;
    write_config(cfg)?;
    let ckpt = cfg.out.join("checkpoint.txt");
    let hist = cfg.out.join("history.csv");
    match train(model, &data.train, &data.val, &spec.train) {
        Ok(outcome) => {
            checkpoint::save(&ckpt, &outcome.model)?;
            write_file(&hist, report::history_csv(&outcome.history).as_bytes())?;
            finish(cfg, &["checkpoint.txt", "history.csv"])?;
            Ok(TrainReport {
                outcome,
                checkpoint: ckpt,
                history: hist,
            })
        }
        Err(TrainError::Diverged {
            epoch,
            cause,
            last_good,
            history,
        }) => {
            checkpoint::save(&ckpt, &last_good)?;
            write_file(&hist, report::history_csv(&history).as_bytes())?;
            finish(cfg, &["checkpoint.txt", "history.csv"])?;
            Err(TrainError::Diverged {
                epoch,
                cause,
                last_good,
                history,
            }
            .into())
        }
        Err(e) => Err(e.into()),
    }
}

fn check_compatible(model: &DishModel, cfg: &RunConfig, series: usize) -> Result<()> {
    let have = model.config();
    let want = cfg.model_config()?;
    let mut problems = Vec::new();
    if have.series != series {
        problems.push(format!("series {} vs {series} in data", have.series));
    }
    if have.lookback != want.lookback {
        problems.push(format!("lookback {} vs {}", have.lookback, want.lookback));
    }
    if have.horizon != want.horizon {
        problems.push(format!("horizon {} vs {}", have.horizon, want.horizon));
    }
    if have.backbone != want.backbone {
        problems.push(format!("backbone {} vs {}", have.backbone, want.backbone));
    }
    if have.mode != want.mode {
        problems.push(format!("mode {} vs {}", have.mode, want.mode));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Incompatible(problems.join(", ")))
    }
}

pub struct EvalReport {
    pub evaluation: Evaluation,
    pub names: Vec<String>,
    pub table: String,
}

/// Test-set metrics of a saved model; writes `metrics.csv` and `metrics.txt`.
pub fn cmd_eval(cfg: &RunConfig, checkpoint_path: &Path) -> Result<EvalReport> {
    let frame = load_frame(cfg)?;
    let spec = cfg.run_spec()?;
    let model = checkpoint::load(checkpoint_path)?;
    check_compatible(&model, cfg, frame.width())?;
    let data = build_datasets(&frame, &spec.split, spec.model.lookback, spec.model.horizon)?;
    if data.test.is_empty() {
        return Err(CliError::invalid("test partition is empty"));
    }
    let evaluation = evaluate(&model, &data.test, spec.scales)?;
    let names = frame.names().to_vec();
    let table = report::metrics_table(&evaluation, &names);
    write_config(cfg)?;
    write_file(
        &cfg.out.join("metrics.csv"),
        report::metrics_csv(&evaluation, &names).as_bytes(),
    )?;
    write_file(&cfg.out.join("metrics.txt"), table.as_bytes())?;
    finish(cfg, &["metrics.csv", "metrics.txt"])?;
    Ok(EvalReport {
        evaluation,
        names,
        table,
    })
}

fn with_axis_value(cfg: &RunConfig, axis: SweepAxis, value: &str) -> Result<RunConfig> {
    let mut c = cfg.clone();
    let bad = || CliError::invalid(format!("sweep value `{value}` is not valid for axis {}", axis.as_str()));
    match axis {
        SweepAxis::Alpha => c.alpha = value.parse().map_err(|_| bad())?,
        SweepAxis::Lookback => c.lookback = value.parse().map_err(|_| bad())?,
        SweepAxis::Horizon => c.horizon = value.parse().map_err(|_| bad())?,
        SweepAxis::Init => c.init = value.to_string(),
    }
    c.validate()?;
    Ok(c)
}

/// One model per axis value, all with the run seed; writes `sweep.csv`.
/// Cells that fail are recorded and the sweep continues.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let axis: SweepAxis = cfg
        .sweep_axis
        .as_deref()
        .ok_or_else(|| CliError::invalid("sweep needs an axis (--axis or sweep_axis)"))?
        .parse()?;
    let values = cfg.sweep_values.clone().unwrap_or_else(|| axis.default_values());
    if values.is_empty() {
        return Err(CliError::invalid("sweep has no values"));
    }
    let cells = values
        .iter()
        .map(|v| with_axis_value(cfg, axis, v))
        .collect::<Result<Vec<_>>>()?;
    let frame = load_frame(cfg)?;
    write_config(cfg)?;
    let mut rows = Vec::new();
    for (value, cell) in values.iter().zip(&cells) {
        let row = match cell
            .run_spec()
            .and_then(|s| run_experiment(&frame, &s).map_err(CliError::from))
        {
            Ok(r) => SweepRow {
                axis: axis.as_str().into(),
                value: value.clone(),
                status: "ok".into(),
                metrics: Some(r.test.overall),
                best_epoch: r.outcome.best_epoch,
                epochs: r.outcome.history.records.len(),
                detail: String::new(),
            },
            Err(e) => SweepRow {
                axis: axis.as_str().into(),
                value: value.clone(),
                status: e.category().as_str().into(),
                metrics: None,
                best_epoch: 0,
                epochs: 0,
                detail: e.to_string(),
            },
        };
        eprintln!("sweep {}={} {}", axis.as_str(), value, row.status);
        rows.push(row);
    }
    write_file(&cfg.out.join("sweep.csv"), report::sweep_csv(&rows).as_bytes())?;
    finish(cfg, &["sweep.csv"])?;
    Ok(rows)
}

pub struct DiagnoseReport {
    pub report: ShiftReport,
    pub summary: String,
}

/// Shift scan over the whole frame; writes `shift.csv` and `shift_summary.txt`.
pub fn cmd_diagnose(cfg: &RunConfig) -> Result<DiagnoseReport> {
    let frame = load_frame(cfg)?;
    let report = shift_scan(&frame, &cfg.shift_config()?)?;
    let summary = report::shift_summary(
        &report,
        frame.names(),
        &frame.meta.change_points,
        cfg.lookback,
        cfg.horizon,
    );
    write_config(cfg)?;
    write_file(
        &cfg.out.join("shift.csv"),
        report::shift_csv(&report, frame.names()).as_bytes(),
    )?;
    write_file(&cfg.out.join("shift_summary.txt"), summary.as_bytes())?;
    finish(cfg, &["shift.csv", "shift_summary.txt"])?;
    Ok(DiagnoseReport { report, summary })
}

pub struct BenchReport {
    pub report: SuiteReport,
    pub table: String,
}

/// Runs a suite file; writes `runs.csv`, `summary.csv`, `summary.txt` and a
/// copy of the suite definition under `out`.
pub fn cmd_bench(suite_path: &Path, out: &Path) -> Result<BenchReport> {
    let suite = load_suite(suite_path)?;
    let text = crate::spec_file::read_text(suite_path)?;
    let report = run_suite_with(&suite, |r| {
        eprintln!(
            "bench {} {} seed {}: {} mse {:.6}",
            r.cell,
            r.mode,
            r.seed,
            r.status.label(),
            r.mse
        );
    })?;
    let table = report::summary_table(&report.summary, &report.improvements);
    write_file(&out.join("suite.toml"), text.as_bytes())?;
    write_file(&out.join("runs.csv"), report::runs_csv(&report.runs).as_bytes())?;
    write_file(
        &out.join("summary.csv"),
        report::summary_csv(&report.summary).as_bytes(),
    )?;
    write_file(&out.join("summary.txt"), table.as_bytes())?;
    report::write_manifest(out, &["suite.toml", "runs.csv", "summary.csv", "summary.txt"])?;
    Ok(BenchReport { report, table })
}

/// Writes the generated frame as CSV and returns its known change points.
pub fn cmd_generate(spec_path: &Path, out: &Path) -> Result<Vec<usize>> {
    let frame = gen_synthetic(&load_synthetic(spec_path)?)?;
    write_frame(out, &frame)?;
    Ok(frame.meta.change_points.clone())
}
