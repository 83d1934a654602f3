//! CSV and text reports. Every CSV has a header row; floats use Rust's
//! shortest round-trip formatting.

use std::fmt::Write as _;
use std::path::Path;

use dish_core::bench::{aggregate, CellSummary, Improvement, RunRecord, RunStatus};
use dish_core::diagnostics::{Evaluation, Metrics, ShiftReport};
use dish_core::training::History;
use dish_core::NormMode;

use crate::csv_io::write_file;
use crate::error::{CliError, Result};

/// Format revision of each artifact kind, recorded in run manifests.
pub const ARTIFACT_VERSIONS: &[(&str, u32)] = &[
    ("config.toml", 1),
    ("checkpoint.txt", crate::checkpoint::FORMAT_VERSION),
    ("history.csv", 1),
    ("metrics.csv", 1),
    ("sweep.csv", 1),
    ("shift.csv", 1),
    ("shift_summary.txt", 1),
    ("runs.csv", 1),
    ("summary.csv", 1),
    ("summary.txt", 1),
    ("frame.csv", 1),
];

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

pub fn history_csv(history: &History) -> String {
    csv_string(
        &["epoch", "train_loss", "val_mse"],
        history
            .records
            .iter()
            .map(|r| vec![r.epoch.to_string(), num(r.train_loss), num(r.val_mse)]),
    )
}

fn metric_fields(m: &Metrics) -> Vec<String> {
    vec![num(m.mse), num(m.mae), num(m.scaled_mse), num(m.scaled_mae)]
}

pub fn metrics_csv(eval: &Evaluation, names: &[String]) -> String {
    let overall = std::iter::once(
        ["overall".to_string(), String::new()]
            .into_iter()
            .chain(metric_fields(&eval.overall))
            .collect(),
    );
    let per = eval.per_series.iter().zip(names).map(|(m, n)| {
        ["series".to_string(), n.clone()]
            .into_iter()
            .chain(metric_fields(m))
            .collect()
    });
    csv_string(
        &["scope", "series", "mse", "mae", "scaled_mse", "scaled_mae"],
        overall.chain(per),
    )
}

pub fn metrics_table(eval: &Evaluation, names: &[String]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<16} {:>12} {:>12} {:>12} {:>12}",
        "series", "mse", "mae", "scaled_mse", "scaled_mae"
    )
    .unwrap();
    let mut row = |label: &str, m: &Metrics| {
        writeln!(
            out,
            "{:<16} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            label, m.mse, m.mae, m.scaled_mse, m.scaled_mae
        )
        .unwrap();
    };
    for (m, n) in eval.per_series.iter().zip(names) {
        row(n, m);
    }
    row("overall", &eval.overall);
    out
}

/// One sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub status: String,
    pub metrics: Option<Metrics>,
    pub best_epoch: usize,
    pub epochs: usize,
    pub detail: String,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    csv_string(
        &[
            "axis",
            "value",
            "status",
            "mse",
            "mae",
            "scaled_mse",
            "scaled_mae",
            "best_epoch",
            "epochs",
            "detail",
        ],
        rows.iter().map(|r| {
            let metrics = r.metrics.as_ref().map_or_else(|| vec![String::new(); 4], metric_fields);
            [r.axis.clone(), r.value.clone(), r.status.clone()]
                .into_iter()
                .chain(metrics)
                .chain([r.best_epoch.to_string(), r.epochs.to_string(), r.detail.clone()])
                .collect()
        }),
    )
}

/// Long format: one row per inter distance and per intra pair (`u < v`).
pub fn shift_csv(report: &ShiftReport, names: &[String]) -> String {
    let mut rows = Vec::new();
    for (k, &anchor) in report.anchors.iter().enumerate() {
        for (i, name) in names.iter().enumerate() {
            let d = report.inter.at(k, i);
            rows.push(vec![
                "inter".into(),
                anchor.to_string(),
                String::new(),
                name.clone(),
                num(d),
                u8::from(d > report.delta).to_string(),
            ]);
        }
    }
    let s = report.anchors.len();
    for (m, name) in report.intra.iter().zip(names) {
        for u in 0..s {
            for v in (u + 1)..s {
                let d = m.at(u, v);
                rows.push(vec![
                    "intra".into(),
                    report.anchors[u].to_string(),
                    report.anchors[v].to_string(),
                    name.clone(),
                    num(d),
                    u8::from(d > report.delta).to_string(),
                ]);
            }
        }
    }
    csv_string(&["kind", "anchor", "other_anchor", "series", "distance", "flag"], rows)
}

pub fn shift_summary(
    report: &ShiftReport,
    names: &[String],
    change_points: &[usize],
    lookback: usize,
    horizon: usize,
) -> String {
    let inter = report.inter_flags();
    let intra = report.intra_flags();
    let max_inter = report.inter.data().iter().cloned().fold(0.0, f64::max);
    let mut out = String::new();
    writeln!(out, "anchors sampled: {}", report.anchors.len()).unwrap();
    writeln!(out, "series: {}", names.join(", ")).unwrap();
    writeln!(out, "window: lookback {lookback}, horizon {horizon}").unwrap();
    writeln!(out, "delta: {}", report.delta).unwrap();
    writeln!(out, "max inter distance: {max_inter:.6}").unwrap();
    writeln!(out, "inter flags: {}", inter.len()).unwrap();
    writeln!(out, "intra flags: {}", intra.len()).unwrap();
    if !change_points.is_empty() {
        let cps: Vec<String> = change_points.iter().map(|c| c.to_string()).collect();
        writeln!(out, "known change points: {}", cps.join(", ")).unwrap();
        let near = inter
            .iter()
            .filter(|f| {
                change_points
                    .iter()
                    .any(|&c| f.anchor.abs_diff(c) <= lookback + horizon)
            })
            .count();
        writeln!(
            out,
            "inter flags within lookback+horizon of a change point: {near}/{}",
            inter.len()
        )
        .unwrap();
    }
    for f in &inter {
        writeln!(
            out,
            "  flag anchor {} series {} distance {:.6}",
            f.anchor, names[f.series], f.distance
        )
        .unwrap();
    }
    out
}

pub fn runs_csv(runs: &[RunRecord]) -> String {
    csv_string(
        &[
            "cell",
            "mode",
            "seed",
            "status",
            "mse",
            "mae",
            "level_gap",
            "epochs",
            "best_epoch",
            "detail",
        ],
        runs.iter().map(|r| {
            let detail = match &r.status {
                RunStatus::Ok => String::new(),
                RunStatus::Diverged(m) | RunStatus::Failed(m) => m.clone(),
            };
            vec![
                r.cell.clone(),
                r.mode.to_string(),
                r.seed.to_string(),
                r.status.label().to_string(),
                num(r.mse),
                num(r.mae),
                r.level_gap.map_or(String::new(), num),
                r.epochs.to_string(),
                r.best_epoch.to_string(),
                detail,
            ]
        }),
    )
}

/// Inverse of [`runs_csv`].
pub fn parse_runs_csv(text: &str, path: &Path) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| CliError::parse(path, line, 1, e.to_string()))?;
        if rec.len() != 10 {
            return Err(CliError::parse(path, line, 1, "expected 10 fields"));
        }
        let bad = |col: usize| CliError::parse(path, line, col + 1, format!("bad field `{}`", &rec[col]));
        let float = |col: usize| -> Result<f64> {
            if rec[col].is_empty() {
                Ok(f64::NAN)
            } else {
                rec[col].parse().map_err(|_| bad(col))
            }
        };
        let int = |col: usize| -> Result<usize> { rec[col].parse().map_err(|_| bad(col)) };
        let status = match &rec[3] {
            "ok" => RunStatus::Ok,
            "diverged" => RunStatus::Diverged(rec[9].to_string()),
            "failed" => RunStatus::Failed(rec[9].to_string()),
            _ => return Err(bad(3)),
        };
        let level_gap = float(6)?;
        out.push(RunRecord {
            cell: rec[0].to_string(),
            mode: rec[1].parse::<NormMode>().map_err(|_| bad(1))?,
            seed: rec[2].parse().map_err(|_| bad(2))?,
            mse: float(4)?,
            mae: float(5)?,
            level_gap: (!level_gap.is_nan()).then_some(level_gap),
            epochs: int(7)?,
            best_epoch: int(8)?,
            status,
        });
    }
    Ok(out)
}

pub fn summary_csv(summary: &[CellSummary]) -> String {
    csv_string(
        &[
            "cell", "mode", "runs", "excluded", "mse_mean", "mse_std", "mae_mean", "mae_std",
        ],
        summary.iter().map(|s| {
            vec![
                s.cell.clone(),
                s.mode.to_string(),
                s.runs.to_string(),
                s.excluded.to_string(),
                num(s.mse_mean),
                num(s.mse_std),
                num(s.mae_mean),
                num(s.mae_std),
            ]
        }),
    )
}

pub fn summary_table(summary: &[CellSummary], improvements: &[Improvement]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<20} {:<8} {:>4} {:>4} {:>22} {:>22}",
        "cell", "mode", "runs", "excl", "mse (mean±std)", "mae (mean±std)"
    )
    .unwrap();
    for s in summary {
        writeln!(
            out,
            "{:<20} {:<8} {:>4} {:>4} {:>22} {:>22}",
            s.cell,
            s.mode.as_str(),
            s.runs,
            s.excluded,
            format!("{:.4}±{:.4}", s.mse_mean, s.mse_std),
            format!("{:.4}±{:.4}", s.mae_mean, s.mae_std),
        )
        .unwrap();
    }
    if !improvements.is_empty() {
        out.push('\n');
        for i in improvements {
            writeln!(out, "{i}").unwrap();
        }
    }
    for s in summary.iter().filter(|s| s.excluded > 0) {
        writeln!(out, "warning: {} {}: {} run(s) excluded", s.cell, s.mode, s.excluded).unwrap();
    }
    out
}

/// Summary CSV and table recomputed from a runs CSV alone.
pub fn summarize_runs(text: &str, path: &Path) -> Result<(String, String)> {
    let runs = parse_runs_csv(text, path)?;
    let (summary, improvements) = aggregate(&runs);
    Ok((summary_csv(&summary), summary_table(&summary, &improvements)))
}

/// `manifest.csv` listing each artifact present in `dir` with its format version.
pub fn write_manifest(dir: &Path, files: &[&str]) -> Result<()> {
    let rows = files.iter().map(|f| {
        let v = ARTIFACT_VERSIONS.iter().find(|(n, _)| n == f).map_or(1, |(_, v)| *v);
        vec![f.to_string(), v.to_string()]
    });
    let mut text = csv_string(&["file", "format_version"], rows);
    text.push_str(&format!("# dish-ts {}\n", env!("CARGO_PKG_VERSION")));
    write_file(&dir.join("manifest.csv"), text.as_bytes())
}
