use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dish_core::data::{build_datasets, WindowPair};
use dish_core::synthetic::gen_synthetic;
use dish_core::{BackboneKind, DishModel, ModelConfig, NormMode};
use dish_ts::checkpoint;
use dish_ts::config::parse_split;
use dish_ts::spec_file::load_synthetic;
use tempfile::TempDir;

const SHIFTED: &str = r#"
length = 400
series = 2
seed = 3
noise = 1.0
series_offset = 2.0

[[segment]]
start = 0
level = 0.0
ar = 0.5

[[segment]]
start = 200
level = 8.0
ar = 0.5
"#;

const WHITE_NOISE: &str = r#"
length = 400
series = 2
seed = 5
noise = 1.0

[[segment]]
start = 0
level = 0.0
"#;

const JUMP: &str = r#"
length = 3000
series = 2
seed = 21
noise = 1.0

[[segment]]
start = 0
level = 0.0

[[segment]]
start = 1500
level = 10.0
"#;

const CONSTANT: &str = r#"
length = 1000
series = 1
noise = 0.0

[[segment]]
start = 0
level = 7.5
"#;

fn dish(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dish")).args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn test_windows(spec: &Path, split: &str, l: usize, h: usize) -> (Vec<WindowPair>, Vec<WindowPair>) {
    let frame = gen_synthetic(&load_synthetic(spec).unwrap()).unwrap();
    let d = build_datasets(&frame, &parse_split(split).unwrap(), l, h).unwrap();
    (d.val, d.test)
}

fn tail_copy_mse(windows: &[WindowPair]) -> f64 {
    let (mut se, mut n) = (0.0, 0.0);
    for w in windows {
        let (l, h) = (w.lookback.rows(), w.horizon.rows());
        for r in 0..h {
            for (y, x) in w.horizon.row(r).iter().zip(w.lookback.row(l - h + r)) {
                se += (y - x) * (y - x);
                n += 1.0;
            }
        }
    }
    se / n
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect()
}

fn metric(path: &Path, scope: &str, column: usize) -> f64 {
    csv_rows(path).into_iter().find(|r| r[0] == scope).unwrap()[column]
        .parse()
        .unwrap()
}

#[test]
fn identity_none_training_validates_at_tail_copy_mse() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "s.toml", SHIFTED);
    let out = dir.path().join("run");
    ok(&dish(&[
        "train",
        "--synthetic-spec",
        s(&spec),
        "--backbone",
        "identity",
        "--mode",
        "none",
        "--lookback",
        "16",
        "--horizon",
        "8",
        "--max-epochs",
        "3",
        "--out",
        s(&out),
    ]));
    let (val, _) = test_windows(&spec, "7:1:2", 16, 8);
    let oracle = tail_copy_mse(&val);
    let rows = csv_rows(&out.join("history.csv"));
    assert_eq!(rows.len(), 3);
    let last: f64 = rows.last().unwrap()[2].parse().unwrap();
    assert!((last - oracle).abs() <= 1e-12 * oracle, "{last} vs {oracle}");
    for f in ["checkpoint.txt", "config.toml", "manifest.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn missing_inputs_exit_with_input_error() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.csv");
    for args in [
        vec!["train", "--data", s(&missing), "--out", s(dir.path())],
        vec!["train", "--out", s(dir.path())],
        vec!["train", "--data", s(&missing), "--mode", "batchnorm"],
    ] {
        let out = dish(&args);
        assert_eq!(out.status.code(), Some(2));
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with("error[input]: "), "{err}");
    }
}

#[test]
fn divergence_exits_with_numeric_error() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "s.toml", SHIFTED);
    let out = dir.path().join("run");
    let r = dish(&[
        "train",
        "--synthetic-spec",
        s(&spec),
        "--lookback",
        "16",
        "--horizon",
        "8",
        "--lr",
        "1e300",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8(r.stderr).unwrap().starts_with("error[numeric]: "));
    assert!(checkpoint::load(&out.join("checkpoint.txt")).is_ok());
}

#[test]
fn same_config_twice_gives_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "s.toml", SHIFTED);
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&dish(&[
            "train",
            "--synthetic-spec",
            s(&spec),
            "--lookback",
            "16",
            "--horizon",
            "8",
            "--max-epochs",
            "3",
            "--seed",
            "7",
            "--out",
            s(&out),
        ]));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["history.csv", "checkpoint.txt"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn config_file_overrides_flags() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "s.toml", SHIFTED);
    let out = dir.path().join("run");
    let cfg = write(
        &dir,
        "run.toml",
        &format!("alpha = 0.75\nmax_epochs = 2\nout = \"{}\"\n", s(&out)),
    );
    ok(&dish(&[
        "train",
        "--config",
        s(&cfg),
        "--synthetic-spec",
        s(&spec),
        "--alpha",
        "0.1",
        "--max-epochs",
        "9",
        "--lookback",
        "16",
        "--horizon",
        "8",
    ]));
    let resolved = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(resolved.contains("alpha = 0.75"), "{resolved}");
    assert!(resolved.contains("lookback = 16"), "{resolved}");
    assert_eq!(csv_rows(&out.join("history.csv")).len(), 2);
    // The resolved file reruns the same configuration on its own.
    let again = dir.path().join("again");
    ok(&dish(&[
        "train",
        "--config",
        s(&out.join("config.toml")),
        "--out",
        s(&again),
    ]));
}

#[test]
fn shared_coefficient_identity_model_evaluates_at_tail_copy_mse() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "s.toml", SHIFTED);
    let mut cfg = ModelConfig::new(2, 16, 8);
    cfg.backbone = BackboneKind::Identity;
    cfg.init = dish_core::InitStrategy::Uniform;
    let mut model = DishModel::new(cfg, 4).unwrap();
    let store = model.store_mut();
    let back = store.value(store.find(dish_core::conet::BACK_WEIGHT).unwrap()).clone();
    let hori = store.find(dish_core::conet::HORI_WEIGHT).unwrap();
    *store.value_mut(hori) = back;
    let ckpt = dir.path().join("rt.txt");
    checkpoint::save(&ckpt, &model).unwrap();
    let out = dir.path().join("eval");
    ok(&dish(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--synthetic-spec",
        s(&spec),
        "--backbone",
        "identity",
        "--lookback",
        "16",
        "--horizon",
        "8",
        "--out",
        s(&out),
    ]));
    let (_, test) = test_windows(&spec, "7:1:2", 16, 8);
    let oracle = tail_copy_mse(&test);
    let got = metric(&out.join("metrics.csv"), "overall", 2);
    assert!((got - oracle).abs() <= 1e-10 * oracle, "{got} vs {oracle}");
    assert_eq!(csv_rows(&out.join("metrics.csv")).len(), 3);
}

#[test]
fn zero_linear_model_on_zero_mean_data_scores_target_second_moment() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "s.toml", WHITE_NOISE);
    let mut cfg = ModelConfig::new(2, 16, 8);
    cfg.mode = NormMode::None;
    let mut model = DishModel::new(cfg, 0).unwrap();
    for id in model.store().ids().collect::<Vec<_>>() {
        model.store_mut().value_mut(id).fill(0.0);
    }
    let ckpt = dir.path().join("zero.txt");
    checkpoint::save(&ckpt, &model).unwrap();
    let out = dir.path().join("eval");
    ok(&dish(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--synthetic-spec",
        s(&spec),
        "--mode",
        "none",
        "--lookback",
        "16",
        "--horizon",
        "8",
        "--scale-mse",
        "0.1",
        "--out",
        s(&out),
    ]));
    let (_, test) = test_windows(&spec, "7:1:2", 16, 8);
    let ys: Vec<f64> = test.iter().flat_map(|w| w.horizon.data().to_vec()).collect();
    let n = ys.len() as f64;
    let second = ys.iter().map(|y| y * y).sum::<f64>() / n;
    let mean = ys.iter().sum::<f64>() / n;
    let variance = second - mean * mean;
    let got = metric(&out.join("metrics.csv"), "overall", 2);
    assert!((got - second).abs() <= 1e-12 * second);
    assert!((got - variance).abs() <= mean * mean + 1e-12);
    assert!((metric(&out.join("metrics.csv"), "overall", 4) - 0.1 * got).abs() < 1e-12);
}

#[test]
fn eval_rejects_empty_test_and_mismatched_checkpoints() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "s.toml", SHIFTED);
    let ckpt = dir.path().join("m.txt");
    checkpoint::save(&ckpt, &DishModel::new(ModelConfig::new(2, 16, 8), 0).unwrap()).unwrap();
    let empty = dish(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--synthetic-spec",
        s(&spec),
        "--lookback",
        "16",
        "--horizon",
        "8",
        "--split",
        "8:2:0",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(empty.status.code(), Some(2));
    assert!(String::from_utf8(empty.stderr)
        .unwrap()
        .contains("test partition is empty"));
    let mismatch = dish(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--synthetic-spec",
        s(&spec),
        "--lookback",
        "12",
        "--horizon",
        "8",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(mismatch.status.code(), Some(2));
    let err = String::from_utf8(mismatch.stderr).unwrap();
    assert!(
        err.contains("does not match") && err.contains("lookback 16 vs 12"),
        "{err}"
    );
}

#[test]
fn sweeps_emit_one_row_per_value_and_record_failures() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "s.toml", SHIFTED);
    let sweep = |axis: &str, values: &str, name: &str| {
        let out = dir.path().join(name);
        ok(&dish(&[
            "sweep",
            "--axis",
            axis,
            "--values",
            values,
            "--synthetic-spec",
            s(&spec),
            "--lookback",
            "16",
            "--horizon",
            "8",
            "--max-epochs",
            "2",
            "--out",
            s(&out),
        ]));
        csv_rows(&out.join("sweep.csv"))
    };
    let alpha = sweep("alpha", "0,0.5,1.0", "alpha");
    assert_eq!(alpha.len(), 3);
    assert!(alpha.iter().all(|r| r[0] == "alpha" && r[2] == "ok"));
    assert_eq!(sweep("init", "avg,norm,uniform", "init").len(), 3);
    let lookback = sweep("lookback", "8,16,300", "lookback");
    assert_eq!(lookback.len(), 3);
    assert_eq!(lookback[2][2], "input");
    assert!(lookback[..2].iter().all(|r| r[2] == "ok"));
}

#[test]
fn diagnose_flags_follow_the_data() {
    let dir = TempDir::new().unwrap();
    let diagnose = |spec: &str, extra: &[&str], name: &str| {
        let path = write(&dir, &format!("{name}.toml"), spec);
        let out = dir.path().join(name);
        let mut args = vec![
            "diagnose",
            "--synthetic-spec",
            s(&path),
            "--lookback",
            "256",
            "--horizon",
            "256",
            "--out",
            s(&out),
        ];
        args.extend_from_slice(extra);
        ok(&dish(&args));
        let summary = std::fs::read_to_string(out.join("shift_summary.txt")).unwrap();
        (summary, csv_rows(&out.join("shift.csv")))
    };
    let (summary, rows) = diagnose(CONSTANT, &[], "constant");
    assert!(summary.contains("inter flags: 0"), "{summary}");
    assert!(rows.iter().all(|r| r[5] == "0"));

    let (summary, rows) = diagnose(JUMP, &["--anchors", "64"], "shifted");
    let flagged: Vec<usize> = rows
        .iter()
        .filter(|r| r[0] == "inter" && r[5] == "1")
        .map(|r| r[1].parse().unwrap())
        .collect();
    assert!(!flagged.is_empty(), "{summary}");
    assert!(flagged.iter().all(|&a| a.abs_diff(1500) <= 512), "{flagged:?}");
    assert!(summary.contains("known change points: 1500"));

    let (summary, _) = diagnose(JUMP, &["--delta", "inf"], "infinite");
    assert!(
        summary.contains("inter flags: 0") && summary.contains("intra flags: 0"),
        "{summary}"
    );
}

#[test]
fn generate_writes_a_loadable_frame() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "s.toml", SHIFTED);
    let out = dir.path().join("frame.csv");
    let r = dish(&["generate", "--synthetic-spec", s(&spec), "--out", s(&out)]);
    ok(&r);
    assert!(String::from_utf8(r.stdout).unwrap().contains("[200]"));
    let loaded = dish_ts::csv_io::load_csv(&out, &Default::default()).unwrap();
    let direct = gen_synthetic(&load_synthetic(&spec).unwrap()).unwrap();
    assert_eq!(loaded.values(), direct.values());
    assert_eq!(loaded.names(), direct.names());
}

#[test]
fn bench_summary_is_a_function_of_the_runs_csv() {
    let dir = TempDir::new().unwrap();
    let suite = format!(
        "name = \"tiny\"\nseeds = [1]\nmodes = [\"dish\", \"none\", \"revin\"]\nmax_epochs = 2\n\n[[cell]]\nname = \"shift\"\nlookback = 16\nhorizon = 8\n[cell.data]\n{}",
        SHIFTED.replace("[[segment]]", "[[cell.data.segment]]")
    );
    let path = write(&dir, "suite.toml", &suite);
    let out = dir.path().join("bench");
    ok(&dish(&["bench", "--suite", s(&path), "--out", s(&out)]));
    let runs = std::fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(csv_rows(&out.join("runs.csv")).len(), 3);
    let (summary, table) = dish_ts::report::summarize_runs(&runs, Path::new("runs.csv")).unwrap();
    assert_eq!(summary, std::fs::read_to_string(out.join("summary.csv")).unwrap());
    assert_eq!(table, std::fs::read_to_string(out.join("summary.txt")).unwrap());
    let rows = csv_rows(&out.join("summary.csv"));
    assert!(rows.iter().all(|r| r[5] == "0"), "single seed has zero std: {rows:?}");
    assert!(table.contains("dish vs none") && table.contains("dish vs revin"));
}
