use std::path::Path;

use dish_core::bench::{run_suite, BenchSuite, CellSummary};
use dish_core::NormMode;

fn suite(name: &str) -> BenchSuite {
    dish_ts::spec_file::load_suite(&Path::new(env!("CARGO_MANIFEST_DIR")).join("suites").join(name)).unwrap()
}

fn summary(rows: &[CellSummary], mode: NormMode) -> &CellSummary {
    rows.iter().find(|s| s.mode == mode).unwrap()
}

#[test]
fn level_shifts_favor_dish_on_every_seed() {
    let s = suite("level_shift.toml");
    let report = run_suite(&s).unwrap();
    for &seed in &s.seeds {
        let mse = |mode| {
            report
                .runs
                .iter()
                .find(|r| r.seed == seed && r.mode == mode)
                .unwrap()
                .mse
        };
        assert!(mse(NormMode::Dish) < mse(NormMode::None), "seed {seed}");
    }
}

#[test]
fn stationary_data_shows_no_gap_beyond_seed_noise() {
    let report = run_suite(&suite("stationary.toml")).unwrap();
    let dish = summary(&report.summary, NormMode::Dish);
    let revin = summary(&report.summary, NormMode::Revin);
    assert_eq!((dish.runs, revin.runs), (3, 3));
    let gap = (dish.mse_mean - revin.mse_mean).abs();
    assert!(
        gap <= dish.mse_std + revin.mse_std,
        "dish {:.4}±{:.4} vs revin {:.4}±{:.4}",
        dish.mse_mean,
        dish.mse_std,
        revin.mse_mean,
        revin.mse_std
    );
}
