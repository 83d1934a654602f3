use dish_core::backbone::BackboneKind;
use dish_core::conet::{conet_forward, init_params, InitStrategy, BACK_WEIGHT, HORI_WEIGHT};
use dish_core::data::{chrono_split, make_windows, SeriesFrame, SplitSpec};
use dish_core::diagnostics::{eval_metrics, gaussian_kl, shift_scan, Gaussian, MetricScales, ShiftConfig};
use dish_core::pipeline::{DishModel, ModelConfig, NormMode};
use dish_core::training::loss_terms;
use dish_core::Tensor;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |d| Tensor::new(vec![rows, cols], d).unwrap())
}

fn frame(t: Tensor) -> SeriesFrame {
    let names = (0..t.cols()).map(|i| format!("s{i}")).collect();
    SeriesFrame::new(names, t).unwrap()
}

fn dish_model(n: usize, l: usize, h: usize, kind: BackboneKind, init: InitStrategy, seed: u64) -> DishModel {
    let mut cfg = ModelConfig::new(n, l, h);
    cfg.backbone = kind;
    cfg.init = init;
    DishModel::new(cfg, seed).unwrap()
}

fn share_coefficients(model: &mut DishModel) {
    let store = model.store_mut();
    let back = store.value(store.find(BACK_WEIGHT).unwrap()).clone();
    let hid = store.find(HORI_WEIGHT).unwrap();
    *store.value_mut(hid) = back;
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shared_coefficients_round_trip(x in matrix(6, 3, -50.0, 50.0), seed in 0u64..1000) {
        let mut model = dish_model(3, 6, 4, BackboneKind::Identity, InitStrategy::Uniform, seed);
        share_coefficients(&mut model);
        let out = model.predict(&x).unwrap().forecast;
        let tail = x.slice_rows(2, 6);
        for (a, b) in out.data().iter().zip(tail.data()) {
            prop_assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);
        }
    }

    #[test]
    fn avg_init_recovers_mean_and_population_std(x in matrix(12, 2, 0.5, 20.0)) {
        let p = init_params(2, 12, InitStrategy::Avg, 0).unwrap();
        let c = conet_forward(&p, &x).unwrap();
        for i in 0..2 {
            let col = x.column(i);
            let mean = col.iter().sum::<f64>() / 12.0;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 12.0).sqrt();
            prop_assert!((c.level[i] - mean).abs() < 1e-10);
            prop_assert!((c.scale[i] - std).abs() < 1e-10);
        }
    }

    #[test]
    fn scale_never_below_floor(x in matrix(5, 2, -3.0, 3.0), seed in 0u64..100) {
        let p = init_params(2, 5, InitStrategy::Norm, seed).unwrap();
        let c = conet_forward(&p, &x).unwrap();
        prop_assert!(c.scale.iter().all(|&s| s >= dish_core::EPS_FLOOR));
    }

    #[test]
    fn series_are_independent(x in matrix(7, 3, -5.0, 5.0), bump in -10.0f64..10.0, seed in 0u64..100) {
        let p = init_params(3, 7, InitStrategy::Uniform, seed).unwrap();
        let base = conet_forward(&p, &x).unwrap();
        let mut y = x.clone();
        for r in 0..7 {
            y.data_mut()[r * 3 + 1] += bump * (r as f64 + 1.0);
        }
        let moved = conet_forward(&p, &y).unwrap();
        for i in [0, 2] {
            prop_assert_eq!(base.level[i], moved.level[i]);
            prop_assert_eq!(base.scale[i], moved.scale[i]);
        }
    }

    #[test]
    fn revin_is_shift_equivariant(x in matrix(8, 2, -5.0, 5.0), c in -100.0f64..100.0, seed in 0u64..100) {
        let mut cfg = ModelConfig::new(2, 8, 3);
        cfg.mode = NormMode::Revin;
        let model = DishModel::new(cfg, seed).unwrap();
        let a = model.predict(&x).unwrap().forecast;
        let b = model.predict(&x.map(|v| v + c)).unwrap().forecast;
        for (u, w) in a.data().iter().zip(b.data()) {
            prop_assert!((w - u - c).abs() < 1e-9);
        }
    }

    #[test]
    fn avg_dish_matches_revin_on_positive_windows(x in matrix(8, 2, 1.0, 30.0), seed in 0u64..100) {
        let mut cfg = ModelConfig::new(2, 8, 4);
        cfg.backbone = BackboneKind::Mlp;
        cfg.hidden = 5;
        let dish = DishModel::new(cfg, seed).unwrap();
        cfg.mode = NormMode::Revin;
        let revin = DishModel::new(cfg, seed).unwrap();
        for (a, b) in dish.backbone().param_ids().into_iter().zip(revin.backbone().param_ids()) {
            prop_assert_eq!(dish.store().value(a), revin.store().value(b));
        }
        let a = dish.predict(&x).unwrap().forecast;
        let b = revin.predict(&x).unwrap().forecast;
        for (u, w) in a.data().iter().zip(b.data()) {
            prop_assert!((u - w).abs() < 1e-9);
        }
    }

    #[test]
    fn horizons_at_stride_h_rebuild_the_tail(t in 8usize..60, l in 1usize..6, h in 1usize..6) {
        prop_assume!(t >= l + h);
        let data: Vec<f64> = (0..t * 2).map(|k| (k as f64 * 0.37).sin()).collect();
        let f = frame(Tensor::new(vec![t, 2], data).unwrap());
        let windows = make_windows(&f, l, h, h).unwrap();
        prop_assert_eq!(windows.len(), (t - l - h) / h + 1);
        let joined: Vec<f64> = windows.iter().flat_map(|w| w.horizon.data().to_vec()).collect();
        let covered = windows.len() * h;
        let expected = &f.values().data()[l * 2..(l + covered) * 2];
        prop_assert_eq!(joined.as_slice(), expected);
    }

    #[test]
    fn split_is_an_ordered_cover(t in 0usize..300, a in 0.0f64..10.0, b in 0.0f64..10.0, c in 0.1f64..10.0) {
        let data: Vec<f64> = (0..t).map(|k| k as f64).collect();
        let f = frame(Tensor::new(vec![t, 1], data.clone()).unwrap());
        let (x, y, z) = chrono_split(&f, &SplitSpec::new(a, b, c).unwrap()).unwrap();
        let joined: Vec<f64> = [x, y, z].iter().flat_map(|p| p.values().data().to_vec()).collect();
        prop_assert_eq!(joined, data);
    }

    #[test]
    fn kl_is_non_negative(m1 in -10.0f64..10.0, s1 in 0.0f64..5.0, m2 in -10.0f64..10.0, s2 in 0.0f64..5.0) {
        let (a, b) = (Gaussian { mean: m1, std: s1 }, Gaussian { mean: m2, std: s2 });
        prop_assert!(gaussian_kl(a, b) >= 0.0);
        prop_assert_eq!(gaussian_kl(a, a), 0.0);
    }

    #[test]
    fn raising_delta_never_adds_flags(data in prop::collection::vec(-5.0f64..5.0, 120), d1 in 0.0f64..2.0, d2 in 0.0f64..2.0) {
        let f = frame(Tensor::new(vec![60, 2], data).unwrap());
        let mut cfg = ShiftConfig::new(10, 5);
        cfg.anchors = 8;
        let r = shift_scan(&f, &cfg).unwrap();
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        let (rl, rh) = (r.with_delta(lo), r.with_delta(hi));
        prop_assert!(rh.inter_flags().len() <= rl.inter_flags().len());
        prop_assert!(rh.intra_flags().len() <= rl.intra_flags().len());
        prop_assert!(r.with_delta(f64::INFINITY).inter_flags().is_empty());
    }

    #[test]
    fn metrics_ignore_element_order(pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..40), rot in 0usize..40) {
        let (p, y): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
        let k = rot % p.len();
        let (mut pr, mut yr) = (p.clone(), y.clone());
        pr.rotate_left(k);
        yr.rotate_left(k);
        pr.reverse();
        yr.reverse();
        let a = eval_metrics(&p, &y, MetricScales::default()).unwrap();
        let b = eval_metrics(&pr, &yr, MetricScales::default()).unwrap();
        prop_assert!((a.mse - b.mse).abs() <= 1e-12 * a.mse.max(1.0));
        prop_assert!((a.mae - b.mae).abs() <= 1e-12 * a.mae.max(1.0));
    }

    #[test]
    fn loss_splits_into_error_and_guidance(
        p in matrix(4, 2, -5.0, 5.0), y in matrix(4, 2, -5.0, 5.0),
        l0 in -5.0f64..5.0, l1 in -5.0f64..5.0, alpha in 0.0f64..1.0,
    ) {
        let terms = loss_terms(&p, &y, Some(&[l0, l1])).unwrap();
        let plain = loss_terms(&p, &y, None).unwrap();
        prop_assert_eq!(terms.squared_error, plain.squared_error);
        prop_assert_eq!(terms.total(0.0), plain.squared_error);
        let diff = terms.total(alpha) - terms.total(0.0);
        prop_assert!((diff - alpha * terms.guidance).abs() <= 1e-12 * terms.total(alpha).max(1.0));
    }
}
