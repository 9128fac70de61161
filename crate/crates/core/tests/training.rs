use kanfactor_core::backtest::{
    evaluate_loss, predictive_r2, prevailing_mean, rolling_backtest, select_lambda, total_r2, train_model, SplitPlan, TrainConfig,
};
use kanfactor_core::data::{
    apply_lags, build_dataset, generate_synthetic, BetaFn, NoiseSpec, PanelDataset, RawPanel, SyntheticConfig,
    YearMonth,
};
use kanfactor_core::nets::ArchSpec;
use kanfactor_core::{ConditionalAutoencoder, NetKind, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ym(s: &str) -> YearMonth {
    s.parse().unwrap()
}

fn panel(cfg: &SyntheticConfig) -> PanelDataset {
    build_dataset(&apply_lags(&generate_synthetic(cfg).unwrap().0))
}

fn model(kind: NetKind, p: usize, k: usize, lambda: f64, seed: u64) -> ConditionalAutoencoder {
    ConditionalAutoencoder::init(&ArchSpec::new(kind, p, k), lambda, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn zero_epochs_returns_initial_model() {
    let ds = panel(&SyntheticConfig::new(20, 4, 1, 12, BetaFn::Linear, NoiseSpec::NoiseStd(0.01), 1));
    let m = model(NetKind::Kan, 4, 1, 0.1, 2);
    let cfg = TrainConfig {
        max_epochs: 0,
        patience: 0,
        ..TrainConfig::default()
    };
    let out = train_model(m.clone(), &ds.months[..8], &ds.months[8..], &cfg).unwrap();
    assert_eq!(out.model, m);
    assert!(out.curve.is_empty());
    assert_eq!(out.best_epoch, 0);
}

#[test]
fn noiseless_linear_panel_is_fitted() {
    let ds = panel(&SyntheticConfig::new(100, 10, 1, 120, BetaFn::Linear, NoiseSpec::NoiseStd(0.0), 3));
    let m = model(NetKind::Linear, 10, 1, 0.0, 1);
    let initial = evaluate_loss(&m, &ds.months).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        max_epochs: 500,
        patience: 0,
        ..TrainConfig::default()
    };
    let out = train_model(m, &ds.months, &ds.months, &cfg).unwrap();
    let last = out.curve.last().unwrap();
    assert!(last.train_loss < 1e-6 * initial, "{} vs {initial}", last.train_loss);
    let pairs = ds.months.iter().flat_map(|s| {
        let (p, _) = out.model.forward(&s.z, &s.r).unwrap();
        p.r_hat.into_vec().into_iter().zip(s.r.iter().copied())
    });
    assert!(total_r2(pairs).unwrap() > 99.9);
}

#[test]
fn training_is_deterministic() {
    let ds = panel(&SyntheticConfig::new(30, 4, 2, 30, BetaFn::Sine, NoiseSpec::SignalR2(0.5), 5));
    let cfg = TrainConfig {
        max_epochs: 8,
        patience: 3,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = || train_model(model(NetKind::Kan, 4, 2, 0.1, 4), &ds.months[..20], &ds.months[20..], &cfg).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.model, b.model);
}

#[test]
fn early_stopping_restores_best_validation_epoch() {
    // A large learning rate on a small noisy panel overfits quickly.
    let ds = panel(&SyntheticConfig::new(15, 6, 2, 40, BetaFn::Quadratic, NoiseSpec::SignalR2(0.1), 8));
    let cfg = TrainConfig {
        learning_rate: 0.02,
        max_epochs: 150,
        patience: 5,
        ..TrainConfig::default()
    };
    let (train, val) = ds.months.split_at(25);
    let out = train_model(model(NetKind::Mlp, 6, 2, 0.1, 3), train, val, &cfg).unwrap();
    let best = out
        .curve
        .iter()
        .map(|p| p.val_loss)
        .fold(f64::INFINITY, f64::min);
    if out.best_epoch > 0 {
        assert_eq!(out.curve[out.best_epoch - 1].val_loss, best);
        assert_eq!(out.best_val_loss, best);
    }
    assert_eq!(evaluate_loss(&out.model, val).unwrap(), out.best_val_loss);
    assert!(out.curve.len() < cfg.max_epochs, "expected an early stop");
    assert_eq!(out.curve.len(), out.best_epoch + cfg.patience);
}

#[test]
fn lambda_selection_rules() {
    let ds = panel(&SyntheticConfig::new(60, 5, 1, 40, BetaFn::Linear, NoiseSpec::SignalR2(0.9), 12));
    let (train, val) = ds.months.split_at(30);
    let base = TrainConfig {
        max_epochs: 40,
        patience: 0,
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    let factory = |l: f64| Ok(model(NetKind::Linear, 5, 1, l, 6));

    let single = TrainConfig {
        lambda_grid: vec![0.3],
        ..base.clone()
    };
    assert_eq!(select_lambda(factory, train, val, &single).unwrap().lambda, 0.3);

    let extremes = TrainConfig {
        lambda_grid: vec![0.01, 1e6],
        ..base.clone()
    };
    let sel = select_lambda(factory, train, val, &extremes).unwrap();
    assert_eq!(sel.lambda, 0.01);
    assert_eq!(sel.candidates.len(), 2);

    let duplicate = TrainConfig {
        lambda_grid: vec![0.1, 0.1],
        ..base
    };
    let sel = select_lambda(factory, train, val, &duplicate).unwrap();
    assert_eq!(sel.candidates[0].1, sel.candidates[1].1);
    assert_eq!(sel.lambda, 0.1);
}

fn small_plan() -> SplitPlan {
    // 2000-02 is the first month with returns: 60 train, 24 validation and
    // 24 test months.
    SplitPlan {
        train_start: ym("2000-02"),
        val_months: 24,
        test_start: ym("2007-02"),
        test_end: ym("2009-01"),
        refit_step: 12,
    }
}

fn quick_cfg() -> TrainConfig {
    TrainConfig {
        max_epochs: 3,
        patience: 0,
        lambda_grid: vec![0.1],
        ..TrainConfig::default()
    }
}

#[test]
fn rolling_window_arithmetic() {
    let ds = panel(&SyntheticConfig::new(12, 3, 1, 109, BetaFn::Sine, NoiseSpec::SignalR2(0.5), 1));
    let plan = small_plan();
    let report = rolling_backtest(&ds, &plan, &quick_cfg(), &ArchSpec::new(NetKind::Linear, 3, 1)).unwrap();
    assert_eq!(report.refits.len(), 2);
    assert_eq!(plan.refit_count(), 2);
    let first = &report.refits[0];
    assert_eq!((first.train_months, first.val_months, first.test_months), (60, 24, 12));
    assert_eq!(report.refits[1].train_months, 72);
    let mut months: Vec<YearMonth> = report.predictions.iter().map(|p| p.date).collect();
    months.dedup();
    assert_eq!(months.len(), 24);
    assert_eq!(report.pooled.test_months, 24);
    assert_eq!(report.predictions.len(), 24 * 12);
    for p in &report.predictions {
        let refit = report.refits.iter().rev().find(|r| r.refit_date <= p.date).unwrap();
        assert!(p.date >= refit.refit_date && p.date < refit.refit_date.add_months(12));
    }
}

#[test]
fn plan_outside_panel_fails_before_training() {
    let ds = panel(&SyntheticConfig::new(12, 3, 1, 60, BetaFn::Sine, NoiseSpec::SignalR2(0.5), 1));
    let err = rolling_backtest(&ds, &small_plan(), &quick_cfg(), &ArchSpec::new(NetKind::Kan, 3, 1)).unwrap_err();
    assert!(matches!(err, kanfactor_core::Error::Data(_)), "{err}");
}

#[test]
fn future_data_cannot_change_past_predictions() {
    let cfg = SyntheticConfig::new(12, 3, 1, 109, BetaFn::Sine, NoiseSpec::SignalR2(0.5), 6);
    let (raw, _) = generate_synthetic(&cfg).unwrap();
    let plan = small_plan();
    let spec = ArchSpec::new(NetKind::Kan, 3, 1);
    let base = rolling_backtest(&build_dataset(&apply_lags(&raw)), &plan, &quick_cfg(), &spec).unwrap();

    // Perturb everything from the second refit date on.
    let cut = plan.test_start.add_months(12);
    let specs = raw.characteristics().to_vec();
    let obs = raw
        .into_observations()
        .into_iter()
        .map(|mut o| {
            if o.date >= cut {
                o.ret_excess = o.ret_excess.map(|r| -5.0 * r + 0.3);
                o.characteristics.iter_mut().for_each(|c| *c = c.map(|v| v * v - 2.0));
            }
            o
        })
        .collect();
    let ds2 = build_dataset(&apply_lags(&RawPanel::new(specs, obs).unwrap()));
    let other = rolling_backtest(&ds2, &plan, &quick_cfg(), &spec).unwrap();
    assert_eq!(base.refits[0].model, other.refits[0].model);
    let past = |r: &kanfactor_core::backtest::BacktestReport| {
        r.predictions
            .iter()
            .filter(|p| p.date < cut)
            .map(|p| (p.forecast.to_bits(), p.realized.to_bits(), p.asset_id.clone()))
            .collect::<Vec<_>>()
    };
    assert!(!past(&base).is_empty());
    assert_eq!(past(&base), past(&other));
    let fitted = |r: &kanfactor_core::backtest::BacktestReport| {
        r.predictions.iter().filter(|p| p.date < cut).map(|p| p.fitted.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(fitted(&base), fitted(&other));
}

#[test]
fn constant_factors_make_predictive_equal_total() {
    let ds = panel(&SyntheticConfig::new(12, 3, 1, 20, BetaFn::Sine, NoiseSpec::SignalR2(0.5), 2));
    let m = model(NetKind::Linear, 3, 1, 0.1, 2);
    let c = Vector::new(vec![0.02]).unwrap();
    let premium = prevailing_mean(&vec![c.clone(); ds.months.len()]).unwrap();
    let mut fitted = Vec::new();
    let mut forecast = Vec::new();
    for s in &ds.months {
        let (p, _) = m.forward(&s.z, &s.r).unwrap();
        let r = s.r.iter().copied();
        fitted.extend(p.beta.matvec(&c).unwrap().into_vec().into_iter().zip(r.clone()));
        forecast.extend(p.beta.matvec(&premium).unwrap().into_vec().into_iter().zip(r));
    }
    assert_eq!(total_r2(fitted).unwrap(), predictive_r2(forecast).unwrap());
}

#[test]
fn backtests_are_deterministic() {
    let ds = panel(&SyntheticConfig::new(12, 3, 1, 109, BetaFn::Quadratic, NoiseSpec::SignalR2(0.5), 3));
    let spec = ArchSpec::new(NetKind::Mlp, 3, 1);
    let a = rolling_backtest(&ds, &small_plan(), &quick_cfg(), &spec).unwrap();
    let b = rolling_backtest(&ds, &small_plan(), &quick_cfg(), &spec).unwrap();
    assert_eq!(a, b);
}
