use jse_core::eval::{evaluate, run_sweep, write_results_csv, ExperimentConfig, Method};
use jse_core::io::{load_embeddings, read_embeddings, save_embeddings, write_embeddings};
use jse_core::jse::{jse_fit, jse_pipeline, JseConfig, LoopOrder};
use jse_core::optim::{fit_logreg, OptimizerConfig};
use jse_core::toy::{gen_toy, gen_toy_test, ToyConfig};
use jse_core::types::{LabeledEmbeddings, Target};

fn toy(rho: f64, s: u64) -> ToyConfig {
    ToyConfig {
        rho,
        seed: s,
        ..ToyConfig::default()
    }
}

fn splits(cfg: &ToyConfig) -> (LabeledEmbeddings, LabeledEmbeddings, LabeledEmbeddings) {
    let (tr, va) = gen_toy(cfg).unwrap();
    (tr, va, gen_toy_test(cfg).unwrap())
}

#[test]
fn csv_round_trip_is_exact() {
    let (train, _) = gen_toy(&toy(0.8, 4)).unwrap();
    let mut buf = Vec::new();
    write_embeddings(&train, &mut buf).unwrap();
    let back = read_embeddings(buf.as_slice(), "memory").unwrap();
    assert_eq!(back.y_mt(), train.y_mt());
    assert_eq!(back.y_sp(), train.y_sp());
    let err = (back.z() - train.z()).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(err <= 1e-12, "max error {err:e}");
}

#[test]
fn file_pipeline_matches_in_memory() {
    let cfg = toy(0.8, 21);
    let (train, val, test) = splits(&cfg);
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = ["train", "val", "test"].iter().map(|s| dir.path().join(format!("{s}.csv"))).collect();
    for (p, d) in paths.iter().zip([&train, &val, &test]) {
        save_embeddings(p, d).unwrap();
    }
    let loaded: Vec<_> = paths.iter().map(|p| load_embeddings(p).unwrap()).collect();

    let jcfg = JseConfig::default();
    let down = OptimizerConfig::erm_default().with_seed(8);
    let a = jse_pipeline(&train, &val, &test, &jcfg, &down).unwrap();
    let b = jse_pipeline(&loaded[0], &loaded[1], &loaded[2], &jcfg, &down).unwrap();
    assert_eq!(a.result.sp_basis, b.result.sp_basis);
    assert_eq!(a.result.mt_basis, b.result.mt_basis);
    assert_eq!(a.model, b.model);
    assert_eq!(a.summary, b.summary);
}

#[test]
fn null_data_rarely_yields_a_spurious_vector() {
    let runs = 100;
    let mut accepted = 0;
    for s in 0..runs {
        let cfg = ToyConfig {
            gamma_sp: 0.0,
            gamma_mt: 0.0,
            ..toy(0.0, 500 + s)
        };
        let (train, val) = gen_toy(&cfg).unwrap();
        let jcfg = JseConfig {
            optimizer: OptimizerConfig::jse_default().with_seed(s),
            ..JseConfig::default()
        };
        if jse_fit(&train, &val, &jcfg).unwrap().d_sp() > 0 {
            accepted += 1;
        }
    }
    assert!(accepted * 10 <= runs, "{accepted}/{runs} null runs accepted a vector");
}

#[test]
fn loop_orders_agree() {
    let n = 20;
    let (mut dims_mt, mut dims_sp) = (vec![0; 21], vec![0; 21]);
    let (mut acc_mt, mut acc_sp) = (0.0, 0.0);
    for s in 0..n {
        let (train, val, test) = splits(&toy(0.8, 900 + s));
        let down = OptimizerConfig::erm_default().with_seed(s);
        let run = |order| {
            let cfg = JseConfig {
                loop_order: order,
                optimizer: OptimizerConfig::jse_default().with_seed(s),
                ..JseConfig::default()
            };
            jse_pipeline(&train, &val, &test, &cfg, &down).unwrap()
        };
        let a = run(LoopOrder::MtInner);
        let b = run(LoopOrder::SpInner);
        dims_mt[a.result.d_sp()] += 1;
        dims_sp[b.result.d_sp()] += 1;
        acc_mt += a.summary.average / n as f64;
        acc_sp += b.summary.average / n as f64;
    }
    let mode = |h: &[usize]| (0..h.len()).max_by_key(|&k| h[k]).unwrap();
    assert_eq!(mode(&dims_mt), mode(&dims_sp), "{dims_mt:?} vs {dims_sp:?}");
    assert!((acc_mt - acc_sp).abs() <= 1.5, "{acc_mt:.2} vs {acc_sp:.2}");
}

#[test]
fn removal_keeps_main_task_accuracy_at_low_correlation() {
    for (k, rho) in [0.0, 0.25, 0.5].into_iter().enumerate() {
        for s in 0..5u64 {
            let (train, val, _) = splits(&toy(rho, 1300 + 10 * k as u64 + s));
            let down = OptimizerConfig::erm_default().with_seed(s);
            let before = fit_logreg(&train, Target::Mt, &val, &down).unwrap().model;
            let before_acc = evaluate(&before, &val, None).unwrap().average;
            let after = jse_pipeline(&train, &val, &val, &JseConfig::default(), &down).unwrap();
            assert!(
                after.summary.average >= before_acc - 2.0,
                "rho {rho} seed {s}: {:.2} after vs {before_acc:.2} before",
                after.summary.average
            );
        }
    }
}

#[test]
fn sweeps_are_deterministic() {
    let cfg = ExperimentConfig {
        methods: vec![Method::Jse, Method::Erm, Method::Inlp],
        seeds: 3,
        grid: vec![0.0, 0.9],
        workers: 2,
        ..ExperimentConfig::default()
    };
    let strip = |cfg: &ExperimentConfig| {
        let mut records = run_sweep(cfg).unwrap().records;
        for r in &mut records {
            r.runtime_ms = 0;
        }
        let mut out = Vec::new();
        write_results_csv(&records, &mut out).unwrap();
        out
    };
    assert_eq!(strip(&cfg), strip(&cfg));
    assert_eq!(strip(&cfg), strip(&ExperimentConfig { workers: 1, ..cfg.clone() }));
}

#[test]
fn sweep_cells_use_distinct_data() {
    let cfg = ExperimentConfig {
        methods: vec![Method::Erm],
        seeds: 2,
        grid: vec![0.5, 0.5],
        ..ExperimentConfig::default()
    };
    let r = run_sweep(&cfg).unwrap();
    let first: Vec<_> = r.records.iter().filter(|r| r.seed == 0).map(|r| r.summary.clone()).collect();
    assert_eq!(first.len(), 2);
    assert_ne!(first[0], first[1]);
}
