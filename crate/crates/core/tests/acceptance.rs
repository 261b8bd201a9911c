//! Reproduction targets on the synthetic benchmark. Prints one PASS/FAIL
//! line per criterion and exits non-zero if any criterion fails.
//!
//! Sweeps use 100 seeds per cell, n = 2000, d = 20 and a ρ = 0 test draw.

use std::process::ExitCode;

use jse_core::eval::{run_sweep, ExperimentConfig, Method, Metric, SweepAxis, SweepResult};
use jse_core::io::{load_embeddings, read_embeddings, save_embeddings, write_embeddings};
use jse_core::jse::{jse_pipeline, DeltaMode, JseConfig};
use jse_core::optim::{
    effective_mt_weights, fit_1d_logreg, fit_intercept_only, joint_loss_grad, joint_param_len,
    OptimizerConfig,
};
use jse_core::seed;
use jse_core::stats::{t_statistic, t_vs_random, weighted_diff};
use jse_core::toy::{gen_toy, gen_toy_test, sample, ToyConfig};
use jse_core::types::{gram_schmidt, project_onto, project_out, LabeledEmbeddings, Target};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

const SEEDS: usize = 100;

struct Check {
    label: String,
    ok: bool,
}

impl Check {
    fn within(label: &str, got: f64, target: f64, tol: f64) -> Self {
        Check {
            label: format!("{label} = {got:.2} (target {target} ± {tol})"),
            ok: (got - target).abs() <= tol,
        }
    }

    fn holds(label: String, ok: bool) -> Self {
        Check { label, ok }
    }
}

fn report(n: usize, name: &str, checks: Vec<Check>) -> bool {
    let ok = checks.iter().all(|c| c.ok);
    println!("criterion {n} ({name}): {}", if ok { "PASS" } else { "FAIL" });
    for c in checks {
        println!("    [{}] {}", if c.ok { "ok" } else { "FAIL" }, c.label);
    }
    ok
}

fn sweep(toy: ToyConfig, methods: &[Method], axis: SweepAxis, grid: Vec<f64>, jse: JseConfig) -> SweepResult {
    let mut cfg = ExperimentConfig {
        toy,
        methods: methods.to_vec(),
        seeds: SEEDS,
        axis,
        grid,
        ..ExperimentConfig::default()
    };
    cfg.configs.jse = jse;
    run_sweep(&cfg).expect("sweep")
}

fn mean(r: &SweepResult, m: Method, x: f64, metric: Metric) -> f64 {
    r.get(m, x, metric).map_or(f64::NAN, |a| a.mean)
}

fn rho_grid() -> Vec<f64> {
    (0..10).map(|i| f64::from(i) / 10.0).collect()
}

fn criterion_1(r: &SweepResult) -> bool {
    use Method::*;
    use Metric::{Average, WorstGroup};
    let mut checks = Vec::new();
    for (rho, target) in [(0.0, 83.73), (0.5, 83.43), (0.8, 83.33), (0.9, 82.94)] {
        checks.push(Check::within(&format!("JSE average at ρ={rho}"), mean(r, Jse, rho, Average), target, 1.0));
    }
    checks.push(Check::within("JSE worst-group at ρ=0.9", mean(r, Jse, 0.9, WorstGroup), 80.27, 2.0));
    checks.push(Check::within("ERM average at ρ=0.9", mean(r, Erm, 0.9, Average), 79.43, 1.5));
    checks.push(Check::within("ERM worst-group at ρ=0.9", mean(r, Erm, 0.9, WorstGroup), 68.41, 3.0));
    checks.push(Check::within("INLP average at ρ=0.9", mean(r, Inlp, 0.9, Average), 55.67, 3.0));
    checks.push(Check::within("RLACE average at ρ=0.9", mean(r, Rlace, 0.9, Average), 72.48, 2.5));
    checks.push(Check::within("GW-ERM average at ρ=0.9", mean(r, GwErm, 0.9, Average), 81.25, 2.0));
    report(1, "Toy reproduction", checks)
}

fn criterion_2(r: &SweepResult) -> bool {
    let mut checks = Vec::new();
    for rho in rho_grid().into_iter().filter(|&x| x >= 0.2) {
        let margin = if rho >= 0.5 { 2.0 } else { 0.0 };
        let jse = mean(r, Method::Jse, rho, Metric::Average);
        for other in [Method::Inlp, Method::Rlace] {
            let o = mean(r, other, rho, Metric::Average);
            checks.push(Check::holds(
                format!("ρ={rho}: JSE {jse:.2} ≥ {other} {o:.2} + {margin}"),
                jse >= o + margin,
            ));
        }
    }
    report(2, "ordering", checks)
}

fn criterion_3() -> bool {
    let toy = ToyConfig {
        rho: 0.9,
        ..ToyConfig::default()
    };
    let methods = [Method::Jse, Method::Inlp, Method::Rlace];
    let r = sweep(toy, &methods, SweepAxis::AngleDeg, vec![75.0], JseConfig::default());
    let jse = mean(&r, Method::Jse, 75.0, Metric::Average);
    let rlace = mean(&r, Method::Rlace, 75.0, Metric::Average);
    let inlp = mean(&r, Method::Inlp, 75.0, Metric::Average);
    report(
        3,
        "non-orthogonal 75°",
        vec![
            Check::within("JSE average at ρ=0.9", jse, 79.1, 1.5),
            Check::holds(format!("JSE {jse:.2} > RLACE {rlace:.2}"), jse > rlace),
            Check::holds(format!("JSE {jse:.2} > INLP {inlp:.2}"), jse > inlp),
        ],
    )
}

fn criterion_4() -> bool {
    let toy = ToyConfig {
        gamma_sp: 6.0,
        gamma_mt: 2.0,
        ..ToyConfig::default()
    };
    let run = |delta| {
        let cfg = JseConfig {
            delta,
            ..JseConfig::default()
        };
        let r = sweep(toy.clone(), &[Method::Jse], SweepAxis::Rho, vec![0.9], cfg);
        mean(&r, Method::Jse, 0.9, Metric::Average)
    };
    report(
        4,
        "Δ heuristic, γ_sp=6, γ_mt=2",
        vec![
            Check::within("JSE auto-Δ average at ρ=0.9", run(DeltaMode::Auto), 77.4, 1.5),
            Check::within("JSE Δ=0 average at ρ=0.9", run(DeltaMode::Fixed(0.0)), 64.6, 3.0),
        ],
    )
}

fn criterion_5(r: &SweepResult) -> bool {
    let runs: Vec<_> = r.records_for(Method::Jse, 0.9).collect();
    let ones = runs.iter().filter(|x| x.d_sp_hat == Some(1)).count();
    let share = ones as f64 / runs.len() as f64;
    report(
        5,
        "group-weighted tests",
        vec![Check::holds(
            format!("d_sp_hat = 1 in {ones}/{} seeds at ρ=0.9 (need ≥ 90%)", runs.len()),
            share >= 0.9,
        )],
    )
}

fn gaussian(rows: usize, cols: usize, s: u64) -> Array2<f64> {
    let mut rng = seed::rng(s);
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn ks_pvalue(sample: &mut [f64]) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    let mut dmax = 0.0f64;
    for (i, &x) in sample.iter().enumerate() {
        let f = normal.cdf(x);
        dmax = dmax.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * dmax;
    let p: f64 = (1..=100)
        .map(|k| {
            let k = f64::from(k);
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    p.clamp(0.0, 1.0)
}

fn random_split(rng: &mut impl Rng, n: usize, d: usize) -> LabeledEmbeddings {
    loop {
        let z = Array2::from_shape_fn((n, d), |_| rng.sample(StandardNormal));
        let y_mt: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let y_sp: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let data = LabeledEmbeddings::new(z, y_mt, y_sp).unwrap();
        if data.group_counts().iter().all(|&c| c >= 2) {
            return data;
        }
    }
}

fn criterion_6() -> bool {
    let mut checks = Vec::new();

    let mut worst = 0.0f64;
    for s in 0..50u64 {
        let d = 2 + (s as usize % 10);
        let v = gram_schmidt(&gaussian(d, 1 + s as usize % d.min(3), s), 1e-8);
        let z = gaussian(20, d, s + 1000);
        let out = project_out(&z, &v).unwrap();
        worst = worst
            .max(max_abs(&(&project_out(&out, &v).unwrap() - &out)))
            .max(max_abs(&(&out + &project_onto(&z, &v).unwrap() - &z)));
    }
    checks.push(Check::holds(format!("projection idempotence/complement, max error {worst:.1e}"), worst < 1e-10));

    let mut worst = 0.0f64;
    for s in 0..50u64 {
        let a = gaussian(1, 20, s).into_raw_vec_and_offset().0;
        let b = gaussian(1, 20, s + 77).into_raw_vec_and_offset().0;
        let e = Array1::from(effective_mt_weights(&a, &b));
        let a = Array1::from(a);
        worst = worst.max((e.dot(&a) / (e.dot(&e).sqrt() * a.dot(&a).sqrt())).abs());
    }
    checks.push(Check::holds(format!("joint-fit orthogonality, max |cos| {worst:.1e}"), worst < 1e-9));

    let (train, _) = gen_toy(&ToyConfig {
        n: 200,
        d: 6,
        rho: 0.5,
        seed: 3,
        ..ToyConfig::default()
    })
    .unwrap();
    let batch: Vec<usize> = (0..train.n()).collect();
    let p = joint_param_len(6);
    let (h, mut worst) = (1e-5, 0.0f64);
    for point in 0..20u64 {
        let mut rng = seed::rng(seed::derive(11, &[point]));
        let params: Vec<f64> = (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let (mut g, mut scratch) = (vec![0.0; p], vec![0.0; p]);
        joint_loss_grad(&params, train.z(), train.y_sp(), train.y_mt(), &batch, &mut g);
        let mut num = 0.0;
        for k in 0..p {
            let (mut up, mut down) = (params.clone(), params.clone());
            up[k] += h;
            down[k] -= h;
            let lu = joint_loss_grad(&up, train.z(), train.y_sp(), train.y_mt(), &batch, &mut scratch);
            let ld = joint_loss_grad(&down, train.z(), train.y_sp(), train.y_mt(), &batch, &mut scratch);
            num += ((lu - ld) / (2.0 * h) - g[k]).powi(2);
        }
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-8);
        worst = worst.max(num.sqrt() / norm);
    }
    checks.push(Check::holds(format!("gradient vs finite differences, rel. error {worst:.1e}"), worst <= 1e-4));

    let mut rng = seed::rng(4);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(8..200);
        let groups: Vec<u8> = (0..n).map(|i| if i < 8 { (i % 4) as u8 + 1 } else { rng.random_range(1..=4) }).collect();
        let d: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let w = weighted_diff(&d, &groups).unwrap();
        let (mut m, mut v) = (0.0, 0.0);
        for g in 1..=4u8 {
            let xs: Vec<f64> = d.iter().zip(&groups).filter(|(_, &k)| k == g).map(|(x, _)| *x).collect();
            let k = xs.len() as f64;
            let mu = xs.iter().sum::<f64>() / k;
            m += mu / 4.0;
            v += xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (k - 1.0) / k / 16.0;
        }
        worst = worst.max((w.d_bar_w - m).abs()).max((w.var_hat - v).abs());
    }
    checks.push(Check::holds(format!("weighted_diff brute-force oracle, max error {worst:.1e}"), worst < 1e-12));

    let mut rng = seed::rng(2024);
    let groups: Vec<u8> = (0..1000).map(|i| (i / 250) as u8 + 1).collect();
    let mut ts: Vec<f64> = (0..2000)
        .map(|_| {
            let d: Vec<f64> = (0..1000).map(|_| rng.sample(StandardNormal)).collect();
            let w = weighted_diff(&d, &groups).unwrap();
            t_statistic(w.d_bar_w, w.var_hat, 0.0)
        })
        .collect();
    let p = ks_pvalue(&mut ts);
    checks.push(Check::holds(format!("t calibration KS p-value {p:.3} > 0.01"), p > 0.01));

    let mut rng = seed::rng(77);
    let mut v = Array1::zeros(5);
    v[0] = 1.0;
    let mut rejected = 0;
    for r in 0..1000u64 {
        let train = random_split(&mut rng, 800, 5);
        let val = random_split(&mut rng, 200, 5);
        let fit = fit_1d_logreg(train.z(), &v, train.y_sp(), &OptimizerConfig::default().with_seed(r)).unwrap();
        let random = fit_intercept_only(&train, Target::Sp);
        rejected += usize::from(t_vs_random(&fit.direction, &val, Target::Sp, &random, 0.05, true).unwrap().decision);
    }
    let rate = rejected as f64 / 1000.0;
    checks.push(Check::holds(format!("null rejection rate {rate:.3} in [0.03, 0.07]"), (0.03..=0.07).contains(&rate)));

    let toy = ToyConfig {
        rho: 0.8,
        ..ToyConfig::default()
    };
    let big = sample(&toy, 100_000, 5).unwrap();
    let n = big.n() as f64;
    let (z0, z1) = (big.z().column(0), big.z().column(1));
    let corr = z0.dot(&z1) / n;
    let share = big.y_mt().iter().map(|&y| f64::from(y)).sum::<f64>() / n;
    checks.push(Check::holds(
        format!("generator: corr {corr:.4} (0.8 ± 0.01), class-1 share {share:.4} (0.5 ± 0.01)"),
        (corr - 0.8).abs() <= 0.01 && (share - 0.5).abs() <= 0.01,
    ));

    let mut buf = Vec::new();
    write_embeddings(&train, &mut buf).unwrap();
    let back = read_embeddings(buf.as_slice(), "memory").unwrap();
    let err = max_abs(&(back.z() - train.z()));
    checks.push(Check::holds(
        format!("CSV round trip, max error {err:.1e}"),
        err <= 1e-12 && back.y_mt() == train.y_mt() && back.y_sp() == train.y_sp(),
    ));

    let small = |workers| {
        let cfg = ExperimentConfig {
            methods: vec![Method::Jse, Method::Inlp],
            seeds: 3,
            grid: vec![0.9],
            workers,
            ..ExperimentConfig::default()
        };
        run_sweep(&cfg)
            .unwrap()
            .records
            .into_iter()
            .map(|r| (r.summary, r.d_sp_hat))
            .collect::<Vec<_>>()
    };
    checks.push(Check::holds("determinism of sweeps across worker counts".into(), small(1) == small(2)));

    report(6, "property suite", checks)
}

fn criterion_7() -> bool {
    let cfg = ToyConfig {
        rho: 0.8,
        seed: 21,
        ..ToyConfig::default()
    };
    let (train, val) = gen_toy(&cfg).unwrap();
    let test = gen_toy_test(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut loaded = Vec::new();
    for (name, data) in [("train", &train), ("val", &val), ("test", &test)] {
        let path = dir.path().join(format!("{name}.csv"));
        save_embeddings(&path, data).unwrap();
        loaded.push(load_embeddings(&path).unwrap());
    }
    let down = OptimizerConfig::erm_default().with_seed(8);
    let a = jse_pipeline(&train, &val, &test, &JseConfig::default(), &down).unwrap();
    let b = jse_pipeline(&loaded[0], &loaded[1], &loaded[2], &JseConfig::default(), &down).unwrap();
    let same = a.result.sp_basis == b.result.sp_basis && a.model == b.model && a.summary == b.summary;
    report(
        7,
        "file ingestion",
        vec![Check::holds(
            format!("file pipeline equals in-memory pipeline (average {:.2})", b.summary.average),
            same,
        )],
    )
}

fn main() -> ExitCode {
    let main = sweep(ToyConfig::default(), &Method::ALL, SweepAxis::Rho, rho_grid(), JseConfig::default());
    let results = [
        criterion_1(&main),
        criterion_2(&main),
        criterion_3(),
        criterion_4(),
        criterion_5(&main),
        criterion_6(),
        criterion_7(),
    ];
    let passed = results.iter().filter(|&&ok| ok).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
