//! Group accuracies, per-seed experiment runs and sweeps with aggregation.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{erm_fit, gw_erm_fit, inlp_fit, rlace_fit, InlpConfig, RlaceConfig};
use crate::error::{Error, Result};
use crate::jse::{jse_fit, transform_for, JseConfig};
use crate::optim::{fit_logreg, BalanceSampling, LinearModel, OptimizerConfig};
use crate::seed;
use crate::toy::{gen_toy, gen_toy_test, ToyConfig};
use crate::types::{EmbeddingTransform, LabeledEmbeddings, Target};

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

/// Fraction of successful seeds needed before a cell is aggregated.
pub const MIN_SUCCESS_RATE: f64 = 0.9;

/// Accuracies in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub group_acc: [f64; 4],
    pub worst_group: f64,
    pub average: f64,
    pub macro_average: f64,
    pub n_per_group: [usize; 4],
}

/// Accuracy at threshold 0.5, overall and per group.
pub fn evaluate(
    model: &LinearModel,
    test: &LabeledEmbeddings,
    transform: Option<&EmbeddingTransform>,
) -> Result<EvalSummary> {
    let z = match transform {
        Some(t) => t.apply(test.z())?,
        None => test.z().clone(),
    };
    if model.dim() != z.ncols() {
        return Err(Error::DimensionMismatch {
            expected: z.ncols(),
            got: model.dim(),
        });
    }
    let pred = model.predict(&z);
    summarize(&pred, test.y_mt(), test.groups())
}

/// Summary from hard predictions of the main-task label.
pub fn summarize(pred: &[u8], y: &[u8], groups: &[u8]) -> Result<EvalSummary> {
    let mut hits = [0usize; 4];
    let mut counts = [0usize; 4];
    for ((&p, &t), &g) in pred.iter().zip(y).zip(groups) {
        let k = usize::from(g - 1);
        counts[k] += 1;
        hits[k] += usize::from(p == t);
    }
    if let Some(g) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyGroup {
            group: g as u8 + 1,
            count: 0,
            min: 1,
        });
    }
    let group_acc: [f64; 4] = std::array::from_fn(|k| 100.0 * hits[k] as f64 / counts[k] as f64);
    let n: usize = counts.iter().sum();
    Ok(EvalSummary {
        group_acc,
        worst_group: group_acc.iter().copied().fold(f64::INFINITY, f64::min),
        average: 100.0 * hits.iter().sum::<usize>() as f64 / n as f64,
        macro_average: group_acc.iter().sum::<f64>() / 4.0,
        n_per_group: counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Jse,
    Erm,
    GwErm,
    Inlp,
    Rlace,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Jse, Method::Erm, Method::GwErm, Method::Inlp, Method::Rlace];

    pub fn name(self) -> &'static str {
        match self {
            Method::Jse => "jse",
            Method::Erm => "erm",
            Method::GwErm => "gw-erm",
            Method::Inlp => "inlp",
            Method::Rlace => "rlace",
        }
    }

    fn stream(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown method '{s}' (expected jse, erm, gw-erm, inlp or rlace)"
                ))
            })
    }
}

/// Per-method settings shared by every run of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MethodConfigs {
    pub jse: JseConfig,
    pub inlp: InlpConfig,
    pub rlace: RlaceConfig,
    /// ERM, GW-ERM and the classifier trained after any removal.
    pub downstream: OptimizerConfig,
}

/// A fitted method: an embedding transform followed by a linear classifier.
#[derive(Debug, Clone)]
pub struct FittedMethod {
    pub method: Method,
    pub transform: EmbeddingTransform,
    pub model: LinearModel,
    pub d_sp_hat: Option<usize>,
    pub d_mt_hat: Option<usize>,
    pub jse: Option<crate::types::SubspaceResult>,
}

impl FittedMethod {
    pub fn evaluate(&self, test: &LabeledEmbeddings) -> Result<EvalSummary> {
        evaluate(&self.model, test, Some(&self.transform))
    }
}

fn downstream_fit(
    train: &LabeledEmbeddings,
    val: &LabeledEmbeddings,
    t: &EmbeddingTransform,
    cfg: &OptimizerConfig,
) -> Result<LinearModel> {
    let opt = OptimizerConfig {
        balance_sampling: BalanceSampling::ClassBalanced,
        ..cfg.clone()
    };
    Ok(fit_logreg(&t.apply_to(train)?, Target::Mt, &t.apply_to(val)?, &opt)?.model)
}

/// Fits one method. All optimizer seeds are derived from `run_seed`.
pub fn fit_method(
    method: Method,
    train: &LabeledEmbeddings,
    val: &LabeledEmbeddings,
    cfgs: &MethodConfigs,
    run_seed: u64,
) -> Result<FittedMethod> {
    let s = seed::derive(run_seed, &[method.stream()]);
    let down = cfgs.downstream.with_seed(seed::derive(s, &[0]));
    let fitted = |transform, model, d_sp_hat, d_mt_hat, jse| FittedMethod {
        method,
        transform,
        model,
        d_sp_hat,
        d_mt_hat,
        jse,
    };
    Ok(match method {
        Method::Erm => fitted(EmbeddingTransform::Identity, erm_fit(train, val, &down)?, None, None, None),
        Method::GwErm => {
            fitted(EmbeddingTransform::Identity, gw_erm_fit(train, val, &down)?, None, None, None)
        }
        Method::Jse => {
            let mut cfg = cfgs.jse.clone();
            cfg.optimizer.seed = seed::derive(s, &[1]);
            let r = jse_fit(train, val, &cfg)?;
            let t = transform_for(&r, cfg.transform_mode);
            let model = downstream_fit(train, val, &t, &down)?;
            fitted(t, model, Some(r.d_sp()), Some(r.d_mt()), Some(r))
        }
        Method::Inlp => {
            let mut cfg = cfgs.inlp.clone();
            cfg.optimizer.seed = seed::derive(s, &[1]);
            let r = inlp_fit(train, val, &cfg)?;
            let k = r.basis.rank();
            let t = EmbeddingTransform::Remove(r.basis);
            let model = downstream_fit(train, val, &t, &down)?;
            fitted(t, model, Some(k), None, None)
        }
        Method::Rlace => {
            let mut cfg = cfgs.rlace.clone();
            cfg.optimizer.seed = seed::derive(s, &[1]);
            let r = rlace_fit(train, val, &cfg)?;
            let k = r.basis.rank();
            let t = EmbeddingTransform::Remove(r.basis);
            let model = downstream_fit(train, val, &t, &down)?;
            fitted(t, model, Some(k), None, None)
        }
    })
}

/// The quantity varied across the cells of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    #[default]
    Rho,
    N,
    AngleDeg,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Rho => "rho",
            SweepAxis::N => "n",
            SweepAxis::AngleDeg => "angle_deg",
        }
    }

    /// Data configuration of one cell.
    pub fn apply(self, base: &ToyConfig, x: f64) -> ToyConfig {
        let mut c = base.clone();
        match self {
            SweepAxis::Rho => c.rho = x,
            SweepAxis::N => {
                c.n = x.round() as usize;
                c.test_n = c.n;
            }
            SweepAxis::AngleDeg => c.angle_deg = x,
        }
        c
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rho" => Ok(SweepAxis::Rho),
            "n" => Ok(SweepAxis::N),
            "angle" | "angle_deg" => Ok(SweepAxis::AngleDeg),
            other => Err(Error::InvalidConfig(format!("unknown sweep axis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub toy: ToyConfig,
    pub methods: Vec<Method>,
    pub seeds: usize,
    pub base_seed: u64,
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    pub workers: usize,
    pub configs: MethodConfigs,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            toy: ToyConfig::default(),
            methods: vec![Method::Jse, Method::Erm, Method::Inlp, Method::Rlace],
            seeds: 100,
            base_seed: 0,
            axis: SweepAxis::Rho,
            grid: (0..10).map(|i| f64::from(i) / 10.0).collect(),
            workers: 0,
            configs: MethodConfigs::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("method list is empty".into()));
        }
        if self.seeds == 0 {
            return Err(Error::InvalidConfig("seeds must be positive".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidConfig("grid is empty".into()));
        }
        for &x in &self.grid {
            self.axis.apply(&self.toy, x).validate()?;
        }
        Ok(())
    }
}

/// Outcome of one (method, cell, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub method: Method,
    pub x_name: String,
    pub x_value: f64,
    pub seed: usize,
    pub summary: Option<EvalSummary>,
    pub d_sp_hat: Option<usize>,
    pub d_mt_hat: Option<usize>,
    pub runtime_ms: u64,
    pub error: Option<String>,
}

/// Seed of replicate `rep` in cell `cell`.
pub fn run_seed(base_seed: u64, cell: usize, rep: usize) -> u64 {
    seed::derive(seed::derive(base_seed, &[cell as u64]), &[rep as u64])
}

/// Generates the data of one replicate and runs every method on it.
pub fn run_replicate(
    cfg: &ExperimentConfig,
    cell: usize,
    x: f64,
    rep: usize,
) -> Vec<RunRecord> {
    let s = run_seed(cfg.base_seed, cell, rep);
    let data_cfg = ToyConfig {
        seed: s,
        ..cfg.axis.apply(&cfg.toy, x)
    };
    let data = gen_toy(&data_cfg).and_then(|(tr, va)| Ok((tr, va, gen_toy_test(&data_cfg)?)));
    cfg.methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let outcome = data.as_ref().map_err(|e| e.to_string()).and_then(|(tr, va, te)| {
                let f = fit_method(method, tr, va, &cfg.configs, s).map_err(|e| e.to_string())?;
                let summary = f.evaluate(te).map_err(|e| e.to_string())?;
                Ok((f.d_sp_hat, f.d_mt_hat, summary))
            });
            let runtime_ms = start.elapsed().as_millis() as u64;
            let base = RunRecord {
                method,
                x_name: cfg.axis.name().to_string(),
                x_value: x,
                seed: rep,
                summary: None,
                d_sp_hat: None,
                d_mt_hat: None,
                runtime_ms,
                error: None,
            };
            match outcome {
                Ok((d_sp_hat, d_mt_hat, summary)) => RunRecord {
                    summary: Some(summary),
                    d_sp_hat,
                    d_mt_hat,
                    ..base
                },
                Err(e) => {
                    log::warn!("{method} at {}={x} seed {rep}: {e}", cfg.axis.name());
                    RunRecord {
                        error: Some(e),
                        ..base
                    }
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Average,
    WorstGroup,
    MacroAverage,
    AccG1,
    AccG2,
    AccG3,
    AccG4,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Average,
        Metric::WorstGroup,
        Metric::MacroAverage,
        Metric::AccG1,
        Metric::AccG2,
        Metric::AccG3,
        Metric::AccG4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Average => "average",
            Metric::WorstGroup => "worst_group",
            Metric::MacroAverage => "macro_average",
            Metric::AccG1 => "acc_g1",
            Metric::AccG2 => "acc_g2",
            Metric::AccG3 => "acc_g3",
            Metric::AccG4 => "acc_g4",
        }
    }

    pub fn of(self, s: &EvalSummary) -> f64 {
        match self {
            Metric::Average => s.average,
            Metric::WorstGroup => s.worst_group,
            Metric::MacroAverage => s.macro_average,
            Metric::AccG1 => s.group_acc[0],
            Metric::AccG2 => s.group_acc[1],
            Metric::AccG3 => s.group_acc[2],
            Metric::AccG4 => s.group_acc[3],
        }
    }
}

/// Mean over seeds with standard error `sd / sqrt(n)` and a normal 95%
/// half-width `1.96 * SE`. Both are absent for a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub x_value: f64,
    pub metric: Metric,
    pub mean: f64,
    pub se: Option<f64>,
    pub ci_half_width: Option<f64>,
    pub n_ok: usize,
    pub n_total: usize,
}

pub fn mean_se(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

/// Aggregates every (method, x) cell with enough successful seeds.
pub fn aggregate(records: &[RunRecord]) -> Vec<Aggregate> {
    let mut keys: Vec<(Method, f64)> = Vec::new();
    for r in records {
        if !keys.iter().any(|&(m, x)| m == r.method && x == r.x_value) {
            keys.push((r.method, r.x_value));
        }
    }
    keys.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut out = Vec::new();
    for (method, x) in keys {
        let cell: Vec<&RunRecord> = records
            .iter()
            .filter(|r| r.method == method && r.x_value == x)
            .collect();
        let ok: Vec<&EvalSummary> = cell.iter().filter_map(|r| r.summary.as_ref()).collect();
        if ok.is_empty() || (ok.len() as f64) < MIN_SUCCESS_RATE * cell.len() as f64 {
            log::warn!("{method} at x={x}: only {}/{} runs succeeded", ok.len(), cell.len());
            continue;
        }
        for metric in Metric::ALL {
            let values: Vec<f64> = ok.iter().map(|s| metric.of(s)).collect();
            let (mean, se) = mean_se(&values);
            out.push(Aggregate {
                method,
                x_value: x,
                metric,
                mean,
                se,
                ci_half_width: se.map(|s| 1.96 * s),
                n_ok: ok.len(),
                n_total: cell.len(),
            });
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl SweepResult {
    pub fn from_records(records: Vec<RunRecord>) -> Self {
        let aggregates = aggregate(&records);
        Self {
            records,
            aggregates,
        }
    }

    pub fn get(&self, method: Method, x: f64, metric: Metric) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.x_value == x && a.metric == metric)
    }

    /// Runs of one (method, x) cell.
    pub fn records_for(&self, method: Method, x: f64) -> impl Iterator<Item = &RunRecord> {
        self.records
            .iter()
            .filter(move |r| r.method == method && r.x_value == x)
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

/// All seeds of a single cell (grid position `cell` with value `x`).
pub fn run_experiment(cfg: &ExperimentConfig, cell: usize, x: f64) -> Result<SweepResult> {
    cfg.validate()?;
    let records = pool(cfg.workers)?.install(|| {
        (0..cfg.seeds)
            .into_par_iter()
            .flat_map_iter(|rep| run_replicate(cfg, cell, x, rep))
            .collect::<Vec<_>>()
    });
    Ok(SweepResult::from_records(records))
}

/// Every cell of the grid crossed with every seed.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let jobs: Vec<(usize, f64, usize)> = cfg
        .grid
        .iter()
        .enumerate()
        .flat_map(|(c, &x)| (0..cfg.seeds).map(move |s| (c, x, s)))
        .collect();
    let records = pool(cfg.workers)?.install(|| {
        jobs.par_iter()
            .flat_map_iter(|&(c, x, s)| run_replicate(cfg, c, x, s))
            .collect::<Vec<_>>()
    });
    Ok(SweepResult::from_records(records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub schema_version: u32,
    pub method: String,
    pub x_name: String,
    pub x_value: f64,
    pub seed: usize,
    pub acc_g1: Option<f64>,
    pub acc_g2: Option<f64>,
    pub acc_g3: Option<f64>,
    pub acc_g4: Option<f64>,
    pub worst_group: Option<f64>,
    pub average: Option<f64>,
    pub macro_average: Option<f64>,
    pub d_sp_hat: Option<usize>,
    pub d_mt_hat: Option<usize>,
    pub runtime_ms: u64,
    pub error: String,
}

impl From<&RunRecord> for ResultRow {
    fn from(r: &RunRecord) -> Self {
        let s = r.summary.as_ref();
        let g = |k: usize| s.map(|s| s.group_acc[k]);
        Self {
            schema_version: RESULTS_SCHEMA_VERSION,
            method: r.method.name().to_string(),
            x_name: r.x_name.clone(),
            x_value: r.x_value,
            seed: r.seed,
            acc_g1: g(0),
            acc_g2: g(1),
            acc_g3: g(2),
            acc_g4: g(3),
            worst_group: s.map(|s| s.worst_group),
            average: s.map(|s| s.average),
            macro_average: s.map(|s| s.macro_average),
            d_sp_hat: r.d_sp_hat,
            d_mt_hat: r.d_mt_hat,
            runtime_ms: r.runtime_ms,
            error: r.error.clone().unwrap_or_default(),
        }
    }
}

impl ResultRow {
    pub fn to_record(&self) -> Result<RunRecord> {
        let summary = match (
            self.acc_g1,
            self.acc_g2,
            self.acc_g3,
            self.acc_g4,
            self.worst_group,
            self.average,
            self.macro_average,
        ) {
            (Some(a), Some(b), Some(c), Some(d), Some(w), Some(avg), Some(m)) => Some(EvalSummary {
                group_acc: [a, b, c, d],
                worst_group: w,
                average: avg,
                macro_average: m,
                n_per_group: [0; 4],
            }),
            _ => None,
        };
        Ok(RunRecord {
            method: self.method.parse()?,
            x_name: self.x_name.clone(),
            x_value: self.x_value,
            seed: self.seed,
            summary,
            d_sp_hat: self.d_sp_hat,
            d_mt_hat: self.d_mt_hat,
            runtime_ms: self.runtime_ms,
            error: (!self.error.is_empty()).then(|| self.error.clone()),
        })
    }
}

pub fn write_results_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(ResultRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results_csv<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    rd.deserialize::<ResultRow>()
        .map(|row| row?.to_record())
        .collect()
}

/// Long-form plot data: `x, method, mean, ci_low, ci_high, metric`.
pub fn write_plot_tsv<W: Write>(aggs: &[Aggregate], mut out: W) -> Result<()> {
    writeln!(out, "x\tmethod\tmean\tci_low\tci_high\tmetric")?;
    for a in aggs {
        let h = a.ci_half_width.unwrap_or(0.0);
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            a.x_value,
            a.method,
            a.mean,
            a.mean - h,
            a.mean + h,
            a.metric.name()
        )?;
    }
    Ok(())
}

/// Text tables with one block per x value: rows are metrics, columns are
/// methods, cells read `mean (SE)`.
pub fn report_tables(aggs: &[Aggregate], x_name: &str) -> String {
    let mut xs: Vec<f64> = aggs.iter().map(|a| a.x_value).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut methods: Vec<Method> = aggs.iter().map(|a| a.method).collect();
    methods.sort();
    methods.dedup();

    let mut s = String::new();
    for x in xs {
        s.push_str(&format!("{x_name} = {x}\n"));
        s.push_str(&format!("{:<14}", "metric"));
        for m in &methods {
            s.push_str(&format!("{:>18}", m.name()));
        }
        s.push('\n');
        for metric in Metric::ALL {
            s.push_str(&format!("{:<14}", metric.name()));
            for &m in &methods {
                let cell = aggs
                    .iter()
                    .find(|a| a.method == m && a.x_value == x && a.metric == metric);
                let text = match cell {
                    Some(a) => match a.se {
                        Some(se) => format!("{:.2} ({:.2})", a.mean, se),
                        None => format!("{:.2} (-)", a.mean),
                    },
                    None => "-".to_string(),
                };
                s.push_str(&format!("{text:>18}"));
            }
            s.push('\n');
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn four_groups() -> LabeledEmbeddings {
        // groups 1..4 with 1, 2, 3, 4 members
        let y_mt = vec![0, 0, 0, 1, 1, 1, 1, 1, 1, 1];
        let y_sp = vec![0, 1, 1, 0, 0, 0, 1, 1, 1, 1];
        LabeledEmbeddings::new(Array2::zeros((10, 1)), y_mt, y_sp).unwrap()
    }

    #[test]
    fn oracle_predictor_scores_100() {
        let data = four_groups();
        let s = summarize(data.y_mt(), data.y_mt(), data.groups()).unwrap();
        assert_eq!(s.group_acc, [100.0; 4]);
        assert_eq!(s.worst_group, 100.0);
        assert_eq!(s.average, 100.0);
    }

    #[test]
    fn constant_class_one_predictor() {
        let data = four_groups();
        let m = LinearModel { w: vec![0.0], b: 5.0 };
        let s = evaluate(&m, &data, None).unwrap();
        assert_eq!(s.group_acc, [0.0, 0.0, 100.0, 100.0]);
        assert_eq!(s.worst_group, 0.0);
        assert!((s.average - 70.0).abs() < 1e-12);
        assert!((s.macro_average - 50.0).abs() < 1e-12);
        assert_eq!(s.n_per_group, [1, 2, 3, 4]);
    }

    #[test]
    fn empty_group_is_an_error() {
        let data = LabeledEmbeddings::new(Array2::zeros((2, 1)), vec![0, 1], vec![0, 1]).unwrap();
        let m = LinearModel { w: vec![0.0], b: 0.0 };
        assert!(matches!(evaluate(&m, &data, None), Err(Error::EmptyGroup { .. })));
    }

    #[test]
    fn single_seed_has_no_se() {
        let (mean, se) = mean_se(&[80.0]);
        assert_eq!(mean, 80.0);
        assert!(se.is_none());
        let (mean, se) = mean_se(&[80.0, 82.0]);
        assert_eq!(mean, 81.0);
        assert!((se.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("adv".parse::<Method>().is_err());
    }

    #[test]
    fn empty_method_list_is_rejected() {
        let cfg = ExperimentConfig {
            methods: vec![],
            ..ExperimentConfig::default()
        };
        assert!(matches!(run_sweep(&cfg), Err(Error::InvalidConfig(_))));
    }
}
