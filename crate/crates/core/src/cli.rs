//! Command-line front end.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::load_experiment_config;
use crate::error::{Error, Result};
use crate::eval::{
    aggregate, fit_method, read_results_csv, report_tables, run_sweep, write_plot_tsv,
    write_results_csv, ExperimentConfig, Method,
};
use crate::io::{load_embeddings, pca_apply_to, pca_fit, save_embeddings, Artifact, PcaModel};
use crate::toy::{gen_toy, gen_toy_test, ToyConfig};

#[derive(Debug, Parser)]
#[command(name = "jse", version, about = "Spurious-concept removal for fixed embeddings")]
pub struct Cli {
    /// Base random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Configuration file (sectioned `key = value`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write train/val/test splits of the synthetic benchmark.
    GenToy(GenToyArgs),
    /// Fit a method on embedding files and write an artifact.
    Fit(FitArgs),
    /// Apply an artifact's transform to an embedding file.
    Transform(TransformArgs),
    /// Evaluate an artifact's classifier on a test file (JSON lines).
    Eval(EvalArgs),
    /// Run a configured sweep and write results CSV and plot TSV.
    Sweep(SweepArgs),
    /// Print per-cell tables from a results CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenToyArgs {
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub gamma_sp: Option<f64>,
    #[arg(long)]
    pub gamma_mt: Option<f64>,
    #[arg(long)]
    pub angle: Option<f64>,
    #[arg(long)]
    pub test_n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub method: String,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    /// Reduce to this many principal components (fitted on train).
    #[arg(long, conflicts_with = "demean_only")]
    pub pca: Option<usize>,
    /// Subtract the training mean without reducing dimension.
    #[arg(long)]
    pub demean_only: bool,
    /// Artifact path (default: <out>/artifact.json).
    #[arg(long)]
    pub artifact: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Output file (default: <out>/transformed.csv).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Override the number of seeds per cell.
    #[arg(long)]
    pub seeds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub results: PathBuf,
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli, &mut std::io::stdout()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn experiment_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => load_experiment_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.base_seed = s;
        cfg.toy.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Executes a parsed command, writing human-facing output to `stdout`.
pub fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let cfg = experiment_config(&cli)?;
    match &cli.command {
        Command::GenToy(a) => {
            let toy = ToyConfig {
                rho: a.rho.unwrap_or(cfg.toy.rho),
                n: a.n.unwrap_or(cfg.toy.n),
                d: a.d.unwrap_or(cfg.toy.d),
                gamma_sp: a.gamma_sp.unwrap_or(cfg.toy.gamma_sp),
                gamma_mt: a.gamma_mt.unwrap_or(cfg.toy.gamma_mt),
                angle_deg: a.angle.unwrap_or(cfg.toy.angle_deg),
                test_n: a.test_n.unwrap_or(cfg.toy.test_n),
                ..cfg.toy.clone()
            };
            let (train, val) = gen_toy(&toy)?;
            let test = gen_toy_test(&toy)?;
            let dir = out_dir(&cli)?;
            for (name, data) in [("train", &train), ("val", &val), ("test", &test)] {
                let path = dir.join(format!("{name}.csv"));
                save_embeddings(&path, data)?;
                writeln!(stdout, "wrote {} ({} rows)", path.display(), data.n())?;
            }
        }
        Command::Fit(a) => {
            let method: Method = a.method.parse()?;
            let mut train = load_embeddings(&a.train)?;
            let mut val = load_embeddings(&a.val)?;
            let preprocess = if let Some(k) = a.pca {
                Some(pca_fit(train.z(), k)?)
            } else if a.demean_only {
                Some(PcaModel::demean_only(train.z())?)
            } else {
                None
            };
            if let Some(p) = &preprocess {
                train = pca_apply_to(&train, p)?;
                val = pca_apply_to(&val, p)?;
            }
            let fitted = fit_method(method, &train, &val, &cfg.configs, cfg.base_seed)?;
            let artifact = Artifact::from_fitted(&fitted, preprocess);
            let path = match &a.artifact {
                Some(p) => p.clone(),
                None => out_dir(&cli)?.join("artifact.json"),
            };
            artifact.save(&path)?;
            let line = serde_json::json!({
                "schema_version": crate::io::ARTIFACT_SCHEMA_VERSION,
                "method": method.name(),
                "artifact": path.display().to_string(),
                "d_sp_hat": fitted.d_sp_hat,
                "d_mt_hat": fitted.d_mt_hat,
            });
            writeln!(stdout, "{line}")?;
        }
        Command::Transform(a) => {
            let artifact = Artifact::load(&a.artifact)?;
            let data = load_embeddings(&a.input)?;
            let out = artifact.apply(&data)?;
            let path = match &a.output {
                Some(p) => p.clone(),
                None => out_dir(&cli)?.join("transformed.csv"),
            };
            save_embeddings(&path, &out)?;
            writeln!(stdout, "wrote {} ({} rows)", path.display(), out.n())?;
        }
        Command::Eval(a) => {
            let artifact = Artifact::load(&a.artifact)?;
            let test = artifact.apply(&load_embeddings(&a.test)?)?;
            let summary = crate::eval::evaluate(&artifact.model, &test, None)?;
            let line = serde_json::json!({
                "schema_version": crate::eval::RESULTS_SCHEMA_VERSION,
                "method": artifact.method.name(),
                "test": a.test.display().to_string(),
                "summary": summary,
            });
            writeln!(stdout, "{line}")?;
            if let Some(dir) = &cli.out {
                fs::create_dir_all(dir)?;
                let mut f = fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(dir.join("eval.jsonl"))?;
                writeln!(f, "{line}")?;
            }
        }
        Command::Sweep(a) => {
            let mut cfg = cfg;
            if let Some(s) = a.seeds {
                cfg.seeds = s;
            }
            let result = run_sweep(&cfg)?;
            let dir = out_dir(&cli)?;
            let results = dir.join("results.csv");
            let plot = dir.join("plot.tsv");
            write_results_csv(&result.records, File::create(&results)?)?;
            write_plot_tsv(&result.aggregates, File::create(&plot)?)?;
            let failed = result.records.iter().filter(|r| r.error.is_some()).count();
            writeln!(
                stdout,
                "wrote {} ({} runs, {failed} failed) and {}",
                results.display(),
                result.records.len(),
                plot.display()
            )?;
        }
        Command::Report(a) => {
            let records = read_results_csv(File::open(&a.results)?)?;
            let x_name = records.first().map(|r| r.x_name.clone()).unwrap_or_default();
            write!(stdout, "{}", report_tables(&aggregate(&records), &x_name))?;
        }
    }
    Ok(())
}

/// Convenience for tests and bindings: the three split paths written by
/// `gen-toy` under `dir`.
pub fn split_paths(dir: &Path) -> [PathBuf; 3] {
    ["train", "val", "test"].map(|s| dir.join(format!("{s}.csv")))
}

impl From<clap::Error> for Error {
    fn from(e: clap::Error) -> Self {
        Error::InvalidConfig(e.to_string())
    }
}
