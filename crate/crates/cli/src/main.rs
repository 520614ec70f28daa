//! `dplr` command-line harness.
//!
//! Every subcommand starts from the defaults of [`ExperimentConfig`], applies
//! the JSON file given with `--config` (if any), then the flag overrides.
//! Failures print a one-line JSON error record on stderr and exit with
//! status 1, or 2 for command-line usage errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use dplr::data::{generate_synthetic, load_csv, save_csv};
use dplr::experiments::{
    export_decision_boundary, export_loss_trace, prepare_trial, run_epsilon_sweep, run_sigma_sweep,
    train_single, DataSource, Epsilon, ExperimentConfig, NoiseLevel, RunRecord, STREAM_PRIVATE,
    STREAM_PUBLIC,
};
use dplr::{Accounting, ClipThreshold, ClippingMode, RngState};

#[derive(Parser)]
#[command(
    name = "dplr",
    version,
    about = "Differentially private logistic regression experiments"
)]
struct Cli {
    /// JSON experiment configuration; omitted fields keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    /// Training iterations T of the private phase [default: 100]
    #[arg(long, global = true)]
    iterations: Option<usize>,
    /// Learning rate of the private phase [default: 0.5]
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Clip threshold C, or "disabled" [default: 1]
    #[arg(long, global = true)]
    clip: Option<ClipThreshold>,
    /// Where clipping is applied [default: per-example-mean]
    #[arg(long, global = true, value_enum)]
    clipping_mode: Option<ModeArg>,
    /// How the run-level budget is split over iterations [default: basic]
    #[arg(long, global = true, value_enum)]
    accounting: Option<AccountingArg>,
    /// Run-level delta [default: 1e-5]
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Classification threshold [default: 0.5]
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Comma-separated seeds [default: 1..=20]
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated epsilon grid; "inf" is the no-privacy sentinel
    /// [default: 0.01,0.05,0.1,0.5,1,5,10,15,inf]
    #[arg(long = "eps", global = true, value_delimiter = ',')]
    epsilon_grid: Option<Vec<Epsilon>>,
    /// Comma-separated sigma grid [default: 0,0.05,0.1,0.2,0.5,1,2,5]
    #[arg(long, global = true, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    /// Skip the public pre-training phase in `train` and `sweep-sigma`
    #[arg(long, global = true)]
    no_pretrain: bool,
    /// Iterations of public pre-training [default: 100]
    #[arg(long, global = true)]
    pretrain_iterations: Option<usize>,
    /// Learning rate of public pre-training [default: 0.5]
    #[arg(long, global = true)]
    pretrain_alpha: Option<f64>,
    /// Report accuracy on a held-out fraction instead of the training rows
    #[arg(long, global = true)]
    test_fraction: Option<f64>,
    /// Output directory [default: results]
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Private dataset CSV (switches from synthetic data to files)
    #[arg(long, global = true)]
    private: Option<PathBuf>,
    /// Public dataset CSV used for pre-training
    #[arg(long, global = true, requires = "private")]
    public: Option<PathBuf>,
    /// Z-score file-based datasets
    #[arg(long, global = true)]
    standardize: bool,
    /// Synthetic blob spread [default: 2.2]
    #[arg(long, global = true)]
    spread: Option<f64>,
    /// Synthetic rows per dataset [default: 400]
    #[arg(long, global = true)]
    n_samples: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Aggregate,
    PerExampleMean,
}

#[derive(Clone, Copy, ValueEnum)]
enum AccountingArg {
    Basic,
    PerIteration,
}

#[derive(Subcommand)]
enum Command {
    /// Write the private and public synthetic datasets for one seed.
    GenData {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Train one model and write its run record (parameters, traces, metadata).
    Train {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Run-level epsilon, or "inf" for no noise [default: 1]
        #[arg(long, conflicts_with = "sigma")]
        epsilon: Option<Epsilon>,
        /// Explicit noise scale, bypassing calibration
        #[arg(long)]
        sigma: Option<f64>,
        /// Run record path [default: <output-dir>/run.json]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy with and without pre-training across the epsilon grid (sweep.csv).
    SweepEps,
    /// Accuracy across explicit noise scales (sigma_sweep.csv).
    SweepSigma,
    /// Write trace_<tag>.csv from a run record.
    ExportTrace {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "run")]
        tag: String,
    },
    /// Write boundary.csv and grid.csv from a run record.
    ExportBoundary {
        #[arg(long)]
        run: PathBuf,
        /// Dataset for the bounding box [default: the run's training data]
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        resolution: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if !err.use_stderr() => err.exit(),
        Err(err) => {
            let message = err.render().to_string();
            let first = message
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ");
            report("usage", first);
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            report(
                err.downcast_ref::<dplr::Error>()
                    .map_or("error", dplr::Error::kind),
                &format!("{err:#}"),
            );
            ExitCode::FAILURE
        }
    }
}

/// One-line JSON error record on stderr.
fn report(kind: &str, message: &str) {
    eprintln!(
        "{}",
        json!({ "error": { "kind": kind, "message": message } })
    );
}

fn load_config(path: Option<&Path>, o: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::from_json_file(p)
            .with_context(|| format!("reading config {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = o.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = o.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = o.clip {
        cfg.clip = v;
    }
    if let Some(v) = o.clipping_mode {
        cfg.clipping_mode = match v {
            ModeArg::Aggregate => ClippingMode::Aggregate,
            ModeArg::PerExampleMean => ClippingMode::PerExampleMean,
        };
    }
    if let Some(v) = o.accounting {
        cfg.accounting = match v {
            AccountingArg::Basic => Accounting::Basic,
            AccountingArg::PerIteration => Accounting::PerIteration,
        };
    }
    if let Some(v) = o.delta {
        cfg.delta = v;
    }
    if let Some(v) = o.threshold {
        cfg.threshold = v;
    }
    if let Some(v) = &o.seeds {
        cfg.seeds = v.clone();
    }
    if let Some(v) = &o.epsilon_grid {
        cfg.epsilon_grid = v.clone();
    }
    if let Some(v) = &o.sigmas {
        cfg.sigma_grid = v.clone();
    }
    if o.no_pretrain {
        cfg.pretrain = false;
    }
    if let Some(v) = o.pretrain_iterations {
        cfg.pretrain_iterations = v;
    }
    if let Some(v) = o.pretrain_alpha {
        cfg.pretrain_alpha = v;
    }
    if let Some(v) = o.test_fraction {
        cfg.test_fraction = Some(v);
    }
    if let Some(v) = &o.output_dir {
        cfg.output_dir = v.clone();
    }
    if let Some(p) = &o.private {
        cfg.data = DataSource::Files {
            private: p.clone(),
            public: o.public.clone(),
        };
    }
    if o.standardize {
        cfg.standardize = true;
    }
    if o.spread.is_some() || o.n_samples.is_some() {
        let DataSource::Synthetic(spec) = &mut cfg.data else {
            bail!("--spread and --n-samples only apply to synthetic data");
        };
        if let Some(v) = o.spread {
            spec.spread = v;
        }
        if let Some(v) = o.n_samples {
            spec.n_samples = v;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::GenData { seed } => gen_data(&cfg, seed),
        Command::Train {
            seed,
            epsilon,
            sigma,
            out,
        } => {
            let level = match (epsilon, sigma) {
                (_, Some(s)) => NoiseLevel::Sigma(s),
                (Some(e), None) => NoiseLevel::Epsilon(e),
                (None, None) => NoiseLevel::Epsilon(Epsilon::Finite(1.0)),
            };
            let (record, _) = train_single(&cfg, seed, level)?;
            let path = out.unwrap_or_else(|| cfg.output_dir.join("run.json"));
            record.save(&path)?;
            println!(
                "{}",
                json!({
                    "run": path,
                    "sigma": record.budget.sigma(),
                    "accuracy": record.accuracy,
                    "accuracy_on": record.accuracy_on,
                    "guarantee": record.guarantee,
                })
            );
            Ok(())
        }
        Command::SweepEps => {
            let rows = run_epsilon_sweep(&cfg)?;
            println!(
                "{:>8} {:>10} {:>10} {:>12} {:>7}",
                "epsilon", "plain", "pretrain", "enhancement", "seeds"
            );
            for r in rows {
                println!(
                    "{:>8} {:>10.4} {:>10.4} {:>12.4} {:>7}",
                    r.epsilon.to_string(),
                    r.mean_accuracy_no_pretrain,
                    r.mean_accuracy_pretrain,
                    r.enhancement,
                    r.n_seeds
                );
            }
            println!("wrote {}", cfg.output_dir.join("sweep.csv").display());
            Ok(())
        }
        Command::SweepSigma => {
            let rows = run_sigma_sweep(&cfg)?;
            println!(
                "{:>10} {:>10} {:>8} {:>7}",
                "sigma", "accuracy", "se", "seeds"
            );
            for r in rows {
                println!(
                    "{:>10} {:>10.4} {:>8.4} {:>7}",
                    r.sigma, r.mean_accuracy, r.se, r.n_seeds
                );
            }
            println!("wrote {}", cfg.output_dir.join("sigma_sweep.csv").display());
            Ok(())
        }
        Command::ExportTrace { run, tag } => {
            let record =
                RunRecord::load(&run).with_context(|| format!("reading run {}", run.display()))?;
            let provenance = run_provenance(&record, &run);
            let path = export_loss_trace(&record.trace, &tag, &cfg.output_dir, &provenance)?;
            println!("wrote {}", path.display());
            if let Some(pre) = &record.pretrain_trace {
                let path = export_loss_trace(
                    pre,
                    &format!("{tag}_pretrain"),
                    &cfg.output_dir,
                    &provenance,
                )?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::ExportBoundary {
            run,
            data,
            resolution,
        } => {
            let record =
                RunRecord::load(&run).with_context(|| format!("reading run {}", run.display()))?;
            let dataset = match data {
                Some(p) => load_csv(&p)?,
                None => {
                    let loaded = dplr::experiments::load_data(&record.config)?;
                    prepare_trial(&record.config, loaded.as_ref(), record.seed, false)?.train
                }
            };
            let provenance = run_provenance(&record, &run);
            export_decision_boundary(
                &record.params,
                &dataset,
                resolution,
                record.config.threshold,
                &cfg.output_dir,
                &provenance,
            )?;
            println!("wrote {}", cfg.output_dir.join("boundary.csv").display());
            println!("wrote {}", cfg.output_dir.join("grid.csv").display());
            Ok(())
        }
    }
}

fn run_provenance(record: &RunRecord, path: &Path) -> serde_json::Value {
    json!({
        "run_record": path,
        "seed": record.seed,
        "epsilon": record.epsilon,
        "budget": record.budget,
        "guarantee": record.guarantee,
        "pretrained": record.pretrained,
        "config": record.config,
    })
}

fn gen_data(cfg: &ExperimentConfig, seed: u64) -> Result<()> {
    let DataSource::Synthetic(spec) = &cfg.data else {
        bail!("gen-data needs a synthetic data source");
    };
    std::fs::create_dir_all(&cfg.output_dir)?;
    for (name, spec, stream) in [
        ("private", spec.clone(), STREAM_PRIVATE),
        ("public", spec.shifted(), STREAM_PUBLIC),
    ] {
        let data = generate_synthetic(&spec, &mut RngState::stream(seed, stream))?;
        let path = cfg.output_dir.join(format!("{name}.csv"));
        save_csv(&data, &path)?;
        let meta = json!({
            "tool": "dplr",
            "version": dplr::VERSION,
            "artifact": format!("{name}.csv"),
            "seed": seed,
            "stream": stream,
            "spec": spec,
        });
        std::fs::write(
            path.with_extension("json"),
            format!("{}\n", serde_json::to_string_pretty(&meta)?),
        )?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
