use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use fairad::harness::{
    eval_scores, export_tradeoff, read_reports_dir, run_experiment, sweep, train_repetition,
    write_score_table, ExperimentConfig, ModelBundle, SweepParam,
};
use fairad::metrics::evaluate;

#[derive(Parser)]
#[command(name = "fairad", version, about = "Fair unsupervised anomaly detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one repetition and save the model bundle.
    Train(TrainArgs),
    /// Score the held-out split with a saved bundle.
    Eval(EvalArgs),
    /// Run every repetition and write a JSON report.
    Run(RunArgs),
    /// Repeat `run` over values of beta or lambda.
    Sweep(SweepArgs),
    /// Metric suite for a score file (score,group[,label]).
    Metrics(MetricsArgs),
    /// Collect reports into a trade-off CSV.
    Export(ExportArgs),
}

#[derive(Args)]
struct Overrides {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Percentiles, comma separated.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, default_value_t = 0)]
    repetition: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long)]
    model: PathBuf,
    /// Directory for scores.csv, train_scores.csv and metrics.json.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long)]
    param: SweepParam,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Directory for one report per value plus sweep.csv.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Training scores for the percentile thresholds.
    #[arg(long)]
    train_scores: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.9,0.95")]
    p: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// Directory of JSON run reports.
    #[arg(long)]
    reports: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Applies a flag unless the config file sets the same key, in which case the
/// file wins and a differing flag is reported.
fn merge<T: PartialEq + std::fmt::Debug>(raw: &Value, key: &[&str], name: &str, flag: Option<T>, field: &mut T) {
    let Some(flag) = flag else { return };
    let mut node = Some(raw);
    for k in key {
        node = node.and_then(|n| n.get(k));
    }
    if node.is_some() {
        if flag != *field {
            log::warn!("--{name} {flag:?} ignored; config sets {}={field:?}", key.join("."));
        }
    } else {
        *field = flag;
    }
}

fn load_config(o: &Overrides) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&o.config).with_context(|| format!("reading {}", o.config.display()))?;
    let raw: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", o.config.display()))?;
    let mut cfg: ExperimentConfig =
        serde_json::from_value(raw.clone()).with_context(|| format!("invalid config {}", o.config.display()))?;
    merge(&raw, &["repetitions"], "repetitions", o.repetitions, &mut cfg.repetitions);
    merge(&raw, &["base_seed"], "seed", o.seed, &mut cfg.base_seed);
    merge(&raw, &["train", "epochs"], "epochs", o.epochs, &mut cfg.train.epochs);
    merge(&raw, &["percentiles"], "p", o.p.clone(), &mut cfg.percentiles);
    merge(&raw, &["parallel"], "parallel", o.parallel.then_some(true), &mut cfg.parallel);
    cfg.validate()?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Train(a) => {
            let cfg = load_config(&a.overrides)?;
            let data = cfg.dataset.load()?;
            let run = train_repetition(&cfg, &data, a.repetition)?;
            ModelBundle::new(&cfg, a.repetition, &run).save(&a.out)?;
            if let Some(last) = run.model.history.last() {
                log::info!("trained {} epochs, final loss {:.6}", run.model.history.len(), last.total);
            }
        }
        Command::Eval(a) => {
            let cfg = load_config(&a.overrides)?;
            let bundle = ModelBundle::load(&a.model)?;
            if bundle.experiment_hash != cfg.hash() {
                log::warn!("bundle was trained with a different experiment config");
            }
            let data = cfg.dataset.load()?;
            let (table, train_scores) = bundle.score_split(&cfg, &data)?;
            let report = evaluate(&table, Some(&train_scores), &cfg.percentiles, Some(data.num_groups()))?;
            let text = serde_json::to_string_pretty(&report)?;
            if let Some(dir) = a.out_dir {
                std::fs::create_dir_all(&dir)?;
                write_score_table(&table, create(&dir.join("scores.csv"))?)?;
                let train_table = fairad::target::ScoreTable::new(
                    train_scores.clone(),
                    vec![0; train_scores.len()],
                    None,
                )?;
                write_score_table(&train_table, create(&dir.join("train_scores.csv"))?)?;
                write_text(&dir.join("metrics.json"), &text)?;
            }
            println!("{text}");
        }
        Command::Run(a) => {
            let mut cfg = load_config(&a.overrides)?;
            let raw: Value = serde_json::from_str(&std::fs::read_to_string(&a.overrides.config)?)?;
            merge(&raw, &["output"], "out", a.out.map(Some), &mut cfg.output);
            let report = run_experiment(&cfg)?;
            for (name, agg) in &report.aggregates {
                println!("{name:32} {:.6} ± {:.6}", agg.mean, agg.std);
            }
            if !report.is_complete() {
                for f in &report.failures {
                    log::error!("repetition {} (seed {}): {}", f.repetition, f.seed, f.error);
                }
                bail!("{} of {} repetitions failed", report.failures.len(), cfg.repetitions);
            }
        }
        Command::Sweep(a) => {
            let cfg = load_config(&a.overrides)?;
            let result = sweep(&cfg, a.param, &a.values)?;
            result.write_table(std::io::stdout())?;
            if let Some(dir) = &a.out_dir {
                std::fs::create_dir_all(dir)?;
                for (v, r) in a.values.iter().zip(&result.reports) {
                    let name = format!("{}_{:?}_{v}.json", r.method, a.param).to_lowercase();
                    r.write_json(dir.join(name))?;
                }
                result.write_table(create(&dir.join("sweep.csv"))?)?;
            }
            let failed: usize = result.reports.iter().map(|r| r.failures.len()).sum();
            if failed > 0 {
                bail!("{failed} repetitions failed across the sweep");
            }
        }
        Command::Metrics(a) => {
            let report = eval_scores(&a.scores, a.train_scores.as_deref(), &a.p)?;
            for n in &report.notices {
                log::warn!("{n}");
            }
            let text = serde_json::to_string_pretty(&report)?;
            match a.out {
                Some(p) => write_text(&p, &text)?,
                None => println!("{text}"),
            }
        }
        Command::Export(a) => {
            let reports = read_reports_dir(&a.reports)?;
            if reports.is_empty() {
                bail!("no reports found in {}", a.reports.display());
            }
            export_tradeoff(&reports, create(&a.out)?)?;
            log::info!("wrote {} rows to {}", reports.len(), a.out.display());
        }
    }
    Ok(())
}
