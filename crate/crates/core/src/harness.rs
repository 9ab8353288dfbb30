//! Seeded multi-repetition experiments, sweeps, score-file evaluation and
//! trade-off export.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, PreprocessOptions, Preprocessor, Schema, SplitPlan, SyntheticSpec};
use crate::error::{FairadError, Result};
use crate::metrics::{evaluate, FairnessReport};
use crate::model::{hash_json, score_features, Trainer, TrainConfig, TrainedModel, Variant};
use crate::target::ScoreTable;

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const DATA_DIR_ENV: &str = "FAIRAD_DATA_DIR";

/// Resolves a relative dataset path against `FAIRAD_DATA_DIR` when it is set.
pub fn resolve_data_path(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => PathBuf::from(dir).join(path),
        None => path.to_path_buf(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Csv {
        name: String,
        path: PathBuf,
        schema: PathBuf,
    },
    Synthetic {
        name: String,
        #[serde(flatten)]
        spec: SyntheticSpec,
    },
}

impl DatasetSpec {
    pub fn name(&self) -> &str {
        match self {
            DatasetSpec::Csv { name, .. } | DatasetSpec::Synthetic { name, .. } => name,
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSpec::Csv { path, schema, .. } => {
                let data_path = resolve_data_path(path);
                let schema_path = resolve_data_path(schema);
                for p in [&data_path, &schema_path] {
                    if !p.exists() {
                        return Err(FairadError::Config(format!(
                            "{} not found (relative paths resolve against ${DATA_DIR_ENV})",
                            p.display()
                        )));
                    }
                }
                data::load_csv(&data_path, &Schema::from_json_file(&schema_path)?)
            }
            DatasetSpec::Synthetic { spec, .. } => data::synthetic_dataset(spec),
        }
    }
}

/// A named protocol or explicit per-group counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitSpec {
    Preset(String),
    Plan(SplitPlan),
}

impl SplitSpec {
    pub fn plan(&self) -> Result<SplitPlan> {
        match self {
            SplitSpec::Preset(name) => SplitPlan::preset(name),
            SplitSpec::Plan(p) => Ok(p.clone()),
        }
    }
}

fn default_percentiles() -> Vec<f64> {
    vec![0.8, 0.9, 0.95]
}

fn default_repetitions() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Method label used in reports; defaults to the variant name.
    #[serde(default)]
    pub method: Option<String>,
    pub dataset: DatasetSpec,
    pub split: SplitSpec,
    pub variant: Variant,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub preprocess: PreprocessOptions,
    #[serde(default = "default_percentiles")]
    pub percentiles: Vec<f64>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub parallel: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| FairadError::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(FairadError::Config("repetitions must be >= 1".into()));
        }
        if let Some(p) = self.percentiles.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
            return Err(FairadError::Config(format!("percentile {p} outside (0, 1]")));
        }
        self.split.plan()?.validate()?;
        self.train.validate()
    }

    pub fn method(&self) -> String {
        self.method.clone().unwrap_or_else(|| self.variant.name().to_string())
    }

    /// Hash of everything that affects results; `parallel` and `output` are excluded.
    pub fn hash(&self) -> String {
        hash_json(&ExperimentConfig {
            parallel: false,
            output: None,
            ..self.clone()
        })
    }

    pub fn seed(&self, repetition: usize) -> u64 {
        self.base_seed.wrapping_add(repetition as u64)
    }
}

/// Compact summary of a loss history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryDigest {
    pub epochs: usize,
    pub first_total: Option<f64>,
    pub final_total: Option<f64>,
    pub final_transport_costs: Vec<f64>,
    pub sha256: String,
}

impl HistoryDigest {
    pub fn of(model: &TrainedModel) -> HistoryDigest {
        HistoryDigest {
            epochs: model.history.len(),
            first_total: model.history.first().map(|r| r.total),
            final_total: model.history.last().map(|r| r.total),
            final_transport_costs: model.history.last().map(|r| r.transport_costs.clone()).unwrap_or_default(),
            sha256: hash_json(&model.history),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionReport {
    pub repetition: usize,
    pub seed: u64,
    pub metrics: FairnessReport,
    pub history: HistoryDigest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionFailure {
    pub repetition: usize,
    pub seed: u64,
    pub error: String,
}

/// Mean and sample standard deviation over successful repetitions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Aggregate {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Aggregate { mean, std, count: n }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: u32,
    pub method: String,
    pub dataset: String,
    pub variant: Variant,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub repetitions: Vec<RepetitionReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<RepetitionFailure>,
    pub aggregates: BTreeMap<String, Aggregate>,
}

impl RunReport {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.aggregates.get(metric).map(|a| a.mean)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes the report, creating missing parent directories.
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| FairadError::io(dir, e))?;
        }
        std::fs::write(path, self.to_json()?).map_err(|e| FairadError::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<RunReport> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| FairadError::io(path, e))?;
        let report: RunReport = serde_json::from_str(&text)?;
        if report.format_version != REPORT_FORMAT_VERSION {
            return Err(FairadError::Config(format!(
                "{}: report format version {} is not supported",
                path.display(),
                report.format_version
            )));
        }
        Ok(report)
    }
}

pub fn aggregate(repetitions: &[RepetitionReport]) -> BTreeMap<String, Aggregate> {
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in repetitions {
        for (k, v) in r.metrics.scalar_metrics() {
            values.entry(k).or_default().push(v);
        }
    }
    values.into_iter().map(|(k, v)| (k, Aggregate::of(&v))).collect()
}

/// Everything produced by one repetition before metrics are computed.
pub struct TrainedRun {
    pub seed: u64,
    pub preprocessor: Preprocessor,
    pub model: TrainedModel,
    pub train: Dataset,
    pub test: Dataset,
}

impl TrainedRun {
    pub fn train_scores(&self) -> Result<Vec<f64>> {
        score_features(&self.model, &self.train.features)
    }

    pub fn test_scores(&self) -> Result<ScoreTable> {
        let scores = score_features(&self.model, &self.test.features)?;
        ScoreTable::new(scores, self.test.sensitive.clone(), Some(self.test.labels.clone()))
    }
}

/// Split, preprocess and train for one repetition.
pub fn train_repetition(cfg: &ExperimentConfig, data: &Dataset, repetition: usize) -> Result<TrainedRun> {
    let seed = cfg.seed(repetition);
    let mut plan = cfg.split.plan()?;
    plan.seed = seed;
    let (train_raw, test_raw) = data::split(data, &plan)?;
    let preprocessor = Preprocessor::fit(&train_raw, cfg.preprocess)?;
    let train = preprocessor.transform(&train_raw)?;
    let test = preprocessor.transform(&test_raw)?;
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let model = Trainer::new(cfg.variant, &train.features, &train.sensitive, &train_cfg)?.train()?;
    Ok(TrainedRun {
        seed,
        preprocessor,
        model,
        train,
        test,
    })
}

/// A trained repetition saved for later scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    pub experiment_hash: String,
    pub repetition: usize,
    pub seed: u64,
    pub preprocessor: Preprocessor,
    pub model: TrainedModel,
}

impl ModelBundle {
    pub fn new(cfg: &ExperimentConfig, repetition: usize, run: &TrainedRun) -> ModelBundle {
        ModelBundle {
            format_version: REPORT_FORMAT_VERSION,
            experiment_hash: cfg.hash(),
            repetition,
            seed: run.seed,
            preprocessor: run.preprocessor.clone(),
            model: run.model.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| FairadError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ModelBundle> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| FairadError::io(path, e))?;
        let bundle: ModelBundle = serde_json::from_str(&text)?;
        if bundle.format_version != REPORT_FORMAT_VERSION {
            return Err(FairadError::Config(format!(
                "{}: bundle format version {} is not supported",
                path.display(),
                bundle.format_version
            )));
        }
        if bundle.model.config.hash() != bundle.model.config_hash {
            return Err(FairadError::Config("model config hash does not match its config".into()));
        }
        Ok(bundle)
    }

    /// Scores the test split this bundle was trained against, plus its training rows.
    pub fn score_split(&self, cfg: &ExperimentConfig, data: &Dataset) -> Result<(ScoreTable, Vec<f64>)> {
        let mut plan = cfg.split.plan()?;
        plan.seed = self.seed;
        let (train_raw, test_raw) = data::split(data, &plan)?;
        let train = self.preprocessor.transform(&train_raw)?;
        let test = self.preprocessor.transform(&test_raw)?;
        let scores = score_features(&self.model, &test.features)?;
        let table = ScoreTable::new(scores, test.sensitive.clone(), Some(test.labels.clone()))?;
        Ok((table, score_features(&self.model, &train.features)?))
    }
}

pub fn run_repetition(cfg: &ExperimentConfig, data: &Dataset, repetition: usize) -> Result<RepetitionReport> {
    let run = train_repetition(cfg, data, repetition)?;
    let train_scores = run.train_scores()?;
    let metrics = evaluate(&run.test_scores()?, Some(&train_scores), &cfg.percentiles, Some(data.num_groups()))?;
    Ok(RepetitionReport {
        repetition,
        seed: run.seed,
        metrics,
        history: HistoryDigest::of(&run.model),
    })
}

/// Runs every repetition on an already loaded dataset.
pub fn run_on_dataset(cfg: &ExperimentConfig, data: &Dataset) -> Result<RunReport> {
    cfg.validate()?;
    let outcomes: Vec<Result<RepetitionReport>> = if cfg.parallel {
        (0..cfg.repetitions).into_par_iter().map(|r| run_repetition(cfg, data, r)).collect()
    } else {
        (0..cfg.repetitions).map(|r| run_repetition(cfg, data, r)).collect()
    };
    let mut repetitions = Vec::new();
    let mut failures = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(rep) => repetitions.push(rep),
            Err(e) => {
                log::error!("repetition {r} failed: {e}");
                failures.push(RepetitionFailure {
                    repetition: r,
                    seed: cfg.seed(r),
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(RunReport {
        format_version: REPORT_FORMAT_VERSION,
        method: cfg.method(),
        dataset: cfg.dataset.name().to_string(),
        variant: cfg.variant,
        config_hash: cfg.hash(),
        seeds: (0..cfg.repetitions).map(|r| cfg.seed(r)).collect(),
        aggregates: aggregate(&repetitions),
        repetitions,
        failures,
    })
}

/// Loads the dataset, runs all repetitions and writes the report when an
/// output path is configured. Per-repetition errors land in `failures`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let data = cfg.dataset.load()?;
    let report = run_on_dataset(cfg, &data)?;
    if let Some(out) = &cfg.output {
        report.write_json(out)?;
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Beta,
    Lambda,
}

impl std::str::FromStr for SweepParam {
    type Err = FairadError;

    fn from_str(s: &str) -> Result<SweepParam> {
        match s {
            "beta" => Ok(SweepParam::Beta),
            "lambda" => Ok(SweepParam::Lambda),
            _ => Err(FairadError::Config(format!("unknown sweep parameter {s:?} (expected beta or lambda)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub auc_mean: Option<f64>,
    pub auc_std: Option<f64>,
    pub adpd_mean: Option<f64>,
    pub adpd_std: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub param: SweepParam,
    pub reports: Vec<RunReport>,
    pub table: Vec<SweepRow>,
}

impl SweepResult {
    pub fn write_table<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.table {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| FairadError::io("<sweep table>", e))?;
        Ok(())
    }
}

pub fn sweep_config(cfg: &ExperimentConfig, param: SweepParam, value: f64) -> Result<ExperimentConfig> {
    if param == SweepParam::Lambda && cfg.variant == Variant::Im {
        return Err(FairadError::Config("lambda only applies to ex-fairad".into()));
    }
    let mut c = cfg.clone();
    match param {
        SweepParam::Beta => c.train.beta = value,
        SweepParam::Lambda => c.train.lambda = value,
    }
    c.output = None;
    c.validate()?;
    Ok(c)
}

/// One report per value, loading the dataset once.
pub fn sweep(cfg: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(FairadError::Config("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|&v| sweep_config(cfg, param, v))
        .collect::<Result<Vec<_>>>()?;
    let data = cfg.dataset.load()?;
    let reports = configs.iter().map(|c| run_on_dataset(c, &data)).collect::<Result<Vec<_>>>()?;
    let table = values
        .iter()
        .zip(&reports)
        .map(|(&value, r)| SweepRow {
            value,
            auc_mean: r.aggregates.get("auc").map(|a| a.mean),
            auc_std: r.aggregates.get("auc").map(|a| a.std),
            adpd_mean: r.aggregates.get("adpd_all").map(|a| a.mean),
            adpd_std: r.aggregates.get("adpd_all").map(|a| a.std),
        })
        .collect();
    Ok(SweepResult { param, reports, table })
}

/// Reads `score,group[,label]` rows. Groups that all parse as integers are
/// used as ids directly; otherwise distinct names are numbered in sorted order.
pub fn read_score_table<R: Read>(reader: R) -> Result<(ScoreTable, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let missing = |name: &str| FairadError::Parse {
        line: 1,
        column: name.to_string(),
        message: "required column missing".into(),
    };
    let score_col = col("score").ok_or_else(|| missing("score"))?;
    let group_col = col("group").ok_or_else(|| missing("group"))?;
    let label_col = col("label");

    let mut scores = Vec::new();
    let mut raw_groups = Vec::new();
    let mut labels = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(k + 2, |p| p.line() as usize);
        let err = |column: &str, message: String| FairadError::Parse {
            line,
            column: column.to_string(),
            message,
        };
        let raw = rec.get(score_col).unwrap_or("");
        let s: f64 = raw.parse().map_err(|_| err("score", format!("cannot parse {raw:?}")))?;
        if !s.is_finite() {
            return Err(err("score", format!("non-finite score {raw:?}")));
        }
        scores.push(s);
        let g = rec.get(group_col).unwrap_or("");
        if g.is_empty() {
            return Err(err("group", "empty group".into()));
        }
        raw_groups.push(g.to_string());
        if let Some(lc) = label_col {
            let l = match rec.get(lc).unwrap_or("") {
                "0" => 0,
                "1" => 1,
                other => return Err(err("label", format!("label must be 0 or 1, got {other:?}"))),
            };
            labels.push(l);
        }
    }
    let numeric: Option<Vec<usize>> = raw_groups.iter().map(|g| g.parse().ok()).collect();
    let (ids, names) = match numeric {
        Some(ids) => {
            let k = ids.iter().max().map_or(0, |&g| g + 1);
            (ids, (0..k).map(|g| g.to_string()).collect())
        }
        None => {
            let mut names: Vec<String> = raw_groups.clone();
            names.sort();
            names.dedup();
            let ids = raw_groups
                .iter()
                .map(|g| names.binary_search(g).expect("present"))
                .collect();
            (ids, names)
        }
    };
    let table = ScoreTable::new(scores, ids, label_col.map(|_| labels))?;
    Ok((table, names))
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| FairadError::io(path, e))
}

/// Full metric suite for a score file; `train_scores` (same format, only the
/// `score` column is used) supplies the percentile thresholds.
pub fn eval_scores(scores_file: &Path, train_scores: Option<&Path>, percentiles: &[f64]) -> Result<FairnessReport> {
    let (table, _) = read_score_table(open(scores_file)?)?;
    let train = match train_scores {
        Some(p) => Some(read_score_table(open(p)?)?.0.scores),
        None => None,
    };
    evaluate(&table, train.as_deref(), percentiles, None)
}

pub fn write_score_table<W: Write>(table: &ScoreTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    match &table.labels {
        Some(labels) => {
            w.write_record(["score", "group", "label"])?;
            for ((s, g), l) in table.scores.iter().zip(&table.group_ids).zip(labels) {
                w.write_record([s.to_string(), g.to_string(), l.to_string()])?;
            }
        }
        None => {
            w.write_record(["score", "group"])?;
            for (s, g) in table.scores.iter().zip(&table.group_ids) {
                w.write_record([s.to_string(), g.to_string()])?;
            }
        }
    }
    w.flush().map_err(|e| FairadError::io("<score table>", e))?;
    Ok(())
}

/// One point of an accuracy/fairness trade-off plot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub method: String,
    pub dataset: String,
    pub auc: Option<f64>,
    pub adpd_all: Option<f64>,
    pub adpd_normal: Option<f64>,
    pub adpd_abnormal: Option<f64>,
}

impl TradeoffRow {
    pub fn from_report(r: &RunReport) -> TradeoffRow {
        TradeoffRow {
            method: r.method.clone(),
            dataset: r.dataset.clone(),
            auc: r.mean("auc"),
            adpd_all: r.mean("adpd_all"),
            adpd_normal: r.mean("adpd_normal"),
            adpd_abnormal: r.mean("adpd_abnormal"),
        }
    }
}

pub fn export_tradeoff<W: Write>(reports: &[RunReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if reports.is_empty() {
        w.write_record(["method", "dataset", "auc", "adpd_all", "adpd_normal", "adpd_abnormal"])?;
    }
    for r in reports {
        w.serialize(TradeoffRow::from_report(r))?;
    }
    w.flush().map_err(|e| FairadError::io("<tradeoff table>", e))?;
    Ok(())
}

pub fn read_tradeoff<R: Read>(reader: R) -> Result<Vec<TradeoffRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<TradeoffRow>, _>>()?)
}

/// Reads every `*.json` report in `dir`, sorted by file name.
pub fn read_reports_dir(dir: &Path) -> Result<Vec<RunReport>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| FairadError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(RunReport::read_json).collect()
}
