//! Tabular ingestion, preprocessing and the group/label split protocols.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FairadError, Result};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Numeric,
    Categorical,
    Sensitive,
    Label,
    Ignore,
}

/// One column of a schema file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub role: ColumnRole,
    /// Category vocabulary (categorical columns).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    /// Raw values mapped to group ids 0, 1, ... (sensitive columns).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<String>>,
    /// Numeric sensitive column: group 0 is the closed interval, group 1 everything else.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_interval: Option<[f64; 2]>,
    /// Raw label values meaning "abnormal" / "normal" (label column).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub abnormal: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub normal: Vec<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Drop,
    Error,
}

fn default_missing_values() -> Vec<String> {
    vec![String::new(), "?".into(), "NA".into()]
}

/// JSON schema: every CSV header column must be listed, in any order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    #[serde(default = "default_missing_values")]
    pub missing_values: Vec<String>,
    #[serde(default)]
    pub missing_policy: MissingPolicy,
}

impl Schema {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Schema> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| FairadError::io(path, e))?;
        let schema: Schema = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let count = |role| self.columns.iter().filter(|c| c.role == role).count();
        if count(ColumnRole::Sensitive) != 1 {
            return Err(FairadError::Config("schema needs exactly one sensitive column".into()));
        }
        if count(ColumnRole::Label) != 1 {
            return Err(FairadError::Config("schema needs exactly one label column".into()));
        }
        for c in &self.columns {
            match c.role {
                ColumnRole::Categorical if c.categories.as_ref().is_none_or(|v| v.is_empty()) => {
                    return Err(FairadError::Config(format!("categorical column {} needs categories", c.name)));
                }
                ColumnRole::Sensitive if c.groups.is_none() == c.group_interval.is_none() => {
                    return Err(FairadError::Config(format!(
                        "sensitive column {} needs exactly one of groups / group_interval",
                        c.name
                    )));
                }
                ColumnRole::Label if c.abnormal.is_empty() || c.normal.is_empty() => {
                    return Err(FairadError::Config(format!(
                        "label column {} needs both abnormal and normal values",
                        c.name
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn sensitive(&self) -> &ColumnSpec {
        self.columns.iter().find(|c| c.role == ColumnRole::Sensitive).expect("validated")
    }

    pub fn group_names(&self) -> Vec<String> {
        let s = self.sensitive();
        match (&s.groups, s.group_interval) {
            (Some(g), _) => g.clone(),
            (None, Some([lo, hi])) => vec![format!("[{lo}, {hi}]"), "others".to_string()],
            (None, None) => unreachable!("validated"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    /// Stored as the level index.
    Categorical { levels: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: FeatureKind,
}

/// Feature matrix with aligned group ids and anomaly labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub columns: Vec<FeatureColumn>,
    /// Dense group ids `0..group_names.len()`.
    pub sensitive: Vec<usize>,
    pub group_names: Vec<String>,
    /// 0 = normal, 1 = abnormal.
    pub labels: Vec<u8>,
    /// Stable ids of the source rows.
    pub row_ids: Vec<usize>,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        columns: Vec<FeatureColumn>,
        sensitive: Vec<usize>,
        group_names: Vec<String>,
        labels: Vec<u8>,
    ) -> Result<Dataset> {
        let n = features.rows();
        if columns.len() != features.cols() {
            return Err(FairadError::shape("Dataset columns", features.cols(), columns.len()));
        }
        if sensitive.len() != n || labels.len() != n {
            return Err(FairadError::shape(
                "Dataset",
                format!("{n} rows"),
                format!("{} group ids / {} labels", sensitive.len(), labels.len()),
            ));
        }
        if let Some(g) = sensitive.iter().find(|&&g| g >= group_names.len()) {
            return Err(FairadError::InvalidInput(format!(
                "group id {g} out of range for {} groups",
                group_names.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(FairadError::InvalidInput("labels must be 0 or 1".into()));
        }
        Ok(Dataset {
            features,
            columns,
            sensitive,
            group_names,
            labels,
            row_ids: (0..n).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Rows `idx`, keeping their row ids.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            columns: self.columns.clone(),
            sensitive: idx.iter().map(|&i| self.sensitive[i]).collect(),
            group_names: self.group_names.clone(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            row_ids: idx.iter().map(|&i| self.row_ids[i]).collect(),
        }
    }

    /// Appends the rows of `other` (same columns).
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.columns != other.columns || self.group_names != other.group_names {
            return Err(FairadError::InvalidInput("cannot concatenate datasets with different schemas".into()));
        }
        let mut out = self.clone();
        out.features = Matrix::vstack(&[&self.features, &other.features])?;
        out.sensitive.extend_from_slice(&other.sensitive);
        out.labels.extend_from_slice(&other.labels);
        out.row_ids.extend_from_slice(&other.row_ids);
        Ok(out)
    }

    /// Row indices per group.
    pub fn group_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_groups()];
        for (i, &g) in self.sensitive.iter().enumerate() {
            out[g].push(i);
        }
        out
    }

    /// Number of rows per `(group, label)`; `counts[g][label]`.
    pub fn cell_counts(&self) -> Vec<[usize; 2]> {
        let mut out = vec![[0usize; 2]; self.num_groups()];
        for (&g, &l) in self.sensitive.iter().zip(&self.labels) {
            out[g][l as usize] += 1;
        }
        out
    }
}

/// Reads a CSV with a header row according to `schema`.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| FairadError::io(path, e))?;
    read_csv(file, schema)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();

    let by_name: HashMap<&str, &ColumnSpec> = schema.columns.iter().map(|c| (c.name.as_str(), c)).collect();
    for h in &header {
        if !by_name.contains_key(h.as_str()) {
            return Err(FairadError::Parse {
                line: 1,
                column: h.clone(),
                message: "header column not described by the schema".into(),
            });
        }
    }
    let mut position = HashMap::new();
    for (k, h) in header.iter().enumerate() {
        position.insert(h.as_str(), k);
    }
    for c in &schema.columns {
        if !position.contains_key(c.name.as_str()) {
            return Err(FairadError::Parse {
                line: 1,
                column: c.name.clone(),
                message: "schema column missing from header".into(),
            });
        }
    }

    let feature_specs: Vec<&ColumnSpec> = schema
        .columns
        .iter()
        .filter(|c| matches!(c.role, ColumnRole::Numeric | ColumnRole::Categorical))
        .collect();
    let columns: Vec<FeatureColumn> = feature_specs
        .iter()
        .map(|c| FeatureColumn {
            name: c.name.clone(),
            kind: match c.role {
                ColumnRole::Categorical => FeatureKind::Categorical {
                    levels: c.categories.clone().unwrap_or_default(),
                },
                _ => FeatureKind::Numeric,
            },
        })
        .collect();
    let sens = schema.sensitive();
    let label = schema.columns.iter().find(|c| c.role == ColumnRole::Label).expect("validated");
    let is_missing = |v: &str| schema.missing_values.iter().any(|m| m == v);

    let mut data = Vec::new();
    let mut sensitive = Vec::new();
    let mut labels = Vec::new();
    let mut row_ids = Vec::new();
    let mut dropped = 0usize;

    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(k + 2, |p| p.line() as usize);
        let cell = |name: &str| rec.get(position[name]).unwrap_or("");
        let parse_err = |column: &str, message: String| FairadError::Parse {
            line,
            column: column.to_string(),
            message,
        };

        let used = feature_specs.iter().map(|c| c.name.as_str()).chain([sens.name.as_str(), label.name.as_str()]);
        if let Some(col) = used.clone().find(|n| is_missing(cell(n))) {
            match schema.missing_policy {
                MissingPolicy::Drop => {
                    dropped += 1;
                    continue;
                }
                MissingPolicy::Error => return Err(parse_err(col, "missing value".into())),
            }
        }

        let mut row = Vec::with_capacity(feature_specs.len());
        for c in &feature_specs {
            let raw = cell(&c.name);
            let v = match c.role {
                ColumnRole::Numeric => {
                    let v: f64 = raw
                        .parse()
                        .map_err(|_| parse_err(&c.name, format!("cannot parse {raw:?} as a number")))?;
                    if !v.is_finite() {
                        return Err(parse_err(&c.name, format!("non-finite value {raw:?}")));
                    }
                    v
                }
                _ => {
                    let levels = c.categories.as_ref().expect("validated");
                    levels
                        .iter()
                        .position(|l| l == raw)
                        .ok_or_else(|| parse_err(&c.name, format!("unknown category {raw:?}")))?
                        as f64
                }
            };
            row.push(v);
        }

        let raw_s = cell(&sens.name);
        let group = match (&sens.groups, sens.group_interval) {
            (Some(g), _) => g
                .iter()
                .position(|v| v == raw_s)
                .ok_or_else(|| parse_err(&sens.name, format!("unknown group {raw_s:?}")))?,
            (None, Some([lo, hi])) => {
                let v: f64 = raw_s
                    .parse()
                    .map_err(|_| parse_err(&sens.name, format!("cannot parse {raw_s:?} as a number")))?;
                if (lo..=hi).contains(&v) {
                    0
                } else {
                    1
                }
            }
            (None, None) => unreachable!("validated"),
        };

        let raw_l = cell(&label.name);
        let y = if label.abnormal.iter().any(|v| v == raw_l) {
            1
        } else if label.normal.iter().any(|v| v == raw_l) {
            0
        } else {
            return Err(parse_err(&label.name, format!("unknown label {raw_l:?}")));
        };

        data.extend(row);
        sensitive.push(group);
        labels.push(y);
        row_ids.push(k);
    }
    if dropped > 0 {
        log::info!("dropped {dropped} rows with missing values");
    }
    let n = labels.len();
    let features = Matrix::from_vec(n, columns.len(), data)?;
    let mut ds = Dataset::new(features, columns, sensitive, schema.group_names(), labels)?;
    ds.row_ids = row_ids;
    Ok(ds)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    /// Append one indicator column per group.
    #[serde(default)]
    pub include_sensitive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum ColumnTransform {
    Standardize { mean: f64, std: f64 },
    Constant,
    OneHot { levels: usize },
}

/// Standardization / one-hot statistics fitted on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    transforms: Vec<ColumnTransform>,
    output_columns: Vec<FeatureColumn>,
    options: PreprocessOptions,
    num_groups: usize,
}

impl Preprocessor {
    pub fn fit(train: &Dataset, options: PreprocessOptions) -> Result<Preprocessor> {
        if train.is_empty() {
            return Err(FairadError::InvalidInput("cannot fit preprocessing on an empty dataset".into()));
        }
        let n = train.len() as f64;
        let mut transforms = Vec::new();
        let mut output_columns = Vec::new();
        let numeric = |name: String| FeatureColumn { name, kind: FeatureKind::Numeric };
        for (j, col) in train.columns.iter().enumerate() {
            match &col.kind {
                FeatureKind::Numeric => {
                    let mean = (0..train.len()).map(|i| train.features.get(i, j)).sum::<f64>() / n;
                    let var = (0..train.len())
                        .map(|i| (train.features.get(i, j) - mean).powi(2))
                        .sum::<f64>()
                        / n;
                    let std = var.sqrt();
                    if std <= 1e-12 * mean.abs().max(1.0) {
                        log::warn!("column {} has zero variance on the training split; emitting zeros", col.name);
                        transforms.push(ColumnTransform::Constant);
                    } else {
                        transforms.push(ColumnTransform::Standardize { mean, std });
                    }
                    output_columns.push(numeric(col.name.clone()));
                }
                FeatureKind::Categorical { levels } => {
                    transforms.push(ColumnTransform::OneHot { levels: levels.len() });
                    for l in levels {
                        output_columns.push(numeric(format!("{}={}", col.name, l)));
                    }
                }
            }
        }
        if options.include_sensitive {
            for g in &train.group_names {
                output_columns.push(numeric(format!("sensitive={g}")));
            }
        }
        Ok(Preprocessor {
            transforms,
            output_columns,
            options,
            num_groups: train.num_groups(),
        })
    }

    pub fn output_dim(&self) -> usize {
        self.output_columns.len()
    }

    pub fn transform(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.columns.len() != self.transforms.len() {
            return Err(FairadError::shape("Preprocessor::transform", self.transforms.len(), ds.columns.len()));
        }
        let d = self.output_dim();
        let mut data = Vec::with_capacity(ds.len() * d);
        for i in 0..ds.len() {
            for (j, t) in self.transforms.iter().enumerate() {
                let v = ds.features.get(i, j);
                match t {
                    ColumnTransform::Standardize { mean, std } => data.push((v - mean) / std),
                    ColumnTransform::Constant => data.push(0.0),
                    ColumnTransform::OneHot { levels } => {
                        let k = v as usize;
                        for l in 0..*levels {
                            data.push(if l == k { 1.0 } else { 0.0 });
                        }
                    }
                }
            }
            if self.options.include_sensitive {
                for g in 0..self.num_groups {
                    data.push(if ds.sensitive[i] == g { 1.0 } else { 0.0 });
                }
            }
        }
        Ok(Dataset {
            features: Matrix::from_vec(ds.len(), d, data)?,
            columns: self.output_columns.clone(),
            sensitive: ds.sensitive.clone(),
            group_names: ds.group_names.clone(),
            labels: ds.labels.clone(),
            row_ids: ds.row_ids.clone(),
        })
    }
}

/// Fits on `dataset` and transforms it.
pub fn preprocess(dataset: &Dataset, options: PreprocessOptions) -> Result<Dataset> {
    Preprocessor::fit(dataset, options)?.transform(dataset)
}

/// Requested sample counts for one group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellPlan {
    pub group: usize,
    pub train_normal: usize,
    pub test_normal: usize,
    pub test_abnormal: usize,
}

/// Per-group train/test counts plus seed and contamination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub cells: Vec<CellPlan>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub contamination_rate: f64,
}

impl SplitPlan {
    fn two_groups(a: [usize; 3], b: [usize; 3]) -> SplitPlan {
        let cell = |group, c: [usize; 3]| CellPlan {
            group,
            train_normal: c[0],
            test_normal: c[1],
            test_abnormal: c[2],
        };
        SplitPlan {
            cells: vec![cell(0, a), cell(1, b)],
            seed: 0,
            contamination_rate: 0.0,
        }
    }

    /// Named balanced / skewed protocols. Group 0 is the first listed group value
    /// (Male, African-American, ages [30, 60]).
    pub fn preset(name: &str) -> Result<SplitPlan> {
        let plan = match name {
            "adult-balanced" => Self::two_groups([6000, 1000, 1000], [6000, 1000, 1000]),
            "adult-skewed" => Self::two_groups([8000, 4000, 4000], [2000, 1000, 1000]),
            "compas-balanced" => Self::two_groups([1000, 280, 280], [1000, 280, 280]),
            "compas-skewed" => Self::two_groups([800, 400, 400], [200, 100, 100]),
            "credit-balanced" => Self::two_groups([5000, 2000, 2000], [5000, 2000, 2000]),
            "credit-skewed" => Self::two_groups([8000, 4000, 4000], [2000, 1000, 1000]),
            "titanic-skewed" => Self::two_groups([330, 30, 30], [32, 30, 30]),
            "sp-skewed" => Self::two_groups([135, 26, 30], [148, 26, 30]),
            other => return Err(FairadError::Config(format!("unknown split preset {other:?}"))),
        };
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(FairadError::Config("split plan has no cells".into()));
        }
        if !(self.contamination_rate >= 0.0) {
            return Err(FairadError::Config("contamination rate must be >= 0".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.cells {
            if !seen.insert(c.group) {
                return Err(FairadError::Config(format!("group {} listed twice in split plan", c.group)));
            }
        }
        Ok(())
    }
}

/// Draws disjoint train/test sets with exact per-cell counts. The training
/// split holds only normal rows, plus contamination when the plan asks for it.
pub fn split(dataset: &Dataset, plan: &SplitPlan) -> Result<(Dataset, Dataset)> {
    plan.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut pools = vec![[Vec::new(), Vec::new()]; dataset.num_groups()];
    for i in 0..dataset.len() {
        pools[dataset.sensitive[i]][dataset.labels[i] as usize].push(i);
    }
    let mut deficits = Vec::new();
    for c in &plan.cells {
        if c.group >= dataset.num_groups() {
            deficits.push(format!("group {} does not exist", c.group));
            continue;
        }
        let have_n = pools[c.group][0].len();
        let have_a = pools[c.group][1].len();
        if c.train_normal + c.test_normal > have_n {
            deficits.push(format!(
                "group {} normal: need {} have {have_n}",
                c.group,
                c.train_normal + c.test_normal
            ));
        }
        if c.test_abnormal > have_a {
            deficits.push(format!("group {} abnormal: need {} have {have_a}", c.group, c.test_abnormal));
        }
    }
    if !deficits.is_empty() {
        return Err(FairadError::Infeasible(deficits.join("; ")));
    }

    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    let mut spare_abnormal = Vec::new();
    for c in &plan.cells {
        let [normal, abnormal] = &mut pools[c.group];
        normal.shuffle(&mut rng);
        abnormal.shuffle(&mut rng);
        train_idx.extend_from_slice(&normal[..c.train_normal]);
        test_idx.extend_from_slice(&normal[c.train_normal..c.train_normal + c.test_normal]);
        test_idx.extend_from_slice(&abnormal[..c.test_abnormal]);
        spare_abnormal.extend_from_slice(&abnormal[c.test_abnormal..]);
    }
    let train = dataset.subset(&train_idx);
    let test = dataset.subset(&test_idx);
    if plan.contamination_rate > 0.0 {
        let source = dataset.subset(&spare_abnormal);
        let train = contaminate(&train, &source, plan.contamination_rate, plan.seed)?;
        return Ok((train, test));
    }
    Ok((train, test))
}

/// Appends `floor(rate * normal_count)` rows drawn without replacement from
/// `source_abnormal`; they keep label 1 for bookkeeping only.
pub fn contaminate(train: &Dataset, source_abnormal: &Dataset, rate: f64, seed: u64) -> Result<Dataset> {
    if !(rate >= 0.0) {
        return Err(FairadError::InvalidInput(format!("contamination rate must be >= 0, got {rate}")));
    }
    let normal_count = train.labels.iter().filter(|&&l| l == 0).count();
    let k = (rate * normal_count as f64 + 1e-9).floor() as usize;
    if k == 0 {
        return Ok(train.clone());
    }
    let pool: Vec<usize> = (0..source_abnormal.len()).filter(|&i| source_abnormal.labels[i] == 1).collect();
    if pool.len() < k {
        return Err(FairadError::Infeasible(format!(
            "contamination needs {k} abnormal rows, only {} available",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0_47A1_1A7E);
    let picked: Vec<usize> = rand::seq::index::sample(&mut rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    train.concat(&source_abnormal.subset(&picked))
}

/// Gaussian two-or-more-group data for tests and demos.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Normal rows per group.
    pub normal_per_group: Vec<usize>,
    /// Abnormal rows per group.
    pub abnormal_per_group: Vec<usize>,
    pub dim: usize,
    /// Group `g` is centred at `g * group_offset` along the first axis (unit variance).
    pub group_offset: f64,
    /// Anomalies share their group's mean but have this standard deviation.
    pub anomaly_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            normal_per_group: vec![200, 200],
            abnormal_per_group: vec![100, 100],
            dim: 4,
            group_offset: 2.0,
            anomaly_scale: 3.0,
            seed: 0,
        }
    }
}

pub fn synthetic_dataset(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.normal_per_group.len() != spec.abnormal_per_group.len() || spec.normal_per_group.is_empty() {
        return Err(FairadError::Config("synthetic spec needs matching per-group counts".into()));
    }
    if spec.dim == 0 {
        return Err(FairadError::Config("synthetic dim must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = Vec::new();
    let mut sensitive = Vec::new();
    let mut labels = Vec::new();
    for (g, (&nn, &na)) in spec.normal_per_group.iter().zip(&spec.abnormal_per_group).enumerate() {
        for (count, scale, label) in [(nn, 1.0, 0u8), (na, spec.anomaly_scale, 1u8)] {
            for _ in 0..count {
                for d in 0..spec.dim {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let mean = if d == 0 { g as f64 * spec.group_offset } else { 0.0 };
                    data.push(mean + scale * z);
                }
                sensitive.push(g);
                labels.push(label);
            }
        }
    }
    let n = labels.len();
    let columns = (0..spec.dim)
        .map(|d| FeatureColumn {
            name: format!("x{d}"),
            kind: FeatureKind::Numeric,
        })
        .collect();
    let names = (0..spec.normal_per_group.len()).map(|g| format!("group{g}")).collect();
    Dataset::new(Matrix::from_vec(n, spec.dim, data)?, columns, sensitive, names, labels)
}
