//! Detection and group-fairness metrics.
//!
//! All exceedance probabilities use the strict comparison `score > t`.
//! For more than two groups the pairwise quantities (ADPD, fairness ratio,
//! EO) are averaged over unordered group pairs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{FairadError, Result};
use crate::target::ScoreTable;

fn check_len(op: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(FairadError::shape(op, a, b));
    }
    Ok(())
}

/// Scores split per group, each sorted ascending.
struct GroupedScores {
    groups: Vec<(usize, Vec<f64>)>,
}

impl GroupedScores {
    fn new(scores: &[f64], group_ids: &[usize]) -> GroupedScores {
        let mut map: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (&s, &g) in scores.iter().zip(group_ids) {
            map.entry(g).or_default().push(s);
        }
        let groups = map
            .into_iter()
            .map(|(g, mut v)| {
                v.sort_by(f64::total_cmp);
                (g, v)
            })
            .collect();
        GroupedScores { groups }
    }

    /// Requires at least two groups; `expected` additionally names groups that must be present.
    fn require_pairs(&self, expected: Option<usize>) -> Result<()> {
        if let Some(k) = expected {
            for g in 0..k {
                if !self.groups.iter().any(|(id, _)| *id == g) {
                    return Err(FairadError::EmptyGroup { group: g });
                }
            }
        }
        if self.groups.len() < 2 {
            return Err(FairadError::InvalidInput(format!(
                "group fairness needs at least 2 non-empty groups, found {}",
                self.groups.len()
            )));
        }
        Ok(())
    }

    fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        let g = &self.groups;
        (0..g.len()).flat_map(move |i| ((i + 1)..g.len()).map(move |j| (g[i].1.as_slice(), g[j].1.as_slice())))
    }
}

/// Fraction of a sorted sample strictly above `t`.
#[inline]
fn exceedance(sorted: &[f64], t: f64) -> f64 {
    let at_or_below = sorted.partition_point(|&s| s <= t);
    (sorted.len() - at_or_below) as f64 / sorted.len() as f64
}

/// Probability that a random anomaly outscores a random normal sample, ties counting one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_len("auc", scores.len(), labels.len())?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.iter().filter(|&&l| l == 0).count();
    if n_pos + n_neg != labels.len() {
        return Err(FairadError::InvalidInput("labels must be 0 or 1".into()));
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(FairadError::InvalidInput("AUC needs both normal and anomalous labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks over tie blocks
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// The `ceil(p * N)`-th smallest training score (1-indexed).
pub fn threshold_from_training(train_scores: &[f64], p: f64) -> Result<f64> {
    if train_scores.is_empty() {
        return Err(FairadError::InvalidInput("no training scores to threshold".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(FairadError::InvalidInput(format!("percentile must be in (0, 1], got {p}")));
    }
    let n = train_scores.len();
    // guard against p*N landing a hair above an integer
    let rank = ((p * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let mut sorted = train_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[rank - 1])
}

/// F1 of `score > t` against the labels, anomaly as the positive class.
/// Zero whenever there are no true positives.
pub fn f1_at_threshold(scores: &[f64], labels: &[u8], t: f64) -> Result<f64> {
    check_len("f1_at_threshold", scores.len(), labels.len())?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s > t, l) {
            (true, 1) => tp += 1,
            (true, 0) => fp += 1,
            (false, 1) => fn_ += 1,
            (false, 0) => {}
            _ => return Err(FairadError::InvalidInput("labels must be 0 or 1".into())),
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

/// Average demographic parity difference: the mean over every observed score
/// `t_k` of the gap in `P(score > t_k)` between groups.
pub fn adpd(scores: &[f64], group_ids: &[usize]) -> Result<f64> {
    adpd_with_groups(scores, group_ids, None)
}

/// As [`adpd`], additionally requiring groups `0..num_groups` to be present.
pub fn adpd_with_groups(scores: &[f64], group_ids: &[usize], num_groups: Option<usize>) -> Result<f64> {
    check_len("adpd", scores.len(), group_ids.len())?;
    let grouped = GroupedScores::new(scores, group_ids);
    grouped.require_pairs(num_groups)?;
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut n_pairs = 0usize;
    for (a, b) in grouped.pairs() {
        let gap: f64 = thresholds.iter().map(|&t| (exceedance(a, t) - exceedance(b, t)).abs()).sum();
        total += gap / scores.len() as f64;
        n_pairs += 1;
    }
    Ok(total / n_pairs as f64)
}

/// Threshold-dependent fairness ratio and whether an exceedance rate was zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessRatio {
    pub value: f64,
    pub undefined: bool,
}

fn pair_ratio(a: &[f64], b: &[f64], t: f64) -> FairnessRatio {
    let (pa, pb) = (exceedance(a, t), exceedance(b, t));
    if pa == 0.0 || pb == 0.0 {
        return FairnessRatio { value: 0.0, undefined: true };
    }
    FairnessRatio {
        value: (pa / pb).min(pb / pa),
        undefined: false,
    }
}

/// `min(P_i / P_j, P_j / P_i)` of the exceedance rates at `t`; a zero rate
/// gives value 0 with the undefined flag set.
pub fn fairness_ratio(scores: &[f64], group_ids: &[usize], t: f64) -> Result<FairnessRatio> {
    fairness_ratio_with_groups(scores, group_ids, t, None)
}

pub fn fairness_ratio_with_groups(
    scores: &[f64],
    group_ids: &[usize],
    t: f64,
    num_groups: Option<usize>,
) -> Result<FairnessRatio> {
    check_len("fairness_ratio", scores.len(), group_ids.len())?;
    let grouped = GroupedScores::new(scores, group_ids);
    grouped.require_pairs(num_groups)?;
    let ratios: Vec<FairnessRatio> = grouped.pairs().map(|(a, b)| pair_ratio(a, b, t)).collect();
    Ok(FairnessRatio {
        value: ratios.iter().map(|r| r.value).sum::<f64>() / ratios.len() as f64,
        undefined: ratios.iter().any(|r| r.undefined),
    })
}

/// Equal-opportunity gap `|P(score > t | s_i, y=1) - P(score > t | s_j, y=1)|`.
/// Every group present in `group_ids` must have at least one anomaly.
pub fn eo(scores: &[f64], group_ids: &[usize], labels: &[u8], t: f64) -> Result<f64> {
    check_len("eo", scores.len(), group_ids.len())?;
    check_len("eo", scores.len(), labels.len())?;
    let all = GroupedScores::new(scores, group_ids);
    let mut ab_scores = Vec::new();
    let mut ab_groups = Vec::new();
    for i in 0..scores.len() {
        if labels[i] == 1 {
            ab_scores.push(scores[i]);
            ab_groups.push(group_ids[i]);
        }
    }
    let abnormal = GroupedScores::new(&ab_scores, &ab_groups);
    for (g, _) in &all.groups {
        if !abnormal.groups.iter().any(|(id, _)| id == g) {
            return Err(FairadError::InvalidInput(format!(
                "EO needs anomalies in every group; group {g} has none"
            )));
        }
    }
    abnormal.require_pairs(None)?;
    let gaps: Vec<f64> = abnormal
        .pairs()
        .map(|(a, b)| (exceedance(a, t) - exceedance(b, t)).abs())
        .collect();
    Ok(gaps.iter().sum::<f64>() / gaps.len() as f64)
}

/// Metrics that depend on the percentile threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub p: f64,
    pub threshold: f64,
    pub f1: Option<f64>,
    pub fairness_ratio_all: FairnessRatio,
    pub fairness_ratio_normal: Option<FairnessRatio>,
    pub eo: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetSize {
    pub group: usize,
    pub label: Option<u8>,
    pub count: usize,
}

/// Full metric suite for one scored test set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub auc: Option<f64>,
    pub adpd_all: f64,
    pub adpd_normal: Option<f64>,
    pub adpd_abnormal: Option<f64>,
    pub thresholds: Vec<ThresholdMetrics>,
    pub subset_sizes: Vec<SubsetSize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notices: Vec<String>,
}

impl FairnessReport {
    /// Flat `name -> value` view used for aggregation across repetitions.
    pub fn scalar_metrics(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        if let Some(v) = self.auc {
            out.insert("auc".to_string(), v);
        }
        out.insert("adpd_all".to_string(), self.adpd_all);
        if let Some(v) = self.adpd_normal {
            out.insert("adpd_normal".to_string(), v);
        }
        if let Some(v) = self.adpd_abnormal {
            out.insert("adpd_abnormal".to_string(), v);
        }
        for t in &self.thresholds {
            let tag = format!("p{}", t.p);
            if let Some(v) = t.f1 {
                out.insert(format!("f1@{tag}"), v);
            }
            out.insert(format!("fairness_ratio_all@{tag}"), t.fairness_ratio_all.value);
            if let Some(r) = t.fairness_ratio_normal {
                out.insert(format!("fairness_ratio_normal@{tag}"), r.value);
            }
            if let Some(v) = t.eo {
                out.insert(format!("eo@{tag}"), v);
            }
        }
        out
    }
}

/// Computes every metric on `test`. Thresholds come from `train_scores` when
/// given, otherwise from the test scores themselves. `num_groups`, when
/// given, makes a missing group an error.
pub fn evaluate(
    test: &ScoreTable,
    train_scores: Option<&[f64]>,
    percentiles: &[f64],
    num_groups: Option<usize>,
) -> Result<FairnessReport> {
    let mut notices = Vec::new();
    let threshold_source = match train_scores {
        Some(s) => s,
        None => {
            notices.push("no training scores supplied; thresholds use the evaluated scores".to_string());
            &test.scores
        }
    };

    let adpd_all = adpd_with_groups(&test.scores, &test.group_ids, num_groups)?;
    let normal = test.subset_by_label(0);
    let abnormal = test.subset_by_label(1);
    let adpd_normal = normal
        .as_ref()
        .map(|s| adpd_with_groups(&s.scores, &s.group_ids, num_groups))
        .transpose()?;
    let adpd_abnormal = abnormal
        .as_ref()
        .map(|s| adpd_with_groups(&s.scores, &s.group_ids, num_groups))
        .transpose()?;
    let auc_value = test.labels.as_ref().map(|l| auc(&test.scores, l)).transpose()?;
    if test.labels.is_none() {
        notices.push("labels absent; AUC, F1 and EO omitted".to_string());
    }

    let mut thresholds = Vec::with_capacity(percentiles.len());
    for &p in percentiles {
        let t = threshold_from_training(threshold_source, p)?;
        let f1 = test
            .labels
            .as_ref()
            .map(|l| f1_at_threshold(&test.scores, l, t))
            .transpose()?;
        let fairness_ratio_all = fairness_ratio_with_groups(&test.scores, &test.group_ids, t, num_groups)?;
        let fairness_ratio_normal = normal
            .as_ref()
            .map(|s| fairness_ratio_with_groups(&s.scores, &s.group_ids, t, num_groups))
            .transpose()?;
        let eo_value = test
            .labels
            .as_ref()
            .map(|l| eo(&test.scores, &test.group_ids, l, t))
            .transpose()?;
        thresholds.push(ThresholdMetrics {
            p,
            threshold: t,
            f1,
            fairness_ratio_all,
            fairness_ratio_normal,
            eo: eo_value,
        });
    }

    let mut counts: BTreeMap<(usize, Option<u8>), usize> = BTreeMap::new();
    for i in 0..test.len() {
        let label = test.labels.as_ref().map(|l| l[i]);
        *counts.entry((test.group_ids[i], label)).or_default() += 1;
    }
    let subset_sizes = counts
        .into_iter()
        .map(|((group, label), count)| SubsetSize { group, label, count })
        .collect();

    Ok(FairnessReport {
        auc: auc_value,
        adpd_all,
        adpd_normal,
        adpd_abnormal,
        thresholds,
        subset_sizes,
        notices,
    })
}
