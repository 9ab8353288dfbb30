//! The shared target distribution (a truncated isotropic Gaussian), its
//! sampler, and the score / density / decision functions built on it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{FairadError, Result};
use crate::tensor::Matrix;

/// Smallest acceptance probability the rejection sampler will attempt.
pub const MIN_ACCEPTANCE: f64 = 1e-6;

/// Standard normal in `dim` dimensions conditioned on `||z|| <= radius`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetDistribution {
    pub dim: usize,
    pub radius: f64,
    pub seed: u64,
}

impl TargetDistribution {
    /// Radius chosen so the ball keeps 99% of the untruncated mass.
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        let radius = default_radius(dim)?;
        Self::with_radius(dim, radius, seed)
    }

    pub fn with_radius(dim: usize, radius: f64, seed: u64) -> Result<Self> {
        let t = TargetDistribution { dim, radius, seed };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(FairadError::Config("target dimension must be >= 1".into()));
        }
        if !(self.radius > 0.0) {
            return Err(FairadError::Config(format!("truncation radius must be > 0, got {}", self.radius)));
        }
        Ok(())
    }

    /// `P(||z|| <= radius)` for the untruncated Gaussian.
    pub fn acceptance_probability(&self) -> f64 {
        if self.radius.is_infinite() {
            return 1.0;
        }
        chi_squared(self.dim).cdf(self.radius * self.radius)
    }

    pub fn sampler(&self) -> Result<TargetSampler> {
        TargetSampler::new(*self)
    }
}

fn chi_squared(dim: usize) -> ChiSquared {
    ChiSquared::new(dim as f64).expect("dim >= 1")
}

/// `sqrt` of the 0.99 quantile of chi-squared with `dim` degrees of freedom.
pub fn default_radius(dim: usize) -> Result<f64> {
    if dim == 0 {
        return Err(FairadError::Config("target dimension must be >= 1".into()));
    }
    Ok(chi_squared(dim).inverse_cdf(0.99).sqrt())
}

/// Seeded rejection sampler; one per training run.
#[derive(Clone, Debug)]
pub struct TargetSampler {
    dist: TargetDistribution,
    rng: ChaCha8Rng,
}

impl TargetSampler {
    pub fn new(dist: TargetDistribution) -> Result<Self> {
        dist.validate()?;
        let p = dist.acceptance_probability();
        if p < MIN_ACCEPTANCE {
            return Err(FairadError::InvalidInput(format!(
                "truncation radius {} in {} dims accepts only {p:.3e} of draws",
                dist.radius, dist.dim
            )));
        }
        Ok(TargetSampler {
            dist,
            rng: ChaCha8Rng::seed_from_u64(dist.seed),
        })
    }

    pub fn distribution(&self) -> &TargetDistribution {
        &self.dist
    }

    /// `n` draws as rows of an `n x dim` matrix.
    pub fn sample(&mut self, n: usize) -> Matrix {
        let m = self.dist.dim;
        let r2 = self.dist.radius * self.dist.radius;
        let mut data = Vec::with_capacity(n * m);
        let mut z = vec![0.0; m];
        for _ in 0..n {
            loop {
                for v in z.iter_mut() {
                    *v = StandardNormal.sample(&mut self.rng);
                }
                if z.iter().map(|v| v * v).sum::<f64>() <= r2 {
                    break;
                }
            }
            data.extend_from_slice(&z);
        }
        Matrix::from_vec(n, m, data).expect("finite gaussian draws")
    }
}

/// `n` draws from `dist`, deterministic in `dist.seed`.
pub fn sample_target(dist: &TargetDistribution, n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(FairadError::InvalidInput("sample size must be >= 1".into()));
    }
    Ok(dist.sampler()?.sample(n))
}

/// Euclidean norm of every row.
pub fn anomaly_score(embedded: &Matrix) -> Vec<f64> {
    (0..embedded.rows())
        .map(|i| embedded.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Gaussian density at a point whose norm is `score`.
pub fn density_estimate(score: f64, dim: usize) -> f64 {
    (2.0 * std::f64::consts::PI).powf(-(dim as f64) / 2.0) * (-0.5 * score * score).exp()
}

/// 1 iff `score > threshold`.
#[inline]
pub fn hard_score(score: f64, threshold: f64) -> u8 {
    u8::from(score > threshold)
}

pub fn hard_scores(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| hard_score(s, threshold)).collect()
}

/// Scores aligned with group ids and (optionally) anomaly labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub scores: Vec<f64>,
    pub group_ids: Vec<usize>,
    pub labels: Option<Vec<u8>>,
}

impl ScoreTable {
    pub fn new(scores: Vec<f64>, group_ids: Vec<usize>, labels: Option<Vec<u8>>) -> Result<Self> {
        if scores.len() != group_ids.len() {
            return Err(FairadError::shape("ScoreTable", scores.len(), group_ids.len()));
        }
        if let Some(l) = &labels {
            if l.len() != scores.len() {
                return Err(FairadError::shape("ScoreTable labels", scores.len(), l.len()));
            }
            if l.iter().any(|v| *v > 1) {
                return Err(FairadError::InvalidInput("labels must be 0 or 1".into()));
            }
        }
        if let Some(k) = scores.iter().position(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(FairadError::InvalidInput(format!(
                "score {k} = {} is not a finite non-negative value",
                scores[k]
            )));
        }
        Ok(ScoreTable {
            scores,
            group_ids,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Rows whose label equals `label`; `None` when the table is unlabeled.
    pub fn subset_by_label(&self, label: u8) -> Option<ScoreTable> {
        let labels = self.labels.as_ref()?;
        let idx: Vec<usize> = (0..self.len()).filter(|&i| labels[i] == label).collect();
        Some(ScoreTable {
            scores: idx.iter().map(|&i| self.scores[i]).collect(),
            group_ids: idx.iter().map(|&i| self.group_ids[i]).collect(),
            labels: Some(vec![label; idx.len()]),
        })
    }
}
