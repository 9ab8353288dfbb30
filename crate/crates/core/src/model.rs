//! The two training objectives, the minibatch trainer and model persistence.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{FairadError, Result};
use crate::ot::{median_heuristic_gamma, mmd_squared_with_grad, sinkhorn_distance_warm, SinkhornConfig};
use crate::target::{anomaly_score, ScoreTable, TargetDistribution, TargetSampler};
use crate::tensor::{
    adam_step, mlp_apply, mlp_backward, mlp_forward, Activation, AdamState, Matrix, MlpGrads, MlpParams,
};

pub const FORMAT_VERSION: u32 = 1;

/// Which fairness mechanism is trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Every group is mapped onto the target separately.
    Im,
    /// One pooled mapping plus a penalty on score-distribution disparity.
    Ex,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Im => "im-fairad",
            Variant::Ex => "ex-fairad",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = FairadError;

    fn from_str(s: &str) -> Result<Variant> {
        match s.to_ascii_lowercase().as_str() {
            "im" | "im-fairad" | "im_fairad" => Ok(Variant::Im),
            "ex" | "ex-fairad" | "ex_fairad" => Ok(Variant::Ex),
            _ => Err(FairadError::Config(format!("unknown variant {s:?} (expected im or ex)"))),
        }
    }
}

/// Distance used to match embeddings to the target sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Divergence {
    #[default]
    Sinkhorn,
    /// Unbiased squared MMD. Without a fixed `gamma`, the bandwidth comes from
    /// the median heuristic on the target sample only, so it carries no gradient.
    Mmd {
        #[serde(default)]
        gamma: Option<f64>,
    },
}

/// Loss weights shared by both objectives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub beta: f64,
    pub lambda: f64,
    pub sinkhorn: SinkhornConfig,
    pub divergence: Divergence,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            beta: 1.0,
            lambda: 1.0,
            sinkhorn: SinkhornConfig::default(),
            divergence: Divergence::Sinkhorn,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub beta: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub sinkhorn: SinkhornConfig,
    pub divergence: Divergence,
    /// Defaults to the radius keeping 99% of the Gaussian mass.
    pub target_radius: Option<f64>,
    /// Fresh target draw per batch; otherwise one draw reused for the whole run.
    pub resample_target: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            latent_dim: 8,
            hidden: vec![64, 32],
            activation: Activation::Relu,
            beta: 1.0,
            lambda: 1.0,
            epochs: 200,
            batch_size: 256,
            learning_rate: 1e-3,
            seed: 0,
            sinkhorn: SinkhornConfig::default(),
            divergence: Divergence::Sinkhorn,
            target_radius: None,
            resample_target: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FairadError::Config(m));
        if self.latent_dim == 0 {
            return bad("latent_dim must be >= 1".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad(format!("beta must be >= 0, got {}", self.beta));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if let Divergence::Mmd { gamma: Some(g) } = self.divergence {
            if !(g > 0.0) {
                return bad(format!("mmd gamma must be > 0, got {g}"));
            }
        }
        self.sinkhorn.validate()?;
        self.target()?;
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            beta: self.beta,
            lambda: self.lambda,
            sinkhorn: self.sinkhorn,
            divergence: self.divergence,
        }
    }

    pub fn target(&self) -> Result<TargetDistribution> {
        let seed = self.seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        match self.target_radius {
            Some(r) => TargetDistribution::with_radius(self.latent_dim, r, seed),
            None => TargetDistribution::new(self.latent_dim, seed),
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        hash_json(self)
    }
}

pub(crate) fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Loss value split into its terms. `reconstruction` already carries `beta / n`,
/// `fairness` already carries `lambda`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub divergence: f64,
    pub reconstruction: f64,
    pub fairness: f64,
}

impl LossComponents {
    pub fn total(&self) -> f64 {
        self.divergence + self.reconstruction + self.fairness
    }
}

#[derive(Clone, Debug)]
pub struct LossOutput {
    pub components: LossComponents,
    /// Transport cost `<P, C>` per group (Im) or for the pooled set (Ex).
    pub transport_costs: Vec<f64>,
    /// Sinkhorn value between score sets per unordered group pair (Ex only).
    pub pair_distances: Vec<f64>,
    pub encoder_grads: MlpGrads,
    pub decoder_grads: MlpGrads,
}

impl LossOutput {
    pub fn total(&self) -> f64 {
        self.components.total()
    }
}

/// Column potentials of the previous step's Sinkhorn problems, keyed by term.
#[derive(Clone, Debug, Default)]
pub struct WarmStart {
    potentials: HashMap<usize, Vec<f64>>,
}

impl WarmStart {
    fn sinkhorn(&mut self, key: usize, x: &Matrix, y: &Matrix, cfg: &SinkhornConfig) -> Result<crate::ot::SinkhornGradient> {
        let r = sinkhorn_distance_warm(x, y, cfg, self.potentials.get(&key).map(Vec::as_slice))?;
        self.potentials.insert(key, r.plan.col_potential.clone());
        Ok(r)
    }
}

struct Matched {
    value: f64,
    transport_cost: f64,
    grad: Matrix,
}

fn match_target(e: &Matrix, z: &Matrix, cfg: &LossConfig, warm: &mut WarmStart, key: usize) -> Result<Matched> {
    match cfg.divergence {
        Divergence::Sinkhorn => {
            let r = warm.sinkhorn(key, e, z, &cfg.sinkhorn)?;
            Ok(Matched {
                value: r.value,
                transport_cost: r.transport_cost,
                grad: r.grad_x,
            })
        }
        Divergence::Mmd { gamma } => {
            let gamma = match gamma {
                Some(g) => g,
                None => {
                    let half = z.rows() / 2;
                    median_heuristic_gamma(&z.row_range(0, half), &z.row_range(half, z.rows()))?
                }
            };
            let (value, grad) = mmd_squared_with_grad(e, z, gamma)?;
            Ok(Matched {
                value,
                transport_cost: value,
                grad,
            })
        }
    }
}

struct Reconstructed {
    embedded: Matrix,
    enc_cache: crate::tensor::ForwardCache,
    value: f64,
    decoder_grads: MlpGrads,
    /// Gradient of the reconstruction term with respect to the embedding.
    grad_embedded: Matrix,
}

fn encode_reconstruct(x: &Matrix, encoder: &MlpParams, decoder: &MlpParams, beta: f64) -> Result<Reconstructed> {
    if encoder.output_dim() != decoder.input_dim() || decoder.output_dim() != x.cols() {
        return Err(FairadError::shape(
            "encoder/decoder",
            format!("{}->{}", encoder.input_dim(), encoder.output_dim()),
            format!("{}->{}", decoder.input_dim(), decoder.output_dim()),
        ));
    }
    let (embedded, enc_cache) = mlp_forward(encoder, x)?;
    let (recon, dec_cache) = mlp_forward(decoder, &embedded)?;
    let n = x.rows() as f64;
    let mut value = 0.0;
    let mut upstream = Matrix::zeros(x.rows(), x.cols());
    for ((u, r), xv) in upstream.as_mut_slice().iter_mut().zip(recon.as_slice()).zip(x.as_slice()) {
        let diff = r - xv;
        value += diff * diff;
        *u = 2.0 * beta / n * diff;
    }
    let (decoder_grads, grad_embedded) = mlp_backward(decoder, &dec_cache, &upstream)?;
    Ok(Reconstructed {
        embedded,
        enc_cache,
        value: beta / n * value,
        decoder_grads,
        grad_embedded,
    })
}

fn add_into(dst: &mut Matrix, offset: usize, src: &Matrix) {
    for i in 0..src.rows() {
        for (d, s) in dst.row_mut(offset + i).iter_mut().zip(src.row(i)) {
            *d += s;
        }
    }
}

/// Per-group target matching plus reconstruction. Group `s` is matched to the
/// first `n_s` rows of `z`, so `z` needs at least as many rows as the largest group.
pub fn im_fairad_loss(
    groups: &[Matrix],
    z: &Matrix,
    encoder: &MlpParams,
    decoder: &MlpParams,
    cfg: &LossConfig,
) -> Result<LossOutput> {
    im_fairad_loss_warm(groups, z, encoder, decoder, cfg, &mut WarmStart::default())
}

/// [`im_fairad_loss`] reusing and updating Sinkhorn potentials in `warm`.
pub fn im_fairad_loss_warm(
    groups: &[Matrix],
    z: &Matrix,
    encoder: &MlpParams,
    decoder: &MlpParams,
    cfg: &LossConfig,
    warm: &mut WarmStart,
) -> Result<LossOutput> {
    if groups.is_empty() {
        return Err(FairadError::InvalidInput("im_fairad_loss needs at least one group".into()));
    }
    if let Some(s) = groups.iter().position(|g| g.rows() == 0) {
        return Err(FairadError::EmptyGroup { group: s });
    }
    let largest = groups.iter().map(Matrix::rows).max().unwrap_or(0);
    if z.rows() < largest {
        return Err(FairadError::shape("target sample rows", largest, z.rows()));
    }
    if z.cols() != encoder.output_dim() {
        return Err(FairadError::shape("target dim", encoder.output_dim(), z.cols()));
    }
    let parts: Vec<&Matrix> = groups.iter().collect();
    let x = Matrix::vstack(&parts)?;
    let rec = encode_reconstruct(&x, encoder, decoder, cfg.beta)?;
    let mut grad_e = rec.grad_embedded;
    let mut divergence = 0.0;
    let mut transport_costs = Vec::with_capacity(groups.len());
    let mut offset = 0;
    for (s, g) in groups.iter().enumerate() {
        let n_s = g.rows();
        let e_s = rec.embedded.row_range(offset, offset + n_s);
        let m = match_target(&e_s, &z.row_range(0, n_s), cfg, warm, s)?;
        divergence += m.value;
        transport_costs.push(m.transport_cost);
        add_into(&mut grad_e, offset, &m.grad);
        offset += n_s;
    }
    let (encoder_grads, _) = mlp_backward(encoder, &rec.enc_cache, &grad_e)?;
    Ok(LossOutput {
        components: LossComponents {
            divergence,
            reconstruction: rec.value,
            fairness: 0.0,
        },
        transport_costs,
        pair_distances: Vec::new(),
        encoder_grads,
        decoder_grads: rec.decoder_grads,
    })
}

/// Pooled target matching, reconstruction, and `lambda` times the Sinkhorn
/// distance between the score sets of every unordered pair of groups.
/// `group_index` holds dense ids; every id below the maximum must occur.
pub fn ex_fairad_loss(
    x: &Matrix,
    group_index: &[usize],
    z: &Matrix,
    encoder: &MlpParams,
    decoder: &MlpParams,
    cfg: &LossConfig,
) -> Result<LossOutput> {
    ex_fairad_loss_warm(x, group_index, z, encoder, decoder, cfg, &mut WarmStart::default())
}

/// [`ex_fairad_loss`] reusing and updating Sinkhorn potentials in `warm`.
pub fn ex_fairad_loss_warm(
    x: &Matrix,
    group_index: &[usize],
    z: &Matrix,
    encoder: &MlpParams,
    decoder: &MlpParams,
    cfg: &LossConfig,
    warm: &mut WarmStart,
) -> Result<LossOutput> {
    let n = x.rows();
    if group_index.len() != n {
        return Err(FairadError::shape("ex_fairad_loss group ids", n, group_index.len()));
    }
    if n == 0 {
        return Err(FairadError::InvalidInput("ex_fairad_loss needs a non-empty batch".into()));
    }
    if z.rows() < n {
        return Err(FairadError::shape("target sample rows", n, z.rows()));
    }
    if z.cols() != encoder.output_dim() {
        return Err(FairadError::shape("target dim", encoder.output_dim(), z.cols()));
    }
    let k = group_index.iter().max().map_or(0, |&g| g + 1);
    let mut members = vec![Vec::new(); k];
    for (i, &g) in group_index.iter().enumerate() {
        members[g].push(i);
    }
    if let Some(s) = members.iter().position(Vec::is_empty) {
        return Err(FairadError::EmptyGroup { group: s });
    }
    if k < 2 && cfg.lambda > 0.0 {
        return Err(FairadError::InvalidInput(
            "the disparity penalty needs at least two groups; set lambda = 0 for one".into(),
        ));
    }

    let rec = encode_reconstruct(x, encoder, decoder, cfg.beta)?;
    let mut grad_e = rec.grad_embedded;
    let pooled = match_target(&rec.embedded, &z.row_range(0, n), cfg, warm, 0)?;
    add_into(&mut grad_e, 0, &pooled.grad);

    let mut fairness = 0.0;
    let mut pair_distances = Vec::new();
    if cfg.lambda > 0.0 {
        let scores = anomaly_score(&rec.embedded);
        let mut grad_scores = vec![0.0; n];
        let score_set = |idx: &[usize]| {
            Matrix::from_vec(idx.len(), 1, idx.iter().map(|&i| scores[i]).collect())
        };
        for a in 0..k {
            for b in (a + 1)..k {
                let key = 1 + pair_distances.len();
                let r = warm.sinkhorn(key, &score_set(&members[a])?, &score_set(&members[b])?, &cfg.sinkhorn)?;
                fairness += cfg.lambda * r.value;
                pair_distances.push(r.value);
                for (t, &i) in members[a].iter().enumerate() {
                    grad_scores[i] += cfg.lambda * r.grad_x.get(t, 0);
                }
                for (t, &i) in members[b].iter().enumerate() {
                    grad_scores[i] += cfg.lambda * r.grad_y.get(t, 0);
                }
            }
        }
        for (i, (&gs, &s)) in grad_scores.iter().zip(&scores).enumerate() {
            if s > 0.0 {
                let e = rec.embedded.row(i).to_vec();
                for (d, ev) in grad_e.row_mut(i).iter_mut().zip(e) {
                    *d += gs * ev / s;
                }
            }
        }
    }

    let (encoder_grads, _) = mlp_backward(encoder, &rec.enc_cache, &grad_e)?;
    Ok(LossOutput {
        components: LossComponents {
            divergence: pooled.value,
            reconstruction: rec.value,
            fairness,
        },
        transport_costs: vec![pooled.transport_cost],
        pair_distances,
        encoder_grads,
        decoder_grads: rec.decoder_grads,
    })
}

/// Averages over the batches of one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub batches: usize,
    pub components: LossComponents,
    pub total: f64,
    pub transport_costs: Vec<f64>,
    pub pair_distances: Vec<f64>,
}

/// Minibatch Adam over a fixed training set.
pub struct Trainer {
    variant: Variant,
    config: TrainConfig,
    loss: LossConfig,
    features: Matrix,
    groups: Vec<Vec<usize>>,
    encoder: MlpParams,
    decoder: MlpParams,
    enc_adam: AdamState,
    dec_adam: AdamState,
    sampler: TargetSampler,
    shuffle_rng: ChaCha8Rng,
    fixed_target: Option<Matrix>,
    warm: WarmStart,
    history: Vec<EpochRecord>,
}

const MIN_CHUNK: usize = 8;

impl Trainer {
    /// `group_ids` must be dense `0..num_groups` with every group present.
    pub fn new(variant: Variant, features: &Matrix, group_ids: &[usize], config: &TrainConfig) -> Result<Trainer> {
        config.validate()?;
        if features.rows() == 0 {
            return Err(FairadError::InvalidInput("empty training set".into()));
        }
        if group_ids.len() != features.rows() {
            return Err(FairadError::shape("Trainer group ids", features.rows(), group_ids.len()));
        }
        let k = group_ids.iter().max().map_or(0, |&g| g + 1);
        let mut groups = vec![Vec::new(); k];
        for (i, &g) in group_ids.iter().enumerate() {
            groups[g].push(i);
        }
        if let Some(s) = groups.iter().position(Vec::is_empty) {
            return Err(FairadError::EmptyGroup { group: s });
        }
        if variant == Variant::Ex && k < 2 && config.lambda > 0.0 {
            return Err(FairadError::Config("ex-fairad with lambda > 0 needs at least two groups".into()));
        }
        if variant == Variant::Im && config.lambda != 1.0 {
            log::debug!("lambda is ignored by im-fairad");
        }

        let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = features.cols();
        let mut enc_dims = vec![d];
        enc_dims.extend(&config.hidden);
        enc_dims.push(config.latent_dim);
        let dec_dims: Vec<usize> = enc_dims.iter().rev().copied().collect();
        let encoder = MlpParams::init(&enc_dims, config.activation, Activation::Identity, &mut init_rng)?;
        let decoder = MlpParams::init(&dec_dims, config.activation, Activation::Identity, &mut init_rng)?;
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
        shuffle_rng.set_stream(1);
        let mut sampler = config.target()?.sampler()?;
        let fixed_target = if config.resample_target {
            None
        } else {
            let rows = match variant {
                Variant::Im => groups.iter().map(Vec::len).max().unwrap_or(0),
                Variant::Ex => features.rows(),
            };
            Some(sampler.sample(rows))
        };
        Ok(Trainer {
            variant,
            loss: config.loss_config(),
            config: config.clone(),
            features: features.clone(),
            groups,
            enc_adam: AdamState::new(&encoder, config.learning_rate),
            dec_adam: AdamState::new(&decoder, config.learning_rate),
            encoder,
            decoder,
            sampler,
            shuffle_rng,
            fixed_target,
            warm: WarmStart::default(),
            history: Vec::new(),
        })
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn encoder(&self) -> &MlpParams {
        &self.encoder
    }

    pub fn decoder(&self) -> &MlpParams {
        &self.decoder
    }

    fn num_batches(&self) -> usize {
        let n = self.features.rows();
        let wanted = n.div_ceil(self.config.batch_size);
        let cap = self.groups.iter().map(|g| g.len() / MIN_CHUNK).min().unwrap_or(1);
        wanted.min(cap).max(1)
    }

    /// One pass over the data with group-stratified batches.
    pub fn run_epoch(&mut self) -> Result<&EpochRecord> {
        let epoch = self.history.len();
        let nb = self.num_batches();
        let mut shuffled = self.groups.clone();
        for g in &mut shuffled {
            g.shuffle(&mut self.shuffle_rng);
        }
        let mut comp = LossComponents::default();
        let mut costs: Vec<f64> = Vec::new();
        let mut pairs: Vec<f64> = Vec::new();
        for b in 0..nb {
            let chunks: Vec<&[usize]> = shuffled
                .iter()
                .map(|g| {
                    let (lo, hi) = (b * g.len() / nb, (b + 1) * g.len() / nb);
                    &g[lo..hi]
                })
                .collect();
            let out = self.batch_loss(&chunks).map_err(|e| FairadError::Training {
                epoch,
                batch: b,
                message: e.to_string(),
            })?;
            if !out.total().is_finite() {
                return Err(FairadError::Training {
                    epoch,
                    batch: b,
                    message: format!("loss is {}", out.total()),
                });
            }
            let step = adam_step(&mut self.encoder, &mut self.enc_adam, &out.encoder_grads)
                .and_then(|_| adam_step(&mut self.decoder, &mut self.dec_adam, &out.decoder_grads));
            step.map_err(|e| FairadError::Training {
                epoch,
                batch: b,
                message: e.to_string(),
            })?;
            comp.divergence += out.components.divergence;
            comp.reconstruction += out.components.reconstruction;
            comp.fairness += out.components.fairness;
            accumulate(&mut costs, &out.transport_costs);
            accumulate(&mut pairs, &out.pair_distances);
        }
        let scale = 1.0 / nb as f64;
        comp.divergence *= scale;
        comp.reconstruction *= scale;
        comp.fairness *= scale;
        costs.iter_mut().for_each(|c| *c *= scale);
        pairs.iter_mut().for_each(|c| *c *= scale);
        log::debug!("epoch {epoch}: loss {:.6}", comp.total());
        self.history.push(EpochRecord {
            epoch,
            batches: nb,
            total: comp.total(),
            components: comp,
            transport_costs: costs,
            pair_distances: pairs,
        });
        Ok(self.history.last().expect("just pushed"))
    }

    fn batch_loss(&mut self, chunks: &[&[usize]]) -> Result<LossOutput> {
        match self.variant {
            Variant::Im => {
                let largest = chunks.iter().map(|c| c.len()).max().unwrap_or(0);
                let z = self.target_rows(largest);
                let groups: Vec<Matrix> = chunks.iter().map(|c| self.features.select_rows(c)).collect();
                im_fairad_loss_warm(&groups, &z, &self.encoder, &self.decoder, &self.loss, &mut self.warm)
            }
            Variant::Ex => {
                let idx: Vec<usize> = chunks.concat();
                let ids: Vec<usize> = chunks
                    .iter()
                    .enumerate()
                    .flat_map(|(g, c)| std::iter::repeat_n(g, c.len()))
                    .collect();
                let z = self.target_rows(idx.len());
                ex_fairad_loss_warm(
                    &self.features.select_rows(&idx),
                    &ids,
                    &z,
                    &self.encoder,
                    &self.decoder,
                    &self.loss,
                    &mut self.warm,
                )
            }
        }
    }

    fn target_rows(&mut self, n: usize) -> Matrix {
        match &self.fixed_target {
            Some(z) => z.row_range(0, n),
            None => self.sampler.sample(n),
        }
    }

    /// Runs the configured number of epochs.
    pub fn train(mut self) -> Result<TrainedModel> {
        for _ in 0..self.config.epochs {
            self.run_epoch()?;
        }
        Ok(self.finish())
    }

    /// Runs until `stop` returns true or `max_epochs` have passed.
    pub fn train_until<F: FnMut(&Trainer) -> bool>(&mut self, max_epochs: usize, mut stop: F) -> Result<usize> {
        for e in 0..max_epochs {
            self.run_epoch()?;
            if stop(self) {
                return Ok(e + 1);
            }
        }
        Ok(max_epochs)
    }

    pub fn finish(self) -> TrainedModel {
        TrainedModel {
            format_version: FORMAT_VERSION,
            variant: self.variant,
            config_hash: self.config.hash(),
            target: *self.sampler.distribution(),
            config: self.config,
            encoder: self.encoder,
            decoder: self.decoder,
            history: self.history,
        }
    }
}

fn accumulate(acc: &mut Vec<f64>, values: &[f64]) {
    if acc.is_empty() {
        acc.resize(values.len(), 0.0);
    }
    for (a, v) in acc.iter_mut().zip(values) {
        *a += v;
    }
}

/// Trains on the rows of `train` (labels are ignored).
pub fn train(variant: Variant, train: &Dataset, config: &TrainConfig) -> Result<TrainedModel> {
    Trainer::new(variant, &train.features, &train.sensitive, config)?.train()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub variant: Variant,
    pub config: TrainConfig,
    pub config_hash: String,
    pub target: TargetDistribution,
    pub encoder: MlpParams,
    pub decoder: MlpParams,
    pub history: Vec<EpochRecord>,
}

impl TrainedModel {
    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        mlp_apply(&self.encoder, x)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| FairadError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrainedModel> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| FairadError::io(path, e))?;
        let model: TrainedModel = serde_json::from_str(&text)?;
        if model.format_version != FORMAT_VERSION {
            return Err(FairadError::Config(format!(
                "model format version {} is not supported (expected {FORMAT_VERSION})",
                model.format_version
            )));
        }
        if model.config.hash() != model.config_hash {
            return Err(FairadError::Config("model config hash does not match its config".into()));
        }
        MlpParams::new(model.encoder.layers.clone())?;
        MlpParams::new(model.decoder.layers.clone())?;
        Ok(model)
    }
}

/// Anomaly scores `||h(x)||` for raw feature rows.
pub fn score_features(model: &TrainedModel, x: &Matrix) -> Result<Vec<f64>> {
    if x.cols() != model.input_dim() {
        return Err(FairadError::shape("score_features", model.input_dim(), x.cols()));
    }
    Ok(anomaly_score(&model.embed(x)?))
}

pub fn score_dataset(model: &TrainedModel, data: &Dataset) -> Result<ScoreTable> {
    let scores = score_features(model, &data.features)?;
    ScoreTable::new(scores, data.sensitive.clone(), Some(data.labels.clone()))
}
