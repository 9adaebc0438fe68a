//! Deterministic training loop and optimizers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::GlanceView;
use crate::error::{Error, Result};
use crate::model::{reduce_clips, Gradients, ModelDims, ModelOptions, ModelParams};
use crate::numerics::SeededRng;
use crate::prior::{
    center_mask, dga_weights, moment_weights, relevance, DgaConfig, GaussianGrid,
    RelevanceFeatures, RelevanceState, WeightMode,
};
use crate::sagcl::{batch_loss, BatchItem, LossConfig, SamplingMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub adam: AdamConfig,
    /// Number of positive keys per sample.
    pub k: usize,
    /// Contrastive temperature.
    pub tau: f64,
    /// Width of the glance-centred Gaussian on the [-1, 1] grid.
    pub sigma: f64,
    pub dga_enabled: bool,
    pub dga: DgaConfig,
    pub sampling_mode: SamplingMode,
    pub weight_mode: WeightMode,
    pub seed: u64,
    /// Half-width of the uniform weight initialization.
    pub init_scale: f64,
    /// Initial value of every entry of both embedding biases. A shared
    /// positive offset starts query/moment cosines above zero, so the
    /// calibrated prior `w * s` does not begin by inverting `w`.
    pub bias_init: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub reduced_dim: usize,
    pub joint_dim: usize,
    pub model: ModelOptions,
    /// Optional cap on own-video negatives per sample.
    pub max_intra_negatives: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 8,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            adam: AdamConfig::default(),
            k: 10,
            tau: 0.1,
            sigma: 0.3,
            dga_enabled: true,
            dga: DgaConfig::default(),
            sampling_mode: SamplingMode::Calibrated,
            weight_mode: WeightMode::Triplet,
            seed: 0,
            init_scale: 0.25,
            bias_init: 1.0,
            grad_clip: Some(10.0),
            reduced_dim: 16,
            joint_dim: 32,
            model: ModelOptions::default(),
            max_intra_negatives: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.k == 0 {
            return bad("k must be >= 1".into());
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return bad(format!("sigma must be > 0, got {}", self.sigma));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            ));
        }
        if !(self.init_scale > 0.0) || !self.init_scale.is_finite() {
            return bad(format!("init_scale must be > 0, got {}", self.init_scale));
        }
        if !self.bias_init.is_finite() {
            return bad(format!("bias_init must be finite, got {}", self.bias_init));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return bad(format!("invalid adam settings {a:?}"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad(format!("grad_clip must be > 0, got {c}"));
            }
        }
        if self.reduced_dim == 0 || self.joint_dim == 0 {
            return bad("reduced_dim and joint_dim must be >= 1".into());
        }
        self.dga.validate()
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            k: self.k,
            tau: self.tau,
            sampling: self.sampling_mode,
            max_intra_negatives: self.max_intra_negatives,
        }
    }
}

/// Optimizer moments; shapes mirror the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first: ModelParams,
    pub second: ModelParams,
    pub steps: u64,
}

impl OptimizerState {
    pub fn new(dims: ModelDims) -> Self {
        Self {
            first: ModelParams::zeros(dims),
            second: ModelParams::zeros(dims),
            steps: 0,
        }
    }
}

pub fn optimizer_step(
    params: &mut ModelParams,
    state: &mut OptimizerState,
    grads: &Gradients,
    config: &TrainConfig,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.first) {
        return Err(Error::InvalidConfig(
            "optimizer step: parameter, gradient and moment shapes differ".into(),
        ));
    }
    let lr = config.learning_rate;
    state.steps += 1;
    match config.optimizer {
        OptimizerKind::Sgd => params.add_scaled(grads, -lr),
        OptimizerKind::Adam => {
            let AdamConfig { beta1, beta2, eps } = config.adam;
            let t = state.steps as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            let [p0, p1, p2, p3, p4, p5] = params.tensors_mut();
            let [m0, m1, m2, m3, m4, m5] = state.first.tensors_mut();
            let [v0, v1, v2, v3, v4, v5] = state.second.tensors_mut();
            let groups = [
                (p0, m0, v0),
                (p1, m1, v1),
                (p2, m2, v2),
                (p3, m3, v3),
                (p4, m4, v4),
                (p5, m5, v5),
            ];
            for ((p, m, v), g) in groups.into_iter().zip(grads.tensors()) {
                for i in 0..p.len() {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                    p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_ms: u128,
}

pub struct TrainState {
    pub params: ModelParams,
    pub options: ModelOptions,
    pub optimizer: OptimizerState,
    /// Smoothed relevance per training sample, in input order.
    pub relevance: Vec<RelevanceState>,
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn loss_history(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.mean_loss).collect()
    }
}

/// Model shape implied by the data and the config.
pub fn model_dims(views: &[GlanceView<'_>], config: &TrainConfig) -> Result<ModelDims> {
    let first = views
        .first()
        .ok_or_else(|| Error::EmptyInput("no training samples".into()))?;
    let dims = ModelDims {
        clip_dim: first.clip_features.cols(),
        reduced_dim: config.reduced_dim,
        query_dim: first.query_feature.len(),
        joint_dim: config.joint_dim,
    };
    dims.validate()?;
    Ok(dims)
}

/// Per-N cache of Gaussian grids.
#[derive(Debug, Default)]
pub struct GridCache {
    sigma: f64,
    grids: BTreeMap<usize, GaussianGrid>,
}

impl GridCache {
    pub fn new(sigma: f64) -> Self {
        Self {
            sigma,
            grids: BTreeMap::new(),
        }
    }

    pub fn get(&mut self, n: usize) -> Result<&GaussianGrid> {
        if !self.grids.contains_key(&n) {
            self.grids.insert(n, GaussianGrid::new(n, self.sigma)?);
        }
        Ok(&self.grids[&n])
    }
}

/// Features DGA measures relevance on.
pub fn relevance_features(
    view: &GlanceView<'_>,
    params: &ModelParams,
    options: &ModelOptions,
    which: RelevanceFeatures,
) -> Result<crate::numerics::DenseMatrix> {
    match which {
        RelevanceFeatures::Reduced => reduce_clips(params, options, view.clip_features),
        RelevanceFeatures::Raw => Ok(view.clip_features.clone()),
    }
}

/// Clip-level prior profile for one sample. With DGA enabled this advances
/// the sample's relevance state by one momentum step.
pub fn sample_profile(
    view: &GlanceView<'_>,
    params: &ModelParams,
    options: &ModelOptions,
    state: &mut RelevanceState,
    grids: &mut GridCache,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    let n = view.clip_features.rows();
    let grid = grids.get(n)?;
    if !config.dga_enabled {
        return Ok(grid.profile(view.glance)?.to_vec());
    }
    let feats = relevance_features(view, params, options, config.dga.relevance_features)?;
    let r = relevance(&feats, view.glance).map_err(|e| match e {
        Error::ZeroNorm { context } => Error::ZeroNorm {
            context: format!("sample {}: {context}", view.query_id),
        },
        other => other,
    })?;
    state.update(&r)?;
    let mask = center_mask(state.values(), config.dga.threshold);
    dga_weights(state.values(), &mask, grid, &config.dga)
}

fn check_finite(value: f64, grads: &Gradients, epoch: usize, batch: &[&str]) -> Result<()> {
    if !value.is_finite() || !grads.is_finite() {
        return Err(Error::NonFinite(format!(
            "epoch {epoch}: loss {value} over samples [{}]",
            batch.join(", ")
        )));
    }
    Ok(())
}

/// Parameters before the first step: uniform weights, shared embedding bias.
pub fn initial_params(dims: ModelDims, config: &TrainConfig) -> Result<(ModelParams, SeededRng)> {
    let mut rng = SeededRng::new(config.seed);
    let mut params = ModelParams::init(dims, &mut rng, config.init_scale)?;
    params.bv.fill(config.bias_init);
    params.bs.fill(config.bias_init);
    Ok((params, rng))
}

pub fn train(views: &[GlanceView<'_>], config: &TrainConfig) -> Result<TrainState> {
    config.validate()?;
    let dims = model_dims(views, config)?;
    for v in views {
        if v.clip_features.cols() != dims.clip_dim || v.query_feature.len() != dims.query_dim {
            return Err(Error::dims(
                format!("feature dims of sample {}", v.query_id),
                dims.clip_dim,
                v.clip_features.cols(),
            ));
        }
    }
    let (params, mut rng) = initial_params(dims, config)?;
    let mut shuffle_rng = rng.fork();
    let mut state = TrainState {
        params,
        options: config.model,
        optimizer: OptimizerState::new(dims),
        relevance: (0..views.len())
            .map(|_| RelevanceState::new(config.dga.momentum))
            .collect::<Result<_>>()?,
        epoch: 0,
        history: Vec::with_capacity(config.epochs),
    };
    let mut grids = GridCache::new(config.sigma);
    let loss_cfg = config.loss_config();

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let weights: Vec<Vec<f64>> = views
            .iter()
            .zip(state.relevance.iter_mut())
            .map(|(v, rel)| {
                let profile =
                    sample_profile(v, &state.params, &state.options, rel, &mut grids, config)?;
                Ok(moment_weights(&profile, config.weight_mode))
            })
            .collect::<Result<_>>()?;

        let order = shuffle_rng.permutation(views.len());
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let items: Vec<BatchItem<'_>> = chunk
                .iter()
                .map(|&i| BatchItem {
                    view: views[i],
                    weights: &weights[i],
                })
                .collect();
            let mut out = batch_loss(&items, &state.params, &state.options, &loss_cfg)?;
            let ids: Vec<&str> = items.iter().map(|it| it.view.query_id).collect();
            check_finite(out.loss, &out.grads, epoch, &ids)?;
            if let Some(clip) = config.grad_clip {
                let norm = out.grads.global_norm();
                if norm > clip {
                    out.grads.scale(clip / norm);
                }
            }
            optimizer_step(&mut state.params, &mut state.optimizer, &out.grads, config)?;
            total += out.per_sample.iter().sum::<f64>();
        }
        if !state.params.is_finite() {
            return Err(Error::NonFinite(format!(
                "epoch {epoch}: parameters diverged"
            )));
        }
        state.epoch = epoch;
        state.history.push(EpochRecord {
            epoch,
            mean_loss: total / views.len() as f64,
            wall_ms: start.elapsed().as_millis(),
        });
    }
    Ok(state)
}

pub fn format_log(records: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,mean_loss,wall_ms\n");
    for r in records {
        let _ = writeln!(out, "{},{},{}", r.epoch, r.mean_loss, r.wall_ms);
    }
    out
}

pub fn write_log(path: &Path, records: &[EpochRecord]) -> Result<()> {
    fs::write(path, format_log(records))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate, CorpusConfig};

    fn easy_corpus() -> crate::corpus::Corpus {
        generate(&CorpusConfig {
            num_videos: 8,
            test_videos: 0,
            noise_sigma: 0.0,
            seed: 3,
            ..CorpusConfig::default()
        })
        .unwrap()
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 4,
            k: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn validation() {
        assert!(TrainConfig {
            epochs: 0,
            ..quick()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            batch_size: 0,
            ..quick()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            tau: 0.0,
            ..quick()
        }
        .validate()
        .is_err());
        assert!(quick().validate().is_ok());
        let views: Vec<GlanceView<'_>> = Vec::new();
        assert!(matches!(train(&views, &quick()), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let corpus = easy_corpus();
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: 0.0,
            ..quick()
        };
        let state = train(&corpus.train_views(), &cfg).unwrap();
        let dims = model_dims(&corpus.train_views(), &cfg).unwrap();
        let (init, _) = initial_params(dims, &cfg).unwrap();
        assert_eq!(state.params, init);
    }

    #[test]
    fn runs_are_bit_identical() {
        let corpus = easy_corpus();
        let a = train(&corpus.train_views(), &quick()).unwrap();
        let b = train(&corpus.train_views(), &quick()).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.loss_history(), b.loss_history());
        assert_eq!(a.relevance, b.relevance);
    }

    #[test]
    fn sgd_arithmetic() {
        let dims = ModelDims {
            clip_dim: 1,
            reduced_dim: 1,
            query_dim: 1,
            joint_dim: 1,
        };
        let mut p = ModelParams::zeros(dims);
        p.w1.set(0, 0, 1.0);
        let mut g = ModelParams::zeros(dims);
        g.w1.set(0, 0, 2.0);
        let cfg = TrainConfig {
            optimizer: OptimizerKind::Sgd,
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let mut st = OptimizerState::new(dims);
        optimizer_step(&mut p, &mut st, &g, &cfg).unwrap();
        assert!((p.w1.get(0, 0) - 0.8).abs() < 1e-15);
        assert_eq!(p.b1[0], 0.0);
    }

    #[test]
    fn adam_first_step_is_lr_times_sign() {
        let dims = ModelDims {
            clip_dim: 2,
            reduced_dim: 1,
            query_dim: 1,
            joint_dim: 1,
        };
        let mut p = ModelParams::zeros(dims);
        let mut g = ModelParams::zeros(dims);
        g.w1.set(0, 0, 3.0);
        g.w1.set(1, 0, -0.02);
        let cfg = TrainConfig {
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let mut st = OptimizerState::new(dims);
        optimizer_step(&mut p, &mut st, &g, &cfg).unwrap();
        assert!((p.w1.get(0, 0) + 0.01).abs() < 1e-8);
        assert!((p.w1.get(1, 0) - 0.01).abs() < 1e-6);
        // zero gradient entries stay put
        assert_eq!(p.bv[0], 0.0);
    }

    #[test]
    fn easy_corpus_loss_decreases() {
        let corpus = easy_corpus();
        let cfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let state = train(&corpus.train_views(), &cfg).unwrap();
        let h = state.loss_history();
        assert!(h.windows(2).all(|w| w[1] < w[0]), "{h:?}");
    }

    #[test]
    fn log_format() {
        let log = format_log(&[EpochRecord {
            epoch: 1,
            mean_loss: 0.5,
            wall_ms: 7,
        }]);
        assert_eq!(log, "epoch,mean_loss,wall_ms\n1,0.5,7\n");
    }
}
