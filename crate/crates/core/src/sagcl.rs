//! Semantically aligned group contrastive learning.
//!
//! Per sample: calibrate the Gaussian prior `w` with the query/moment
//! consistency `s` (`p = w * s`), take the top-k moments by `p` as weighted
//! positives, and contrast them against moments that miss the glance plus
//! every moment of the other videos in the batch.

use serde::{Deserialize, Serialize};

use crate::corpus::GlanceView;
use crate::error::{Error, Result};
use crate::model::{
    accumulate_similarity_grad, backward_embeddings, forward, similarity, ForwardTrace, Gradients,
    ModelOptions, ModelParams,
};
use crate::numerics::{compensated_sum, cosine, DenseMatrix};
use crate::temporal_map::Moment;

/// Prior over the candidate moments of one sample, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorWeights {
    /// Gaussian moment weights.
    pub w: Vec<f64>,
    /// Semantic consistency with the query.
    pub s: Vec<f64>,
    /// Calibrated prior `w * s`.
    pub p: Vec<f64>,
}

impl PriorWeights {
    pub fn new(w: Vec<f64>, s: Vec<f64>) -> Result<Self> {
        let p = calibrate(&w, &s)?;
        Ok(Self { w, s, p })
    }
}

/// Cosine of the query embedding with every row of `moments`.
pub fn consistency_scores(query: &[f64], moments: &DenseMatrix) -> Result<Vec<f64>> {
    if moments.cols() != query.len() {
        return Err(Error::dims(
            "moment embedding dim",
            query.len(),
            moments.cols(),
        ));
    }
    moments.row_iter().map(|f| cosine(query, f)).collect()
}

pub fn calibrate(w: &[f64], s: &[f64]) -> Result<Vec<f64>> {
    if w.len() != s.len() {
        return Err(Error::dims("consistency scores", w.len(), s.len()));
    }
    Ok(w.iter().zip(s).map(|(a, b)| a * b).collect())
}

/// Which prior ranks positive candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    GaussianOnly,
    SemanticOnly,
    #[default]
    Calibrated,
}

/// A moment of another sample in the same batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegativeRef {
    pub sample: usize,
    pub moment: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeySelection {
    /// Flat indices of the positives, best first.
    pub positives: Vec<usize>,
    /// Gaussian weight of each positive.
    pub positive_weights: Vec<f64>,
    /// Own moments that miss the glance and are not positives, ascending.
    pub intra_negatives: Vec<usize>,
    pub inter_negatives: Vec<NegativeRef>,
}

/// Indices of the `k` largest keys; ties go to the lower index.
pub fn top_k(keys: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Evenly strided subset of at most `cap` items, keeping order.
fn stride_cap(items: Vec<usize>, cap: Option<usize>) -> Vec<usize> {
    match cap {
        Some(c) if items.len() > c => (0..c).map(|i| items[i * items.len() / c]).collect(),
        _ => items,
    }
}

/// `others` lists `(batch index, number of moments)` for every batch sample
/// that may serve as an inter-video negative.
pub fn select_keys(
    prior: &PriorWeights,
    mode: SamplingMode,
    moments: &[Moment],
    glance: usize,
    k: usize,
    max_intra_negatives: Option<usize>,
    others: &[(usize, usize)],
) -> Result<KeySelection> {
    let m = moments.len();
    if prior.w.len() != m || prior.s.len() != m || prior.p.len() != m {
        return Err(Error::dims("prior length", m, prior.w.len()));
    }
    if k == 0 || k > m {
        return Err(Error::InvalidConfig(format!(
            "k = {k} positives requested from {m} candidate moments"
        )));
    }
    let keys = match mode {
        SamplingMode::GaussianOnly => &prior.w,
        SamplingMode::SemanticOnly => &prior.s,
        SamplingMode::Calibrated => &prior.p,
    };
    let positives = top_k(keys, k);
    let positive_weights = positives.iter().map(|&z| prior.w[z]).collect();
    let mut is_pos = vec![false; m];
    positives.iter().for_each(|&z| is_pos[z] = true);
    let intra = (0..m)
        .filter(|&z| !is_pos[z] && !moments[z].contains(glance))
        .collect();
    let inter_negatives = others
        .iter()
        .flat_map(|&(sample, count)| (0..count).map(move |moment| NegativeRef { sample, moment }))
        .collect();
    Ok(KeySelection {
        positives,
        positive_weights,
        intra_negatives: stride_cap(intra, max_intra_negatives),
        inter_negatives,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// dL/d(similarity) for each positive.
    pub pos_grads: Vec<f64>,
    /// dL/d(similarity) for each negative.
    pub neg_grads: Vec<f64>,
}

/// Weighted group contrastive loss over similarity scores.
///
/// `L = -(1/k) Σ_pos W_z log(exp(x_z) / Σ_all exp(x_u))` with `x = score / tau`.
pub fn group_contrastive_loss(
    pos_scores: &[f64],
    pos_weights: &[f64],
    neg_scores: &[f64],
    tau: f64,
) -> Result<LossOutput> {
    let k = pos_scores.len();
    if k == 0 {
        return Err(Error::EmptyInput("no positive keys".into()));
    }
    if pos_weights.len() != k {
        return Err(Error::dims("positive weights", k, pos_weights.len()));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "temperature must be > 0, got {tau}"
        )));
    }
    let logits = || pos_scores.iter().chain(neg_scores).map(|s| s / tau);
    let max = logits().fold(f64::NEG_INFINITY, f64::max);
    let sum = compensated_sum(logits().map(|x| (x - max).exp()));
    let lse = max + sum.ln();
    if !lse.is_finite() {
        return Err(Error::NonFinite(format!("log-sum-exp of logits is {lse}")));
    }

    let kf = k as f64;
    let total_w = compensated_sum(pos_weights.iter().copied());
    let loss = -compensated_sum(
        pos_scores
            .iter()
            .zip(pos_weights)
            .map(|(s, w)| w * (s / tau - lse)),
    ) / kf;
    let softmax = |s: f64| (s / tau - lse).exp();
    let pos_grads = pos_scores
        .iter()
        .zip(pos_weights)
        .map(|(&s, &w)| (total_w * softmax(s) - w) / (kf * tau))
        .collect();
    let neg_grads = neg_scores
        .iter()
        .map(|&s| total_w * softmax(s) / (kf * tau))
        .collect();
    Ok(LossOutput {
        loss,
        pos_grads,
        neg_grads,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub k: usize,
    pub tau: f64,
    pub sampling: SamplingMode,
    pub max_intra_negatives: Option<usize>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            k: 10,
            tau: 0.1,
            sampling: SamplingMode::Calibrated,
            max_intra_negatives: None,
        }
    }
}

/// One training sample with its Gaussian moment weights.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub view: GlanceView<'a>,
    pub weights: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct BatchLoss {
    /// Mean of the per-sample losses.
    pub loss: f64,
    pub per_sample: Vec<f64>,
    pub grads: Gradients,
}

fn tag(e: Error, query_id: &str) -> Error {
    match e {
        Error::ZeroNorm { context } => Error::ZeroNorm {
            context: format!("sample {query_id}: {context}"),
        },
        Error::NonFinite(msg) => Error::NonFinite(format!("sample {query_id}: {msg}")),
        other => other,
    }
}

pub fn batch_loss(
    items: &[BatchItem<'_>],
    params: &ModelParams,
    opts: &ModelOptions,
    cfg: &LossConfig,
) -> Result<BatchLoss> {
    if items.is_empty() {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    let traces: Vec<ForwardTrace> = items
        .iter()
        .map(|it| {
            forward(params, opts, it.view.clip_features, it.view.query_feature)
                .map_err(|e| tag(e, it.view.query_id))
        })
        .collect::<Result<_>>()?;

    let b = items.len();
    let scale = 1.0 / b as f64;
    let mut d_query: Vec<Vec<f64>> = vec![vec![0.0; params.dims.joint_dim]; b];
    let mut d_moments: Vec<DenseMatrix> = traces
        .iter()
        .map(|t| DenseMatrix::zeros(t.num_moments(), params.dims.joint_dim))
        .collect();
    let mut per_sample = Vec::with_capacity(b);

    for (a, (item, trace)) in items.iter().zip(&traces).enumerate() {
        let qid = item.view.query_id;
        let m = trace.num_moments();
        if item.weights.len() != m {
            return Err(Error::dims(
                format!("prior weights of {qid}"),
                m,
                item.weights.len(),
            ));
        }
        let s = consistency_scores(&trace.query, &trace.moments).map_err(|e| tag(e, qid))?;
        let prior = PriorWeights::new(item.weights.to_vec(), s)?;
        let others: Vec<(usize, usize)> = items
            .iter()
            .zip(&traces)
            .enumerate()
            .filter(|(o, (other, _))| *o != a && other.view.video_id != item.view.video_id)
            .map(|(o, (_, t))| (o, t.num_moments()))
            .collect();
        let sel = select_keys(
            &prior,
            cfg.sampling,
            trace.map().moments(),
            item.view.glance,
            cfg.k,
            cfg.max_intra_negatives,
            &others,
        )?;

        let pos_scores: Vec<f64> = sel.positives.iter().map(|&z| trace.scores[z]).collect();
        let mut neg_scores: Vec<f64> = sel
            .intra_negatives
            .iter()
            .map(|&z| trace.scores[z])
            .collect();
        for r in &sel.inter_negatives {
            let f = traces[r.sample].moments.row(r.moment);
            neg_scores.push(similarity(opts.similarity, &trace.query, f).map_err(|e| tag(e, qid))?);
        }
        let out = group_contrastive_loss(&pos_scores, &sel.positive_weights, &neg_scores, cfg.tau)
            .map_err(|e| tag(e, qid))?;
        per_sample.push(out.loss);

        let own = sel.positives.iter().zip(&out.pos_grads).chain(
            sel.intra_negatives
                .iter()
                .zip(&out.neg_grads[..sel.intra_negatives.len()]),
        );
        for (&z, &g) in own {
            accumulate_similarity_grad(
                opts.similarity,
                &trace.query,
                trace.moments.row(z),
                g * scale,
                &mut d_query[a],
                d_moments[a].row_mut(z),
            )?;
        }
        let inter_grads = &out.neg_grads[sel.intra_negatives.len()..];
        for (r, &g) in sel.inter_negatives.iter().zip(inter_grads) {
            accumulate_similarity_grad(
                opts.similarity,
                &trace.query,
                traces[r.sample].moments.row(r.moment),
                g * scale,
                &mut d_query[a],
                d_moments[r.sample].row_mut(r.moment),
            )?;
        }
    }

    let mut grads = ModelParams::zeros(params.dims);
    for (a, trace) in traces.iter().enumerate() {
        let g = backward_embeddings(trace, params, opts, &d_query[a], &d_moments[a])?;
        grads.add_scaled(&g, 1.0);
    }
    let loss = compensated_sum(per_sample.iter().copied()) * scale;
    Ok(BatchLoss {
        loss,
        per_sample,
        grads,
    })
}
