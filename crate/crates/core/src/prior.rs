//! Glance-centred Gaussian priors over candidate moments.
//!
//! The static prior places a Gaussian at the glance clip `g` over indices
//! rescaled to `[-1, 1]`, then scores each moment by sampling that profile at
//! its start, end and midpoint. The dynamic prior replaces the single Gaussian
//! by an average of Gaussians centred at every clip whose momentum-smoothed
//! feature relevance to `g` clears a threshold.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cosine, minmax_normalize, DenseMatrix};
use crate::temporal_map::{enumerate_moments, Moment};

/// Maps clip index `i` of `n` linearly onto `[-1, 1]`.
pub fn scale_index(i: usize, n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    2.0 * i as f64 / (n - 1) as f64 - 1.0
}

/// Gaussian profile centred at `mu`, min-max normalized over the `n` grid
/// points. The `1/(sqrt(2π)σ)` prefactor cancels under normalization and is
/// omitted.
pub fn gaussian_weights(n: usize, mu: usize, sigma: f64) -> Result<Vec<f64>> {
    if mu >= n {
        return Err(Error::Index(format!("center {mu} outside {n} clips")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "sigma must be > 0, got {sigma}"
        )));
    }
    let center = scale_index(mu, n);
    let denom = 2.0 * sigma * sigma;
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let d = scale_index(i, n) - center;
            (-(d * d) / denom).exp()
        })
        .collect();
    Ok(minmax_normalize(&raw))
}

/// Per-center Gaussian profiles for one `(n, σ)`, computed on first use.
#[derive(Debug)]
pub struct GaussianGrid {
    n: usize,
    sigma: f64,
    profiles: Vec<OnceLock<Vec<f64>>>,
}

impl GaussianGrid {
    pub fn new(n: usize, sigma: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("gaussian grid over zero clips".into()));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sigma must be > 0, got {sigma}"
            )));
        }
        Ok(Self {
            n,
            sigma,
            profiles: (0..n).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn num_clips(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn profile(&self, center: usize) -> Result<&[f64]> {
        let slot = self
            .profiles
            .get(center)
            .ok_or_else(|| Error::Index(format!("center {center} outside {} clips", self.n)))?;
        if let Some(p) = slot.get() {
            return Ok(p);
        }
        let p = gaussian_weights(self.n, center, self.sigma)?;
        Ok(slot.get_or_init(|| p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Average of the profile at start, end and midpoint.
    #[default]
    Triplet,
    /// Profile at the midpoint only.
    Midpoint,
}

/// `(G(i) + G(j) + G(⌊(i+j)/2⌋)) / 3` for a glance-centred profile `G`.
pub fn triplet_weight(moment: Moment, profile: &[f64]) -> f64 {
    (profile[moment.start] + profile[moment.end] + profile[moment.midpoint()]) / 3.0
}

pub fn midpoint_weight(moment: Moment, profile: &[f64]) -> f64 {
    profile[moment.midpoint()]
}

/// Prior weight of every candidate moment, in canonical flat order.
pub fn moment_weights(profile: &[f64], mode: WeightMode) -> Vec<f64> {
    enumerate_moments(profile.len())
        .into_iter()
        .map(|m| match mode {
            WeightMode::Triplet => triplet_weight(m, profile),
            WeightMode::Midpoint => midpoint_weight(m, profile),
        })
        .collect()
}

/// Cosine relevance of every clip row to the glance row.
pub fn relevance(features: &DenseMatrix, g: usize) -> Result<Vec<f64>> {
    if g >= features.rows() {
        return Err(Error::Index(format!(
            "glance {g} outside {} clips",
            features.rows()
        )));
    }
    let anchor = features.row(g);
    features
        .row_iter()
        .enumerate()
        .map(|(i, row)| {
            cosine(anchor, row).map_err(|e| match e {
                Error::ZeroNorm { context } => Error::ZeroNorm {
                    context: format!("relevance of clip {i} to glance {g}: {context}"),
                },
                other => other,
            })
        })
        .collect()
}

/// Momentum-smoothed relevance for one training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceState {
    values: Vec<f64>,
    momentum: f64,
    initialized: bool,
}

impl RelevanceState {
    pub fn new(momentum: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum factor must lie in [0, 1], got {momentum}"
            )));
        }
        Ok(Self {
            values: Vec::new(),
            momentum,
            initialized: false,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    /// First call copies `r`; later calls blend `(1 - α)·r̄ + α·r`.
    pub fn update(&mut self, r: &[f64]) -> Result<()> {
        if !self.initialized {
            self.values = r.to_vec();
            self.initialized = true;
            return Ok(());
        }
        if r.len() != self.values.len() {
            return Err(Error::dims("relevance update", self.values.len(), r.len()));
        }
        let a = self.momentum;
        for (bar, &x) in self.values.iter_mut().zip(r) {
            *bar = (1.0 - a) * *bar + a * x;
        }
        Ok(())
    }
}

pub fn momentum_update(state: &RelevanceState, r: &[f64]) -> Result<RelevanceState> {
    let mut next = state.clone();
    next.update(r)?;
    Ok(next)
}

/// Clips whose smoothed relevance reaches `threshold`.
pub fn center_mask(smoothed: &[f64], threshold: f64) -> Vec<bool> {
    smoothed.iter().map(|&r| r >= threshold).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceFeatures {
    /// Clip features after the learned FC reduction.
    #[default]
    Reduced,
    /// Corpus clip features as stored.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgaConfig {
    /// Relevance threshold `T_r`.
    pub threshold: f64,
    /// Momentum factor `α`; weights the newest relevance.
    pub momentum: f64,
    /// Min-max renormalize the aggregated profile before use.
    pub renormalize: bool,
    /// Weight each term by the relevance of the evaluated clip (as printed)
    /// rather than of the Gaussian's center.
    pub per_clip_relevance: bool,
    pub relevance_features: RelevanceFeatures,
}

impl Default for DgaConfig {
    fn default() -> Self {
        Self {
            threshold: 0.9,
            momentum: 0.7,
            renormalize: true,
            per_clip_relevance: true,
            relevance_features: RelevanceFeatures::Reduced,
        }
    }
}

impl DgaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "relevance threshold must lie in (0, 1], got {}",
                self.threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum factor must lie in [0, 1], got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// The mask-averaged sum of Gaussians, before clamping or renormalization:
/// `Ĝ(i) = (1/C) Σ_z M[z] · r̄[i] · G(i; z)` (or `r̄[z]` when `per_clip` is false).
pub fn aggregate_gaussians(
    smoothed: &[f64],
    mask: &[bool],
    grid: &GaussianGrid,
    per_clip: bool,
) -> Result<Vec<f64>> {
    let n = grid.num_clips();
    if smoothed.len() != n {
        return Err(Error::dims("smoothed relevance", n, smoothed.len()));
    }
    if mask.len() != n {
        return Err(Error::dims("center mask", n, mask.len()));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::EmptyInput("center mask selects no clip".into()));
    }
    let mut out = vec![0.0; n];
    for (z, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let profile = grid.profile(z)?;
        for i in 0..n {
            let rel = if per_clip { smoothed[i] } else { smoothed[z] };
            out[i] += rel * profile[i];
        }
    }
    let c = count as f64;
    for v in &mut out {
        *v /= c;
    }
    Ok(out)
}

/// Dynamic prior profile, clamped at zero and optionally renormalized.
pub fn dga_weights(
    smoothed: &[f64],
    mask: &[bool],
    grid: &GaussianGrid,
    cfg: &DgaConfig,
) -> Result<Vec<f64>> {
    let mut profile = aggregate_gaussians(smoothed, mask, grid, cfg.per_clip_relevance)?;
    for v in &mut profile {
        *v = v.max(0.0);
    }
    if cfg.renormalize {
        profile = minmax_normalize(&profile);
    }
    Ok(profile)
}
