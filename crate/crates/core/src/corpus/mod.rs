//! Synthetic grounding corpora with exactly known ground truth.
//!
//! A corpus is a set of videos (clip feature matrices) and queries. Each query
//! describes one target moment of its video and carries a glance clip inside
//! that moment. The ground-truth span is only reachable from
//! [`GroundingSample`]; training code consumes [`GlanceView`], which has no
//! span field:
//!
//! ```compile_fail
//! # use glance_core::corpus::{generate, CorpusConfig};
//! let corpus = generate(&CorpusConfig::default()).unwrap();
//! let view = corpus.samples()[0].glance_view();
//! let _ = view.gt_span;
//! ```

mod generate;
mod store;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;
use crate::temporal_map::Moment;

pub use generate::{generate, Generator};
pub use store::{load, save, MANIFEST_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlanceMode {
    /// Glance drawn uniformly from the whole span.
    #[default]
    Uniform,
    /// Glance drawn only from clips next to the span's start or end.
    Extreme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub num_videos: usize,
    /// Videos (taken from the end of the generation order) held out for testing.
    pub test_videos: usize,
    pub clips_per_video: usize,
    pub feature_dim: usize,
    pub query_dim: usize,
    pub num_event_prototypes: usize,
    pub moments_per_video: usize,
    pub max_events_per_moment: usize,
    pub min_span_len: usize,
    pub max_span_len: usize,
    pub noise_sigma: f64,
    /// Scale of the onset/offset cues added to a target's first and last clip.
    pub boundary_cue: f64,
    /// Scale of a per-target scene vector shared by all events of the target.
    pub event_coherence: f64,
    pub glance_mode: GlanceMode,
    pub extreme_margin_fraction: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            num_videos: 24,
            test_videos: 8,
            clips_per_video: 16,
            feature_dim: 16,
            query_dim: 16,
            num_event_prototypes: 24,
            moments_per_video: 2,
            max_events_per_moment: 1,
            min_span_len: 2,
            max_span_len: 4,
            noise_sigma: 0.1,
            boundary_cue: 1.0,
            event_coherence: 0.0,
            glance_mode: GlanceMode::Uniform,
            extreme_margin_fraction: 0.1,
            seed: 0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.clips_per_video < 2 {
            return bad(format!(
                "clips_per_video must be >= 2, got {}",
                self.clips_per_video
            ));
        }
        if self.feature_dim == 0 || self.query_dim == 0 {
            return bad("feature_dim and query_dim must be >= 1".into());
        }
        if self.num_videos == 0 {
            return bad("num_videos must be >= 1".into());
        }
        if self.test_videos > self.num_videos {
            return bad(format!(
                "test_videos ({}) exceeds num_videos ({})",
                self.test_videos, self.num_videos
            ));
        }
        if self.moments_per_video == 0 || self.max_events_per_moment == 0 {
            return bad("moments_per_video and max_events_per_moment must be >= 1".into());
        }
        if self.min_span_len == 0 || self.min_span_len > self.max_span_len {
            return bad(format!(
                "span length range [{}, {}] is empty or starts at zero",
                self.min_span_len, self.max_span_len
            ));
        }
        let needed = self.moments_per_video * self.max_events_per_moment;
        if self.num_event_prototypes < needed {
            return bad(format!(
                "{needed} distinct event prototypes needed per video, only {} configured",
                self.num_event_prototypes
            ));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            ));
        }
        if !(self.boundary_cue >= 0.0) || !self.boundary_cue.is_finite() {
            return bad(format!(
                "boundary_cue must be >= 0, got {}",
                self.boundary_cue
            ));
        }
        if !(self.event_coherence >= 0.0) || !self.event_coherence.is_finite() {
            return bad(format!(
                "event_coherence must be >= 0, got {}",
                self.event_coherence
            ));
        }
        if !(self.extreme_margin_fraction > 0.0 && self.extreme_margin_fraction <= 0.5) {
            return bad(format!(
                "extreme_margin_fraction must lie in (0, 0.5], got {}",
                self.extreme_margin_fraction
            ));
        }
        Ok(())
    }
}

/// One (video, query) pair with its hidden ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundingSample {
    pub video_id: String,
    pub query_id: String,
    pub split: Split,
    pub clip_features: Arc<DenseMatrix>,
    pub query_feature: Vec<f64>,
    pub glance: usize,
    pub gt_span: Moment,
    /// Number of distinct events inside the target span.
    pub num_events: usize,
}

impl GroundingSample {
    pub fn num_clips(&self) -> usize {
        self.clip_features.rows()
    }

    pub fn glance_view(&self) -> GlanceView<'_> {
        GlanceView {
            video_id: &self.video_id,
            query_id: &self.query_id,
            clip_features: &self.clip_features,
            query_feature: &self.query_feature,
            glance: self.glance,
        }
    }
}

/// Everything a glance-supervised learner may see about a sample.
#[derive(Debug, Clone, Copy)]
pub struct GlanceView<'a> {
    pub video_id: &'a str,
    pub query_id: &'a str,
    pub clip_features: &'a DenseMatrix,
    pub query_feature: &'a [f64],
    pub glance: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    config: CorpusConfig,
    samples: Vec<GroundingSample>,
}

impl Corpus {
    pub fn new(config: CorpusConfig, samples: Vec<GroundingSample>) -> Result<Self> {
        let corpus = Self { config, samples };
        corpus.check()?;
        Ok(corpus)
    }

    fn check(&self) -> Result<()> {
        use std::collections::HashMap;
        let mut video_split: HashMap<&str, Split> = HashMap::new();
        for s in &self.samples {
            let n = s.num_clips();
            if s.gt_span.end >= n || !s.gt_span.contains(s.glance) {
                return Err(Error::Index(format!(
                    "sample {}: glance {} / span {:?} invalid for {n} clips",
                    s.query_id, s.glance, s.gt_span
                )));
            }
            if let Some(prev) = video_split.insert(&s.video_id, s.split) {
                if prev != s.split {
                    return Err(Error::InvalidConfig(format!(
                        "video {} appears in both splits",
                        s.video_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn config(&self) -> &CorpusConfig {
        &self.config
    }

    pub fn samples(&self) -> &[GroundingSample] {
        &self.samples
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &GroundingSample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn train_views(&self) -> Vec<GlanceView<'_>> {
        self.split(Split::Train).map(|s| s.glance_view()).collect()
    }

    pub fn test_samples(&self) -> Vec<&GroundingSample> {
        self.split(Split::Test).collect()
    }

    pub fn sample(&self, query_id: &str) -> Option<&GroundingSample> {
        self.samples.iter().find(|s| s.query_id == query_id)
    }

    pub fn num_multi_event(&self) -> usize {
        self.samples.iter().filter(|s| s.num_events > 1).count()
    }
}
