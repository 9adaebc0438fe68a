use std::sync::Arc;

use super::{Corpus, CorpusConfig, GlanceMode, GroundingSample, Split};
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, SeededRng};
use crate::temporal_map::Moment;

/// Holds the latent structure shared by every video of a corpus: the event
/// prototypes, the background prototype, the onset/offset cues marking the
/// first and last clip of every target, and the linear code that maps event
/// content to query space.
#[derive(Debug, Clone)]
pub struct Generator {
    config: CorpusConfig,
    prototypes: DenseMatrix,
    background: Vec<f64>,
    onset: Vec<f64>,
    offset: Vec<f64>,
    code: DenseMatrix,
    rng: SeededRng,
    // separate stream so that glance mode does not perturb content
    glance_rng: SeededRng,
}

impl Generator {
    pub fn new(config: &CorpusConfig) -> Result<Self> {
        config.validate()?;
        let needed = config.moments_per_video * config.min_span_len;
        if needed > config.clips_per_video {
            return Err(Error::Packing(format!(
                "{} moments of at least {} clips need {needed} clips, videos have {}",
                config.moments_per_video, config.min_span_len, config.clips_per_video
            )));
        }
        let mut rng = SeededRng::new(config.seed);
        let glance_rng = rng.fork();
        let prototypes = rng.normal_matrix(config.num_event_prototypes, config.feature_dim, 1.0);
        let background = rng.normal_matrix(1, config.feature_dim, 1.0).into_vec();
        let code = rng.normal_matrix(
            config.feature_dim,
            config.query_dim,
            1.0 / (config.feature_dim as f64).sqrt(),
        );
        let onset = rng.normal_matrix(1, config.feature_dim, 1.0).into_vec();
        let offset = rng.normal_matrix(1, config.feature_dim, 1.0).into_vec();
        Ok(Self {
            config: config.clone(),
            prototypes,
            background,
            onset,
            offset,
            code,
            rng,
            glance_rng,
        })
    }

    pub fn prototypes(&self) -> &DenseMatrix {
        &self.prototypes
    }

    pub fn background(&self) -> &[f64] {
        &self.background
    }

    /// Maps a content vector into query space.
    pub fn query_code(&self, content: &[f64]) -> Vec<f64> {
        self.code
            .vec_matmul(content)
            .expect("content length equals feature_dim")
    }

    pub fn generate(mut self) -> Result<Corpus> {
        let cfg = self.config.clone();
        let first_test = cfg.num_videos - cfg.test_videos;
        let mut samples = Vec::with_capacity(cfg.num_videos * cfg.moments_per_video);
        for v in 0..cfg.num_videos {
            let split = if v >= first_test {
                Split::Test
            } else {
                Split::Train
            };
            samples.extend(self.video(v, split)?);
        }
        Corpus::new(cfg, samples)
    }

    fn video(&mut self, index: usize, split: Split) -> Result<Vec<GroundingSample>> {
        let cfg = self.config.clone();
        let n = cfg.clips_per_video;
        let spans = self.pack_spans()?;

        // distinct prototypes within a video so that no two targets share content
        let per_video = cfg.moments_per_video * cfg.max_events_per_moment;
        let mut pool: Vec<usize> = (0..cfg.num_event_prototypes).collect();
        for k in 0..per_video {
            let j = self.rng.index_inclusive(k, pool.len() - 1);
            pool.swap(k, j);
        }

        let mut clips = DenseMatrix::zeros(n, cfg.feature_dim);
        for c in 0..n {
            clips.row_mut(c).copy_from_slice(&self.background);
        }

        let mut targets = Vec::with_capacity(spans.len());
        for (k, span) in spans.iter().enumerate() {
            let max_events = cfg.max_events_per_moment.min(span.len());
            let events = self.rng.index_inclusive(1, max_events);
            let protos = &pool[k * cfg.max_events_per_moment..][..events];
            // shared scene component makes the events of one target alike
            let scene: Vec<f64> = (0..cfg.feature_dim)
                .map(|_| cfg.event_coherence * self.rng.normal())
                .collect();
            let contents: Vec<Vec<f64>> = protos
                .iter()
                .map(|&p| {
                    self.prototypes
                        .row(p)
                        .iter()
                        .zip(&scene)
                        .map(|(a, b)| a + b)
                        .collect()
                })
                .collect();
            for (b, content) in contents.iter().enumerate() {
                // contiguous, near-equal blocks
                let lo = span.start + b * span.len() / events;
                let hi = span.start + (b + 1) * span.len() / events;
                for c in lo..hi {
                    clips.row_mut(c).copy_from_slice(content);
                }
            }
            let cue = cfg.boundary_cue;
            for (x, o) in clips.row_mut(span.start).iter_mut().zip(&self.onset) {
                *x += cue * o;
            }
            for (x, o) in clips.row_mut(span.end).iter_mut().zip(&self.offset) {
                *x += cue * o;
            }
            let mut mean = vec![0.0; cfg.feature_dim];
            for content in &contents {
                for (m, x) in mean.iter_mut().zip(content) {
                    *m += x / contents.len() as f64;
                }
            }
            targets.push((*span, protos.len(), mean));
        }

        let sigma = cfg.noise_sigma;
        for x in clips.as_mut_slice() {
            *x += sigma * self.rng.normal();
        }
        clips.round_to_f32();
        let clips = Arc::new(clips);

        let video_id = format!("v{index:04}");
        let mut out = Vec::with_capacity(targets.len());
        for (k, (span, num_events, content)) in targets.into_iter().enumerate() {
            let mut query = self.query_code(&content);
            for q in &mut query {
                *q = (*q + sigma * self.rng.normal()) as f32 as f64;
            }
            let glance = self.glance(span);
            out.push(GroundingSample {
                video_id: video_id.clone(),
                query_id: format!("{video_id}_q{k}"),
                split,
                clip_features: Arc::clone(&clips),
                query_feature: query,
                glance,
                gt_span: span,
                num_events,
            });
        }
        Ok(out)
    }

    /// Non-overlapping spans, left to right, with random lengths and gaps.
    fn pack_spans(&mut self) -> Result<Vec<Moment>> {
        let cfg = &self.config;
        let n = cfg.clips_per_video;
        let count = cfg.moments_per_video;
        let mut lengths = Vec::with_capacity(count);
        let mut used = 0;
        for k in 0..count {
            let reserve = (count - k - 1) * cfg.min_span_len;
            let budget = n - used - reserve;
            let hi = cfg.max_span_len.min(budget);
            if hi < cfg.min_span_len {
                return Err(Error::Packing(format!(
                    "no room for moment {k}: {budget} clips left, need {}",
                    cfg.min_span_len
                )));
            }
            let len = self.rng.index_inclusive(cfg.min_span_len, hi);
            lengths.push(len);
            used += len;
        }
        let mut gaps = vec![0usize; count + 1];
        for _ in 0..n - used {
            let slot = self.rng.index_inclusive(0, count);
            gaps[slot] += 1;
        }
        let mut spans = Vec::with_capacity(count);
        let mut cursor = 0;
        for (len, gap) in lengths.iter().zip(&gaps) {
            cursor += gap;
            spans.push(Moment::new(cursor, cursor + len - 1)?);
            cursor += len;
        }
        Ok(spans)
    }

    fn glance(&mut self, span: Moment) -> usize {
        match self.config.glance_mode {
            GlanceMode::Uniform => self.glance_rng.index_inclusive(span.start, span.end),
            GlanceMode::Extreme => {
                let margin = ((self.config.extreme_margin_fraction * span.len() as f64).ceil()
                    as usize)
                    .clamp(1, span.len());
                let offset = self.glance_rng.index_inclusive(0, margin - 1);
                if self.glance_rng.coin() {
                    span.start + offset
                } else {
                    span.end - offset
                }
            }
        }
    }
}

/// Generates a corpus from scratch. Deterministic in `config.seed`.
pub fn generate(config: &CorpusConfig) -> Result<Corpus> {
    Generator::new(config)?.generate()
}
