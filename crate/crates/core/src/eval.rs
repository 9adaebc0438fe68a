//! Moment ranking and R@n,IoU=m.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::GroundingSample;
use crate::error::{Error, Result};
use crate::model::{forward, ModelOptions, ModelParams};
use crate::temporal_map::{enumerate_moments, iou, Moment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_list: Vec<usize>,
    pub m_list: Vec<f64>,
    /// IoU above which a lower-ranked moment is suppressed. Top-1 is never
    /// affected by suppression.
    pub nms_threshold: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_list: vec![1, 5],
            m_list: vec![0.3, 0.5, 0.7],
            nms_threshold: Some(0.5),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.m_list.is_empty() {
            return Err(Error::InvalidConfig(
                "n_list and m_list must be nonempty".into(),
            ));
        }
        if let Some(&n) = self.n_list.iter().find(|&&n| n == 0) {
            return Err(Error::InvalidConfig(format!("n must be >= 1, got {n}")));
        }
        if let Some(&m) = self.m_list.iter().find(|&&m| !(m > 0.0 && m <= 1.0)) {
            return Err(Error::InvalidConfig(format!(
                "IoU threshold m must lie in (0, 1], got {m}"
            )));
        }
        if let Some(t) = self.nms_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidConfig(format!(
                    "nms threshold must lie in [0, 1], got {t}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedMoment {
    /// Flat index in canonical order.
    pub index: usize,
    pub moment: Moment,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub query_id: String,
    /// Best first; scores are non-increasing.
    pub ranked: Vec<RankedMoment>,
}

/// Sorts by score (ties: lower flat index) and applies greedy suppression.
pub fn rank_moments(
    scores: &[f64],
    moments: &[Moment],
    nms_threshold: Option<f64>,
) -> Result<Vec<RankedMoment>> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("no candidate moments to rank".into()));
    }
    if scores.len() != moments.len() {
        return Err(Error::dims(
            "scores per moment",
            moments.len(),
            scores.len(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept: Vec<RankedMoment> = Vec::with_capacity(order.len());
    for z in order {
        let cand = moments[z];
        if let Some(t) = nms_threshold {
            if kept.iter().any(|k| iou(k.moment, cand) > t) {
                continue;
            }
        }
        kept.push(RankedMoment {
            index: z,
            moment: cand,
            score: scores[z],
        });
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallEntry {
    pub n: usize,
    pub m: f64,
    pub hits: usize,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallTable {
    pub entries: Vec<RecallEntry>,
    pub num_queries: usize,
}

impl RecallTable {
    pub fn get(&self, n: usize, m: f64) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.n == n && e.m == m)
            .map(|e| e.recall)
    }

    /// Recall is non-decreasing in n and non-increasing in m.
    pub fn is_monotone(&self) -> bool {
        self.entries.iter().all(|a| {
            self.entries.iter().all(|b| {
                let n_ok = !(a.m == b.m && a.n <= b.n) || a.hits <= b.hits;
                let m_ok = !(a.n == b.n && a.m <= b.m) || a.hits >= b.hits;
                n_ok && m_ok
            })
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,m,recall,num_queries\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{},{}", e.n, e.m, e.recall, self.num_queries);
        }
        out
    }

    /// Inverse of [`RecallTable::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::InvalidConfig(format!("malformed recall row {line:?}"));
        let mut lines = text.lines();
        if lines.next() != Some("n,m,recall,num_queries") {
            return Err(Error::InvalidConfig("missing recall CSV header".into()));
        }
        let mut entries = Vec::new();
        let mut num_queries = 0;
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(line));
            }
            let n: usize = f[0].parse().map_err(|_| bad(line))?;
            let m: f64 = f[1].parse().map_err(|_| bad(line))?;
            let recall: f64 = f[2].parse().map_err(|_| bad(line))?;
            num_queries = f[3].parse().map_err(|_| bad(line))?;
            let hits = (recall * num_queries as f64).round() as usize;
            entries.push(RecallEntry { n, m, hits, recall });
        }
        Ok(Self {
            entries,
            num_queries,
        })
    }
}

impl fmt::Display for RecallTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<6} {:<6} {:>8}   ({} queries)",
            "n", "IoU", "recall", self.num_queries
        )?;
        for e in &self.entries {
            writeln!(f, "R@{:<4} {:<6} {:>7.2}%", e.n, e.m, 100.0 * e.recall)?;
        }
        Ok(())
    }
}

/// `gts` pairs each query id with its ground-truth span.
pub fn recall_at(
    predictions: &[Prediction],
    gts: &[(&str, Moment)],
    n_list: &[usize],
    m_list: &[f64],
) -> Result<RecallTable> {
    if gts.is_empty() {
        return Err(Error::NoQueries);
    }
    let by_id: HashMap<&str, &Prediction> = predictions
        .iter()
        .map(|p| (p.query_id.as_str(), p))
        .collect();
    let mut best: Vec<Vec<f64>> = Vec::with_capacity(gts.len());
    let max_n = n_list.iter().copied().max().unwrap_or(0);
    for (qid, gt) in gts {
        let pred = by_id
            .get(qid)
            .ok_or_else(|| Error::MissingPrediction((*qid).to_string()))?;
        // running max IoU over the first n ranks
        let mut run = Vec::with_capacity(max_n);
        let mut acc = 0.0f64;
        for r in pred.ranked.iter().take(max_n) {
            acc = acc.max(iou(r.moment, *gt));
            run.push(acc);
        }
        best.push(run);
    }
    let num_queries = gts.len();
    let mut entries = Vec::with_capacity(n_list.len() * m_list.len());
    for &n in n_list {
        for &m in m_list {
            let hits = best
                .iter()
                .filter(|run| {
                    run.get(n.min(run.len()).wrapping_sub(1))
                        .is_some_and(|&v| v >= m)
                })
                .count();
            entries.push(RecallEntry {
                n,
                m,
                hits,
                recall: hits as f64 / num_queries as f64,
            });
        }
    }
    Ok(RecallTable {
        entries,
        num_queries,
    })
}

pub fn predict(
    params: &ModelParams,
    options: &ModelOptions,
    samples: &[&GroundingSample],
    nms_threshold: Option<f64>,
) -> Result<Vec<Prediction>> {
    samples
        .iter()
        .map(|s| {
            let trace = forward(params, options, &s.clip_features, &s.query_feature)?;
            Ok(Prediction {
                query_id: s.query_id.clone(),
                ranked: rank_moments(&trace.scores, trace.map().moments(), nms_threshold)?,
            })
        })
        .collect()
}

pub fn evaluate_model(
    params: &ModelParams,
    options: &ModelOptions,
    samples: &[&GroundingSample],
    config: &EvalConfig,
) -> Result<RecallTable> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::NoQueries);
    }
    let preds = predict(params, options, samples, config.nms_threshold)?;
    let gts: Vec<(&str, Moment)> = samples
        .iter()
        .map(|s| (s.query_id.as_str(), s.gt_span))
        .collect();
    recall_at(&preds, &gts, &config.n_list, &config.m_list)
}

/// Expected R@1,IoU=m when the top moment is drawn uniformly at random:
/// the mean fraction of candidates reaching IoU ≥ m with the ground truth.
pub fn random_ranking_recall(samples: &[&GroundingSample], m: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::NoQueries);
    }
    let total: f64 = samples
        .iter()
        .map(|s| {
            let moments = enumerate_moments(s.num_clips());
            let hits = moments.iter().filter(|&&c| iou(c, s.gt_span) >= m).count();
            hits as f64 / moments.len() as f64
        })
        .sum();
    Ok(total / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    fn mo(i: usize, j: usize) -> Moment {
        Moment::new(i, j).unwrap()
    }

    fn pred(id: &str, ms: &[Moment]) -> Prediction {
        Prediction {
            query_id: id.into(),
            ranked: ms
                .iter()
                .enumerate()
                .map(|(r, &m)| RankedMoment {
                    index: r,
                    moment: m,
                    score: -(r as f64),
                })
                .collect(),
        }
    }

    #[test]
    fn equal_scores_keep_flat_order() {
        let moments = enumerate_moments(3);
        let r = rank_moments(&[0.5; 6], &moments, None).unwrap();
        assert_eq!(
            r.iter().map(|x| x.index).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, 4, 5]
        );
        let r1 = rank_moments(&[0.5; 6], &moments, Some(1.0)).unwrap();
        assert_eq!(r1.len(), 6);
        assert!(rank_moments(&[], &[], None).is_err());
    }

    #[test]
    fn greedy_nms_by_hand() {
        // (0,3) best, (0,2) IoU 0.75 with it, (3,5) IoU 1/6 with (0,3)
        let moments = [mo(0, 3), mo(0, 2), mo(3, 5)];
        let r = rank_moments(&[0.9, 0.8, 0.7], &moments, Some(0.5)).unwrap();
        assert_eq!(r.iter().map(|x| x.index).collect::<Vec<_>>(), vec![0, 2]);
        let r = rank_moments(&[0.9, 0.8, 0.7], &moments, Some(0.8)).unwrap();
        assert_eq!(r.len(), 3);
    }

    #[test]
    fn ranking_is_a_permutation_prefix() {
        let mut rng = SeededRng::new(4);
        let moments = enumerate_moments(8);
        let scores: Vec<f64> = (0..moments.len()).map(|_| rng.uniform(0.0, 1.0)).collect();
        let r = rank_moments(&scores, &moments, Some(0.5)).unwrap();
        let mut seen = vec![false; moments.len()];
        for x in &r {
            assert!(!seen[x.index]);
            seen[x.index] = true;
        }
        assert!(r.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn recall_thresholds() {
        let gt = mo(0, 4);
        let exact =
            recall_at(&[pred("a", &[gt])], &[("a", gt)], &[1, 5], &[0.3, 0.5, 0.7]).unwrap();
        assert!(exact.entries.iter().all(|e| e.recall == 1.0));
        // IoU 3/5 = 0.6
        let t = recall_at(&[pred("a", &[mo(0, 2)])], &[("a", gt)], &[1], &[0.5, 0.7]).unwrap();
        assert_eq!(t.get(1, 0.5), Some(1.0));
        assert_eq!(t.get(1, 0.7), Some(0.0));
        assert!(t.is_monotone());
    }

    #[test]
    fn recall_errors() {
        assert!(matches!(
            recall_at(&[], &[], &[1], &[0.5]),
            Err(Error::NoQueries)
        ));
        assert!(matches!(
            recall_at(&[pred("a", &[mo(0, 1)])], &[("b", mo(0, 1))], &[1], &[0.5]),
            Err(Error::MissingPrediction(_))
        ));
        assert!(EvalConfig {
            m_list: vec![1.2],
            ..EvalConfig::default()
        }
        .validate()
        .is_err());
        assert!(EvalConfig {
            m_list: vec![0.0],
            ..EvalConfig::default()
        }
        .validate()
        .is_err());
        assert!(EvalConfig {
            n_list: vec![0],
            ..EvalConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn csv_round_trip() {
        let gts = [("a", mo(0, 4)), ("b", mo(2, 3)), ("c", mo(5, 7))];
        let preds = vec![
            pred("a", &[mo(0, 3), mo(5, 6)]),
            pred("b", &[mo(0, 1), mo(2, 3)]),
            pred("c", &[mo(0, 1)]),
        ];
        let t = recall_at(&preds, &gts, &[1, 5], &[0.3, 0.5, 0.7]).unwrap();
        assert!(t.is_monotone());
        let csv = t.to_csv();
        assert!(csv.starts_with("n,m,recall,num_queries\n1,0.3,"));
        assert_eq!(RecallTable::from_csv(&csv).unwrap(), t);
        assert!(format!("{t}").contains("R@5"));
    }
}
