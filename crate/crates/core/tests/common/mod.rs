//! Brute-force reference implementations for tests.
//!
//! Nothing here calls into the library's computational paths; only plain
//! data types cross the boundary. Each oracle favours the most literal
//! formulation over speed or numerical care.

#![allow(dead_code)]

use std::fmt;

use glance_core::numerics::DenseMatrix;
use glance_core::temporal_map::Moment;

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub case: String,
    pub main: f64,
    pub oracle: f64,
    pub abs_err: f64,
    pub rel_err: f64,
}

impl OracleReport {
    pub fn new(case: impl Into<String>, main: f64, oracle: f64) -> Self {
        let abs_err = (main - oracle).abs();
        let scale = main.abs().max(oracle.abs());
        Self {
            case: case.into(),
            main,
            oracle,
            abs_err,
            rel_err: if scale > 0.0 { abs_err / scale } else { 0.0 },
        }
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: main {:.15e} oracle {:.15e} |d| {:.3e} rel {:.3e}",
            self.case, self.main, self.oracle, self.abs_err, self.rel_err
        )
    }
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    ab / (aa.sqrt() * bb.sqrt())
}

/// Weighted group contrastive loss evaluated term by term from embeddings.
pub fn oracle_loss(
    query: &[f64],
    positives: &[Vec<f64>],
    weights: &[f64],
    negatives: &[Vec<f64>],
    tau: f64,
) -> f64 {
    let mut denom = 0.0;
    for f in positives.iter().chain(negatives) {
        denom += (cos(query, f) / tau).exp();
    }
    let mut total = 0.0;
    for (f, w) in positives.iter().zip(weights) {
        let num = (cos(query, f) / tau).exp();
        total += w * (num / denom).ln();
    }
    -total / positives.len() as f64
}

/// Same loss from precomputed similarity scores.
pub fn oracle_loss_from_scores(pos: &[f64], weights: &[f64], neg: &[f64], tau: f64) -> f64 {
    let denom: f64 = pos.iter().chain(neg).map(|s| (s / tau).exp()).sum();
    let mut total = 0.0;
    for (s, w) in pos.iter().zip(weights) {
        total += w * ((s / tau).exp() / denom).ln();
    }
    -total / pos.len() as f64
}

/// Overlap of two clip ranges by counting shared clips one at a time.
pub fn oracle_iou(a: Moment, b: Moment) -> f64 {
    let lo = a.start.min(b.start);
    let hi = a.end.max(b.end);
    let mut inter = 0;
    let mut union = 0;
    for c in lo..=hi {
        let in_a = a.start <= c && c <= a.end;
        let in_b = b.start <= c && c <= b.end;
        if in_a && in_b {
            inter += 1;
        }
        if in_a || in_b {
            union += 1;
        }
    }
    inter as f64 / union as f64
}

/// Fraction of queries with some top-n prediction at IoU ≥ m.
pub fn oracle_recall(ranked: &[Vec<Moment>], gts: &[Moment], n: usize, m: f64) -> f64 {
    let mut hits = 0;
    for (preds, gt) in ranked.iter().zip(gts) {
        let mut hit = false;
        for (r, p) in preds.iter().enumerate() {
            if r < n && oracle_iou(*p, *gt) >= m {
                hit = true;
            }
        }
        if hit {
            hits += 1;
        }
    }
    hits as f64 / gts.len() as f64
}

/// Glance-centred Gaussian over `n` clips, rescaled to [0, 1].
pub fn oracle_gaussian(n: usize, mu: usize, sigma: f64) -> Vec<f64> {
    let pos = |i: usize| {
        if n == 1 {
            0.0
        } else {
            -1.0 + 2.0 * i as f64 / (n - 1) as f64
        }
    };
    let pdf: Vec<f64> = (0..n)
        .map(|i| {
            let d = pos(i) - pos(mu);
            (1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt()))
                * (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let lo = pdf.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = pdf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return vec![1.0; n];
    }
    pdf.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Mask-averaged sum of Gaussians, before clamping or renormalization.
pub fn oracle_dga(
    smoothed: &[f64],
    mask: &[bool],
    n: usize,
    sigma: f64,
    per_clip: bool,
) -> Vec<f64> {
    let c: f64 = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).sum();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for z in 0..n {
            let m = if mask[z] { 1.0 } else { 0.0 };
            let g = oracle_gaussian(n, z, sigma)[i];
            let r = if per_clip { smoothed[i] } else { smoothed[z] };
            acc += m * r * g;
        }
        out[i] = acc / c;
    }
    out
}

/// Column-wise maximum of clip rows `i..=j`.
pub fn oracle_pool(clips: &DenseMatrix, i: usize, j: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(clips.cols());
    for c in 0..clips.cols() {
        let mut best = f64::NEG_INFINITY;
        for r in i..=j {
            if clips.get(r, c) > best {
                best = clips.get(r, c);
            }
        }
        out.push(best);
    }
    out
}

/// Greedy suppression over moments already sorted best first.
pub fn oracle_nms(sorted: &[Moment], threshold: f64) -> Vec<Moment> {
    let mut kept: Vec<Moment> = Vec::new();
    for &m in sorted {
        let mut ok = true;
        for k in &kept {
            if oracle_iou(*k, m) > threshold {
                ok = false;
            }
        }
        if ok {
            kept.push(m);
        }
    }
    kept
}

/// Every `(i, j)` with `i <= j < n`, row by row.
pub fn all_moments(n: usize) -> Vec<Moment> {
    let mut v = Vec::new();
    for i in 0..n {
        for j in i..n {
            v.push(Moment { start: i, end: j });
        }
    }
    v
}
