//! Candidate moments over a clip sequence and their max-pooled features.
//!
//! All `N(N+1)/2` moments `(i, j)` with `i <= j` are enumerated densely in a
//! canonical order: ascending start, then ascending end.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// A clip span `[start, end]`, inclusive on both ends. Geometrically it covers
/// the half-open interval `[start, end + 1)` in clip units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Moment {
    pub start: usize,
    pub end: usize,
}

impl Moment {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start > end {
            return Err(Error::Index(format!(
                "moment start {start} after end {end}"
            )));
        }
        Ok(Self { start, end })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Whether clip `g` lies inside the moment.
    #[inline]
    pub fn contains(&self, g: usize) -> bool {
        self.start <= g && g <= self.end
    }

    #[inline]
    pub fn midpoint(&self) -> usize {
        (self.start + self.end) / 2
    }
}

pub fn num_moments(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Flat position of `(i, j)` in the canonical ordering.
pub fn flat_index(i: usize, j: usize, n: usize) -> Result<usize> {
    if i > j || j >= n {
        return Err(Error::Index(format!(
            "invalid moment ({i}, {j}) for {n} clips"
        )));
    }
    // rows 0..i contribute n + (n-1) + ... + (n-i+1) entries
    Ok(i * n - i * i.saturating_sub(1) / 2 + (j - i))
}

/// Inverse of [`flat_index`].
pub fn unflatten(index: usize, n: usize) -> Result<(usize, usize)> {
    if index >= num_moments(n) {
        return Err(Error::Index(format!(
            "flat index {index} out of range for {n} clips"
        )));
    }
    let mut rest = index;
    let mut i = 0;
    loop {
        let row_len = n - i;
        if rest < row_len {
            return Ok((i, i + rest));
        }
        rest -= row_len;
        i += 1;
    }
}

/// All moments in canonical order.
pub fn enumerate_moments(n: usize) -> Vec<Moment> {
    let mut out = Vec::with_capacity(num_moments(n));
    for start in 0..n {
        for end in start..n {
            out.push(Moment { start, end });
        }
    }
    out
}

/// Temporal IoU in whole-clip units.
pub fn iou(a: Moment, b: Moment) -> f64 {
    let lo = a.start.max(b.start);
    let hi = a.end.min(b.end);
    let inter = if hi >= lo { hi - lo + 1 } else { 0 };
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

pub fn contains(m: Moment, g: usize) -> bool {
    m.contains(g)
}

/// The 2D temporal map: one max-pooled feature row per candidate moment.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMap {
    n: usize,
    moments: Vec<Moment>,
    features: DenseMatrix,
    /// For every moment row and feature column, the clip that supplied the max.
    argmax: Vec<u32>,
}

impl MomentMap {
    pub fn num_clips(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.moments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moments.is_empty()
    }

    pub fn moments(&self) -> &[Moment] {
        &self.moments
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn feature(&self, i: usize, j: usize) -> Result<&[f64]> {
        Ok(self.features.row(flat_index(i, j, self.n)?))
    }

    /// Source clip of the pooled value at `(moment, column)`.
    #[inline]
    pub fn argmax(&self, moment: usize, column: usize) -> usize {
        self.argmax[moment * self.features.cols() + column] as usize
    }
}

/// Builds the moment map by incremental max pooling:
/// `row(i, j) = max(row(i, j - 1), clip j)`. Ties keep the earlier clip.
pub fn build_map(clips: &DenseMatrix) -> Result<MomentMap> {
    let (n, d) = clips.shape();
    if n == 0 || d == 0 {
        return Err(Error::EmptyInput(
            "moment map needs at least one clip".into(),
        ));
    }
    let m = num_moments(n);
    let mut features = DenseMatrix::zeros(m, d);
    let mut argmax = vec![0u32; m * d];
    let mut row = 0;
    for start in 0..n {
        features.row_mut(row).copy_from_slice(clips.row(start));
        for a in &mut argmax[row * d..(row + 1) * d] {
            *a = start as u32;
        }
        row += 1;
        for end in start + 1..n {
            let clip = clips.row(end);
            for c in 0..d {
                let prev = features.get(row - 1, c);
                if clip[c] > prev {
                    features.set(row, c, clip[c]);
                    argmax[row * d + c] = end as u32;
                } else {
                    features.set(row, c, prev);
                    argmax[row * d + c] = argmax[(row - 1) * d + c];
                }
            }
            row += 1;
        }
    }
    Ok(MomentMap {
        n,
        moments: enumerate_moments(n),
        features,
        argmax,
    })
}
