//! Dense linear algebra, seeded randomness and a finite-difference gradient
//! oracle shared by the rest of the crate.
//!
//! Everything here works in `f64`. File formats narrow to `f32` at the I/O
//! boundary only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims("matrix data length", rows * cols, data.len()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "matrix entry ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::dims(format!("row {r}"), cols, row.len()));
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero chunk size
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::dims("matmul inner dimension", self.cols, rhs.rows));
        }
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let lhs_row = self.row(r);
            let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for (k, &a) in lhs_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, rhs.row(k), out_row);
            }
        }
        Ok(out)
    }

    /// `selfᵀ · rhs`, without materializing the transpose.
    pub fn t_matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != rhs.rows {
            return Err(Error::dims("t_matmul shared rows", self.rows, rhs.rows));
        }
        let mut out = DenseMatrix::zeros(self.cols, rhs.cols);
        for r in 0..self.rows {
            let rhs_row = rhs.row(r);
            for (c, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, rhs_row, out.row_mut(c));
            }
        }
        Ok(out)
    }

    /// `self · rhsᵀ`.
    pub fn matmul_t(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.cols {
            return Err(Error::dims("matmul_t shared cols", self.cols, rhs.cols));
        }
        let mut out = DenseMatrix::zeros(self.rows, rhs.rows);
        for r in 0..self.rows {
            for k in 0..rhs.rows {
                out.data[r * rhs.rows + k] = dot(self.row(r), rhs.row(k));
            }
        }
        Ok(out)
    }

    /// Row vector times matrix: `v · self`.
    pub fn vec_matmul(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::dims("vector-matrix product", self.rows, v.len()));
        }
        let mut out = vec![0.0; self.cols];
        for (k, &a) in v.iter().enumerate() {
            axpy(a, self.row(k), &mut out);
        }
        Ok(out)
    }

    /// Adds `bias` to every row.
    pub fn add_row_bias(&mut self, bias: &[f64]) -> Result<()> {
        if bias.len() != self.cols {
            return Err(Error::dims("row bias", self.cols, bias.len()));
        }
        for r in 0..self.rows {
            for (x, b) in self.row_mut(r).iter_mut().zip(bias) {
                *x += b;
            }
        }
        Ok(())
    }

    /// Sum over rows.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.row_iter() {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rounds every entry to the nearest `f32`, so that storing the matrix in
    /// a 32-bit file round-trips exactly.
    pub fn round_to_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Cosine similarity. Zero-norm inputs are an error rather than a NaN.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims("cosine operands", a.len(), b.len()));
    }
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm {
            context: format!("|a| = {na}, |b| = {nb}"),
        });
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Min-max normalization into `[0, 1]`. A constant vector maps to all ones.
pub fn minmax_normalize(v: &[f64]) -> Vec<f64> {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let span = hi - lo;
    if span <= 0.0 || !span.is_finite() {
        return vec![1.0; v.len()];
    }
    v.iter().map(|&x| (x - lo) / span).collect()
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Central finite-difference gradient with a fixed step `h`.
pub fn finite_diff_gradient<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    finite_diff_with_step(f, x, |_| h)
}

/// Central differences with a per-coordinate step `h · (1 + |x_k|)`.
pub fn finite_diff_gradient_scaled<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    finite_diff_with_step(f, x, |xk| h * (1.0 + xk.abs()))
}

fn finite_diff_with_step<F, S>(mut f: F, x: &[f64], step: S) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
    S: Fn(f64) -> f64,
{
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let h = step(x[k]);
        if !(h > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "finite-difference step must be positive, got {h}"
            )));
        }
        probe[k] = x[k] + h;
        let plus = f(&probe);
        probe[k] = x[k] - h;
        let minus = f(&probe);
        probe[k] = x[k];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "function value at coordinate {k} (f+ = {plus}, f- = {minus})"
            )));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Deterministic random source. Same seed and same call sequence give the
/// same stream on every platform (ChaCha8).
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent stream, e.g. one per experiment arm.
    pub fn fork(&mut self) -> SeededRng {
        SeededRng::new(self.inner.random())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform in `[lo, hi]`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return lo;
        }
        self.inner.random_range(lo..=hi)
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `[lo, hi]`, inclusive.
    pub fn index_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        self.inner.random_range(lo..=hi)
    }

    pub fn coin(&mut self) -> bool {
        self.inner.random()
    }

    /// Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index_inclusive(0, i);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
        let data = (0..rows * cols).map(|_| scale * self.normal()).collect();
        DenseMatrix { rows, cols, data }
    }

    pub fn uniform_matrix(&mut self, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
        let data = (0..rows * cols)
            .map(|_| self.uniform(-scale, scale))
            .collect();
        DenseMatrix { rows, cols, data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 2.0], &[2.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_zero_norm_is_an_error() {
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroNorm { .. })
        ));
        assert!(matches!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn finite_diff_examples() {
        let g = finite_diff_gradient(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);

        let g = finite_diff_gradient(|_| 4.2, &[1.0, -2.0, 3.0], 1e-5).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));

        let g = finite_diff_gradient(|x| x[0] * x[1], &[2.0, 5.0], 1e-5).unwrap();
        assert!((g[0] - 5.0).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn finite_diff_rejects_non_finite_and_bad_step() {
        let err = finite_diff_gradient(|x| 1.0 / x[0], &[0.0], 0.0);
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
        let err = finite_diff_gradient(|x| (x[0] - 1.0).ln(), &[1.0], 1e-3);
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(minmax_normalize(&[1.0, 2.0, 3.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_normalize(&[5.0, 5.0, 5.0]), vec![1.0, 1.0, 1.0]);
        let v = minmax_normalize(&[0.003866, 0.80074, 1.0]);
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 0.79997).abs() < 1e-5);
        assert_eq!(v[2], 1.0);
    }

    #[test]
    fn matrix_products_agree() {
        let mut rng = SeededRng::new(3);
        let a = rng.normal_matrix(4, 3, 1.0);
        let b = rng.normal_matrix(4, 5, 1.0);
        let c = rng.normal_matrix(5, 3, 1.0);
        let atb = a.t_matmul(&b).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                let expect: f64 = (0..4).map(|r| a.get(r, i) * b.get(r, j)).sum();
                assert!((atb.get(i, j) - expect).abs() < 1e-12);
            }
        }
        let bc = b.matmul(&c).unwrap();
        let bc_t = b
            .matmul_t(&DenseMatrix::from_rows(&transpose(&c)).unwrap())
            .unwrap();
        assert_eq!(bc.shape(), (4, 3));
        for (x, y) in bc.as_slice().iter().zip(bc_t.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(a.matmul(&b).is_err());
    }

    fn transpose(m: &DenseMatrix) -> Vec<Vec<f64>> {
        (0..m.cols())
            .map(|c| (0..m.rows()).map(|r| m.get(r, c)).collect())
            .collect()
    }

    #[test]
    fn from_vec_rejects_bad_input() {
        assert!(DenseMatrix::from_vec(2, 2, vec![0.0; 3]).is_err());
        assert!(DenseMatrix::from_vec(1, 2, vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn compensated_sum_handles_cancellation() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    proptest! {
        #[test]
        fn cosine_scale_invariant(
            a in proptest::collection::vec(-10.0f64..10.0, 1..8),
            c in 0.01f64..100.0,
        ) {
            prop_assume!(l2_norm(&a) > 1e-6);
            let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
            prop_assert!((cosine(&a, &scaled).unwrap() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn finite_diff_matches_quadratic_form(
            diag in proptest::collection::vec(0.1f64..5.0, 1..6),
            x in proptest::collection::vec(-3.0f64..3.0, 6),
        ) {
            let n = diag.len();
            let x = &x[..n];
            // f(x) = sum_i d_i x_i^2 + sum_i x_i x_{i+1}
            let f = |v: &[f64]| {
                let mut s = 0.0;
                for i in 0..v.len() {
                    s += diag[i] * v[i] * v[i];
                    if i + 1 < v.len() {
                        s += v[i] * v[i + 1];
                    }
                }
                s
            };
            let fd = finite_diff_gradient(f, x, 1e-4).unwrap();
            for i in 0..n {
                let mut g = 2.0 * diag[i] * x[i];
                if i + 1 < n { g += x[i + 1]; }
                if i > 0 { g += x[i - 1]; }
                prop_assert!(relative_error(fd[i], g, 1e-6) <= 1e-6);
            }
        }

        #[test]
        fn minmax_idempotent_on_unit_span(
            mut v in proptest::collection::vec(0.0f64..1.0, 0..10),
        ) {
            v.push(0.0);
            v.push(1.0);
            prop_assert_eq!(minmax_normalize(&v), v);
        }

        #[test]
        fn rng_streams_reproducible(seed in any::<u64>()) {
            let mut a = SeededRng::new(seed);
            let mut b = SeededRng::new(seed);
            for _ in 0..32 {
                prop_assert_eq!(a.next_u64(), b.next_u64());
                prop_assert_eq!(a.normal().to_bits(), b.normal().to_bits());
            }
        }
    }
}
