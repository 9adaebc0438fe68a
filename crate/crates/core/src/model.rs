//! Two-tower moment/query embedding model.
//!
//! Video tower: clip features → linear reduction → max-pooled 2D moment map →
//! linear projection. Query tower: a single linear projection. A moment's
//! matching score is the cosine similarity of the two embeddings.
//!
//! Gradients are derived by hand. The max pool routes each column's gradient
//! to the clip recorded as its argmax during the forward pass (lowest clip
//! index on ties), so backward is deterministic.

use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix_io::{read_matrix, write_matrix};
use crate::numerics::{axpy, dot, l2_norm, DenseMatrix, SeededRng};
use crate::temporal_map::{build_map, MomentMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelDims {
    /// Input clip feature size.
    pub clip_dim: usize,
    /// Size after the clip FC reduction.
    pub reduced_dim: usize,
    /// Input query feature size.
    pub query_dim: usize,
    /// Joint embedding size shared by both towers.
    pub joint_dim: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            clip_dim: 16,
            reduced_dim: 16,
            query_dim: 16,
            joint_dim: 32,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.clip_dim == 0 || self.reduced_dim == 0 || self.query_dim == 0 || self.joint_dim == 0
        {
            return Err(Error::InvalidConfig(format!(
                "model dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    #[default]
    Cosine,
    /// Raw inner product, for ablation.
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    /// Apply a rectifier after the clip reduction.
    pub rectify: bool,
    pub similarity: Similarity,
}

/// Learnable parameters. Also used, with identical shapes, for gradients and
/// optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    /// clip_dim × reduced_dim
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    /// reduced_dim × joint_dim
    pub wv: DenseMatrix,
    pub bv: Vec<f64>,
    /// query_dim × joint_dim
    pub ws: DenseMatrix,
    pub bs: Vec<f64>,
}

pub type Gradients = ModelParams;

const TENSOR_NAMES: [&str; 6] = ["w1", "b1", "wv", "bv", "ws", "bs"];

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            dims,
            w1: DenseMatrix::zeros(dims.clip_dim, dims.reduced_dim),
            b1: vec![0.0; dims.reduced_dim],
            wv: DenseMatrix::zeros(dims.reduced_dim, dims.joint_dim),
            bv: vec![0.0; dims.joint_dim],
            ws: DenseMatrix::zeros(dims.query_dim, dims.joint_dim),
            bs: vec![0.0; dims.joint_dim],
        }
    }

    /// Weights i.i.d. uniform in `[-scale, scale]`, biases zero.
    pub fn init(dims: ModelDims, rng: &mut SeededRng, scale: f64) -> Result<Self> {
        dims.validate()?;
        if !(scale >= 0.0) || !scale.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "init scale must be >= 0, got {scale}"
            )));
        }
        let mut p = Self::zeros(dims);
        p.w1 = rng.uniform_matrix(dims.clip_dim, dims.reduced_dim, scale);
        p.wv = rng.uniform_matrix(dims.reduced_dim, dims.joint_dim, scale);
        p.ws = rng.uniform_matrix(dims.query_dim, dims.joint_dim, scale);
        Ok(p)
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice(),
            &self.b1,
            self.wv.as_slice(),
            &self.bv,
            self.ws.as_slice(),
            &self.bs,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.wv.as_mut_slice(),
            &mut self.bv,
            self.ws.as_mut_slice(),
            &mut self.bs,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All parameters concatenated in the order w1, b1, wv, bv, ws, bs.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn from_flat(dims: ModelDims, flat: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(dims);
        if flat.len() != p.num_params() {
            return Err(Error::dims(
                "flat parameter vector",
                p.num_params(),
                flat.len(),
            ));
        }
        let mut offset = 0;
        for t in p.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(p)
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.dims == other.dims
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, other: &ModelParams, alpha: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            axpy(alpha, src, dst);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= alpha);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors().iter().map(|t| dot(t, t)).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Rounds every parameter to the nearest `f32` (checkpoint precision).
    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }
}

/// Intermediates cached by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    clips: DenseMatrix,
    /// Clip reduction before the optional rectifier.
    pre_activation: DenseMatrix,
    reduced: DenseMatrix,
    map: MomentMap,
    /// Moment embeddings, one row per candidate moment.
    pub moments: DenseMatrix,
    query_input: Vec<f64>,
    /// Query embedding.
    pub query: Vec<f64>,
    /// Similarity of the query to every moment, in canonical moment order.
    pub scores: Vec<f64>,
}

impl ForwardTrace {
    pub fn map(&self) -> &MomentMap {
        &self.map
    }

    /// Reduced clip features (after the optional rectifier).
    pub fn reduced(&self) -> &DenseMatrix {
        &self.reduced
    }

    pub fn num_moments(&self) -> usize {
        self.moments.rows()
    }
}

pub fn similarity(kind: Similarity, q: &[f64], f: &[f64]) -> Result<f64> {
    match kind {
        Similarity::Dot => Ok(dot(q, f)),
        Similarity::Cosine => {
            let nq = l2_norm(q);
            let nf = l2_norm(f);
            if nq == 0.0 || nf == 0.0 {
                return Err(Error::ZeroNorm {
                    context: format!("|query| = {nq}, |moment| = {nf}"),
                });
            }
            Ok(dot(q, f) / (nq * nf))
        }
    }
}

/// Adds `upstream · ∂sim/∂q` into `dq` and `upstream · ∂sim/∂f` into `df`.
pub fn accumulate_similarity_grad(
    kind: Similarity,
    q: &[f64],
    f: &[f64],
    upstream: f64,
    dq: &mut [f64],
    df: &mut [f64],
) -> Result<()> {
    if upstream == 0.0 {
        return Ok(());
    }
    match kind {
        Similarity::Dot => {
            axpy(upstream, f, dq);
            axpy(upstream, q, df);
        }
        Similarity::Cosine => {
            let nq = l2_norm(q);
            let nf = l2_norm(f);
            if nq == 0.0 || nf == 0.0 {
                return Err(Error::ZeroNorm {
                    context: format!("|query| = {nq}, |moment| = {nf}"),
                });
            }
            let inv = 1.0 / (nq * nf);
            let s = dot(q, f) * inv;
            // ∂s/∂q = f/(|q||f|) - s q/|q|²,  ∂s/∂f = q/(|q||f|) - s f/|f|²
            axpy(upstream * inv, f, dq);
            axpy(-upstream * s / (nq * nq), q, dq);
            axpy(upstream * inv, q, df);
            axpy(-upstream * s / (nf * nf), f, df);
        }
    }
    Ok(())
}

fn check_inputs(params: &ModelParams, clips: &DenseMatrix, query: &[f64]) -> Result<()> {
    if clips.cols() != params.dims.clip_dim {
        return Err(Error::dims(
            "clip feature dim",
            params.dims.clip_dim,
            clips.cols(),
        ));
    }
    if query.len() != params.dims.query_dim {
        return Err(Error::dims(
            "query feature dim",
            params.dims.query_dim,
            query.len(),
        ));
    }
    if clips.rows() == 0 {
        return Err(Error::EmptyInput("video without clips".into()));
    }
    Ok(())
}

fn reduce(
    params: &ModelParams,
    opts: &ModelOptions,
    clips: &DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let mut pre = clips.matmul(&params.w1)?;
    pre.add_row_bias(&params.b1)?;
    let mut reduced = pre.clone();
    if opts.rectify {
        reduced
            .as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = v.max(0.0));
    }
    Ok((pre, reduced))
}

/// Clip features after the learned reduction (the video tower's first stage).
pub fn reduce_clips(
    params: &ModelParams,
    opts: &ModelOptions,
    clips: &DenseMatrix,
) -> Result<DenseMatrix> {
    if clips.cols() != params.dims.clip_dim {
        return Err(Error::dims(
            "clip feature dim",
            params.dims.clip_dim,
            clips.cols(),
        ));
    }
    Ok(reduce(params, opts, clips)?.1)
}

pub fn embed_query(params: &ModelParams, query: &[f64]) -> Result<Vec<f64>> {
    let mut q = params.ws.vec_matmul(query)?;
    axpy(1.0, &params.bs, &mut q);
    Ok(q)
}

pub fn forward(
    params: &ModelParams,
    opts: &ModelOptions,
    clips: &DenseMatrix,
    query: &[f64],
) -> Result<ForwardTrace> {
    check_inputs(params, clips, query)?;
    let (pre_activation, reduced) = reduce(params, opts, clips)?;
    let map = build_map(&reduced)?;
    let mut moments = map.features().matmul(&params.wv)?;
    moments.add_row_bias(&params.bv)?;
    let q = embed_query(params, query)?;
    let scores = moments
        .row_iter()
        .enumerate()
        .map(|(z, f)| {
            similarity(opts.similarity, &q, f).map_err(|e| match e {
                Error::ZeroNorm { context } => {
                    let m = map.moments()[z];
                    Error::ZeroNorm {
                        context: format!("moment ({}, {}): {context}", m.start, m.end),
                    }
                }
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForwardTrace {
        clips: clips.clone(),
        pre_activation,
        reduced,
        map,
        moments,
        query_input: query.to_vec(),
        query: q,
        scores,
    })
}

fn check_trace(trace: &ForwardTrace, params: &ModelParams) -> Result<()> {
    let d = params.dims;
    if trace.clips.cols() != d.clip_dim
        || trace.reduced.cols() != d.reduced_dim
        || trace.moments.cols() != d.joint_dim
        || trace.query_input.len() != d.query_dim
    {
        return Err(Error::InvalidConfig(format!(
            "stale forward trace: shapes do not match model dims {d:?}"
        )));
    }
    Ok(())
}

/// Gradients of `Σ_z upstream[z] · score[z]` with respect to all parameters.
pub fn backward(
    trace: &ForwardTrace,
    params: &ModelParams,
    opts: &ModelOptions,
    upstream: &[f64],
) -> Result<Gradients> {
    check_trace(trace, params)?;
    let m = trace.num_moments();
    if upstream.len() != m {
        return Err(Error::dims("upstream score gradient", m, upstream.len()));
    }
    let mut d_query = vec![0.0; params.dims.joint_dim];
    let mut d_moments = DenseMatrix::zeros(m, params.dims.joint_dim);
    for (z, &u) in upstream.iter().enumerate() {
        accumulate_similarity_grad(
            opts.similarity,
            &trace.query,
            trace.moments.row(z),
            u,
            &mut d_query,
            d_moments.row_mut(z),
        )?;
    }
    backward_embeddings(trace, params, opts, &d_query, &d_moments)
}

/// Backpropagates gradients given directly on the query embedding and the
/// moment embeddings.
pub fn backward_embeddings(
    trace: &ForwardTrace,
    params: &ModelParams,
    opts: &ModelOptions,
    d_query: &[f64],
    d_moments: &DenseMatrix,
) -> Result<Gradients> {
    check_trace(trace, params)?;
    let dims = params.dims;
    if d_query.len() != dims.joint_dim {
        return Err(Error::dims(
            "query embedding gradient",
            dims.joint_dim,
            d_query.len(),
        ));
    }
    if d_moments.shape() != trace.moments.shape() {
        return Err(Error::dims(
            "moment embedding gradient rows",
            trace.moments.rows(),
            d_moments.rows(),
        ));
    }
    let mut g = ModelParams::zeros(dims);

    // query tower
    for (k, &x) in trace.query_input.iter().enumerate() {
        axpy(x, d_query, g.ws.row_mut(k));
    }
    g.bs.copy_from_slice(d_query);

    // moment projection
    g.wv = trace.map.features().t_matmul(d_moments)?;
    g.bv = d_moments.column_sums();
    let d_map = d_moments.matmul_t(&params.wv)?;

    // max pool: route to the argmax clip of every (moment, column)
    let mut d_reduced = DenseMatrix::zeros(trace.reduced.rows(), dims.reduced_dim);
    for z in 0..d_map.rows() {
        let row = d_map.row(z);
        for (c, &v) in row.iter().enumerate() {
            if v != 0.0 {
                let src = trace.map.argmax(z, c);
                let cur = d_reduced.get(src, c);
                d_reduced.set(src, c, cur + v);
            }
        }
    }
    if opts.rectify {
        for (d, &pre) in d_reduced
            .as_mut_slice()
            .iter_mut()
            .zip(trace.pre_activation.as_slice())
        {
            if pre <= 0.0 {
                *d = 0.0;
            }
        }
    }

    // clip reduction
    g.w1 = trace.clips.t_matmul(&d_reduced)?;
    g.b1 = d_reduced.column_sums();
    Ok(g)
}

/// Checkpoint header stored as `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub dims: ModelDims,
    pub options: ModelOptions,
    pub tensors: Vec<String>,
}

pub const CHECKPOINT_HEADER: &str = "model.json";

fn tensor_file(name: &str) -> String {
    format!("model_{name}.bin")
}

/// Writes `model.json` and one `model_<tensor>.bin` per tensor into `dir`.
/// Matrices are stored as `f32`; parameters that are not exactly
/// representable in `f32` are rounded.
pub fn save_params(params: &ModelParams, opts: &ModelOptions, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let header = CheckpointHeader {
        dims: params.dims,
        options: *opts,
        tensors: TENSOR_NAMES.iter().map(|n| tensor_file(n)).collect(),
    };
    let mut text = serde_json::to_string_pretty(&header)?;
    text.push('\n');
    fs::write(dir.join(CHECKPOINT_HEADER), text)?;
    for (name, t) in TENSOR_NAMES.iter().zip(params.tensors()) {
        let m = match *name {
            "w1" => params.w1.clone(),
            "wv" => params.wv.clone(),
            "ws" => params.ws.clone(),
            _ => DenseMatrix::from_vec(1, t.len(), t.to_vec())?,
        };
        write_matrix(&dir.join(tensor_file(name)), &m)?;
    }
    Ok(())
}

pub fn load_params(dir: &Path) -> Result<(ModelParams, ModelOptions)> {
    let header_path = dir.join(CHECKPOINT_HEADER);
    let text = match fs::read_to_string(&header_path) {
        Ok(t) => t,
        Err(e) if e.kind() == ErrorKind::NotFound => return Err(Error::MissingFile(header_path)),
        Err(e) => return Err(e.into()),
    };
    let header: CheckpointHeader = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: header_path.clone(),
        reason: e.to_string(),
    })?;
    header.dims.validate()?;
    let mut params = ModelParams::zeros(header.dims);
    let shapes = {
        let d = header.dims;
        [
            (d.clip_dim, d.reduced_dim),
            (1, d.reduced_dim),
            (d.reduced_dim, d.joint_dim),
            (1, d.joint_dim),
            (d.query_dim, d.joint_dim),
            (1, d.joint_dim),
        ]
    };
    for ((name, dst), (rows, cols)) in TENSOR_NAMES.iter().zip(params.tensors_mut()).zip(shapes) {
        let path = dir.join(tensor_file(name));
        let m = read_matrix(&path)?;
        if m.rows() != rows {
            return Err(Error::dims(
                format!("rows of {}", path.display()),
                rows,
                m.rows(),
            ));
        }
        if m.cols() != cols {
            return Err(Error::dims(
                format!("cols of {}", path.display()),
                cols,
                m.cols(),
            ));
        }
        dst.copy_from_slice(m.as_slice());
    }
    Ok((params, header.options))
}
