//! Glance-supervised temporal sentence grounding.
//!
//! A learner sees, for every (video, query) pair, only a single glance clip
//! inside the target moment. This crate builds the full pipeline around that
//! supervision: synthetic corpora with known ground truth, a two-tower moment
//! and query embedding model over a dense 2D temporal map, Gaussian and
//! relevance-adjusted moment priors, a prior-weighted group contrastive loss
//! with hand-derived gradients, and recall-at-IoU evaluation.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod error;
pub mod eval;
pub mod matrix_io;
pub mod model;
pub mod numerics;
pub mod prior;
pub mod sagcl;
pub mod temporal_map;
pub mod trainer;

pub use error::{Error, Result};
