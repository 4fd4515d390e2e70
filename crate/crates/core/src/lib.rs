//! Schema-agnostic entity typing.
//!
//! A mention is encoded through a masked-language-model transformer with the
//! template `[ mention ] ( Type : [MASK] )`; each candidate type phrase is
//! encoded by attention pooling over token embeddings tied to the MLM output
//! head; their dot product scores the pair. Because types are phrases, a model
//! pretrained on free-form types transfers to any hierarchical schema by
//! mapping each label to a phrase and fine-tuning every parameter.

// `!(x > 0.0)` is deliberate: NaN must fail range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autograd;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod objectives;
pub mod schema;
pub mod sequence;
pub mod tokenizer;
pub mod train;

pub use error::{Error, Result};
