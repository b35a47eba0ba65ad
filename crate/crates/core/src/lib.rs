//! Sentiment labeling of threaded social-media messages with a graph
//! attention network stacked on a transformer baseline, followed by
//! mixed-effects inference on the labeled counts.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`corpus`]: message, edge, embedding and score files, id mapping and
//!   stratified splits
//! - [`graph`]: the reply graph in CSR form
//! - [`gat`]: a single-layer multi-head graph attention classifier with
//!   hand-written gradients and Adam training
//! - [`calibrate`]: cutoff selection, rescaling and the logistic meta-model
//! - [`metrics`]: confusion matrices, classification metrics, Cohen's kappa
//! - [`glmm`]: random-intercept logit models on school-year counts
//!
//! All randomness comes from [`rng::SplitMix64`] so runs are reproducible
//! across platforms.

pub mod calibrate;
pub mod corpus;
pub mod error;
pub mod gat;
pub mod glmm;
pub mod graph;
pub mod logistic;
pub mod metrics;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
