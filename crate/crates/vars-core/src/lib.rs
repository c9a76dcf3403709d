//! Graph-based ECG representation learning.
//!
//! The pipeline turns a multi-lead ECG record into a graph (nodes are
//! fixed-length time intervals, edges come from thresholded self-attention),
//! pretrains a GIN encoder with masked reconstruction plus two contrastive
//! objectives over conditionally extracted feature subgraphs, then fits a
//! lightweight classifier head and explains its predictions by scoring which
//! time intervals drove them.
//!
//! Crate layout follows the pipeline: [`numerics`] is the autodiff substrate,
//! [`signal`] handles records and synthesis, [`graphcon`] builds graphs,
//! [`encoder`]/[`subgraph`]/[`contrastive`] define the model and losses,
//! [`train`] runs pretraining with checkpoints, [`classify`] fits and scores
//! the head, [`interpret`] produces explanations and dashboards, and
//! [`sweeps`] runs hyperparameter studies and profiling.

pub mod error;
pub mod numerics;
pub mod par;
pub mod classify;
pub mod contrastive;
pub mod encoder;
pub mod graphcon;
pub mod interpret;
pub mod model;
pub mod signal;
pub mod subgraph;
pub mod sweeps;
pub mod train;

pub use error::{Result, VarsError};

pub const CORE_VERSION: &str = env!("CARGO_PKG_VERSION");
