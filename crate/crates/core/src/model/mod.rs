//! Gradient-boosted regression trees over log10 throughput.
//!
//! Splits are exact: every distinct value of every sampled feature is a
//! candidate threshold. Each node also keeps the residual variance of the
//! rows that reached it, which the uncertainty module reads as a per-member
//! aleatory estimate.

mod gbt;
mod grid;
mod tree;

pub use gbt::{
    feature_matrix, GbtHyperparams, GbtModel, TimeScaling, MIN_VARIANCE_ROWS, MODEL_FORMAT,
    MODEL_FORMAT_VERSION,
};
pub use grid::{grid_search, write_grid_csv, GridRow, GridSearchResult, HyperparamGrid};
pub use tree::{FeatureMatrix, Node, Tree};
