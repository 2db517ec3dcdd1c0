//! Adaptive neighborhood metric learning.
//!
//! * [`logexp`]: log-exp mean surrogate, trimmed radii and the `K ↔ γ` root.
//! * [`geometry`]: inseparable-region membership, class gaps, Lipschitz bounds.
//! * [`metric`]: the convex Mahalanobis learner, PNCA, and the PSD solver.
//! * [`embedding`]: batch losses on embeddings with analytic gradients.
//! * [`data`]: loading, standardization, PCA and splits.
//! * [`eval`]: k-NN / Recall@K evaluation and experiment drivers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod cli;
pub mod data;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod fetch;
pub mod geometry;
pub mod logexp;
pub mod metric;
pub mod pairs;
pub mod par;
mod simplex;

pub use data::{LabeledDataset, SplitPlan};
pub use error::{Error, Result};
pub use logexp::{NeighborhoodSpec, NumberSeries};
pub use metric::MetricMatrix;
pub use par::Exec;
