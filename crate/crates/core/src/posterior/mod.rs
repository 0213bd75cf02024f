//! Compression of posterior draw archives into portable summaries.

pub mod diagnostics;
pub mod dirichlet;
pub mod summary;

pub use diagnostics::{bulk_ess, diagnostics, split_rhat, RHAT_LIMIT};
pub use dirichlet::{
    approximate_rows, moment_match_dirichlet, DirichletFit, RowApproximation, SCALE_FLOOR,
};
pub use summary::{
    quantile_sorted, summarize, summarize_values, ParamSummary, PosteriorSummary, ScalarSummary,
    DEFAULT_PROBS,
};
