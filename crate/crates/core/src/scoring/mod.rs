//! Comparing two settings: shared-bin PDFs, intersection similarity,
//! weighted indicator scores and the supporting statistics.

mod compare;
pub mod histogram;
pub mod stats;

pub use compare::{
    compare_settings, compare_settings_detailed, default_weights, indicator_score, CellDetail,
    DetailedComparison,
};
pub use histogram::{
    empirical_pdf, histogram, intersection_similarity, shared_edges, BinMode, BinPolicy,
    EmpiricalPdf, Histogram, OutOfRange, RangeMode,
};
pub use stats::{
    descriptive_stats, levene_test, levene_two, linear_regression, pearson, spearman, Correlation,
    Regression,
};
