// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic cohorts, CSV ingestion and the preprocessing pipeline.

pub mod generate;
pub mod io;
pub mod preprocess;

pub use generate::{generate_cohort, GeneratorConfig};
pub use io::{load_cohort_dir, read_cohort_csv, save_cohort_dir, write_cohort_csv};
pub use preprocess::{
    apply_preprocess, compute_stats, drop_sparse_features, fit_preprocess, impute_median, median,
    minmax_scale, pearson, ColumnStat, ConceptStat, PreprocessStats, DEFAULT_MISSING_THRESHOLD,
};
