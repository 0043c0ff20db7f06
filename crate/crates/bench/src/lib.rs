// SPDX-License-Identifier: MIT OR Apache-2.0

//! Benchmark fixtures shared by the criterion targets.

use cbmw_core::data::{fit_preprocess, generate_cohort, GeneratorConfig};
use cbmw_core::textconcepts::Lexicon;
use cbmw_core::{Cohort, PreprocessStats, Schema};

/// Preprocessed synthetic cohort on the built-in schema.
pub fn cohort(n: usize, seed: u64) -> (Cohort, PreprocessStats) {
    let schema = Schema::ards_default();
    let cfg = GeneratorConfig::ards_default(&schema, n, seed);
    let raw = generate_cohort(&cfg, &schema, &Lexicon::for_schema(&schema)).expect("generate cohort");
    fit_preprocess(&raw, 0.5).expect("preprocess cohort")
}
