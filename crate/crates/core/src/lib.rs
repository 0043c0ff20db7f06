// SPDX-License-Identifier: MIT OR Apache-2.0

//! # cbmw-core
//!
//! Concept bottleneck model workbench. A concept predictor `g` maps tabular
//! features to interpretable concepts and a label predictor `f` maps the
//! concept bottleneck to a label probability. Context-aware models append
//! binary concepts extracted from clinical text to the bottleneck.
//!
//! Modules:
//! - [`schema`]: feature and concept declarations, cohort containers
//! - [`data`]: synthetic cohorts, CSV I/O, preprocessing
//! - [`textconcepts`]: chunking, prompts and Yes/No extraction
//! - [`nn`]: dense networks, losses, gradients, Adam
//! - [`cbm`]: joint and sequential training, prediction, baselines
//! - [`intervene`]: test-time concept interventions
//! - [`metrics`]: classification, concept quality, MI and leakage scores

pub mod cbm;
pub mod data;
pub mod error;
pub mod intervene;
pub mod metrics;
pub mod nn;
pub mod schema;
pub mod textconcepts;

pub use cbm::{CbmModel, Mode, ModelBundle, Regime, TrainConfig};
pub use data::PreprocessStats;
pub use error::{Error, Result};
pub use intervene::{InterventionRequest, InterventionResult, PropagationMode, ValueSource};
pub use metrics::{LeakageReport, MetricsReport};
pub use schema::{Cohort, ConceptSchema, FeatureSchema, PatientRecord, Schema, Split};
