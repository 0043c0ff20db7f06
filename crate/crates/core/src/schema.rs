// SPDX-License-Identifier: MIT OR Apache-2.0

//! Typed vocabulary: feature layout, concept declarations and cohort containers.
//!
//! Concept order is schema order everywhere. Tabular concepts must precede
//! text concepts, so the bottleneck of a context-aware model is exactly the
//! concept list in schema order, and a vanilla bottleneck is its tabular prefix.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const ARDS_SCHEMA_JSON: &str = include_str!("../data/ards_schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConceptSource {
    Tabular,
    Text,
}

/// One input feature. `group` optionally ties the feature to a latent factor
/// used by the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: ValueKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptSpec {
    pub name: String,
    pub kind: ValueKind,
    pub source: ConceptSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    pub fn d(&self) -> usize {
        self.features.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptSchema {
    pub concepts: Vec<ConceptSpec>,
}

impl ConceptSchema {
    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.concepts.iter().position(|c| c.name == name)
    }

    pub fn tabular_count(&self) -> usize {
        self.concepts
            .iter()
            .filter(|c| c.source == ConceptSource::Tabular)
            .count()
    }

    pub fn text_count(&self) -> usize {
        self.len() - self.tabular_count()
    }

    /// Indices of text concepts, in schema order.
    pub fn text_indices(&self) -> Vec<usize> {
        (self.tabular_count()..self.len()).collect()
    }

    pub fn tabular(&self) -> &[ConceptSpec] {
        &self.concepts[..self.tabular_count()]
    }

    pub fn text(&self) -> &[ConceptSpec] {
        &self.concepts[self.tabular_count()..]
    }
}

/// Feature layout plus concept declarations; the unit a schema file encodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: FeatureSchema,
    pub concepts: ConceptSchema,
}

impl Schema {
    /// Builds a schema, rejecting it if any invariant fails.
    pub fn new(features: Vec<FeatureSpec>, concepts: Vec<ConceptSpec>) -> Result<Self> {
        let schema = Schema {
            features: FeatureSchema { features },
            concepts: ConceptSchema { concepts },
        };
        schema.check()?;
        Ok(schema)
    }

    /// The shipped ARDS schema: 15 continuous + 6 binary features, 12 SOFA
    /// concepts, 2 comorbidity concepts and 8 text concepts.
    pub fn ards_default() -> Self {
        Self::from_json(ARDS_SCHEMA_JSON).expect("shipped schema is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: Schema = serde_json::from_str(text)?;
        schema.check()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    fn check(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some(v) => Err(Error::Schema(v.to_string())),
        }
    }

    /// Structural problems with the schema itself.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.features.features.is_empty() {
            out.push(Violation::schema("features", "at least one feature is required"));
        }
        let mut seen = HashSet::new();
        for f in &self.features.features {
            if !seen.insert(f.name.as_str()) {
                out.push(Violation::schema(
                    "features",
                    format!("duplicate feature name `{}`", f.name),
                ));
            }
        }
        let mut seen = HashSet::new();
        let mut text_seen = false;
        for c in &self.concepts.concepts {
            if !seen.insert(c.name.as_str()) {
                out.push(Violation::schema(
                    "concepts",
                    format!("duplicate concept name `{}`", c.name),
                ));
            }
            match c.source {
                ConceptSource::Text => {
                    text_seen = true;
                    if c.kind != ValueKind::Binary {
                        out.push(Violation::schema(
                            "concepts",
                            format!("text concept `{}` must be binary", c.name),
                        ));
                    }
                }
                ConceptSource::Tabular if text_seen => out.push(Violation::schema(
                    "concepts",
                    format!("tabular concept `{}` follows a text concept", c.name),
                )),
                ConceptSource::Tabular => {}
            }
        }
        out
    }

    /// SHA-256 over the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Data(format!("unknown split tag `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocKind {
    Discharge,
    Radiology,
    Echo,
}

impl DocKind {
    pub const ALL: [DocKind; 3] = [DocKind::Discharge, DocKind::Radiology, DocKind::Echo];

    pub fn as_str(self) -> &'static str {
        match self {
            DocKind::Discharge => "discharge",
            DocKind::Radiology => "radiology",
            DocKind::Echo => "echo",
        }
    }

    /// Header used in the prompt's document slot.
    pub fn label(self) -> &'static str {
        match self {
            DocKind::Discharge => "Discharge",
            DocKind::Radiology => "Radiology",
            DocKind::Echo => "Echocardiogram",
        }
    }
}

impl FromStr for DocKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DocKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Data(format!("unknown document kind `{s}`")))
    }
}

/// One patient. Feature and concept vectors are schema-ordered; `None` marks
/// a missing entry (only legal before preprocessing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub split: Split,
    pub x: Vec<Option<f64>>,
    /// Tabular ground truth followed by text concept values.
    pub concepts: Vec<Option<f64>>,
    #[serde(default)]
    pub documents: BTreeMap<DocKind, String>,
    pub y: u8,
}

impl PatientRecord {
    /// Dense feature vector; fails if any entry is missing.
    pub fn features(&self) -> Result<Vec<f64>> {
        dense(&self.x, &self.id, "feature")
    }

    /// Dense concept vector; fails if any entry is missing.
    pub fn concept_values(&self) -> Result<Vec<f64>> {
        dense(&self.concepts, &self.id, "concept")
    }
}

fn dense(values: &[Option<f64>], id: &str, what: &str) -> Result<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| Error::Data(format!("record {id}: {what} {i} is missing"))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Raw,
    Preprocessed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub schema: Schema,
    pub stage: Stage,
    pub records: Vec<PatientRecord>,
}

impl Cohort {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &PatientRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn find(&self, id: &str) -> Option<&PatientRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

/// One invariant failure. `record` is `None` for schema-level problems.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub record: Option<String>,
    pub field: String,
    pub message: String,
}

impl Violation {
    fn schema(field: &str, message: impl Into<String>) -> Self {
        Violation {
            record: None,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn record(id: &str, field: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            record: Some(id.to_string()),
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.record {
            Some(id) => write!(f, "record {id}, {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// Checks every schema and cohort invariant. Violations are data: an empty
/// list means the cohort is well formed.
pub fn validate_cohort(cohort: &Cohort) -> Vec<Violation> {
    let schema = &cohort.schema;
    let mut out = schema.violations();
    let preprocessed = cohort.stage == Stage::Preprocessed;
    let d = schema.features.d();
    let k = schema.concepts.len();

    let mut ids = HashSet::new();
    for r in &cohort.records {
        if !ids.insert(r.id.as_str()) {
            out.push(Violation::record(&r.id, "id", "duplicate record id"));
        }
        if r.y > 1 {
            out.push(Violation::record(&r.id, "y", format!("label {} is not binary", r.y)));
        }
        if r.x.len() != d {
            out.push(Violation::record(
                &r.id,
                "x",
                format!("expected {d} features, found {}", r.x.len()),
            ));
        } else {
            for (spec, v) in schema.features.features.iter().zip(&r.x) {
                let field = format!("x.{}", spec.name);
                match v {
                    None if preprocessed => {
                        out.push(Violation::record(&r.id, field, "missing after preprocessing"))
                    }
                    None => {}
                    Some(v) => check_value(&mut out, &r.id, field, *v, spec.kind, preprocessed),
                }
            }
        }
        if r.concepts.len() != k {
            out.push(Violation::record(
                &r.id,
                "concepts",
                format!("expected {k} concepts, found {}", r.concepts.len()),
            ));
        } else {
            for (spec, v) in schema.concepts.concepts.iter().zip(&r.concepts) {
                let field = format!("c.{}", spec.name);
                match v {
                    None if preprocessed || spec.source == ConceptSource::Text => out.push(
                        Violation::record(&r.id, field, "missing concept value"),
                    ),
                    None => {}
                    Some(v) => check_value(&mut out, &r.id, field, *v, spec.kind, preprocessed),
                }
            }
        }
    }

    let mut classes = [false; 2];
    for r in cohort.split(Split::Train) {
        if r.y <= 1 {
            classes[r.y as usize] = true;
        }
    }
    if !(classes[0] && classes[1]) {
        out.push(Violation {
            record: None,
            field: "split.train".into(),
            message: "train split must contain both classes".into(),
        });
    }
    out
}

fn check_value(
    out: &mut Vec<Violation>,
    id: &str,
    field: String,
    v: f64,
    kind: ValueKind,
    preprocessed: bool,
) {
    if !v.is_finite() {
        out.push(Violation::record(id, field, "non-finite value"));
        return;
    }
    match kind {
        ValueKind::Binary if v != 0.0 && v != 1.0 => {
            out.push(Violation::record(id, field, format!("binary value {v} not in {{0, 1}}")))
        }
        ValueKind::Continuous if preprocessed && !(0.0..=1.0).contains(&v) => {
            out.push(Violation::record(id, field, format!("value {v} outside [0, 1]")))
        }
        _ => {}
    }
}
