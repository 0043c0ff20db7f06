// SPDX-License-Identifier: MIT OR Apache-2.0

//! Test-time concept interventions.
//!
//! Independent mode overwrites the edited bottleneck coordinates. Correlated
//! mode additionally shifts every other coordinate `j` by
//! `sum_q corr[j][k_q] * delta_q`, where `delta_q` is the edit's target minus
//! the pre-edit value, clamps to `[0, 1]`, and finally writes the main
//! concepts exactly. Only `f` is re-run; `g` is never touched.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cbm::CbmModel;
use crate::data::PreprocessStats;
use crate::error::{Error, Result};
use crate::metrics::{correction_report, to_label, CorrectionReport};
use crate::schema::PatientRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueSource {
    GroundTruth,
    Mean,
    Median,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropagationMode {
    #[default]
    Independent,
    Correlated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptEdit {
    pub concept: String,
    pub source: ValueSource,
    /// Required for [`ValueSource::Custom`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl ConceptEdit {
    pub fn new(concept: impl Into<String>, source: ValueSource) -> Self {
        ConceptEdit { concept: concept.into(), source, value: None }
    }

    pub fn custom(concept: impl Into<String>, value: f64) -> Self {
        ConceptEdit { concept: concept.into(), source: ValueSource::Custom, value: Some(value) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "ids")]
pub enum Target {
    #[default]
    All,
    Ids(Vec<String>),
    /// Records whose pre-intervention label is wrong.
    Misclassified,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionRequest {
    pub edits: Vec<ConceptEdit>,
    #[serde(default)]
    pub mode: PropagationMode,
    #[serde(default)]
    pub target: Target,
    /// In correlated mode, let propagation move text-concept coordinates.
    #[serde(default = "default_true")]
    pub propagate_to_text: bool,
    /// Compute the edited bottleneck only; skip re-prediction.
    #[serde(default)]
    pub dry_run: bool,
}

impl InterventionRequest {
    pub fn new(edits: Vec<ConceptEdit>, mode: PropagationMode) -> Self {
        InterventionRequest { edits, mode, target: Target::All, propagate_to_text: true, dry_run: false }
    }

    pub fn with_target(mut self, target: Target) -> Self {
        self.target = target;
        self
    }
}

/// Bottleneck after a correlated edit, with the coordinates that were clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub values: Vec<f64>,
    pub clamped: Vec<usize>,
}

fn check_edits(len: usize, edits: &[(usize, f64)]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for &(k, v) in edits {
        if k >= len {
            return Err(Error::Dimension { context: "edit index".into(), expected: len, got: k });
        }
        if !seen.insert(k) {
            return Err(Error::DuplicateIndex(k));
        }
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange { name: format!("coordinate {k}"), value: v });
        }
    }
    Ok(())
}

pub fn intervene_independent(bottleneck: &[f64], edits: &[(usize, f64)]) -> Result<Vec<f64>> {
    check_edits(bottleneck.len(), edits)?;
    let mut out = bottleneck.to_vec();
    for &(k, v) in edits {
        out[k] = v;
    }
    Ok(out)
}

pub fn intervene_correlated(
    bottleneck: &[f64],
    edits: &[(usize, f64)],
    corr: &[Vec<f64>],
) -> Result<Propagation> {
    propagate(bottleneck, edits, corr, &[])
}

/// Correlated edit where coordinates listed in `frozen` receive no propagation.
pub fn propagate(
    bottleneck: &[f64],
    edits: &[(usize, f64)],
    corr: &[Vec<f64>],
    frozen: &[usize],
) -> Result<Propagation> {
    let n = bottleneck.len();
    check_edits(n, edits)?;
    if corr.len() != n {
        return Err(Error::Dimension { context: "correlation rows".into(), expected: n, got: corr.len() });
    }
    if let Some(row) = corr.iter().find(|r| r.len() != n) {
        return Err(Error::Dimension { context: "correlation columns".into(), expected: n, got: row.len() });
    }
    let deltas: Vec<(usize, f64)> = edits.iter().map(|&(k, v)| (k, v - bottleneck[k])).collect();
    let mut values = bottleneck.to_vec();
    let mut clamped = Vec::new();
    for j in 0..n {
        if edits.iter().any(|&(k, _)| k == j) || frozen.contains(&j) {
            continue;
        }
        let shift: f64 = deltas.iter().map(|&(k, d)| corr[j][k] * d).sum();
        let v = bottleneck[j] + shift;
        if !(0.0..=1.0).contains(&v) {
            clamped.push(j);
        }
        values[j] = v.clamp(0.0, 1.0);
    }
    for &(k, v) in edits {
        values[k] = v;
    }
    Ok(Propagation { values, clamped })
}

/// Target value for schema concept `j` of `record`.
pub fn resolve_value(
    j: usize,
    edit: &ConceptEdit,
    record: &PatientRecord,
    stats: &PreprocessStats,
) -> Result<f64> {
    let stat = stats
        .concepts
        .get(j)
        .ok_or_else(|| Error::UnknownConcept(edit.concept.clone()))?;
    let v = match edit.source {
        ValueSource::GroundTruth => record.concepts.get(j).copied().flatten().ok_or_else(|| {
            Error::MissingInput(format!("record {} has no ground truth for `{}`", record.id, edit.concept))
        })?,
        ValueSource::Mean => stat.mean,
        ValueSource::Median => stat.median,
        ValueSource::Custom => edit
            .value
            .ok_or_else(|| Error::Config(format!("custom edit of `{}` needs a value", edit.concept)))?,
    };
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::OutOfRange { name: edit.concept.clone(), value: v });
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordIntervention {
    pub id: String,
    pub y: u8,
    pub pre_bottleneck: Vec<f64>,
    pub post_bottleneck: Vec<f64>,
    /// `post - pre` per coordinate.
    pub deltas: Vec<f64>,
    /// Names of coordinates whose propagated value was clamped.
    pub clamped: Vec<String>,
    pub pre_probability: f64,
    pub pre_label: u8,
    pub post_probability: Option<f64>,
    pub post_label: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionResult {
    pub schema_hash: String,
    pub mode: PropagationMode,
    pub dry_run: bool,
    /// Bottleneck coordinate names.
    pub concepts: Vec<String>,
    pub records: Vec<RecordIntervention>,
    /// Absent for dry runs.
    pub corrections: Option<CorrectionReport>,
}

impl InterventionResult {
    pub fn pre_accuracy(&self) -> Option<f64> {
        accuracy(self.records.iter().map(|r| (r.pre_label, r.y)))
    }

    pub fn post_accuracy(&self) -> Option<f64> {
        if self.dry_run {
            return None;
        }
        accuracy(self.records.iter().map(|r| (r.post_label.unwrap_or(r.pre_label), r.y)))
    }
}

fn accuracy(pairs: impl ExactSizeIterator<Item = (u8, u8)>) -> Option<f64> {
    let n = pairs.len();
    (n > 0).then(|| pairs.filter(|(a, b)| a == b).count() as f64 / n as f64)
}

/// Correlation matrix restricted to the model's bottleneck coordinates.
pub fn bottleneck_correlation(model: &CbmModel, stats: &PreprocessStats) -> Result<Vec<Vec<f64>>> {
    let idx = model.bottleneck_schema_indices();
    let n = stats.correlation.len();
    if let Some(&j) = idx.iter().find(|&&j| j >= n) {
        return Err(Error::Dimension { context: "correlation matrix".into(), expected: j + 1, got: n });
    }
    Ok(idx.iter().map(|&a| idx.iter().map(|&b| stats.correlation[a][b]).collect()).collect())
}

fn check_hashes(model: &CbmModel, stats: &PreprocessStats) -> Result<()> {
    if model.schema_hash != stats.schema_hash {
        return Err(Error::HashMismatch {
            expected: model.schema_hash.clone(),
            found: stats.schema_hash.clone(),
        });
    }
    Ok(())
}

/// Validated edit: bottleneck position and schema index.
struct Resolved<'a> {
    edit: &'a ConceptEdit,
    position: usize,
    schema_index: usize,
}

fn resolve_edits<'a>(model: &CbmModel, edits: &'a [ConceptEdit]) -> Result<Vec<Resolved<'a>>> {
    let names = model.bottleneck_names();
    let schema_idx = model.bottleneck_schema_indices();
    let mut seen = BTreeSet::new();
    edits
        .iter()
        .map(|edit| {
            let position = names
                .iter()
                .position(|n| *n == edit.concept)
                .ok_or_else(|| Error::UnknownConcept(edit.concept.clone()))?;
            if !seen.insert(position) {
                return Err(Error::DuplicateIndex(position));
            }
            if edit.source == ValueSource::Custom {
                match edit.value {
                    None => {
                        return Err(Error::Config(format!("custom edit of `{}` needs a value", edit.concept)))
                    }
                    Some(v) if !(0.0..=1.0).contains(&v) => {
                        return Err(Error::OutOfRange { name: edit.concept.clone(), value: v })
                    }
                    _ => {}
                }
            }
            Ok(Resolved { edit, position, schema_index: schema_idx[position] })
        })
        .collect()
}

/// Applies `request` to every targeted record in `records`.
pub fn run_intervention(
    model: &CbmModel,
    stats: &PreprocessStats,
    records: &[&PatientRecord],
    request: &InterventionRequest,
) -> Result<InterventionResult> {
    check_hashes(model, stats)?;
    let resolved = resolve_edits(model, &request.edits)?;
    let corr = match request.mode {
        PropagationMode::Correlated => Some(bottleneck_correlation(model, stats)?),
        PropagationMode::Independent => None,
    };
    let frozen: Vec<usize> = if request.propagate_to_text {
        Vec::new()
    } else {
        (model.concepts.len()..model.bottleneck_width()).collect()
    };
    if let Target::Ids(ids) = &request.target {
        if let Some(missing) = ids.iter().find(|id| !records.iter().any(|r| &r.id == *id)) {
            return Err(Error::UnknownRecord(missing.clone()));
        }
    }
    let names = model.bottleneck_names();

    let mut out = Vec::new();
    for record in records {
        if let Target::Ids(ids) = &request.target {
            if !ids.contains(&record.id) {
                continue;
            }
        }
        let pre = model.predict_record(record)?;
        if request.target == Target::Misclassified && pre.label == record.y {
            continue;
        }
        let edits = resolved
            .iter()
            .map(|r| Ok((r.position, resolve_value(r.schema_index, r.edit, record, stats)?)))
            .collect::<Result<Vec<_>>>()?;
        let (post, clamped) = match &corr {
            None => (intervene_independent(&pre.bottleneck, &edits)?, Vec::new()),
            Some(c) => {
                let p = propagate(&pre.bottleneck, &edits, c, &frozen)?;
                (p.values, p.clamped)
            }
        };
        let post_probability = if request.dry_run { None } else { Some(model.label_probability(&post)?) };
        out.push(RecordIntervention {
            id: record.id.clone(),
            y: record.y,
            deltas: post.iter().zip(&pre.bottleneck).map(|(a, b)| a - b).collect(),
            pre_bottleneck: pre.bottleneck,
            post_bottleneck: post,
            clamped: clamped.into_iter().map(|j| names[j].clone()).collect(),
            pre_probability: pre.probability,
            pre_label: pre.label,
            post_label: post_probability.map(to_label),
            post_probability,
        });
    }

    let corrections = if request.dry_run {
        None
    } else {
        let pre: Vec<u8> = out.iter().map(|r| r.pre_label).collect();
        let post: Vec<u8> = out.iter().map(|r| r.post_label.unwrap_or(r.pre_label)).collect();
        let y: Vec<u8> = out.iter().map(|r| r.y).collect();
        Some(correction_report(&pre, &post, &y)?)
    };
    Ok(InterventionResult {
        schema_hash: model.schema_hash.clone(),
        mode: request.mode,
        dry_run: request.dry_run,
        concepts: names,
        records: out,
        corrections,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptCorrections {
    pub concept: String,
    pub report: CorrectionReport,
}

/// Independent single-concept interventions, one per candidate, in the order given.
pub fn rank_candidates(
    model: &CbmModel,
    stats: &PreprocessStats,
    records: &[&PatientRecord],
    candidates: &[String],
    source: ValueSource,
    target: &Target,
) -> Result<Vec<ConceptCorrections>> {
    candidates
        .iter()
        .map(|c| {
            let request = InterventionRequest::new(vec![ConceptEdit::new(c.clone(), source)], PropagationMode::Independent)
                .with_target(target.clone());
            let result = run_intervention(model, stats, records, &request)?;
            Ok(ConceptCorrections {
                concept: c.clone(),
                report: result.corrections.unwrap_or_default(),
            })
        })
        .collect()
}

/// Top `q` concepts by FN + FP corrections; `per_concept` is in schema order
/// and earlier entries win ties.
pub fn select_top_concepts(per_concept: &[ConceptCorrections], q: usize) -> Vec<String> {
    let mut order: Vec<usize> = (0..per_concept.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(per_concept[i].report.corrected()));
    order.into_iter().take(q).map(|i| per_concept[i].concept.clone()).collect()
}
