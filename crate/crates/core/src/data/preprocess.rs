// SPDX-License-Identifier: MIT OR Apache-2.0

//! Preprocessing: drop sparse features, impute train medians, min-max scale
//! with train ranges, then collect concept statistics. Every statistic comes
//! from the train split only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Cohort, FeatureSchema, Schema, Split, Stage, ValueKind};

pub const DEFAULT_MISSING_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStat {
    pub name: String,
    pub kind: ValueKind,
    pub min: f64,
    pub max: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptStat {
    pub name: String,
    pub mean: f64,
    pub median: f64,
}

/// Train-split statistics needed to preprocess new records and to resolve
/// intervention values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessStats {
    /// Hash of the schema after dropping features.
    pub schema_hash: String,
    pub missing_threshold: f64,
    pub dropped: Vec<String>,
    /// Retained features, schema order; statistics of raw observed values.
    pub features: Vec<ColumnStat>,
    /// Raw concept ranges and medians, used for imputation and scaling.
    pub concept_scaling: Vec<ColumnStat>,
    /// Mean and median of preprocessed concepts.
    pub concepts: Vec<ConceptStat>,
    /// Pearson correlation of preprocessed ground-truth concepts, schema order.
    pub correlation: Vec<Vec<f64>>,
}

/// Median; even-length samples average the two middle values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Pearson correlation; 0 when either series is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (da, db) = (a[i] - ma, b[i] - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// Drops every feature whose train-split missing fraction strictly exceeds
/// `threshold`.
pub fn drop_sparse_features(cohort: &Cohort, threshold: f64) -> Result<(Cohort, Vec<String>)> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!("missingness threshold {threshold} outside (0, 1]")));
    }
    let train: Vec<_> = cohort.split(Split::Train).collect();
    if train.is_empty() {
        return Err(Error::Data("train split is empty".into()));
    }
    let features = &cohort.schema.features.features;
    let keep: Vec<bool> = (0..features.len())
        .map(|f| {
            let missing = train.iter().filter(|r| r.x[f].is_none()).count();
            missing as f64 / train.len() as f64 <= threshold
        })
        .collect();
    if !keep.iter().any(|&k| k) {
        return Err(Error::Data("every feature exceeds the missingness threshold".into()));
    }
    let dropped: Vec<String> = features
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| !k)
        .map(|(f, _)| f.name.clone())
        .collect();
    if dropped.is_empty() {
        return Ok((cohort.clone(), dropped));
    }
    let schema = Schema {
        features: FeatureSchema {
            features: features.iter().zip(&keep).filter(|(_, &k)| k).map(|(f, _)| f.clone()).collect(),
        },
        concepts: cohort.schema.concepts.clone(),
    };
    let mut out = Cohort { schema, stage: cohort.stage, records: cohort.records.clone() };
    for r in &mut out.records {
        r.x = r.x.iter().zip(&keep).filter(|(_, &k)| k).map(|(v, _)| *v).collect();
    }
    Ok((out, dropped))
}

fn column_stats(
    cohort: &Cohort,
    names: impl Iterator<Item = (String, ValueKind)>,
    get: impl Fn(&crate::schema::PatientRecord, usize) -> Option<f64>,
) -> Result<Vec<ColumnStat>> {
    let train: Vec<_> = cohort.split(Split::Train).collect();
    names
        .enumerate()
        .map(|(j, (name, kind))| {
            let observed: Vec<f64> = train.iter().filter_map(|r| get(r, j)).collect();
            let median = median(&observed).ok_or_else(|| {
                Error::Data(format!("`{name}` has no observed values in the train split"))
            })?;
            let min = observed.iter().copied().fold(f64::INFINITY, f64::min);
            let max = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(ColumnStat { name, kind, min, max, median })
        })
        .collect()
}

/// Train-split min/max/median of each feature (observed values only).
pub fn fit_feature_stats(cohort: &Cohort) -> Result<Vec<ColumnStat>> {
    column_stats(
        cohort,
        cohort.schema.features.features.iter().map(|f| (f.name.clone(), f.kind)),
        |r, j| r.x[j],
    )
}

/// Train-split min/max/median of each raw concept.
pub fn fit_concept_scaling(cohort: &Cohort) -> Result<Vec<ColumnStat>> {
    column_stats(
        cohort,
        cohort.schema.concepts.concepts.iter().map(|c| (c.name.clone(), c.kind)),
        |r, j| r.concepts[j],
    )
}

fn check_columns(context: &str, stats: &[ColumnStat], names: impl Iterator<Item = String>) -> Result<()> {
    let names: Vec<String> = names.collect();
    if names.len() != stats.len() || names.iter().zip(stats).any(|(n, s)| *n != s.name) {
        return Err(Error::Data(format!("{context} statistics do not match the cohort schema")));
    }
    Ok(())
}

/// Replaces missing features and concepts with train medians.
pub fn impute_median(cohort: &Cohort, stats: &PreprocessStats) -> Result<Cohort> {
    let schema = &cohort.schema;
    check_columns("feature", &stats.features, schema.features.features.iter().map(|f| f.name.clone()))?;
    check_columns("concept", &stats.concept_scaling, schema.concepts.concepts.iter().map(|c| c.name.clone()))?;
    let mut out = cohort.clone();
    for r in &mut out.records {
        for (v, s) in r.x.iter_mut().zip(&stats.features) {
            v.get_or_insert(s.median);
        }
        for (v, s) in r.concepts.iter_mut().zip(&stats.concept_scaling) {
            v.get_or_insert(s.median);
        }
    }
    Ok(out)
}

fn scale(v: f64, s: &ColumnStat) -> f64 {
    ((v - s.min) / (s.max - s.min)).clamp(0.0, 1.0)
}

/// Maps continuous features (and continuous concepts) to [0, 1] with train
/// ranges, clipping values outside the train range. Binary columns are left
/// untouched. A continuous concept that is constant on train is clipped only.
pub fn minmax_scale(cohort: &Cohort, stats: &PreprocessStats) -> Result<Cohort> {
    for s in &stats.features {
        if s.kind == ValueKind::Continuous && !(s.min < s.max) {
            return Err(Error::Data(format!("feature `{}` is constant on the train split", s.name)));
        }
    }
    let mut out = cohort.clone();
    for r in &mut out.records {
        for (v, s) in r.x.iter_mut().zip(&stats.features) {
            if s.kind == ValueKind::Continuous {
                let raw = v.ok_or_else(|| Error::Data(format!("record {}: impute before scaling", r.id)))?;
                *v = Some(scale(raw, s));
            }
        }
        for (v, s) in r.concepts.iter_mut().zip(&stats.concept_scaling) {
            if s.kind == ValueKind::Continuous {
                let raw = v.ok_or_else(|| Error::Data(format!("record {}: impute before scaling", r.id)))?;
                *v = Some(if s.min < s.max { scale(raw, s) } else { raw.clamp(0.0, 1.0) });
            }
        }
    }
    out.stage = Stage::Preprocessed;
    Ok(out)
}

/// Means, medians and the Pearson matrix of train ground-truth concepts.
pub fn compute_stats(cohort: &Cohort) -> Result<(Vec<ConceptStat>, Vec<Vec<f64>>)> {
    let concepts = &cohort.schema.concepts.concepts;
    let train: Vec<_> = cohort.split(Split::Train).collect();
    if train.is_empty() {
        return Err(Error::Data("train split is empty".into()));
    }
    let columns: Vec<Vec<f64>> = (0..concepts.len())
        .map(|j| {
            train
                .iter()
                .map(|r| r.concepts[j].ok_or_else(|| Error::Data(format!("record {}: concept {j} missing", r.id))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let stats = concepts
        .iter()
        .zip(&columns)
        .map(|(c, col)| ConceptStat {
            name: c.name.clone(),
            mean: col.iter().sum::<f64>() / col.len() as f64,
            median: median(col).expect("non-empty"),
        })
        .collect();
    let k = columns.len();
    let mut corr = vec![vec![0.0; k]; k];
    for i in 0..k {
        corr[i][i] = 1.0;
        for j in (i + 1)..k {
            let r = pearson(&columns[i], &columns[j]);
            corr[i][j] = r;
            corr[j][i] = r;
        }
    }
    Ok((stats, corr))
}

/// Runs drop, impute, scale and stats in that order, fitting on train.
pub fn fit_preprocess(cohort: &Cohort, threshold: f64) -> Result<(Cohort, PreprocessStats)> {
    let (dropped_cohort, dropped) = drop_sparse_features(cohort, threshold)?;
    let mut stats = PreprocessStats {
        schema_hash: dropped_cohort.schema.hash(),
        missing_threshold: threshold,
        dropped,
        features: fit_feature_stats(&dropped_cohort)?,
        concept_scaling: fit_concept_scaling(&dropped_cohort)?,
        concepts: Vec::new(),
        correlation: Vec::new(),
    };
    let imputed = impute_median(&dropped_cohort, &stats)?;
    let scaled = minmax_scale(&imputed, &stats)?;
    let (concepts, correlation) = compute_stats(&scaled)?;
    stats.concepts = concepts;
    stats.correlation = correlation;
    Ok((scaled, stats))
}

/// Applies previously fitted statistics to a raw cohort sharing the original
/// schema (same features before dropping).
pub fn apply_preprocess(cohort: &Cohort, stats: &PreprocessStats) -> Result<Cohort> {
    let keep: Vec<bool> = cohort
        .schema
        .features
        .features
        .iter()
        .map(|f| !stats.dropped.contains(&f.name))
        .collect();
    let schema = Schema {
        features: FeatureSchema {
            features: cohort
                .schema
                .features
                .features
                .iter()
                .zip(&keep)
                .filter(|(_, &k)| k)
                .map(|(f, _)| f.clone())
                .collect(),
        },
        concepts: cohort.schema.concepts.clone(),
    };
    if schema.hash() != stats.schema_hash {
        return Err(Error::HashMismatch { expected: stats.schema_hash.clone(), found: schema.hash() });
    }
    let mut reduced = Cohort { schema, stage: cohort.stage, records: cohort.records.clone() };
    for r in &mut reduced.records {
        r.x = r.x.iter().zip(&keep).filter(|(_, &k)| k).map(|(v, _)| *v).collect();
    }
    minmax_scale(&impute_median(&reduced, stats)?, stats)
}
