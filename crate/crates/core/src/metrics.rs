// SPDX-License-Identifier: MIT OR Apache-2.0

//! Classification and concept-quality metrics, discrete mutual information,
//! concept-task and inter-concept leakage scores, and FN/FP correction
//! accounting.
//!
//! All information quantities are in bits. Continuous concepts are binned
//! with equal-width bins over `[0, 1]`; binary concepts are thresholded at
//! 0.5.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{ConceptSpec, ValueKind};

/// Decision threshold for labels and binary concepts. Ties go positive.
pub const THRESHOLD: f64 = 0.5;

pub fn to_label(p: f64) -> u8 {
    u8::from(p >= THRESHOLD)
}

fn check_len(context: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            context: context.into(),
            expected,
            got,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

pub fn classification_metrics(probs: &[f64], y: &[u8]) -> Result<ClassificationMetrics> {
    check_len("classification metrics", y.len(), probs.len())?;
    if y.is_empty() {
        return Err(Error::Data("classification metrics need at least one record".into()));
    }
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in probs.iter().zip(y) {
        match (to_label(p), t) {
            (1, 1) => tp += 1,
            (1, _) => fp += 1,
            (_, 1) => fneg += 1,
            _ => tn += 1,
        }
    }
    let mut flags = Vec::new();
    let accuracy = (tp + tn) as f64 / y.len() as f64;
    let precision = if tp + fp == 0 {
        flags.push("precision_undefined".to_string());
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fneg == 0 {
        flags.push("recall_undefined".to_string());
        0.0
    } else {
        tp as f64 / (tp + fneg) as f64
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let auc = match auc(probs, y) {
        Some(a) => a,
        None => {
            flags.push("auc_undefined".to_string());
            0.5
        }
    };
    Ok(ClassificationMetrics { accuracy, precision, recall, f1, auc, flags })
}

/// Mann-Whitney AUC with midranks for ties. `None` when a class is absent.
pub fn auc(probs: &[f64], y: &[u8]) -> Option<f64> {
    let n_pos = y.iter().filter(|&&t| t == 1).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && probs[order[j + 1]] == probs[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; a tie group i..=j shares the mean rank.
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += midrank * order[i..=j].iter().filter(|&&k| y[k] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// Shannon entropy (bits) of a sequence of discrete codes.
pub fn entropy_codes(codes: &[usize]) -> f64 {
    if codes.is_empty() {
        return 0.0;
    }
    let k = codes.iter().copied().max().unwrap_or(0) + 1;
    let mut counts = vec![0usize; k];
    for &c in codes {
        counts[c] += 1;
    }
    let n = codes.len() as f64;
    counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Mutual information (bits) between two aligned code sequences, from the
/// empirical joint distribution. Zero-count cells contribute nothing.
pub fn mutual_information_codes(a: &[usize], b: &[usize]) -> Result<f64> {
    check_len("mutual information", a.len(), b.len())?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let ka = a.iter().copied().max().unwrap_or(0) + 1;
    let kb = b.iter().copied().max().unwrap_or(0) + 1;
    let mut joint = vec![0usize; ka * kb];
    let mut ma = vec![0usize; ka];
    let mut mb = vec![0usize; kb];
    for (&u, &v) in a.iter().zip(b) {
        joint[u * kb + v] += 1;
        ma[u] += 1;
        mb[v] += 1;
    }
    let n = a.len() as f64;
    let mut mi = 0.0;
    for u in 0..ka {
        for v in 0..kb {
            let c = joint[u * kb + v];
            if c == 0 {
                continue;
            }
            let pj = c as f64 / n;
            let pa = ma[u] as f64 / n;
            let pb = mb[v] as f64 / n;
            mi += pj * (pj / (pa * pb)).log2();
        }
    }
    // Summation error can push MI a hair outside [0, min(H(a), H(b))].
    let cap = entropy_codes(a).min(entropy_codes(b));
    Ok(mi.clamp(0.0, cap))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutualInformation {
    pub bits: f64,
    /// `bits / H(y_true)`, or 0 when `H(y_true) = 0`.
    pub normalized: f64,
}

/// MI between true and predicted binary labels.
pub fn mutual_information(y_true: &[u8], y_pred: &[u8]) -> Result<MutualInformation> {
    check_len("mutual information", y_true.len(), y_pred.len())?;
    let a: Vec<usize> = y_true.iter().map(|&v| usize::from(v != 0)).collect();
    let b: Vec<usize> = y_pred.iter().map(|&v| usize::from(v != 0)).collect();
    let bits = mutual_information_codes(&a, &b)?;
    let h = entropy_codes(&a);
    let normalized = if h > 0.0 { bits / h } else { 0.0 };
    Ok(MutualInformation { bits, normalized })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binning {
    /// Equal-width bins over [0, 1] for continuous values.
    pub bins: usize,
}

impl Default for Binning {
    fn default() -> Self {
        Binning { bins: 10 }
    }
}

impl Binning {
    pub fn code(&self, value: f64, kind: ValueKind) -> usize {
        match kind {
            ValueKind::Binary => usize::from(value >= THRESHOLD),
            ValueKind::Continuous => {
                let bins = self.bins.max(1);
                let v = value.clamp(0.0, 1.0);
                ((v * bins as f64) as usize).min(bins - 1)
            }
        }
    }

    pub fn discretize(&self, values: &[f64], kind: ValueKind) -> Vec<usize> {
        values.iter().map(|&v| self.code(v, kind)).collect()
    }
}

/// Entropy (bits) of `values` after discretization.
pub fn entropy(values: &[f64], kind: ValueKind, binning: Binning) -> f64 {
    entropy_codes(&binning.discretize(values, kind))
}

/// Concept-task leakage of one concept: how much more the predicted concept
/// tells about `y` than the ground-truth concept does, normalized by `H(y)`
/// and floored at zero.
pub fn ctl(
    predicted: &[f64],
    truth: &[f64],
    y: &[u8],
    kind: ValueKind,
    binning: Binning,
) -> Result<f64> {
    check_len("ctl predicted", y.len(), predicted.len())?;
    check_len("ctl truth", y.len(), truth.len())?;
    let y_codes: Vec<usize> = y.iter().map(|&v| usize::from(v != 0)).collect();
    let h_y = entropy_codes(&y_codes);
    if h_y <= 0.0 {
        return Err(Error::Data("CTL is undefined when H(y) = 0".into()));
    }
    let i_pred = mutual_information_codes(&binning.discretize(predicted, kind), &y_codes)?;
    let i_true = mutual_information_codes(&binning.discretize(truth, kind), &y_codes)?;
    Ok((i_pred / h_y - i_true / h_y).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IclValue {
    pub value: f64,
    /// Set when an entropy was zero and the score defaulted to 0.
    pub degenerate: bool,
}

/// Inter-concept leakage for a concept pair `(i, j)`. Callers pass `same`
/// for the diagonal, which is 0 by definition.
#[allow(clippy::too_many_arguments)]
pub fn icl(
    pred_i: &[f64],
    pred_j: &[f64],
    true_i: &[f64],
    true_j: &[f64],
    kind_i: ValueKind,
    kind_j: ValueKind,
    same: bool,
    binning: Binning,
) -> Result<IclValue> {
    let n = pred_i.len();
    for (ctx, len) in [("icl pred_j", pred_j.len()), ("icl true_i", true_i.len()), ("icl true_j", true_j.len())] {
        check_len(ctx, n, len)?;
    }
    if same {
        return Ok(IclValue { value: 0.0, degenerate: false });
    }
    let pi = binning.discretize(pred_i, kind_i);
    let pj = binning.discretize(pred_j, kind_j);
    let ti = binning.discretize(true_i, kind_i);
    let tj = binning.discretize(true_j, kind_j);
    let (h_pi, h_pj, h_ti, h_tj) = (
        entropy_codes(&pi),
        entropy_codes(&pj),
        entropy_codes(&ti),
        entropy_codes(&tj),
    );
    if h_pi <= 0.0 || h_pj <= 0.0 || h_ti <= 0.0 || h_tj <= 0.0 {
        return Ok(IclValue { value: 0.0, degenerate: true });
    }
    let pred_term = mutual_information_codes(&pi, &pj)? / (h_pi * h_pj).sqrt();
    let true_term = mutual_information_codes(&ti, &tj)? / (h_ti * h_tj).sqrt();
    Ok(IclValue {
        value: (pred_term - true_term).max(0.0),
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub concepts: Vec<String>,
    pub ctl: Vec<f64>,
    pub icl: Vec<Vec<f64>>,
    pub binning: Binning,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl LeakageReport {
    pub fn mean_ctl(&self) -> f64 {
        mean(&self.ctl)
    }

    /// Mean over off-diagonal ICL entries.
    pub fn mean_icl(&self) -> f64 {
        let k = self.icl.len();
        if k < 2 {
            return 0.0;
        }
        let total: f64 = self.icl.iter().flatten().sum();
        total / (k * (k - 1)) as f64
    }

    /// ICL matrix as CSV with a header row and a leading name column.
    pub fn icl_csv(&self) -> String {
        let mut out = String::from("concept");
        for name in &self.concepts {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (name, row) in self.concepts.iter().zip(&self.icl) {
            out.push_str(name);
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Column `j` of a row-major matrix given as rows.
pub fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

/// CTL per concept and the full ICL matrix. `predicted` and `truth` are
/// per-record rows aligned with `specs`.
pub fn leakage_report(
    predicted: &[Vec<f64>],
    truth: &[Vec<f64>],
    y: &[u8],
    specs: &[ConceptSpec],
    binning: Binning,
) -> Result<LeakageReport> {
    check_len("leakage truth rows", predicted.len(), truth.len())?;
    check_len("leakage labels", predicted.len(), y.len())?;
    for (p, t) in predicted.iter().zip(truth) {
        check_len("leakage predicted row", specs.len(), p.len())?;
        check_len("leakage truth row", specs.len(), t.len())?;
    }
    let k = specs.len();
    let pred_cols: Vec<Vec<f64>> = (0..k).map(|j| column(predicted, j)).collect();
    let true_cols: Vec<Vec<f64>> = (0..k).map(|j| column(truth, j)).collect();
    let mut ctl_scores = Vec::with_capacity(k);
    for j in 0..k {
        ctl_scores.push(ctl(&pred_cols[j], &true_cols[j], y, specs[j].kind, binning)?);
    }
    let mut flags = Vec::new();
    let mut matrix = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let v = icl(
                &pred_cols[i],
                &pred_cols[j],
                &true_cols[i],
                &true_cols[j],
                specs[i].kind,
                specs[j].kind,
                i == j,
                binning,
            )?;
            if v.degenerate && i < j {
                flags.push(format!("icl_degenerate:{}:{}", specs[i].name, specs[j].name));
            }
            matrix[i][j] = v.value;
        }
    }
    Ok(LeakageReport {
        concepts: specs.iter().map(|s| s.name.clone()).collect(),
        ctl: ctl_scores,
        icl: matrix,
        binning,
        flags,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptQuality {
    pub name: String,
    pub kind: ValueKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
}

/// MSE/MAE for continuous concepts, accuracy/recall at 0.5 for binary ones.
/// Recall is 0 when a binary concept has no positives.
pub fn concept_metrics(
    predicted: &[Vec<f64>],
    truth: &[Vec<f64>],
    specs: &[ConceptSpec],
) -> Result<Vec<ConceptQuality>> {
    check_len("concept metrics rows", truth.len(), predicted.len())?;
    for (p, t) in predicted.iter().zip(truth) {
        check_len("concept metrics predicted row", specs.len(), p.len())?;
        check_len("concept metrics truth row", specs.len(), t.len())?;
    }
    let n = predicted.len().max(1) as f64;
    let mut out = Vec::with_capacity(specs.len());
    for (j, spec) in specs.iter().enumerate() {
        let mut q = ConceptQuality {
            name: spec.name.clone(),
            kind: spec.kind,
            mse: None,
            mae: None,
            accuracy: None,
            recall: None,
        };
        match spec.kind {
            ValueKind::Continuous => {
                let (mut se, mut ae) = (0.0, 0.0);
                for (p, t) in predicted.iter().zip(truth) {
                    let d = p[j] - t[j];
                    se += d * d;
                    ae += d.abs();
                }
                q.mse = Some(se / n);
                q.mae = Some(ae / n);
            }
            ValueKind::Binary => {
                let (mut correct, mut tp, mut pos) = (0usize, 0usize, 0usize);
                for (p, t) in predicted.iter().zip(truth) {
                    let pl = to_label(p[j]);
                    let tl = to_label(t[j]);
                    correct += usize::from(pl == tl);
                    if tl == 1 {
                        pos += 1;
                        tp += usize::from(pl == 1);
                    }
                }
                q.accuracy = Some(correct as f64 / n);
                q.recall = Some(if pos == 0 { 0.0 } else { tp as f64 / pos as f64 });
            }
        }
        out.push(q);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub fn_corrected: usize,
    pub fn_total: usize,
    pub fp_corrected: usize,
    pub fp_total: usize,
    pub new_fp: usize,
    pub new_fn: usize,
}

impl CorrectionReport {
    pub fn corrected(&self) -> usize {
        self.fn_corrected + self.fp_corrected
    }
}

/// Counts errors fixed and errors introduced by a change of predictions.
pub fn correction_report(pre: &[u8], post: &[u8], y: &[u8]) -> Result<CorrectionReport> {
    check_len("correction pre", y.len(), pre.len())?;
    check_len("correction post", y.len(), post.len())?;
    let mut r = CorrectionReport::default();
    for ((&a, &b), &t) in pre.iter().zip(post).zip(y) {
        match (t, a) {
            (1, 0) => {
                r.fn_total += 1;
                r.fn_corrected += usize::from(b == 1);
            }
            (0, 1) => {
                r.fp_total += 1;
                r.fp_corrected += usize::from(b == 0);
            }
            (0, 0) => r.new_fp += usize::from(b == 1),
            _ => r.new_fn += usize::from(b == 0),
        }
    }
    Ok(r)
}

/// Everything reported for one model on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub classification: ClassificationMetrics,
    pub mi_bits: f64,
    pub mi_normalized: f64,
    pub concepts: Vec<ConceptQuality>,
}

pub fn metrics_report(
    probs: &[f64],
    y: &[u8],
    predicted_concepts: &[Vec<f64>],
    true_concepts: &[Vec<f64>],
    specs: &[ConceptSpec],
) -> Result<MetricsReport> {
    let classification = classification_metrics(probs, y)?;
    let labels: Vec<u8> = probs.iter().map(|&p| to_label(p)).collect();
    let mi = mutual_information(y, &labels)?;
    Ok(MetricsReport {
        classification,
        mi_bits: mi.bits,
        mi_normalized: mi.normalized,
        concepts: concept_metrics(predicted_concepts, true_concepts, specs)?,
    })
}
