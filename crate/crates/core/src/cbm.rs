// SPDX-License-Identifier: MIT OR Apache-2.0

//! Concept bottleneck models.
//!
//! `g` maps features to sigmoid concept heads (one per tabular concept, schema
//! order). `f` maps the bottleneck to a label probability. In vanilla mode the
//! bottleneck is `g(x)`; in context-aware mode it is `g(x)` followed by the
//! observed text concepts, which are inputs and never receive gradients.
//!
//! Joint training minimises `BCE(f(b), y) + lambda * sum_j L_j(g(x)_j, c_j)`
//! with `L_j` = BCE for binary concepts and squared error for continuous
//! ones. Sequential training fits `g` on the concept losses alone, then fits
//! `f` on the frozen soft concepts.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::PreprocessStats;
use crate::error::{Error, Result};
use crate::metrics::{self, to_label, MetricsReport};
use crate::nn::{bce, bce_grad, mse, mse_grad, Activation, Adam, DenseNet, Gradients};
use crate::schema::{Cohort, ConceptSpec, PatientRecord, Schema, Split, Stage, ValueKind};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Vanilla,
    ContextAware,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Joint,
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Hidden widths of `g` (relu).
    pub concept_hidden: Vec<usize>,
    /// Hidden widths of `f` (relu).
    pub label_hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture { concept_hidden: vec![64], label_hidden: vec![32] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub regime: Regime,
    pub lambda: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Restrict the text part of a context-aware bottleneck to these concepts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_subset: Option<Vec<String>>,
    #[serde(default)]
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::Vanilla,
            regime: Regime::Joint,
            lambda: 1.0,
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
            text_subset: None,
            architecture: Architecture::default(),
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda = {} must be >= 0", self.lambda)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    /// Schema indices of the text concepts feeding `f`.
    pub fn text_indices(&self, schema: &Schema) -> Result<Vec<usize>> {
        if self.mode == Mode::Vanilla {
            return Ok(Vec::new());
        }
        let all = schema.concepts.text_indices();
        match &self.text_subset {
            None => Ok(all),
            Some(names) => {
                let mut idx = names
                    .iter()
                    .map(|n| {
                        schema
                            .concepts
                            .index_of(n)
                            .filter(|j| all.contains(j))
                            .ok_or_else(|| Error::UnknownConcept(n.clone()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                idx.sort_unstable();
                idx.dedup();
                Ok(idx)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbmModel {
    pub format_version: u32,
    pub mode: Mode,
    pub regime: Regime,
    pub lambda: f64,
    pub schema_hash: String,
    /// Tabular concepts predicted by `g`, schema order.
    pub concepts: Vec<ConceptSpec>,
    /// Schema indices of text concepts appended to the bottleneck.
    pub text_indices: Vec<usize>,
    pub text_concepts: Vec<String>,
    pub g: DenseNet,
    pub f: DenseNet,
    /// Mean training loss per epoch (phase 2 only for sequential runs).
    pub train_loss: Vec<f64>,
}

/// Output of one forward pass through the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Bottleneck fed to `f`: predicted concepts, then text concepts.
    pub bottleneck: Vec<f64>,
    pub probability: f64,
    pub label: u8,
}

impl CbmModel {
    pub fn bottleneck_width(&self) -> usize {
        self.concepts.len() + self.text_indices.len()
    }

    /// Names of bottleneck coordinates in order.
    pub fn bottleneck_names(&self) -> Vec<String> {
        self.concepts
            .iter()
            .map(|c| c.name.clone())
            .chain(self.text_concepts.iter().cloned())
            .collect()
    }

    /// Schema index of each bottleneck coordinate.
    pub fn bottleneck_schema_indices(&self) -> Vec<usize> {
        (0..self.concepts.len()).chain(self.text_indices.iter().copied()).collect()
    }

    pub fn predict(&self, x: &[f64], text: Option<&[f64]>) -> Result<Prediction> {
        let concepts = self.g.forward(x)?;
        let mut bottleneck = concepts;
        if self.mode == Mode::ContextAware {
            let text = text.ok_or_else(|| {
                Error::MissingInput("context-aware prediction needs text concepts".into())
            })?;
            if text.len() != self.text_indices.len() {
                return Err(Error::Dimension {
                    context: "text concepts".into(),
                    expected: self.text_indices.len(),
                    got: text.len(),
                });
            }
            bottleneck.extend_from_slice(text);
        }
        let probability = self.label_probability(&bottleneck)?;
        Ok(Prediction { bottleneck, probability, label: to_label(probability) })
    }

    /// Runs `f` alone on a bottleneck vector.
    pub fn label_probability(&self, bottleneck: &[f64]) -> Result<f64> {
        Ok(self.f.forward(bottleneck)?[0])
    }

    /// Text concept values of `record` in model order.
    pub fn record_text(&self, record: &PatientRecord) -> Result<Vec<f64>> {
        self.text_indices
            .iter()
            .map(|&j| {
                record.concepts[j].ok_or_else(|| {
                    Error::Data(format!("record {}: text concept {j} missing", record.id))
                })
            })
            .collect()
    }

    pub fn predict_record(&self, record: &PatientRecord) -> Result<Prediction> {
        let x = record.features()?;
        let text = self.record_text(record)?;
        self.predict(&x, Some(&text))
    }

    /// Ground-truth bottleneck: true tabular concepts plus text concepts.
    pub fn true_bottleneck(&self, record: &PatientRecord) -> Result<Vec<f64>> {
        self.bottleneck_schema_indices()
            .into_iter()
            .map(|j| {
                record.concepts[j]
                    .ok_or_else(|| Error::Data(format!("record {}: concept {j} missing", record.id)))
            })
            .collect()
    }

    pub fn check_schema(&self, schema: &Schema) -> Result<()> {
        let found = schema.hash();
        if found != self.schema_hash {
            return Err(Error::HashMismatch { expected: self.schema_hash.clone(), found });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Loads a model file and verifies it was trained against `schema`.
    pub fn load(path: &Path, schema: &Schema) -> Result<Self> {
        let model = Self::load_unchecked(path)?;
        model.check_schema(schema)?;
        Ok(model)
    }

    pub fn load_unchecked(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingInput(format!("no model at {}", path.display())));
        }
        let model: CbmModel = serde_json::from_str(&fs::read_to_string(path)?)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "model format version {} is not supported",
                model.format_version
            )));
        }
        Ok(model)
    }
}

/// Everything needed to serve a trained model: `model.json`,
/// `train_config.json` and `stats.json` in one directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub model: CbmModel,
    pub config: TrainConfig,
    pub stats: PreprocessStats,
}

impl ModelBundle {
    pub fn new(model: CbmModel, config: TrainConfig, stats: PreprocessStats) -> Result<Self> {
        if model.schema_hash != stats.schema_hash {
            return Err(Error::HashMismatch { expected: model.schema_hash, found: stats.schema_hash });
        }
        Ok(ModelBundle { model, config, stats })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.model.save(&dir.join("model.json"))?;
        fs::write(dir.join("train_config.json"), serde_json::to_string_pretty(&self.config)?)?;
        fs::write(dir.join("stats.json"), serde_json::to_string_pretty(&self.stats)?)?;
        Ok(())
    }

    /// Loads a bundle; with `schema`, also checks the model was trained on it.
    pub fn load(dir: &Path, schema: Option<&Schema>) -> Result<Self> {
        let model = CbmModel::load_unchecked(&dir.join("model.json"))?;
        if let Some(schema) = schema {
            model.check_schema(schema)?;
        }
        let read = |name: &str| -> Result<String> {
            let path = dir.join(name);
            if !path.is_file() {
                return Err(Error::MissingInput(format!("no {name} in {}", dir.display())));
            }
            Ok(fs::read_to_string(path)?)
        };
        let config = serde_json::from_str(&read("train_config.json")?)?;
        let stats = serde_json::from_str(&read("stats.json")?)?;
        Self::new(model, config, stats)
    }
}

/// Dense per-split arrays used for training and evaluation.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub x: Vec<Vec<f64>>,
    /// True tabular concepts.
    pub concepts: Vec<Vec<f64>>,
    pub text: Vec<Vec<f64>>,
    pub y: Vec<u8>,
}

impl Dataset {
    pub fn from_cohort(cohort: &Cohort, split: Split, text_indices: &[usize]) -> Result<Self> {
        if cohort.stage != Stage::Preprocessed {
            return Err(Error::Data("training and evaluation need a preprocessed cohort".into()));
        }
        let k = cohort.schema.concepts.tabular_count();
        let mut ds = Dataset { ids: vec![], x: vec![], concepts: vec![], text: vec![], y: vec![] };
        for r in cohort.split(split) {
            let c = r.concept_values()?;
            ds.ids.push(r.id.clone());
            ds.x.push(r.features()?);
            ds.concepts.push(c[..k].to_vec());
            ds.text.push(text_indices.iter().map(|&j| c[j]).collect());
            ds.y.push(r.y);
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn sample(&self, i: usize) -> Sample<'_> {
        Sample { x: &self.x[i], text: &self.text[i], concepts: &self.concepts[i], y: self.y[i] }
    }
}

fn concept_loss(kind: ValueKind, p: f64, t: f64) -> (f64, f64) {
    match kind {
        ValueKind::Binary => (bce(p, t), bce_grad(p, t)),
        ValueKind::Continuous => (mse(p, t), mse_grad(p, t)),
    }
}

/// One training example in bottleneck terms.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub x: &'a [f64],
    pub text: &'a [f64],
    /// True tabular concepts.
    pub concepts: &'a [f64],
    pub y: u8,
}

/// Joint objective for one sample: label BCE plus `lambda` times the concept losses.
pub fn joint_loss(g: &DenseNet, f: &DenseNet, specs: &[ConceptSpec], lambda: f64, s: &Sample) -> Result<f64> {
    let mut b = g.forward(s.x)?;
    let concept: f64 = specs.iter().enumerate().map(|(j, spec)| concept_loss(spec.kind, b[j], s.concepts[j]).0).sum();
    b.extend_from_slice(s.text);
    let p = f.forward(&b)?[0];
    Ok(bce(p, f64::from(s.y)) + lambda * concept)
}

/// Adds the gradients of [`joint_loss`] to `grad_g` and `grad_f` and returns the loss.
/// Text concepts are inputs to `f` only; nothing flows back into them.
pub fn joint_sample_gradients(
    g: &DenseNet,
    f: &DenseNet,
    specs: &[ConceptSpec],
    lambda: f64,
    s: &Sample,
    grad_g: &mut Gradients,
    grad_f: &mut Gradients,
) -> Result<f64> {
    let k = specs.len();
    let trace_g = g.forward_trace(s.x)?;
    let mut bottleneck = trace_g.output().to_vec();
    bottleneck.extend_from_slice(s.text);
    let trace_f = f.forward_trace(&bottleneck)?;
    let p = trace_f.output()[0];
    let t = f64::from(s.y);
    let mut loss = bce(p, t);
    let d_bottleneck = f.backward(&trace_f, &[bce_grad(p, t)], grad_f);
    let mut d_concepts = d_bottleneck[..k].to_vec();
    for (j, spec) in specs.iter().enumerate() {
        let (l, dl) = concept_loss(spec.kind, bottleneck[j], s.concepts[j]);
        loss += lambda * l;
        d_concepts[j] += lambda * dl;
    }
    g.backward(&trace_g, &d_concepts, grad_g);
    Ok(loss)
}

fn build_net(input: usize, hidden: &[usize], output: usize, rng: &mut ChaCha8Rng) -> Result<DenseNet> {
    let mut widths = vec![input];
    widths.extend_from_slice(hidden);
    widths.push(output);
    let mut acts = vec![Activation::Relu; hidden.len()];
    acts.push(Activation::Sigmoid);
    DenseNet::init(&widths, &acts, rng)
}

fn check_loss(epoch: usize, loss: f64) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Diverged { epoch, detail: format!("mean loss is {loss}") });
    }
    Ok(())
}

struct Setup {
    data: Dataset,
    specs: Vec<ConceptSpec>,
    text_indices: Vec<usize>,
    g: DenseNet,
    f: DenseNet,
    rng: ChaCha8Rng,
}

fn setup(cohort: &Cohort, config: &TrainConfig) -> Result<Setup> {
    config.validate()?;
    let schema = &cohort.schema;
    let text_indices = config.text_indices(schema)?;
    let data = Dataset::from_cohort(cohort, Split::Train, &text_indices)?;
    if data.is_empty() {
        return Err(Error::Data("train split is empty".into()));
    }
    let specs = schema.concepts.tabular().to_vec();
    if specs.is_empty() {
        return Err(Error::Config("a concept bottleneck needs at least one tabular concept".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let arch = &config.architecture;
    let g = build_net(schema.features.d(), &arch.concept_hidden, specs.len(), &mut rng)?;
    let f = build_net(specs.len() + text_indices.len(), &arch.label_hidden, 1, &mut rng)?;
    Ok(Setup { data, specs, text_indices, g, f, rng })
}

fn finish(cohort: &Cohort, config: &TrainConfig, s: Setup, train_loss: Vec<f64>) -> CbmModel {
    let schema = &cohort.schema;
    CbmModel {
        format_version: MODEL_FORMAT_VERSION,
        mode: config.mode,
        regime: config.regime,
        lambda: config.lambda,
        schema_hash: schema.hash(),
        concepts: s.specs,
        text_concepts: s
            .text_indices
            .iter()
            .map(|&j| schema.concepts.concepts[j].name.clone())
            .collect(),
        text_indices: s.text_indices,
        g: s.g,
        f: s.f,
        train_loss,
    }
}

/// Trains with the regime named in `config`.
pub fn train(cohort: &Cohort, config: &TrainConfig) -> Result<CbmModel> {
    match config.regime {
        Regime::Joint => train_joint(cohort, config),
        Regime::Sequential => train_sequential(cohort, config),
    }
}

pub fn train_joint(cohort: &Cohort, config: &TrainConfig) -> Result<CbmModel> {
    let mut s = setup(cohort, config)?;
    let mut opt_g = Adam::new(&s.g, config.learning_rate)?;
    let mut opt_f = Adam::new(&s.f, config.learning_rate)?;
    let mut grad_g = Gradients::zeros_like(&s.g);
    let mut grad_f = Gradients::zeros_like(&s.f);
    let n = s.data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut s.rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad_g.clear();
            grad_f.clear();
            for &i in batch {
                let sample = s.data.sample(i);
                total += joint_sample_gradients(&s.g, &s.f, &s.specs, config.lambda, &sample, &mut grad_g, &mut grad_f)?;
            }
            let scale = 1.0 / batch.len() as f64;
            grad_g.scale(scale);
            grad_f.scale(scale);
            opt_g.step(&mut s.g, &grad_g)?;
            opt_f.step(&mut s.f, &grad_f)?;
        }
        let mean = total / n as f64;
        check_loss(epoch, mean)?;
        history.push(mean);
    }
    Ok(finish(cohort, config, s, history))
}

pub fn train_sequential(cohort: &Cohort, config: &TrainConfig) -> Result<CbmModel> {
    let mut s = setup(cohort, config)?;
    let n = s.data.len();

    // Phase 1: concepts only.
    let mut opt_g = Adam::new(&s.g, config.learning_rate)?;
    let mut grad_g = Gradients::zeros_like(&s.g);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut s.rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad_g.clear();
            for &i in batch {
                let trace = s.g.forward_trace(&s.data.x[i])?;
                let out = trace.output();
                let mut d = vec![0.0; s.specs.len()];
                for (j, spec) in s.specs.iter().enumerate() {
                    let (l, dl) = concept_loss(spec.kind, out[j], s.data.concepts[i][j]);
                    total += l;
                    d[j] = dl;
                }
                s.g.backward(&trace, &d, &mut grad_g);
            }
            grad_g.scale(1.0 / batch.len() as f64);
            opt_g.step(&mut s.g, &grad_g)?;
        }
        check_loss(epoch, total / n as f64)?;
    }

    // Phase 2: label predictor on frozen soft concepts.
    let bottlenecks: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut b = s.g.forward(&s.data.x[i])?;
            b.extend_from_slice(&s.data.text[i]);
            Ok(b)
        })
        .collect::<Result<_>>()?;
    let mut opt_f = Adam::new(&s.f, config.learning_rate)?;
    let mut grad_f = Gradients::zeros_like(&s.f);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut s.rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad_f.clear();
            for &i in batch {
                let trace = s.f.forward_trace(&bottlenecks[i])?;
                let p = trace.output()[0];
                let t = f64::from(s.data.y[i]);
                total += bce(p, t);
                s.f.backward(&trace, &[bce_grad(p, t)], &mut grad_f);
            }
            grad_f.scale(1.0 / batch.len() as f64);
            opt_f.step(&mut s.f, &grad_f)?;
        }
        let mean = total / n as f64;
        check_loss(epoch, mean)?;
        history.push(mean);
    }
    Ok(finish(cohort, config, s, history))
}

/// Predictions of a model on one split, aligned by record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPredictions {
    pub ids: Vec<String>,
    pub bottlenecks: Vec<Vec<f64>>,
    pub probabilities: Vec<f64>,
    pub labels: Vec<u8>,
    pub y: Vec<u8>,
    /// True tabular concepts.
    pub true_concepts: Vec<Vec<f64>>,
}

pub fn predict_split(model: &CbmModel, cohort: &Cohort, split: Split) -> Result<SplitPredictions> {
    model.check_schema(&cohort.schema)?;
    let data = Dataset::from_cohort(cohort, split, &model.text_indices)?;
    let mut out = SplitPredictions {
        ids: data.ids.clone(),
        bottlenecks: Vec::with_capacity(data.len()),
        probabilities: Vec::with_capacity(data.len()),
        labels: Vec::with_capacity(data.len()),
        y: data.y.clone(),
        true_concepts: data.concepts.clone(),
    };
    for i in 0..data.len() {
        let p = model.predict(&data.x[i], Some(&data.text[i]))?;
        out.bottlenecks.push(p.bottleneck);
        out.probabilities.push(p.probability);
        out.labels.push(p.label);
    }
    Ok(out)
}

impl SplitPredictions {
    /// Predicted tabular concepts (the `g` part of each bottleneck).
    pub fn predicted_concepts(&self, k: usize) -> Vec<Vec<f64>> {
        self.bottlenecks.iter().map(|b| b[..k].to_vec()).collect()
    }
}

/// Label, MI and concept-quality metrics of `model` on `split`.
pub fn evaluate(model: &CbmModel, cohort: &Cohort, split: Split) -> Result<MetricsReport> {
    let preds = predict_split(model, cohort, split)?;
    let k = model.concepts.len();
    metrics::metrics_report(
        &preds.probabilities,
        &preds.y,
        &preds.predicted_concepts(k),
        &preds.true_concepts,
        &model.concepts,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    AnnFeatures,
    AnnFeaturesPlusText,
    LogisticFeatures,
    LogisticFeaturesPlusText,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::AnnFeatures,
        BaselineKind::AnnFeaturesPlusText,
        BaselineKind::LogisticFeatures,
        BaselineKind::LogisticFeaturesPlusText,
    ];

    pub fn uses_text(self) -> bool {
        matches!(self, BaselineKind::AnnFeaturesPlusText | BaselineKind::LogisticFeaturesPlusText)
    }

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::AnnFeatures => "ann-features",
            BaselineKind::AnnFeaturesPlusText => "ann-features-plus-text",
            BaselineKind::LogisticFeatures => "logistic-features",
            BaselineKind::LogisticFeaturesPlusText => "logistic-features-plus-text",
        }
    }
}

/// Direct `x -> y` (or `[x, text] -> y`) classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub kind: BaselineKind,
    pub text_indices: Vec<usize>,
    pub net: DenseNet,
    pub train_loss: Vec<f64>,
}

impl Baseline {
    fn input(&self, x: &[f64], text: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        if self.kind.uses_text() {
            v.extend_from_slice(text);
        }
        v
    }

    pub fn predict_record(&self, record: &PatientRecord) -> Result<f64> {
        let x = record.features()?;
        let c = record.concept_values()?;
        let text: Vec<f64> = self.text_indices.iter().map(|&j| c[j]).collect();
        Ok(self.net.forward(&self.input(&x, &text))?[0])
    }

    pub fn evaluate(&self, cohort: &Cohort, split: Split) -> Result<metrics::ClassificationMetrics> {
        let records: Vec<_> = cohort.split(split).collect();
        let probs = records.iter().map(|r| self.predict_record(r)).collect::<Result<Vec<_>>>()?;
        let y: Vec<u8> = records.iter().map(|r| r.y).collect();
        metrics::classification_metrics(&probs, &y)
    }
}

/// Trains a baseline with the optimisation settings of `config` (mode,
/// regime and lambda are ignored). Logistic baselines have no hidden layer.
pub fn train_baseline(cohort: &Cohort, kind: BaselineKind, config: &TrainConfig) -> Result<Baseline> {
    config.validate()?;
    let schema = &cohort.schema;
    let text_indices = if kind.uses_text() { schema.concepts.text_indices() } else { Vec::new() };
    let data = Dataset::from_cohort(cohort, Split::Train, &text_indices)?;
    if data.is_empty() {
        return Err(Error::Data("train split is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let hidden: &[usize] = match kind {
        BaselineKind::AnnFeatures | BaselineKind::AnnFeaturesPlusText => &config.architecture.concept_hidden,
        _ => &[],
    };
    let input = schema.features.d() + text_indices.len();
    let net = build_net(input, hidden, 1, &mut rng)?;
    let mut model = Baseline { kind, text_indices, net, train_loss: Vec::new() };
    let inputs: Vec<Vec<f64>> = (0..data.len()).map(|i| model.input(&data.x[i], &data.text[i])).collect();
    let mut opt = Adam::new(&model.net, config.learning_rate)?;
    let mut grads = Gradients::zeros_like(&model.net);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.clear();
            for &i in batch {
                let trace = model.net.forward_trace(&inputs[i])?;
                let p = trace.output()[0];
                let t = f64::from(data.y[i]);
                total += bce(p, t);
                model.net.backward(&trace, &[bce_grad(p, t)], &mut grads);
            }
            grads.scale(1.0 / batch.len() as f64);
            opt.step(&mut model.net, &grads)?;
        }
        let mean = total / data.len() as f64;
        check_loss(epoch, mean)?;
        model.train_loss.push(mean);
    }
    Ok(model)
}
