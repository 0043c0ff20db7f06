// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic cohort generator.
//!
//! Every schema group (a `group` tag on features and concepts) owns a latent
//! severity factor; factors share a common component whose weight is
//! `concept_correlation`. Each group also carries an unobserved measurement
//! whose error is mixed from a common component with the same weight,
//! so tabular concepts are deterministic functions of observed features plus
//! measurements that never reach the feature matrix. Text concepts are
//! Bernoulli draws loosely tied to their group factor. The label thresholds a
//! weighted sum of standardized concepts.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{
    Cohort, ConceptSource, DocKind, PatientRecord, Schema, Split, Stage, ValueKind,
};
use crate::textconcepts::Lexicon;

/// Noise on observed continuous features around their group factor.
const FEATURE_NOISE: f64 = 0.35;
/// Noise on the unobserved per-group measurement.
const HIDDEN_NOISE: f64 = 0.8;
/// Per-concept idiosyncratic noise.
const CONCEPT_NOISE: f64 = 0.05;
/// Spread of continuous concepts around 0.5 before clipping.
const CONCEPT_SCALE: f64 = 0.3;
/// Observability weights cycled over the continuous concepts of a group.
const OBSERVED_SHARE: [f64; 3] = [0.75, 0.45, 0.6];
/// Text concepts fire when their latent exceeds this threshold (~31% prevalence).
const TEXT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_patients: usize,
    pub seed: u64,
    /// One weight per concept (tabular then text), applied to standardized
    /// concept values.
    pub label_weights: Vec<f64>,
    /// Scale of logistic label noise relative to the standardized score.
    pub noise_sd: f64,
    /// Share of total absolute weight mass placed on text concepts.
    pub text_signal_share: f64,
    /// Per-entry MCAR missingness for features.
    pub missingness_rate: f64,
    /// Per-feature missingness overrides, by feature name.
    #[serde(default)]
    pub feature_missingness: BTreeMap<String, f64>,
    /// Weight of the shared severity component in every group factor.
    #[serde(default = "default_concept_correlation")]
    pub concept_correlation: f64,
    /// Loading of text concepts on their group factor.
    #[serde(default = "default_text_loading")]
    pub text_loading: f64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
}

fn default_concept_correlation() -> f64 {
    0.3
}
fn default_text_loading() -> f64 {
    0.4
}
fn default_train_fraction() -> f64 {
    0.7
}
fn default_validation_fraction() -> f64 {
    0.15
}

impl GeneratorConfig {
    /// Unit weights on every concept.
    pub fn uniform(schema: &Schema, n_patients: usize, seed: u64) -> Self {
        GeneratorConfig {
            n_patients,
            seed,
            label_weights: vec![1.0; schema.concepts.len()],
            noise_sd: 0.0,
            text_signal_share: 0.0,
            missingness_rate: 0.0,
            feature_missingness: BTreeMap::new(),
            concept_correlation: default_concept_correlation(),
            text_loading: default_text_loading(),
            train_fraction: default_train_fraction(),
            validation_fraction: default_validation_fraction(),
        }
    }

    /// Weights emphasising respiratory concepts, with the cardiac text
    /// concepts pulling the other way.
    pub fn ards_default(schema: &Schema, n_patients: usize, seed: u64) -> Self {
        let weights = schema
            .concepts
            .concepts
            .iter()
            .map(|c| match c.name.as_str() {
                "cardiac_arrest" | "cardiac_failure" => -0.5,
                "pancreatitis" | "trali" => 0.5,
                n if n.starts_with("sofa_respiration") => 1.0,
                n if n.starts_with("resp_comorbidity") => 0.6,
                n if n.starts_with("sofa_") => 0.4,
                _ => 1.0,
            })
            .collect();
        GeneratorConfig {
            label_weights: weights,
            text_signal_share: 0.5,
            noise_sd: 0.0,
            ..Self::uniform(schema, n_patients, seed)
        }
    }

    fn check(&self, schema: &Schema) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_patients < 10 {
            return bad(format!("n_patients = {} (need at least 10)", self.n_patients));
        }
        if self.label_weights.len() != schema.concepts.len() {
            return Err(Error::Dimension {
                context: "label_weights".into(),
                expected: schema.concepts.len(),
                got: self.label_weights.len(),
            });
        }
        if self.label_weights.iter().any(|w| !w.is_finite()) {
            return bad("label weights must be finite".into());
        }
        if self.label_weights.iter().all(|w| *w == 0.0) {
            return bad("label weights are all zero".into());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd = {}", self.noise_sd));
        }
        if !(0.0..=1.0).contains(&self.text_signal_share) {
            return bad(format!("text_signal_share = {}", self.text_signal_share));
        }
        let rates = std::iter::once(self.missingness_rate).chain(self.feature_missingness.values().copied());
        for r in rates {
            if !(0.0..1.0).contains(&r) {
                return bad(format!("missingness rate {r} outside [0, 1)"));
            }
        }
        for name in self.feature_missingness.keys() {
            if schema.features.index_of(name).is_none() {
                return bad(format!("missingness override for unknown feature `{name}`"));
            }
        }
        if !(0.0..=1.0).contains(&self.concept_correlation) || !(0.0..=1.0).contains(&self.text_loading) {
            return bad("concept_correlation and text_loading must lie in [0, 1]".into());
        }
        let (t, v) = (self.train_fraction, self.validation_fraction);
        if !(t > 0.0 && v >= 0.0 && t + v <= 1.0) {
            return bad(format!("split fractions train={t} validation={v}"));
        }
        Ok(())
    }

    /// Label weights with each source's absolute mass rescaled to its share.
    pub fn effective_weights(&self, schema: &Schema) -> Result<Vec<f64>> {
        let split = schema.concepts.tabular_count();
        let mass = |ws: &[f64]| ws.iter().map(|w| w.abs()).sum::<f64>();
        let (tab, text) = self.label_weights.split_at(split);
        let (tab_mass, text_mass) = (mass(tab), mass(text));
        let share = self.text_signal_share;
        if share > 0.0 && text_mass == 0.0 {
            return Err(Error::Config("text_signal_share > 0 but text weights are zero".into()));
        }
        if share < 1.0 && tab_mass == 0.0 {
            return Err(Error::Config("text_signal_share < 1 but tabular weights are zero".into()));
        }
        let scale_tab = if tab_mass > 0.0 { (1.0 - share) / tab_mass } else { 0.0 };
        let scale_text = if text_mass > 0.0 { share / text_mass } else { 0.0 };
        Ok(tab
            .iter()
            .map(|w| w * scale_tab)
            .chain(text.iter().map(|w| w * scale_text))
            .collect())
    }
}

/// Assigns every feature and concept to a latent group index.
struct Groups {
    count: usize,
    feature: Vec<usize>,
    concept: Vec<usize>,
}

impl Groups {
    fn of(schema: &Schema) -> Self {
        let mut names: Vec<&str> = Vec::new();
        let tags = schema
            .features
            .features
            .iter()
            .map(|f| f.group.as_deref())
            .chain(schema.concepts.concepts.iter().map(|c| c.group.as_deref()));
        for tag in tags.flatten() {
            if !names.contains(&tag) {
                names.push(tag);
            }
        }
        let count = names.len().max(1);
        let resolve = |tag: Option<&str>, pos: usize| match tag {
            Some(t) => names.iter().position(|n| *n == t).expect("collected"),
            None => pos % count,
        };
        Groups {
            count,
            feature: schema
                .features
                .features
                .iter()
                .enumerate()
                .map(|(i, f)| resolve(f.group.as_deref(), i))
                .collect(),
            concept: schema
                .concepts
                .concepts
                .iter()
                .enumerate()
                .map(|(i, c)| resolve(c.group.as_deref(), i))
                .collect(),
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws a complete synthetic cohort. Deterministic given `config.seed`.
pub fn generate_cohort(config: &GeneratorConfig, schema: &Schema, lexicon: &Lexicon) -> Result<Cohort> {
    config.check(schema)?;
    let weights = config.effective_weights(schema)?;
    let groups = Groups::of(schema);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_patients;
    let features = &schema.features.features;
    let concepts = &schema.concepts.concepts;
    let rho = config.concept_correlation;

    let missing_rate: Vec<f64> = features
        .iter()
        .map(|f| *config.feature_missingness.get(&f.name).unwrap_or(&config.missingness_rate))
        .collect();

    // Position of each continuous concept within its group, for observability cycling,
    // and of each binary tabular concept, for count bands.
    let mut cont_pos = vec![0usize; concepts.len()];
    let mut bin_pos = vec![0usize; concepts.len()];
    let mut bin_in_group = vec![0usize; groups.count];
    {
        let mut seen_cont = vec![0usize; groups.count];
        for (j, c) in concepts.iter().enumerate() {
            let g = groups.concept[j];
            match (c.source, c.kind) {
                (ConceptSource::Tabular, ValueKind::Continuous) => {
                    cont_pos[j] = seen_cont[g];
                    seen_cont[g] += 1;
                }
                (ConceptSource::Tabular, ValueKind::Binary) => {
                    bin_pos[j] = bin_in_group[g];
                    bin_in_group[g] += 1;
                }
                _ => {}
            }
        }
    }

    // Continuous features of each group; a group's p-th continuous concept
    // reads its p-th feature (cycled).
    let group_continuous: Vec<Vec<usize>> = (0..groups.count)
        .map(|g| {
            (0..features.len())
                .filter(|&f| groups.feature[f] == g && features[f].kind == ValueKind::Continuous)
                .collect()
        })
        .collect();

    let mut records = Vec::with_capacity(n);
    let mut scores_input = Vec::with_capacity(n);
    for i in 0..n {
        let shared = normal(&mut rng);
        let factor: Vec<f64> = (0..groups.count)
            .map(|_| rho.sqrt() * shared + (1.0 - rho).sqrt() * normal(&mut rng))
            .collect();
        // Unobserved measurement error shares the same common component, so
        // concepts stay correlated beyond what the features reveal.
        let shared_noise = normal(&mut rng);
        let hidden: Vec<f64> = factor
            .iter()
            .map(|z| z + HIDDEN_NOISE * (rho.sqrt() * shared_noise + (1.0 - rho).sqrt() * normal(&mut rng)))
            .collect();

        // Observed features in latent units.
        let mut latent_feature = vec![0.0; features.len()];
        let mut x = Vec::with_capacity(features.len());
        for (f, spec) in features.iter().enumerate() {
            let z = factor[groups.feature[f]];
            let value = match spec.kind {
                ValueKind::Continuous => {
                    let u = z + FEATURE_NOISE * normal(&mut rng);
                    latent_feature[f] = u;
                    let center = 10.0 * (f + 1) as f64;
                    let spread = 1.0 + (f % 5) as f64;
                    center + spread * u
                }
                ValueKind::Binary => {
                    let p = crate::nn::sigmoid(1.2 * z - 1.0);
                    let v = f64::from(u8::from(rng.random::<f64>() < p));
                    latent_feature[f] = v;
                    v
                }
            };
            x.push(value);
        }

        // Group-level observed summary: mean latent of continuous features.
        let mut observed = factor.clone();
        for (g, obs) in observed.iter_mut().enumerate() {
            if !group_continuous[g].is_empty() {
                let members = &group_continuous[g];
                *obs = members.iter().map(|&f| latent_feature[f]).sum::<f64>() / members.len() as f64;
            }
        }
        let set_binary: Vec<usize> = (0..groups.count)
            .map(|g| {
                (0..features.len())
                    .filter(|&f| groups.feature[f] == g && features[f].kind == ValueKind::Binary)
                    .filter(|&f| latent_feature[f] == 1.0)
                    .count()
            })
            .collect();
        let has_binary_features: Vec<bool> = (0..groups.count)
            .map(|g| (0..features.len()).any(|f| groups.feature[f] == g && features[f].kind == ValueKind::Binary))
            .collect();

        let mut c = Vec::with_capacity(concepts.len());
        for (j, spec) in concepts.iter().enumerate() {
            let g = groups.concept[j];
            let value = match (spec.source, spec.kind) {
                (ConceptSource::Tabular, ValueKind::Continuous) => {
                    let p = cont_pos[j];
                    let a = OBSERVED_SHARE[p % OBSERVED_SHARE.len()];
                    let members = &group_continuous[g];
                    let own = if members.is_empty() { factor[g] } else { latent_feature[members[p % members.len()]] };
                    let mix = a * own + (1.0 - a) * hidden[g] + CONCEPT_NOISE * normal(&mut rng);
                    (0.5 + CONCEPT_SCALE * mix).clamp(0.0, 1.0)
                }
                (ConceptSource::Tabular, ValueKind::Binary) => {
                    let b = bin_pos[j];
                    let hit = if has_binary_features[g] {
                        let k = set_binary[g];
                        let lower = 1 + 2 * b;
                        let last = b + 1 == bin_in_group[g];
                        k >= lower && (last || k <= lower + 1)
                    } else {
                        0.6 * observed[g] + 0.4 * hidden[g] > 0.5 * b as f64
                    };
                    f64::from(u8::from(hit))
                }
                (ConceptSource::Text, _) => {
                    let r = config.text_loading;
                    let latent = r * factor[g] + (1.0 - r * r).sqrt() * normal(&mut rng);
                    f64::from(u8::from(latent > TEXT_THRESHOLD))
                }
            };
            c.push(value);
        }

        let x: Vec<Option<f64>> = x
            .into_iter()
            .zip(&missing_rate)
            .map(|(v, &rate)| if rate > 0.0 && rng.random::<f64>() < rate { None } else { Some(v) })
            .collect();
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        let label_noise = (u / (1.0 - u)).ln();
        scores_input.push((c.clone(), label_noise));
        records.push(PatientRecord {
            id: format!("P{:05}", i + 1),
            split: Split::Train,
            x,
            concepts: c.into_iter().map(Some).collect(),
            documents: BTreeMap::new(),
            y: 0,
        });
    }

    // Labels from standardized concepts.
    let k = concepts.len();
    let mut means = vec![0.0; k];
    let mut sds = vec![0.0; k];
    for j in 0..k {
        let col: Vec<f64> = scores_input.iter().map(|(c, _)| c[j]).collect();
        means[j] = col.iter().sum::<f64>() / n as f64;
        sds[j] = (col.iter().map(|v| (v - means[j]).powi(2)).sum::<f64>() / n as f64).sqrt();
    }
    let raw: Vec<f64> = scores_input
        .iter()
        .map(|(c, _)| {
            (0..k)
                .filter(|&j| sds[j] > 0.0)
                .map(|j| weights[j] * (c[j] - means[j]) / sds[j])
                .sum()
        })
        .collect();
    let score_mean = raw.iter().sum::<f64>() / n as f64;
    let score_sd = (raw.iter().map(|s| (s - score_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if score_sd == 0.0 {
        return Err(Error::Config("label score is constant; weights only touch constant concepts".into()));
    }
    for (r, (s, (_, noise))) in records.iter_mut().zip(raw.iter().zip(&scores_input)) {
        let z = (s - score_mean) / score_sd;
        r.y = u8::from(z + config.noise_sd * noise > 0.0);
    }

    assign_splits(&mut records, config, &mut rng);
    for r in &mut records {
        r.documents = synthesize_documents(schema, lexicon, &r.concepts, &mut rng);
    }

    Ok(Cohort {
        schema: schema.clone(),
        stage: Stage::Raw,
        records,
    })
}

fn assign_splits(records: &mut [PatientRecord], config: &GeneratorConfig, rng: &mut ChaCha8Rng) {
    let n = records.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_train = ((n as f64) * config.train_fraction).round() as usize;
    let n_val = ((n as f64) * config.validation_fraction).round() as usize;
    for (rank, &idx) in order.iter().enumerate() {
        records[idx].split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
    }
}

const FILLER: &[&str] = &[
    "Patient was admitted to the intensive care unit for monitoring.",
    "Vital signs were reviewed every hour by nursing staff.",
    "Family was updated at the bedside regarding the plan of care.",
    "Electrolytes were repleted per protocol.",
    "Sedation was titrated to comfort with daily interruption.",
    "Nutrition was started through an enteral feeding tube.",
    "Physical therapy evaluated mobility and recommended progression.",
    "Glucose was managed with a sliding scale regimen.",
    "Lines and drains were inspected and remained in place.",
    "Medication reconciliation was completed before transfer.",
    "Laboratory studies were trended without acute change.",
    "The patient tolerated the procedure without complication.",
    "Skin examination showed intact integument.",
    "Plan discussed with the attending physician on rounds.",
    "Deep vein thrombosis prophylaxis was continued.",
    "Pain was controlled with scheduled analgesia.",
];

const IMAGING_FILLER: &[&str] = &[
    "Portable single view of the chest was obtained.",
    "Support devices are in standard position.",
    "Cardiomediastinal silhouette is within normal limits.",
    "No pneumothorax is identified on this study.",
    "Osseous structures are unremarkable.",
    "Comparison is made to the prior examination.",
];

const ECHO_FILLER: &[&str] = &[
    "Left ventricular wall thickness is normal.",
    "The aortic valve leaflets open normally.",
    "Right ventricular size is within normal limits.",
    "There is no pericardial effusion.",
    "The mitral valve appears structurally normal.",
    "Image quality was adequate for interpretation.",
];

fn filler_for(kind: DocKind) -> &'static [&'static str] {
    match kind {
        DocKind::Discharge => FILLER,
        DocKind::Radiology => IMAGING_FILLER,
        DocKind::Echo => ECHO_FILLER,
    }
}

/// Builds one document per kind, planting each positive text concept's
/// trigger phrase in one of its routed documents.
fn synthesize_documents(
    schema: &Schema,
    lexicon: &Lexicon,
    concepts: &[Option<f64>],
    rng: &mut ChaCha8Rng,
) -> BTreeMap<DocKind, String> {
    let mut sentences: HashMap<DocKind, Vec<String>> = HashMap::new();
    for kind in DocKind::ALL {
        let pool = filler_for(kind);
        let len = match kind {
            DocKind::Discharge => rng.random_range(30..90),
            _ => rng.random_range(6..24),
        };
        let doc = (0..len)
            .map(|_| pool[rng.random_range(0..pool.len())].to_string())
            .collect();
        sentences.insert(kind, doc);
    }
    for j in schema.concepts.text_indices() {
        if concepts[j] != Some(1.0) {
            continue;
        }
        let entry = lexicon.entry(&schema.concepts.concepts[j].name);
        let Some(entry) = entry else { continue };
        let kind = if entry.routes.len() > 1 && rng.random_bool(0.5) {
            entry.routes[1]
        } else {
            entry.routes[0]
        };
        let doc = sentences.get_mut(&kind).expect("all kinds present");
        let at = rng.random_range(0..=doc.len());
        doc.insert(at, format!("Findings are notable for {}.", entry.trigger));
    }
    DocKind::ALL
        .into_iter()
        .map(|k| (k, sentences.remove(&k).unwrap_or_default().join(" ")))
        .collect()
}
