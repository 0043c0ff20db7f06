// SPDX-License-Identifier: MIT OR Apache-2.0

//! Subcommands. Each one writes its artifact into the workspace and returns a
//! one-line summary.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use cbmw_core::cbm::{self, predict_split, train_baseline, BaselineKind};
use cbmw_core::data::{fit_preprocess, generate_cohort, GeneratorConfig, DEFAULT_MISSING_THRESHOLD};
use cbmw_core::intervene::run_intervention;
use cbmw_core::metrics::{leakage_report, Binning};
use cbmw_core::schema::Stage;
use cbmw_core::textconcepts::{extract_cohort, ChunkingConfig, ExtractionConfig, ExtractorClient, Lexicon, MockExtractor};
use cbmw_core::{Error, InterventionRequest, Mode, ModelBundle, Regime, Result, Schema, Split, TrainConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::service;
use crate::workspace::{Report, Workspace};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Parser)]
#[command(name = "cbmw", version, about = "Concept bottleneck model workbench")]
pub struct Cli {
    /// Workspace root holding cohorts/, models/, reports/ and configs/.
    #[arg(long, global = true, env = "CBMW_WORKSPACE", default_value = ".")]
    pub workspace: PathBuf,

    /// Seed for every random choice made by the command.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort with clinical notes.
    GenCohort(GenCohortArgs),
    /// Fill text concepts by running the extractor over each record's notes.
    ExtractConcepts(ExtractArgs),
    /// Drop sparse features, impute, scale and compute concept statistics.
    Preprocess(PreprocessArgs),
    /// Train a concept bottleneck model.
    Train(TrainCmdArgs),
    /// Evaluate a model on a split.
    Eval(EvalArgs),
    /// Apply a batch intervention request to a split.
    Intervene(InterveneArgs),
    /// Concept-task and inter-concept leakage of a model.
    AuditLeakage(LeakageArgs),
    /// Context-aware models restricted to subsets of text concepts.
    Ablate(AblateArgs),
    /// Direct classifiers next to vanilla and context-aware models.
    CompareBaselines(BaselineArgs),
    /// Serve a model over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Vanilla,
    ContextAware,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Vanilla => Mode::Vanilla,
            ModeArg::ContextAware => Mode::ContextAware,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RegimeArg {
    Joint,
    Sequential,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Joint => Regime::Joint,
            RegimeArg::Sequential => Regime::Sequential,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenCohortArgs {
    /// Output cohort name.
    #[arg(long, default_value = "synthetic")]
    pub name: String,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Schema JSON; defaults to the built-in ARDS schema.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Generator config JSON; `--n`, `--seed` and explicit flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub text_share: Option<f64>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    #[arg(long)]
    pub concept_correlation: Option<f64>,
    #[arg(long)]
    pub missingness: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub cohort: String,
    #[arg(long, default_value_t = ChunkingConfig::default().chunk_size)]
    pub chunk_size: usize,
    #[arg(long, default_value_t = ChunkingConfig::default().overlap)]
    pub overlap: usize,
    /// Lexicon JSON; defaults to the built-in entries for the schema.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Completion endpoint; without it the deterministic mock extractor is used.
    #[cfg(feature = "live-extractor")]
    #[arg(long)]
    pub endpoint: Option<String>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub cohort: String,
    /// Output cohort name; defaults to `<cohort>-prep`.
    #[arg(long)]
    pub out: Option<String>,
    /// Features missing on more than this train fraction are dropped.
    #[arg(long, default_value_t = DEFAULT_MISSING_THRESHOLD)]
    pub threshold: f64,
}

/// Optimisation settings shared by the training commands.
#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub regime: Option<RegimeArg>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Train config JSON; explicit flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl TrainArgs {
    fn resolve(&self, ws: &Workspace, seed: u64) -> Result<TrainConfig> {
        let mut cfg: TrainConfig = match &self.config {
            Some(p) => ws.read_config(p)?,
            None => TrainConfig::default(),
        };
        if let Some(r) = self.regime {
            cfg.regime = r.into();
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        cfg.seed = seed;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainCmdArgs {
    /// Preprocessed cohort to train on.
    #[arg(long)]
    pub cohort: String,
    /// Model name; defaults to `<mode>-<regime>`.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Comma-separated text concepts for a context-aware bottleneck.
    #[arg(long, value_delimiter = ',')]
    pub text_concepts: Option<Vec<String>>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: String,
    /// Preprocessed cohort; defaults to the training cohort.
    #[arg(long)]
    pub cohort: Option<String>,
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct InterveneArgs {
    #[arg(long)]
    pub model: String,
    /// Intervention request JSON.
    #[arg(long)]
    pub request: PathBuf,
    #[arg(long)]
    pub cohort: Option<String>,
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct LeakageArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub cohort: Option<String>,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Equal-width bins for continuous concepts.
    #[arg(long, default_value_t = Binning::default().bins)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub cohort: String,
    /// Comma-separated text concepts; without it every single concept is run
    /// next to the vanilla and full context-aware models.
    #[arg(long, value_delimiter = ',')]
    pub text_concepts: Option<Vec<String>>,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub cohort: String,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub cohort: Option<String>,
    #[arg(long, env = "CBMW_PORT", default_value_t = DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

pub fn run(cli: &Cli) -> Result<String> {
    let ws = Workspace::new(&cli.workspace);
    let seed = cli.seed;
    match &cli.command {
        Command::GenCohort(a) => gen_cohort(&ws, seed, a),
        Command::ExtractConcepts(a) => extract(&ws, a),
        Command::Preprocess(a) => preprocess(&ws, a),
        Command::Train(a) => train(&ws, seed, a),
        Command::Eval(a) => eval(&ws, seed, a),
        Command::Intervene(a) => intervene(&ws, seed, a),
        Command::AuditLeakage(a) => audit_leakage(&ws, seed, a),
        Command::Ablate(a) => ablate(&ws, seed, a),
        Command::CompareBaselines(a) => compare_baselines(&ws, seed, a),
        Command::Serve(a) => serve(&ws, a),
    }
}

fn report(kind: &str, schema_hash: &str, seed: u64, inputs: &[(&str, &str)], body: &impl Serialize) -> Result<Report> {
    Ok(Report {
        kind: kind.to_string(),
        schema_hash: schema_hash.to_string(),
        seed,
        inputs: inputs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<BTreeMap<_, _>>(),
        body: serde_json::to_value(body)?,
    })
}

pub fn gen_cohort(ws: &Workspace, seed: u64, a: &GenCohortArgs) -> Result<String> {
    let schema = match &a.schema {
        Some(p) => Schema::load(&ws.config_path(p)?)?,
        None => Schema::ards_default(),
    };
    let mut cfg = match &a.config {
        Some(p) => ws.read_config(p)?,
        None => GeneratorConfig::ards_default(&schema, a.n, seed),
    };
    cfg.n_patients = a.n;
    cfg.seed = seed;
    if let Some(v) = a.text_share {
        cfg.text_signal_share = v;
    }
    if let Some(v) = a.noise_sd {
        cfg.noise_sd = v;
    }
    if let Some(v) = a.concept_correlation {
        cfg.concept_correlation = v;
    }
    if let Some(v) = a.missingness {
        cfg.missingness_rate = v;
    }
    let cohort = generate_cohort(&cfg, &schema, &Lexicon::for_schema(&schema))?;
    let dir = ws.save_cohort(&a.name, &cohort)?;
    fs::write(dir.join("generator.json"), serde_json::to_string_pretty(&cfg)?)?;
    let positives = cohort.records.iter().filter(|r| r.y == 1).count();
    Ok(format!(
        "cohort {}: {} records ({} positive), schema {}",
        a.name,
        cohort.records.len(),
        positives,
        &schema.hash()[..12]
    ))
}

pub fn extract(ws: &Workspace, a: &ExtractArgs) -> Result<String> {
    let mut cohort = ws.load_cohort(&a.cohort)?;
    let lexicon = match &a.lexicon {
        Some(p) => Lexicon::load(&ws.config_path(p)?)?,
        None => Lexicon::for_schema(&cohort.schema),
    };
    let config = ExtractionConfig {
        chunking: ChunkingConfig { chunk_size: a.chunk_size, overlap: a.overlap },
        lexicon: lexicon.clone(),
        ..ExtractionConfig::for_schema(&cohort.schema)
    };
    let client: Box<dyn ExtractorClient> = {
        #[cfg(feature = "live-extractor")]
        {
            match &a.endpoint {
                Some(url) => Box::new(cbmw_core::textconcepts::HttpExtractor { url: url.clone() }),
                None => Box::new(MockExtractor::new(lexicon)),
            }
        }
        #[cfg(not(feature = "live-extractor"))]
        {
            Box::new(MockExtractor::new(lexicon))
        }
    };
    let extracted = extract_cohort(&cohort, client.as_ref(), &config)?;
    extracted.apply_to(&mut cohort)?;
    let dir = ws.save_cohort(&a.cohort, &cohort)?;
    extracted.write_csv(fs::File::create(dir.join("text_concepts.csv"))?)?;
    let positives: usize = extracted.rows.values().flatten().map(|&v| usize::from(v)).sum();
    Ok(format!(
        "extracted {} text concepts for {} records ({} positive, {} warnings)",
        extracted.concepts.len(),
        extracted.rows.len(),
        positives,
        extracted.warnings.len()
    ))
}

pub fn preprocess(ws: &Workspace, a: &PreprocessArgs) -> Result<String> {
    let raw = ws.load_cohort(&a.cohort)?;
    if raw.stage != Stage::Raw {
        return Err(Error::Config(format!("cohort `{}` is already preprocessed", a.cohort)));
    }
    let (cohort, stats) = fit_preprocess(&raw, a.threshold)?;
    let out = a.out.clone().unwrap_or_else(|| format!("{}-prep", a.cohort));
    ws.save_cohort(&out, &cohort)?;
    ws.save_stats(&out, &stats)?;
    Ok(format!(
        "cohort {out}: {} features kept, {} dropped, schema {}",
        stats.features.len(),
        stats.dropped.len(),
        &stats.schema_hash[..12]
    ))
}

pub fn train(ws: &Workspace, seed: u64, a: &TrainCmdArgs) -> Result<String> {
    let (cohort, stats) = ws.load_prepared(&a.cohort)?;
    let mut cfg = a.train.resolve(ws, seed)?;
    if let Some(m) = a.mode {
        cfg.mode = m.into();
    }
    if let Some(names) = &a.text_concepts {
        if cfg.mode == Mode::Vanilla {
            return Err(Error::Config("--text-concepts needs --mode context-aware".into()));
        }
        cfg.text_subset = Some(names.clone());
    }
    let name = a.model.clone().unwrap_or_else(|| {
        let mode = serde_json::to_value(cfg.mode).ok().and_then(|v| v.as_str().map(String::from));
        let regime = serde_json::to_value(cfg.regime).ok().and_then(|v| v.as_str().map(String::from));
        format!("{}-{}", mode.unwrap_or_default(), regime.unwrap_or_default())
    });
    ws.model_dir(&name)?;
    let model = cbm::train(&cohort, &cfg)?;
    let final_loss = model.train_loss.last().copied().unwrap_or(f64::NAN);
    let test = cbm::evaluate(&model, &cohort, Split::Test)?;
    let bundle = ModelBundle::new(model, cfg, stats)?;
    ws.save_model(&name, &bundle, &a.cohort)?;
    Ok(format!(
        "model {name}: {} features -> {} concepts, final loss {final_loss:.4}, test accuracy {:.3}",
        cohort.schema.features.d(),
        bundle.model.bottleneck_width(),
        test.classification.accuracy
    ))
}

pub fn eval(ws: &Workspace, seed: u64, a: &EvalArgs) -> Result<String> {
    let split: Split = a.split.parse()?;
    let (bundle, cohort, cohort_name) = ws.load_model_and_cohort(&a.model, a.cohort.as_deref())?;
    let metrics = cbm::evaluate(&bundle.model, &cohort, split)?;
    let r = report(
        "eval",
        &bundle.model.schema_hash,
        seed,
        &[("model", &a.model), ("cohort", &cohort_name), ("split", &a.split)],
        &metrics,
    )?;
    let path = ws.write_report(&format!("eval-{}-{}.json", a.model, a.split), &r)?;
    let c = &metrics.classification;
    Ok(format!(
        "eval {} on {}: accuracy {:.3}, f1 {:.3}, auc {:.3}, normalized MI {:.3} -> {}",
        a.model,
        a.split,
        c.accuracy,
        c.f1,
        c.auc,
        metrics.mi_normalized,
        path.display()
    ))
}

pub fn intervene(ws: &Workspace, seed: u64, a: &InterveneArgs) -> Result<String> {
    let split: Split = a.split.parse()?;
    let request: InterventionRequest = ws.read_config(&a.request)?;
    let (bundle, cohort, cohort_name) = ws.load_model_and_cohort(&a.model, a.cohort.as_deref())?;
    let records: Vec<_> = cohort.split(split).collect();
    let result = run_intervention(&bundle.model, &bundle.stats, &records, &request)?;
    let r = report(
        "intervene",
        &bundle.model.schema_hash,
        seed,
        &[("model", &a.model), ("cohort", &cohort_name), ("split", &a.split)],
        &result,
    )?;
    let path = ws.write_report(&format!("intervene-{}-{}.json", a.model, a.split), &r)?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
    let corrected = result.corrections.map_or("n/a".to_string(), |c| {
        format!("{} FN + {} FP corrected, {} new errors", c.fn_corrected, c.fp_corrected, c.new_fp + c.new_fn)
    });
    Ok(format!(
        "intervene {} on {} records: accuracy {} -> {}, {corrected} -> {}",
        a.model,
        result.records.len(),
        fmt(result.pre_accuracy()),
        fmt(result.post_accuracy()),
        path.display()
    ))
}

pub fn audit_leakage(ws: &Workspace, seed: u64, a: &LeakageArgs) -> Result<String> {
    let split: Split = a.split.parse()?;
    let (bundle, cohort, cohort_name) = ws.load_model_and_cohort(&a.model, a.cohort.as_deref())?;
    let model = &bundle.model;
    let preds = predict_split(model, &cohort, split)?;
    let k = model.concepts.len();
    let leak = leakage_report(
        &preds.predicted_concepts(k),
        &preds.true_concepts,
        &preds.y,
        &model.concepts,
        Binning { bins: a.bins },
    )?;
    let r = report(
        "audit-leakage",
        &model.schema_hash,
        seed,
        &[("model", &a.model), ("cohort", &cohort_name), ("split", &a.split)],
        &leak,
    )?;
    let path = ws.write_report(&format!("leakage-{}-{}.json", a.model, a.split), &r)?;
    fs::write(ws.reports_dir().join(format!("leakage-{}-{}-icl.csv", a.model, a.split)), leak.icl_csv())?;
    Ok(format!(
        "leakage {} on {}: mean CTL {:.4}, mean ICL {:.4}, {} flags -> {}",
        a.model,
        a.split,
        leak.mean_ctl(),
        leak.mean_icl(),
        leak.flags.len(),
        path.display()
    ))
}

#[derive(Debug, Clone, Serialize)]
struct AblationRow {
    mode: Mode,
    text_concepts: Vec<String>,
    accuracy: f64,
    f1: f64,
    auc: f64,
    mi_normalized: f64,
}

pub fn ablate(ws: &Workspace, seed: u64, a: &AblateArgs) -> Result<String> {
    let split: Split = a.split.parse()?;
    let (cohort, _) = ws.load_prepared(&a.cohort)?;
    let base = a.train.resolve(ws, seed)?;
    let all: Vec<String> = cohort.schema.concepts.text().iter().map(|c| c.name.clone()).collect();
    let subsets: Vec<(Mode, Option<Vec<String>>)> = match &a.text_concepts {
        Some(names) => vec![(Mode::ContextAware, Some(names.clone()))],
        None => std::iter::once((Mode::Vanilla, None))
            .chain(all.iter().map(|n| (Mode::ContextAware, Some(vec![n.clone()]))))
            .chain(std::iter::once((Mode::ContextAware, None)))
            .collect(),
    };
    let mut rows = Vec::with_capacity(subsets.len());
    for (mode, subset) in subsets {
        let cfg = TrainConfig { mode, text_subset: subset, ..base.clone() };
        let model = cbm::train(&cohort, &cfg)?;
        let m = cbm::evaluate(&model, &cohort, split)?;
        rows.push(AblationRow {
            mode,
            text_concepts: model.text_concepts.clone(),
            accuracy: m.classification.accuracy,
            f1: m.classification.f1,
            auc: m.classification.auc,
            mi_normalized: m.mi_normalized,
        });
    }
    let r = report(
        "ablate",
        &cohort.schema.hash(),
        seed,
        &[("cohort", &a.cohort), ("split", &a.split)],
        &rows,
    )?;
    let path = ws.write_report(&format!("ablate-{}-{}.json", a.cohort, a.split), &r)?;
    let best = rows
        .iter()
        .max_by(|x, y| x.accuracy.total_cmp(&y.accuracy))
        .map(|r| format!("{:.3} with [{}]", r.accuracy, r.text_concepts.join(",")))
        .unwrap_or_default();
    Ok(format!("ablate {}: {} models, best accuracy {best} -> {}", a.cohort, rows.len(), path.display()))
}

#[derive(Debug, Clone, Serialize)]
struct BaselineRow {
    name: String,
    accuracy: f64,
    precision: f64,
    recall: f64,
    f1: f64,
    auc: f64,
}

pub fn compare_baselines(ws: &Workspace, seed: u64, a: &BaselineArgs) -> Result<String> {
    let split: Split = a.split.parse()?;
    let (cohort, _) = ws.load_prepared(&a.cohort)?;
    let base = a.train.resolve(ws, seed)?;
    let row = |name: &str, c: &cbmw_core::metrics::ClassificationMetrics| BaselineRow {
        name: name.to_string(),
        accuracy: c.accuracy,
        precision: c.precision,
        recall: c.recall,
        f1: c.f1,
        auc: c.auc,
    };
    let mut rows = Vec::new();
    for kind in BaselineKind::ALL {
        let b = train_baseline(&cohort, kind, &base)?;
        rows.push(row(kind.name(), &b.evaluate(&cohort, split)?));
    }
    for (name, mode) in [("cbm-vanilla", Mode::Vanilla), ("cbm-context-aware", Mode::ContextAware)] {
        let model = cbm::train(&cohort, &TrainConfig { mode, text_subset: None, ..base.clone() })?;
        rows.push(row(name, &cbm::evaluate(&model, &cohort, split)?.classification));
    }
    let r = report(
        "compare-baselines",
        &cohort.schema.hash(),
        seed,
        &[("cohort", &a.cohort), ("split", &a.split)],
        &rows,
    )?;
    let path = ws.write_report(&format!("baselines-{}-{}.json", a.cohort, a.split), &r)?;
    let summary: Vec<String> = rows.iter().map(|r| format!("{} {:.3}", r.name, r.accuracy)).collect();
    Ok(format!("baselines {} accuracy: {} -> {}", a.cohort, summary.join(", "), path.display()))
}

fn serve(ws: &Workspace, a: &ServeArgs) -> Result<String> {
    let state = service::AppState::load(ws, &a.model, a.cohort.as_deref())?;
    let addr = format!("{}:{}", a.host, a.port);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr).await?;
        eprintln!("serving model {} on http://{addr}", a.model);
        axum::serve(listener, service::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok::<_, Error>(())
    })?;
    Ok(format!("stopped serving model {}", a.model))
}
