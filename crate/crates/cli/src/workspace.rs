// SPDX-License-Identifier: MIT OR Apache-2.0

//! On-disk layout: `cohorts/`, `models/`, `reports/` and `configs/` under one
//! root. Every artifact records the schema hash it was built against.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use cbmw_core::data::{load_cohort_dir, save_cohort_dir};
use cbmw_core::schema::Stage;
use cbmw_core::{Cohort, Error, ModelBundle, PreprocessStats, Result};
use serde::{Deserialize, Serialize};

pub const STATS_FILE: &str = "stats.json";
pub const SOURCE_FILE: &str = "source.json";
pub const LATEST_REPORT: &str = "latest.json";

#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

/// Cohort a model was trained on, stored beside the bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSource {
    pub cohort: String,
    pub schema_hash: String,
}

/// Envelope for every report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: String,
    pub schema_hash: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub body: serde_json::Value,
}

fn check_name(kind: &str, name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !name.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{kind} name `{name}` may only use letters, digits, '-', '_' and '.'")))
    }
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn cohort_dir(&self, name: &str) -> Result<PathBuf> {
        check_name("cohort", name)?;
        Ok(self.root.join("cohorts").join(name))
    }

    pub fn model_dir(&self, name: &str) -> Result<PathBuf> {
        check_name("model", name)?;
        Ok(self.root.join("models").join(name))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    /// `path` as given if it exists, else the same name under `configs/`.
    pub fn config_path(&self, path: &Path) -> Result<PathBuf> {
        if path.is_file() {
            return Ok(path.to_path_buf());
        }
        let candidate = self.root.join("configs").join(path);
        if candidate.is_file() {
            return Ok(candidate);
        }
        Err(Error::MissingInput(format!("config file {} not found", path.display())))
    }

    pub fn read_config<T: for<'de> Deserialize<'de>>(&self, path: &Path) -> Result<T> {
        let path = self.config_path(path)?;
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn load_cohort(&self, name: &str) -> Result<Cohort> {
        load_cohort_dir(&self.cohort_dir(name)?)
    }

    pub fn save_cohort(&self, name: &str, cohort: &Cohort) -> Result<PathBuf> {
        let dir = self.cohort_dir(name)?;
        save_cohort_dir(cohort, &dir)?;
        Ok(dir)
    }

    /// A preprocessed cohort and its statistics, with matching hashes.
    pub fn load_prepared(&self, name: &str) -> Result<(Cohort, PreprocessStats)> {
        let cohort = self.load_cohort(name)?;
        if cohort.stage != Stage::Preprocessed {
            return Err(Error::Config(format!("cohort `{name}` is raw; run preprocess first")));
        }
        let path = self.cohort_dir(name)?.join(STATS_FILE);
        if !path.is_file() {
            return Err(Error::MissingInput(format!("cohort `{name}` has no {STATS_FILE}")));
        }
        let stats: PreprocessStats = serde_json::from_str(&fs::read_to_string(path)?)?;
        let hash = cohort.schema.hash();
        if stats.schema_hash != hash {
            return Err(Error::HashMismatch { expected: hash, found: stats.schema_hash });
        }
        Ok((cohort, stats))
    }

    pub fn save_stats(&self, name: &str, stats: &PreprocessStats) -> Result<()> {
        let path = self.cohort_dir(name)?.join(STATS_FILE);
        fs::write(path, serde_json::to_string_pretty(stats)?)?;
        Ok(())
    }

    pub fn load_model(&self, name: &str) -> Result<(ModelBundle, ModelSource)> {
        let dir = self.model_dir(name)?;
        if !dir.is_dir() {
            return Err(Error::MissingInput(format!("model `{name}` not found at {}", dir.display())));
        }
        let bundle = ModelBundle::load(&dir, None)?;
        let source_path = dir.join(SOURCE_FILE);
        if !source_path.is_file() {
            return Err(Error::MissingInput(format!("model `{name}` has no {SOURCE_FILE}")));
        }
        let source: ModelSource = serde_json::from_str(&fs::read_to_string(source_path)?)?;
        if source.schema_hash != bundle.model.schema_hash {
            return Err(Error::HashMismatch { expected: bundle.model.schema_hash, found: source.schema_hash });
        }
        Ok((bundle, source))
    }

    pub fn save_model(&self, name: &str, bundle: &ModelBundle, cohort: &str) -> Result<PathBuf> {
        let dir = self.model_dir(name)?;
        bundle.save(&dir)?;
        let source = ModelSource { cohort: cohort.to_string(), schema_hash: bundle.model.schema_hash.clone() };
        fs::write(dir.join(SOURCE_FILE), serde_json::to_string_pretty(&source)?)?;
        Ok(dir)
    }

    /// Model bundle plus the preprocessed cohort it is evaluated on; the
    /// cohort defaults to the one it was trained on.
    pub fn load_model_and_cohort(&self, model: &str, cohort: Option<&str>) -> Result<(ModelBundle, Cohort, String)> {
        let (bundle, source) = self.load_model(model)?;
        let name = cohort.unwrap_or(&source.cohort).to_string();
        let (data, _) = self.load_prepared(&name)?;
        bundle.model.check_schema(&data.schema)?;
        Ok((bundle, data, name))
    }

    /// Writes `reports/<file>` and mirrors it to `reports/latest.json`.
    pub fn write_report(&self, file: &str, report: &Report) -> Result<PathBuf> {
        let dir = self.reports_dir();
        fs::create_dir_all(&dir)?;
        let text = serde_json::to_string_pretty(report)?;
        let path = dir.join(file);
        fs::write(&path, &text)?;
        fs::write(dir.join(LATEST_REPORT), &text)?;
        Ok(path)
    }

    pub fn latest_report(&self) -> Result<Report> {
        let path = self.reports_dir().join(LATEST_REPORT);
        if !path.is_file() {
            return Err(Error::MissingInput("no report has been written yet".into()));
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
