// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cohort persistence.
//!
//! CSV layout: `id,split,y,f_<feature>...,c_<concept>...`, one row per
//! patient, empty field for a missing value. Documents live beside the CSV in
//! `docs/<id>/<kind>.txt`. A cohort directory adds `schema.json` and
//! `meta.json` (stage and schema hash).

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Cohort, DocKind, PatientRecord, Schema, Stage};

fn fmt_value(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_value(field: &str, id: &str, column: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Data(format!("record {id}: `{field}` in column {column} is not a number")))
}

pub fn write_cohort_csv<W: Write>(cohort: &Cohort, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let schema = &cohort.schema;
    let mut header = vec!["id".to_string(), "split".to_string(), "y".to_string()];
    header.extend(schema.features.features.iter().map(|f| format!("f_{}", f.name)));
    header.extend(schema.concepts.concepts.iter().map(|c| format!("c_{}", c.name)));
    w.write_record(&header)?;
    for r in &cohort.records {
        let mut row = vec![r.id.clone(), r.split.to_string(), r.y.to_string()];
        row.extend(r.x.iter().map(|v| fmt_value(*v)));
        row.extend(r.concepts.iter().map(|v| fmt_value(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a cohort CSV laid out for `schema`. Documents are left empty.
pub fn read_cohort_csv<R: Read>(reader: R, schema: &Schema, stage: Stage) -> Result<Cohort> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let expect: Vec<String> = ["id", "split", "y"]
        .iter()
        .map(|s| s.to_string())
        .chain(schema.features.features.iter().map(|f| format!("f_{}", f.name)))
        .chain(schema.concepts.concepts.iter().map(|c| format!("c_{}", c.name)))
        .collect();
    let got: Vec<&str> = header.iter().collect();
    if got != expect {
        return Err(Error::Data(format!(
            "cohort CSV header does not match the schema (expected {} columns starting `id,split,y`)",
            expect.len()
        )));
    }
    let d = schema.features.d();
    let mut records = Vec::new();
    for row in r.records() {
        let row = row?;
        let id = row.get(0).unwrap_or_default().to_string();
        let split = row.get(1).unwrap_or_default().parse()?;
        let y = match row.get(2) {
            Some("0") => 0,
            Some("1") => 1,
            other => return Err(Error::Data(format!("record {id}: label {other:?} is not 0/1"))),
        };
        let values = (3..row.len())
            .map(|i| parse_value(&row[i], &id, &expect[i]))
            .collect::<Result<Vec<_>>>()?;
        let (x, concepts) = values.split_at(d);
        records.push(PatientRecord {
            id,
            split,
            x: x.to_vec(),
            concepts: concepts.to_vec(),
            documents: BTreeMap::new(),
            y,
        });
    }
    Ok(Cohort { schema: schema.clone(), stage, records })
}

/// Writes `docs/<id>/<kind>.txt` under `dir`.
pub fn write_documents(cohort: &Cohort, dir: &Path) -> Result<()> {
    for r in &cohort.records {
        if r.documents.is_empty() {
            continue;
        }
        let d = dir.join(&r.id);
        fs::create_dir_all(&d)?;
        for (kind, text) in &r.documents {
            fs::write(d.join(format!("{}.txt", kind.as_str())), text)?;
        }
    }
    Ok(())
}

/// Loads whatever documents exist under `dir` into the matching records.
pub fn read_documents(cohort: &mut Cohort, dir: &Path) -> Result<()> {
    for r in &mut cohort.records {
        for kind in DocKind::ALL {
            let path = dir.join(&r.id).join(format!("{}.txt", kind.as_str()));
            if path.is_file() {
                r.documents.insert(kind, fs::read_to_string(path)?);
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMeta {
    pub stage: Stage,
    pub schema_hash: String,
    pub records: usize,
}

pub fn save_cohort_dir(cohort: &Cohort, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("schema.json"), cohort.schema.to_json())?;
    write_cohort_csv(cohort, fs::File::create(dir.join("cohort.csv"))?)?;
    write_documents(cohort, &dir.join("docs"))?;
    let meta = CohortMeta {
        stage: cohort.stage,
        schema_hash: cohort.schema.hash(),
        records: cohort.records.len(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_cohort_dir(dir: &Path) -> Result<Cohort> {
    let meta_path = dir.join("meta.json");
    if !meta_path.is_file() {
        return Err(Error::MissingInput(format!("{} is not a cohort directory", dir.display())));
    }
    let meta: CohortMeta = serde_json::from_str(&fs::read_to_string(meta_path)?)?;
    let schema = Schema::load(&dir.join("schema.json"))?;
    if schema.hash() != meta.schema_hash {
        return Err(Error::HashMismatch { expected: meta.schema_hash, found: schema.hash() });
    }
    let mut cohort = read_cohort_csv(fs::File::open(dir.join("cohort.csv"))?, &schema, meta.stage)?;
    read_documents(&mut cohort, &dir.join("docs"))?;
    Ok(cohort)
}
