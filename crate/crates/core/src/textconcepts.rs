// SPDX-License-Identifier: MIT OR Apache-2.0

//! Text concepts from free-text documents.
//!
//! Each document routed to a concept is split into overlapping whitespace
//! token chunks, every chunk is wrapped in a fixed Yes/No prompt and sent to
//! an [`ExtractorClient`]; the concept is 1 if any chunk answers "Yes".

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Cohort, DocKind, PatientRecord, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingConfig {
    pub chunk_size: usize,
    pub overlap: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig { chunk_size: 256, overlap: 16 }
    }
}

impl ChunkingConfig {
    /// Long-context setting: 4096-token chunks with 100 tokens of overlap.
    pub fn long_context() -> Self {
        ChunkingConfig { chunk_size: 4096, overlap: 100 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_size == 0 || self.overlap >= self.chunk_size {
            return Err(Error::Config(format!(
                "chunk_size {} / overlap {}: need 0 <= overlap < chunk_size",
                self.chunk_size, self.overlap
            )));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.chunk_size - self.overlap
    }
}

pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Token ranges of each chunk for a sequence of `n_tokens` tokens.
pub fn chunk_spans(n_tokens: usize, config: &ChunkingConfig) -> Result<Vec<Range<usize>>> {
    config.validate()?;
    let mut spans = Vec::new();
    let mut start = 0;
    while start < n_tokens {
        let end = (start + config.chunk_size).min(n_tokens);
        spans.push(start..end);
        if end == n_tokens {
            break;
        }
        start += config.stride();
    }
    Ok(spans)
}

pub fn chunk<'a, T>(tokens: &'a [T], config: &ChunkingConfig) -> Result<Vec<&'a [T]>> {
    Ok(chunk_spans(tokens.len(), config)?
        .into_iter()
        .map(|r| &tokens[r])
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verb {
    Suggest,
    Mention,
}

impl Verb {
    pub fn as_str(self) -> &'static str {
        match self {
            Verb::Suggest => "suggest",
            Verb::Mention => "mention",
        }
    }
}

/// Routing and trigger information for one text concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub concept: String,
    /// Condition name as it appears in the prompt.
    pub display: String,
    pub verb: Verb,
    /// Documents consulted in order; later routes are only read while the
    /// concept is still negative.
    pub routes: Vec<DocKind>,
    /// Canonical phrase the synthetic generator plants and the mock detects.
    pub trigger: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub entries: Vec<LexiconEntry>,
}

fn entry(concept: &str, display: &str, verb: Verb, routes: &[DocKind], trigger: &str) -> LexiconEntry {
    LexiconEntry {
        concept: concept.into(),
        display: display.into(),
        verb,
        routes: routes.to_vec(),
        trigger: trigger.into(),
    }
}

impl Lexicon {
    pub fn ards_default() -> Self {
        use DocKind::*;
        use Verb::*;
        Lexicon {
            entries: vec![
                entry("pneumonia", "pneumonia", Suggest, &[Discharge], "consolidation consistent with pneumonia"),
                entry("aspiration", "aspiration", Suggest, &[Discharge], "witnessed aspiration event"),
                entry("pancreatitis", "pancreatitis", Suggest, &[Discharge], "acute necrotizing pancreatitis"),
                entry("cardiac_arrest", "cardiac arrest", Suggest, &[Discharge], "return of spontaneous circulation after cardiac arrest"),
                entry("trali", "TRALI", Suggest, &[Discharge], "transfusion related acute lung injury"),
                entry("ards_impression", "ARDS", Suggest, &[Discharge], "acute respiratory distress syndrome"),
                entry("bilateral_infiltrates", "bilateral infiltrates", Mention, &[Radiology], "diffuse bilateral infiltrates"),
                entry("cardiac_failure", "cardiac failure", Suggest, &[Echo, Discharge], "severely reduced ejection fraction"),
            ],
        }
    }

    /// Default entries for known concept names; other text concepts get a
    /// discharge-routed entry whose trigger is the concept name in words.
    pub fn for_schema(schema: &Schema) -> Self {
        let defaults = Self::ards_default();
        let entries = schema
            .concepts
            .text()
            .iter()
            .map(|c| match defaults.entry(&c.name) {
                Some(e) => e.clone(),
                None => {
                    let words = c.name.replace('_', " ");
                    entry(&c.name, &words, Verb::Suggest, &[DocKind::Discharge], &format!("documented {words}"))
                }
            })
            .collect();
        Lexicon { entries }
    }

    pub fn entry(&self, concept: &str) -> Option<&LexiconEntry> {
        self.entries.iter().find(|e| e.concept == concept)
    }

    fn by_display(&self, display: &str) -> Option<&LexiconEntry> {
        self.entries.iter().find(|e| e.display == display)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Yes/No prompt. Lines support `{condition}`, `{verb}`, `{doc_label}` and
/// `{document}` placeholders; the document line must hold the only
/// `{document}` slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub context: String,
    pub task: String,
    pub instructions: String,
    pub document: String,
    pub query: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            context: "Context: You are a clinician receiving chunks of clinical text for patients in an ICU. Please do the reviewing as quickly as possible.".into(),
            task: "Task: Determine if the patient had {condition}.".into(),
            instructions: "Instructions: Answer with 'Yes' or 'No'. If there is not enough information, answer 'No'.".into(),
            document: "{doc_label} Text:{document}".into(),
            query: "Query: Does the chunk of text {verb} that the patient has {condition}? Answer strictly in 'Yes' or 'No'.".into(),
        }
    }
}

const TASK_PREFIX: &str = "Task: Determine if the patient had ";
const DOC_MARKER: &str = " Text:";
const QUERY_MARKER: &str = "\nQuery:";

pub fn render_prompt(
    template: &PromptTemplate,
    lexicon: &Lexicon,
    condition: &str,
    kind: DocKind,
    document: &str,
) -> Result<String> {
    let entry = lexicon
        .entry(condition)
        .ok_or_else(|| Error::UnknownCondition(condition.to_string()))?;
    if document.trim().is_empty() {
        return Err(Error::Data(format!("empty {} document for `{condition}`", kind.as_str())));
    }
    let fill = |line: &str| {
        line.replace("{condition}", &entry.display)
            .replace("{verb}", entry.verb.as_str())
            .replace("{doc_label}", kind.label())
    };
    let doc_line = fill(&template.document).replace("{document}", document);
    Ok([
        fill(&template.context),
        fill(&template.task),
        fill(&template.instructions),
        doc_line,
        fill(&template.query),
    ]
    .join("\n"))
}

/// 1 iff the trimmed response starts with "yes", case-insensitively.
pub fn parse_response(raw: &str) -> u8 {
    let t = raw.trim_start();
    u8::from(t.len() >= 3 && t[..3].eq_ignore_ascii_case("yes"))
}

/// Something that answers a rendered prompt with raw text. Implementations
/// must be safe to call concurrently.
pub trait ExtractorClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
}

/// Deterministic offline stand-in: answers "Yes" iff the condition's trigger
/// phrase occurs in the prompt's document chunk. Expects prompts laid out by
/// the default [`PromptTemplate`].
#[derive(Debug, Clone)]
pub struct MockExtractor {
    lexicon: Lexicon,
}

impl MockExtractor {
    pub fn new(lexicon: Lexicon) -> Self {
        MockExtractor { lexicon }
    }

    fn answer(&self, prompt: &str) -> Option<bool> {
        let task = prompt.lines().find_map(|l| l.strip_prefix(TASK_PREFIX))?;
        let display = task.strip_suffix('.').unwrap_or(task);
        let entry = self.lexicon.by_display(display)?;
        let start = prompt.find(DOC_MARKER)? + DOC_MARKER.len();
        let end = prompt.rfind(QUERY_MARKER)?;
        let chunk = prompt.get(start..end)?;
        Some(chunk.contains(&entry.trigger))
    }
}

impl ExtractorClient for MockExtractor {
    fn complete(&self, prompt: &str) -> Result<String> {
        Ok(match self.answer(prompt) {
            Some(true) => "Yes",
            _ => "No",
        }
        .to_string())
    }
}

/// Extractor backed by an HTTP endpoint: the prompt is POSTed as the request
/// body and the response body is the completion.
#[cfg(feature = "live-extractor")]
#[derive(Debug, Clone)]
pub struct HttpExtractor {
    pub url: String,
}

#[cfg(feature = "live-extractor")]
impl ExtractorClient for HttpExtractor {
    fn complete(&self, prompt: &str) -> Result<String> {
        let mut response = ureq::post(&self.url)
            .header("content-type", "text/plain; charset=utf-8")
            .send(prompt)
            .map_err(|e| Error::Transport(e.to_string()))?;
        response
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Transport(e.to_string()))
    }
}

/// Extraction settings bundled together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub chunking: ChunkingConfig,
    pub template: PromptTemplate,
    pub lexicon: Lexicon,
}

impl ExtractionConfig {
    pub fn for_schema(schema: &Schema) -> Self {
        ExtractionConfig {
            chunking: ChunkingConfig::default(),
            template: PromptTemplate::default(),
            lexicon: Lexicon::for_schema(schema),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordExtraction {
    pub values: Vec<u8>,
    pub warnings: Vec<String>,
}

/// Text-concept vector for one record, in schema order.
pub fn extract_concepts(
    record: &PatientRecord,
    schema: &Schema,
    client: &dyn ExtractorClient,
    config: &ExtractionConfig,
) -> Result<RecordExtraction> {
    config.chunking.validate()?;
    let mut values = Vec::with_capacity(schema.concepts.text_count());
    let mut warnings = Vec::new();
    for spec in schema.concepts.text() {
        let entry = config
            .lexicon
            .entry(&spec.name)
            .ok_or_else(|| Error::UnknownCondition(spec.name.clone()))?;
        let mut value = 0u8;
        for &kind in &entry.routes {
            let Some(doc) = record.documents.get(&kind).filter(|d| !d.trim().is_empty()) else {
                warnings.push(format!(
                    "record {}: no {} document for `{}`",
                    record.id,
                    kind.as_str(),
                    spec.name
                ));
                continue;
            };
            let tokens = tokenize(doc);
            for piece in chunk(&tokens, &config.chunking)? {
                let text = piece.join(" ");
                let prompt = render_prompt(&config.template, &config.lexicon, &spec.name, kind, &text)?;
                value |= parse_response(&client.complete(&prompt)?);
            }
            if value == 1 {
                break;
            }
        }
        values.push(value);
    }
    Ok(RecordExtraction { values, warnings })
}

/// Extracted text concepts for a set of records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedConcepts {
    pub concepts: Vec<String>,
    pub rows: BTreeMap<String, Vec<u8>>,
    pub warnings: Vec<String>,
}

pub fn extract_cohort(
    cohort: &Cohort,
    client: &dyn ExtractorClient,
    config: &ExtractionConfig,
) -> Result<ExtractedConcepts> {
    let schema = &cohort.schema;
    let mut rows = BTreeMap::new();
    let mut warnings = Vec::new();
    for record in &cohort.records {
        let r = extract_concepts(record, schema, client, config)?;
        warnings.extend(r.warnings);
        rows.insert(record.id.clone(), r.values);
    }
    Ok(ExtractedConcepts {
        concepts: schema.concepts.text().iter().map(|c| c.name.clone()).collect(),
        rows,
        warnings,
    })
}

impl ExtractedConcepts {
    /// CSV `id,<concept>...` with 0/1 values, rows sorted by id.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string()];
        header.extend(self.concepts.iter().cloned());
        w.write_record(&header)?;
        for (id, values) in &self.rows {
            let mut row = vec![id.clone()];
            row.extend(values.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.get(0) != Some("id") {
            return Err(Error::Data("extracted concept CSV must start with an `id` column".into()));
        }
        let concepts: Vec<String> = header.iter().skip(1).map(String::from).collect();
        let mut rows = BTreeMap::new();
        for rec in r.records() {
            let rec = rec?;
            let id = rec.get(0).unwrap_or_default().to_string();
            let values = rec
                .iter()
                .skip(1)
                .map(|v| match v {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    other => Err(Error::Data(format!("record {id}: text concept value `{other}` not in {{0, 1}}"))),
                })
                .collect::<Result<Vec<u8>>>()?;
            rows.insert(id, values);
        }
        Ok(ExtractedConcepts { concepts, rows, warnings: Vec::new() })
    }

    /// Overwrites the text-concept columns of every record in `cohort`.
    pub fn apply_to(&self, cohort: &mut Cohort) -> Result<()> {
        let schema = &cohort.schema;
        let positions: Vec<usize> = self
            .concepts
            .iter()
            .map(|name| {
                schema
                    .concepts
                    .index_of(name)
                    .filter(|&j| j >= schema.concepts.tabular_count())
                    .ok_or_else(|| Error::UnknownConcept(name.clone()))
            })
            .collect::<Result<_>>()?;
        for record in &mut cohort.records {
            let values = self
                .rows
                .get(&record.id)
                .ok_or_else(|| Error::MissingInput(format!("no extracted concepts for record {}", record.id)))?;
            for (&j, &v) in positions.iter().zip(values) {
                record.concepts[j] = Some(f64::from(v));
            }
        }
        Ok(())
    }
}
