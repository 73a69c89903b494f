//! Corpus data model, category registry and the file-backed document store.
//!
//! A store lives in a directory holding two UTF-8 JSONL files:
//! `categories.jsonl` (one category record per line, later lines win) and
//! `documents.jsonl` (append-only document log). Agent-confirmed
//! classifications are appended to the same log and become visible to the
//! next [`CorpusStore::snapshot`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MIN_DOCS: usize = 30;

const CATEGORIES_FILE: &str = "categories.jsonl";
const DOCUMENTS_FILE: &str = "documents.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("document text is empty")]
    EmptyText,
    #[error("invalid category `{id}`: {reason}")]
    InvalidCategory { id: String, reason: String },
    #[error("cannot train: {found} learnable categories at min_docs={min_docs}, need at least 2")]
    NotTrainable { found: usize, min_docs: usize },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    #[default]
    Ingested,
    AgentConfirmed,
}

/// Answer data attached to agent-confirmed records. Never used for training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentAnswer {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_text: Option<String>,
    pub answered_at: DateTime<Utc>,
    /// Stored document this answer replies to, when the mail was already in the store.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_doc: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub sender: String,
    pub received_at: DateTime<Utc>,
    pub text: String,
    #[serde(rename = "category", default)]
    pub category_id: Option<String>,
    #[serde(default)]
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<AgentAnswer>,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        sender: impl Into<String>,
        received_at: DateTime<Utc>,
        text: impl Into<String>,
        category_id: Option<String>,
    ) -> Self {
        Self {
            id: id.into(),
            sender: sender.into(),
            received_at,
            text: text.into(),
            category_id,
            source: Source::Ingested,
            answer: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: String,
    pub name: String,
    pub answer_template: String,
    #[serde(default = "default_active")]
    pub active: bool,
}

fn default_active() -> bool {
    true
}

impl Category {
    fn validate(&self) -> Result<(), StoreError> {
        if self.id.trim().is_empty() {
            return Err(StoreError::InvalidCategory {
                id: self.id.clone(),
                reason: "empty id".into(),
            });
        }
        if self.active && self.answer_template.trim().is_empty() {
            return Err(StoreError::InvalidCategory {
                id: self.id.clone(),
                reason: "active category needs a non-empty answer template".into(),
            });
        }
        Ok(())
    }
}

/// Categories keyed by id, iterated in lexicographic id order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryRegistry {
    categories: BTreeMap<String, Category>,
}

impl CategoryRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_categories(
        categories: impl IntoIterator<Item = Category>,
    ) -> Result<Self, StoreError> {
        let mut registry = Self::new();
        for category in categories {
            registry.upsert(category)?;
        }
        Ok(registry)
    }

    /// Reads a registry JSONL file. Later lines replace earlier ones with the same id.
    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let file = File::open(path).map_err(io_err(path))?;
        let mut registry = Self::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let category: Category =
                serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            registry.upsert(category)?;
        }
        Ok(registry)
    }

    pub fn upsert(&mut self, category: Category) -> Result<(), StoreError> {
        category.validate()?;
        self.categories.insert(category.id.clone(), category);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Category> {
        self.categories.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.categories.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Category> {
        self.categories.values()
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    /// Labeled documents; equals the sum of `per_category`.
    pub total_docs: usize,
    /// Documents without a category (incoming mail not yet answered).
    pub unlabeled_docs: usize,
    pub per_category: BTreeMap<String, usize>,
    pub learnable: BTreeSet<String>,
    pub coverage: f64,
    pub min_docs: usize,
}

/// Immutable, id-ordered training view restricted to learnable categories.
#[derive(Debug, Clone)]
pub struct Snapshot {
    docs: Arc<[Document]>,
    categories: Arc<[String]>,
    pub min_docs: usize,
}

impl Snapshot {
    pub fn from_documents(mut docs: Vec<Document>, min_docs: usize) -> Result<Self, StoreError> {
        docs.retain(|d| d.category_id.is_some());
        docs.sort_by(|a, b| a.id.cmp(&b.id));
        let categories: BTreeSet<String> =
            docs.iter().filter_map(|d| d.category_id.clone()).collect();
        if categories.len() < 2 {
            return Err(StoreError::NotTrainable {
                found: categories.len(),
                min_docs,
            });
        }
        Ok(Self {
            docs: docs.into(),
            categories: categories.into_iter().collect::<Vec<_>>().into(),
            min_docs,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IngestFormat {
    Jsonl,
    Csv,
}

impl std::str::FromStr for IngestFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(Self::Jsonl),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown ingest format `{other}` (expected jsonl or csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub line: usize,
    pub id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub errors: Vec<RowError>,
}

#[derive(Debug, Deserialize)]
struct IngestRow {
    id: String,
    #[serde(default)]
    sender: String,
    received_at: DateTime<Utc>,
    text: String,
    #[serde(default, deserialize_with = "empty_as_none")]
    category: Option<String>,
}

fn empty_as_none<'de, D>(de: D) -> Result<Option<String>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    let value = Option::<String>::deserialize(de)?;
    Ok(value.filter(|s| !s.trim().is_empty()))
}

/// Single-writer document store. Wrap it in a lock to share it between threads;
/// [`Snapshot`]s taken from it are immutable and `Send + Sync`.
#[derive(Debug)]
pub struct CorpusStore {
    root: Option<PathBuf>,
    registry: CategoryRegistry,
    docs: Vec<Document>,
    index: HashMap<String, usize>,
}

impl CorpusStore {
    pub fn in_memory(registry: CategoryRegistry) -> Self {
        Self {
            root: None,
            registry,
            docs: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Opens (or creates) a store directory.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        let cat_path = root.join(CATEGORIES_FILE);
        let registry = if cat_path.exists() {
            CategoryRegistry::load(&cat_path)?
        } else {
            CategoryRegistry::new()
        };
        let mut store = Self {
            root: Some(root.clone()),
            registry,
            docs: Vec::new(),
            index: HashMap::new(),
        };
        let doc_path = root.join(DOCUMENTS_FILE);
        if doc_path.exists() {
            repair_torn_tail(&doc_path)?;
            let file = File::open(&doc_path).map_err(io_err(&doc_path))?;
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io_err(&doc_path))?;
                if line.trim().is_empty() {
                    continue;
                }
                let doc: Document =
                    serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                        path: doc_path.clone(),
                        line: idx + 1,
                        message: e.to_string(),
                    })?;
                if store.index.contains_key(&doc.id) {
                    return Err(StoreError::Corrupt {
                        path: doc_path.clone(),
                        line: idx + 1,
                        message: format!("duplicate id `{}`", doc.id),
                    });
                }
                store.index.insert(doc.id.clone(), store.docs.len());
                store.docs.push(doc);
            }
        }
        Ok(store)
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn registry(&self) -> &CategoryRegistry {
        &self.registry
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.index.get(id).map(|&i| &self.docs[i])
    }

    /// Documents from `sender`, newest first.
    pub fn by_sender(&self, sender: &str) -> Vec<&Document> {
        let mut docs: Vec<&Document> = self.docs.iter().filter(|d| d.sender == sender).collect();
        docs.sort_by(|a, b| {
            b.received_at
                .cmp(&a.received_at)
                .then_with(|| b.id.cmp(&a.id))
        });
        docs
    }

    pub fn upsert_category(&mut self, category: Category) -> Result<(), StoreError> {
        category.validate()?;
        if let Some(root) = &self.root {
            let line = to_line(&category);
            append_lines(&root.join(CATEGORIES_FILE), &line)?;
        }
        self.registry.upsert(category)
    }

    fn check(&self, doc: &Document) -> Result<(), StoreError> {
        if doc.id.trim().is_empty() {
            return Err(StoreError::Corrupt {
                path: PathBuf::new(),
                line: 0,
                message: "empty document id".into(),
            });
        }
        if self.index.contains_key(&doc.id) {
            return Err(StoreError::DuplicateId(doc.id.clone()));
        }
        if doc.text.trim().is_empty() {
            return Err(StoreError::EmptyText);
        }
        if let Some(cat) = &doc.category_id {
            if !self.registry.contains(cat) {
                return Err(StoreError::UnknownCategory(cat.clone()));
            }
        }
        Ok(())
    }

    fn push(&mut self, doc: Document) {
        self.index.insert(doc.id.clone(), self.docs.len());
        self.docs.push(doc);
    }

    /// Validates and appends a batch; rows failing validation are reported, not stored.
    pub fn insert_all(
        &mut self,
        rows: impl IntoIterator<Item = (usize, Document)>,
    ) -> Result<IngestReport, StoreError> {
        let mut report = IngestReport::default();
        let mut accepted = Vec::new();
        let mut pending: HashMap<String, usize> = HashMap::new();
        for (line, doc) in rows {
            let verdict = self.check(&doc).and_then(|_| {
                if pending.contains_key(&doc.id) {
                    Err(StoreError::DuplicateId(doc.id.clone()))
                } else {
                    Ok(())
                }
            });
            match verdict {
                Ok(()) => {
                    pending.insert(doc.id.clone(), line);
                    accepted.push(doc);
                }
                Err(e) => report.errors.push(RowError {
                    line,
                    id: Some(doc.id.clone()),
                    message: e.to_string(),
                }),
            }
        }
        if let Some(root) = &self.root {
            let mut buf = String::new();
            for doc in &accepted {
                buf.push_str(&to_line(doc));
            }
            if !buf.is_empty() {
                append_lines(&root.join(DOCUMENTS_FILE), &buf)?;
            }
        }
        report.accepted = accepted.len();
        for doc in accepted {
            self.push(doc);
        }
        Ok(report)
    }

    pub fn ingest(&mut self, path: &Path, format: IngestFormat) -> Result<IngestReport, StoreError> {
        let mut file = File::open(path).map_err(io_err(path))?;
        let mut raw = String::new();
        file.read_to_string(&mut raw).map_err(io_err(path))?;
        self.ingest_str(&raw, format)
    }

    pub fn ingest_str(&mut self, raw: &str, format: IngestFormat) -> Result<IngestReport, StoreError> {
        let (rows, mut parse_errors) = match format {
            IngestFormat::Jsonl => parse_jsonl(raw),
            IngestFormat::Csv => parse_csv(raw),
        };
        let mut report = self.insert_all(rows)?;
        report.errors.append(&mut parse_errors);
        report.errors.sort_by_key(|e| e.line);
        Ok(report)
    }

    pub fn stats(&self, min_docs: usize) -> Result<CorpusStats, StoreError> {
        let mut per_category: BTreeMap<String, usize> = BTreeMap::new();
        let mut unlabeled = 0;
        for doc in &self.docs {
            match &doc.category_id {
                Some(c) => *per_category.entry(c.clone()).or_default() += 1,
                None => unlabeled += 1,
            }
        }
        let total: usize = per_category.values().sum();
        if total == 0 {
            return Err(StoreError::EmptyCorpus);
        }
        let learnable: BTreeSet<String> = per_category
            .iter()
            .filter(|(c, &n)| n >= min_docs && self.is_active(c))
            .map(|(c, _)| c.clone())
            .collect();
        let covered: usize = learnable.iter().map(|c| per_category[c]).sum();
        Ok(CorpusStats {
            total_docs: total,
            unlabeled_docs: unlabeled,
            per_category,
            learnable,
            coverage: covered as f64 / total as f64,
            min_docs,
        })
    }

    fn is_active(&self, category: &str) -> bool {
        self.registry.get(category).is_some_and(|c| c.active)
    }

    /// Appends an agent-confirmed record. An empty `doc.id` gets a fresh `agent-NNNNNN` id.
    pub fn record_classification(
        &mut self,
        mut doc: Document,
        chosen: &str,
    ) -> Result<String, StoreError> {
        if !self.registry.contains(chosen) {
            return Err(StoreError::UnknownCategory(chosen.to_string()));
        }
        if doc.id.trim().is_empty() {
            doc.id = self.fresh_id("agent");
        }
        doc.category_id = Some(chosen.to_string());
        doc.source = Source::AgentConfirmed;
        self.check(&doc)?;
        if let Some(root) = &self.root {
            append_lines(&root.join(DOCUMENTS_FILE), &to_line(&doc))?;
        }
        let id = doc.id.clone();
        self.push(doc);
        Ok(id)
    }

    pub fn fresh_id(&self, prefix: &str) -> String {
        let mut n = self.docs.len() + 1;
        loop {
            let id = format!("{prefix}-{n:06}");
            if !self.index.contains_key(&id) {
                return id;
            }
            n += 1;
        }
    }

    pub fn snapshot(&self, min_docs: usize) -> Result<Snapshot, StoreError> {
        let stats = self.stats(min_docs)?;
        if stats.learnable.len() < 2 {
            return Err(StoreError::NotTrainable {
                found: stats.learnable.len(),
                min_docs,
            });
        }
        let docs = self
            .docs
            .iter()
            .filter(|d| {
                d.category_id
                    .as_ref()
                    .is_some_and(|c| stats.learnable.contains(c))
            })
            .cloned()
            .collect();
        Snapshot::from_documents(docs, min_docs)
    }

    /// Rewrites both log files in place: one line per category, one line per document.
    pub fn compact(&self) -> Result<(), StoreError> {
        let Some(root) = &self.root else {
            return Ok(());
        };
        let cats: String = self.registry.iter().map(to_line).collect();
        write_atomic(&root.join(CATEGORIES_FILE), cats.as_bytes())?;
        let docs: String = self.docs.iter().map(to_line).collect();
        write_atomic(&root.join(DOCUMENTS_FILE), docs.as_bytes())
    }
}

fn to_line<T: Serialize>(value: &T) -> String {
    let mut line = serde_json::to_string(value).expect("store records serialize");
    line.push('\n');
    line
}

fn append_lines(path: &Path, lines: &str) -> Result<(), StoreError> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    file.write_all(lines.as_bytes()).map_err(io_err(path))?;
    file.sync_data().map_err(io_err(path))
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = File::create(&tmp).map_err(io_err(&tmp))?;
        file.write_all(bytes).map_err(io_err(&tmp))?;
        file.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Drops a trailing line left without its newline by an interrupted append.
fn repair_torn_tail(path: &Path) -> Result<(), StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    log::warn!(
        "{}: dropping {} bytes of incomplete trailing record",
        path.display(),
        bytes.len() - keep
    );
    let file = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
    file.set_len(keep as u64).map_err(io_err(path))
}

fn row_to_document(row: IngestRow) -> Document {
    Document::new(row.id, row.sender, row.received_at, row.text, row.category)
}

fn parse_jsonl(raw: &str) -> (Vec<(usize, Document)>, Vec<RowError>) {
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<IngestRow>(line) {
            Ok(row) => rows.push((idx + 1, row_to_document(row))),
            Err(e) => errors.push(RowError {
                line: idx + 1,
                id: None,
                message: format!("malformed row: {e}"),
            }),
        }
    }
    (rows, errors)
}

fn parse_csv(raw: &str) -> (Vec<(usize, Document)>, Vec<RowError>) {
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(raw.as_bytes());
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => {
            errors.push(RowError {
                line: 1,
                id: None,
                message: format!("malformed header: {e}"),
            });
            return (rows, errors);
        }
    };
    for (idx, record) in reader.records().enumerate() {
        let parsed = record.and_then(|r| {
            let line = r.position().map_or(idx + 2, |p| p.line() as usize);
            r.deserialize::<IngestRow>(Some(&headers)).map(|row| (line, row))
        });
        match parsed {
            Ok((line, row)) => rows.push((line, row_to_document(row))),
            Err(e) => errors.push(RowError {
                line: e.position().map_or(idx + 2, |p| p.line() as usize),
                id: None,
                message: format!("malformed row: {e}"),
            }),
        }
    }
    (rows, errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn epoch() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap()
    }

    fn category(id: &str) -> Category {
        Category {
            id: id.into(),
            name: id.to_uppercase(),
            answer_template: format!("Answer for {id}"),
            active: true,
        }
    }

    fn registry(ids: &[&str]) -> CategoryRegistry {
        CategoryRegistry::from_categories(ids.iter().map(|id| category(id))).unwrap()
    }

    fn doc(id: &str, cat: Option<&str>) -> Document {
        Document::new(id, "a@example.com", epoch(), format!("text of {id}"), cat.map(String::from))
    }

    fn jsonl_row(id: &str, cat: &str) -> String {
        format!(
            r#"{{"id":"{id}","sender":"s@x","received_at":"2000-01-01T00:00:00Z","text":"hello {id}","category":"{cat}"}}"#
        )
    }

    #[test]
    fn ingest_three_valid_rows() {
        let mut store = CorpusStore::in_memory(registry(&["a", "b"]));
        let raw = [jsonl_row("1", "a"), jsonl_row("2", "b"), jsonl_row("3", "a")].join("\n");
        let report = store.ingest_str(&raw, IngestFormat::Jsonl).unwrap();
        assert_eq!(report.accepted, 3);
        assert!(report.errors.is_empty());
    }

    #[test]
    fn ingest_rejects_duplicate_id_row_wise() {
        let mut store = CorpusStore::in_memory(registry(&["a"]));
        let raw = [
            jsonl_row("1", "a"),
            jsonl_row("2", "a"),
            jsonl_row("2", "a"),
            jsonl_row("3", "a"),
        ]
        .join("\n");
        let report = store.ingest_str(&raw, IngestFormat::Jsonl).unwrap();
        assert_eq!(report.accepted, 3);
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].line, 3);
    }

    #[test]
    fn ingest_reports_malformed_and_unknown_category() {
        let mut store = CorpusStore::in_memory(registry(&["a"]));
        let raw = format!("{}\n{{not json\n{}\n", jsonl_row("1", "a"), jsonl_row("2", "zzz"));
        let report = store.ingest_str(&raw, IngestFormat::Jsonl).unwrap();
        assert_eq!(report.accepted, 1);
        let lines: Vec<usize> = report.errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3]);
        assert!(report.errors[1].message.contains("unknown category"));
    }

    #[test]
    fn ingest_rejects_blank_text() {
        let mut store = CorpusStore::in_memory(registry(&["a"]));
        let raw = r#"{"id":"1","sender":"s","received_at":"2000-01-01T00:00:00Z","text":"   ","category":"a"}"#;
        let report = store.ingest_str(raw, IngestFormat::Jsonl).unwrap();
        assert_eq!(report.accepted, 0);
        assert_eq!(report.errors.len(), 1);
    }

    #[test]
    fn ingest_csv() {
        let mut store = CorpusStore::in_memory(registry(&["a"]));
        let raw = "id,sender,received_at,text,category\n\
                   1,s@x,2000-01-01T00:00:00Z,\"Hello, world\",a\n\
                   2,s@x,2000-01-01T00:00:00Z,unlabeled mail,\n\
                   3,s@x,not-a-date,broken,a\n";
        let report = store.ingest_str(raw, IngestFormat::Csv).unwrap();
        assert_eq!(report.accepted, 2);
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].line, 4);
        assert_eq!(store.get("2").unwrap().category_id, None);
    }

    #[test]
    fn reingest_adds_nothing() {
        let mut store = CorpusStore::in_memory(registry(&["a"]));
        let raw = [jsonl_row("1", "a"), jsonl_row("2", "a")].join("\n");
        assert_eq!(store.ingest_str(&raw, IngestFormat::Jsonl).unwrap().accepted, 2);
        assert_eq!(store.ingest_str(&raw, IngestFormat::Jsonl).unwrap().accepted, 0);
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn stats_on_empty_store_errors() {
        let store = CorpusStore::in_memory(registry(&["a"]));
        assert!(matches!(store.stats(30), Err(StoreError::EmptyCorpus)));
    }

    #[test]
    fn stats_hand_countable() {
        let mut store = CorpusStore::in_memory(registry(&["big", "small"]));
        let rows = (0..50).map(|i| {
            let cat = if i < 40 { "big" } else { "small" };
            (i + 1, doc(&format!("d{i:03}"), Some(cat)))
        });
        store.insert_all(rows).unwrap();
        let stats = store.stats(30).unwrap();
        assert_eq!(stats.total_docs, 50);
        assert_eq!(stats.learnable, BTreeSet::from(["big".to_string()]));
        assert!((stats.coverage - 0.8).abs() < 1e-12);
        assert_eq!(store.stats(10).unwrap().coverage, 1.0);
    }

    #[test]
    fn inactive_category_is_not_learnable() {
        let mut reg = registry(&["a", "b"]);
        reg.upsert(Category {
            active: false,
            ..category("b")
        })
        .unwrap();
        let mut store = CorpusStore::in_memory(reg);
        store
            .insert_all((0..4).map(|i| (i, doc(&format!("{i}"), Some(if i % 2 == 0 { "a" } else { "b" })))))
            .unwrap();
        let stats = store.stats(1).unwrap();
        assert_eq!(stats.learnable.len(), 1);
        assert!(matches!(store.snapshot(1), Err(StoreError::NotTrainable { found: 1, .. })));
    }

    #[test]
    fn record_classification_appends() {
        let mut store = CorpusStore::in_memory(registry(&["a", "b"]));
        let before = store.stats(1).map(|s| s.total_docs).unwrap_or(0);
        let id = store.record_classification(doc("x", None), "a").unwrap();
        assert_eq!(id, "x");
        let stats = store.stats(1).unwrap();
        assert_eq!(stats.total_docs, before + 1);
        assert_eq!(stats.per_category["a"], 1);
        assert_eq!(store.get("x").unwrap().source, Source::AgentConfirmed);

        let same_text = Document { id: "y".into(), ..doc("x", None) };
        store.record_classification(same_text, "a").unwrap();
        assert_eq!(store.stats(1).unwrap().per_category["a"], 2);

        assert!(matches!(
            store.record_classification(doc("z", None), "nope"),
            Err(StoreError::UnknownCategory(_))
        ));
        let generated = store.record_classification(doc("", None), "b").unwrap();
        assert!(generated.starts_with("agent-"));
    }

    #[test]
    fn thirtieth_record_makes_category_learnable() {
        let mut store = CorpusStore::in_memory(registry(&["old", "other", "new"]));
        store
            .insert_all((0..60).map(|i| {
                (i, doc(&format!("o{i:03}"), Some(if i < 30 { "old" } else { "other" })))
            }))
            .unwrap();
        for i in 0..29 {
            store.record_classification(doc(&format!("n{i:03}"), None), "new").unwrap();
        }
        assert!(!store.stats(30).unwrap().learnable.contains("new"));
        let snap = store.snapshot(30).unwrap();
        assert!(snap.documents().iter().all(|d| d.category_id.as_deref() != Some("new")));

        store.record_classification(doc("n029", None), "new").unwrap();
        assert!(store.stats(30).unwrap().learnable.contains("new"));
        let snap = store.snapshot(30).unwrap();
        assert!(snap.documents().iter().any(|d| d.id == "n029"));
        assert_eq!(snap.categories().len(), 3);
    }

    #[test]
    fn snapshot_is_sorted_and_requires_two_categories() {
        let mut store = CorpusStore::in_memory(registry(&["a", "b"]));
        store
            .insert_all(vec![(1, doc("c", Some("a"))), (2, doc("a", Some("b"))), (3, doc("b", Some("a")))])
            .unwrap();
        let snap = store.snapshot(1).unwrap();
        let ids: Vec<&str> = snap.documents().iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
        assert!(matches!(store.snapshot(2), Err(StoreError::NotTrainable { found: 1, .. })));
    }

    #[test]
    fn persistent_store_round_trips_and_repairs_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut store = CorpusStore::open(dir.path()).unwrap();
            store.upsert_category(category("a")).unwrap();
            store.insert_all(vec![(1, doc("1", Some("a")))]).unwrap();
            store.record_classification(doc("2", None), "a").unwrap();
        }
        let path = dir.path().join(DOCUMENTS_FILE);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"id":"3","sen"#).unwrap();
        drop(f);

        let store = CorpusStore::open(dir.path()).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.get("2").unwrap().source, Source::AgentConfirmed);
        assert!(store.registry().contains("a"));
        store.compact().unwrap();
        assert_eq!(CorpusStore::open(dir.path()).unwrap().len(), 2);
    }

    #[test]
    fn registry_rejects_active_category_without_template() {
        let bad = Category {
            answer_template: " ".into(),
            ..category("a")
        };
        assert!(CategoryRegistry::from_categories([bad.clone()]).is_err());
        let inactive = Category { active: false, ..bad };
        assert!(CategoryRegistry::from_categories([inactive]).is_ok());
    }

    #[test]
    fn history_is_reverse_chronological() {
        let mut store = CorpusStore::in_memory(registry(&["a"]));
        let mut d1 = doc("1", Some("a"));
        let mut d2 = doc("2", Some("a"));
        d2.received_at = epoch() + chrono::Duration::hours(1);
        d1.sender = "me".into();
        d2.sender = "me".into();
        store.insert_all(vec![(1, d1), (2, d2), (3, doc("3", Some("a")))]).unwrap();
        let ids: Vec<&str> = store.by_sender("me").iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, vec!["2", "1"]);
        assert!(store.by_sender("nobody").is_empty());
    }
}
