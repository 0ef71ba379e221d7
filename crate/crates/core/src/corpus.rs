//! Data model, JSONL ingestion and dataset statistics.
//!
//! Every on-disk collection is JSON Lines: one UTF-8 object per line, no BOM.
//! Loaders preserve input order and reject duplicate ids with the offending
//! line number, so downstream iteration is deterministic.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LengthBucket {
    #[serde(rename = "lt100")]
    Lt100,
    #[serde(rename = "100_200")]
    From100To200,
    #[serde(rename = "200_300")]
    From200To300,
    #[serde(rename = "300_400")]
    From300To400,
    #[serde(rename = "400_500")]
    From400To500,
    #[serde(rename = "gte500")]
    Gte500,
}

impl LengthBucket {
    pub const ALL: [LengthBucket; 6] = [
        LengthBucket::Lt100,
        LengthBucket::From100To200,
        LengthBucket::From200To300,
        LengthBucket::From300To400,
        LengthBucket::From400To500,
        LengthBucket::Gte500,
    ];

    /// The `{Length}` string substituted into the generation prompt.
    pub fn prompt_text(self) -> &'static str {
        match self {
            LengthBucket::Lt100 => "less than 100 words",
            LengthBucket::From100To200 => "100 to 200 words",
            LengthBucket::From200To300 => "200 to 300 words",
            LengthBucket::From300To400 => "300 to 400 words",
            LengthBucket::From400To500 => "400 to 500 words",
            LengthBucket::Gte500 => "at least 500 words",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EducationLevel {
    HighSchool,
    College,
    Phd,
}

impl EducationLevel {
    pub const ALL: [EducationLevel; 3] = [EducationLevel::HighSchool, EducationLevel::College, EducationLevel::Phd];

    /// The `{Difficulty}` string substituted into the generation prompt.
    pub fn prompt_text(self) -> &'static str {
        match self {
            EducationLevel::HighSchool => "high school",
            EducationLevel::College => "college",
            EducationLevel::Phd => "phd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_doc_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_bucket: Option<LengthBucket>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub education_level: Option<EducationLevel>,
}

/// A query with its annotated positives and hard negatives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub query_id: String,
    pub positives: Vec<String>,
    pub hard_negatives: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_query: Option<String>,
}

impl TrainingSample {
    /// Checks the structural invariants: non-empty positives, no duplicates,
    /// disjoint positive/negative sets, and (if given) no source document.
    pub fn validate(&self, source_doc_id: Option<&str>) -> Result<()> {
        if self.positives.is_empty() {
            return Err(Error::invalid(format!("sample {:?} has no positives", self.query_id)));
        }
        let mut seen = HashSet::new();
        for id in self.positives.iter().chain(&self.hard_negatives) {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!(
                    "sample {:?} lists document {id:?} more than once",
                    self.query_id
                )));
            }
            if Some(id.as_str()) == source_doc_id {
                return Err(Error::invalid(format!(
                    "sample {:?} contains its source document {id:?}",
                    self.query_id
                )));
            }
        }
        Ok(())
    }
}

/// Something with a unique string id, stored in an [`IdMap`].
pub trait Identified {
    fn id(&self) -> &str;
}

impl Identified for Document {
    fn id(&self) -> &str {
        &self.id
    }
}

impl Identified for Query {
    fn id(&self) -> &str {
        &self.id
    }
}

/// Insertion-ordered collection with O(1) id lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct IdMap<T> {
    items: Vec<T>,
    index: HashMap<String, usize>,
}

pub type Corpus = IdMap<Document>;
pub type QuerySet = IdMap<Query>;

impl<T> Default for IdMap<T> {
    fn default() -> Self {
        Self {
            items: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Identified> IdMap<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts an item, failing if its id is empty or already present.
    pub fn insert(&mut self, item: T) -> Result<()> {
        let id = item.id();
        if id.is_empty() {
            return Err(Error::invalid("empty id"));
        }
        if self.index.contains_key(id) {
            return Err(Error::invalid(format!("duplicate id {id:?}")));
        }
        self.index.insert(id.to_string(), self.items.len());
        self.items.push(item);
        Ok(())
    }

    pub fn from_items(items: impl IntoIterator<Item = T>) -> Result<Self> {
        let mut map = Self::new();
        for item in items {
            map.insert(item)?;
        }
        Ok(map)
    }

    pub fn get(&self, id: &str) -> Option<&T> {
        self.index.get(id).map(|&i| &self.items[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.items.iter()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.items
    }

    /// Keeps items matching `keep`, preserving order.
    pub fn retain(&mut self, mut keep: impl FnMut(&T) -> bool) {
        self.items.retain(|item| keep(item));
        self.index = self
            .items
            .iter()
            .enumerate()
            .map(|(i, item)| (item.id().to_string(), i))
            .collect();
    }

    pub fn into_vec(self) -> Vec<T> {
        self.items
    }
}

impl<'a, T> IntoIterator for &'a IdMap<T> {
    type Item = &'a T;
    type IntoIter = std::slice::Iter<'a, T>;

    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}

/// Reads a JSONL file into typed records, reporting the 1-based line number on
/// failure. Blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let trimmed = line.trim_start_matches('\u{feff}').trim();
        if trimmed.is_empty() {
            continue;
        }
        let record = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        out.push((line_no, record));
    }
    Ok(out)
}

/// Writes records as JSONL, one compact object per line.
pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, records: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut w, record)?;
        w.write_all(b"\n")
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn load_id_map<T>(path: &Path, check: impl Fn(&T) -> Option<&'static str>) -> Result<IdMap<T>>
where
    T: Identified + DeserializeOwned,
{
    let mut map = IdMap::new();
    for (line, item) in read_jsonl::<T>(path)? {
        if let Some(message) = check(&item) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: message.to_string(),
            });
        }
        if map.contains(item.id()) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                line,
                id: item.id().to_string(),
            });
        }
        map.insert(item).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
    }
    Ok(map)
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    load_id_map(path, |d: &Document| {
        if d.id.is_empty() {
            Some("document id is empty")
        } else if d.text.is_empty() {
            Some("document text is empty")
        } else {
            None
        }
    })
}

pub fn load_queries(path: &Path) -> Result<QuerySet> {
    load_id_map(path, |q: &Query| {
        if q.id.is_empty() {
            Some("query id is empty")
        } else if q.text.is_empty() {
            Some("query text is empty")
        } else {
            None
        }
    })
}

/// Checks that every query's source document, when present, resolves in `corpus`.
pub fn check_sources(queries: &QuerySet, corpus: &Corpus) -> Result<()> {
    for q in queries {
        if let Some(src) = &q.source_doc_id {
            if !corpus.contains(src) {
                return Err(Error::DanglingId {
                    kind: "source document",
                    id: src.clone(),
                });
            }
        }
    }
    Ok(())
}

pub fn load_samples(path: &Path) -> Result<Vec<TrainingSample>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, sample) in read_jsonl::<TrainingSample>(path)? {
        let wrap = |e: Error| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        };
        sample.validate(None).map_err(wrap)?;
        if !seen.insert(sample.query_id.clone()) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                line,
                id: sample.query_id,
            });
        }
        out.push(sample);
    }
    Ok(out)
}

/// Lowercases, splits on Unicode whitespace and strips leading/trailing
/// punctuation from each piece. Pieces that are pure punctuation vanish.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|piece| piece.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|piece| !piece.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn count_tokens(text: &str) -> usize {
    tokenize(text).len()
}

/// Per-task dataset statistics.
///
/// `avg_positives`, `avg_negatives` and `avg_tokens_query` are per final
/// query; `avg_tokens_pos` / `avg_tokens_neg` are per document occurrence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskStats {
    pub query_count_final: usize,
    pub query_count_raw: usize,
    pub avg_positives: f64,
    pub avg_negatives: f64,
    pub avg_tokens_query: f64,
    pub avg_tokens_pos: f64,
    pub avg_tokens_neg: f64,
    pub total_positives: usize,
    pub total_negatives: usize,
}

impl TaskStats {
    /// Combines the statistics of two disjoint datasets.
    pub fn merge(&self, other: &TaskStats) -> TaskStats {
        let n = self.query_count_final + other.query_count_final;
        let by_queries = |a: f64, b: f64| {
            if n == 0 {
                0.0
            } else {
                (a * self.query_count_final as f64 + b * other.query_count_final as f64) / n as f64
            }
        };
        let by_count = |a: f64, ca: usize, b: f64, cb: usize| {
            if ca + cb == 0 {
                0.0
            } else {
                (a * ca as f64 + b * cb as f64) / (ca + cb) as f64
            }
        };
        TaskStats {
            query_count_final: n,
            query_count_raw: self.query_count_raw + other.query_count_raw,
            avg_positives: by_queries(self.avg_positives, other.avg_positives),
            avg_negatives: by_queries(self.avg_negatives, other.avg_negatives),
            avg_tokens_query: by_queries(self.avg_tokens_query, other.avg_tokens_query),
            avg_tokens_pos: by_count(
                self.avg_tokens_pos,
                self.total_positives,
                other.avg_tokens_pos,
                other.total_positives,
            ),
            avg_tokens_neg: by_count(
                self.avg_tokens_neg,
                self.total_negatives,
                other.avg_tokens_neg,
                other.total_negatives,
            ),
            total_positives: self.total_positives + other.total_positives,
            total_negatives: self.total_negatives + other.total_negatives,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub tasks: BTreeMap<String, TaskStats>,
    pub total: TaskStats,
}

impl DatasetStats {
    pub fn merge(&self, other: &DatasetStats) -> DatasetStats {
        let mut tasks = self.tasks.clone();
        for (task, stats) in &other.tasks {
            tasks
                .entry(task.clone())
                .and_modify(|mine| *mine = mine.merge(stats))
                .or_insert_with(|| stats.clone());
        }
        DatasetStats {
            tasks,
            total: self.total.merge(&other.total),
        }
    }
}

#[derive(Default)]
struct Accumulator {
    final_count: usize,
    raw_count: usize,
    positives: usize,
    negatives: usize,
    query_tokens: usize,
    pos_tokens: usize,
    neg_tokens: usize,
}

impl Accumulator {
    fn finish(&self) -> TaskStats {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        TaskStats {
            query_count_final: self.final_count,
            query_count_raw: self.raw_count,
            avg_positives: ratio(self.positives, self.final_count),
            avg_negatives: ratio(self.negatives, self.final_count),
            avg_tokens_query: ratio(self.query_tokens, self.final_count),
            avg_tokens_pos: ratio(self.pos_tokens, self.positives),
            avg_tokens_neg: ratio(self.neg_tokens, self.negatives),
            total_positives: self.positives,
            total_negatives: self.negatives,
        }
    }
}

/// Statistics using the whitespace tokenizer.
pub fn compute_stats(queries: &QuerySet, samples: &[TrainingSample], corpus: &Corpus) -> Result<DatasetStats> {
    compute_stats_with(queries, samples, corpus, count_tokens)
}

/// `queries` is the raw query set; `samples` are the queries that survived
/// annotation.
pub fn compute_stats_with(
    queries: &QuerySet,
    samples: &[TrainingSample],
    corpus: &Corpus,
    token_count: impl Fn(&str) -> usize,
) -> Result<DatasetStats> {
    let mut per_task: BTreeMap<String, Accumulator> = BTreeMap::new();
    for q in queries {
        per_task.entry(q.task.clone()).or_default().raw_count += 1;
    }

    let doc_tokens = |id: &str| -> Result<usize> {
        corpus
            .get(id)
            .map(|d| token_count(&d.text))
            .ok_or_else(|| Error::DanglingId {
                kind: "document",
                id: id.to_string(),
            })
    };

    for sample in samples {
        let query = queries.get(&sample.query_id).ok_or_else(|| Error::DanglingId {
            kind: "query",
            id: sample.query_id.clone(),
        })?;
        let acc = per_task.entry(query.task.clone()).or_default();
        acc.final_count += 1;
        acc.positives += sample.positives.len();
        acc.negatives += sample.hard_negatives.len();
        acc.query_tokens += token_count(&query.text);
        for id in &sample.positives {
            acc.pos_tokens += doc_tokens(id)?;
        }
        for id in &sample.hard_negatives {
            acc.neg_tokens += doc_tokens(id)?;
        }
    }

    let mut total = Accumulator::default();
    for acc in per_task.values() {
        total.final_count += acc.final_count;
        total.raw_count += acc.raw_count;
        total.positives += acc.positives;
        total.negatives += acc.negatives;
        total.query_tokens += acc.query_tokens;
        total.pos_tokens += acc.pos_tokens;
        total.neg_tokens += acc.neg_tokens;
    }

    Ok(DatasetStats {
        tasks: per_task.into_iter().map(|(task, acc)| (task, acc.finish())).collect(),
        total: total.finish(),
    })
}
