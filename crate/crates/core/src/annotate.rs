//! Relevance annotation of mined candidates and assembly of training samples.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Query, QuerySet, TrainingSample};
use crate::error::{Error, Result};
use crate::llm::{LlmClient, PromptTemplate, TemplateName};
use crate::retrieval::CandidateSet;
use crate::tasks::Task;

pub const DEFAULT_THRESHOLD: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationMode {
    Reasoning,
    Direct,
}

impl AnnotationMode {
    fn template(self) -> TemplateName {
        match self {
            AnnotationMode::Reasoning => TemplateName::AnnotateReasoning,
            AnnotationMode::Direct => TemplateName::AnnotateDirect,
        }
    }
}

impl fmt::Display for AnnotationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnnotationMode::Reasoning => "reasoning",
            AnnotationMode::Direct => "direct",
        })
    }
}

impl std::str::FromStr for AnnotationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reasoning" => Ok(AnnotationMode::Reasoning),
            "direct" => Ok(AnnotationMode::Direct),
            other => Err(Error::invalid(format!("unknown annotation mode {other:?}"))),
        }
    }
}

/// One ledger line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub query_id: String,
    pub doc_id: String,
    pub score: u8,
    pub mode: AnnotationMode,
    pub raw_response: String,
}

pub fn build_annotation_prompt(query: &Query, doc: &Document, task: &str, mode: AnnotationMode) -> Result<String> {
    let spec = task.parse::<Task>()?.relevance();
    PromptTemplate::builtin(mode.template()).render(&HashMap::from([
        ("Relevance Definition", spec.definition),
        ("Query Type", spec.query_type),
        ("Doc Type", spec.doc_type),
        ("Query", query.text.as_str()),
        ("Doc", doc.text.as_str()),
    ]))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreParseError {
    pub reason: &'static str,
    pub raw: String,
}

impl fmt::Display for ScoreParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:?}", self.reason, self.raw)
    }
}

impl std::error::Error for ScoreParseError {}

const OPEN: &str = "<score>";
const CLOSE: &str = "</score>";

/// Score inside the last complete `<score>…</score>` block.
pub fn parse_score(response: &str) -> std::result::Result<u8, ScoreParseError> {
    let err = |reason| ScoreParseError {
        reason,
        raw: response.to_string(),
    };
    let mut last = None;
    let mut rest = response;
    while let Some(open) = rest.find(OPEN) {
        let after = &rest[open + OPEN.len()..];
        let Some(close) = after.find(CLOSE) else {
            break;
        };
        last = Some(&after[..close]);
        rest = &after[close + CLOSE.len()..];
    }
    let inner = last.ok_or_else(|| err("no <score> block"))?.trim();
    let score: u8 = inner.parse().map_err(|_| err("score is not an integer"))?;
    if !(1..=5).contains(&score) {
        return Err(err("score outside 1..=5"));
    }
    Ok(score)
}

/// A well-formed response in the shape each prompt asks for.
pub fn render_score_response(score: u8, mode: AnnotationMode) -> String {
    match mode {
        AnnotationMode::Direct => format!("<score>{score}</score>"),
        AnnotationMode::Reasoning => format!("Analysis.\n<score>\n{score}\n</score>"),
    }
}

/// Append-only JSONL store of annotations keyed by (query_id, doc_id).
#[derive(Debug)]
pub struct AnnotationLedger {
    path: PathBuf,
    entries: HashMap<(String, String), Annotation>,
}

impl AnnotationLedger {
    /// Opens (or creates) the ledger and loads what is already recorded.
    ///
    /// A malformed final line without a trailing newline, as left by an
    /// interrupted write, is ignored with a warning; any other malformed line
    /// is an error.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
            let mut reader = BufReader::new(file);
            let mut line = String::new();
            let mut lineno = 0;
            loop {
                line.clear();
                let n = reader
                    .read_line(&mut line)
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
                if n == 0 {
                    break;
                }
                lineno += 1;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Annotation>(&line) {
                    Ok(a) => {
                        entries.insert((a.query_id.clone(), a.doc_id.clone()), a);
                    }
                    Err(e) if !line.ends_with('\n') => {
                        warn!("{}:{lineno}: ignoring truncated final line ({e})", path.display());
                    }
                    Err(e) => {
                        return Err(Error::Parse {
                            path: path.clone(),
                            line: lineno,
                            message: e.to_string(),
                        })
                    }
                }
            }
        }
        Ok(Self { path, entries })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, query_id: &str, doc_id: &str) -> Option<&Annotation> {
        self.entries.get(&(query_id.to_string(), doc_id.to_string()))
    }

    /// Appends new annotations and flushes. Pairs already present are skipped.
    pub fn append(&mut self, annotations: &[Annotation]) -> Result<()> {
        let ctx = || self.path.display().to_string();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(ctx(), e))?;
        let mut w = BufWriter::new(file);
        for a in annotations {
            let key = (a.query_id.clone(), a.doc_id.clone());
            if self.entries.contains_key(&key) {
                continue;
            }
            serde_json::to_writer(&mut w, a)?;
            w.write_all(b"\n").map_err(|e| Error::io(ctx(), e))?;
            self.entries.insert(key, a.clone());
        }
        w.flush().map_err(|e| Error::io(ctx(), e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotateReport {
    pub pairs: usize,
    pub from_ledger: usize,
    pub annotated: usize,
    pub unparseable: usize,
}

/// Pairs dispatched between ledger writes.
const CHUNK: usize = 256;

/// Annotates every (query, candidate) pair, reusing ledger entries.
///
/// Returned annotations follow candidate order. Unparseable responses are
/// logged and left out of both the result and the ledger, so a rerun retries
/// them.
pub fn annotate_candidates(
    candidates: &[CandidateSet],
    queries: &QuerySet,
    corpus: &Corpus,
    mode: AnnotationMode,
    client: &LlmClient,
    mut ledger: Option<&mut AnnotationLedger>,
) -> Result<(Vec<Annotation>, AnnotateReport)> {
    let mut report = AnnotateReport::default();
    let mut pairs = Vec::new();
    for cs in candidates {
        let query = queries.get(&cs.query_id).ok_or_else(|| Error::DanglingId {
            kind: "query",
            id: cs.query_id.clone(),
        })?;
        for hit in &cs.ranked {
            let doc = corpus.get(&hit.doc_id).ok_or_else(|| Error::DanglingId {
                kind: "document",
                id: hit.doc_id.clone(),
            })?;
            pairs.push((query, doc));
        }
    }
    report.pairs = pairs.len();

    let mut found: HashMap<(String, String), Annotation> = HashMap::new();
    let mut pending = Vec::new();
    for &(q, d) in &pairs {
        match ledger.as_deref().and_then(|l| l.get(&q.id, &d.id)) {
            Some(a) => {
                report.from_ledger += 1;
                found.insert((q.id.clone(), d.id.clone()), a.clone());
            }
            None => pending.push((q, d)),
        }
    }

    for chunk in pending.chunks(CHUNK) {
        let requests = chunk
            .iter()
            .map(|(q, d)| {
                Ok(client.request(
                    build_annotation_prompt(q, d, &q.task, mode)?,
                    client.sampling.annotation_temperature,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let responses = client.complete_many(&requests);
        let mut fresh = Vec::new();
        for ((q, d), response) in chunk.iter().zip(responses) {
            let raw = response?;
            match parse_score(&raw) {
                Ok(score) => fresh.push(Annotation {
                    query_id: q.id.clone(),
                    doc_id: d.id.clone(),
                    score,
                    mode,
                    raw_response: raw,
                }),
                Err(e) => {
                    warn!("annotation ({}, {}) skipped: {e}", q.id, d.id);
                    report.unparseable += 1;
                }
            }
        }
        if let Some(l) = ledger.as_deref_mut() {
            l.append(&fresh)?;
        }
        report.annotated += fresh.len();
        for a in fresh {
            found.insert((a.query_id.clone(), a.doc_id.clone()), a);
        }
    }

    let out = pairs
        .iter()
        .filter_map(|(q, d)| found.remove(&(q.id.clone(), d.id.clone())))
        .collect();
    Ok((out, report))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembleReport {
    pub queries: usize,
    pub samples: usize,
    pub dropped_no_positive: usize,
    pub unannotated_pairs: usize,
}

/// Splits one query's annotated candidates at `threshold`. `scored` is in
/// candidate rank order. Returns `None` when nothing reaches the threshold.
pub fn split_at_threshold(query_id: &str, scored: &[(&str, u8)], threshold: u8) -> Option<TrainingSample> {
    let mut positives = Vec::new();
    let mut hard_negatives = Vec::new();
    let mut seen = HashSet::new();
    for &(doc_id, score) in scored {
        if !seen.insert(doc_id) {
            continue;
        }
        if score >= threshold {
            positives.push(doc_id.to_string());
        } else {
            hard_negatives.push(doc_id.to_string());
        }
    }
    (!positives.is_empty()).then(|| TrainingSample {
        query_id: query_id.to_string(),
        positives,
        hard_negatives,
        reasoning_query: None,
    })
}

/// Builds one sample per query with at least one positive. Candidates without
/// an annotation (unparseable responses) are left out and counted.
pub fn assemble_samples(
    candidates: &[CandidateSet],
    annotations: &[Annotation],
    threshold: u8,
) -> (Vec<TrainingSample>, AssembleReport) {
    let scores: HashMap<(&str, &str), u8> = annotations
        .iter()
        .map(|a| ((a.query_id.as_str(), a.doc_id.as_str()), a.score))
        .collect();
    let mut report = AssembleReport::default();
    let mut samples = Vec::new();
    for cs in candidates {
        report.queries += 1;
        let mut scored = Vec::with_capacity(cs.ranked.len());
        for hit in &cs.ranked {
            match scores.get(&(cs.query_id.as_str(), hit.doc_id.as_str())) {
                Some(&s) => scored.push((hit.doc_id.as_str(), s)),
                None => report.unannotated_pairs += 1,
            }
        }
        match split_at_threshold(&cs.query_id, &scored, threshold) {
            Some(s) => samples.push(s),
            None => report.dropped_no_positive += 1,
        }
    }
    report.samples = samples.len();
    (samples, report)
}
