//! nDCG evaluation of a head over query and document embeddings.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, Corpus, QuerySet};
use crate::error::{Error, Result};
use crate::retrieval::{top_k, EmbeddingMatrix};
use crate::tasks::instruction_for;
use crate::trainer::AdapterHead;

pub const DEFAULT_K: usize = 10;

/// Relevance judgements: query id → (doc id → grade).
pub type Qrels = BTreeMap<String, HashMap<String, u32>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrelLine {
    pub query_id: String,
    pub doc_id: String,
    pub relevance: u32,
}

pub fn load_qrels(path: &Path) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (line, q) in read_jsonl::<QrelLine>(path)? {
        let grades = qrels.entry(q.query_id.clone()).or_default();
        if grades.insert(q.doc_id.clone(), q.relevance).is_some() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("duplicate judgement for ({:?}, {:?})", q.query_id, q.doc_id),
            });
        }
    }
    Ok(qrels)
}

pub fn format_query(task_instruction: &str, query_text: &str) -> Result<String> {
    if task_instruction.is_empty() || query_text.is_empty() {
        return Err(Error::invalid("instruction and query text must be non-empty"));
    }
    Ok(format!("Instruct: {task_instruction}\nQuery: {query_text}"))
}

/// Instruction-formatted text for every query, in input order.
pub fn formatted_queries(queries: &QuerySet) -> Result<Vec<(String, String)>> {
    queries
        .iter()
        .map(|q| {
            let instr = instruction_for(&q.task).ok_or_else(|| Error::UnknownTask(q.task.clone()))?;
            Ok((q.id.clone(), format_query(instr, &q.text)?))
        })
        .collect()
}

fn dcg(grades: impl Iterator<Item = u32>) -> f64 {
    grades
        .enumerate()
        .map(|(i, g)| (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// nDCG over the first `k` ranked ids, gain 2^rel − 1, discount log2(i + 1).
/// Zero when no judged document is relevant (and when k = 0).
pub fn ndcg_at_k(ranked: &[String], qrels: &HashMap<String, u32>, k: usize) -> f64 {
    let mut ideal: Vec<u32> = qrels.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(ideal.into_iter().take(k));
    if idcg == 0.0 {
        return 0.0;
    }
    let got = dcg(ranked.iter().take(k).map(|d| qrels.get(d).copied().unwrap_or(0)));
    got / idcg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub query_id: String,
    pub task: String,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub queries: usize,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub tasks: BTreeMap<String, TaskScore>,
    /// Unweighted mean of the per-task scores.
    pub mean: f64,
    pub per_query: Vec<QueryScore>,
    /// Judged queries with no relevant document, left out of the averages.
    pub skipped_no_positive: Vec<String>,
}

/// Ranks the whole corpus for every judged query through `head` and reports
/// nDCG@k per task and macro-averaged.
///
/// `query_embeddings` holds the (instruction-formatted) query vectors keyed
/// by query id; `doc_embeddings` is keyed by document id.
pub fn evaluate(
    head: &AdapterHead,
    query_embeddings: &EmbeddingMatrix,
    doc_embeddings: &EmbeddingMatrix,
    queries: &QuerySet,
    corpus: &Corpus,
    qrels: &Qrels,
    k: usize,
) -> Result<EvalReport> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    for m in [query_embeddings, doc_embeddings] {
        if m.dim() != head.dim() {
            return Err(Error::DimensionMismatch {
                expected: head.dim(),
                actual: m.dim(),
            });
        }
    }
    let dangling = |kind, id: &str| Error::DanglingId {
        kind,
        id: id.to_string(),
    };
    for doc in corpus.iter() {
        if doc_embeddings.get(&doc.id).is_none() {
            return Err(dangling("document embedding", &doc.id));
        }
    }
    let mut skipped = Vec::new();
    let mut judged = Vec::new();
    for (qid, grades) in qrels {
        let q = queries.get(qid).ok_or_else(|| dangling("query", qid))?;
        if query_embeddings.get(qid).is_none() {
            return Err(dangling("query embedding", qid));
        }
        if let Some(d) = grades.keys().find(|d| !corpus.contains(d)) {
            return Err(dangling("document", d));
        }
        if grades.values().all(|g| *g == 0) {
            warn!("query {qid:?} has no relevant document; skipped");
            skipped.push(qid.clone());
        } else {
            judged.push((q, grades));
        }
    }

    let in_corpus: HashSet<&str> = corpus.iter().map(|d| d.id.as_str()).collect();
    let docs = doc_embeddings
        .subset(|id| in_corpus.contains(id))
        .map_rows(|v| head.apply(v))?;
    let exclude = HashSet::new();
    let per_query = judged
        .par_iter()
        .map(|(q, grades)| {
            let qv = head.apply(query_embeddings.get(&q.id).expect("checked"));
            let ranked: Vec<String> = top_k(&qv, &docs, k, &exclude)?.into_iter().map(|s| s.doc_id).collect();
            Ok(QueryScore {
                query_id: q.id.clone(),
                task: q.task.clone(),
                ndcg: ndcg_at_k(&ranked, grades, k),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sums: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for s in &per_query {
        let e = sums.entry(s.task.clone()).or_default();
        e.0 += 1;
        e.1 += s.ndcg;
    }
    let tasks: BTreeMap<String, TaskScore> = sums
        .into_iter()
        .map(|(t, (n, total))| {
            (
                t,
                TaskScore {
                    queries: n,
                    ndcg: total / n as f64,
                },
            )
        })
        .collect();
    let mean = if tasks.is_empty() {
        0.0
    } else {
        tasks.values().map(|t| t.ndcg).sum::<f64>() / tasks.len() as f64
    };
    Ok(EvalReport {
        k,
        tasks,
        mean,
        per_query,
        skipped_no_positive: skipped,
    })
}
