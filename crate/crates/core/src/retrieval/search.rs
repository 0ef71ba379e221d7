use std::cmp::Ordering;
use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::embedding::{dot, EmbeddingMatrix};
use crate::corpus::{Corpus, Query, QuerySet};
use crate::error::{Error, Result};

/// Default candidate pool size for mining.
pub const DEFAULT_MINE_K: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

/// Ranked candidates for one query: scores non-increasing, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub query_id: String,
    pub ranked: Vec<ScoredDoc>,
}

/// Descending score, then ascending id.
pub fn rank_order(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Exact top-`k` by dot product over rows accepted by `keep`.
pub fn top_k_by(
    query_vec: &[f64],
    matrix: &EmbeddingMatrix,
    k: usize,
    mut keep: impl FnMut(&str) -> bool,
) -> Result<Vec<ScoredDoc>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if query_vec.len() != matrix.dim() {
        return Err(Error::DimensionMismatch {
            expected: matrix.dim(),
            actual: query_vec.len(),
        });
    }
    let mut scored: Vec<ScoredDoc> = matrix
        .rows()
        .filter(|(id, _)| keep(id))
        .map(|(id, v)| ScoredDoc {
            doc_id: id.to_string(),
            score: dot(query_vec, v),
        })
        .collect();
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, rank_order);
        scored.truncate(k);
    }
    scored.sort_by(rank_order);
    Ok(scored)
}

/// Exact top-`k` by dot product over rows not in `exclude`.
pub fn top_k(
    query_vec: &[f64],
    matrix: &EmbeddingMatrix,
    k: usize,
    exclude: &HashSet<String>,
) -> Result<Vec<ScoredDoc>> {
    top_k_by(query_vec, matrix, k, |id| !exclude.contains(id))
}

/// Top-`k` candidates for a query with its source document removed.
pub fn mine_candidates(
    query: &Query,
    query_vec: &[f64],
    corpus_matrix: &EmbeddingMatrix,
    k: usize,
) -> Result<CandidateSet> {
    let source = query.source_doc_id.as_deref();
    let ranked = top_k_by(query_vec, corpus_matrix, k, |id| Some(id) != source)?;
    Ok(CandidateSet {
        query_id: query.id.clone(),
        ranked,
    })
}

/// Mines candidates for every query in input order. When `corpus` is given,
/// each query only sees documents of its own task.
pub fn mine_all(
    queries: &QuerySet,
    query_matrix: &EmbeddingMatrix,
    corpus_matrix: &EmbeddingMatrix,
    k: usize,
    corpus: Option<&Corpus>,
) -> Result<Vec<CandidateSet>> {
    queries
        .as_slice()
        .par_iter()
        .map(|q| {
            let qv = query_matrix.get(&q.id).ok_or_else(|| Error::DanglingId {
                kind: "query embedding",
                id: q.id.clone(),
            })?;
            let source = q.source_doc_id.as_deref();
            let ranked = top_k_by(qv, corpus_matrix, k, |id| {
                Some(id) != source && corpus.is_none_or(|c| c.get(id).is_some_and(|d| d.task == q.task))
            })?;
            Ok(CandidateSet {
                query_id: q.id.clone(),
                ranked,
            })
        })
        .collect()
}
