//! Okapi BM25 over an in-memory inverted index.
//!
//! score(q, d) = Σ_{t ∈ q} idf(t) · tf·(k1+1) / (tf + k1·(1 − b + b·|d|/avgdl))
//! idf(t)      = ln((N − df + 0.5)/(df + 0.5) + 1)
//!
//! The `+ 1` inside the log keeps idf positive for terms present in more than
//! half the documents. Repeated query terms contribute once per occurrence.

use std::collections::HashMap;

use super::search::{rank_order, ScoredDoc};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    pub params: Bm25Params,
    doc_ids: Vec<String>,
    doc_index: HashMap<String, usize>,
    doc_len: Vec<usize>,
    avg_doc_len: f64,
    doc_freq: HashMap<String, usize>,
    // Sorted by document position.
    postings: HashMap<String, Vec<(usize, u32)>>,
}

impl Bm25Index {
    pub fn build<I, S>(docs: I, params: Bm25Params) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<String>)>,
        S: Into<String>,
    {
        let mut doc_ids = Vec::new();
        let mut doc_index = HashMap::new();
        let mut doc_len = Vec::new();
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        for (pos, (id, tokens)) in docs.into_iter().enumerate() {
            let id = id.into();
            if doc_index.insert(id.clone(), pos).is_some() {
                return Err(Error::invalid(format!("duplicate document id {id:?}")));
            }
            doc_ids.push(id);
            doc_len.push(tokens.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((pos, count));
            }
        }
        let avg_doc_len = if doc_len.is_empty() {
            0.0
        } else {
            doc_len.iter().sum::<usize>() as f64 / doc_len.len() as f64
        };
        let doc_freq = postings.iter().map(|(t, p)| (t.clone(), p.len())).collect();
        Ok(Self {
            params,
            doc_ids,
            doc_index,
            doc_len,
            avg_doc_len,
            doc_freq,
            postings,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_len(&self, doc_id: &str) -> Option<usize> {
        self.doc_index.get(doc_id).map(|&i| self.doc_len[i])
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.doc_freq(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, pos: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let len_ratio = if self.avg_doc_len > 0.0 {
            self.doc_len[pos] as f64 / self.avg_doc_len
        } else {
            1.0
        };
        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len_ratio))
    }

    fn tf(&self, term: &str, pos: usize) -> u32 {
        self.postings
            .get(term)
            .and_then(|p| p.binary_search_by_key(&pos, |&(d, _)| d).ok().map(|i| p[i].1))
            .unwrap_or(0)
    }

    /// BM25 score of one document. Unknown query terms contribute zero.
    pub fn score(&self, query_terms: &[String], doc_id: &str) -> Result<f64> {
        let pos = *self.doc_index.get(doc_id).ok_or_else(|| Error::DanglingId {
            kind: "document",
            id: doc_id.to_string(),
        })?;
        Ok(query_terms
            .iter()
            .map(|t| match self.tf(t, pos) {
                0 => 0.0,
                tf => self.term_weight(self.idf(t), tf, pos),
            })
            .sum())
    }

    /// Top-`n` documents sharing at least one term with the query.
    pub fn search(&self, query_terms: &[String], n: usize) -> Vec<ScoredDoc> {
        let mut acc: HashMap<usize, f64> = HashMap::new();
        // Accumulate per query occurrence, in query order, so scores are bit-identical
        // to `score`.
        let mut touched: Vec<usize> = Vec::new();
        for t in query_terms {
            let Some(list) = self.postings.get(t) else {
                continue;
            };
            let idf = self.idf(t);
            for &(pos, tf) in list {
                let w = self.term_weight(idf, tf, pos);
                let slot = acc.entry(pos).or_insert_with(|| {
                    touched.push(pos);
                    0.0
                });
                *slot += w;
            }
        }
        let mut scored: Vec<ScoredDoc> = touched
            .into_iter()
            .map(|pos| ScoredDoc {
                doc_id: self.doc_ids[pos].clone(),
                score: acc[&pos],
            })
            .collect();
        scored.sort_by(rank_order);
        scored.truncate(n);
        scored
    }
}

/// Free-function form of [`Bm25Index::score`].
pub fn bm25_score(index: &Bm25Index, query_terms: &[String], doc_id: &str) -> Result<f64> {
    index.score(query_terms, doc_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use proptest::prelude::*;

    fn terms(s: &str) -> Vec<String> {
        tokenize(s)
    }

    fn index(docs: &[(&str, &str)]) -> Bm25Index {
        Bm25Index::build(docs.iter().map(|(id, t)| (*id, terms(t))), Bm25Params::default()).unwrap()
    }

    /// Straight-from-the-formula oracle: recomputes df, tf and avgdl from the
    /// raw token lists on every call.
    fn oracle(docs: &[Vec<String>], query: &[String], target: usize, k1: f64, b: f64) -> f64 {
        let n = docs.len() as f64;
        let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
        let d = &docs[target];
        let mut total = 0.0;
        for t in query {
            let tf = d.iter().filter(|x| *x == t).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = docs.iter().filter(|doc| doc.contains(t)).count() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            let ratio = if avgdl > 0.0 { d.len() as f64 / avgdl } else { 1.0 };
            total += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * ratio));
        }
        total
    }

    #[test]
    fn absent_term_contributes_zero() {
        let idx = index(&[("a", "apple banana"), ("b", "cherry")]);
        assert_eq!(idx.score(&terms("durian"), "a").unwrap(), 0.0);
        assert_eq!(idx.score(&terms("cherry"), "a").unwrap(), 0.0);
    }

    #[test]
    fn single_document_hand_value() {
        // N = 1, df = 1, tf = 1, |d| = avgdl.
        let idx = index(&[("a", "word")]);
        // idf = ln((1 - 1 + 0.5) / 1.5 + 1) = ln(4/3); the tf factor is 1.
        let expected = (4.0f64 / 3.0).ln();
        let got = idx.score(&terms("word"), "a").unwrap();
        assert!((got - expected).abs() < 1e-15, "{got}");
    }

    #[test]
    fn monotone_in_term_frequency() {
        // Same length for every document so only tf varies.
        let idx = index(&[
            ("one", "x y y y"),
            ("two", "x x y y"),
            ("three", "x x x y"),
            ("other", "z z z z"),
        ]);
        let q = terms("x");
        let s: Vec<f64> = ["one", "two", "three"]
            .iter()
            .map(|d| idx.score(&q, d).unwrap())
            .collect();
        assert!(s[0] < s[1] && s[1] < s[2], "{s:?}");
    }

    #[test]
    fn avg_doc_len_is_mean() {
        let idx = index(&[("a", "one two"), ("b", "one two three four")]);
        assert_eq!(idx.avg_doc_len(), 3.0);
        assert_eq!(idx.doc_len("b"), Some(4));
    }

    #[test]
    fn unknown_doc_is_an_error() {
        let idx = index(&[("a", "x")]);
        assert!(idx.score(&terms("x"), "zzz").is_err());
    }

    #[test]
    fn search_ranks_and_skips_unmatched() {
        let idx = index(&[
            ("a", "rust borrow checker"),
            ("b", "python garbage collector"),
            ("c", "rust rust lifetimes"),
        ]);
        let hits = idx.search(&terms("rust lifetimes"), 10);
        let ids: Vec<_> = hits.iter().map(|h| h.doc_id.as_str()).collect();
        assert_eq!(ids, ["c", "a"]);
    }

    proptest! {
        #[test]
        fn matches_formula_oracle(
            docs in proptest::collection::vec(proptest::collection::vec(0u8..6, 0..8), 1..8),
            query in proptest::collection::vec(0u8..8, 1..5),
        ) {
            let as_terms = |v: &Vec<u8>| v.iter().map(|t| format!("t{t}")).collect::<Vec<_>>();
            let docs: Vec<Vec<String>> = docs.iter().map(as_terms).collect();
            let query = as_terms(&query);
            let idx = Bm25Index::build(
                docs.iter().enumerate().map(|(i, d)| (format!("d{i}"), d.clone())),
                Bm25Params::default(),
            ).unwrap();
            for i in 0..docs.len() {
                let got = idx.score(&query, &format!("d{i}")).unwrap();
                let want = oracle(&docs, &query, i, 1.2, 0.75);
                prop_assert!((got - want).abs() <= 1e-12, "{} vs {}", got, want);
            }
            for hit in idx.search(&query, docs.len()) {
                let want = idx.score(&query, &hit.doc_id).unwrap();
                prop_assert!((hit.score - want).abs() <= 1e-12);
            }
        }
    }
}
