//! Synthetic retrieval task whose positives become separable only after a
//! fixed linear map of embedding space.
//!
//! Every vector is normalize(z + α·c·u): z carries topic signal, u is a dense
//! unit "nuisance" direction shared by all items (entries ±1/√dim) and
//! c ∈ {−1, +1} is drawn per item. Under the identity map the α²·c_q·c_d term
//! dominates similarity, so documents on the query's side of u outrank
//! opposite-side positives. The projection I − u·uᵀ removes the term.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use reason_forge::corpus::{Corpus, Document, Query, QuerySet, TrainingSample};
use reason_forge::evalx::Qrels;
use reason_forge::retrieval::{mine_all, EmbeddingMatrix};
use reason_forge::trainer::{AdapterHead, EmbeddingStore};

use super::{rng, unit_vec};

pub struct ToyParams {
    pub dim: usize,
    pub docs: usize,
    pub queries: usize,
    pub held_out: usize,
    pub positives_per_query: usize,
    pub alpha: f64,
    pub alpha_reasoning: f64,
    pub signal_noise: f64,
    pub hard_negatives: usize,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self {
            dim: 64,
            docs: 200,
            queries: 50,
            held_out: 10,
            positives_per_query: 2,
            alpha: 1.0,
            alpha_reasoning: 0.85,
            signal_noise: 0.5,
            hard_negatives: 20,
        }
    }
}

pub struct Toy {
    pub nuisance: Vec<f64>,
    pub corpus: Corpus,
    pub queries: QuerySet,
    pub train_samples: Vec<TrainingSample>,
    pub held_out: QuerySet,
    pub qrels: Qrels,
    pub store: EmbeddingStore,
    pub query_matrix: EmbeddingMatrix,
    pub doc_matrix: EmbeddingMatrix,
}

fn orthogonal_unit(r: &mut rand_chacha::ChaCha8Rng, u: &[f64]) -> Vec<f64> {
    let v = unit_vec(r, u.len());
    let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
    let w: Vec<f64> = v.iter().zip(u).map(|(a, b)| a - p * b).collect();
    let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    w.iter().map(|x| x / n).collect()
}

fn mix(z: &[f64], u: &[f64], alpha: f64, c: f64) -> Vec<f64> {
    let v: Vec<f64> = z.iter().zip(u).map(|(a, b)| a + alpha * c * b).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn build(seed: u64, p: &ToyParams) -> Toy {
    let mut r = rng(seed);
    let scale = 1.0 / (p.dim as f64).sqrt();
    let u: Vec<f64> = (0..p.dim)
        .map(|_| if r.random_bool(0.5) { scale } else { -scale })
        .collect();
    let sign = |r: &mut rand_chacha::ChaCha8Rng| if r.random_bool(0.5) { 1.0 } else { -1.0 };

    let mut doc_rows = Vec::new();
    let mut docs = Vec::new();
    let mut query_rows = Vec::new();
    let mut reasoning_rows = Vec::new();
    let mut queries = Vec::new();
    let mut positives: Vec<Vec<String>> = Vec::new();
    for qi in 0..p.queries {
        let z = orthogonal_unit(&mut r, &u);
        let qid = format!("q{qi:02}");
        let c = sign(&mut r);
        query_rows.push((qid.clone(), mix(&z, &u, p.alpha, c)));
        reasoning_rows.push((qid.clone(), mix(&z, &u, p.alpha_reasoning, c)));
        queries.push(Query {
            id: qid,
            text: format!("toy query {qi}"),
            task: "Bio.".into(),
            source_doc_id: None,
            length_bucket: None,
            education_level: None,
        });
        let mut pos = Vec::new();
        for k in 0..p.positives_per_query {
            let noise = orthogonal_unit(&mut r, &u);
            let zd: Vec<f64> = z.iter().zip(&noise).map(|(a, b)| a + p.signal_noise * b).collect();
            let n = zd.iter().map(|x| x * x).sum::<f64>().sqrt();
            let zd: Vec<f64> = zd.iter().map(|x| x / n).collect();
            let did = format!("p{qi:02}_{k}");
            doc_rows.push((did.clone(), mix(&zd, &u, p.alpha, sign(&mut r))));
            pos.push(did);
        }
        positives.push(pos);
    }
    let distractors = p.docs - doc_rows.len();
    for i in 0..distractors {
        let z = orthogonal_unit(&mut r, &u);
        doc_rows.push((format!("n{i:03}"), mix(&z, &u, p.alpha, sign(&mut r))));
    }
    for (id, _) in &doc_rows {
        docs.push(Document {
            id: id.clone(),
            text: format!("toy document {id}"),
            task: "Bio.".into(),
            meta: None,
        });
    }

    let corpus = Corpus::from_items(docs).unwrap();
    let doc_matrix = EmbeddingMatrix::from_rows(doc_rows).unwrap();
    let query_matrix = EmbeddingMatrix::from_rows(query_rows).unwrap();
    let reasoning_matrix = EmbeddingMatrix::from_rows(reasoning_rows).unwrap();
    let all_queries = QuerySet::from_items(queries.clone()).unwrap();
    let n_train = p.queries - p.held_out;
    let train_queries = QuerySet::from_items(queries[..n_train].to_vec()).unwrap();
    let held_out = QuerySet::from_items(queries[n_train..].to_vec()).unwrap();

    // Hard negatives: identity-head nearest documents that are not positives.
    let mined = mine_all(
        &train_queries,
        &query_matrix,
        &doc_matrix,
        p.hard_negatives + p.positives_per_query,
        None,
    )
    .unwrap();
    let train_samples = mined
        .iter()
        .zip(&positives)
        .map(|(cs, pos)| TrainingSample {
            query_id: cs.query_id.clone(),
            positives: pos.clone(),
            hard_negatives: cs
                .ranked
                .iter()
                .map(|s| s.doc_id.clone())
                .filter(|d| !pos.contains(d))
                .take(p.hard_negatives)
                .collect(),
            reasoning_query: Some("embedded".into()),
        })
        .collect();

    let mut qrels = Qrels::new();
    for (qi, pos) in positives.iter().enumerate().skip(n_train) {
        let grades: HashMap<String, u32> = pos.iter().map(|d| (d.clone(), 1)).collect();
        qrels.insert(format!("q{qi:02}"), grades);
    }
    let store = EmbeddingStore::from_parts(&query_matrix, Some(&reasoning_matrix), &doc_matrix).unwrap();
    let _ = all_queries;
    Toy {
        nuisance: u,
        corpus,
        queries: QuerySet::from_items(queries).unwrap(),
        train_samples,
        held_out,
        qrels,
        store,
        query_matrix,
        doc_matrix,
    }
}

/// The transform the fixture is built around: I − u·uᵀ.
pub fn oracle_head(u: &[f64]) -> AdapterHead {
    let dim = u.len();
    let mut w = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            w[i * dim + j] = if i == j { 1.0 } else { 0.0 } - u[i] * u[j];
        }
    }
    AdapterHead::from_parts(dim, w, vec![0.0; dim]).unwrap()
}
