//! Test-side reference implementations. Written from the defining formulas
//! with no shared code paths beyond the public data types.
#![allow(dead_code)]

pub mod grad;
pub mod toy;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reason_forge::retrieval::EmbeddingMatrix;
use reason_forge::trainer::{AdapterHead, EmbeddingStore, PreparedInstance};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn unit_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v = random_vec(rng, dim);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// −ln( e^{s₊/τ} / Σ e^{s/τ} ) evaluated literally.
pub fn naive_info_nce(q: &[f64], pos: &[f64], negs: &[Vec<f64>], tau: f64) -> f64 {
    let sim = |d: &[f64]| q.iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
    let num = (sim(pos) / tau).exp();
    let mut den = num;
    for n in negs {
        den += (sim(n) / tau).exp();
    }
    -(num / den).ln()
}

/// normalize(W v + b) with W row-major.
pub fn naive_apply(w: &[f64], b: &[f64], v: &[f64]) -> Vec<f64> {
    let dim = b.len();
    let mut u = vec![0.0; dim];
    for i in 0..dim {
        let mut acc = b[i];
        for j in 0..dim {
            acc += w[i * dim + j] * v[j];
        }
        u[i] = acc;
    }
    let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n < 1e-12 {
        u
    } else {
        u.iter().map(|x| x / n).collect()
    }
}

/// Σ weight_i · InfoNCE_i with every vector pushed through (w, b).
pub fn naive_objective(
    w: &[f64],
    b: &[f64],
    batch: &[PreparedInstance],
    store: &EmbeddingStore,
    tau: f64,
    weights: &[f64],
) -> f64 {
    let m = store.matrix();
    let get = |k: String| naive_apply(w, b, m.get(&k).unwrap());
    batch
        .iter()
        .zip(weights)
        .map(|(inst, wt)| {
            let q = get(format!("q:{}", inst.query_id));
            let pos = get(format!("d:{}", inst.positive));
            let negs: Vec<Vec<f64>> = inst.negatives.iter().map(|d| get(format!("d:{d}"))).collect();
            wt * naive_info_nce(&q, &pos, &negs, tau)
        })
        .sum()
}

/// Central differences of `naive_objective` over all of (W, b).
pub fn fd_gradient(
    head: &AdapterHead,
    batch: &[PreparedInstance],
    store: &EmbeddingStore,
    tau: f64,
    weights: &[f64],
    h: f64,
) -> Vec<f64> {
    let mut w = head.w.clone();
    let mut b = head.b.clone();
    let mut out = Vec::with_capacity(w.len() + b.len());
    for i in 0..w.len() {
        let x = w[i];
        w[i] = x + h;
        let fp = naive_objective(&w, &b, batch, store, tau, weights);
        w[i] = x - h;
        let fm = naive_objective(&w, &b, batch, store, tau, weights);
        w[i] = x;
        out.push((fp - fm) / (2.0 * h));
    }
    for i in 0..b.len() {
        let x = b[i];
        b[i] = x + h;
        let fp = naive_objective(&w, &b, batch, store, tau, weights);
        b[i] = x - h;
        let fm = naive_objective(&w, &b, batch, store, tau, weights);
        b[i] = x;
        out.push((fp - fm) / (2.0 * h));
    }
    out
}

/// A random batch: `n` instances over a small document pool, a perturbed
/// identity head, and a store with query, reasoning and document rows.
pub fn random_gradient_case(seed: u64, dim: usize, n: usize) -> (AdapterHead, Vec<PreparedInstance>, EmbeddingStore) {
    let mut r = rng(seed);
    let mut m = EmbeddingMatrix::new(dim).unwrap();
    let docs = n + 6;
    for d in 0..docs {
        m.push(format!("d:{d}"), &unit_vec(&mut r, dim)).unwrap();
    }
    let mut batch = Vec::new();
    for i in 0..n {
        m.push(format!("q:{i}"), &unit_vec(&mut r, dim)).unwrap();
        m.push(format!("qr:{i}"), &unit_vec(&mut r, dim)).unwrap();
        let negs = r.random_range(1..=6usize);
        let mut negatives = Vec::new();
        while negatives.len() < negs {
            let d = r.random_range(0..docs);
            if d != i && !negatives.contains(&d.to_string()) {
                negatives.push(d.to_string());
            }
        }
        batch.push(PreparedInstance {
            query_id: i.to_string(),
            positive: i.to_string(),
            candidate_negatives: negatives[..1].to_vec(),
            negatives,
        });
    }
    let mut w = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            w[i * dim + j] = if i == j { 1.0 } else { 0.0 } + 0.2 * r.random_range(-1.0..1.0);
        }
    }
    let b: Vec<f64> = (0..dim).map(|_| 0.1 * r.random_range(-1.0..1.0)).collect();
    let head = AdapterHead::from_parts(dim, w, b).unwrap();
    (head, batch, EmbeddingStore::new(m))
}

/// max_i |a_i − n_i| / max(|a_i|, |n_i|, floor).
pub fn max_rel_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// DCG with gain 2^rel − 1 and discount log2(i + 1), summed explicitly.
pub fn naive_dcg(rels: &[u32]) -> f64 {
    let mut total = 0.0;
    for (i, &r) in rels.iter().enumerate() {
        total += (2f64.powi(r as i32) - 1.0) / ((i + 2) as f64).log2();
    }
    total
}

pub fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head.clone());
            out.push(p);
        }
    }
    out
}

/// nDCG@k where the ideal DCG is the maximum over every ordering of the
/// judged documents.
pub fn exhaustive_ndcg(ranked: &[String], qrels: &HashMap<String, u32>, k: usize) -> f64 {
    let rels: Vec<u32> = ranked
        .iter()
        .take(k)
        .map(|d| qrels.get(d).copied().unwrap_or(0))
        .collect();
    let dcg = naive_dcg(&rels);
    let judged: Vec<u32> = qrels.values().copied().collect();
    let idcg = permutations(&judged)
        .iter()
        .map(|p| naive_dcg(&p[..p.len().min(k)]))
        .fold(0.0, f64::max);
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Full sort by (score desc, id asc), then truncate.
pub fn full_sort_top_k(query: &[f64], rows: &[(String, Vec<f64>)], k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = rows
        .iter()
        .map(|(id, v)| (id.clone(), query.iter().zip(v).map(|(a, b)| a * b).sum()))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Σ min / Σ max over term-frequency bags, iterating the union of keys.
pub fn naive_weighted_jaccard(a: &[String], b: &[String]) -> f64 {
    let count = |v: &[String]| {
        let mut m: HashMap<String, f64> = HashMap::new();
        for t in v {
            *m.entry(t.clone()).or_default() += 1.0;
        }
        m
    };
    let (ca, cb) = (count(a), count(b));
    let mut keys: Vec<&String> = ca.keys().chain(cb.keys()).collect();
    keys.sort();
    keys.dedup();
    let (mut mn, mut mx) = (0.0, 0.0);
    for k in keys {
        let x = ca.get(k).copied().unwrap_or(0.0);
        let y = cb.get(k).copied().unwrap_or(0.0);
        mn += x.min(y);
        mx += x.max(y);
    }
    if mx == 0.0 {
        0.0
    } else {
        mn / mx
    }
}
