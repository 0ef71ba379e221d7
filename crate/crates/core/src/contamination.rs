//! Overlap audit between training queries and benchmark test queries.
//!
//! For every test query, BM25 shortlists the most similar training queries of
//! the same domain and the highest weighted Jaccard similarity over
//! term-frequency bags is reported.

use std::collections::{BTreeMap, HashMap};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Query, QuerySet};
use crate::error::{Error, Result};
use crate::retrieval::{Bm25Index, Bm25Params};
use crate::tasks::Task;

pub const DEFAULT_TOP_N: usize = 20;

pub type Bag = HashMap<String, f64>;

pub fn tf_bag(tokens: &[String]) -> Bag {
    let mut bag = Bag::new();
    for t in tokens {
        *bag.entry(t.clone()).or_default() += 1.0;
    }
    bag
}

/// Σ_t min(a_t, b_t) / Σ_t max(a_t, b_t); zero when both bags are empty.
pub fn weighted_jaccard(a: &Bag, b: &Bag) -> Result<f64> {
    if let Some((t, w)) = a.iter().chain(b).find(|(_, w)| !(**w >= 0.0)) {
        return Err(Error::invalid(format!("negative weight {w} for term {t:?}")));
    }
    // Sorted union so the sums, and hence the result, do not depend on hash
    // order or argument order.
    let mut terms: Vec<&String> = a.keys().chain(b.keys()).collect();
    terms.sort_unstable();
    terms.dedup();
    let mut num = 0.0;
    let mut den = 0.0;
    for t in terms {
        let x = a.get(t).copied().unwrap_or(0.0);
        let y = b.get(t).copied().unwrap_or(0.0);
        num += x.min(y);
        den += x.max(y);
    }
    Ok(if den == 0.0 { 0.0 } else { num / den })
}

/// Which training queries a test query is compared against.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainFilter {
    /// Training queries of the same task (names compared after parsing, so
    /// "biology" matches "Bio."; unknown names compare verbatim).
    #[default]
    SameTask,
    /// Test task → accepted training tasks.
    Map(BTreeMap<String, Vec<String>>),
    /// No restriction.
    All,
}

fn task_key(name: &str) -> String {
    name.parse::<Task>()
        .map(|t| t.short_name().to_string())
        .unwrap_or_else(|_| name.to_string())
}

impl DomainFilter {
    /// Canonical training-task keys accepted for `test_task`, or `None` for all.
    fn accepted(&self, test_task: &str) -> Option<Vec<String>> {
        match self {
            DomainFilter::All => None,
            DomainFilter::SameTask => Some(vec![task_key(test_task)]),
            DomainFilter::Map(m) => {
                let entry = m.get(test_task).or_else(|| {
                    m.iter()
                        .find(|(k, _)| task_key(k) == task_key(test_task))
                        .map(|(_, v)| v)
                });
                Some(
                    entry
                        .map(|v| v.iter().map(|t| task_key(t)).collect())
                        .unwrap_or_default(),
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOverlap {
    pub test_id: String,
    pub task: String,
    pub best_train_id: Option<String>,
    pub similarity: f64,
    /// All-pairs maximum, present on audit runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exhaustive_similarity: Option<f64>,
    /// Set on audit runs when the shortlist missed the true maximum.
    #[serde(default)]
    pub shortlist_miss: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOverlap {
    pub queries: usize,
    pub max_similarity: f64,
    pub mean_similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationReport {
    pub top_n: usize,
    pub datasets: BTreeMap<String, DatasetOverlap>,
    pub per_query: Vec<QueryOverlap>,
    pub shortlist_misses: usize,
}

struct Pool<'a> {
    queries: Vec<&'a Query>,
    bags: Vec<Bag>,
    index: Bm25Index,
}

impl<'a> Pool<'a> {
    fn build(queries: Vec<&'a Query>) -> Result<Self> {
        let tokens: Vec<Vec<String>> = queries.iter().map(|q| tokenize(&q.text)).collect();
        let bags = tokens.iter().map(|t| tf_bag(t)).collect();
        let index = Bm25Index::build(queries.iter().map(|q| q.id.as_str()).zip(tokens), Bm25Params::default())?;
        Ok(Self { queries, bags, index })
    }

    fn position(&self, id: &str) -> usize {
        self.queries.iter().position(|q| q.id == id).expect("indexed id")
    }

    /// Highest similarity among `positions`; ties go to the smaller id.
    fn best(&self, test: &Bag, positions: impl Iterator<Item = usize>) -> Result<Option<(String, f64)>> {
        let mut best: Option<(String, f64)> = None;
        for i in positions {
            let s = weighted_jaccard(test, &self.bags[i])?;
            let id = &self.queries[i].id;
            let better = match &best {
                None => true,
                Some((bid, bs)) => s > *bs || (s == *bs && id < bid),
            };
            if better {
                best = Some((id.clone(), s));
            }
        }
        Ok(best)
    }
}

/// Maximum weighted Jaccard similarity of each test query to the training
/// queries its domain filter admits, searched over a BM25 top-`top_n`
/// shortlist. With `audit`, the exhaustive maximum is computed as well and
/// disagreements are flagged.
pub fn max_overlap(
    test: &QuerySet,
    train: &QuerySet,
    filter: &DomainFilter,
    top_n: usize,
    audit: bool,
) -> Result<ContaminationReport> {
    if top_n == 0 {
        return Err(Error::invalid("top_n must be at least 1"));
    }
    // One BM25 pool per distinct accepted-task set.
    let mut pools: BTreeMap<Option<Vec<String>>, Pool> = BTreeMap::new();
    for q in test.iter() {
        let key = filter.accepted(&q.task).map(|mut v| {
            v.sort();
            v.dedup();
            v
        });
        if pools.contains_key(&key) {
            continue;
        }
        let members: Vec<&Query> = train
            .iter()
            .filter(|t| key.as_ref().is_none_or(|k| k.contains(&task_key(&t.task))))
            .collect();
        pools.insert(key, Pool::build(members)?);
    }

    let per_query = test
        .as_slice()
        .par_iter()
        .map(|q| {
            let mut key = filter.accepted(&q.task);
            if let Some(k) = key.as_mut() {
                k.sort();
                k.dedup();
            }
            let pool = &pools[&key];
            let tokens = tokenize(&q.text);
            let bag = tf_bag(&tokens);
            if pool.queries.is_empty() {
                warn!("no training queries admitted for test query {:?} ({})", q.id, q.task);
            }
            let shortlist = pool.index.search(&tokens, top_n);
            let best = pool.best(&bag, shortlist.iter().map(|h| pool.position(&h.doc_id)))?;
            let (best_train_id, similarity) = match best {
                Some((id, s)) if s > 0.0 => (Some(id), s),
                _ => (None, 0.0),
            };
            let exhaustive_similarity = if audit {
                Some(pool.best(&bag, 0..pool.queries.len())?.map_or(0.0, |(_, s)| s))
            } else {
                None
            };
            Ok(QueryOverlap {
                test_id: q.id.clone(),
                task: q.task.clone(),
                best_train_id,
                similarity,
                shortlist_miss: exhaustive_similarity.is_some_and(|e| e != similarity),
                exhaustive_similarity,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut datasets: BTreeMap<String, DatasetOverlap> = BTreeMap::new();
    for o in &per_query {
        let d = datasets.entry(o.task.clone()).or_insert(DatasetOverlap {
            queries: 0,
            max_similarity: 0.0,
            mean_similarity: 0.0,
        });
        d.queries += 1;
        d.max_similarity = d.max_similarity.max(o.similarity);
        d.mean_similarity += o.similarity;
    }
    for d in datasets.values_mut() {
        d.mean_similarity /= d.queries as f64;
    }
    let shortlist_misses = per_query.iter().filter(|o| o.shortlist_miss).count();
    Ok(ContaminationReport {
        top_n,
        datasets,
        per_query,
        shortlist_misses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bag(v: &[(&str, f64)]) -> Bag {
        v.iter().map(|(t, w)| (t.to_string(), *w)).collect()
    }

    fn q(id: &str, text: &str, task: &str) -> Query {
        Query {
            id: id.into(),
            text: text.into(),
            task: task.into(),
            source_doc_id: None,
            length_bucket: None,
            education_level: None,
        }
    }

    #[test]
    fn jaccard_examples() {
        let a = bag(&[("x", 2.0), ("y", 1.0)]);
        assert_eq!(weighted_jaccard(&a, &a).unwrap(), 1.0);
        assert_eq!(weighted_jaccard(&a, &bag(&[("z", 3.0)])).unwrap(), 0.0);
        assert_eq!(weighted_jaccard(&a, &bag(&[("x", 1.0), ("z", 1.0)])).unwrap(), 0.25);
        assert_eq!(weighted_jaccard(&Bag::new(), &Bag::new()).unwrap(), 0.0);
        assert!(weighted_jaccard(&bag(&[("x", -1.0)]), &a).is_err());
    }

    #[test]
    fn planted_duplicate_found() {
        let train = QuerySet::from_items([
            q("t1", "how do plants fix nitrogen", "Bio."),
            q("t2", "why is the sky blue", "Bio."),
        ])
        .unwrap();
        let test = QuerySet::from_items([q("x", "Why is the sky blue?", "biology")]).unwrap();
        let r = max_overlap(&test, &train, &DomainFilter::SameTask, 20, false).unwrap();
        assert_eq!(r.per_query[0].similarity, 1.0);
        assert_eq!(r.per_query[0].best_train_id.as_deref(), Some("t2"));
    }

    #[test]
    fn disjoint_vocabulary_is_zero() {
        let train = QuerySet::from_items([q("t1", "alpha beta", "Bio.")]).unwrap();
        let test = QuerySet::from_items([q("x", "gamma delta", "Bio.")]).unwrap();
        let r = max_overlap(&test, &train, &DomainFilter::SameTask, 20, true).unwrap();
        assert_eq!(r.per_query[0].similarity, 0.0);
        assert_eq!(r.per_query[0].best_train_id, None);
    }

    #[test]
    fn domain_filter_restricts_pool() {
        let train = QuerySet::from_items([q("t1", "sum of primes", "AoPS"), q("t2", "cell walls", "Bio.")]).unwrap();
        let test = QuerySet::from_items([q("x", "sum of primes", "Bio.")]).unwrap();
        let same = max_overlap(&test, &train, &DomainFilter::SameTask, 20, false).unwrap();
        assert_eq!(same.per_query[0].similarity, 0.0);
        let all = max_overlap(&test, &train, &DomainFilter::All, 20, false).unwrap();
        assert_eq!(all.per_query[0].similarity, 1.0);
        let map = DomainFilter::Map(BTreeMap::from([("Bio.".to_string(), vec!["aops".to_string()])]));
        let mapped = max_overlap(&test, &train, &map, 20, false).unwrap();
        assert_eq!(mapped.per_query[0].best_train_id.as_deref(), Some("t1"));
    }

    #[test]
    fn empty_pool_reports_zero() {
        let train = QuerySet::from_items([q("t1", "words", "AoPS")]).unwrap();
        let test = QuerySet::from_items([q("x", "words", "Bio.")]).unwrap();
        let r = max_overlap(&test, &train, &DomainFilter::SameTask, 5, true).unwrap();
        assert_eq!(r.per_query[0].similarity, 0.0);
        assert!(!r.per_query[0].shortlist_miss);
    }

    proptest! {
        #[test]
        fn jaccard_bounded_and_symmetric(
            a in proptest::collection::hash_map("[a-e]", 0.0f64..5.0, 0..5),
            b in proptest::collection::hash_map("[a-e]", 0.0f64..5.0, 0..5),
        ) {
            let s = weighted_jaccard(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s, weighted_jaccard(&b, &a).unwrap());
        }

        #[test]
        fn unit_weights_give_plain_jaccard(
            a in proptest::collection::hash_set("[a-h]", 0..6),
            b in proptest::collection::hash_set("[a-h]", 0..6),
        ) {
            let to_bag = |s: &std::collections::HashSet<String>| s.iter().map(|t| (t.clone(), 1.0)).collect::<Bag>();
            let inter = a.intersection(&b).count() as f64;
            let union = a.union(&b).count() as f64;
            let plain = if union == 0.0 { 0.0 } else { inter / union };
            prop_assert!((weighted_jaccard(&to_bag(&a), &to_bag(&b)).unwrap() - plain).abs() < 1e-15);
        }
    }
}
