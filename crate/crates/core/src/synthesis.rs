//! Corpus filtering, conditioned query generation and query reasoning
//! expansion.
//!
//! Every LLM call goes through [`LlmClient::complete_many`], so results come
//! back in input order regardless of parallelism and a mock backend makes the
//! whole stage a pure function of its inputs and seed.

use std::collections::{HashMap, HashSet};

use log::{info, warn};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, EducationLevel, LengthBucket, Query, QuerySet, TrainingSample};
use crate::error::{Error, Result};
use crate::llm::{ChatRequest, LlmClient, PromptTemplate, TemplateName};
use crate::tasks::Task;
use crate::util::{sha256_hex, stable_hash64};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationPlan {
    pub task: Task,
    pub generation_instruction: String,
    pub output_content: String,
    pub length_bucket: LengthBucket,
    pub education_level: EducationLevel,
    pub seed: u64,
}

/// Draws a stream of plans from one seeded generator.
#[derive(Debug, Clone)]
pub struct PlanSampler {
    rng: ChaCha8Rng,
    seed: u64,
}

impl PlanSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
        }
    }

    pub fn next_plan(&mut self, task: Task) -> GenerationPlan {
        let length_bucket = *LengthBucket::ALL.choose(&mut self.rng).expect("non-empty");
        let education_level = *EducationLevel::ALL.choose(&mut self.rng).expect("non-empty");
        GenerationPlan {
            task,
            generation_instruction: task.generation_instruction(),
            output_content: task.output_content(),
            length_bucket,
            education_level,
            seed: self.seed,
        }
    }
}

/// One plan for `task`, deterministic in `rng_seed`.
pub fn sample_plan(rng_seed: u64, task: &str) -> Result<GenerationPlan> {
    let task: Task = task.parse()?;
    Ok(PlanSampler::new(rng_seed).next_plan(task))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: usize,
    pub dropped: usize,
    /// Responses that were neither "yes" nor "no". These documents are kept.
    pub unparseable: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unparseable_ids: Vec<String>,
}

pub fn build_filter_prompt(domain_label: &str, doc: &Document) -> Result<String> {
    PromptTemplate::builtin(TemplateName::CorpusFilter)
        .render(&HashMap::from([("Domain", domain_label), ("Doc", doc.text.as_str())]))
}

/// Keeps the documents the model labels as in-domain.
///
/// A response other than yes/no (after trimming and case folding) keeps the
/// document and records it in the report.
pub fn filter_corpus(corpus: &Corpus, domain_label: &str, client: &LlmClient) -> Result<(Corpus, FilterReport)> {
    let temperature = client.sampling.filter_temperature;
    let requests = corpus
        .iter()
        .map(|d| Ok(client.request(build_filter_prompt(domain_label, d)?, temperature)))
        .collect::<Result<Vec<ChatRequest>>>()?;
    let responses = client.complete_many(&requests);

    let mut report = FilterReport::default();
    let mut keep = HashSet::new();
    for (doc, response) in corpus.iter().zip(responses) {
        let answer = response?.trim().to_lowercase();
        match answer.as_str() {
            "yes" => {
                report.kept += 1;
                keep.insert(doc.id.clone());
            }
            "no" => report.dropped += 1,
            _ => {
                warn!("filter: unparseable response for {:?}: {answer:?}", doc.id);
                report.unparseable += 1;
                report.unparseable_ids.push(doc.id.clone());
                keep.insert(doc.id.clone());
            }
        }
    }
    let mut out = corpus.clone();
    out.retain(|d| keep.contains(&d.id));
    Ok((out, report))
}

pub fn build_generation_prompt(doc: &Document, plan: &GenerationPlan) -> Result<String> {
    PromptTemplate::builtin(TemplateName::QueryGen).render(&HashMap::from([
        ("Generation Instruction", plan.generation_instruction.as_str()),
        ("Input Content", doc.text.as_str()),
        ("Output Content", plan.output_content.as_str()),
        ("Length", plan.length_bucket.prompt_text()),
        ("Difficulty", plan.education_level.prompt_text()),
    ]))
}

/// Id of the query generated from `doc_id` under a plan seed.
pub fn synthetic_query_id(doc_id: &str, plan_seed: u64) -> String {
    let digest = sha256_hex(format!("{doc_id}\u{0}{plan_seed}").as_bytes());
    format!("syn-{}", &digest[..16])
}

fn query_from_completion(doc: &Document, plan: &GenerationPlan, completion: &str) -> Option<Query> {
    let text = completion.trim();
    if text.is_empty() {
        return None;
    }
    Some(Query {
        id: synthetic_query_id(&doc.id, plan.seed),
        text: text.to_string(),
        task: plan.task.short_name().to_string(),
        source_doc_id: Some(doc.id.clone()),
        length_bucket: Some(plan.length_bucket),
        education_level: Some(plan.education_level),
    })
}

/// Generates one query from `doc`. An empty completion yields `Ok(None)`.
pub fn generate_query(doc: &Document, plan: &GenerationPlan, client: &LlmClient) -> Result<Option<Query>> {
    if doc.text.trim().is_empty() {
        return Err(Error::invalid(format!("document {:?} has empty text", doc.id)));
    }
    let prompt = build_generation_prompt(doc, plan)?;
    let completion = client.complete(&client.request(prompt, client.sampling.generation_temperature))?;
    Ok(query_from_completion(doc, plan, &completion))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub queries_per_doc: usize,
    /// Upper bound on source documents drawn (uniformly, without replacement).
    pub max_docs: Option<usize>,
    pub filter: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            queries_per_doc: 1,
            max_docs: None,
            filter: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthReport {
    pub task: String,
    pub candidate_docs: usize,
    pub excluded: usize,
    pub filter: Option<FilterReport>,
    pub source_docs: usize,
    pub raw_queries: usize,
    pub skipped_empty: usize,
}

/// Runs filter and generation for one task.
///
/// Documents of other tasks and those listed in `exclude` never seed a query.
/// Plans are seeded per (document, repetition), so a document's query does
/// not depend on which other documents were selected.
pub fn synthesize(
    corpus: &Corpus,
    task: Task,
    exclude: &HashSet<String>,
    config: &SynthConfig,
    client: &LlmClient,
) -> Result<(QuerySet, SynthReport)> {
    let mut report = SynthReport {
        task: task.short_name().to_string(),
        ..Default::default()
    };
    let mut pool = corpus.clone();
    pool.retain(|d| d.task.parse::<Task>().ok() == Some(task));
    report.candidate_docs = pool.len();
    pool.retain(|d| !exclude.contains(&d.id));
    report.excluded = report.candidate_docs - pool.len();

    if config.filter {
        let (kept, filter_report) = filter_corpus(&pool, task.filter_domain(), client)?;
        info!(
            "filter {}: kept {} dropped {} unparseable {}",
            task, filter_report.kept, filter_report.dropped, filter_report.unparseable
        );
        pool = kept;
        report.filter = Some(filter_report);
    }

    if let Some(max) = config.max_docs.filter(|&m| m < pool.len()) {
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash64(&[&config.seed.to_le_bytes(), b"doc-sample"]));
        let mut positions: Vec<usize> = (0..pool.len()).collect();
        positions.shuffle(&mut rng);
        let chosen: HashSet<String> = positions[..max]
            .iter()
            .map(|&i| pool.as_slice()[i].id.clone())
            .collect();
        pool.retain(|d| chosen.contains(&d.id));
    }
    report.source_docs = pool.len();

    let mut jobs = Vec::new();
    for doc in pool.iter().filter(|d| !d.text.trim().is_empty()) {
        for rep in 0..config.queries_per_doc {
            let plan_seed = stable_hash64(&[
                &config.seed.to_le_bytes(),
                doc.id.as_bytes(),
                &(rep as u64).to_le_bytes(),
            ]);
            jobs.push((doc, PlanSampler::new(plan_seed).next_plan(task)));
        }
    }
    let requests = jobs
        .iter()
        .map(|(doc, plan)| {
            Ok(client.request(
                build_generation_prompt(doc, plan)?,
                client.sampling.generation_temperature,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let responses = client.complete_many(&requests);

    let mut queries = QuerySet::new();
    for ((doc, plan), response) in jobs.iter().zip(responses) {
        match query_from_completion(doc, plan, &response?) {
            Some(q) => queries.insert(q)?,
            None => report.skipped_empty += 1,
        }
    }
    report.raw_queries = queries.len();
    Ok((queries, report))
}

pub fn build_reasoning_prompt(query_text: &str) -> Result<String> {
    PromptTemplate::builtin(TemplateName::QueryReasoning).render(&HashMap::from([("Original Query", query_text)]))
}

/// Fills `reasoning_query` on every sample that lacks one.
///
/// Returns the number of samples filled. An empty completion leaves the field
/// unset and is logged.
pub fn attach_reasoning_queries(
    samples: &mut [TrainingSample],
    queries: &QuerySet,
    client: &LlmClient,
) -> Result<usize> {
    let pending: Vec<usize> = (0..samples.len())
        .filter(|&i| samples[i].reasoning_query.is_none())
        .collect();
    let requests = pending
        .iter()
        .map(|&i| {
            let id = &samples[i].query_id;
            let q = queries.get(id).ok_or_else(|| Error::DanglingId {
                kind: "query",
                id: id.clone(),
            })?;
            Ok(client
                .request(build_reasoning_prompt(&q.text)?, client.sampling.reasoning_temperature)
                .with_max_new_tokens(client.sampling.reasoning_max_new_tokens))
        })
        .collect::<Result<Vec<_>>>()?;
    let responses = client.complete_many(&requests);
    let mut filled = 0;
    for (&i, response) in pending.iter().zip(responses) {
        let text = response?.trim().to_string();
        if text.is_empty() {
            warn!("empty reasoning query for {:?}", samples[i].query_id);
            continue;
        }
        samples[i].reasoning_query = Some(text);
        filled += 1;
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{FixedBackend, ScriptedBackend};
    use std::sync::Arc;

    fn doc(id: &str, text: &str, task: &str) -> Document {
        Document {
            id: id.into(),
            text: text.into(),
            task: task.into(),
            meta: None,
        }
    }

    fn five_docs() -> Corpus {
        Corpus::from_items((0..5).map(|i| doc(&format!("d{i}"), &format!("text {i}"), "Bio."))).unwrap()
    }

    fn client(backend: impl crate::llm::ChatBackend + 'static) -> LlmClient {
        LlmClient::new(Arc::new(backend), "test").with_parallelism(1)
    }

    #[test]
    fn filter_all_yes_is_identity() {
        let c = five_docs();
        let (out, rep) = filter_corpus(&c, "Biology", &client(FixedBackend("Yes".into()))).unwrap();
        assert_eq!(out, c);
        assert_eq!((rep.kept, rep.dropped, rep.unparseable), (5, 0, 0));
    }

    #[test]
    fn filter_all_no_is_empty() {
        let (out, rep) = filter_corpus(&five_docs(), "Biology", &client(FixedBackend("No".into()))).unwrap();
        assert!(out.is_empty());
        assert_eq!(rep.dropped, 5);
    }

    #[test]
    fn filter_scripted_mix_keeps_three() {
        let backend = ScriptedBackend::new(["Yes", " no\n", "YES", "No", "yes."]);
        let (out, rep) = filter_corpus(&five_docs(), "Biology", &client(backend)).unwrap();
        // "yes." is neither answer: kept and flagged.
        assert_eq!((rep.kept, rep.dropped, rep.unparseable), (2, 2, 1));
        assert_eq!(rep.unparseable_ids, ["d4"]);
        let ids: Vec<_> = out.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["d0", "d2", "d4"]);

        let backend = ScriptedBackend::new(["Yes", "No", "Yes", "No", "Yes"]);
        let (out, rep) = filter_corpus(&five_docs(), "Biology", &client(backend)).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(rep.kept, 3);
    }

    #[test]
    fn filter_report_json_shape() {
        let rep = FilterReport {
            kept: 3,
            dropped: 2,
            unparseable: 0,
            unparseable_ids: vec![],
        };
        assert_eq!(
            serde_json::to_string(&rep).unwrap(),
            r#"{"kept":3,"dropped":2,"unparseable":0}"#
        );
    }

    #[test]
    fn plan_is_deterministic() {
        assert_eq!(sample_plan(11, "Bio.").unwrap(), sample_plan(11, "Bio.").unwrap());
        assert!(sample_plan(1, "chemistry").is_err());
    }

    #[test]
    fn aops_plan_carries_table_instruction() {
        let plan = sample_plan(0, "AoPS").unwrap();
        assert!(plan
            .generation_instruction
            .contains("problem-solving skills used in the original problem"));
    }

    #[test]
    fn bucket_frequencies_are_uniform() {
        let mut sampler = PlanSampler::new(0);
        let n = 60_000;
        let mut lengths = HashMap::new();
        let mut levels = HashMap::new();
        for _ in 0..n {
            let p = sampler.next_plan(Task::Biology);
            *lengths.entry(p.length_bucket).or_insert(0usize) += 1;
            *levels.entry(p.education_level).or_insert(0usize) += 1;
        }
        assert_eq!(lengths.len(), 6);
        for count in lengths.values() {
            let f = *count as f64 / n as f64;
            assert!((f - 1.0 / 6.0).abs() <= 0.02, "{f}");
        }
        for count in levels.values() {
            let f = *count as f64 / n as f64;
            assert!((f - 1.0 / 3.0).abs() <= 0.02, "{f}");
        }
    }

    #[test]
    fn generation_prompt_carries_bucket_strings() {
        let mut plan = sample_plan(0, "Bio.").unwrap();
        plan.length_bucket = LengthBucket::Lt100;
        plan.education_level = EducationLevel::HighSchool;
        let p = build_generation_prompt(&doc("a", "cells divide", "Bio."), &plan).unwrap();
        assert!(p.contains("less than 100 words"));
        assert!(p.contains("high school"));
        assert!(p.contains("cells divide"));
    }

    #[test]
    fn generate_with_mock_sets_source() {
        let d = doc("a", "mitochondria produce energy for the cell", "Bio.");
        let plan = sample_plan(3, "Bio.").unwrap();
        let c = LlmClient::mock(9);
        let q1 = generate_query(&d, &plan, &c).unwrap().unwrap();
        let q2 = generate_query(&d, &plan, &c).unwrap().unwrap();
        assert_eq!(q1, q2);
        assert_eq!(q1.source_doc_id.as_deref(), Some("a"));
        assert_eq!(q1.length_bucket, Some(plan.length_bucket));
        assert_eq!(q1.task, "Bio.");
    }

    #[test]
    fn empty_completion_is_skipped() {
        let corpus = Corpus::from_items([doc("a", "x y", "Bio."), doc("b", "z w", "Bio.")]).unwrap();
        let config = SynthConfig {
            filter: false,
            ..Default::default()
        };
        let backend = ScriptedBackend::new(["  ", "What is z?"]);
        let (qs, rep) = synthesize(&corpus, Task::Biology, &HashSet::new(), &config, &client(backend)).unwrap();
        assert_eq!(rep.skipped_empty, 1);
        assert_eq!(qs.len(), 1);
        assert_eq!(qs.as_slice()[0].source_doc_id.as_deref(), Some("b"));
    }

    #[test]
    fn exclusions_and_other_tasks_never_seed() {
        let corpus = Corpus::from_items([
            doc("a", "alpha beta", "Bio."),
            doc("b", "gamma delta", "Bio."),
            doc("c", "epsilon zeta", "AoPS"),
        ])
        .unwrap();
        let exclude: HashSet<String> = ["a".to_string()].into();
        let config = SynthConfig {
            filter: false,
            queries_per_doc: 3,
            ..Default::default()
        };
        let (qs, rep) = synthesize(&corpus, Task::Biology, &exclude, &config, &LlmClient::mock(1)).unwrap();
        assert_eq!(rep.excluded, 1);
        assert_eq!(qs.len(), 3);
        assert!(qs.iter().all(|q| q.source_doc_id.as_deref() == Some("b")));
    }

    #[test]
    fn synthesize_is_reproducible_and_sources_resolve() {
        let corpus = Corpus::from_items((0..30).map(|i| {
            doc(
                &format!("d{i}"),
                &format!("topic {i} concerns enzymes and membranes number {i}"),
                "Bio.",
            )
        }))
        .unwrap();
        let config = SynthConfig {
            seed: 5,
            max_docs: Some(10),
            ..Default::default()
        };
        let run = || synthesize(&corpus, Task::Biology, &HashSet::new(), &config, &LlmClient::mock(2)).unwrap();
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert!(ra.source_docs <= 10);
        for q in a.iter() {
            assert!(corpus.contains(q.source_doc_id.as_deref().unwrap()));
        }
        // Parallel dispatch does not change the result.
        let parallel = LlmClient::mock(2).with_parallelism(4);
        let (c, _) = synthesize(&corpus, Task::Biology, &HashSet::new(), &config, &parallel).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn reasoning_queries_attach() {
        let queries = QuerySet::from_items([Query {
            id: "q".into(),
            text: "Why do leaves change color?".into(),
            task: "Bio.".into(),
            source_doc_id: None,
            length_bucket: None,
            education_level: None,
        }])
        .unwrap();
        let mut samples = vec![
            TrainingSample {
                query_id: "q".into(),
                positives: vec!["d".into()],
                hard_negatives: vec![],
                reasoning_query: None,
            },
            TrainingSample {
                query_id: "q".into(),
                positives: vec!["d".into()],
                hard_negatives: vec![],
                reasoning_query: Some("already".into()),
            },
        ];
        let n = attach_reasoning_queries(&mut samples, &queries, &LlmClient::mock(0)).unwrap();
        assert_eq!(n, 1);
        assert!(samples[0]
            .reasoning_query
            .as_ref()
            .unwrap()
            .contains("essential problem"));
        assert_eq!(samples[1].reasoning_query.as_deref(), Some("already"));
        assert!(build_reasoning_prompt("Q")
            .unwrap()
            .contains("Identify the essential problem."));
    }
}
