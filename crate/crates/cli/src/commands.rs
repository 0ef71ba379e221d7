use std::collections::HashSet;
use std::path::{Path, PathBuf};

use log::{info, warn};
use reason_forge::annotate::{annotate_candidates, assemble_samples, AnnotationLedger};
use reason_forge::contamination::{max_overlap, DomainFilter};
use reason_forge::corpus::{
    check_sources, compute_stats, load_corpus, load_queries, load_samples, read_jsonl, write_jsonl, Corpus, QuerySet,
};
use reason_forge::evalx::{evaluate, format_query, load_qrels};
use reason_forge::retrieval::{mine_all, CandidateSet, EmbeddingBackend, EmbeddingMatrix};
use reason_forge::synthesis::{attach_reasoning_queries, synthesize, SynthConfig};
use reason_forge::tasks::{instruction_for, Task};
use reason_forge::trainer::{train, AdapterHead, EmbeddingStore, DOC_PREFIX, QUERY_PREFIX, REASONING_PREFIX};
use serde::Serialize;

use crate::config::{Config, EmbeddingBackendKind, LlmBackendKind};
use crate::manifest::{self, manifest_path, Recorder};
use crate::{CliError, Command};

pub fn dispatch(command: &Command, mut cfg: Config, argv: Vec<String>) -> Result<(), CliError> {
    apply_stage_flags(command, &mut cfg);
    let mut rec = Recorder::new(command.name(), argv, cfg.clone());
    let uses_llm = matches!(command, Command::Synth(_) | Command::Annotate(_) | Command::Reason(_));
    let uses_embedder = matches!(command, Command::Mine(_) | Command::Embed(_) | Command::Eval(_));
    if uses_llm && cfg.llm.backend == LlmBackendKind::Mock {
        rec.seed("llm-mock", cfg.stage_seed("llm-mock"));
    }
    if uses_embedder && cfg.embedding.backend == EmbeddingBackendKind::Hash {
        rec.seed(
            "embedding",
            cfg.embedding.seed.unwrap_or_else(|| cfg.stage_seed("embedding")),
        );
    }
    let primary = match command {
        Command::Synth(a) => synth(a, &cfg, &mut rec)?,
        Command::Mine(a) => mine(a, &cfg, &mut rec)?,
        Command::Annotate(a) => annotate(a, &cfg, &mut rec)?,
        Command::Reason(a) => reason(a, &cfg, &mut rec)?,
        Command::Embed(a) => embed(a, &cfg, &mut rec)?,
        Command::Train(a) => train_head(a, &cfg, &mut rec)?,
        Command::Eval(a) => eval(a, &cfg, &mut rec)?,
        Command::Contaminate(a) => contaminate(a, &cfg, &mut rec)?,
        Command::Stats(a) => stats(a, &cfg, &mut rec)?,
        Command::Rerun(_) => unreachable!("handled before config resolution"),
    };
    if let Some(primary) = primary {
        let path = manifest_path(&primary);
        rec.finish(&primary)?;
        info!("wrote {}", path.display());
    }
    Ok(())
}

/// Stage flags override the matching config keys, so the manifest records
/// the values actually used.
fn apply_stage_flags(command: &Command, cfg: &mut Config) {
    fn set<T: Clone>(slot: &mut T, flag: &Option<T>) {
        if let Some(v) = flag {
            *slot = v.clone();
        }
    }
    match command {
        Command::Synth(a) => {
            set(&mut cfg.synth.queries_per_doc, &a.queries_per_doc);
            if a.max_docs.is_some() {
                cfg.synth.max_docs = a.max_docs;
            }
            if a.no_filter {
                cfg.synth.filter = false;
            }
        }
        Command::Mine(a) => {
            set(&mut cfg.mine.k, &a.k);
            if a.all_tasks {
                cfg.mine.same_task = false;
            }
        }
        Command::Annotate(a) => {
            set(&mut cfg.annotate.mode, &a.mode);
            set(&mut cfg.annotate.threshold, &a.threshold);
        }
        Command::Train(a) => {
            let t = &mut cfg.train;
            set(&mut t.tau, &a.tau);
            set(&mut t.kappa, &a.kappa);
            set(&mut t.warmup_steps, &a.warmup_steps);
            set(&mut t.lr, &a.lr);
            set(&mut t.batch_size, &a.batch_size);
            set(&mut t.negatives_per_query, &a.negatives_per_query);
            set(&mut t.epochs, &a.epochs);
            set(&mut t.objective, &a.objective);
            if a.max_steps.is_some() {
                t.max_steps = a.max_steps;
            }
        }
        Command::Eval(a) => set(&mut cfg.eval.k, &a.k),
        Command::Contaminate(a) => {
            set(&mut cfg.contaminate.top_n, &a.top_n);
            if a.audit {
                cfg.contaminate.audit = true;
            }
        }
        _ => {}
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(reason_forge::Error::from)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// A closed pipe (`| head`) is not an error.
fn print_stdout(text: &str) -> Result<(), CliError> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::io(Path::new("<stdout>"), e)),
        _ => Ok(()),
    }
}

fn summary<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).unwrap_or(serde_json::Value::Null)
}

fn input(rec: &mut Recorder, cfg: &Config, flag: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    let path = cfg.path(flag, name)?;
    rec.input(&path)?;
    Ok(path)
}

fn load_corpus_input(rec: &mut Recorder, cfg: &Config, flag: &Option<PathBuf>) -> Result<Corpus, CliError> {
    Ok(load_corpus(&input(rec, cfg, flag, "corpus")?)?)
}

fn load_queries_input(
    rec: &mut Recorder,
    cfg: &Config,
    flag: &Option<PathBuf>,
    name: &str,
) -> Result<QuerySet, CliError> {
    Ok(load_queries(&input(rec, cfg, flag, name)?)?)
}

/// Query text as the embedder sees it: prefixed with the task instruction
/// when the task is known.
fn query_text(task: &str, text: &str) -> Result<String, CliError> {
    match instruction_for(task) {
        Some(instr) => Ok(format_query(instr, text)?),
        None => {
            warn!("no instruction for task {task:?}; embedding the bare query");
            Ok(text.to_string())
        }
    }
}

/// Embeds `(lookup key, output id, text)` triples. Precomputed backends are
/// looked up by the prefixed key, so one embedding file serves every stage.
fn embed_rows(
    backend: &dyn EmbeddingBackend,
    rows: &[(String, String, String)],
    normalize: bool,
) -> Result<Option<EmbeddingMatrix>, CliError> {
    if rows.is_empty() {
        return Ok(None);
    }
    let items: Vec<(&str, &str)> = rows.iter().map(|(k, _, t)| (k.as_str(), t.as_str())).collect();
    let vectors = backend.embed(&items)?;
    let mut m = EmbeddingMatrix::from_rows(rows.iter().map(|(_, id, _)| id.clone()).zip(vectors))?;
    if normalize {
        m.normalize()?;
    }
    Ok(Some(m))
}

fn embed_queries(
    backend: &dyn EmbeddingBackend,
    queries: &QuerySet,
    normalize: bool,
) -> Result<Option<EmbeddingMatrix>, CliError> {
    let rows = queries
        .iter()
        .map(|q| {
            Ok((
                format!("{QUERY_PREFIX}{}", q.id),
                q.id.clone(),
                query_text(&q.task, &q.text)?,
            ))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    embed_rows(backend, &rows, normalize)
}

fn embed_corpus(
    backend: &dyn EmbeddingBackend,
    corpus: &Corpus,
    normalize: bool,
) -> Result<Option<EmbeddingMatrix>, CliError> {
    let rows: Vec<_> = corpus
        .iter()
        .map(|d| (format!("{DOC_PREFIX}{}", d.id), d.id.clone(), d.text.clone()))
        .collect();
    embed_rows(backend, &rows, normalize)
}

fn read_exclude(path: &Path) -> Result<HashSet<String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('{') {
            let v: serde_json::Value = serde_json::from_str(line)
                .map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
            let id = v
                .get("id")
                .and_then(|x| x.as_str())
                .ok_or_else(|| CliError::Usage(format!("{}:{}: object has no string \"id\"", path.display(), i + 1)))?;
            ids.insert(id.to_string());
        } else {
            ids.insert(line.to_string());
        }
    }
    Ok(ids)
}

fn synth(a: &crate::SynthArgs, cfg: &Config, rec: &mut Recorder) -> Result<Option<PathBuf>, CliError> {
    let task: Task = a.task.parse()?;
    let corpus = load_corpus_input(rec, cfg, &a.corpus)?;
    let exclude = match cfg.opt_path(&a.exclude, "exclude") {
        Some(p) => {
            rec.input(&p)?;
            read_exclude(&p)?
        }
        None => HashSet::new(),
    };
    let out = cfg.path(&a.out, "out")?;
    let seed = cfg.stage_seed("synth");
    rec.seed("synth", seed);
    let sc = SynthConfig {
        seed,
        queries_per_doc: cfg.synth.queries_per_doc,
        max_docs: cfg.synth.max_docs,
        filter: cfg.synth.filter,
    };
    let client = cfg.llm_client()?;
    let (queries, report) = synthesize(&corpus, task, &exclude, &sc, &client)?;
    write_jsonl(&out, queries.iter())?;
    rec.output(&out);
    if let Some(filter) = &report.filter {
        let mut p = out.as_os_str().to_owned();
        p.push(".filter.json");
        let p = PathBuf::from(p);
        write_json(&p, filter)?;
        rec.output(&p);
    }
    info!(
        "{} queries from {} source documents",
        report.raw_queries, report.source_docs
    );
    rec.summary = summary(&report);
    Ok(Some(out))
}

fn mine(a: &crate::MineArgs, cfg: &Config, rec: &mut Recorder) -> Result<Option<PathBuf>, CliError> {
    let queries = load_queries_input(rec, cfg, &a.queries, "queries")?;
    let corpus = load_corpus_input(rec, cfg, &a.corpus)?;
    check_sources(&queries, &corpus)?;
    let out = cfg.path(&a.out, "out")?;
    if cfg.mine.k == 0 {
        return Err(CliError::Usage("k must be at least 1".into()));
    }
    let backend = cfg.embedding_backend()?;
    let (Some(qm), Some(dm)) = (
        embed_queries(backend.as_ref(), &queries, cfg.embedding.normalize)?,
        embed_corpus(backend.as_ref(), &corpus, cfg.embedding.normalize)?,
    ) else {
        write_jsonl::<CandidateSet>(&out, [])?;
        rec.output(&out);
        return Ok(Some(out));
    };
    let filter = cfg.mine.same_task.then_some(&corpus);
    let candidates = mine_all(&queries, &qm, &dm, cfg.mine.k, filter)?;
    write_jsonl(&out, candidates.iter())?;
    rec.output(&out);
    Ok(Some(out))
}

fn annotate(a: &crate::AnnotateArgs, cfg: &Config, rec: &mut Recorder) -> Result<Option<PathBuf>, CliError> {
    let cand_path = input(rec, cfg, &a.candidates, "candidates")?;
    let candidates: Vec<CandidateSet> = read_jsonl(&cand_path)?.into_iter().map(|(_, c)| c).collect();
    let queries = load_queries_input(rec, cfg, &a.queries, "queries")?;
    let corpus = load_corpus_input(rec, cfg, &a.corpus)?;
    let out = cfg.path(&a.out, "out")?;
    if !(1..=5).contains(&cfg.annotate.threshold) {
        return Err(CliError::Usage(format!(
            "threshold must be 1..=5, got {}",
            cfg.annotate.threshold
        )));
    }
    let client = cfg.llm_client()?;
    let mut ledger = match cfg.opt_path(&a.ledger, "ledger") {
        Some(p) => {
            if p.exists() {
                rec.input(&p)?;
            }
            Some(AnnotationLedger::open(&p)?)
        }
        None => None,
    };
    let (annotations, report) = annotate_candidates(
        &candidates,
        &queries,
        &corpus,
        cfg.annotate.mode,
        &client,
        ledger.as_mut(),
    )?;
    let (samples, assembled) = assemble_samples(&candidates, &annotations, cfg.annotate.threshold);
    write_jsonl(&out, samples.iter())?;
    rec.output(&out);
    if let Some(l) = &ledger {
        rec.output(l.path());
    }
    if report.unparseable > 0 {
        warn!(
            "{} responses had no parseable score; rerun to retry them",
            report.unparseable
        );
    }
    rec.summary = serde_json::json!({ "annotate": report, "assemble": assembled });
    Ok(Some(out))
}

fn reason(a: &crate::ReasonArgs, cfg: &Config, rec: &mut Recorder) -> Result<Option<PathBuf>, CliError> {
    let mut samples = load_samples(&input(rec, cfg, &a.data, "data")?)?;
    let queries = load_queries_input(rec, cfg, &a.queries, "queries")?;
    let out = cfg.path(&a.out, "out")?;
    let client = cfg.llm_client()?;
    let added = attach_reasoning_queries(&mut samples, &queries, &client)?;
    write_jsonl(&out, samples.iter())?;
    rec.output(&out);
    rec.summary = serde_json::json!({ "samples": samples.len(), "reasoning_queries_added": added });
    Ok(Some(out))
}

fn embed(a: &crate::EmbedArgs, cfg: &Config, rec: &mut Recorder) -> Result<Option<PathBuf>, CliError> {
    let queries = load_queries_input(rec, cfg, &a.queries, "queries")?;
    let corpus = load_corpus_input(rec, cfg, &a.corpus)?;
    let samples = match cfg.opt_path(&a.data, "data") {
        Some(p) => {
            rec.input(&p)?;
            load_samples(&p)?
        }
        None => Vec::new(),
    };
    let out = cfg.path(&a.out, "out")?;
    let backend = cfg.embedding_backend()?;
    let normalize = cfg.embedding.normalize;
    let qm = embed_queries(backend.as_ref(), &queries, normalize)?
        .ok_or_else(|| CliError::Usage("no queries to embed".into()))?;
    let dm = embed_corpus(backend.as_ref(), &corpus, normalize)?
        .ok_or_else(|| CliError::Usage("no documents to embed".into()))?;
    let mut reasoning_rows = Vec::new();
    for s in &samples {
        if let Some(text) = &s.reasoning_query {
            let q = queries
                .get(&s.query_id)
                .ok_or_else(|| reason_forge::Error::DanglingId {
                    kind: "query",
                    id: s.query_id.clone(),
                })?;
            reasoning_rows.push((
                format!("{REASONING_PREFIX}{}", q.id),
                q.id.clone(),
                query_text(&q.task, text)?,
            ));
        }
    }
    let rm = embed_rows(backend.as_ref(), &reasoning_rows, normalize)?;
    let store = EmbeddingStore::from_parts(&qm, rm.as_ref(), &dm)?;
    store.matrix().write_to(&out)?;
    rec.output(&out);
    rec.summary = serde_json::json!({
        "dim": store.dim(),
        "queries": qm.len(),
        "reasoning_queries": reasoning_rows.len(),
        "documents": dm.len(),
    });
    Ok(Some(out))
}

fn train_head(a: &crate::TrainArgs, cfg: &Config, rec: &mut Recorder) -> Result<Option<PathBuf>, CliError> {
    let samples = load_samples(&input(rec, cfg, &a.data, "data")?)?;
    let emb_path = cfg
        .embedding
        .path
        .clone()
        .or_else(|| cfg.paths.get("embeddings").cloned())
        .ok_or_else(|| CliError::Usage("missing --embeddings (flag or [paths].embeddings)".into()))?;
    rec.input(&emb_path)?;
    let store = EmbeddingStore::new(EmbeddingMatrix::read_from(&emb_path)?);
    let out = cfg.path(&a.out, "out")?;
    let seed = cfg.stage_seed("train");
    rec.seed("train", seed);
    let tc = cfg.train.to_train_config(seed);
    let output = train(&samples, &store, &tc)?;
    output.head.save(&out)?;
    rec.output(&out);
    if let Some(report) = cfg.opt_path(&a.report, "report") {
        write_jsonl(&report, output.reports.iter())?;
        rec.output(&report);
    }
    let last = output.reports.last();
    rec.summary = serde_json::json!({
        "steps": output.reports.len(),
        "final_batch_loss": last.map(|r| r.batch_loss),
        "degenerate_steps": output.reports.iter().filter(|r| r.degenerate_normalization).count(),
    });
    Ok(Some(out))
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    #[serde(flatten)]
    report: &'a reason_forge::evalx::EvalReport,
    config: serde_json::Value,
}

fn eval(a: &crate::EvalArgs, cfg: &Config, rec: &mut Recorder) -> Result<Option<PathBuf>, CliError> {
    let queries = load_queries_input(rec, cfg, &a.queries, "queries")?;
    let corpus = load_corpus_input(rec, cfg, &a.corpus)?;
    let qrels = load_qrels(&input(rec, cfg, &a.qrels, "qrels")?)?;
    let out = cfg.path(&a.out, "out")?;
    let backend = cfg.embedding_backend()?;
    let normalize = cfg.embedding.normalize;
    let qm = embed_queries(backend.as_ref(), &queries, normalize)?
        .ok_or_else(|| CliError::Usage("no queries to evaluate".into()))?;
    let dm =
        embed_corpus(backend.as_ref(), &corpus, normalize)?.ok_or_else(|| CliError::Usage("empty corpus".into()))?;
    let head_path = cfg.opt_path(&a.head, "head");
    let head = match &head_path {
        Some(p) => {
            rec.input(p)?;
            AdapterHead::load(p)?
        }
        None => AdapterHead::identity(dm.dim()),
    };
    let report = evaluate(&head, &qm, &dm, &queries, &corpus, &qrels, cfg.eval.k)?;
    let echo = serde_json::json!({
        "k": cfg.eval.k,
        "head": head_path.map(|p| p.display().to_string()),
        "embedding": cfg.embedding,
        "seed": cfg.seed,
    });
    write_json(
        &out,
        &EvalOutput {
            report: &report,
            config: echo,
        },
    )?;
    rec.output(&out);
    rec.summary = serde_json::json!({ "mean": report.mean });
    Ok(Some(out))
}

fn contaminate(a: &crate::ContaminateArgs, cfg: &Config, rec: &mut Recorder) -> Result<Option<PathBuf>, CliError> {
    let train_q = load_queries_input(rec, cfg, &a.train, "train")?;
    let test_q = load_queries_input(rec, cfg, &a.test, "test")?;
    let filter = if a.all_domains {
        DomainFilter::All
    } else if let Some(p) = cfg.opt_path(&a.domain_map, "domain_map") {
        rec.input(&p)?;
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        DomainFilter::Map(
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("domain map {}: {e}", p.display())))?,
        )
    } else {
        DomainFilter::SameTask
    };
    let out = cfg.path(&a.out, "out")?;
    let report = max_overlap(&test_q, &train_q, &filter, cfg.contaminate.top_n, cfg.contaminate.audit)?;
    write_json(&out, &report)?;
    rec.output(&out);
    rec.summary = serde_json::json!({ "domain_filter": filter });
    Ok(Some(out))
}

fn stats(a: &crate::StatsArgs, cfg: &Config, rec: &mut Recorder) -> Result<Option<PathBuf>, CliError> {
    let queries = load_queries_input(rec, cfg, &a.queries, "queries")?;
    let samples = load_samples(&input(rec, cfg, &a.data, "data")?)?;
    let corpus = load_corpus_input(rec, cfg, &a.corpus)?;
    let stats = compute_stats(&queries, &samples, &corpus)?;
    match cfg.opt_path(&a.out, "out") {
        Some(out) => {
            write_json(&out, &stats)?;
            rec.output(&out);
            Ok(Some(out))
        }
        None => {
            let text = serde_json::to_string_pretty(&stats).map_err(reason_forge::Error::from)?;
            print_stdout(&text)?;
            Ok(None)
        }
    }
}

/// Replays the recorded arguments under the recorded configuration and
/// compares output digests.
pub fn rerun(path: &Path) -> Result<(), CliError> {
    let old = manifest::load(path)?;
    if old.tool != manifest::TOOL {
        return Err(CliError::Usage(format!(
            "{} is not a {} manifest",
            path.display(),
            manifest::TOOL
        )));
    }
    crate::run(old.argv.clone(), Some(old.config.clone()))?;
    let primary = old
        .outputs
        .keys()
        .map(PathBuf::from)
        .find(|p| manifest_path(p) == path)
        .ok_or_else(|| CliError::Usage(format!("{} names no output it sits beside", path.display())))?;
    let new = manifest::load(&manifest_path(&primary))?;
    let changed: Vec<String> = old
        .outputs
        .iter()
        .filter(|(p, digest)| new.outputs.get(*p) != Some(digest))
        .map(|(p, _)| p.clone())
        .collect();
    if changed.is_empty() {
        print_stdout(&format!("reproduced {} output(s)", old.outputs.len()))
    } else {
        Err(CliError::Mismatch(changed))
    }
}
