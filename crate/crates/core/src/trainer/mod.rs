//! Contrastive training of an adapter head over frozen embeddings.
//!
//! Each training sample is expanded into one instance per positive. A batch
//! of instances is scored with InfoNCE against the instance's own hard
//! negatives followed by documents of the other instances in the batch. After
//! the warm-up steps, per-instance losses are weighted by batch-normalised
//! reasoning intensity, computed at the current head and held constant for
//! differentiation.

pub mod head;
pub mod loss;
pub mod optim;

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TrainingSample;
use crate::error::{Error, Result};
use crate::retrieval::{dot, EmbeddingMatrix};
use crate::util::stable_hash64;

pub use head::{AdapterHead, HeadGrad, HeadOutput};
pub use loss::{batch_weights, info_nce, info_nce_sims, reasoning_intensity};
pub use optim::{scheduled_lr, Adam, AdamParams};

pub const QUERY_PREFIX: &str = "q:";
pub const REASONING_PREFIX: &str = "qr:";
pub const DOC_PREFIX: &str = "d:";

/// Query, reasoning-query and document embeddings in one matrix, keyed by
/// `q:<query_id>`, `qr:<query_id>` and `d:<doc_id>`.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    matrix: EmbeddingMatrix,
}

impl EmbeddingStore {
    pub fn new(matrix: EmbeddingMatrix) -> Self {
        Self { matrix }
    }

    /// Combines separately keyed matrices, adding the prefixes.
    pub fn from_parts(
        queries: &EmbeddingMatrix,
        reasoning: Option<&EmbeddingMatrix>,
        docs: &EmbeddingMatrix,
    ) -> Result<Self> {
        let mut m = EmbeddingMatrix::new(queries.dim())?;
        let parts = [
            (QUERY_PREFIX, Some(queries)),
            (REASONING_PREFIX, reasoning),
            (DOC_PREFIX, Some(docs)),
        ];
        for (prefix, part) in parts {
            for (id, v) in part.into_iter().flat_map(|p| p.rows()) {
                m.push(format!("{prefix}{id}"), v)?;
            }
        }
        Ok(Self { matrix: m })
    }

    pub fn matrix(&self) -> &EmbeddingMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn lookup(&self, key: &str, kind: &'static str) -> Result<&[f64]> {
        self.matrix.get(key).ok_or_else(|| Error::DanglingId {
            kind,
            id: key.to_string(),
        })
    }

    pub fn has_reasoning(&self, query_id: &str) -> bool {
        self.matrix.get(&format!("{REASONING_PREFIX}{query_id}")).is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Plain InfoNCE during warm-up, RI-weighted afterwards.
    RiInfonce,
    /// Uniformly weighted InfoNCE throughout.
    Infonce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub tau: f64,
    pub kappa: f64,
    pub warmup_steps: usize,
    pub lr: f64,
    /// Fraction of total steps over which the learning rate ramps up.
    pub lr_warmup_ratio: f64,
    pub batch_size: usize,
    pub negatives_per_query: usize,
    pub seed: u64,
    pub epochs: usize,
    /// Overrides `epochs` when set; epochs repeat until this many steps ran.
    pub max_steps: Option<usize>,
    pub objective: Objective,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: 0.02,
            kappa: 5.0,
            warmup_steps: 100,
            lr: 1e-4,
            lr_warmup_ratio: 0.1,
            batch_size: 16,
            negatives_per_query: 1023,
            seed: 0,
            epochs: 1,
            max_steps: None,
            objective: Objective::RiInfonce,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(msg.to_string()));
        if !(self.tau > 0.0) {
            return bad("tau must be positive");
        }
        if !(self.kappa > 0.0) {
            return bad("kappa must be positive");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(0.0..=1.0).contains(&self.lr_warmup_ratio) {
            return bad("lr_warmup_ratio must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.negatives_per_query == 0 {
            return bad("batch_size and negatives_per_query must be at least 1");
        }
        if self.max_steps.is_none() && self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        Ok(())
    }
}

/// One (query, single positive) training unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub query_id: String,
    pub positive: String,
    /// Every positive of the originating sample, this one included.
    pub sample_positives: Vec<String>,
    /// Hard negatives with sibling positives removed.
    pub hard_negatives: Vec<String>,
}

pub fn multi_positive_expand(sample: &TrainingSample) -> Vec<Instance> {
    let positives: HashSet<&str> = sample.positives.iter().map(String::as_str).collect();
    let hard_negatives: Vec<String> = sample
        .hard_negatives
        .iter()
        .filter(|d| !positives.contains(d.as_str()))
        .cloned()
        .collect();
    sample
        .positives
        .iter()
        .map(|p| Instance {
            query_id: sample.query_id.clone(),
            positive: p.clone(),
            sample_positives: sample.positives.clone(),
            hard_negatives: hard_negatives.clone(),
        })
        .collect()
}

/// An instance with its negatives resolved against a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedInstance {
    pub query_id: String,
    pub positive: String,
    /// Own hard negatives first, then documents of other batch instances.
    pub negatives: Vec<String>,
    /// Own candidate negatives, used for the reasoning-intensity losses.
    pub candidate_negatives: Vec<String>,
}

/// Builds each instance's negative list: own hard negatives, then the
/// positive and hard negatives of every other instance in batch order,
/// skipping the sample's own positives and duplicates, capped at `cap`.
pub fn assemble_batch(batch: &[&Instance], cap: usize) -> Vec<PreparedInstance> {
    batch
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let own: HashSet<&str> = inst.sample_positives.iter().map(String::as_str).collect();
            let mut seen: HashSet<&str> = HashSet::new();
            let mut negatives = Vec::new();
            let others = batch
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .flat_map(|(_, o)| std::iter::once(&o.positive).chain(&o.hard_negatives));
            for d in inst.hard_negatives.iter().chain(others) {
                if negatives.len() >= cap {
                    break;
                }
                if !own.contains(d.as_str()) && seen.insert(d.as_str()) {
                    negatives.push(d.clone());
                }
            }
            let own_count = inst
                .hard_negatives
                .iter()
                .filter(|d| !own.contains(d.as_str()))
                .count()
                .min(cap);
            let candidate_negatives = if own_count > 0 {
                negatives[..own_count].to_vec()
            } else {
                negatives.clone()
            };
            PreparedInstance {
                query_id: inst.query_id.clone(),
                positive: inst.positive.clone(),
                negatives,
                candidate_negatives,
            }
        })
        .collect()
}

/// Head outputs for every vector touched by a batch, with gradient slots.
struct Forwards<'a> {
    head: &'a AdapterHead,
    index: HashMap<String, usize>,
    inputs: Vec<&'a [f64]>,
    outputs: Vec<HeadOutput>,
    grads: Vec<Vec<f64>>,
}

impl<'a> Forwards<'a> {
    fn new(head: &'a AdapterHead) -> Self {
        Self {
            head,
            index: HashMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            grads: Vec::new(),
        }
    }

    fn get(&mut self, store: &'a EmbeddingStore, key: String, kind: &'static str) -> Result<usize> {
        if let Some(&i) = self.index.get(&key) {
            return Ok(i);
        }
        let v = store.lookup(&key, kind)?;
        if v.len() != self.head.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.head.dim(),
                actual: v.len(),
            });
        }
        let i = self.inputs.len();
        self.inputs.push(v);
        self.outputs.push(self.head.forward(v));
        self.grads.push(vec![0.0; v.len()]);
        self.index.insert(key, i);
        Ok(i)
    }

    fn out(&self, i: usize) -> &[f64] {
        &self.outputs[i].out
    }

    fn degenerate(&self) -> bool {
        self.outputs.iter().any(|o| o.degenerate)
    }

    /// Loss of the query row `q` against docs `d[0]` (positive) and `d[1..]`.
    /// With `weight`, accumulates weight·dL/d(outputs).
    fn info_nce(&mut self, q: usize, docs: &[usize], tau: f64, weight: Option<f64>) -> f64 {
        let sims: Vec<f64> = docs.iter().map(|&d| dot(self.out(q), self.out(d))).collect();
        let (loss, dsims) = info_nce_sims(&sims, tau);
        if let Some(w) = weight {
            for (&d, &ds) in docs.iter().zip(&dsims) {
                let c = w * ds;
                if c == 0.0 {
                    continue;
                }
                let (hq, hd) = (self.outputs[q].out.clone(), self.outputs[d].out.clone());
                for (g, x) in self.grads[q].iter_mut().zip(&hd) {
                    *g += c * x;
                }
                for (g, x) in self.grads[d].iter_mut().zip(&hq) {
                    *g += c * x;
                }
            }
        }
        loss
    }

    fn backward(&self) -> HeadGrad {
        let mut grad = HeadGrad::zeros(self.head.dim());
        for ((v, fwd), g) in self.inputs.iter().zip(&self.outputs).zip(&self.grads) {
            if g.iter().any(|x| *x != 0.0) {
                self.head.backward(v, fwd, g, &mut grad);
            }
        }
        grad
    }
}

fn doc_rows<'a>(
    fw: &mut Forwards<'a>,
    store: &'a EmbeddingStore,
    positive: &str,
    negatives: &[String],
) -> Result<Vec<usize>> {
    if negatives.is_empty() {
        return Err(Error::invalid(format!(
            "no negatives available for positive {positive:?}; add hard negatives or enlarge the batch"
        )));
    }
    std::iter::once(positive)
        .chain(negatives.iter().map(String::as_str))
        .map(|d| fw.get(store, format!("{DOC_PREFIX}{d}"), "document embedding"))
        .collect()
}

/// Value and gradient of Σ_i weight_i · L_i over a prepared batch, where L_i
/// is InfoNCE against the instance's full negative list. Also returns the
/// per-instance losses and whether any head output was degenerate.
pub fn batch_objective(
    head: &AdapterHead,
    batch: &[PreparedInstance],
    store: &EmbeddingStore,
    tau: f64,
    weights: &[f64],
) -> Result<(f64, Vec<f64>, HeadGrad, bool)> {
    if weights.len() != batch.len() {
        return Err(Error::invalid("one weight per instance required"));
    }
    let mut fw = Forwards::new(head);
    let mut losses = Vec::with_capacity(batch.len());
    let mut total = 0.0;
    for (inst, &w) in batch.iter().zip(weights) {
        let q = fw.get(store, format!("{QUERY_PREFIX}{}", inst.query_id), "query embedding")?;
        let docs = doc_rows(&mut fw, store, &inst.positive, &inst.negatives)?;
        let l = fw.info_nce(q, &docs, tau, Some(w));
        total += w * l;
        losses.push(l);
    }
    Ok((total, losses, fw.backward(), fw.degenerate()))
}

/// Plain and reasoned InfoNCE over an instance's own candidates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateLosses {
    pub plain: f64,
    pub reasoned: Option<f64>,
}

pub fn candidate_losses(
    head: &AdapterHead,
    batch: &[PreparedInstance],
    store: &EmbeddingStore,
    tau: f64,
) -> Result<Vec<CandidateLosses>> {
    let mut fw = Forwards::new(head);
    batch
        .iter()
        .map(|inst| {
            let docs = doc_rows(&mut fw, store, &inst.positive, &inst.candidate_negatives)?;
            let q = fw.get(store, format!("{QUERY_PREFIX}{}", inst.query_id), "query embedding")?;
            let plain = fw.info_nce(q, &docs, tau, None);
            let reasoned = if store.has_reasoning(&inst.query_id) {
                let qr = fw.get(
                    store,
                    format!("{REASONING_PREFIX}{}", inst.query_id),
                    "reasoning embedding",
                )?;
                Some(fw.info_nce(qr, &docs, tau, None))
            } else {
                None
            };
            Ok(CandidateLosses { plain, reasoned })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    WarmupInfonce,
    RiInfonce,
    Infonce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub query_id: String,
    pub positive_id: String,
    /// InfoNCE against the full negative list; the term that is trained.
    pub loss: f64,
    /// InfoNCE over the instance's own candidates.
    pub loss_candidates: f64,
    pub loss_reasoned: Option<f64>,
    pub ri: Option<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub step: usize,
    pub epoch: usize,
    pub mode: StepMode,
    pub lr: f64,
    pub samples: Vec<SampleReport>,
    pub batch_loss: f64,
    pub grad_norm: f64,
    pub degenerate_normalization: bool,
}

/// Head, optimizer state and step counter of a training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub head: AdapterHead,
    adam: Adam,
    step: usize,
    lr_warmup: usize,
}

impl Trainer {
    /// A trainer with an identity head. `total_steps` sizes the learning-rate ramp.
    pub fn new(config: TrainConfig, dim: usize, total_steps: usize) -> Result<Self> {
        config.validate()?;
        let head = AdapterHead::identity(dim);
        let adam = Adam::new(head.param_count(), AdamParams::default());
        let lr_warmup = (config.lr_warmup_ratio * total_steps as f64).ceil() as usize;
        Ok(Self {
            config,
            head,
            adam,
            step: 0,
            lr_warmup,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn mode_for(&self, step: usize) -> StepMode {
        match self.config.objective {
            Objective::Infonce => StepMode::Infonce,
            Objective::RiInfonce if step <= self.config.warmup_steps => StepMode::WarmupInfonce,
            Objective::RiInfonce => StepMode::RiInfonce,
        }
    }

    /// One optimizer step on a batch of instances.
    pub fn ri_infonce_step(
        &mut self,
        batch: &[&Instance],
        store: &EmbeddingStore,
        epoch: usize,
    ) -> Result<BatchReport> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let step = self.step + 1;
        let mode = self.mode_for(step);
        let cfg = &self.config;
        let prepared = assemble_batch(batch, cfg.negatives_per_query);
        let cand = candidate_losses(&self.head, &prepared, store, cfg.tau)?;

        let ri: Vec<Option<f64>> = cand
            .iter()
            .map(|c| {
                c.reasoned
                    .map(|r| reasoning_intensity(c.plain, r, cfg.kappa))
                    .transpose()
            })
            .collect::<Result<_>>()?;
        let weights = match mode {
            StepMode::RiInfonce => {
                let missing: Vec<&str> = prepared
                    .iter()
                    .zip(&ri)
                    .filter(|(_, r)| r.is_none())
                    .map(|(p, _)| p.query_id.as_str())
                    .collect();
                if !missing.is_empty() {
                    return Err(Error::invalid(format!(
                        "step {step}: samples without a reasoning query: {}",
                        missing.join(", ")
                    )));
                }
                batch_weights(&ri.iter().map(|r| r.expect("checked")).collect::<Vec<_>>())?
            }
            _ => vec![1.0 / batch.len() as f64; batch.len()],
        };

        let (batch_loss, losses, grad, degenerate) = batch_objective(&self.head, &prepared, store, cfg.tau, &weights)?;
        let lr = scheduled_lr(cfg.lr, step, self.lr_warmup);
        let grad_norm = grad.norm();
        self.adam.step(&mut self.head, &grad, lr);
        self.step = step;

        let samples = prepared
            .iter()
            .zip(&cand)
            .zip(&ri)
            .zip(losses.iter().zip(&weights))
            .map(|(((p, c), r), (l, w))| SampleReport {
                query_id: p.query_id.clone(),
                positive_id: p.positive.clone(),
                loss: *l,
                loss_candidates: c.plain,
                loss_reasoned: c.reasoned,
                ri: *r,
                weight: *w,
            })
            .collect();
        Ok(BatchReport {
            step,
            epoch,
            mode,
            lr,
            samples,
            batch_loss,
            grad_norm,
            degenerate_normalization: degenerate,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub head: AdapterHead,
    pub reports: Vec<BatchReport>,
}

/// Expands samples, then runs shuffled epochs of batches until the configured
/// number of steps. Deterministic in `config.seed`.
pub fn train(samples: &[TrainingSample], store: &EmbeddingStore, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let instances: Vec<Instance> = samples.iter().flat_map(multi_positive_expand).collect();
    if instances.is_empty() {
        return Err(Error::invalid("no sample has a positive"));
    }
    let steps_per_epoch = instances.len().div_ceil(config.batch_size);
    let total_steps = config.max_steps.unwrap_or(config.epochs * steps_per_epoch);
    let mut trainer = Trainer::new(config.clone(), store.dim(), total_steps)?;
    let mut reports = Vec::with_capacity(total_steps);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut epoch = 0;
    while trainer.steps_taken() < total_steps {
        epoch += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash64(&[
            &config.seed.to_le_bytes(),
            b"train-shuffle",
            &(epoch as u64).to_le_bytes(),
        ]));
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            if trainer.steps_taken() >= total_steps {
                break;
            }
            let batch: Vec<&Instance> = chunk.iter().map(|&i| &instances[i]).collect();
            reports.push(trainer.ri_infonce_step(&batch, store, epoch)?);
        }
    }
    Ok(TrainOutput {
        head: trainer.head,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(q: &str, pos: &[&str], neg: &[&str]) -> TrainingSample {
        TrainingSample {
            query_id: q.into(),
            positives: pos.iter().map(|s| s.to_string()).collect(),
            hard_negatives: neg.iter().map(|s| s.to_string()).collect(),
            reasoning_query: None,
        }
    }

    fn store(with_reasoning: bool) -> EmbeddingStore {
        let mut m = EmbeddingMatrix::new(3).unwrap();
        let rows: [(&str, [f64; 3]); 8] = [
            ("q:q1", [1.0, 0.0, 0.0]),
            ("q:q2", [0.0, 1.0, 0.0]),
            ("d:a", [0.9, 0.1, 0.0]),
            ("d:b", [0.1, 0.9, 0.0]),
            ("d:c", [0.0, 0.0, 1.0]),
            ("d:e", [0.5, 0.5, 0.1]),
            ("qr:q1", [0.9, 0.0, 0.1]),
            ("qr:q2", [0.0, 0.8, 0.2]),
        ];
        for (id, v) in rows.iter().filter(|(id, _)| with_reasoning || !id.starts_with("qr:")) {
            m.push(*id, v).unwrap();
        }
        EmbeddingStore::new(m)
    }

    #[test]
    fn expansion_cardinality_and_sibling_exclusion() {
        let s = sample("q", &["p1", "p2", "p3"], &["n1", "p2", "n2"]);
        let inst = multi_positive_expand(&s);
        assert_eq!(inst.len(), 3);
        for i in &inst {
            assert!(i.hard_negatives.iter().all(|d| !s.positives.contains(d)));
        }
        let single = multi_positive_expand(&sample("q", &["p"], &["n"]));
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].positive, "p");
        assert_eq!(single[0].hard_negatives, ["n"]);
    }

    #[test]
    fn batch_negatives_priority_and_cap() {
        let a = multi_positive_expand(&sample("q1", &["a", "a2"], &["c"]));
        let b = multi_positive_expand(&sample("q2", &["b"], &["e", "c"]));
        let batch: Vec<&Instance> = vec![&a[0], &a[1], &b[0]];
        let prepared = assemble_batch(&batch, 10);
        // Own hard negative first; sibling "a2" and the duplicate "c" skipped.
        assert_eq!(prepared[0].negatives, ["c", "b", "e"]);
        assert_eq!(prepared[0].candidate_negatives, ["c"]);
        assert_eq!(prepared[2].negatives, ["e", "c", "a", "a2"]);
        let capped = assemble_batch(&batch, 2);
        assert!(capped.iter().all(|p| p.negatives.len() <= 2));
        assert_eq!(capped[2].negatives, ["e", "c"]);
    }

    #[test]
    fn warmup_then_ri_weights() {
        let cfg = TrainConfig {
            warmup_steps: 1,
            negatives_per_query: 3,
            ..Default::default()
        };
        let st = store(true);
        let mut t = Trainer::new(cfg, 3, 10).unwrap();
        let s1 = multi_positive_expand(&sample("q1", &["a"], &["c"]));
        let s2 = multi_positive_expand(&sample("q2", &["b"], &["e"]));
        let batch = [&s1[0], &s2[0]];
        let r1 = t.ri_infonce_step(&batch, &st, 1).unwrap();
        assert_eq!(r1.mode, StepMode::WarmupInfonce);
        assert!(r1.samples.iter().all(|s| s.weight == 0.5));
        let r2 = t.ri_infonce_step(&batch, &st, 1).unwrap();
        assert_eq!(r2.mode, StepMode::RiInfonce);
        let ri: Vec<f64> = r2.samples.iter().map(|s| s.ri.unwrap()).collect();
        let total: f64 = ri.iter().sum();
        for (s, r) in r2.samples.iter().zip(&ri) {
            assert!((s.weight - r / total).abs() < 1e-15);
            assert!(*r > 0.0 && *r <= 5.0);
        }
    }

    #[test]
    fn missing_reasoning_is_fatal_after_warmup_only() {
        let cfg = TrainConfig {
            warmup_steps: 1,
            ..Default::default()
        };
        let st = store(false);
        let mut t = Trainer::new(cfg, 3, 10).unwrap();
        let s1 = multi_positive_expand(&sample("q1", &["a"], &["c"]));
        let r = t.ri_infonce_step(&[&s1[0]], &st, 1).unwrap();
        assert_eq!(r.samples[0].ri, None);
        let err = t.ri_infonce_step(&[&s1[0]], &st, 1).unwrap_err();
        assert!(err.to_string().contains("q1"), "{err}");
    }

    #[test]
    fn train_is_deterministic() {
        let samples = vec![sample("q1", &["a"], &["c", "e"]), sample("q2", &["b"], &["c"])];
        let cfg = TrainConfig {
            batch_size: 2,
            epochs: 3,
            warmup_steps: 2,
            ..Default::default()
        };
        let st = store(true);
        let a = train(&samples, &st, &cfg).unwrap();
        let b = train(&samples, &st, &cfg).unwrap();
        assert_eq!(a.head, b.head);
        assert_eq!(a.reports, b.reports);
        assert_eq!(a.reports.len(), 3);
        assert!(train(&[], &st, &cfg).is_err());
    }

    #[test]
    fn dangling_ids_reported() {
        let samples = vec![sample("q1", &["zzz"], &["c"])];
        let err = train(&samples, &store(true), &TrainConfig::default()).unwrap_err();
        assert!(err.to_string().contains("d:zzz"), "{err}");
    }
}
