//! Run configuration: TOML file, then `RF_*` environment variables, then flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use reason_forge::annotate::{AnnotationMode, DEFAULT_THRESHOLD};
use reason_forge::llm::{
    LlmClient, MockBackend, RemoteBackend, RetryPolicy, Sampling, ENV_API_BASE, ENV_API_KEY, ENV_MODEL,
};
use reason_forge::retrieval::{EmbeddingBackend, HashEmbedder, PrecomputedBackend, RemoteEmbedder, DEFAULT_MINE_K};
use reason_forge::trainer::{Objective, TrainConfig};
use reason_forge::util::stage_seed;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Run seed. Every stage derives its own sub-seed from it.
    pub seed: u64,
    /// Fallback input/output paths keyed by flag name (`corpus`, `queries`, ...).
    pub paths: BTreeMap<String, PathBuf>,
    pub llm: LlmConfig,
    pub embedding: EmbeddingConfig,
    pub synth: SynthSection,
    pub mine: MineSection,
    pub annotate: AnnotateSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub contaminate: ContaminateSection,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmBackendKind {
    #[default]
    Remote,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub backend: LlmBackendKind,
    pub api_base: Option<String>,
    /// Never written to manifests.
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub parallelism: usize,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub retry_base_ms: u64,
    pub filter_temperature: f64,
    pub generation_temperature: f64,
    pub annotation_temperature: f64,
    pub reasoning_temperature: f64,
    pub reasoning_max_new_tokens: u32,
}

impl Default for LlmConfig {
    fn default() -> Self {
        let s = Sampling::default();
        Self {
            backend: LlmBackendKind::Remote,
            api_base: None,
            api_key: None,
            model: None,
            parallelism: 8,
            timeout_secs: 120,
            max_attempts: 5,
            retry_base_ms: 1000,
            filter_temperature: s.filter_temperature,
            generation_temperature: s.generation_temperature,
            annotation_temperature: s.annotation_temperature,
            reasoning_temperature: s.reasoning_temperature,
            reasoning_max_new_tokens: s.reasoning_max_new_tokens,
        }
    }
}

impl LlmConfig {
    pub fn sampling(&self) -> Sampling {
        Sampling {
            filter_temperature: self.filter_temperature,
            generation_temperature: self.generation_temperature,
            annotation_temperature: self.annotation_temperature,
            reasoning_temperature: self.reasoning_temperature,
            reasoning_max_new_tokens: self.reasoning_max_new_tokens,
        }
    }

    fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts.max(1),
            base_delay: Duration::from_millis(self.retry_base_ms),
            factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingBackendKind {
    #[default]
    Hash,
    Precomputed,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub backend: EmbeddingBackendKind,
    /// Hash backend only.
    pub dim: usize,
    /// Hash backend seed; derived from the run seed when unset.
    pub seed: Option<u64>,
    /// Precomputed backend: an embedding file keyed `q:<id>`, `qr:<id>`, `d:<id>`.
    pub path: Option<PathBuf>,
    /// Remote backend; falls back to the `llm` endpoint and key.
    pub api_base: Option<String>,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub normalize: bool,
    /// Recorded for provenance; the hash and precomputed backends ignore them.
    pub max_query_tokens: usize,
    pub max_doc_tokens: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            backend: EmbeddingBackendKind::Hash,
            dim: 64,
            seed: None,
            path: None,
            api_base: None,
            api_key: None,
            model: None,
            normalize: true,
            max_query_tokens: 512,
            max_doc_tokens: 8192,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub queries_per_doc: usize,
    pub max_docs: Option<usize>,
    pub filter: bool,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            queries_per_doc: 1,
            max_docs: None,
            filter: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MineSection {
    pub k: usize,
    /// Restrict each query's candidates to documents of its own task.
    pub same_task: bool,
}

impl Default for MineSection {
    fn default() -> Self {
        Self {
            k: DEFAULT_MINE_K,
            same_task: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateSection {
    pub mode: AnnotationMode,
    pub threshold: u8,
}

impl Default for AnnotateSection {
    fn default() -> Self {
        Self {
            mode: AnnotationMode::Reasoning,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Training hyper-parameters. The shuffle seed comes from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub tau: f64,
    pub kappa: f64,
    pub warmup_steps: usize,
    pub lr: f64,
    pub lr_warmup_ratio: f64,
    pub batch_size: usize,
    pub negatives_per_query: usize,
    pub epochs: usize,
    pub max_steps: Option<usize>,
    pub objective: Objective,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            tau: d.tau,
            kappa: d.kappa,
            warmup_steps: d.warmup_steps,
            lr: d.lr,
            lr_warmup_ratio: d.lr_warmup_ratio,
            batch_size: d.batch_size,
            negatives_per_query: d.negatives_per_query,
            epochs: d.epochs,
            max_steps: d.max_steps,
            objective: d.objective,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            tau: self.tau,
            kappa: self.kappa,
            warmup_steps: self.warmup_steps,
            lr: self.lr,
            lr_warmup_ratio: self.lr_warmup_ratio,
            batch_size: self.batch_size,
            negatives_per_query: self.negatives_per_query,
            seed,
            epochs: self.epochs,
            max_steps: self.max_steps,
            objective: self.objective,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub k: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { k: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContaminateSection {
    pub top_n: usize,
    pub audit: bool,
}

impl Default for ContaminateSection {
    fn default() -> Self {
        Self {
            top_n: reason_forge::contamination::DEFAULT_TOP_N,
            audit: false,
        }
    }
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("reading config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Applies `RF_API_BASE`, `RF_API_KEY` and `RF_MODEL` over file values.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get(ENV_API_BASE) {
            self.llm.api_base = Some(v);
        }
        if let Some(v) = get(ENV_MODEL) {
            self.llm.model = Some(v);
        }
        self.apply_secret_env(get);
    }

    /// Keys are not stored in manifests, so reruns read them from the environment.
    pub fn apply_secret_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get(ENV_API_KEY) {
            self.llm.api_key = Some(v);
        }
    }

    /// A path from the flag, else from `[paths]`.
    pub fn path(&self, flag: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
        flag.clone()
            .or_else(|| self.paths.get(name).cloned())
            .ok_or_else(|| CliError::Usage(format!("missing --{name} (flag or [paths].{name})")))
    }

    pub fn opt_path(&self, flag: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
        flag.clone().or_else(|| self.paths.get(name).cloned())
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        stage_seed(self.seed, stage)
    }

    pub fn llm_client(&self) -> Result<LlmClient, CliError> {
        let c = &self.llm;
        let client = match c.backend {
            LlmBackendKind::Mock => LlmClient::new(
                Arc::new(MockBackend::new(self.stage_seed("llm-mock"))),
                c.model.clone().unwrap_or_else(|| "mock".into()),
            ),
            LlmBackendKind::Remote => {
                let base = c.api_base.clone().ok_or_else(|| {
                    CliError::Usage(format!(
                        "llm.backend = \"remote\" needs llm.api_base, {ENV_API_BASE} or --api-base"
                    ))
                })?;
                let model = c.model.clone().ok_or_else(|| {
                    CliError::Usage(format!(
                        "llm.backend = \"remote\" needs llm.model, {ENV_MODEL} or --model"
                    ))
                })?;
                let backend =
                    RemoteBackend::with_policy(base, c.api_key.clone(), Duration::from_secs(c.timeout_secs), c.retry());
                LlmClient::new(Arc::new(backend), model)
            }
        };
        Ok(client.with_parallelism(c.parallelism).with_sampling(c.sampling()))
    }

    pub fn embedding_backend(&self) -> Result<Box<dyn EmbeddingBackend>, CliError> {
        let e = &self.embedding;
        Ok(match e.backend {
            EmbeddingBackendKind::Hash => {
                if e.dim == 0 {
                    return Err(CliError::Usage("embedding.dim must be at least 1".into()));
                }
                let seed = e.seed.unwrap_or_else(|| self.stage_seed("embedding"));
                Box::new(HashEmbedder::new(e.dim, seed))
            }
            EmbeddingBackendKind::Precomputed => {
                let path = e.path.as_ref().ok_or_else(|| {
                    CliError::Usage("embedding.backend = \"precomputed\" needs embedding.path".into())
                })?;
                Box::new(PrecomputedBackend::open(path)?)
            }
            EmbeddingBackendKind::Remote => {
                let base = e
                    .api_base
                    .clone()
                    .or_else(|| self.llm.api_base.clone())
                    .ok_or_else(|| CliError::Usage("embedding.backend = \"remote\" needs embedding.api_base".into()))?;
                let model = e
                    .model
                    .clone()
                    .ok_or_else(|| CliError::Usage("embedding.backend = \"remote\" needs embedding.model".into()))?;
                let key = e.api_key.clone().or_else(|| self.llm.api_key.clone());
                Box::new(RemoteEmbedder::new(base, key.clone(), model).with_policy(
                    key,
                    Duration::from_secs(self.llm.timeout_secs),
                    self.llm.retry(),
                ))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c: Config = toml::from_str("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.train.tau, 0.02);
        assert_eq!(c.eval.k, 10);
        assert_eq!(c.mine.k, 100);
    }

    #[test]
    fn sections_parse() {
        let c: Config = toml::from_str(
            r#"
            seed = 7
            [paths]
            corpus = "docs.jsonl"
            [llm]
            backend = "mock"
            annotation_temperature = 0.5
            [train]
            tau = 0.05
            objective = "infonce"
            max_steps = 300
            "#,
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.llm.backend, LlmBackendKind::Mock);
        assert_eq!(c.llm.annotation_temperature, 0.5);
        assert_eq!(c.llm.generation_temperature, 1.0);
        assert_eq!(c.train.objective, Objective::Infonce);
        assert_eq!(c.train.max_steps, Some(300));
        assert_eq!(c.path(&None, "corpus").unwrap(), PathBuf::from("docs.jsonl"));
        assert_eq!(c.path(&Some("x".into()), "corpus").unwrap(), PathBuf::from("x"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<Config>("sed = 1").is_err());
        assert!(toml::from_str::<Config>("[train]\ntua = 0.1").is_err());
        assert!(toml::from_str::<Config>("[llm]\ntemperature = 0.1").is_err());
    }

    #[test]
    fn env_overrides_file_and_key_is_not_serialized() {
        let mut c: Config = toml::from_str("[llm]\napi_base = \"http://file\"\napi_key = \"k1\"").unwrap();
        c.apply_env(|k| match k {
            "RF_API_BASE" => Some("http://env".into()),
            "RF_API_KEY" => Some("secret".into()),
            _ => None,
        });
        assert_eq!(c.llm.api_base.as_deref(), Some("http://env"));
        assert_eq!(c.llm.api_key.as_deref(), Some("secret"));
        let json = serde_json::to_string(&c).unwrap();
        assert!(!json.contains("secret"));
    }

    #[test]
    fn remote_without_endpoint_is_a_usage_error() {
        let c = Config::default();
        assert!(matches!(c.llm_client(), Err(CliError::Usage(_))));
    }
}
