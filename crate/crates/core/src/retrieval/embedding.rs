//! Dense vectors keyed by id, the backends that produce them, and the binary
//! file format for precomputed vectors.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  b"RFEMBED1"
//! dim     u32
//! count   u64
//! count × { id_len u32, id UTF-8 bytes, dim × f32 }
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{HttpTransport, LlmError, RetryPolicy};
use crate::util::fnv1a64;

pub const EMBEDDING_MAGIC: &[u8; 8] = b"RFEMBED1";

/// Norms below this are treated as zero.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    normalized: bool,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dim must be > 0"));
        }
        Ok(Self {
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            normalized: false,
        })
    }

    /// Builds a matrix from `(id, vector)` rows. All rows must share one length.
    pub fn from_rows<I, S>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut rows = rows.into_iter().peekable();
        let dim = match rows.peek() {
            Some((_, v)) => v.len(),
            None => return Err(Error::invalid("cannot infer dim from zero rows")),
        };
        let mut m = Self::new(dim)?;
        for (id, v) in rows {
            m.push(id, &v)?;
        }
        Ok(m)
    }

    pub fn push(&mut self, id: impl Into<String>, vector: &[f64]) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if self.index.contains_key(&id) {
            return Err(Error::invalid(format!("duplicate embedding id {id:?}")));
        }
        if self.normalized {
            check_unit(&id, vector)?;
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.position(id).map(|i| self.row(i))
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .zip(self.data.chunks_exact(self.dim))
            .map(|(id, v)| (id.as_str(), v))
    }

    /// L2-normalizes every row in place. Zero rows are an error.
    pub fn normalize(&mut self) -> Result<()> {
        let dim = self.dim;
        for (i, row) in self.data.chunks_exact_mut(dim).enumerate() {
            let norm = l2_norm(row);
            if norm < NORM_EPS {
                return Err(Error::invalid(format!(
                    "cannot normalize zero vector for id {:?}",
                    self.ids[i]
                )));
            }
            row.iter_mut().for_each(|x| *x /= norm);
        }
        self.normalized = true;
        Ok(())
    }

    /// Applies `f` to every row, producing a new matrix with the same ids.
    pub fn map_rows(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut out = Self::new(self.dim)?;
        for (id, v) in self.rows() {
            out.push(id, &f(v))?;
        }
        Ok(out)
    }

    /// Rows whose id satisfies `keep`, in original order.
    pub fn subset(&self, mut keep: impl FnMut(&str) -> bool) -> Self {
        let mut out = Self::new(self.dim).expect("dim already validated");
        out.normalized = self.normalized;
        for (id, v) in self.rows() {
            if keep(id) {
                out.index.insert(id.to_string(), out.ids.len());
                out.ids.push(id.to_string());
                out.data.extend_from_slice(v);
            }
        }
        out
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let ctx = || format!("writing {}", path.display());
        let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
        let mut w = BufWriter::new(file);
        let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(ctx(), e));
        put(EMBEDDING_MAGIC)?;
        put(&(self.dim as u32).to_le_bytes())?;
        put(&(self.len() as u64).to_le_bytes())?;
        for (id, v) in self.rows() {
            put(&(id.len() as u32).to_le_bytes())?;
            put(id.as_bytes())?;
            for &x in v {
                put(&(x as f32).to_le_bytes())?;
            }
        }
        w.flush().map_err(|e| Error::io(ctx(), e))
    }

    /// Reads the binary format. Vectors are widened from f32; the result is
    /// not marked normalized even if the stored rows happen to be unit length.
    pub fn read_from(path: &Path) -> Result<Self> {
        let ctx = || format!("reading {}", path.display());
        let file = File::open(path).map_err(|e| Error::io(ctx(), e))?;
        let mut r = BufReader::new(file);
        let mut take = |n: usize| -> Result<Vec<u8>> {
            let mut buf = vec![0u8; n];
            r.read_exact(&mut buf).map_err(|e| Error::io(ctx(), e))?;
            Ok(buf)
        };
        if take(8)?.as_slice() != EMBEDDING_MAGIC {
            return Err(Error::invalid(format!(
                "{} is not an embedding file (bad magic)",
                path.display()
            )));
        }
        let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let mut m = Self::new(dim)?;
        for _ in 0..count {
            let id_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let id = String::from_utf8(take(id_len)?).map_err(|_| Error::invalid("embedding id is not UTF-8"))?;
            let raw = take(dim * 4)?;
            let v: Vec<f64> = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect();
            m.push(id, &v)?;
        }
        Ok(m)
    }
}

fn check_unit(id: &str, v: &[f64]) -> Result<()> {
    let n = l2_norm(v);
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("row {id:?} has norm {n}, expected unit length")));
    }
    Ok(())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Anything that turns `(id, text)` pairs into vectors of one fixed length.
pub trait EmbeddingBackend: Send + Sync {
    fn embed(&self, items: &[(&str, &str)]) -> Result<Vec<Vec<f64>>>;
}

/// Offline embedder: signed feature hashing of lowercase character 3-grams.
/// Texts sharing many 3-grams land close together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let chars: Vec<char> = text.to_lowercase().chars().collect();
        let mut v = vec![0.0; self.dim];
        let mut add = |gram: &[char]| {
            let s: String = gram.iter().collect();
            let h = fnv1a64(self.seed, s.as_bytes());
            let idx = (h % self.dim as u64) as usize;
            v[idx] += if h >> 63 == 1 { -1.0 } else { 1.0 };
        };
        if chars.len() < 3 {
            add(&chars);
        } else {
            chars.windows(3).for_each(&mut add);
        }
        if l2_norm(&v) < NORM_EPS {
            // Every gram cancelled out; pin the text to one axis so it stays embeddable.
            let h = fnv1a64(self.seed, text.as_bytes());
            v[(h % self.dim as u64) as usize] = 1.0;
        }
        v
    }
}

impl EmbeddingBackend for HashEmbedder {
    fn embed(&self, items: &[(&str, &str)]) -> Result<Vec<Vec<f64>>> {
        Ok(items.iter().map(|(_, t)| self.embed_text(t)).collect())
    }
}

/// Looks vectors up by id in a precomputed matrix; the text is ignored.
pub struct PrecomputedBackend {
    pub matrix: EmbeddingMatrix,
}

impl PrecomputedBackend {
    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self {
            matrix: EmbeddingMatrix::read_from(path)?,
        })
    }
}

impl EmbeddingBackend for PrecomputedBackend {
    fn embed(&self, items: &[(&str, &str)]) -> Result<Vec<Vec<f64>>> {
        items
            .iter()
            .map(|(id, _)| {
                self.matrix
                    .get(id)
                    .map(<[f64]>::to_vec)
                    .ok_or_else(|| Error::DanglingId {
                        kind: "embedding",
                        id: id.to_string(),
                    })
            })
            .collect()
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f64>,
}

/// OpenAI-compatible `POST /v1/embeddings` endpoint, same retry policy as chat.
pub struct RemoteEmbedder {
    api_base: String,
    model: String,
    batch_size: usize,
    transport: HttpTransport,
}

impl RemoteEmbedder {
    pub fn new(api_base: impl Into<String>, api_key: Option<String>, model: impl Into<String>) -> Self {
        Self {
            api_base: api_base.into().trim_end_matches('/').to_string(),
            model: model.into(),
            batch_size: 64,
            transport: HttpTransport::new(api_key, Duration::from_secs(120), RetryPolicy::default()),
        }
    }

    pub fn with_policy(mut self, api_key: Option<String>, timeout: Duration, retry: RetryPolicy) -> Self {
        self.transport = HttpTransport::new(api_key, timeout, retry);
        self
    }

    fn url(&self) -> String {
        if self.api_base.ends_with("/v1") {
            format!("{}/embeddings", self.api_base)
        } else {
            format!("{}/v1/embeddings", self.api_base)
        }
    }
}

impl EmbeddingBackend for RemoteEmbedder {
    fn embed(&self, items: &[(&str, &str)]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(self.batch_size) {
            let body = EmbeddingRequest {
                model: &self.model,
                input: chunk.iter().map(|(_, t)| *t).collect(),
            };
            let text = self.transport.post_json(&self.url(), &body)?;
            let mut resp: EmbeddingResponse =
                serde_json::from_str(&text).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
            if resp.data.len() != chunk.len() {
                return Err(LlmError::MalformedResponse(format!(
                    "asked for {} embeddings, got {}",
                    chunk.len(),
                    resp.data.len()
                ))
                .into());
            }
            resp.data.sort_by_key(|d| d.index);
            out.extend(resp.data.into_iter().map(|d| d.embedding));
        }
        Ok(out)
    }
}

/// Embeds every `(id, text)` pair, optionally L2-normalizing the rows.
pub fn embed_all<'a, I>(texts: I, backend: &dyn EmbeddingBackend, normalize: bool) -> Result<EmbeddingMatrix>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let items: Vec<(&str, &str)> = texts.into_iter().collect();
    let vectors = backend.embed(&items)?;
    if vectors.len() != items.len() {
        return Err(Error::invalid(format!(
            "backend returned {} vectors for {} texts",
            vectors.len(),
            items.len()
        )));
    }
    let dim = match vectors.first() {
        Some(v) => v.len(),
        None => return Err(Error::invalid("nothing to embed")),
    };
    let mut m = EmbeddingMatrix::new(dim)?;
    for ((id, _), v) in items.iter().zip(&vectors) {
        m.push(*id, v)?;
    }
    if normalize {
        m.normalize()?;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mock_same_text_same_vector() {
        let e = HashEmbedder::new(64, 3);
        let m = embed_all([("a", "hello world"), ("b", "hello world")], &e, true).unwrap();
        assert_eq!(m.get("a").unwrap(), m.get("b").unwrap());
    }

    #[test]
    fn mock_is_text_sensitive() {
        let e = HashEmbedder::new(64, 3);
        assert_ne!(e.embed_text("protein folding"), e.embed_text("stock market"));
    }

    #[test]
    fn precomputed_file_round_trip() {
        let m = EmbeddingMatrix::from_rows([
            ("x", vec![1.0, 0.0, 0.5, -2.0]),
            ("y", vec![0.0, 1.0, 0.25, 3.0]),
            ("zé", vec![0.125, -1.0, 0.0, 0.0]),
        ])
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        m.write_to(f.path()).unwrap();
        let back = EmbeddingMatrix::read_from(f.path()).unwrap();
        assert_eq!(back.dim(), 4);
        assert_eq!(back.len(), 3);
        // Values chosen to be exactly representable in f32.
        assert_eq!(back, m);

        let backend = PrecomputedBackend { matrix: back };
        let out = embed_all([("y", "ignored")], &backend, false).unwrap();
        assert_eq!(out.get("y").unwrap(), &[0.0, 1.0, 0.25, 3.0]);
        assert!(embed_all([("nope", "")], &backend, false).is_err());
    }

    #[test]
    fn file_header_layout() {
        let m = EmbeddingMatrix::from_rows([("ab", vec![1.0, 2.0])]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        m.write_to(f.path()).unwrap();
        let bytes = std::fs::read(f.path()).unwrap();
        assert_eq!(&bytes[..8], b"RFEMBED1");
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..20], &1u64.to_le_bytes());
        assert_eq!(&bytes[20..24], &2u32.to_le_bytes());
        assert_eq!(&bytes[24..26], b"ab");
        assert_eq!(&bytes[26..30], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 34);
    }

    #[test]
    fn bad_magic_rejected() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), b"NOTMAGIC\0\0\0\0").unwrap();
        assert!(EmbeddingMatrix::read_from(f.path()).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let err = EmbeddingMatrix::from_rows([("a", vec![1.0, 0.0]), ("b", vec![1.0])]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, actual: 1 }));
    }

    #[test]
    fn zero_vector_cannot_be_normalized() {
        let mut m = EmbeddingMatrix::from_rows([("a", vec![0.0, 0.0])]).unwrap();
        assert!(m.normalize().is_err());
    }

    proptest! {
        #[test]
        fn normalized_rows_have_unit_norm(texts in proptest::collection::vec(".{1,60}", 1..20), dim in 4usize..128) {
            let e = HashEmbedder::new(dim, 11);
            let ids: Vec<String> = (0..texts.len()).map(|i| format!("t{i}")).collect();
            let m = embed_all(
                ids.iter().map(String::as_str).zip(texts.iter().map(String::as_str)),
                &e,
                true,
            ).unwrap();
            for (_, v) in m.rows() {
                prop_assert!((l2_norm(v) - 1.0).abs() < 1e-9);
            }
        }
    }
}
