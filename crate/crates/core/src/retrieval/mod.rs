//! Embedding backends, exact nearest-neighbour search, candidate mining and BM25.

pub mod bm25;
pub mod embedding;
pub mod search;

pub use bm25::{bm25_score, Bm25Index, Bm25Params};
pub use embedding::{
    dot, embed_all, l2_norm, EmbeddingBackend, EmbeddingMatrix, HashEmbedder, PrecomputedBackend, RemoteEmbedder,
};
pub use search::{mine_all, mine_candidates, rank_order, top_k, top_k_by, CandidateSet, ScoredDoc, DEFAULT_MINE_K};
