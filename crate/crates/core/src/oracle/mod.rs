//! The black-box similarity contract and its implementations.
//!
//! An oracle takes two images and returns one cosine similarity score. Every
//! score it hands back is charged to its [`QueryLedger`].

use std::sync::atomic::{AtomicU64, AtomicU8, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{GapError, Result};
use crate::image::Image;

pub mod remote;
pub mod threshold;
pub mod toy;

pub use remote::{RemoteOracle, RetryPolicy, ThrottleConfig};
pub use threshold::{calibrate_threshold, quantile_threshold, VerificationThreshold, MIN_IMPOSTOR_PAIRS};
pub use toy::{toy_embed, ToyOracle};

/// Raw feature norms at or below this are treated as zero.
pub const DEGENERATE_NORM: f64 = 1e-10;

/// Unit-norm feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// L2-normalizes `raw`. A (numerically) all-zero vector has no direction
    /// and is an error.
    pub fn normalize(raw: Vec<f64>) -> Result<Self> {
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > DEGENERATE_NORM) || !norm.is_finite() {
            return Err(GapError::DegenerateEmbedding);
        }
        Ok(Self(raw.into_iter().map(|v| v / norm).collect()))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|v| -v).collect())
    }
}

/// Dot product of two unit vectors, clamped against rounding to `[-1, 1]`.
pub fn cosine(a: &Embedding, b: &Embedding) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    dot.clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Optimization,
    Evaluation,
}

/// Monotone query counters. Nothing here ever resets.
#[derive(Debug, Default)]
pub struct QueryLedger {
    phase: AtomicU8,
    optimization: AtomicU64,
    evaluation: AtomicU64,
    embeddings_computed: AtomicU64,
    cache_hits: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub total_queries: u64,
    pub optimization_queries: u64,
    pub evaluation_queries: u64,
    /// Forward passes the backend actually ran (cache-adjusted cost).
    pub embeddings_computed: u64,
    pub cache_hits: u64,
}

impl QueryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_phase(&self, phase: Phase) {
        self.phase.store(phase as u8, Ordering::SeqCst);
    }

    pub fn phase(&self) -> Phase {
        match self.phase.load(Ordering::SeqCst) {
            0 => Phase::Optimization,
            _ => Phase::Evaluation,
        }
    }

    pub fn record_queries(&self, n: u64) {
        match self.phase() {
            Phase::Optimization => self.optimization.fetch_add(n, Ordering::SeqCst),
            Phase::Evaluation => self.evaluation.fetch_add(n, Ordering::SeqCst),
        };
    }

    pub fn record_embeddings(&self, computed: u64, cache_hits: u64) {
        self.embeddings_computed.fetch_add(computed, Ordering::Relaxed);
        self.cache_hits.fetch_add(cache_hits, Ordering::Relaxed);
    }

    pub fn total(&self) -> u64 {
        self.optimization() + self.evaluation()
    }

    pub fn optimization(&self) -> u64 {
        self.optimization.load(Ordering::SeqCst)
    }

    pub fn evaluation(&self) -> u64 {
        self.evaluation.load(Ordering::SeqCst)
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            total_queries: self.total(),
            optimization_queries: self.optimization(),
            evaluation_queries: self.evaluation(),
            embeddings_computed: self.embeddings_computed.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
        }
    }
}

pub trait SimilarityOracle: Send + Sync {
    /// One query: cosine similarity of the two images, in `[-1, 1]`.
    fn similarity(&self, a: &Image, b: &Image) -> Result<f64>;

    /// `n` queries, results in input order.
    fn similarity_batch(&self, pairs: &[(&Image, &Image)]) -> Result<Vec<f64>> {
        pairs.iter().map(|(a, b)| self.similarity(a, b)).collect()
    }

    fn ledger(&self) -> &QueryLedger;

    fn queries_used(&self) -> u64 {
        self.ledger().total()
    }

    /// Hint that `image` will be reused as a clean reference. Backends that
    /// can memoize its embedding may do so; the query count is unaffected.
    fn pin_reference(&self, _image: &Image) {}

    fn backend_name(&self) -> String;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_extremes() {
        let e = Embedding::normalize(vec![3.0, 4.0, 0.0]).unwrap();
        assert_eq!(cosine(&e, &e), 1.0);
        assert_eq!(cosine(&e, &e.negated()), -1.0);
        let o = Embedding::normalize(vec![0.0, 0.0, 2.0]).unwrap();
        assert_eq!(cosine(&e, &o), 0.0);
    }

    #[test]
    fn zero_vector_is_degenerate() {
        assert!(matches!(Embedding::normalize(vec![0.0; 4]), Err(GapError::DegenerateEmbedding)));
    }

    #[test]
    fn ledger_tracks_phases() {
        let l = QueryLedger::new();
        l.record_queries(4);
        l.set_phase(Phase::Evaluation);
        l.record_queries(3);
        let s = l.snapshot();
        assert_eq!((s.optimization_queries, s.evaluation_queries, s.total_queries), (4, 3, 7));
    }
}
