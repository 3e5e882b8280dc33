//! Desk-scale stand-in for a face embedding network.
//!
//! Pipeline: channel-mean grayscale, 7×7 average pooling of the 112×112 crop
//! down to 16×16, flatten row-major to 256 values, multiply by a fixed 64×256
//! projection, L2-normalize.
//!
//! The projection is generated by SplitMix64 seeded with
//! [`TOY_PROJECTION_SEED`]: entry `k` (row-major) takes the `k`-th output `x`,
//! maps it to `2 * (x >> 11) / 2^53 - 1`, and each row is then shifted to zero
//! mean. Zero-mean rows make the embedding blind to global brightness. Any
//! reimplementation following these steps reproduces the matrix bit for bit.

use std::sync::{OnceLock, RwLock};

use crate::error::{GapError, Result};
use crate::image::{Image, IMAGE_SIZE};
use crate::oracle::{cosine, Embedding, QueryLedger, SimilarityOracle};

pub const TOY_PROJECTION_SEED: u64 = 0x6761_705f_746f_7921;
pub const EMBEDDING_DIM: usize = 64;
pub const POOLED_SIDE: usize = 16;
pub const POOL: usize = IMAGE_SIZE / POOLED_SIDE;
pub const FEATURE_DIM: usize = POOLED_SIDE * POOLED_SIDE;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Row-major `EMBEDDING_DIM × FEATURE_DIM` projection matrix.
pub fn projection() -> &'static [f64] {
    static MATRIX: OnceLock<Vec<f64>> = OnceLock::new();
    MATRIX.get_or_init(|| {
        let mut state = TOY_PROJECTION_SEED;
        let mut m: Vec<f64> = (0..EMBEDDING_DIM * FEATURE_DIM)
            .map(|_| 2.0 * ((splitmix64(&mut state) >> 11) as f64 / (1u64 << 53) as f64) - 1.0)
            .collect();
        for row in m.chunks_exact_mut(FEATURE_DIM) {
            let mean = row.iter().sum::<f64>() / FEATURE_DIM as f64;
            row.iter_mut().for_each(|v| *v -= mean);
        }
        m
    })
}

fn pooled_features(image: &Image) -> Vec<f64> {
    let ch = image.channels();
    let px = image.pixels();
    let mut pooled = vec![0.0; FEATURE_DIM];
    for r in 0..IMAGE_SIZE {
        let pr = r / POOL;
        for c in 0..IMAGE_SIZE {
            let base = (r * IMAGE_SIZE + c) * ch;
            let gray = if ch == 1 { px[base] } else { px[base..base + ch].iter().sum::<f64>() / ch as f64 };
            pooled[pr * POOLED_SIDE + c / POOL] += gray;
        }
    }
    let area = (POOL * POOL) as f64;
    pooled.iter_mut().for_each(|v| *v /= area);
    pooled
}

pub fn toy_embed(image: &Image) -> Result<Embedding> {
    if !image.is_aligned_size() {
        return Err(GapError::invalid(format!(
            "toy embedder expects {IMAGE_SIZE}x{IMAGE_SIZE}, got {}x{}",
            image.width(),
            image.height()
        )));
    }
    let features = pooled_features(image);
    let raw = projection()
        .chunks_exact(FEATURE_DIM)
        .map(|row| row.iter().zip(&features).map(|(w, f)| w * f).sum())
        .collect();
    Embedding::normalize(raw)
}

/// In-process oracle backed by [`toy_embed`].
#[derive(Debug, Default)]
pub struct ToyOracle {
    ledger: QueryLedger,
    cache_enabled: bool,
    pinned: RwLock<Vec<(Image, Embedding)>>,
}

impl ToyOracle {
    pub fn new() -> Self {
        Self::default()
    }

    /// Enables memoizing embeddings of images passed to `pin_reference`.
    pub fn with_reference_cache(mut self, enabled: bool) -> Self {
        self.cache_enabled = enabled;
        self
    }

    fn embed_counted(&self, image: &Image) -> Result<Embedding> {
        if self.cache_enabled {
            let pinned = self.pinned.read().expect("cache lock");
            if let Some((_, e)) = pinned.iter().find(|(img, _)| img == image) {
                self.ledger.record_embeddings(0, 1);
                return Ok(e.clone());
            }
        }
        let e = toy_embed(image)?;
        self.ledger.record_embeddings(1, 0);
        Ok(e)
    }
}

impl SimilarityOracle for ToyOracle {
    fn similarity(&self, a: &Image, b: &Image) -> Result<f64> {
        let ea = self.embed_counted(a)?;
        let eb = self.embed_counted(b)?;
        self.ledger.record_queries(1);
        Ok(cosine(&ea, &eb))
    }

    fn ledger(&self) -> &QueryLedger {
        &self.ledger
    }

    fn pin_reference(&self, image: &Image) {
        if !self.cache_enabled {
            return;
        }
        let mut pinned = self.pinned.write().expect("cache lock");
        if pinned.iter().any(|(img, _)| img == image) {
            return;
        }
        if let Ok(e) = toy_embed(image) {
            pinned.push((image.clone(), e));
        }
    }

    fn backend_name(&self) -> String {
        "toy".to_string()
    }
}
