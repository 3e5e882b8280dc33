//! Verification threshold calibration from impostor-pair similarities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GapError, Result};
use crate::oracle::SimilarityOracle;
use crate::seed::labeled_rng;
use crate::synth::Gallery;

pub const MIN_IMPOSTOR_PAIRS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationThreshold {
    pub threshold: f64,
    pub target_far: f64,
    pub n_impostor_pairs: usize,
    pub seed: u64,
    /// False-accept rate on the calibration sample itself.
    pub calibration_far: f64,
}

/// A photo reference: `(identity, photo index)`.
pub type PhotoRef = (usize, usize);

/// Draws `n` impostor pairs (distinct identities, uniform photos) from the
/// stream labeled by `seed`.
pub fn sample_impostor_pairs(gallery: &Gallery, n: usize, seed: u64) -> Result<Vec<(PhotoRef, PhotoRef)>> {
    let ids = gallery.n_identities();
    if ids < 2 {
        return Err(GapError::invalid("impostor pairs need at least two identities"));
    }
    let mut rng = labeled_rng(seed, "impostor-pairs");
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let a = rng.gen_range(0..ids);
        let mut b = rng.gen_range(0..ids - 1);
        if b >= a {
            b += 1;
        }
        let pa = rng.gen_range(0..gallery.photos_of(a)?.len());
        let pb = rng.gen_range(0..gallery.photos_of(b)?.len());
        pairs.push(((a, pa), (b, pb)));
    }
    Ok(pairs)
}

/// The `(1 - far)` quantile: ascending sort, index `ceil((1 - far) n) - 1`.
/// `far = 0` yields the maximum. Scores strictly above the result are false
/// accepts, so at most `far * n` of the input exceed it.
pub fn quantile_threshold(scores: &[f64], far: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(GapError::invalid("no scores to take a quantile of"));
    }
    if !(0.0..=1.0).contains(&far) {
        return Err(GapError::invalid(format!("target FAR {far} outside [0, 1]")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((1.0 - far) * n as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

/// Fraction of impostor scores strictly above `threshold`.
pub fn false_accept_rate(scores: &[f64], threshold: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().filter(|&&s| s > threshold).count() as f64 / scores.len() as f64
}

pub fn impostor_scores(
    gallery: &Gallery,
    oracle: &dyn SimilarityOracle,
    n_pairs: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let pairs = sample_impostor_pairs(gallery, n_pairs, seed)?;
    let images = pairs
        .iter()
        .map(|&((a, pa), (b, pb))| Ok((gallery.photo(a, pa)?, gallery.photo(b, pb)?)))
        .collect::<Result<Vec<_>>>()?;
    oracle.similarity_batch(&images)
}

pub fn calibrate_threshold(
    gallery: &Gallery,
    oracle: &dyn SimilarityOracle,
    target_far: f64,
    n_impostor_pairs: usize,
    seed: u64,
) -> Result<VerificationThreshold> {
    if gallery.n_identities() < 2 {
        return Err(GapError::invalid("calibration needs at least two identities"));
    }
    if n_impostor_pairs < MIN_IMPOSTOR_PAIRS {
        return Err(GapError::invalid(format!(
            "calibration needs at least {MIN_IMPOSTOR_PAIRS} impostor pairs, got {n_impostor_pairs}"
        )));
    }
    if !(0.0..=1.0).contains(&target_far) {
        return Err(GapError::invalid(format!("target FAR {target_far} outside [0, 1]")));
    }
    let scores = impostor_scores(gallery, oracle, n_impostor_pairs, seed)?;
    let threshold = quantile_threshold(&scores, target_far)?;
    Ok(VerificationThreshold {
        threshold,
        target_far,
        n_impostor_pairs,
        seed,
        calibration_far: false_accept_rate(&scores, threshold),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn far_zero_is_max() {
        let scores = [0.05, -0.2, 0.1, 0.0, 0.07];
        assert_eq!(quantile_threshold(&scores, 0.0).unwrap(), 0.1);
    }

    #[test]
    fn far_half_is_median() {
        let scores = [0.9, 0.1, 0.5, 0.3, 0.7];
        assert_eq!(quantile_threshold(&scores, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn calibration_far_never_exceeds_target() {
        let scores: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
        for far in [0.0, 1e-3, 0.01, 0.2, 0.5, 1.0] {
            let t = quantile_threshold(&scores, far).unwrap();
            assert!(false_accept_rate(&scores, t) <= far + 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(quantile_threshold(&[], 0.1).is_err());
        assert!(quantile_threshold(&[0.1], 1.5).is_err());
    }
}
