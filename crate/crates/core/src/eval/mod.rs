//! Attack evaluation: success rate, retrieval misidentification, baselines,
//! factor ablations, patch geometry sweeps and query-efficiency curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GapError, Result};
use crate::image::Image;
use crate::optimizer::ImagePair;
use crate::oracle::{LedgerSnapshot, Phase, SimilarityOracle, VerificationThreshold};
use crate::patch::{apply_patch, Patch, Placement};
use crate::seed::labeled_rng;
use crate::synth::{gray_rectangle_patch, noise_patch, Gallery};

mod ablation;
mod curve;
mod sweep;

pub use ablation::{run_ablation, AblationCell, AblationGrid, AblationRow, AblationTable};
pub use curve::{queries_vs_asr, CurvePoint, CurveTable};
pub use sweep::{geometry_sweep, MaskKind, SweepRow, SweepSpec, SweepTable};

/// Bumped whenever a report's JSON layout changes.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Pairs scored per oracle batch when evaluating.
const EVAL_CHUNK: usize = 64;

/// The two photos of one identity the patch was optimized on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRef {
    pub identity: usize,
    pub photo_a: usize,
    pub photo_b: usize,
}

impl Default for PairRef {
    fn default() -> Self {
        Self { identity: 0, photo_a: 0, photo_b: 1 }
    }
}

impl PairRef {
    pub fn validate(&self, gallery: &Gallery) -> Result<()> {
        if self.photo_a == self.photo_b {
            return Err(GapError::invalid("optimization pair needs two distinct photos"));
        }
        gallery.photo(self.identity, self.photo_a)?;
        gallery.photo(self.identity, self.photo_b)?;
        Ok(())
    }

    pub fn load(&self, gallery: &Gallery) -> Result<ImagePair> {
        self.validate(gallery)?;
        ImagePair::new(
            gallery.photo(self.identity, self.photo_a)?.clone(),
            gallery.photo(self.identity, self.photo_b)?.clone(),
        )
    }

    fn covers(&self, pair: &GenuinePair) -> bool {
        pair.identity == self.identity
            && ((pair.armed_photo, pair.clean_photo) == (self.photo_a, self.photo_b)
                || (pair.armed_photo, pair.clean_photo) == (self.photo_b, self.photo_a))
    }
}

/// Builds a fresh oracle (with its own ledger) for one independent run.
pub type OracleFactory<'a> = dyn Fn() -> Result<Box<dyn SimilarityOracle>> + Sync + 'a;

/// Everything a run needs besides the optimizer settings.
#[derive(Debug, Clone)]
pub struct AttackSetup<'a> {
    pub gallery: &'a Gallery,
    pub pair: PairRef,
    pub placement: Placement,
    pub threshold: VerificationThreshold,
    pub selection: PairSelection,
}

impl AttackSetup<'_> {
    pub fn validate(&self) -> Result<()> {
        self.placement.validate()?;
        self.pair.validate(self.gallery)
    }
}

/// Which genuine pairs count towards the success rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairSelection {
    /// Pair to leave out, in both orders, unless `include_optimization_pair`.
    pub optimization_pair: Option<PairRef>,
    pub include_optimization_pair: bool,
}

/// Patch worn on `armed_photo`, compared against `clean_photo`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenuinePair {
    pub identity: usize,
    pub armed_photo: usize,
    pub clean_photo: usize,
}

/// Every ordered pair of distinct photos of the same identity, minus the
/// optimization pair unless the selection includes it.
pub fn genuine_pairs(gallery: &Gallery, selection: &PairSelection) -> Result<Vec<GenuinePair>> {
    let mut pairs = Vec::new();
    for identity in 0..gallery.n_identities() {
        let n = gallery.photos_of(identity)?.len();
        for armed_photo in 0..n {
            for clean_photo in (0..n).filter(|&j| j != armed_photo) {
                let pair = GenuinePair { identity, armed_photo, clean_photo };
                let excluded = !selection.include_optimization_pair
                    && selection.optimization_pair.is_some_and(|p| p.covers(&pair));
                if !excluded {
                    pairs.push(pair);
                }
            }
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub identity: usize,
    pub armed_photo: usize,
    pub clean_photo: usize,
    pub clean_similarity: f64,
    pub armed_similarity: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    /// Caller-supplied echo of the run configuration.
    pub config: serde_json::Value,
    pub backend: String,
    pub placement: Placement,
    pub selection: PairSelection,
    pub threshold: VerificationThreshold,
    pub n_pairs: usize,
    pub n_successes: usize,
    pub asr: f64,
    pub pairs: Vec<PairScore>,
    /// Evaluation queries this report spent.
    pub queries: u64,
    pub ledger: LedgerSnapshot,
    pub seeds: Vec<u64>,
}

/// Success count at `threshold` given armed similarities. Success is a
/// strict `sim < threshold`.
pub fn count_successes(armed_similarities: &[f64], threshold: f64) -> usize {
    armed_similarities.iter().filter(|&&s| s < threshold).count()
}

fn score_chunked(oracle: &dyn SimilarityOracle, pairs: &[(&Image, &Image)]) -> Result<Vec<f64>> {
    let chunks: Vec<Result<Vec<f64>>> = pairs.par_chunks(EVAL_CHUNK).map(|c| oracle.similarity_batch(c)).collect();
    let mut out = Vec::with_capacity(pairs.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Wears `patch` on every photo of every identity and checks each selected
/// genuine pair against the verification threshold.
pub fn attack_success_rate(
    gallery: &Gallery,
    patch: &Patch,
    placement: &Placement,
    oracle: &dyn SimilarityOracle,
    threshold: &VerificationThreshold,
    selection: &PairSelection,
) -> Result<EvalReport> {
    placement.validate()?;
    if (patch.width(), patch.height()) != (placement.width, placement.height) {
        return Err(GapError::invalid(format!(
            "patch is {}x{} but placement is {}x{}",
            patch.width(),
            patch.height(),
            placement.width,
            placement.height
        )));
    }
    let pairs = genuine_pairs(gallery, selection)?;
    if pairs.is_empty() {
        return Err(GapError::invalid("no genuine pairs to evaluate"));
    }

    let mut armed: Vec<Vec<Image>> = Vec::with_capacity(gallery.n_identities());
    for identity in 0..gallery.n_identities() {
        armed.push(
            gallery
                .photos_of(identity)?
                .iter()
                .map(|img| apply_patch(img, patch, placement))
                .collect::<Result<_>>()?,
        );
    }

    let mut queries = Vec::with_capacity(2 * pairs.len());
    for p in &pairs {
        let clean = gallery.photo(p.identity, p.clean_photo)?;
        queries.push((gallery.photo(p.identity, p.armed_photo)?, clean));
        queries.push((&armed[p.identity][p.armed_photo], clean));
    }

    oracle.ledger().set_phase(Phase::Evaluation);
    let before = oracle.ledger().evaluation();
    let scores = score_chunked(oracle, &queries)?;
    let spent = oracle.ledger().evaluation() - before;

    let scored: Vec<PairScore> = pairs
        .iter()
        .zip(scores.chunks_exact(2))
        .map(|(p, s)| PairScore {
            identity: p.identity,
            armed_photo: p.armed_photo,
            clean_photo: p.clean_photo,
            clean_similarity: s[0],
            armed_similarity: s[1],
            success: s[1] < threshold.threshold,
        })
        .collect();
    let n_successes = scored.iter().filter(|p| p.success).count();
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: serde_json::Value::Null,
        backend: oracle.backend_name(),
        placement: *placement,
        selection: *selection,
        threshold: *threshold,
        n_pairs: scored.len(),
        n_successes,
        asr: n_successes as f64 / scored.len() as f64,
        pairs: scored,
        queries: spent,
        ledger: oracle.ledger().snapshot(),
        seeds: vec![threshold.seed],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub subject_max: f64,
    /// `None` when the gallery holds no distractors.
    pub distractor_max: Option<f64>,
    pub misidentified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisidentificationReport {
    pub subject: usize,
    pub rate: f64,
    pub probes: Vec<ProbeOutcome>,
}

/// Closed-set retrieval: a probe is misidentified when some distractor photo
/// is strictly more similar to it than every reference photo of `subject`.
/// A gallery without distractors never misidentifies.
pub fn misidentification_rate(
    probes: &[Image],
    gallery: &Gallery,
    subject: usize,
    oracle: &dyn SimilarityOracle,
) -> Result<MisidentificationReport> {
    if subject >= gallery.n_identities() {
        return Err(GapError::invalid(format!(
            "subject {subject} not in a gallery of {} identities",
            gallery.n_identities()
        )));
    }
    if probes.is_empty() {
        return Err(GapError::invalid("no probe images"));
    }

    let mut refs: Vec<(usize, &Image)> = Vec::new();
    for identity in 0..gallery.n_identities() {
        refs.extend(gallery.photos_of(identity)?.iter().map(|img| (identity, img)));
    }
    let queries: Vec<(&Image, &Image)> =
        probes.iter().flat_map(|p| refs.iter().map(move |(_, r)| (p, *r))).collect();

    oracle.ledger().set_phase(Phase::Evaluation);
    let scores = score_chunked(oracle, &queries)?;

    let outcomes: Vec<ProbeOutcome> = scores
        .chunks_exact(refs.len())
        .map(|row| {
            let mut subject_max = f64::NEG_INFINITY;
            let mut distractor_max: Option<f64> = None;
            for ((identity, _), &s) in refs.iter().zip(row) {
                if *identity == subject {
                    subject_max = subject_max.max(s);
                } else {
                    distractor_max = Some(distractor_max.map_or(s, |m| m.max(s)));
                }
            }
            let misidentified = distractor_max.is_some_and(|d| d > subject_max);
            ProbeOutcome { subject_max, distractor_max, misidentified }
        })
        .collect();
    let rate = outcomes.iter().filter(|o| o.misidentified).count() as f64 / outcomes.len() as f64;
    Ok(MisidentificationReport { subject, rate, probes: outcomes })
}

/// The attack patch against the two non-adversarial occluders, all scored on
/// the same pairs with the same threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub schema_version: u32,
    pub attack_asr: f64,
    pub gray_rectangle_asr: f64,
    pub noise_asr: f64,
    pub noise_seed: u64,
    pub attack: EvalReport,
    pub gray_rectangle: EvalReport,
    pub noise: EvalReport,
}

impl BaselineComparison {
    /// Percentage-point lead of the attack over the stronger baseline.
    pub fn margin_pp(&self) -> f64 {
        100.0 * (self.attack_asr - self.gray_rectangle_asr.max(self.noise_asr))
    }
}

pub fn compare_baselines(
    gallery: &Gallery,
    attack_patch: &Patch,
    placement: &Placement,
    oracle: &dyn SimilarityOracle,
    threshold: &VerificationThreshold,
    selection: &PairSelection,
    noise_seed: u64,
) -> Result<BaselineComparison> {
    let gray = gray_rectangle_patch(placement.width, placement.height)?;
    let noise = noise_patch(&mut labeled_rng(noise_seed, "baseline/noise"), placement.width, placement.height)?;
    let attack = attack_success_rate(gallery, attack_patch, placement, oracle, threshold, selection)?;
    let gray_rectangle = attack_success_rate(gallery, &gray, placement, oracle, threshold, selection)?;
    let noise = attack_success_rate(gallery, &noise, placement, oracle, threshold, selection)?;
    Ok(BaselineComparison {
        schema_version: REPORT_SCHEMA_VERSION,
        attack_asr: attack.asr,
        gray_rectangle_asr: gray_rectangle.asr,
        noise_asr: noise.asr,
        noise_seed,
        attack,
        gray_rectangle,
        noise,
    })
}

fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ToyOracle;
    use crate::synth::{build_corpus, PhotoParams};

    fn gallery(ids: usize, photos: usize) -> Gallery {
        Gallery::from_corpus(&build_corpus(1, ids, photos, PhotoParams::default()).unwrap())
    }

    fn threshold(t: f64) -> VerificationThreshold {
        VerificationThreshold { threshold: t, target_far: 1e-3, n_impostor_pairs: 100, seed: 0, calibration_far: 0.0 }
    }

    #[test]
    fn pair_enumeration_excludes_optimization_pair() {
        let g = gallery(3, 4);
        let all = genuine_pairs(&g, &PairSelection::default()).unwrap();
        assert_eq!(all.len(), 3 * 4 * 3);
        let sel = PairSelection { optimization_pair: Some(PairRef::default()), include_optimization_pair: false };
        let some = genuine_pairs(&g, &sel).unwrap();
        assert_eq!(some.len(), all.len() - 2);
        assert!(!some.iter().any(|p| p.identity == 0 && p.armed_photo + p.clean_photo == 1));
        let sel = PairSelection { include_optimization_pair: true, ..sel };
        assert_eq!(genuine_pairs(&g, &sel).unwrap(), all);
    }

    #[test]
    fn asr_extremes_and_half() {
        assert_eq!(count_successes(&[0.5, 0.6], 0.4), 0);
        assert_eq!(count_successes(&[0.1, 0.2], 0.4), 2);
        assert_eq!(count_successes(&[0.1, 0.4, 0.3, 0.9], 0.35), 2);
    }

    #[test]
    fn asr_report_is_consistent() {
        let g = gallery(2, 3);
        let oracle = ToyOracle::new();
        let placement = Placement::default();
        let patch = gray_rectangle_patch(72, 28).unwrap();
        let never = attack_success_rate(&g, &patch, &placement, &oracle, &threshold(-1.0), &PairSelection::default())
            .unwrap();
        assert_eq!((never.asr, never.n_pairs, never.pairs.len()), (0.0, 12, 12));
        assert_eq!(never.queries, 24);
        assert_eq!(oracle.ledger().optimization(), 0);
        let always =
            attack_success_rate(&g, &patch, &placement, &oracle, &threshold(1.5), &PairSelection::default()).unwrap();
        assert_eq!(always.asr, 1.0);
    }

    #[test]
    fn asr_rejects_empty_pair_set_and_size_mismatch() {
        let g = Gallery::from_photos(vec![vec![Image::filled(1, 0.5).unwrap()]; 2]).unwrap();
        let patch = gray_rectangle_patch(72, 28).unwrap();
        let oracle = ToyOracle::new();
        let err = attack_success_rate(&g, &patch, &Placement::default(), &oracle, &threshold(0.5), &PairSelection::default());
        assert!(matches!(err, Err(GapError::InvalidArgument(_))));
        let g = gallery(2, 2);
        let small = gray_rectangle_patch(10, 10).unwrap();
        let err = attack_success_rate(&g, &small, &Placement::default(), &oracle, &threshold(0.5), &PairSelection::default());
        assert!(matches!(err, Err(GapError::InvalidArgument(_))));
    }

    #[test]
    fn clean_probe_is_not_misidentified() {
        let g = gallery(4, 2);
        let probes = vec![g.photo(1, 0).unwrap().clone()];
        let r = misidentification_rate(&probes, &g, 1, &ToyOracle::new()).unwrap();
        assert_eq!(r.rate, 0.0);
        assert!((r.probes[0].subject_max - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_distractors_means_no_misidentification() {
        let g = gallery(2, 2);
        let solo = Gallery::from_photos(vec![g.photos_of(0).unwrap().to_vec()]).unwrap();
        let probes = vec![g.photo(1, 0).unwrap().clone()];
        let r = misidentification_rate(&probes, &solo, 0, &ToyOracle::new()).unwrap();
        assert_eq!(r.rate, 0.0);
        assert_eq!(r.probes[0].distractor_max, None);
    }

    #[test]
    fn absent_subject_is_rejected() {
        let g = gallery(2, 2);
        let probes = vec![g.photo(0, 0).unwrap().clone()];
        assert!(matches!(
            misidentification_rate(&probes, &g, 5, &ToyOracle::new()),
            Err(GapError::InvalidArgument(_))
        ));
    }

    #[test]
    fn probe_from_other_identity_is_misidentified() {
        let g = gallery(3, 2);
        let probes = vec![g.photo(2, 0).unwrap().clone()];
        let r = misidentification_rate(&probes, &g, 0, &ToyOracle::new()).unwrap();
        assert_eq!(r.rate, 1.0);
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
