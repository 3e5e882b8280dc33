//! Greedy zero-order patch search.
//!
//! Each iteration draws `batch_size` random blobs, adds each to the current
//! patch, scores every candidate with the four-term similarity loss and moves
//! the current patch to the best candidate of the batch. Every
//! `restart_interval` iterations the current patch is reset to blank; the
//! global best survives restarts.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blob::{sample_blob, BlobDomain, SamplerConfig};
use crate::error::{GapError, Result};
use crate::image::Image;
use crate::oracle::{Phase, SimilarityOracle};
use crate::patch::{add_blob, apply_patch, Patch, Placement};
use crate::seed::labeled_rng;

/// Similarity queries charged per candidate per image pair.
pub const QUERIES_PER_LOSS: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub n_iters: usize,
    pub batch_size: usize,
    pub restart_interval: usize,
    pub restarts_enabled: bool,
    pub sampler: SamplerConfig,
    pub symmetric: bool,
    pub channels: usize,
    pub seed: u64,
    pub cache_clean_embeddings: bool,
    /// Only move the current patch when the batch best improves on it.
    /// Off by default: the reference search always moves.
    pub monotone_accept: bool,
    /// Score the candidates of a batch concurrently.
    pub parallel: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            n_iters: 625,
            batch_size: 8,
            restart_interval: 50,
            restarts_enabled: true,
            sampler: SamplerConfig::default(),
            symmetric: true,
            channels: 1,
            seed: 0,
            cache_clean_embeddings: false,
            monotone_accept: false,
            parallel: true,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(GapError::invalid("batch_size must be at least 1"));
        }
        if self.restarts_enabled && self.restart_interval == 0 {
            return Err(GapError::invalid("restart_interval must be at least 1 when restarts are enabled"));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(GapError::invalid(format!("channels must be 1 or 3, got {}", self.channels)));
        }
        self.sampler.validate()
    }

    /// Optimization queries a full run spends against `n_pairs` image pairs.
    pub fn query_budget(&self, n_pairs: usize) -> u64 {
        self.n_iters as u64 * self.batch_size as u64 * QUERIES_PER_LOSS * n_pairs as u64
    }
}

/// Two photos of the same identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub image_a: Image,
    pub image_b: Image,
}

impl ImagePair {
    pub fn new(image_a: Image, image_b: Image) -> Result<Self> {
        if !image_a.is_aligned_size() || !image_b.is_aligned_size() {
            return Err(GapError::invalid("pair images must be 112x112"));
        }
        Ok(Self { image_a, image_b })
    }
}

/// Sum over `x, y in {A, B}` of `sim(apply(I_x, P), I_y)`, self pairs
/// included. Costs four queries per pair.
pub fn loss(patch: &Patch, pair: &ImagePair, placement: &Placement, oracle: &dyn SimilarityOracle) -> Result<f64> {
    multi_loss(patch, std::slice::from_ref(pair), placement, oracle)
}

/// [`loss`] summed over several pairs.
pub fn multi_loss(
    patch: &Patch,
    pairs: &[ImagePair],
    placement: &Placement,
    oracle: &dyn SimilarityOracle,
) -> Result<f64> {
    let mut total = 0.0;
    for pair in pairs {
        let armed_a = apply_patch(&pair.image_a, patch, placement)?;
        let armed_b = apply_patch(&pair.image_b, patch, placement)?;
        let scores = oracle.similarity_batch(&[
            (&armed_a, &pair.image_a),
            (&armed_a, &pair.image_b),
            (&armed_b, &pair.image_a),
            (&armed_b, &pair.image_b),
        ])?;
        total += scores.iter().sum::<f64>();
    }
    Ok(total)
}

/// Index of the first minimal loss.
pub fn tie_break(losses: &[f64]) -> Result<usize> {
    if losses.is_empty() {
        return Err(GapError::invalid("cannot select from an empty batch"));
    }
    let mut best = 0;
    for (i, &l) in losses.iter().enumerate().skip(1) {
        if l < losses[best] {
            best = i;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// 1-based iteration index.
    pub iteration: usize,
    pub batch_best_loss: f64,
    pub global_best_loss: f64,
    /// Cumulative optimization queries after this iteration.
    pub queries: u64,
    pub restarted: bool,
    pub candidate_losses: Vec<f64>,
    pub selected: usize,
    /// Whether the current patch moved to the selected candidate.
    pub moved: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OptTrace {
    pub records: Vec<TraceRecord>,
    /// Set when the oracle failed mid-run; the records stop there.
    pub aborted: Option<String>,
}

impl OptTrace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "batch_best_loss", "global_best_loss", "queries", "restarted"])?;
        for r in &self.records {
            w.write_record([
                r.iteration.to_string(),
                r.batch_best_loss.to_string(),
                r.global_best_loss.to_string(),
                r.queries.to_string(),
                u8::from(r.restarted).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn queries(&self) -> u64 {
        self.records.last().map_or(0, |r| r.queries)
    }
}

#[derive(Debug)]
pub struct GreedyOutcome {
    pub best_patch: Patch,
    /// `+inf` when no iteration completed.
    pub best_loss: f64,
    pub trace: OptTrace,
    /// The oracle error that cut the run short, if any.
    pub error: Option<GapError>,
}

/// State handed to an observer after every iteration.
pub struct IterationView<'a> {
    pub record: &'a TraceRecord,
    pub current_patch: &'a Patch,
    pub best_patch: &'a Patch,
    pub best_loss: f64,
}

pub fn run_greedy(
    config: &OptimizerConfig,
    pair: &ImagePair,
    placement: &Placement,
    oracle: &dyn SimilarityOracle,
) -> Result<GreedyOutcome> {
    run_greedy_observed(config, std::slice::from_ref(pair), placement, oracle, &mut |_| {})
}

/// Full search over one or more identity pairs, calling `observer` after
/// each iteration. Invalid configuration is an `Err`; oracle failures end
/// the run early and are reported inside the outcome.
pub fn run_greedy_observed(
    config: &OptimizerConfig,
    pairs: &[ImagePair],
    placement: &Placement,
    oracle: &dyn SimilarityOracle,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<GreedyOutcome> {
    config.validate()?;
    placement.validate()?;
    if pairs.is_empty() {
        return Err(GapError::invalid("at least one image pair is required"));
    }
    if config.symmetric && placement.width % 2 != 0 {
        return Err(GapError::invalid("symmetric patches need an even placement width"));
    }

    let domain = BlobDomain {
        width: placement.width,
        height: placement.height,
        symmetric: config.symmetric,
        channels: config.channels,
    };
    let blank = Patch::zeros(placement.width, placement.height, config.channels, config.symmetric)?;
    let mut rng = labeled_rng(config.seed, "optimizer/blobs");
    let mut current = blank.clone();
    let mut current_loss = f64::INFINITY;
    let mut best = blank.clone();
    let mut best_loss = f64::INFINITY;
    let mut trace = OptTrace::default();

    oracle.ledger().set_phase(Phase::Optimization);
    let start_queries = oracle.ledger().optimization();
    if config.cache_clean_embeddings {
        for pair in pairs {
            oracle.pin_reference(&pair.image_a);
            oracle.pin_reference(&pair.image_b);
        }
    }

    for t in 1..=config.n_iters {
        let candidates = (0..config.batch_size)
            .map(|_| {
                let blob = sample_blob(&mut rng, &config.sampler, domain)?;
                add_blob(&current, &blob)
            })
            .collect::<Result<Vec<_>>>()?;

        let scored: Vec<Result<f64>> = if config.parallel {
            candidates.par_iter().map(|c| multi_loss(c, pairs, placement, oracle)).collect()
        } else {
            candidates.iter().map(|c| multi_loss(c, pairs, placement, oracle)).collect()
        };
        let losses = match scored.into_iter().collect::<Result<Vec<f64>>>() {
            Ok(l) => l,
            Err(e) => {
                trace.aborted = Some(format!("iteration {t}: {e}"));
                return Ok(GreedyOutcome { best_patch: best, best_loss, trace, error: Some(e) });
            }
        };

        let selected = tie_break(&losses)?;
        let batch_best = losses[selected];
        let moved = !config.monotone_accept || batch_best < current_loss;
        let mut candidates = candidates;
        if moved {
            current = candidates.swap_remove(selected);
            current_loss = batch_best;
        }
        if batch_best < best_loss {
            best_loss = batch_best;
            best = current.clone();
        }
        let restarted = config.restarts_enabled && t % config.restart_interval == 0 && t < config.n_iters;
        if restarted {
            current = blank.clone();
            current_loss = f64::INFINITY;
        }

        trace.records.push(TraceRecord {
            iteration: t,
            batch_best_loss: batch_best,
            global_best_loss: best_loss,
            queries: oracle.ledger().optimization() - start_queries,
            restarted,
            candidate_losses: losses,
            selected,
            moved,
        });
        observer(&IterationView {
            record: trace.records.last().expect("just pushed"),
            current_patch: &current,
            best_patch: &best,
            best_loss,
        });
    }

    Ok(GreedyOutcome { best_patch: best, best_loss, trace, error: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ToyOracle;
    use crate::synth::{build_corpus, PhotoParams};

    fn pair() -> ImagePair {
        let c = build_corpus(1, 2, 2, PhotoParams::default()).unwrap();
        ImagePair::new(c.render_photo(0, 0).unwrap(), c.render_photo(0, 1).unwrap()).unwrap()
    }

    fn small(n_iters: usize) -> OptimizerConfig {
        OptimizerConfig { n_iters, seed: 3, ..Default::default() }
    }

    #[test]
    fn tie_break_picks_lowest_index() {
        assert_eq!(tie_break(&[0.5, 0.2, 0.2]).unwrap(), 1);
        assert_eq!(tie_break(&[0.3]).unwrap(), 0);
        assert_eq!(tie_break(&[0.7, 0.7, 0.7]).unwrap(), 0);
        assert!(matches!(tie_break(&[]), Err(GapError::InvalidArgument(_))));
    }

    #[test]
    fn identical_pair_loss_is_four_times_single_term() {
        let p = pair();
        let same = ImagePair::new(p.image_a.clone(), p.image_a.clone()).unwrap();
        let oracle = ToyOracle::new();
        let patch = Patch::zeros(72, 28, 1, true).unwrap();
        let l = loss(&patch, &same, &Placement::default(), &oracle).unwrap();
        let armed = apply_patch(&p.image_a, &patch, &Placement::default()).unwrap();
        let single = oracle.similarity(&armed, &p.image_a).unwrap();
        assert!((l - 4.0 * single).abs() < 1e-12);
        assert!((-4.0..=4.0).contains(&l));
    }

    #[test]
    fn zero_iterations_spend_nothing() {
        let oracle = ToyOracle::new();
        let out = run_greedy(&small(0), &pair(), &Placement::default(), &oracle).unwrap();
        assert!(out.best_patch.is_zero());
        assert!(out.trace.records.is_empty());
        assert_eq!(oracle.queries_used(), 0);
    }

    #[test]
    fn restarts_land_on_interval_multiples() {
        let cfg = OptimizerConfig { restart_interval: 10, ..small(25) };
        let out = run_greedy(&cfg, &pair(), &Placement::default(), &ToyOracle::new()).unwrap();
        let at: Vec<usize> = out.trace.records.iter().filter(|r| r.restarted).map(|r| r.iteration).collect();
        assert_eq!(at, vec![10, 20]);

        // no restart on the final iteration even when it is a multiple
        let cfg = OptimizerConfig { restart_interval: 10, ..small(20) };
        let out = run_greedy(&cfg, &pair(), &Placement::default(), &ToyOracle::new()).unwrap();
        assert_eq!(out.trace.records.iter().filter(|r| r.restarted).count(), 1);
    }

    #[test]
    fn parallel_matches_sequential() {
        let seq = OptimizerConfig { parallel: false, ..small(15) };
        let par = OptimizerConfig { parallel: true, ..small(15) };
        let a = run_greedy(&seq, &pair(), &Placement::default(), &ToyOracle::new()).unwrap();
        let b = run_greedy(&par, &pair(), &Placement::default(), &ToyOracle::new()).unwrap();
        assert_eq!(a.best_patch, b.best_patch);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn monotone_mode_never_moves_uphill() {
        let cfg = OptimizerConfig { monotone_accept: true, restarts_enabled: false, ..small(30) };
        let out = run_greedy(&cfg, &pair(), &Placement::default(), &ToyOracle::new()).unwrap();
        let mut current = f64::INFINITY;
        for r in &out.trace.records {
            if r.moved {
                assert!(r.batch_best_loss < current);
                current = r.batch_best_loss;
            }
        }
    }

    #[test]
    fn cache_changes_cost_not_result() {
        let plain = ToyOracle::new();
        let cached = ToyOracle::new().with_reference_cache(true);
        let cfg = small(5);
        let a = run_greedy(&cfg, &pair(), &Placement::default(), &plain).unwrap();
        let b = run_greedy(&OptimizerConfig { cache_clean_embeddings: true, ..cfg }, &pair(), &Placement::default(), &cached)
            .unwrap();
        assert_eq!(a.best_patch, b.best_patch);
        assert_eq!(plain.queries_used(), cached.queries_used());
        assert!(cached.ledger().snapshot().embeddings_computed < plain.ledger().snapshot().embeddings_computed);
    }

    #[test]
    fn multi_pair_costs_scale() {
        let c = build_corpus(1, 3, 2, PhotoParams::default()).unwrap();
        let pairs: Vec<ImagePair> = (0..3)
            .map(|i| ImagePair::new(c.render_photo(i, 0).unwrap(), c.render_photo(i, 1).unwrap()).unwrap())
            .collect();
        let oracle = ToyOracle::new();
        let cfg = small(4);
        run_greedy_observed(&cfg, &pairs, &Placement::default(), &oracle, &mut |_| {}).unwrap();
        assert_eq!(oracle.queries_used(), cfg.query_budget(3));
    }

    #[test]
    fn invalid_config_rejected() {
        let o = ToyOracle::new();
        let p = pair();
        let pl = Placement::default();
        assert!(run_greedy(&OptimizerConfig { batch_size: 0, ..small(1) }, &p, &pl, &o).is_err());
        assert!(run_greedy(&OptimizerConfig { restart_interval: 0, ..small(1) }, &p, &pl, &o).is_err());
        assert!(run_greedy(&OptimizerConfig { channels: 2, ..small(1) }, &p, &pl, &o).is_err());
        let odd = Placement { width: 71, ..pl };
        assert!(run_greedy(&small(1), &p, &odd, &o).is_err());
        assert_eq!(o.queries_used(), 0);
    }

    #[test]
    fn csv_has_expected_header() {
        let out = run_greedy(&small(2), &pair(), &Placement::default(), &ToyOracle::new()).unwrap();
        let mut buf = Vec::new();
        out.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "iteration,batch_best_loss,global_best_loss,queries,restarted");
        assert_eq!(lines.count(), 2);
    }
}
