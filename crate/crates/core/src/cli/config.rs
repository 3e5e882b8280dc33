//! The run configuration document and its resolution into runtime objects.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{GapError, Result};
use crate::eval::{AblationGrid, PairRef, PairSelection};
use crate::image::Image;
use crate::optimizer::OptimizerConfig;
use crate::oracle::{RemoteOracle, RetryPolicy, SimilarityOracle, ThrottleConfig, ToyOracle, MIN_IMPOSTOR_PAIRS};
use crate::patch::Placement;
use crate::seed::derive_seed;
use crate::synth::{build_corpus, photo_file_name, CorpusManifest, Gallery, PhotoParams};

pub const ORACLE_URL_ENV: &str = "GAP_ORACLE_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root seed. The optimizer uses it directly; calibration and baselines
    /// use labeled derivations of it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub corpus: CorpusSpec,
    pub pair: PairRef,
    pub placement: Placement,
    /// `optimizer.seed` is ignored; the root `seed` wins.
    pub optimizer: OptimizerConfig,
    pub oracle: OracleSpec,
    pub evaluation: EvalSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("gap-out"),
            corpus: CorpusSpec::default(),
            pair: PairRef::default(),
            placement: Placement::default(),
            optimizer: OptimizerConfig::default(),
            oracle: OracleSpec::default(),
            evaluation: EvalSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSpec {
    pub seed: u64,
    pub n_identities: usize,
    pub photos_per_identity: usize,
    pub photo_params: PhotoParams,
    /// Read photos from an exported corpus directory instead of generating.
    pub dir: Option<PathBuf>,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self { seed: 1, n_identities: 20, photos_per_identity: 4, photo_params: PhotoParams::default(), dir: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OracleBackend {
    #[default]
    Toy,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSpec {
    pub backend: OracleBackend,
    pub endpoint: Option<String>,
    pub throttle: ThrottleConfig,
    pub retry: RetryPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// Default cell plus each factor flipped on its own.
    #[default]
    OneAtATime,
    /// Every combination of the three factors.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSpec {
    pub target_far: f64,
    pub n_impostor_pairs: usize,
    pub include_optimization_pair: bool,
    pub ablation_seeds: usize,
    pub ablation_grid: GridKind,
    pub curve_runs: usize,
    pub checkpoints: Vec<u64>,
    pub band_heights: Vec<usize>,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            target_far: 1e-3,
            n_impostor_pairs: 10_000,
            include_optimization_pair: false,
            ablation_seeds: 5,
            ablation_grid: GridKind::OneAtATime,
            curve_runs: 5,
            checkpoints: vec![0, 1_000, 2_000, 5_000, 10_000, 20_000],
            band_heights: vec![4, 8, 12],
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => GapError::NotFound(path.display().to_string()),
            _ => GapError::Io(e),
        })?;
        serde_json::from_str(&text).map_err(|e| GapError::invalid(format!("{}: {e}", path.display())))
    }

    /// Fills in the environment endpoint and pins the optimizer seed.
    pub fn resolve(mut self, env_endpoint: Option<String>) -> Result<Self> {
        if let Some(url) = env_endpoint.filter(|u| !u.is_empty()) {
            self.oracle.endpoint = Some(url);
        }
        self.optimizer.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    /// Static checks; spends no queries.
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.placement.validate()?;
        if self.optimizer.symmetric && self.placement.width % 2 != 0 {
            return Err(GapError::invalid("symmetric patches need an even placement width"));
        }
        self.corpus.photo_params.validate()?;
        if self.corpus.dir.is_none() {
            if self.corpus.n_identities < 2 {
                return Err(GapError::invalid(format!(
                    "corpus needs at least 2 identities, got {}",
                    self.corpus.n_identities
                )));
            }
            if self.corpus.photos_per_identity < 2 {
                return Err(GapError::invalid(format!(
                    "corpus needs at least 2 photos per identity, got {}",
                    self.corpus.photos_per_identity
                )));
            }
        }
        if self.oracle.backend == OracleBackend::Remote && self.oracle.endpoint.is_none() {
            return Err(GapError::invalid(format!("remote oracle needs an endpoint (or {ORACLE_URL_ENV})")));
        }
        self.oracle.throttle.validate()?;
        let e = &self.evaluation;
        if !(0.0..=1.0).contains(&e.target_far) {
            return Err(GapError::invalid(format!("target_far {} outside [0, 1]", e.target_far)));
        }
        if e.n_impostor_pairs < MIN_IMPOSTOR_PAIRS {
            return Err(GapError::invalid(format!("n_impostor_pairs must be at least {MIN_IMPOSTOR_PAIRS}")));
        }
        if e.ablation_seeds == 0 || e.curve_runs == 0 {
            return Err(GapError::invalid("ablation_seeds and curve_runs must be positive"));
        }
        if e.checkpoints.is_empty() || e.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GapError::invalid("checkpoints must be non-empty and strictly ascending"));
        }
        if let Some(&k) = e.band_heights.iter().find(|&&k| k > self.placement.height) {
            return Err(GapError::invalid(format!("band height {k} exceeds placement height")));
        }
        Ok(())
    }

    pub fn calibration_seed(&self) -> u64 {
        derive_seed(self.seed, "threshold-calibration")
    }

    pub fn noise_seed(&self) -> u64 {
        derive_seed(self.seed, "noise-baseline")
    }

    pub fn selection(&self) -> PairSelection {
        PairSelection {
            optimization_pair: Some(self.pair),
            include_optimization_pair: self.evaluation.include_optimization_pair,
        }
    }

    pub fn ablation_grid(&self) -> Result<AblationGrid> {
        let seeds = (0..self.evaluation.ablation_seeds as u64).map(|i| self.seed.wrapping_add(i)).collect();
        match self.evaluation.ablation_grid {
            GridKind::OneAtATime => AblationGrid::one_at_a_time(seeds),
            GridKind::Full => AblationGrid::full(seeds),
        }
    }

    /// Generates or loads the corpus photos and checks the optimization pair.
    pub fn gallery(&self) -> Result<Gallery> {
        let gallery = match &self.corpus.dir {
            None => Gallery::from_corpus(&build_corpus(
                self.corpus.seed,
                self.corpus.n_identities,
                self.corpus.photos_per_identity,
                self.corpus.photo_params,
            )?),
            Some(dir) => load_corpus_dir(dir)?,
        };
        self.pair.validate(&gallery)?;
        Ok(gallery)
    }

    /// A fresh oracle with its own ledger. Remote oracles are health-checked
    /// here.
    pub fn oracle(&self) -> Result<Box<dyn SimilarityOracle>> {
        match self.oracle.backend {
            OracleBackend::Toy => {
                Ok(Box::new(ToyOracle::new().with_reference_cache(self.optimizer.cache_clean_embeddings)))
            }
            OracleBackend::Remote => {
                let url = self.oracle.endpoint.as_deref().ok_or_else(|| GapError::invalid("no endpoint"))?;
                Ok(Box::new(RemoteOracle::connect(url, self.oracle.throttle, self.oracle.retry)?))
            }
        }
    }
}

/// Reads a directory written by corpus export.
pub fn load_corpus_dir(dir: &Path) -> Result<Gallery> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => GapError::NotFound(manifest_path.display().to_string()),
        _ => GapError::Io(e),
    })?;
    let manifest: CorpusManifest = serde_json::from_str(&text)?;
    let mut photos = Vec::with_capacity(manifest.n_identities);
    for i in 0..manifest.n_identities {
        let row = (0..manifest.photos_per_identity)
            .map(|j| Image::load_png(&dir.join(photo_file_name(i, j))))
            .collect::<Result<Vec<_>>>()?;
        photos.push(row);
    }
    Gallery::from_photos(photos)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 3}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"optimizer": {"iters": 3}}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"seed": 3, "optimizer": {"n_iters": 7}}"#).unwrap();
        assert_eq!((c.seed, c.optimizer.n_iters, c.optimizer.batch_size), (3, 7, 8));
    }

    #[test]
    fn resolve_pins_seed_and_endpoint() {
        let c = RunConfig { seed: 9, ..Default::default() }.resolve(Some("http://x:1".into())).unwrap();
        assert_eq!(c.optimizer.seed, 9);
        assert_eq!(c.oracle.endpoint.as_deref(), Some("http://x:1"));
    }

    #[test]
    fn validation_failures() {
        let mut c = RunConfig::default();
        c.corpus.n_identities = 1;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.oracle.backend = OracleBackend::Remote;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.evaluation.checkpoints = vec![5, 5];
        assert!(c.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn exported_corpus_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = build_corpus(4, 2, 2, PhotoParams::default()).unwrap();
        corpus.export(dir.path()).unwrap();
        let loaded = load_corpus_dir(dir.path()).unwrap();
        assert_eq!(loaded, Gallery::from_corpus(&corpus));
    }
}
