//! The `gap` command line.
//!
//! Every subcommand reads an optional JSON [`RunConfig`] and applies flag
//! overrides on top. Configuration is fully validated before any oracle is
//! contacted. Exit codes: 0 success, 2 validation, 3 oracle or transport,
//! 4 I/O.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{GapError, Result};
use crate::eval::{
    attack_success_rate, compare_baselines, geometry_sweep, misidentification_rate, queries_vs_asr, run_ablation,
    AttackSetup, SweepSpec, REPORT_SCHEMA_VERSION,
};
use crate::oracle::{calibrate_threshold, LedgerSnapshot, SimilarityOracle, VerificationThreshold};
use crate::optimizer::run_greedy;
use crate::patch::{apply_patch, patch_png_bytes, Patch, PatchFile, Placement};
use crate::seed::labeled_rng;
use crate::synth::{build_corpus, gray_rectangle_patch, noise_patch, Gallery};

mod config;

pub use config::{
    load_corpus_dir, CorpusSpec, EvalSpec, GridKind, OracleBackend, OracleSpec, RunConfig, ORACLE_URL_ENV,
};

#[derive(Debug, Parser)]
#[command(name = "gap", version, about = "Black-box Gaussian-blob adversarial patch search and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the synthetic corpus to PNGs plus a manifest.
    GenCorpus(CommonArgs),
    /// Search for a patch and write patch JSON, patch PNG, trace CSV and a report.
    Optimize(CommonArgs),
    /// Success rate, misidentification and baselines for a patch.
    Eval(EvalArgs),
    /// Factor ablation over symmetry, color and restarts.
    Ablate(CommonArgs),
    /// Loss of a patch with rows trimmed or banded.
    Sweep(PatchArgs),
    /// Success rate of the best patch as a function of queries spent.
    Curve(CommonArgs),
    /// Write a patch (and optionally a face wearing it) as PNG.
    ExportPng(ExportArgs),
}

/// Flags shared by every subcommand. Each maps onto one config field and
/// wins over the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed (`seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (`output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub jobs: Option<usize>,

    /// `corpus.seed`
    #[arg(long)]
    pub corpus_seed: Option<u64>,
    /// `corpus.n_identities`
    #[arg(long)]
    pub identities: Option<usize>,
    /// `corpus.photos_per_identity`
    #[arg(long)]
    pub photos: Option<usize>,
    /// `corpus.dir`: load an exported corpus instead of generating one.
    #[arg(long)]
    pub corpus_dir: Option<PathBuf>,

    /// `pair.identity`
    #[arg(long)]
    pub pair_identity: Option<usize>,
    /// `pair.photo_a`
    #[arg(long)]
    pub pair_photo_a: Option<usize>,
    /// `pair.photo_b`
    #[arg(long)]
    pub pair_photo_b: Option<usize>,

    /// `placement.top`
    #[arg(long)]
    pub top: Option<usize>,
    /// `placement.left`
    #[arg(long)]
    pub left: Option<usize>,
    /// `placement.width`
    #[arg(long)]
    pub width: Option<usize>,
    /// `placement.height`
    #[arg(long)]
    pub height: Option<usize>,

    /// `optimizer.n_iters`
    #[arg(long)]
    pub iters: Option<usize>,
    /// `optimizer.batch_size`
    #[arg(long)]
    pub batch: Option<usize>,
    /// `optimizer.restart_interval`
    #[arg(long)]
    pub restart_interval: Option<usize>,
    /// `optimizer.restarts_enabled`
    #[arg(long)]
    pub restarts: Option<bool>,
    /// `optimizer.symmetric`
    #[arg(long)]
    pub symmetric: Option<bool>,
    /// `optimizer.channels` (1 or 3)
    #[arg(long)]
    pub channels: Option<usize>,
    /// `optimizer.monotone_accept`
    #[arg(long)]
    pub monotone: Option<bool>,
    /// `optimizer.cache_clean_embeddings`
    #[arg(long)]
    pub cache: Option<bool>,
    /// `optimizer.sampler.a_max`
    #[arg(long)]
    pub a_max: Option<f64>,
    /// `optimizer.sampler.sigma_lo`
    #[arg(long)]
    pub sigma_lo: Option<f64>,
    /// `optimizer.sampler.sigma_hi`
    #[arg(long)]
    pub sigma_hi: Option<f64>,

    /// `oracle.backend`
    #[arg(long, value_enum)]
    pub oracle: Option<OracleBackend>,
    /// `oracle.endpoint`; the GAP_ORACLE_URL environment variable wins.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// `oracle.throttle.max_qps`
    #[arg(long)]
    pub max_qps: Option<f64>,
    /// `oracle.throttle.max_in_flight`
    #[arg(long)]
    pub max_in_flight: Option<usize>,

    /// `evaluation.target_far`
    #[arg(long)]
    pub far: Option<f64>,
    /// `evaluation.n_impostor_pairs`
    #[arg(long)]
    pub impostor_pairs: Option<usize>,
    /// `evaluation.include_optimization_pair`
    #[arg(long)]
    pub include_opt_pair: Option<bool>,
    /// `evaluation.ablation_seeds`
    #[arg(long)]
    pub ablation_seeds: Option<usize>,
    /// `evaluation.ablation_grid`
    #[arg(long, value_enum)]
    pub grid: Option<GridKind>,
    /// `evaluation.curve_runs`
    #[arg(long)]
    pub runs: Option<usize>,
    /// `evaluation.checkpoints`, comma separated
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Option<Vec<u64>>,
    /// `evaluation.band_heights`, comma separated
    #[arg(long, value_delimiter = ',')]
    pub bands: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Gray,
    Noise,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Patch JSON to evaluate.
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    pub patch: Option<PathBuf>,
    /// Evaluate a baseline occluder instead of a patch file.
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// Also score the gray and noise baselines on the same pairs.
    #[arg(long)]
    pub compare_baselines: bool,
}

#[derive(Debug, Args)]
pub struct PatchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Patch JSON.
    #[arg(long)]
    pub patch: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Patch JSON.
    #[arg(long)]
    pub patch: PathBuf,
    /// Also render the patch on this photo, given as IDENTITY:PHOTO.
    #[arg(long, value_parser = parse_photo_ref)]
    pub on_photo: Option<(usize, usize)>,
}

fn parse_photo_ref(s: &str) -> std::result::Result<(usize, usize), String> {
    let (i, j) = s.split_once(':').ok_or("expected IDENTITY:PHOTO")?;
    Ok((i.parse().map_err(|e| format!("{e}"))?, j.parse().map_err(|e| format!("{e}"))?))
}

impl CommonArgs {
    /// Config file (or defaults) with flags applied, env endpoint filled in,
    /// validated.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($field:ident).+) => {
                if let Some(v) = self.$flag.clone() {
                    c.$($field).+ = v;
                }
            };
        }
        set!(seed => seed);
        set!(out => output_dir);
        set!(corpus_seed => corpus.seed);
        set!(identities => corpus.n_identities);
        set!(photos => corpus.photos_per_identity);
        set!(pair_identity => pair.identity);
        set!(pair_photo_a => pair.photo_a);
        set!(pair_photo_b => pair.photo_b);
        set!(top => placement.top);
        set!(left => placement.left);
        set!(width => placement.width);
        set!(height => placement.height);
        set!(iters => optimizer.n_iters);
        set!(batch => optimizer.batch_size);
        set!(restart_interval => optimizer.restart_interval);
        set!(restarts => optimizer.restarts_enabled);
        set!(symmetric => optimizer.symmetric);
        set!(channels => optimizer.channels);
        set!(monotone => optimizer.monotone_accept);
        set!(cache => optimizer.cache_clean_embeddings);
        set!(a_max => optimizer.sampler.a_max);
        set!(sigma_lo => optimizer.sampler.sigma_lo);
        set!(sigma_hi => optimizer.sampler.sigma_hi);
        set!(oracle => oracle.backend);
        set!(max_in_flight => oracle.throttle.max_in_flight);
        set!(far => evaluation.target_far);
        set!(impostor_pairs => evaluation.n_impostor_pairs);
        set!(include_opt_pair => evaluation.include_optimization_pair);
        set!(ablation_seeds => evaluation.ablation_seeds);
        set!(grid => evaluation.ablation_grid);
        set!(runs => evaluation.curve_runs);
        set!(checkpoints => evaluation.checkpoints);
        set!(bands => evaluation.band_heights);
        if let Some(dir) = &self.corpus_dir {
            c.corpus.dir = Some(dir.clone());
        }
        if let Some(url) = &self.endpoint {
            c.oracle.endpoint = Some(url.clone());
        }
        if let Some(q) = self.max_qps {
            c.oracle.throttle.max_qps = Some(q);
        }
        if self.jobs == Some(0) {
            return Err(GapError::invalid("--jobs must be at least 1"));
        }
        c.resolve(std::env::var(ORACLE_URL_ENV).ok())
    }
}

pub fn exit_code(err: &GapError) -> u8 {
    match err {
        GapError::InvalidArgument(_) | GapError::Json(_) => 2,
        GapError::DegenerateEmbedding
        | GapError::Transport(_)
        | GapError::Protocol(_)
        | GapError::BudgetExceeded(_) => 3,
        GapError::NotFound(_) | GapError::Io(_) | GapError::Png(_) => 4,
    }
}

/// Parses `std::env::args` and runs; the binary's whole `main`.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let common = match &cli.command {
        Command::GenCorpus(c) | Command::Optimize(c) | Command::Ablate(c) | Command::Curve(c) => c,
        Command::Eval(a) => &a.common,
        Command::Sweep(a) => &a.common,
        Command::ExportPng(a) => &a.common,
    };
    let config = common.run_config()?;
    if let Some(jobs) = common.jobs {
        // only fails if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let mut out = std::io::stdout().lock();
    match &cli.command {
        Command::GenCorpus(_) => cmd_gen_corpus(&config, &mut out),
        Command::Optimize(_) => cmd_optimize(&config, &mut out),
        Command::Eval(a) => cmd_eval(&config, a, &mut out),
        Command::Ablate(_) => cmd_ablate(&config, &mut out),
        Command::Sweep(a) => cmd_sweep(&config, &a.patch, &mut out),
        Command::Curve(_) => cmd_curve(&config, &mut out),
        Command::ExportPng(a) => cmd_export_png(&config, a, &mut out),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn print_path(out: &mut dyn Write, path: &Path) -> Result<()> {
    writeln!(out, "wrote {}", path.display())?;
    Ok(())
}

fn load_patch(path: &Path, config: &RunConfig) -> Result<(Patch, Placement)> {
    let (patch, placement) = PatchFile::load(path)?.into_parts()?;
    placement.validate()?;
    if (placement.width, placement.height) != (config.placement.width, config.placement.height) {
        return Err(GapError::invalid(format!(
            "patch file is {}x{} but the configured placement is {}x{}",
            placement.width, placement.height, config.placement.width, config.placement.height
        )));
    }
    Ok((patch, placement))
}

fn calibrate(config: &RunConfig, gallery: &Gallery, oracle: &dyn SimilarityOracle) -> Result<VerificationThreshold> {
    calibrate_threshold(
        gallery,
        oracle,
        config.evaluation.target_far,
        config.evaluation.n_impostor_pairs,
        config.calibration_seed(),
    )
}

pub fn cmd_gen_corpus(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let c = &config.corpus;
    if c.dir.is_some() {
        return Err(GapError::invalid("gen-corpus generates a corpus; drop corpus.dir"));
    }
    let corpus = build_corpus(c.seed, c.n_identities, c.photos_per_identity, c.photo_params)?;
    let dir = config.output_dir.join("corpus");
    for path in corpus.export(&dir)? {
        print_path(out, &path)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct OptimizeReport {
    pub schema_version: u32,
    pub config: RunConfig,
    pub backend: String,
    /// `null` when no iteration completed.
    pub best_loss: Option<f64>,
    pub iterations_completed: usize,
    pub optimization_queries: u64,
    pub ledger: LedgerSnapshot,
    /// True when the oracle failed and the artifacts hold the best patch
    /// found before the failure.
    pub partial: bool,
    pub error: Option<String>,
    pub artifacts: Vec<PathBuf>,
}

pub fn cmd_optimize(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let gallery = config.gallery()?;
    let pair = config.pair.load(&gallery)?;
    let dir = &config.output_dir;
    create_dir(dir)?;
    let oracle = config.oracle()?;

    let outcome = run_greedy(&config.optimizer, &pair, &config.placement, oracle.as_ref())?;

    let patch_json = dir.join("patch.json");
    let patch_png = dir.join("patch.png");
    let trace_csv = dir.join("trace.csv");
    let report_json = dir.join("optimize_report.json");
    PatchFile::new(&outcome.best_patch, &config.placement).save(&patch_json)?;
    std::fs::write(&patch_png, patch_png_bytes(&outcome.best_patch)?)?;
    outcome.trace.write_csv(std::fs::File::create(&trace_csv)?)?;
    let report = OptimizeReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: config.clone(),
        backend: oracle.backend_name(),
        best_loss: outcome.best_loss.is_finite().then_some(outcome.best_loss),
        iterations_completed: outcome.trace.records.len(),
        optimization_queries: outcome.trace.queries(),
        ledger: oracle.ledger().snapshot(),
        partial: outcome.error.is_some(),
        error: outcome.error.as_ref().map(ToString::to_string),
        artifacts: vec![patch_json.clone(), patch_png.clone(), trace_csv.clone()],
    };
    write_json(&report_json, &report)?;
    for p in [&patch_json, &patch_png, &trace_csv, &report_json] {
        print_path(out, p)?;
    }
    match outcome.error {
        Some(e) => {
            writeln!(out, "partial run: {e}")?;
            Err(e)
        }
        None => {
            match report.best_loss {
                Some(l) => writeln!(out, "best_loss {l}")?,
                None => writeln!(out, "best_loss none (no iterations)")?,
            }
            writeln!(out, "queries {}", report.optimization_queries)?;
            Ok(())
        }
    }
}

#[derive(Debug, Serialize)]
pub struct EvalOutput {
    pub schema_version: u32,
    pub config: RunConfig,
    pub patch_source: String,
    pub threshold: VerificationThreshold,
    pub asr: f64,
    pub misidentification_rate: f64,
    pub gray_rectangle_asr: Option<f64>,
    pub noise_asr: Option<f64>,
    pub report: crate::eval::EvalReport,
    pub misidentification: crate::eval::MisidentificationReport,
    pub ledger: LedgerSnapshot,
}

pub fn cmd_eval(config: &RunConfig, args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let (patch, placement, source) = match (&args.patch, args.baseline) {
        (Some(path), _) => {
            let (p, pl) = load_patch(path, config)?;
            (p, pl, path.display().to_string())
        }
        (None, Some(Baseline::Gray)) => {
            (gray_rectangle_patch(config.placement.width, config.placement.height)?, config.placement, "gray".into())
        }
        (None, Some(Baseline::Noise)) => {
            let mut rng = labeled_rng(config.noise_seed(), "baseline/noise");
            (noise_patch(&mut rng, config.placement.width, config.placement.height)?, config.placement, "noise".into())
        }
        (None, None) => return Err(GapError::invalid("give --patch or --baseline")),
    };
    let gallery = config.gallery()?;
    let dir = &config.output_dir;
    create_dir(dir)?;
    let oracle = config.oracle()?;
    let oracle = oracle.as_ref();

    let threshold = calibrate(config, &gallery, oracle)?;
    let selection = config.selection();
    let (mut report, gray, noise) = if args.compare_baselines {
        let cmp = compare_baselines(&gallery, &patch, &placement, oracle, &threshold, &selection, config.noise_seed())?;
        (cmp.attack, Some(cmp.gray_rectangle_asr), Some(cmp.noise_asr))
    } else {
        (attack_success_rate(&gallery, &patch, &placement, oracle, &threshold, &selection)?, None, None)
    };
    report.config = serde_json::to_value(config)?;
    report.seeds = vec![config.seed, config.calibration_seed()];

    let subject = config.pair.identity;
    let probes = gallery
        .photos_of(subject)?
        .iter()
        .map(|img| apply_patch(img, &patch, &placement))
        .collect::<Result<Vec<_>>>()?;
    let misid = misidentification_rate(&probes, &gallery, subject, oracle)?;

    let path = dir.join("eval_report.json");
    let output = EvalOutput {
        schema_version: REPORT_SCHEMA_VERSION,
        config: config.clone(),
        patch_source: source,
        threshold,
        asr: report.asr,
        misidentification_rate: misid.rate,
        gray_rectangle_asr: gray,
        noise_asr: noise,
        report,
        misidentification: misid,
        ledger: oracle.ledger().snapshot(),
    };
    write_json(&path, &output)?;
    print_path(out, &path)?;
    writeln!(out, "threshold {} (calibration FAR {})", threshold.threshold, threshold.calibration_far)?;
    writeln!(out, "asr {} over {} pairs", output.asr, output.report.n_pairs)?;
    writeln!(out, "misidentification_rate {}", output.misidentification_rate)?;
    if let (Some(g), Some(n)) = (gray, noise) {
        writeln!(out, "gray_rectangle_asr {g}\nnoise_asr {n}")?;
    }
    Ok(())
}

pub fn cmd_ablate(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let grid = config.ablation_grid()?;
    let gallery = config.gallery()?;
    let dir = &config.output_dir;
    create_dir(dir)?;
    let threshold = calibrate(config, &gallery, config.oracle()?.as_ref())?;
    let setup = AttackSetup {
        gallery: &gallery,
        pair: config.pair,
        placement: config.placement,
        threshold,
        selection: config.selection(),
    };
    let table = run_ablation(&grid, &config.optimizer, &setup, &|| config.oracle())?;
    let path = dir.join("ablation.json");
    write_json(&path, &serde_json::json!({ "config": config, "threshold": threshold, "table": table }))?;
    print_path(out, &path)?;
    writeln!(out, "{:<32} {:>10} {:>16}", "cell", "median_asr", "median_best_loss")?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "failed".to_string(), |x| format!("{x:.4}"));
    for row in &table.rows {
        writeln!(out, "{:<32} {:>10} {:>16}", row.label, fmt(row.median_asr), fmt(row.median_best_loss))?;
    }
    Ok(())
}

pub fn cmd_sweep(config: &RunConfig, patch_path: &Path, out: &mut dyn Write) -> Result<()> {
    let (patch, placement) = load_patch(patch_path, config)?;
    let gallery = config.gallery()?;
    let pair = config.pair.load(&gallery)?;
    let dir = &config.output_dir;
    create_dir(dir)?;
    let oracle = config.oracle()?;
    let spec = SweepSpec { band_heights: config.evaluation.band_heights.clone() };
    let table = geometry_sweep(&patch, &pair, &placement, oracle.as_ref(), &spec)?;
    let csv_path = dir.join("sweep.csv");
    let json_path = dir.join("sweep.json");
    table.write_csv(std::fs::File::create(&csv_path)?)?;
    write_json(&json_path, &serde_json::json!({ "config": config, "table": table }))?;
    print_path(out, &csv_path)?;
    print_path(out, &json_path)?;
    writeln!(out, "unmasked_loss {}\nzero_patch_loss {}", table.unmasked_loss, table.zero_patch_loss)?;
    Ok(())
}

pub fn cmd_curve(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let gallery = config.gallery()?;
    let dir = &config.output_dir;
    create_dir(dir)?;
    let threshold = calibrate(config, &gallery, config.oracle()?.as_ref())?;
    let setup = AttackSetup {
        gallery: &gallery,
        pair: config.pair,
        placement: config.placement,
        threshold,
        selection: config.selection(),
    };
    let table = queries_vs_asr(
        &config.optimizer,
        &setup,
        &|| config.oracle(),
        config.evaluation.curve_runs,
        &config.evaluation.checkpoints,
    )?;
    let csv_path = dir.join("curve.csv");
    let json_path = dir.join("curve.json");
    table.write_csv(std::fs::File::create(&csv_path)?)?;
    write_json(&json_path, &serde_json::json!({ "config": config, "threshold": threshold, "table": table }))?;
    print_path(out, &csv_path)?;
    print_path(out, &json_path)?;
    for p in &table.points {
        match p.mean_asr {
            Some(a) => writeln!(out, "queries {:>7} mean_asr {a:.4}", p.queries)?,
            None => writeln!(out, "queries {:>7} unreached", p.queries)?,
        }
    }
    Ok(())
}

pub fn cmd_export_png(config: &RunConfig, args: &ExportArgs, out: &mut dyn Write) -> Result<()> {
    let (patch, placement) = load_patch(&args.patch, config)?;
    let dir = &config.output_dir;
    create_dir(dir)?;
    let path = dir.join("patch.png");
    std::fs::write(&path, patch_png_bytes(&patch)?)?;
    print_path(out, &path)?;
    if let Some((i, j)) = args.on_photo {
        let gallery = config.gallery()?;
        let armed = apply_patch(gallery.photo(i, j)?, &patch, &placement)?;
        let path = dir.join(format!("armed_id{i}_photo{j}.png"));
        armed.save_png(&path)?;
        print_path(out, &path)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"seed": 5, "optimizer": {"n_iters": 3, "batch_size": 2}}"#).unwrap();
        let cli = Cli::try_parse_from(["gap", "optimize", "--config", path.to_str().unwrap(), "--iters", "9"]).unwrap();
        let Command::Optimize(args) = cli.command else { panic!() };
        let c = args.run_config().unwrap();
        assert_eq!((c.seed, c.optimizer.seed, c.optimizer.n_iters, c.optimizer.batch_size), (5, 5, 9, 2));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&GapError::invalid("x")), 2);
        assert_eq!(exit_code(&GapError::Transport("x".into())), 3);
        assert_eq!(exit_code(&GapError::BudgetExceeded("x".into())), 3);
        assert_eq!(exit_code(&GapError::NotFound("x".into())), 4);
    }

    #[test]
    fn photo_ref_parsing() {
        assert_eq!(parse_photo_ref("3:1"), Ok((3, 1)));
        assert!(parse_photo_ref("3").is_err());
    }
}
