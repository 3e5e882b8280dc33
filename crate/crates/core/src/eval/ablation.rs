use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GapError, Result};
use crate::eval::{attack_success_rate, median, AttackSetup, OracleFactory, REPORT_SCHEMA_VERSION};
use crate::optimizer::{run_greedy, OptimizerConfig};

/// One design-factor combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationCell {
    pub symmetric: bool,
    pub channels: usize,
    pub restarts: bool,
}

impl Default for AblationCell {
    fn default() -> Self {
        Self { symmetric: true, channels: 1, restarts: true }
    }
}

impl AblationCell {
    pub fn label(&self) -> String {
        format!(
            "{}/{}/{}",
            if self.symmetric { "symmetric" } else { "free" },
            if self.channels == 1 { "gray" } else { "color" },
            if self.restarts { "restarts" } else { "no-restarts" }
        )
    }

    fn apply(&self, base: &OptimizerConfig, seed: u64) -> OptimizerConfig {
        OptimizerConfig {
            symmetric: self.symmetric,
            channels: self.channels,
            restarts_enabled: self.restarts,
            seed,
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationGrid {
    cells: Vec<AblationCell>,
    seeds: Vec<u64>,
}

impl AblationGrid {
    /// The default cell is prepended when missing; duplicates are dropped.
    pub fn new(cells: Vec<AblationCell>, seeds: Vec<u64>) -> Result<Self> {
        if seeds.is_empty() {
            return Err(GapError::invalid("an ablation needs at least one seed per cell"));
        }
        let mut unique = vec![AblationCell::default()];
        for c in cells {
            if c.channels != 1 && c.channels != 3 {
                return Err(GapError::invalid(format!("cell channels must be 1 or 3, got {}", c.channels)));
            }
            if !unique.contains(&c) {
                unique.push(c);
            }
        }
        Ok(Self { cells: unique, seeds })
    }

    /// All eight combinations.
    pub fn full(seeds: Vec<u64>) -> Result<Self> {
        let mut cells = Vec::new();
        for symmetric in [true, false] {
            for channels in [1, 3] {
                for restarts in [true, false] {
                    cells.push(AblationCell { symmetric, channels, restarts });
                }
            }
        }
        Self::new(cells, seeds)
    }

    /// Default cell against each single factor flipped.
    pub fn one_at_a_time(seeds: Vec<u64>) -> Result<Self> {
        let d = AblationCell::default();
        Self::new(
            vec![
                d,
                AblationCell { symmetric: false, ..d },
                AblationCell { channels: 3, ..d },
                AblationCell { restarts: false, ..d },
            ],
            seeds,
        )
    }

    pub fn cells(&self) -> &[AblationCell] {
        &self.cells
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub seed: u64,
    pub best_loss: f64,
    pub asr: f64,
    pub optimization_queries: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: AblationCell,
    pub label: String,
    pub runs: Vec<AblationRun>,
    pub median_asr: Option<f64>,
    pub median_best_loss: Option<f64>,
    /// First error hit by any seed of this cell.
    pub failed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub schema_version: u32,
    pub base_config: OptimizerConfig,
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, cell: &AblationCell) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.cell == *cell)
    }
}

fn run_one(
    cell: &AblationCell,
    seed: u64,
    base: &OptimizerConfig,
    setup: &AttackSetup<'_>,
    factory: &OracleFactory<'_>,
) -> Result<AblationRun> {
    let config = cell.apply(base, seed);
    let oracle = factory()?;
    let pair = setup.pair.load(setup.gallery)?;
    let outcome = run_greedy(&config, &pair, &setup.placement, oracle.as_ref())?;
    if let Some(e) = outcome.error {
        return Err(e);
    }
    let report = attack_success_rate(
        setup.gallery,
        &outcome.best_patch,
        &setup.placement,
        oracle.as_ref(),
        &setup.threshold,
        &setup.selection,
    )?;
    Ok(AblationRun {
        seed,
        best_loss: outcome.best_loss,
        asr: report.asr,
        optimization_queries: outcome.trace.queries(),
    })
}

/// One optimization and one success-rate evaluation per (cell, seed), each
/// against a fresh oracle from `factory`. Cells whose runs fail are kept and
/// marked failed.
pub fn run_ablation(
    grid: &AblationGrid,
    base: &OptimizerConfig,
    setup: &AttackSetup<'_>,
    factory: &OracleFactory<'_>,
) -> Result<AblationTable> {
    base.validate()?;
    setup.validate()?;
    let jobs: Vec<(usize, u64)> =
        (0..grid.cells.len()).flat_map(|c| grid.seeds.iter().map(move |&s| (c, s))).collect();
    let results: Vec<Result<AblationRun>> =
        jobs.par_iter().map(|&(c, seed)| run_one(&grid.cells[c], seed, base, setup, factory)).collect();

    let mut rows: Vec<AblationRow> = grid
        .cells
        .iter()
        .map(|cell| AblationRow {
            cell: *cell,
            label: cell.label(),
            runs: Vec::new(),
            median_asr: None,
            median_best_loss: None,
            failed: None,
        })
        .collect();
    for (&(c, seed), result) in jobs.iter().zip(results) {
        let row = &mut rows[c];
        match result {
            Ok(run) => row.runs.push(run),
            Err(e) => {
                row.failed.get_or_insert_with(|| format!("seed {seed}: {e}"));
            }
        }
    }
    for row in &mut rows {
        if row.failed.is_none() {
            row.median_asr = median(&row.runs.iter().map(|r| r.asr).collect::<Vec<_>>());
            row.median_best_loss = median(&row.runs.iter().map(|r| r.best_loss).collect::<Vec<_>>());
        }
    }
    Ok(AblationTable { schema_version: REPORT_SCHEMA_VERSION, base_config: base.clone(), seeds: grid.seeds.clone(), rows })
}
