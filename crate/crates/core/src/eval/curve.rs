use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GapError, Result};
use crate::eval::{attack_success_rate, AttackSetup, OracleFactory, REPORT_SCHEMA_VERSION};
use crate::optimizer::{run_greedy_observed, OptimizerConfig};
use crate::patch::Patch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub queries: u64,
    /// Per run; `None` where the run never spent this many queries.
    pub asr: Vec<Option<f64>>,
    /// Best loss found within the budget; `None` before the first iteration
    /// and where unreached.
    pub best_loss: Vec<Option<f64>>,
    /// Mean over the runs that reached this checkpoint.
    pub mean_asr: Option<f64>,
}

impl CurvePoint {
    pub fn reached_by_all(&self) -> bool {
        self.asr.iter().all(Option::is_some)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveTable {
    pub schema_version: u32,
    pub base_config: OptimizerConfig,
    pub seeds: Vec<u64>,
    pub points: Vec<CurvePoint>,
}

impl CurveTable {
    /// Unreached cells are left empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["queries".to_string(), "mean_asr".to_string()];
        header.extend((1..=self.seeds.len()).map(|i| format!("run{i}")));
        w.write_record(&header)?;
        let cell = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        for p in &self.points {
            let mut rec = vec![p.queries.to_string(), cell(p.mean_asr)];
            rec.extend(p.asr.iter().map(|&a| cell(a)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct RunCurve {
    asr: Vec<Option<f64>>,
    best_loss: Vec<Option<f64>>,
}

fn run_one(
    config: &OptimizerConfig,
    setup: &AttackSetup<'_>,
    factory: &OracleFactory<'_>,
    checkpoints: &[u64],
) -> Result<RunCurve> {
    let oracle = factory()?;
    let pair = setup.pair.load(setup.gallery)?;
    let zero = Patch::zeros(setup.placement.width, setup.placement.height, config.channels, config.symmetric)?;
    // best patch within each checkpoint's budget; starts at the blank patch
    let mut snaps: Vec<(Patch, f64)> = checkpoints.iter().map(|_| (zero.clone(), f64::INFINITY)).collect();
    let mut spent = 0;
    let outcome = run_greedy_observed(config, std::slice::from_ref(&pair), &setup.placement, oracle.as_ref(), &mut |v| {
        spent = v.record.queries;
        for (cp, snap) in checkpoints.iter().zip(snaps.iter_mut()) {
            if *cp >= v.record.queries {
                *snap = (v.best_patch.clone(), v.best_loss);
            }
        }
    })?;
    if let Some(e) = outcome.error {
        return Err(e);
    }

    let mut asr = Vec::with_capacity(checkpoints.len());
    let mut best_loss = Vec::with_capacity(checkpoints.len());
    for (cp, (patch, loss)) in checkpoints.iter().zip(&snaps) {
        if *cp > spent {
            asr.push(None);
            best_loss.push(None);
            continue;
        }
        let report = attack_success_rate(
            setup.gallery,
            patch,
            &setup.placement,
            oracle.as_ref(),
            &setup.threshold,
            &setup.selection,
        )?;
        asr.push(Some(report.asr));
        best_loss.push(loss.is_finite().then_some(*loss));
    }
    Ok(RunCurve { asr, best_loss })
}

/// Success rate of the best patch found within each query budget in
/// `checkpoints`, over `n_runs` runs seeded `base.seed, base.seed + 1, ..`.
pub fn queries_vs_asr(
    base: &OptimizerConfig,
    setup: &AttackSetup<'_>,
    factory: &OracleFactory<'_>,
    n_runs: usize,
    checkpoints: &[u64],
) -> Result<CurveTable> {
    base.validate()?;
    setup.validate()?;
    if n_runs == 0 {
        return Err(GapError::invalid("need at least one run"));
    }
    if checkpoints.is_empty() || checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(GapError::invalid("checkpoints must be non-empty and strictly ascending"));
    }
    let seeds: Vec<u64> = (0..n_runs as u64).map(|r| base.seed.wrapping_add(r)).collect();
    let runs = seeds
        .par_iter()
        .map(|&seed| run_one(&OptimizerConfig { seed, ..base.clone() }, setup, factory, checkpoints))
        .collect::<Result<Vec<_>>>()?;

    let points = checkpoints
        .iter()
        .enumerate()
        .map(|(i, &queries)| {
            let asr: Vec<Option<f64>> = runs.iter().map(|r| r.asr[i]).collect();
            let reached: Vec<f64> = asr.iter().flatten().copied().collect();
            let mean_asr = (!reached.is_empty()).then(|| reached.iter().sum::<f64>() / reached.len() as f64);
            CurvePoint { queries, asr, best_loss: runs.iter().map(|r| r.best_loss[i]).collect(), mean_asr }
        })
        .collect();
    Ok(CurveTable { schema_version: REPORT_SCHEMA_VERSION, base_config: base.clone(), seeds, points })
}
