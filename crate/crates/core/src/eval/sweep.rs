use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{GapError, Result};
use crate::eval::REPORT_SCHEMA_VERSION;
use crate::optimizer::{loss, ImagePair};
use crate::oracle::{Phase, SimilarityOracle};
use crate::patch::{mask_patch, Patch, Placement, RegionMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    /// `k` rows removed from the top edge.
    TrimTop,
    TrimBottom,
    /// Only the `k` centered rows kept.
    CentralBand,
}

impl MaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskKind::TrimTop => "trim_top",
            MaskKind::TrimBottom => "trim_bottom",
            MaskKind::CentralBand => "central_band",
        }
    }

    pub fn mask(self, width: usize, height: usize, k: usize) -> RegionMask {
        match self {
            MaskKind::TrimTop => RegionMask::trim_top(width, height, k),
            MaskKind::TrimBottom => RegionMask::trim_bottom(width, height, k),
            MaskKind::CentralBand => RegionMask::central_band(width, height, k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    /// Heights of the centered bands. Trims always run over every `k`.
    pub band_heights: Vec<usize>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { band_heights: vec![4, 8, 12] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mask_kind: MaskKind,
    pub k: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub schema_version: u32,
    pub unmasked_loss: f64,
    pub zero_patch_loss: f64,
    pub rows: Vec<SweepRow>,
    pub queries: u64,
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["mask_kind", "k", "loss"])?;
        for r in &self.rows {
            w.write_record([r.mask_kind.as_str().to_string(), r.k.to_string(), r.loss.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn row(&self, kind: MaskKind, k: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.mask_kind == kind && r.k == k)
    }
}

/// Pair loss of `patch` with parts of it blanked: `k = 0..=height` rows
/// trimmed from each edge, then each centered band.
pub fn geometry_sweep(
    patch: &Patch,
    pair: &ImagePair,
    placement: &Placement,
    oracle: &dyn SimilarityOracle,
    spec: &SweepSpec,
) -> Result<SweepTable> {
    let (w, h) = (patch.width(), patch.height());
    if (w, h) != (placement.width, placement.height) {
        return Err(GapError::invalid(format!(
            "patch is {w}x{h} but placement is {}x{}",
            placement.width, placement.height
        )));
    }
    if let Some(&k) = spec.band_heights.iter().find(|&&k| k > h) {
        return Err(GapError::invalid(format!("band of {k} rows exceeds patch height {h}")));
    }

    oracle.ledger().set_phase(Phase::Evaluation);
    let before = oracle.ledger().evaluation();
    let zero = Patch::zeros(w, h, patch.channels(), patch.symmetric())?;
    let unmasked_loss = loss(patch, pair, placement, oracle)?;
    let zero_patch_loss = loss(&zero, pair, placement, oracle)?;

    let mut rows = Vec::new();
    let plan = [MaskKind::TrimTop, MaskKind::TrimBottom]
        .into_iter()
        .flat_map(|kind| (0..=h).map(move |k| (kind, k)))
        .chain(spec.band_heights.iter().map(|&k| (MaskKind::CentralBand, k)));
    for (kind, k) in plan {
        let masked = mask_patch(patch, &kind.mask(w, h, k))?;
        rows.push(SweepRow { mask_kind: kind, k, loss: loss(&masked, pair, placement, oracle)? });
    }
    Ok(SweepTable {
        schema_version: REPORT_SCHEMA_VERSION,
        unmasked_loss,
        zero_patch_loss,
        rows,
        queries: oracle.ledger().evaluation() - before,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blob::GaussianBlob;
    use crate::oracle::ToyOracle;
    use crate::patch::add_blob;
    use crate::synth::{build_corpus, PhotoParams};

    #[test]
    fn extremes_are_exact() {
        let c = build_corpus(1, 2, 2, PhotoParams::default()).unwrap();
        let pair = ImagePair::new(c.render_photo(0, 0).unwrap(), c.render_photo(0, 1).unwrap()).unwrap();
        let patch = Patch::zeros(72, 28, 1, true).unwrap();
        let patch = add_blob(&patch, &GaussianBlob::gray(0.9, 10.0, 14.0, 6.0, 4.0, 0.3)).unwrap();
        let spec = SweepSpec { band_heights: vec![4] };
        let t = geometry_sweep(&patch, &pair, &Placement::default(), &ToyOracle::new(), &spec).unwrap();
        assert_eq!(t.rows.len(), 2 * 29 + 1);
        assert_eq!(t.row(MaskKind::TrimTop, 0).unwrap().loss, t.unmasked_loss);
        assert_eq!(t.row(MaskKind::TrimBottom, 0).unwrap().loss, t.unmasked_loss);
        assert_eq!(t.row(MaskKind::TrimTop, 28).unwrap().loss, t.zero_patch_loss);
        assert_eq!(t.row(MaskKind::TrimBottom, 28).unwrap().loss, t.zero_patch_loss);
        assert_eq!(t.queries, 4 * (2 + 59));

        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("mask_kind,k,loss\ntrim_top,0,"));
    }

    #[test]
    fn oversized_band_is_rejected() {
        let c = build_corpus(1, 2, 2, PhotoParams::default()).unwrap();
        let pair = ImagePair::new(c.render_photo(0, 0).unwrap(), c.render_photo(0, 1).unwrap()).unwrap();
        let patch = Patch::zeros(72, 28, 1, true).unwrap();
        let spec = SweepSpec { band_heights: vec![40] };
        let err = geometry_sweep(&patch, &pair, &Placement::default(), &ToyOracle::new(), &spec);
        assert!(matches!(err, Err(GapError::InvalidArgument(_))));
    }
}
