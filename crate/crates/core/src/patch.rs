//! The patch itself: a clamped intensity grid, its mirror constraint, how it
//! is overlaid on a face, and its on-disk forms.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blob::{render_blob, GaussianBlob};
use crate::error::{GapError, Result};
use crate::image::{encode_png, to_u8, Image, IMAGE_SIZE};

pub const PATCH_FORMAT_VERSION: u32 = 1;

/// Intensity grid in `[-1, 1]`, interleaved row-major when `channels == 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    width: usize,
    height: usize,
    channels: usize,
    symmetric: bool,
    values: Vec<f64>,
}

impl Patch {
    pub fn zeros(width: usize, height: usize, channels: usize, symmetric: bool) -> Result<Self> {
        Self::from_values(width, height, channels, symmetric, vec![0.0; width * height * channels])
    }

    /// Builds a patch from raw values. A symmetric patch must already be
    /// mirrored; use [`enforce_symmetry`] to mirror an arbitrary grid.
    pub fn from_values(
        width: usize,
        height: usize,
        channels: usize,
        symmetric: bool,
        values: Vec<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(GapError::invalid("patch dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(GapError::invalid(format!("unsupported channel count {channels}")));
        }
        if symmetric && width % 2 != 0 {
            return Err(GapError::invalid(format!("symmetric patch width {width} is odd")));
        }
        if values.len() != width * height * channels {
            return Err(GapError::invalid(format!(
                "patch has {} values, expected {}",
                values.len(),
                width * height * channels
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(GapError::invalid(format!("patch value {bad} outside [-1, 1]")));
        }
        let patch = Self { width, height, channels, symmetric, values };
        if symmetric && !patch.is_mirrored() {
            return Err(GapError::invalid("values are not mirror-symmetric"));
        }
        Ok(patch)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    fn idx(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.values[self.idx(row, col, channel)]
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Bit-exact left/right mirror check.
    pub fn is_mirrored(&self) -> bool {
        (0..self.height).all(|r| {
            (0..self.width / 2).all(|c| {
                (0..self.channels).all(|ch| {
                    self.get(r, c, ch).to_bits() == self.get(r, self.width - 1 - c, ch).to_bits()
                })
            })
        })
    }

    fn mirror_in_place(&mut self) {
        for r in 0..self.height {
            for c in 0..self.width / 2 {
                for ch in 0..self.channels {
                    let v = self.values[self.idx(r, c, ch)];
                    let dst = self.idx(r, self.width - 1 - c, ch);
                    self.values[dst] = v;
                }
            }
        }
    }
}

/// Where the patch sits on the 112×112 face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub top: usize,
    pub left: usize,
    pub width: usize,
    pub height: usize,
}

impl Default for Placement {
    /// Forehead band: 72×28 starting at row 8, column 20.
    fn default() -> Self {
        Self { top: 8, left: 20, width: 72, height: 28 }
    }
}

impl Placement {
    pub fn validate_for(&self, image_width: usize, image_height: usize) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(GapError::invalid("placement dimensions must be positive"));
        }
        if self.top + self.height > image_height || self.left + self.width > image_width {
            return Err(GapError::invalid(format!(
                "placement {}x{} at ({}, {}) does not fit a {}x{} image",
                self.width, self.height, self.top, self.left, image_width, image_height
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_for(IMAGE_SIZE, IMAGE_SIZE)
    }
}

/// Adds a rendered blob to the patch and clamps to `[-1, 1]`.
///
/// In symmetric mode only the left half is written and then mirrored, so the
/// blob centre must lie in the left half.
pub fn add_blob(patch: &Patch, blob: &GaussianBlob) -> Result<Patch> {
    if blob.amplitude.channels() != patch.channels {
        return Err(GapError::invalid(format!(
            "blob has {} channels, patch has {}",
            blob.amplitude.channels(),
            patch.channels
        )));
    }
    blob.validate(patch.width, patch.height)?;
    let mut out = patch.clone();
    if patch.symmetric {
        let half = patch.width / 2;
        if blob.center_x >= half as f64 {
            return Err(GapError::invalid(format!(
                "blob centre x={} lies in the mirrored half of a {}-wide symmetric patch",
                blob.center_x, patch.width
            )));
        }
        let field = render_blob(blob, half, patch.height)?;
        for r in 0..patch.height {
            for c in 0..half {
                for ch in 0..patch.channels {
                    let i = out.idx(r, c, ch);
                    out.values[i] = (out.values[i] + field.get(r, c, ch)).clamp(-1.0, 1.0);
                }
            }
        }
        out.mirror_in_place();
    } else {
        let field = render_blob(blob, patch.width, patch.height)?;
        for (v, d) in out.values.iter_mut().zip(&field.values) {
            *v = (*v + d).clamp(-1.0, 1.0);
        }
    }
    Ok(out)
}

/// Copies the left half onto the right half and marks the patch symmetric.
pub fn enforce_symmetry(patch: &Patch) -> Result<Patch> {
    if patch.width % 2 != 0 {
        return Err(GapError::invalid(format!("cannot mirror odd width {}", patch.width)));
    }
    let mut out = patch.clone();
    out.mirror_in_place();
    out.symmetric = true;
    Ok(out)
}

/// Opaque overlay: inside the placement each pixel becomes `(p + 1) / 2`.
///
/// A color patch on a grayscale image promotes the output to three channels;
/// a grayscale patch is replicated across the image's channels. Pixels
/// outside the placement are copied unchanged.
pub fn apply_patch(image: &Image, patch: &Patch, placement: &Placement) -> Result<Image> {
    placement.validate_for(image.width(), image.height())?;
    if placement.width != patch.width || placement.height != patch.height {
        return Err(GapError::invalid(format!(
            "patch is {}x{} but placement is {}x{}",
            patch.width, patch.height, placement.width, placement.height
        )));
    }
    let base = if patch.channels == 3 && image.channels() == 1 { image.to_rgb() } else { image.clone() };
    let channels = base.channels();
    let width = base.width();
    let mut pixels = base.pixels().to_vec();
    for r in 0..patch.height {
        let row_start = ((placement.top + r) * width + placement.left) * channels;
        for c in 0..patch.width {
            for ch in 0..channels {
                let p = patch.get(r, c, if patch.channels == 1 { 0 } else { ch });
                pixels[row_start + c * channels + ch] = (p + 1.0) / 2.0;
            }
        }
    }
    Ok(Image::from_raw_unchecked(width, base.height(), channels, pixels))
}

/// Keep/drop flags over the patch grid. A cell is kept when both its row and
/// (if present) its column are kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    width: usize,
    height: usize,
    rows: Vec<bool>,
    cols: Option<Vec<bool>>,
}

impl RegionMask {
    pub fn new(rows: Vec<bool>, cols: Option<Vec<bool>>, width: usize) -> Result<Self> {
        if let Some(c) = &cols {
            if c.len() != width {
                return Err(GapError::invalid("column mask length does not match width"));
            }
        }
        Ok(Self { width, height: rows.len(), rows, cols })
    }

    pub fn keep_all(width: usize, height: usize) -> Self {
        Self { width, height, rows: vec![true; height], cols: None }
    }

    pub fn drop_all(width: usize, height: usize) -> Self {
        Self { width, height, rows: vec![false; height], cols: None }
    }

    /// Drops the first `k` rows (toward the hairline).
    pub fn trim_top(width: usize, height: usize, k: usize) -> Self {
        let rows = (0..height).map(|r| r >= k).collect();
        Self { width, height, rows, cols: None }
    }

    /// Drops the last `k` rows (toward the brows).
    pub fn trim_bottom(width: usize, height: usize, k: usize) -> Self {
        let rows = (0..height).map(|r| r + k < height).collect();
        Self { width, height, rows, cols: None }
    }

    /// Keeps only a centred horizontal band of `k` rows.
    pub fn central_band(width: usize, height: usize, k: usize) -> Self {
        let k = k.min(height);
        let start = (height - k) / 2;
        let rows = (0..height).map(|r| r >= start && r < start + k).collect();
        Self { width, height, rows, cols: None }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn keeps(&self, row: usize, col: usize) -> bool {
        self.rows[row] && self.cols.as_ref().is_none_or(|c| c[col])
    }
}

/// Sets dropped cells to 0 (mid-gray under the opaque overlay).
pub fn mask_patch(patch: &Patch, mask: &RegionMask) -> Result<Patch> {
    if mask.width != patch.width || mask.height != patch.height {
        return Err(GapError::invalid(format!(
            "mask is {}x{} but patch is {}x{}",
            mask.width, mask.height, patch.width, patch.height
        )));
    }
    let mut out = patch.clone();
    for r in 0..patch.height {
        for c in 0..patch.width {
            if !mask.keeps(r, c) {
                for ch in 0..patch.channels {
                    let i = out.idx(r, c, ch);
                    out.values[i] = 0.0;
                }
            }
        }
    }
    // an asymmetric column mask breaks the mirror
    out.symmetric = patch.symmetric && out.is_mirrored();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementOrigin {
    pub top: usize,
    pub left: usize,
}

/// JSON form of a patch. This is the canonical on-disk representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchFile {
    pub format_version: u32,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub symmetric: bool,
    pub placement: PlacementOrigin,
    pub values: Vec<f64>,
}

impl PatchFile {
    pub fn new(patch: &Patch, placement: &Placement) -> Self {
        Self {
            format_version: PATCH_FORMAT_VERSION,
            width: patch.width,
            height: patch.height,
            channels: patch.channels,
            symmetric: patch.symmetric,
            placement: PlacementOrigin { top: placement.top, left: placement.left },
            values: patch.values.clone(),
        }
    }

    pub fn into_parts(self) -> Result<(Patch, Placement)> {
        if self.format_version != PATCH_FORMAT_VERSION {
            return Err(GapError::invalid(format!(
                "unsupported patch format_version {}",
                self.format_version
            )));
        }
        let placement = Placement {
            top: self.placement.top,
            left: self.placement.left,
            width: self.width,
            height: self.height,
        };
        let patch = Patch::from_values(self.width, self.height, self.channels, self.symmetric, self.values)?;
        Ok((patch, placement))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => GapError::NotFound(path.display().to_string()),
            _ => GapError::Io(e),
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// 8-bit PNG of the patch, `p -> round(255 (p + 1) / 2)`. Lossy.
pub fn patch_png_bytes(patch: &Patch) -> Result<Vec<u8>> {
    let color = if patch.channels == 1 { png::ColorType::Grayscale } else { png::ColorType::Rgb };
    let data: Vec<u8> = patch.values.iter().map(|&p| to_u8((p + 1.0) / 2.0)).collect();
    encode_png(patch.width, patch.height, color, &data)
}
