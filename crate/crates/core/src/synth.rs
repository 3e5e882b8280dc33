//! Deterministic synthetic face corpus and the baseline patches.
//!
//! Each identity is a smooth 112×112 field: mid-gray plus 32 seeded anisotropic
//! Gaussians plus bilinearly upsampled low-frequency noise. Photos of
//! an identity add a brightness offset, pixel noise and an integer shift of at
//! most two pixels. Every pixel is snapped to the 8-bit grid, so PNG export is
//! lossless and external oracles see identical values.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{GapError, Result};
use crate::image::{Image, IMAGE_SIZE};
use crate::patch::{Patch, Placement};
use crate::seed::labeled_rng;

pub const MAX_SHIFT: usize = 2;
pub const MANIFEST_FORMAT_VERSION: u32 = 1;

const BLOBS_PER_IDENTITY: usize = 32;
const BLOB_SIGMA_RANGE: std::ops::Range<f64> = 5.0..16.0;
const LOW_FREQ_GRID: usize = 8;

/// Per-photo jitter ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhotoParams {
    /// Brightness offset is drawn uniformly from `[-brightness, brightness]`.
    pub brightness: f64,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise_sigma: f64,
    /// Integer shift in each axis is drawn from `[-max_shift, max_shift]`.
    pub max_shift: usize,
}

impl Default for PhotoParams {
    fn default() -> Self {
        Self { brightness: 0.05, noise_sigma: 0.02, max_shift: 2 }
    }
}

impl PhotoParams {
    pub fn none() -> Self {
        Self { brightness: 0.0, noise_sigma: 0.0, max_shift: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.brightness >= 0.0 && self.brightness <= 1.0) {
            return Err(GapError::invalid("brightness must lie in [0, 1]"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(GapError::invalid("noise_sigma must be non-negative"));
        }
        if self.max_shift > MAX_SHIFT {
            return Err(GapError::invalid(format!("max_shift must be at most {MAX_SHIFT}")));
        }
        Ok(())
    }
}

/// One concrete draw of the photo jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct Jitter {
    pub brightness_delta: f64,
    pub shift_x: isize,
    pub shift_y: isize,
    /// Additive noise, one value per pixel, or empty for none.
    pub noise: Vec<f64>,
}

impl Jitter {
    pub fn none() -> Self {
        Self { brightness_delta: 0.0, shift_x: 0, shift_y: 0, noise: Vec::new() }
    }
}

/// Applies a jitter draw to a grayscale field. Shifted-in border pixels
/// replicate the nearest edge. The result is clamped but not quantized.
pub fn apply_jitter(base: &Image, jitter: &Jitter) -> Image {
    let (w, h) = (base.width() as isize, base.height() as isize);
    let mut pixels = Vec::with_capacity(base.pixels().len());
    for r in 0..h {
        for c in 0..w {
            let sr = (r - jitter.shift_y).clamp(0, h - 1) as usize;
            let sc = (c - jitter.shift_x).clamp(0, w - 1) as usize;
            let noise = jitter.noise.get((r * w + c) as usize).copied().unwrap_or(0.0);
            pixels.push((base.get(sr, sc, 0) + jitter.brightness_delta + noise).clamp(0.0, 1.0));
        }
    }
    Image::from_raw_unchecked(base.width(), base.height(), 1, pixels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityTemplate {
    pub identity_id: usize,
    pub base_field: Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    corpus_seed: u64,
    identities: Vec<IdentityTemplate>,
    photos_per_identity: usize,
    photo_params: PhotoParams,
}

fn generate_base_field(corpus_seed: u64, identity_id: usize) -> Image {
    let mut rng = labeled_rng(corpus_seed, &format!("identity/{identity_id}"));
    let n = IMAGE_SIZE;
    let mut field = vec![0.5; n * n];

    for _ in 0..BLOBS_PER_IDENTITY {
        let amp = rng.gen_range(-0.3..0.3);
        let cx = rng.gen_range(0.0..n as f64);
        let cy = rng.gen_range(0.0..n as f64);
        let sx = rng.gen_range(BLOB_SIGMA_RANGE);
        let sy = rng.gen_range(BLOB_SIGMA_RANGE);
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let (s, c) = theta.sin_cos();
        for r in 0..n {
            for col in 0..n {
                let dx = col as f64 - cx;
                let dy = r as f64 - cy;
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                field[r * n + col] += amp * (-(u * u / (2.0 * sx * sx) + v * v / (2.0 * sy * sy))).exp();
            }
        }
    }

    let g = LOW_FREQ_GRID;
    let nodes: Vec<f64> = (0..(g + 1) * (g + 1)).map(|_| rng.gen_range(-0.08..0.08)).collect();
    let step = (n - 1) as f64 / g as f64;
    for r in 0..n {
        let fy = r as f64 / step;
        let y0 = (fy.floor() as usize).min(g - 1);
        let ty = fy - y0 as f64;
        for col in 0..n {
            let fx = col as f64 / step;
            let x0 = (fx.floor() as usize).min(g - 1);
            let tx = fx - x0 as f64;
            let at = |yy: usize, xx: usize| nodes[yy * (g + 1) + xx];
            let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
            let bottom = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
            field[r * n + col] += top * (1.0 - ty) + bottom * ty;
        }
    }

    for v in &mut field {
        *v = v.clamp(0.0, 1.0);
    }
    Image::from_raw_unchecked(n, n, 1, field).quantized()
}

pub fn build_corpus(
    corpus_seed: u64,
    n_identities: usize,
    photos_per_identity: usize,
    photo_params: PhotoParams,
) -> Result<Corpus> {
    if n_identities < 2 {
        return Err(GapError::invalid(format!("need at least 2 identities, got {n_identities}")));
    }
    if photos_per_identity < 2 {
        return Err(GapError::invalid(format!(
            "need at least 2 photos per identity, got {photos_per_identity}"
        )));
    }
    photo_params.validate()?;
    let identities = (0..n_identities)
        .map(|id| IdentityTemplate { identity_id: id, base_field: generate_base_field(corpus_seed, id) })
        .collect();
    Ok(Corpus { corpus_seed, identities, photos_per_identity, photo_params })
}

impl Corpus {
    pub fn corpus_seed(&self) -> u64 {
        self.corpus_seed
    }

    pub fn n_identities(&self) -> usize {
        self.identities.len()
    }

    pub fn photos_per_identity(&self) -> usize {
        self.photos_per_identity
    }

    pub fn photo_params(&self) -> &PhotoParams {
        &self.photo_params
    }

    pub fn identities(&self) -> &[IdentityTemplate] {
        &self.identities
    }

    pub fn jitter_for(&self, identity_id: usize, photo_index: usize) -> Jitter {
        let p = &self.photo_params;
        let mut rng = labeled_rng(self.corpus_seed, &format!("photo/{identity_id}/{photo_index}"));
        let brightness_delta = if p.brightness > 0.0 { rng.gen_range(-p.brightness..=p.brightness) } else { 0.0 };
        let shift = p.max_shift as isize;
        let shift_x = rng.gen_range(-shift..=shift);
        let shift_y = rng.gen_range(-shift..=shift);
        let noise = if p.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, p.noise_sigma).expect("validated sigma");
            (0..IMAGE_SIZE * IMAGE_SIZE).map(|_| normal.sample(&mut rng)).collect()
        } else {
            Vec::new()
        };
        Jitter { brightness_delta, shift_x, shift_y, noise }
    }

    pub fn render_photo(&self, identity_id: usize, photo_index: usize) -> Result<Image> {
        let template = self
            .identities
            .get(identity_id)
            .ok_or_else(|| GapError::NotFound(format!("identity {identity_id}")))?;
        if photo_index >= self.photos_per_identity {
            return Err(GapError::NotFound(format!("photo {photo_index} of identity {identity_id}")));
        }
        let jitter = self.jitter_for(identity_id, photo_index);
        Ok(apply_jitter(&template.base_field, &jitter).quantized())
    }

    /// Every photo, indexed `[identity][photo]`.
    pub fn render_all(&self) -> Vec<Vec<Image>> {
        (0..self.n_identities())
            .map(|id| {
                (0..self.photos_per_identity)
                    .map(|j| self.render_photo(id, j).expect("indices in range"))
                    .collect()
            })
            .collect()
    }

    pub fn manifest(&self) -> CorpusManifest {
        CorpusManifest {
            format_version: MANIFEST_FORMAT_VERSION,
            corpus_seed: self.corpus_seed,
            n_identities: self.n_identities(),
            photos_per_identity: self.photos_per_identity,
            photo_params: self.photo_params,
            toy_projection_seed: crate::oracle::toy::TOY_PROJECTION_SEED,
            files: (0..self.n_identities())
                .flat_map(|i| (0..self.photos_per_identity).map(move |j| photo_file_name(i, j)))
                .collect(),
        }
    }

    /// Writes `id{I}_photo{J}.png` for every photo plus `manifest.json`.
    /// Returns the paths written.
    pub fn export(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (i, photos) in self.render_all().iter().enumerate() {
            for (j, img) in photos.iter().enumerate() {
                let path = dir.join(photo_file_name(i, j));
                img.save_png(&path)?;
                written.push(path);
            }
        }
        let manifest_path = dir.join("manifest.json");
        std::fs::write(&manifest_path, serde_json::to_string_pretty(&self.manifest())? + "\n")?;
        written.push(manifest_path);
        Ok(written)
    }
}

/// Rendered photos of a corpus, indexed `[identity][photo]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    photos: Vec<Vec<Image>>,
}

impl Gallery {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        Self { photos: corpus.render_all() }
    }

    pub fn from_photos(photos: Vec<Vec<Image>>) -> Result<Self> {
        if photos.iter().any(|p| p.is_empty()) {
            return Err(GapError::invalid("every identity needs at least one photo"));
        }
        Ok(Self { photos })
    }

    pub fn n_identities(&self) -> usize {
        self.photos.len()
    }

    pub fn photos_of(&self, identity_id: usize) -> Result<&[Image]> {
        self.photos
            .get(identity_id)
            .map(Vec::as_slice)
            .ok_or_else(|| GapError::NotFound(format!("identity {identity_id}")))
    }

    pub fn photo(&self, identity_id: usize, photo_index: usize) -> Result<&Image> {
        self.photos_of(identity_id)?
            .get(photo_index)
            .ok_or_else(|| GapError::NotFound(format!("photo {photo_index} of identity {identity_id}")))
    }
}

pub fn photo_file_name(identity_id: usize, photo_index: usize) -> String {
    format!("id{identity_id}_photo{photo_index}.png")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub format_version: u32,
    pub corpus_seed: u64,
    pub n_identities: usize,
    pub photos_per_identity: usize,
    pub photo_params: PhotoParams,
    pub toy_projection_seed: u64,
    pub files: Vec<String>,
}

/// Mid-gray occluder baseline.
pub fn gray_rectangle_patch(width: usize, height: usize) -> Result<Patch> {
    Patch::zeros(width, height, 1, false)
}

/// I.i.d. uniform noise in `[-1, 1]`, not mirrored.
pub fn noise_patch<R: Rng + ?Sized>(rng: &mut R, width: usize, height: usize) -> Result<Patch> {
    if width == 0 || height == 0 {
        return Err(GapError::invalid("patch dimensions must be positive"));
    }
    let values = (0..width * height).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    Patch::from_values(width, height, 1, false, values)
}

/// Cuts the placement region out of `donor` and encodes it as a patch, so
/// overlaying it re-creates the donor's (grayscale) forehead.
pub fn forehead_graft_patch(donor: &Image, placement: &Placement) -> Result<Patch> {
    placement.validate_for(donor.width(), donor.height())?;
    let gray = donor.to_grayscale();
    let mut values = Vec::with_capacity(placement.width * placement.height);
    for r in 0..placement.height {
        for c in 0..placement.width {
            values.push(2.0 * gray.get(placement.top + r, placement.left + c, 0) - 1.0);
        }
    }
    Patch::from_values(placement.width, placement.height, 1, false, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patch::apply_patch;
    use rand::SeedableRng;

    #[test]
    fn corpus_is_deterministic() {
        let a = build_corpus(1, 2, 2, PhotoParams::default()).unwrap();
        let b = build_corpus(1, 2, 2, PhotoParams::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.render_photo(1, 1).unwrap(), b.render_photo(1, 1).unwrap());
    }

    #[test]
    fn seeds_change_fields() {
        let a = build_corpus(1, 2, 2, PhotoParams::default()).unwrap();
        let b = build_corpus(2, 2, 2, PhotoParams::default()).unwrap();
        assert_ne!(a.identities()[0].base_field, b.identities()[0].base_field);
        assert_ne!(a.identities()[0].base_field, a.identities()[1].base_field);
    }

    #[test]
    fn zero_jitter_photos_equal_base() {
        let c = build_corpus(3, 2, 3, PhotoParams::none()).unwrap();
        let p0 = c.render_photo(1, 0).unwrap();
        assert_eq!(p0, c.render_photo(1, 2).unwrap());
        assert_eq!(p0, c.identities()[1].base_field);
    }

    #[test]
    fn brightness_shift_is_additive() {
        let base = Image::filled(1, 0.5).unwrap();
        let j = Jitter { brightness_delta: 0.1, ..Jitter::none() };
        let out = apply_jitter(&base, &j);
        assert!(out.pixels().iter().all(|&p| (p - 0.6).abs() < 1e-15));
        let bright = Image::filled(1, 0.95).unwrap();
        assert!(apply_jitter(&bright, &j).pixels().iter().all(|&p| p == 1.0));
    }

    #[test]
    fn photos_are_valid_images() {
        let c = build_corpus(1, 3, 2, PhotoParams::default()).unwrap();
        for photos in c.render_all() {
            for img in photos {
                assert!(img.is_aligned_size());
                assert!(img.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
                assert_eq!(img, img.quantized());
            }
        }
    }

    #[test]
    fn invalid_requests() {
        assert!(matches!(build_corpus(1, 1, 4, PhotoParams::default()), Err(GapError::InvalidArgument(_))));
        assert!(matches!(build_corpus(1, 4, 1, PhotoParams::default()), Err(GapError::InvalidArgument(_))));
        let bad = PhotoParams { max_shift: 3, ..Default::default() };
        assert!(build_corpus(1, 2, 2, bad).is_err());
        let c = build_corpus(1, 2, 2, PhotoParams::default()).unwrap();
        assert!(matches!(c.render_photo(2, 0), Err(GapError::NotFound(_))));
        assert!(matches!(c.render_photo(0, 2), Err(GapError::NotFound(_))));
    }

    #[test]
    fn gray_rectangle_is_zero_and_renders_mid_gray() {
        let p = gray_rectangle_patch(72, 28).unwrap();
        assert_eq!(p.values().len(), 2016);
        assert!(p.is_zero());
        let img = build_corpus(1, 2, 2, PhotoParams::default()).unwrap().render_photo(0, 0).unwrap();
        let out = apply_patch(&img, &p, &Placement::default()).unwrap();
        assert_eq!(out.get(8, 20, 0), 0.5);
        assert_eq!(out.get(35, 91, 0), 0.5);
    }

    #[test]
    fn noise_patch_reproducible_and_bounded() {
        let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut r3 = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let a = noise_patch(&mut r1, 72, 28).unwrap();
        assert_eq!(a, noise_patch(&mut r2, 72, 28).unwrap());
        assert_ne!(a, noise_patch(&mut r3, 72, 28).unwrap());
        assert!(a.values().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(!a.symmetric());
    }

    #[test]
    fn graft_round_trips_on_donor() {
        let c = build_corpus(1, 2, 2, PhotoParams::default()).unwrap();
        let pl = Placement::default();
        let donor = c.render_photo(0, 0).unwrap();
        let patch = forehead_graft_patch(&donor, &pl).unwrap();
        let back = apply_patch(&donor, &patch, &pl).unwrap();
        // (p + 1) / 2 cannot hit every double below 0.25, so allow a few ulps
        let diff = back.pixels().iter().zip(donor.pixels()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-15, "diff {diff}");
        assert_eq!(back.quantized(), donor);

        // graft onto another identity carries the donor's forehead across
        let target = c.render_photo(1, 0).unwrap();
        let grafted = apply_patch(&target, &patch, &pl).unwrap();
        assert!((grafted.get(20, 50, 0) - donor.get(20, 50, 0)).abs() <= 1e-15);
        assert_eq!(grafted.get(60, 50, 0), target.get(60, 50, 0));

        let gray = Image::filled(3, 0.5).unwrap();
        assert!(forehead_graft_patch(&gray, &pl).unwrap().is_zero());
        let overflow = Placement { top: 90, ..pl };
        assert!(forehead_graft_patch(&donor, &overflow).is_err());
    }
}
