//! Elliptical Gaussian blobs: the unit of change in the patch search.
//!
//! A blob renders as `a * exp(-(u^2 / (2 sx^2) + v^2 / (2 sy^2)))` where
//! `(u, v)` is `(x - cx, y - cy)` rotated by `-theta`. Pixel `(row, col)` sits
//! at coordinates `(x = col, y = row)`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GapError, Result};

/// Hard floor on blob spread. Narrower blobs alias on the pixel grid.
pub const MIN_SIGMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Amplitude {
    Gray(f64),
    Color([f64; 3]),
}

impl Amplitude {
    pub fn channels(&self) -> usize {
        match self {
            Amplitude::Gray(_) => 1,
            Amplitude::Color(_) => 3,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            Amplitude::Gray(a) => std::slice::from_ref(a),
            Amplitude::Color(a) => a,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.as_slice().iter().fold(0.0, |m, a| m.max(a.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBlob {
    pub amplitude: Amplitude,
    pub center_x: f64,
    pub center_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub theta: f64,
}

impl GaussianBlob {
    pub fn gray(amplitude: f64, center_x: f64, center_y: f64, sigma_x: f64, sigma_y: f64, theta: f64) -> Self {
        Self { amplitude: Amplitude::Gray(amplitude), center_x, center_y, sigma_x, sigma_y, theta }
    }

    /// Checks the geometric invariants against a `width × height` patch.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let finite = [self.center_x, self.center_y, self.sigma_x, self.sigma_y, self.theta]
            .iter()
            .chain(self.amplitude.as_slice())
            .all(|v| v.is_finite());
        if !finite {
            return Err(GapError::invalid("blob parameters must be finite"));
        }
        if self.sigma_x < MIN_SIGMA || self.sigma_y < MIN_SIGMA {
            return Err(GapError::invalid(format!(
                "blob sigma ({}, {}) below minimum {MIN_SIGMA}",
                self.sigma_x, self.sigma_y
            )));
        }
        let margin = 2.0 * self.sigma_x.max(self.sigma_y);
        let (w, h) = (width as f64, height as f64);
        if self.center_x < -margin
            || self.center_x > w - 1.0 + margin
            || self.center_y < -margin
            || self.center_y > h - 1.0 + margin
        {
            return Err(GapError::invalid("blob center too far outside the patch"));
        }
        Ok(())
    }
}

/// A rendered blob: per-pixel intensity deltas, interleaved by channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl Field {
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.values[(row * self.width + col) * self.channels + channel]
    }
}

pub fn render_blob(blob: &GaussianBlob, width: usize, height: usize) -> Result<Field> {
    if width == 0 || height == 0 {
        return Err(GapError::invalid("render dimensions must be positive"));
    }
    blob.validate(width, height)?;

    let (sin_t, cos_t) = blob.theta.sin_cos();
    let inv_x = 1.0 / (2.0 * blob.sigma_x * blob.sigma_x);
    let inv_y = 1.0 / (2.0 * blob.sigma_y * blob.sigma_y);
    let amps = blob.amplitude.as_slice();
    let channels = amps.len();

    let mut values = Vec::with_capacity(width * height * channels);
    for row in 0..height {
        let dy = row as f64 - blob.center_y;
        for col in 0..width {
            let dx = col as f64 - blob.center_x;
            let u = cos_t * dx + sin_t * dy;
            let v = -sin_t * dx + cos_t * dy;
            let shape = (-(u * u * inv_x + v * v * inv_y)).exp();
            values.extend(amps.iter().map(|a| a * shape));
        }
    }
    Ok(Field { width, height, channels, values })
}

/// Ranges the blob sampler draws from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub a_max: f64,
    pub sigma_min: f64,
    /// Lower end of the log-uniform spread range.
    pub sigma_lo: f64,
    /// Upper end of the log-uniform spread range.
    pub sigma_hi: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { a_max: 1.0, sigma_min: 1.0, sigma_lo: 1.5, sigma_hi: 12.0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_max > 0.0 && self.a_max.is_finite()) {
            return Err(GapError::invalid("a_max must be positive"));
        }
        if !(self.sigma_min >= MIN_SIGMA) {
            return Err(GapError::invalid(format!("sigma_min must be at least {MIN_SIGMA}")));
        }
        if !(self.sigma_lo >= self.sigma_min && self.sigma_hi >= self.sigma_lo && self.sigma_hi.is_finite()) {
            return Err(GapError::invalid("sigma range must satisfy sigma_min <= sigma_lo <= sigma_hi"));
        }
        Ok(())
    }
}

/// Shape of the patch the sampler is drawing blobs for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlobDomain {
    pub width: usize,
    pub height: usize,
    pub symmetric: bool,
    pub channels: usize,
}

pub fn sample_blob<R: Rng + ?Sized>(
    rng: &mut R,
    config: &SamplerConfig,
    domain: BlobDomain,
) -> Result<GaussianBlob> {
    config.validate()?;
    if domain.width == 0 || domain.height == 0 {
        return Err(GapError::invalid("patch dimensions must be positive"));
    }
    if domain.symmetric && domain.width % 2 != 0 {
        return Err(GapError::invalid("symmetric patches need an even width"));
    }
    let x_extent = if domain.symmetric { domain.width / 2 } else { domain.width } as f64;

    let mut draw_amp = || rng.gen_range(-config.a_max..=config.a_max);
    let amplitude = match domain.channels {
        1 => Amplitude::Gray(draw_amp()),
        3 => Amplitude::Color([draw_amp(), draw_amp(), draw_amp()]),
        c => return Err(GapError::invalid(format!("unsupported channel count {c}"))),
    };
    let center_x = rng.gen_range(0.0..x_extent);
    let center_y = rng.gen_range(0.0..domain.height as f64);
    let (ln_lo, ln_hi) = (config.sigma_lo.ln(), config.sigma_hi.ln());
    let mut draw_sigma = || {
        if ln_hi > ln_lo {
            rng.gen_range(ln_lo..ln_hi).exp().max(config.sigma_lo)
        } else {
            config.sigma_lo
        }
    };
    let sigma_x = draw_sigma();
    let sigma_y = draw_sigma();
    let theta = rng.gen_range(0.0..PI);

    Ok(GaussianBlob { amplitude, center_x, center_y, sigma_x, sigma_y, theta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const W: usize = 72;
    const H: usize = 28;

    fn domain(symmetric: bool) -> BlobDomain {
        BlobDomain { width: W, height: H, symmetric, channels: 1 }
    }

    /// Straight transcription of the blob formula, one pixel at a time.
    fn naive_pixel(b: &GaussianBlob, x: f64, y: f64) -> f64 {
        let a = match b.amplitude {
            Amplitude::Gray(a) => a,
            Amplitude::Color(_) => unreachable!(),
        };
        let dx = x - b.center_x;
        let dy = y - b.center_y;
        let u = dx * (-b.theta).cos() - dy * (-b.theta).sin();
        let v = dx * (-b.theta).sin() + dy * (-b.theta).cos();
        a * (-(u.powi(2) / (2.0 * b.sigma_x.powi(2)) + v.powi(2) / (2.0 * b.sigma_y.powi(2)))).exp()
    }

    #[test]
    fn zero_amplitude_renders_zero() {
        let b = GaussianBlob::gray(0.0, 10.3, 4.1, 3.0, 7.0, 1.1);
        let f = render_blob(&b, W, H).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn center_value_equals_amplitude() {
        for theta in [0.0, 0.4, 2.9] {
            let b = GaussianBlob::gray(0.8, 13.0, 9.0, 2.5, 6.0, theta);
            let f = render_blob(&b, W, H).unwrap();
            assert_eq!(f.get(9, 13, 0), 0.8);
            assert!(f.values.iter().all(|v| v.abs() <= 0.8));
        }
    }

    #[test]
    fn seeded_blob_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = sample_blob(&mut rng, &SamplerConfig::default(), domain(false)).unwrap();
        let f = render_blob(&b, W, H).unwrap();
        for row in 0..H {
            for col in 0..W {
                let want = naive_pixel(&b, col as f64, row as f64);
                assert!((f.get(row, col, 0) - want).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn theta_has_period_pi() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let b = sample_blob(&mut rng, &SamplerConfig::default(), domain(false)).unwrap();
            let flipped = GaussianBlob { theta: b.theta + PI, ..b };
            let f1 = render_blob(&b, W, H).unwrap();
            let f2 = render_blob(&flipped, W, H).unwrap();
            let diff = f1.values.iter().zip(&f2.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff <= 1e-9, "diff {diff}");
        }
    }

    #[test]
    fn color_blob_scales_one_shape_per_channel() {
        let b = GaussianBlob {
            amplitude: Amplitude::Color([0.5, -0.25, 1.0]),
            ..GaussianBlob::gray(0.0, 5.0, 5.0, 2.0, 3.0, 0.3)
        };
        let f = render_blob(&b, 12, 10).unwrap();
        assert_eq!(f.channels, 3);
        assert_eq!(f.get(5, 5, 0), 0.5);
        assert_eq!(f.get(5, 5, 1), -0.25);
        let ratio = f.get(2, 7, 2) / f.get(2, 7, 0);
        assert!((ratio - 2.0).abs() < 1e-12);
    }

    #[test]
    fn render_rejects_bad_input() {
        let b = GaussianBlob::gray(0.5, 3.0, 3.0, 2.0, 2.0, 0.0);
        assert!(matches!(render_blob(&b, 0, 5), Err(GapError::InvalidArgument(_))));
        let thin = GaussianBlob { sigma_y: 0.1, ..b };
        assert!(matches!(render_blob(&thin, 10, 10), Err(GapError::InvalidArgument(_))));
        let far = GaussianBlob { center_x: 100.0, ..b };
        assert!(render_blob(&far, 10, 10).is_err());
    }

    #[test]
    fn sampler_is_deterministic_per_state() {
        let cfg = SamplerConfig::default();
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            assert_eq!(
                sample_blob(&mut r1, &cfg, domain(true)).unwrap(),
                sample_blob(&mut r2, &cfg, domain(true)).unwrap()
            );
        }
    }

    #[test]
    fn sampler_respects_ranges() {
        let cfg = SamplerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10_000 {
            let b = sample_blob(&mut rng, &cfg, domain(true)).unwrap();
            assert!(b.amplitude.max_abs() <= cfg.a_max);
            assert!(b.sigma_x >= cfg.sigma_min && b.sigma_y >= cfg.sigma_min);
            assert!(b.sigma_x <= cfg.sigma_hi && b.sigma_y <= cfg.sigma_hi);
            assert!((0.0..PI).contains(&b.theta));
            // left half only in symmetric mode
            assert!(b.center_x >= 0.0 && b.center_x < (W / 2) as f64);
            assert!(b.center_x < (W / 2) as f64 + 2.0 * b.sigma_x);
            assert!(b.validate(W, H).is_ok());
        }
    }

    #[test]
    fn sampler_rejects_invalid_config() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bad = [
            SamplerConfig { a_max: 0.0, ..Default::default() },
            SamplerConfig { sigma_min: 0.0, ..Default::default() },
            SamplerConfig { sigma_lo: 5.0, sigma_hi: 2.0, ..Default::default() },
            SamplerConfig { sigma_lo: 0.8, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(sample_blob(&mut rng, &cfg, domain(false)), Err(GapError::InvalidArgument(_))));
        }
        let odd = BlobDomain { width: 71, ..domain(true) };
        assert!(sample_blob(&mut rng, &SamplerConfig::default(), odd).is_err());
    }
}
