//! Aligned face images and their 8-bit PNG form.

use std::io::Cursor;
use std::path::Path;

use crate::error::{GapError, Result};

/// Side length of every aligned face crop.
pub const IMAGE_SIZE: usize = 112;

/// Interleaved row-major image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(GapError::invalid("image dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(GapError::invalid(format!("unsupported channel count {channels}")));
        }
        if pixels.len() != width * height * channels {
            return Err(GapError::invalid(format!(
                "pixel buffer has {} values, expected {}",
                pixels.len(),
                width * height * channels
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(GapError::invalid(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, channels, pixels })
    }

    /// A 112×112 image filled with one value.
    pub fn filled(channels: usize, value: f64) -> Result<Self> {
        Self::new(IMAGE_SIZE, IMAGE_SIZE, channels, vec![value; IMAGE_SIZE * IMAGE_SIZE * channels])
    }

    pub(crate) fn from_raw_unchecked(
        width: usize,
        height: usize,
        channels: usize,
        pixels: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(pixels.len(), width * height * channels);
        Self { width, height, channels, pixels }
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

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.pixels[(row * self.width + col) * self.channels + channel]
    }

    pub fn is_aligned_size(&self) -> bool {
        self.width == IMAGE_SIZE && self.height == IMAGE_SIZE
    }

    /// Channel-mean grayscale copy. One-channel images are cloned.
    pub fn to_grayscale(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let pixels = self
            .pixels
            .chunks_exact(self.channels)
            .map(|px| px.iter().sum::<f64>() / self.channels as f64)
            .collect();
        Image::from_raw_unchecked(self.width, self.height, 1, pixels)
    }

    /// Replicates a grayscale image into three identical channels.
    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let pixels = self.pixels.iter().flat_map(|&p| [p, p, p]).collect();
        Image::from_raw_unchecked(self.width, self.height, 3, pixels)
    }

    /// Snaps every pixel to the nearest `k / 255`, the set of values an
    /// 8-bit PNG can carry losslessly.
    pub fn quantized(&self) -> Image {
        let pixels = self.pixels.iter().map(|&p| to_u8(p) as f64 / 255.0).collect();
        Image::from_raw_unchecked(self.width, self.height, self.channels, pixels)
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let color = match self.channels {
            1 => png::ColorType::Grayscale,
            _ => png::ColorType::Rgb,
        };
        let data: Vec<u8> = self.pixels.iter().map(|&p| to_u8(p)).collect();
        encode_png(self.width, self.height, color, &data)
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Image> {
        let decoder = png::Decoder::new(Cursor::new(bytes));
        let mut reader = decoder.read_info()?;
        let mut buf = vec![0u8; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf)?;
        if info.bit_depth != png::BitDepth::Eight {
            return Err(GapError::Png(format!("unsupported bit depth {:?}", info.bit_depth)));
        }
        let channels = match info.color_type {
            png::ColorType::Grayscale => 1,
            png::ColorType::Rgb => 3,
            other => return Err(GapError::Png(format!("unsupported color type {other:?}"))),
        };
        let (width, height) = (info.width as usize, info.height as usize);
        let row_len = width * channels;
        let mut pixels = Vec::with_capacity(row_len * height);
        for row in buf[..info.line_size * height].chunks_exact(info.line_size) {
            pixels.extend(row[..row_len].iter().map(|&b| b as f64 / 255.0));
        }
        Image::new(width, height, channels, pixels)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_png_bytes()?)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Image> {
        let bytes = std::fs::read(path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => GapError::NotFound(path.display().to_string()),
                _ => GapError::Io(e),
            })?;
        Image::from_png_bytes(&bytes)
    }
}

pub(crate) fn to_u8(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

pub(crate) fn encode_png(
    width: usize,
    height: usize,
    color: png::ColorType,
    data: &[u8],
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
        encoder.set_color(color);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(data)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(Image::new(2, 1, 1, vec![0.0, 1.5]).is_err());
        assert!(Image::new(2, 1, 2, vec![0.0; 4]).is_err());
        assert!(Image::new(0, 1, 1, vec![]).is_err());
    }

    #[test]
    fn quantized_image_survives_png_round_trip() {
        let pixels: Vec<f64> = (0..IMAGE_SIZE * IMAGE_SIZE * 3)
            .map(|i| ((i * 37) % 1000) as f64 / 999.0)
            .collect();
        let img = Image::new(IMAGE_SIZE, IMAGE_SIZE, 3, pixels).unwrap().quantized();
        let back = Image::from_png_bytes(&img.to_png_bytes().unwrap()).unwrap();
        assert_eq!(img, back);

        let gray = img.to_grayscale().quantized();
        let back = Image::from_png_bytes(&gray.to_png_bytes().unwrap()).unwrap();
        assert_eq!(gray, back);
    }

    #[test]
    fn grayscale_is_channel_mean() {
        let img = Image::new(1, 1, 3, vec![0.0, 0.3, 0.9]).unwrap();
        assert!((img.to_grayscale().pixels()[0] - 0.4).abs() < 1e-15);
        assert_eq!(img.to_grayscale().to_rgb().channels(), 3);
    }
}
