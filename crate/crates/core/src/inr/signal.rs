use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// An `H × W × C` image with intensities in `[0, 1]`, row-major and
/// channel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSignal {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl ImageSignal {
    /// Validates shape and the `[0, 1]` range.
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Data(format!(
                "image dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::shape(
                "ImageSignal::new",
                (height, width, channels),
                pixels.len(),
            ));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("intensity {bad} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    /// Clamps each value into `[0, 1]` (NaN maps to 0).
    pub fn from_clamped(height: usize, width: usize, channels: usize, values: &[f64]) -> Result<Self> {
        let pixels = values
            .iter()
            .map(|&v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Self::new(height, width, channels, pixels)
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    /// `[H·W, C]` tensor view of the pixels, used as a regression target.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.height * self.width, self.channels], self.pixels.clone())
            .expect("consistent by construction")
    }

    /// Luma (0.299 R + 0.587 G + 0.114 B) for 3-channel images; single-channel
    /// images are returned unchanged. Other channel counts average channels.
    pub fn to_luma(&self) -> ImageSignal {
        if self.channels == 1 {
            return self.clone();
        }
        let luma = self
            .pixels
            .chunks_exact(self.channels)
            .map(|px| {
                if self.channels == 3 {
                    0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
                } else {
                    px.iter().sum::<f64>() / px.len() as f64
                }
            })
            .map(|v| v.clamp(0.0, 1.0))
            .collect();
        ImageSignal {
            height: self.height,
            width: self.width,
            channels: 1,
            pixels: luma,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_and_bad_length() {
        assert!(ImageSignal::new(1, 2, 1, vec![0.0, 1.5]).is_err());
        assert!(ImageSignal::new(1, 2, 1, vec![0.0]).is_err());
        assert!(ImageSignal::new(0, 2, 1, vec![]).is_err());
        assert!(ImageSignal::new(1, 2, 1, vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn clamping_constructor_and_luma() {
        let img = ImageSignal::from_clamped(1, 1, 3, &[2.0, -1.0, f64::NAN]).unwrap();
        assert_eq!(img.pixels(), &[1.0, 0.0, 0.0]);
        assert!((img.to_luma().pixels()[0] - 0.299).abs() < 1e-15);
    }
}
