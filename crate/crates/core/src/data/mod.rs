//! Image I/O, preprocessing, dataset manifests and the synthetic face corpus.

mod io;
pub mod synthetic;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inr::ImageSignal;

pub use io::{load_image, save_image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMode {
    #[default]
    Rgb,
    Gray,
    /// Luma replicated into three channels.
    Gray3,
}

impl ChannelMode {
    pub fn channels(self) -> usize {
        match self {
            ChannelMode::Gray => 1,
            ChannelMode::Rgb | ChannelMode::Gray3 => 3,
        }
    }
}

impl std::str::FromStr for ChannelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(ChannelMode::Rgb),
            "gray" => Ok(ChannelMode::Gray),
            "gray3" => Ok(ChannelMode::Gray3),
            other => Err(Error::Config(format!("unknown channel mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessSpec {
    /// Output is `size × size` after a centered square crop.
    pub size: usize,
    pub channels: ChannelMode,
}

impl Default for PreprocessSpec {
    fn default() -> Self {
        Self {
            size: 178,
            channels: ChannelMode::Rgb,
        }
    }
}

/// Center square crop, bilinear resize (half-pixel centers), channel conversion.
pub fn preprocess(image: &ImageSignal, spec: &PreprocessSpec) -> Result<ImageSignal> {
    if spec.size < 2 {
        return Err(Error::Config(format!("target size must be >= 2, got {}", spec.size)));
    }
    if image.height() < 2 || image.width() < 2 {
        return Err(Error::Data(format!(
            "image {}x{} is smaller than 2x2",
            image.height(),
            image.width()
        )));
    }
    let cropped = center_crop(image);
    let resized = if cropped.height() == spec.size {
        cropped
    } else {
        resize_bilinear(&cropped, spec.size, spec.size)?
    };
    convert_channels(&resized, spec.channels)
}

fn center_crop(image: &ImageSignal) -> ImageSignal {
    let (h, w, c) = image.dims();
    let side = h.min(w);
    if h == w {
        return image.clone();
    }
    let (oy, ox) = ((h - side) / 2, (w - side) / 2);
    let mut px = Vec::with_capacity(side * side * c);
    for y in 0..side {
        let start = ((oy + y) * w + ox) * c;
        px.extend_from_slice(&image.pixels()[start..start + side * c]);
    }
    ImageSignal::new(side, side, c, px).expect("crop within bounds")
}

/// Bilinear resampling with half-pixel-center alignment and edge clamping.
pub fn resize_bilinear(image: &ImageSignal, height: usize, width: usize) -> Result<ImageSignal> {
    let (h, w, c) = image.dims();
    let sy = h as f64 / height as f64;
    let sx = w as f64 / width as f64;
    let sample = |dst: usize, scale: f64, n: usize| -> (usize, usize, f64) {
        let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, src - i0 as f64)
    };
    let mut px = Vec::with_capacity(height * width * c);
    for y in 0..height {
        let (y0, y1, fy) = sample(y, sy, h);
        for x in 0..width {
            let (x0, x1, fx) = sample(x, sx, w);
            for ch in 0..c {
                let top = image.get(y0, x0, ch) * (1.0 - fx) + image.get(y0, x1, ch) * fx;
                let bot = image.get(y1, x0, ch) * (1.0 - fx) + image.get(y1, x1, ch) * fx;
                px.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    ImageSignal::from_clamped(height, width, c, &px)
}

fn convert_channels(image: &ImageSignal, mode: ChannelMode) -> Result<ImageSignal> {
    let (h, w, c) = image.dims();
    let replicate = |img: &ImageSignal| {
        let px: Vec<f64> = img.pixels().iter().flat_map(|&v| [v, v, v]).collect();
        ImageSignal::new(h, w, 3, px)
    };
    match (mode, c) {
        (ChannelMode::Rgb, 3) | (ChannelMode::Gray, 1) => Ok(image.clone()),
        (ChannelMode::Rgb, 1) => replicate(image),
        (ChannelMode::Gray, _) => Ok(image.to_luma()),
        (ChannelMode::Gray3, _) => replicate(&image.to_luma()),
        (ChannelMode::Rgb, _) => Err(Error::Data(format!("cannot convert {c} channels to rgb"))),
    }
}

/// Load + preprocess in one step.
pub fn load_preprocessed(path: &Path, spec: &PreprocessSpec) -> Result<ImageSignal> {
    preprocess(&load_image(path)?, spec)
}

/// Seeded train/test split. JSON form:
/// `{"name": str, "seed": int, "train": [paths], "test": [paths]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub seed: u64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text)?;
        if let Some(dup) = m.train.iter().find(|p| m.test.contains(p)) {
            return Err(Error::Data(format!("{dup} appears in both splits")));
        }
        Ok(m)
    }

    /// Paths relative to the manifest's directory are resolved against `base`.
    pub fn resolve(&self, base: &Path, split: &[String]) -> Vec<std::path::PathBuf> {
        split
            .iter()
            .map(|p| {
                let p = Path::new(p);
                if p.is_absolute() {
                    p.to_path_buf()
                } else {
                    base.join(p)
                }
            })
            .collect()
    }
}

/// Shuffles `paths` with `seed`; the first `n_train` become the train split.
pub fn make_split(name: &str, paths: &[String], n_train: usize, seed: u64) -> Result<DatasetManifest> {
    if n_train >= paths.len() {
        return Err(Error::Data(format!(
            "need more than {n_train} paths for a train/test split, got {}",
            paths.len()
        )));
    }
    let mut unique = paths.to_vec();
    unique.sort();
    unique.dedup();
    if unique.len() != paths.len() {
        return Err(Error::Data("duplicate paths in split input".into()));
    }
    let mut shuffled = paths.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = shuffled.split_off(n_train);
    Ok(DatasetManifest {
        name: name.to_string(),
        seed,
        train: shuffled,
        test,
    })
}
