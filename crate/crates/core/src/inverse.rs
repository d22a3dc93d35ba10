//! Measurement operators and inverse-problem fitting (denoising,
//! super-resolution).
//!
//! The downsampling operator is a non-overlapping block average. Noise
//! levels are expressed as the SNR of the noisy image relative to the clean
//! one, `10·log10(Σ clean² / Σ (noisy − clean)²)`; [`calibrate_peak`] finds the
//! Poisson peak that realizes a requested SNR.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::autodiff::{block_average, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::fit::{run_fit, BestIterate, FitLog, FitOptions, FitProblem, TrainConfig};
use crate::inr::{make_coord_grid, Activation, ImageSignal, MlpParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForwardOperator {
    Identity,
    Downsample { factor: usize },
}

impl ForwardOperator {
    pub fn output_dims(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        match *self {
            ForwardOperator::Identity => Ok((height, width)),
            ForwardOperator::Downsample { factor } => {
                if factor < 2 || !height.is_multiple_of(factor) || !width.is_multiple_of(factor) {
                    return Err(Error::Config(format!(
                        "downsample factor {factor} must be >= 2 and divide {height}x{width}"
                    )));
                }
                Ok((height / factor, width / factor))
            }
        }
    }

    pub fn output_rows(&self, height: usize, width: usize) -> Result<usize> {
        self.output_dims(height, width).map(|(h, w)| h * w)
    }

    /// Applies the operator to a `[height·width, channels]` tensor.
    pub fn apply(&self, image: &Tensor, height: usize, width: usize) -> Result<Tensor> {
        match *self {
            ForwardOperator::Identity => Ok(image.clone()),
            ForwardOperator::Downsample { factor } => {
                self.output_dims(height, width)?;
                block_average(image, height, width, factor)
            }
        }
    }

    /// Records the operator on a tape (identity records nothing).
    pub fn record(&self, tape: &mut Tape, x: Var, height: usize, width: usize) -> Result<Var> {
        match *self {
            ForwardOperator::Identity => Ok(x),
            ForwardOperator::Downsample { factor } => {
                self.output_dims(height, width)?;
                tape.block_average(x, height, width, factor)
            }
        }
    }
}

/// Applies `op` to an image.
pub fn apply_operator(op: &ForwardOperator, image: &ImageSignal) -> Result<ImageSignal> {
    let (h, w, c) = image.dims();
    let (oh, ow) = op.output_dims(h, w)?;
    let out = op.apply(&image.to_tensor(), h, w)?;
    ImageSignal::from_clamped(oh, ow, c, out.data())
}

/// Per pixel `Poisson(pixel · peak) / peak`, clamped to `[0, 1]`.
pub fn add_poisson_noise(image: &ImageSignal, peak: f64, seed: u64) -> Result<ImageSignal> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::Config(format!("Poisson peak must be positive, got {peak}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(image.pixels().len());
    for &v in image.pixels() {
        let lambda = v * peak;
        let sample = if lambda > 0.0 {
            Poisson::new(lambda)
                .map_err(|e| Error::Config(format!("Poisson rate {lambda}: {e}")))?
                .sample(&mut rng)
        } else {
            0.0
        };
        out.push((sample / peak).clamp(0.0, 1.0));
    }
    let (h, w, c) = image.dims();
    ImageSignal::new(h, w, c, out)
}

/// `10·log10(Σ clean² / Σ (noisy − clean)²)`; +∞ when the images are equal.
pub fn snr_db(clean: &ImageSignal, noisy: &ImageSignal) -> Result<f64> {
    if clean.dims() != noisy.dims() {
        return Err(Error::shape("snr_db", clean.dims(), noisy.dims()));
    }
    let signal: f64 = clean.pixels().iter().map(|v| v * v).sum();
    let noise: f64 = clean
        .pixels()
        .iter()
        .zip(noisy.pixels())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

/// Bisection on `log(peak)` for the peak whose realized noise (under `seed`)
/// gives the requested SNR. Returns `(peak, realized SNR)`.
pub fn calibrate_peak(clean: &ImageSignal, target_snr_db: f64, seed: u64) -> Result<(f64, f64)> {
    let snr_at = |peak: f64| -> Result<f64> { snr_db(clean, &add_poisson_noise(clean, peak, seed)?) };
    let (mut lo, mut hi) = (1e-3f64.ln(), 1e7f64.ln());
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if snr_at(mid.exp())? < target_snr_db {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let peak = (0.5 * (lo + hi)).exp();
    Ok((peak, snr_at(peak)?))
}

/// A degraded observation of a latent image.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub observed: ImageSignal,
    pub operator: ForwardOperator,
    /// Only used to score the latent estimate.
    pub ground_truth: Option<ImageSignal>,
}

impl Measurement {
    /// Latent dimensions implied by the observation and operator.
    pub fn latent_dims(&self) -> (usize, usize) {
        let (h, w, _) = self.observed.dims();
        match self.operator {
            ForwardOperator::Identity => (h, w),
            ForwardOperator::Downsample { factor } => (h * factor, w * factor),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InverseFit {
    pub params: MlpParams,
    pub log: FitLog,
    /// Peak latent PSNR (requires ground truth); otherwise the best
    /// measurement-space PSNR.
    pub best: BestIterate,
    pub best_params: MlpParams,
}

/// Fits `init` so that `A(render(params))` matches the observation.
pub fn fit_inverse(
    init: MlpParams,
    activation: &Activation,
    meas: &Measurement,
    train: &TrainConfig,
    options: &FitOptions,
) -> Result<InverseFit> {
    let (lh, lw) = meas.latent_dims();
    let (oh, ow) = meas.operator.output_dims(lh, lw)?;
    if (oh, ow) != (meas.observed.height(), meas.observed.width()) {
        return Err(Error::shape(
            "fit_inverse (operator output vs observed)",
            (oh, ow),
            meas.observed.dims(),
        ));
    }
    if let Some(gt) = &meas.ground_truth {
        if gt.dims() != (lh, lw, meas.observed.channels()) {
            return Err(Error::shape(
                "fit_inverse (latent vs ground truth)",
                (lh, lw, meas.observed.channels()),
                gt.dims(),
            ));
        }
    }
    let problem = FitProblem {
        grid: make_coord_grid(lh, lw)?,
        operator: meas.operator,
        observed: meas.observed.to_tensor(),
        channels: meas.observed.channels(),
        reference: meas.ground_truth.clone(),
    };
    let options = FitOptions {
        track_best: true,
        ..options.clone()
    };
    let out = run_fit(init, activation, &problem, train, &options)?;
    let best_params = out.best_params.unwrap_or_else(|| out.params.clone());
    Ok(InverseFit {
        params: out.params,
        log: out.log,
        best: out.best,
        best_params,
    })
}
