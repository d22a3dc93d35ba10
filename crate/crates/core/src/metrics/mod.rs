//! Image quality metrics (PSNR, SSIM) and training diagnostics: radial
//! power spectra, first-principal-component feature maps and gradient
//! magnitude histograms.

mod diagnostics;
mod quality;

pub use diagnostics::{
    feature_pca_map, gradient_histogram, histograms_to_csv, power_spectrum, radial_power_spectrum, top_eigenpairs,
    GradientHistogram, PcaMap, RadialBin, RadialSpectrum, GRADIENT_FLOOR,
};
pub use quality::{psnr, psnr_from_mse, psnr_values, ssim, ssim_kernel, SSIM_SIGMA, SSIM_WINDOW};
