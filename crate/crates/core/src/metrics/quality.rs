use crate::error::{Error, Result};
use crate::inr::ImageSignal;

/// PSNR in dB for unit dynamic range: `10·log10(1 / MSE)`. Identical inputs
/// give `f64::INFINITY`.
pub fn psnr(a: &ImageSignal, b: &ImageSignal) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::shape("psnr", a.dims(), b.dims()));
    }
    Ok(psnr_values(a.pixels(), b.pixels(), false))
}

/// PSNR over raw slices; `clamp_a` clamps the first operand to `[0, 1]` first.
pub fn psnr_values(a: &[f64], b: &[f64], clamp_a: bool) -> f64 {
    let mse = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let x = if clamp_a { x.clamp(0.0, 1.0) } else { x };
            (x - y) * (x - y)
        })
        .sum::<f64>()
        / a.len() as f64;
    psnr_from_mse(mse)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Normalized 1-D Gaussian taps of the SSIM window.
pub fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Mean SSIM over all fully contained 11×11 Gaussian windows (σ = 1.5,
/// K1 = 0.01, K2 = 0.03, L = 1). RGB is converted to luma first.
pub fn ssim(a: &ImageSignal, b: &ImageSignal) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::shape("ssim", a.dims(), b.dims()));
    }
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::Data(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    if a == b {
        return Ok(1.0);
    }
    let (la, lb) = (a.to_luma(), b.to_luma());
    let (h, w) = (a.height(), a.width());
    let x = la.pixels();
    let y = lb.pixels();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();

    let k = ssim_kernel();
    let mu_x = filter_valid(x, h, w, &k);
    let mu_y = filter_valid(y, h, w, &k);
    let s_xx = filter_valid(&xx, h, w, &k);
    let s_yy = filter_valid(&yy, h, w, &k);
    let s_xy = filter_valid(&xy, h, w, &k);

    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let mut total = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = s_xx[i] - mx * mx;
        let vy = s_yy[i] - my * my;
        let cov = s_xy[i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(total / mu_x.len() as f64)
}

/// Separable "valid" filtering: output is `(h − 10) × (w − 10)`.
fn filter_valid(img: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &img[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = src[x..x + SSIM_WINDOW].iter().zip(k).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|t| rows[(y + t) * ow + x] * k[t]).sum();
        }
    }
    out
}
