use std::fmt::Write as _;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::inr::ImageSignal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialBin {
    /// Integer distance from DC.
    pub radius: usize,
    /// Mean of `log10(power + floor)` over the frequencies in this ring.
    pub mean_log_power: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialSpectrum {
    pub bins: Vec<RadialBin>,
    /// `Σ |F|²` over all frequencies (unnormalized DFT).
    pub total_power: f64,
    /// Additive floor inside the logarithm.
    pub floor: f64,
}

impl RadialSpectrum {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("radius,mean_log10_power,count\n");
        for b in &self.bins {
            let _ = writeln!(out, "{},{:e},{}", b.radius, b.mean_log_power, b.count);
        }
        out
    }
}

/// `|DFT|²` of a single-channel image (luma is taken for multi-channel
/// input), row-major `H × W`. The transform is unnormalized, so
/// `Σ power = H·W·Σ pixel²`.
pub fn power_spectrum(image: &ImageSignal) -> Vec<f64> {
    let luma = image.to_luma();
    let (h, w) = (luma.height(), luma.width());
    let mut buf: Vec<Complex64> = luma.pixels().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(w);
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(h);
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + x] = col[y];
        }
    }
    buf.iter().map(|c| c.norm_sqr()).collect()
}

fn signed_freq(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Power spectrum binned by rounded radius from DC, mean log10 power per bin.
pub fn radial_power_spectrum(image: &ImageSignal) -> RadialSpectrum {
    let (h, w) = (image.height(), image.width());
    let power = power_spectrum(image);
    let total_power: f64 = power.iter().sum();
    let floor = 1e-16 * total_power + f64::MIN_POSITIVE;
    let max_r = ((h / 2).pow(2) as f64 + (w / 2).pow(2) as f64).sqrt().round() as usize;
    let mut sums = vec![0.0; max_r + 1];
    let mut counts = vec![0usize; max_r + 1];
    for ky in 0..h {
        let fy = signed_freq(ky, h);
        for kx in 0..w {
            let fx = signed_freq(kx, w);
            let r = (fy * fy + fx * fx).sqrt().round() as usize;
            sums[r] += (power[ky * w + kx] + floor).log10();
            counts[r] += 1;
        }
    }
    let bins = sums
        .iter()
        .zip(&counts)
        .enumerate()
        .filter(|(_, (_, &c))| c > 0)
        .map(|(radius, (&s, &count))| RadialBin {
            radius,
            mean_log_power: s / count as f64,
            count,
        })
        .collect();
    RadialSpectrum {
        bins,
        total_power,
        floor,
    }
}

/// First principal component of per-pixel features rendered as an image.
#[derive(Debug, Clone)]
pub struct PcaMap {
    /// Projection min-max normalized to `[0, 1]`.
    pub map: ImageSignal,
    /// Unit-norm top eigenvector of the feature covariance.
    pub component: Vec<f64>,
    /// Raw (unnormalized) projection of each centered feature row.
    pub projection: Vec<f64>,
    pub explained_variance_ratio: f64,
    /// All feature rows were identical; the map is uniformly zero.
    pub degenerate: bool,
}

/// Projects mean-centered `[H·W, D]` features on the top eigenvector of their
/// covariance (power iteration). The sign is chosen so the first pixel's
/// projection is non-negative.
pub fn feature_pca_map(features: &Tensor, height: usize, width: usize) -> Result<PcaMap> {
    if features.shape().len() != 2 || features.cols() == 0 {
        return Err(Error::shape("feature_pca_map", features.shape(), "[H·W, D>=1]"));
    }
    let (n, d) = (features.rows(), features.cols());
    if n != height * width {
        return Err(Error::shape("feature_pca_map (rows vs H·W)", n, (height, width)));
    }
    let data = features.data();
    let mut mean = vec![0.0; d];
    for row in data.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<f64> = data
        .chunks_exact(d)
        .flat_map(|row| row.iter().zip(&mean).map(|(v, m)| v - m).collect::<Vec<_>>())
        .collect();

    let mut cov = vec![0.0; d * d];
    for row in centered.chunks_exact(d) {
        for i in 0..d {
            let ri = row[i];
            for j in i..d {
                cov[i * d + j] += ri * row[j];
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    for i in 0..d {
        for j in i..d {
            cov[i * d + j] /= denom;
            cov[j * d + i] = cov[i * d + j];
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    // Variance at the rounding level of the mean counts as constant features.
    let scale = data.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if trace <= d as f64 * (1e-12 * scale).powi(2) {
        return Ok(PcaMap {
            map: ImageSignal::constant(height, width, 1, 0.0)?,
            component: vec![0.0; d],
            projection: vec![0.0; n],
            explained_variance_ratio: 0.0,
            degenerate: true,
        });
    }

    let (eigval, mut component) = top_eigenpairs(&cov, d, 1, 1e-10)
        .into_iter()
        .next()
        .expect("one component requested");
    let mut projection: Vec<f64> = centered
        .chunks_exact(d)
        .map(|row| row.iter().zip(&component).map(|(a, b)| a * b).sum())
        .collect();
    if projection[0] < 0.0 {
        projection.iter_mut().for_each(|p| *p = -*p);
        component.iter_mut().for_each(|c| *c = -*c);
    }
    let lo = projection.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = projection.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let pixels: Vec<f64> = projection
        .iter()
        .map(|p| if span > 0.0 { (p - lo) / span } else { 0.0 })
        .collect();
    Ok(PcaMap {
        map: ImageSignal::from_clamped(height, width, 1, &pixels)?,
        component,
        projection,
        explained_variance_ratio: (eigval / trace).clamp(0.0, 1.0),
        degenerate: false,
    })
}

/// Leading `k` eigenpairs of a symmetric PSD `d × d` matrix by power
/// iteration with Hotelling deflation.
pub fn top_eigenpairs(matrix: &[f64], d: usize, k: usize, tol: f64) -> Vec<(f64, Vec<f64>)> {
    let mut a = matrix.to_vec();
    let mut pairs = Vec::with_capacity(k);
    for _ in 0..k.min(d) {
        // Deterministic, generically non-orthogonal start vector.
        let mut v: Vec<f64> = (0..d).map(|i| 1.0 + 0.01 * ((i * 7919) % 97) as f64).collect();
        normalize(&mut v);
        let mut lambda = 0.0;
        for _ in 0..100_000 {
            let mut next = matvec(&a, &v, d);
            let new_lambda: f64 = next.iter().zip(&v).map(|(x, y)| x * y).sum();
            let norm = normalize(&mut next);
            if norm == 0.0 {
                lambda = 0.0;
                break;
            }
            let delta: f64 = next.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            v = next;
            let converged = (new_lambda - lambda).abs() <= tol * new_lambda.abs().max(1e-300) && delta <= tol.sqrt();
            lambda = new_lambda;
            if converged {
                break;
            }
        }
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] -= lambda * v[i] * v[j];
            }
        }
        pairs.push((lambda, v));
    }
    pairs
}

fn matvec(a: &[f64], v: &[f64], d: usize) -> Vec<f64> {
    a.chunks_exact(d)
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Histogram of `|gradient|` for one layer at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientHistogram {
    pub layer: usize,
    pub iteration: usize,
    /// `bins + 1` log-spaced edges from [`GRADIENT_FLOOR`] to the largest magnitude.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub const GRADIENT_FLOOR: f64 = 1e-12;

/// Bins `|g|` on log-spaced edges over `[1e-12, max |g|]`. Magnitudes at or
/// below the floor land in the first bin; if every magnitude is at or below
/// the floor the upper edge is set to `10 · floor`.
pub fn gradient_histogram(grads: &[f64], bins: usize, layer: usize, iteration: usize) -> GradientHistogram {
    let bins = bins.max(1);
    let max = grads.iter().map(|g| g.abs()).fold(0.0, f64::max);
    let lo = GRADIENT_FLOOR;
    let hi = if max > lo { max } else { 10.0 * lo };
    let span = (hi / lo).ln();
    let edges = (0..=bins)
        .map(|i| {
            if i == bins {
                hi
            } else {
                lo * (span * i as f64 / bins as f64).exp()
            }
        })
        .collect();
    let mut counts = vec![0usize; bins];
    for g in grads {
        let v = g.abs();
        let idx = if v <= lo {
            0
        } else {
            (((v / lo).ln() / span) * bins as f64).floor() as usize
        };
        counts[idx.min(bins - 1)] += 1;
    }
    GradientHistogram {
        layer,
        iteration,
        edges,
        counts,
    }
}

/// Long-format CSV: `layer,iteration,bin_lo,bin_hi,count`.
pub fn histograms_to_csv(hists: &[GradientHistogram]) -> String {
    let mut out = String::from("layer,iteration,bin_lo,bin_hi,count\n");
    for h in hists {
        for (i, c) in h.counts.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{:e},{:e},{}",
                h.layer,
                h.iteration,
                h.edges[i],
                h.edges[i + 1],
                c
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn constant_image_spectrum_is_dc_only() {
        let img = ImageSignal::constant(16, 16, 1, 0.7).unwrap();
        let s = radial_power_spectrum(&img);
        let floor_log = s.floor.log10();
        assert_eq!(s.bins[0].radius, 0);
        assert!(s.bins[0].mean_log_power > floor_log + 10.0);
        for b in &s.bins[1..] {
            assert!((b.mean_log_power - floor_log).abs() < 1e-6, "{b:?}");
        }
        assert!(s.bins.windows(2).all(|w| w[0].radius < w[1].radius));
    }

    #[test]
    fn horizontal_sinusoid_peaks_at_its_frequency() {
        for (n, f) in [(32usize, 5usize), (30, 4)] {
            let px: Vec<f64> = (0..n * n)
                .map(|i| 0.5 + 0.4 * (2.0 * std::f64::consts::PI * f as f64 * (i % n) as f64 / n as f64).cos())
                .collect();
            let img = ImageSignal::new(n, n, 1, px).unwrap();
            let s = radial_power_spectrum(&img);
            let peak = s.bins[1..]
                .iter()
                .max_by(|a, b| a.mean_log_power.total_cmp(&b.mean_log_power))
                .unwrap();
            assert_eq!(peak.radius, f);
        }
    }

    #[test]
    fn parseval_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (h, w) in [(16, 16), (12, 20)] {
            let img = ImageSignal::new(h, w, 1, (0..h * w).map(|_| rng.random()).collect()).unwrap();
            let s = radial_power_spectrum(&img);
            let energy: f64 = img.pixels().iter().map(|v| v * v).sum::<f64>() * (h * w) as f64;
            assert!(((s.total_power - energy) / energy).abs() < 1e-6);
        }
    }

    #[test]
    fn pca_rank_one_explains_everything() {
        let (h, w, d) = (6, 5, 4);
        let u: Vec<f64> = (0..h * w).map(|i| (i as f64 * 0.37).sin()).collect();
        let v = [0.5, -1.0, 2.0, 0.25];
        let data = u.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect();
        let f = Tensor::new(vec![h * w, d], data).unwrap();
        let pca = feature_pca_map(&f, h, w).unwrap();
        assert!((pca.explained_variance_ratio - 1.0).abs() < 1e-9);
        assert!(pca.projection[0] >= 0.0);
        let m = pca.map.pixels();
        assert!(m.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn pca_isotropic_ratio_near_one_over_d() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (n, d) = (4096, 4);
        let data = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let f = Tensor::new(vec![n, d], data).unwrap();
        let pca = feature_pca_map(&f, 64, 64).unwrap();
        // Top sample eigenvalue of a 4×4 Wishart with n = 4096 sits a few
        // percent above 1/d.
        assert!(
            (pca.explained_variance_ratio - 0.25).abs() < 0.05,
            "{}",
            pca.explained_variance_ratio
        );
    }

    #[test]
    fn pca_degenerate_features() {
        let f = Tensor::full(&[12, 3], 0.4);
        let pca = feature_pca_map(&f, 3, 4).unwrap();
        assert!(pca.degenerate);
        assert!(pca.map.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pca_matches_svd_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (n, d) = (200, 6);
        let scales = [3.0, 1.5, 1.0, 0.5, 0.3, 0.1];
        let data: Vec<f64> = (0..n * d)
            .map(|i| scales[i % d] * rng.sample::<f64, _>(StandardNormal) + 0.2)
            .collect();
        let f = Tensor::new(vec![n, d], data.clone()).unwrap();
        let pca = feature_pca_map(&f, 20, 10).unwrap();

        let mut m = nalgebra::DMatrix::from_row_slice(n, d, &data);
        for c in 0..d {
            let mean = m.column(c).mean();
            m.column_mut(c).add_scalar_mut(-mean);
        }
        let svd = m.clone().svd(false, true);
        let (idx, _) = svd.singular_values.argmax();
        let v = svd.v_t.unwrap().row(idx).transpose();
        let oracle = &m * v;
        let dot: f64 = oracle.iter().zip(&pca.projection).map(|(a, b)| a * b).sum();
        let cos = dot.abs() / (oracle.norm() * pca.projection.iter().map(|x| x * x).sum::<f64>().sqrt());
        assert!(cos > 0.9999, "{cos}");
    }

    #[test]
    fn pca_invariant_under_channel_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (n, d) = (100, 3);
        let data: Vec<f64> = (0..n * d)
            .map(|i| [2.0, 1.0, 0.3][i % d] * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let (c, s) = (0.6f64, 0.8f64);
        let rot = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        let rotated: Vec<f64> = data
            .chunks_exact(d)
            .flat_map(|r| (0..d).map(move |i| (0..d).map(|j| rot[i][j] * r[j]).sum::<f64>()))
            .collect();
        let a = feature_pca_map(&Tensor::new(vec![n, d], data).unwrap(), 10, 10).unwrap();
        let b = feature_pca_map(&Tensor::new(vec![n, d], rotated).unwrap(), 10, 10).unwrap();
        for (x, y) in a.map.pixels().iter().zip(b.map.pixels()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_histogram_cases() {
        let zeros = gradient_histogram(&[0.0; 10], 50, 0, 0);
        assert_eq!(zeros.counts[0], 10);
        assert_eq!(zeros.counts.iter().sum::<usize>(), 10);
        assert_eq!(zeros.edges.len(), 51);

        // Edges 1e-12, 1e-9, 1e-6, 1e-3, 1 for 4 bins over [1e-12, 1].
        let g = [1.0, -1e-3 * 2.0, 5e-7, 0.0, -3e-10, 2e-12, 1e-13, 0.5];
        let h = gradient_histogram(&g, 4, 2, 7);
        // Hand binning: [1e-12,1e-9): 3e-10, 2e-12, 1e-13, 0 → 4;
        // [1e-9,1e-6): 5e-7 → 1; [1e-6,1e-3): none; [1e-3,1]: 2e-3, 0.5, 1 → 3.
        assert_eq!(h.counts, vec![4, 1, 0, 3]);
        assert!((h.edges[2] - 1e-6).abs() < 1e-18);
        assert_eq!((h.layer, h.iteration), (2, 7));
        assert!(histograms_to_csv(&[h]).starts_with("layer,iteration,bin_lo,bin_hi,count\n"));
    }
}
