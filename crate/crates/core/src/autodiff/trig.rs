//! `sin` and `cos` from one shared range reduction.
//!
//! `f64::sin_cos` reduces the argument twice; sine layers evaluate both for
//! every activation, so this halves the dominant cost of a training step.
//! Kernels are the fdlibm minimax polynomials on `[-π/4, π/4]`; arguments
//! beyond `REDUCTION_LIMIT` or non-finite ones defer to std.

#![allow(clippy::excessive_precision)] // fdlibm constants, kept digit for digit.

const REDUCTION_LIMIT: f64 = 1.0e6;

const FRAC_2_PI: f64 = std::f64::consts::FRAC_2_PI;
// π/2 split into 33-bit pieces so `n · P1` and `n · P2` are exact for |n| < 2^20.
const P1: f64 = 1.570_796_326_734_125_614_17e+00;
const P2: f64 = 6.077_100_506_303_965_976_60e-11;
const P3: f64 = 2.022_266_248_795_950_631_54e-21;

const S1: f64 = -1.666_666_666_666_663_243_48e-01;
const S2: f64 = 8.333_333_333_322_489_461_24e-03;
const S3: f64 = -1.984_126_982_985_794_931_34e-04;
const S4: f64 = 2.755_731_370_707_006_767_89e-06;
const S5: f64 = -2.505_076_025_340_686_341_95e-08;
const S6: f64 = 1.589_690_995_211_550_102_21e-10;

const C1: f64 = 4.166_666_666_666_660_190_37e-02;
const C2: f64 = -1.388_888_888_887_410_957_49e-03;
const C3: f64 = 2.480_158_728_947_672_941_78e-05;
const C4: f64 = -2.755_731_435_139_066_330_35e-07;
const C5: f64 = 2.087_572_321_298_174_827_90e-09;
const C6: f64 = -1.135_964_755_778_819_482_65e-11;

#[inline]
fn kernel_sin(r: f64, z: f64) -> f64 {
    let v = z * r;
    r + v * (S1 + z * (S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)))))
}

#[inline]
fn kernel_cos(z: f64) -> f64 {
    let p = z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6)))));
    let hz = 0.5 * z;
    let w = 1.0 - hz;
    w + (((1.0 - w) - hz) + z * p)
}

/// `(sin x, cos x)`.
#[inline]
pub fn sin_cos(x: f64) -> (f64, f64) {
    if x.is_nan() || x.abs() >= REDUCTION_LIMIT {
        return x.sin_cos();
    }
    let n = (x * FRAC_2_PI).round();
    let r = ((x - n * P1) - n * P2) - n * P3;
    let z = r * r;
    let (s, c) = (kernel_sin(r, z), kernel_cos(z));
    match (n as i64) & 3 {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}

#[inline]
pub fn sin(x: f64) -> f64 {
    sin_cos(x).0
}
