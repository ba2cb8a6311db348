//! Branch-free `sin`/`cos` used by the feature maps.
//!
//! Arguments are reduced by π/2 with a three-part Cody–Waite split and the
//! fdlibm minimax kernels are evaluated on |r| ≤ π/4. Absolute error against
//! the platform libm is below 3e-16 for |x| < 2^19·π/2; larger arguments fall
//! back to `f64::sin_cos`.

#![allow(clippy::excessive_precision)]

use std::f64::consts::FRAC_2_PI;

const PIO2_1: f64 = 1.570_796_326_734_125_614_17e+00;
const PIO2_2: f64 = 6.077_100_506_303_965_976_60e-11;
const PIO2_3: f64 = 2.022_266_248_711_166_455_80e-21;

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

// 1.5 * 2^52: adding it rounds to the nearest integer and leaves the integer
// in the low mantissa bits.
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;
const REDUCTION_LIMIT: f64 = 823_549.0; // ~ 2^19 * π/2

/// Returns `(sin x, cos x)`.
#[inline(always)]
pub fn sin_cos(x: f64) -> (f64, f64) {
    if !(x.abs() < REDUCTION_LIMIT) {
        return x.sin_cos();
    }
    let t = x * FRAC_2_PI + ROUND_MAGIC;
    let quadrant = t.to_bits() as i64;
    let q = t - ROUND_MAGIC;
    let r = ((x - q * PIO2_1) - q * PIO2_2) - q * PIO2_3;
    let z = r * r;
    let s = r + r * z * (S1 + z * (S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)))));
    let c = 1.0 - 0.5 * z + z * z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6)))));
    let (a, b) = if quadrant & 1 != 0 { (c, s) } else { (s, c) };
    let sin = if quadrant & 2 != 0 { -a } else { a };
    let cos = if (quadrant + 1) & 2 != 0 { -b } else { b };
    (sin, cos)
}
