//! bfloat16 rounding.
//!
//! Values are kept in `f32`/`f64` containers; these helpers snap them onto the
//! bfloat16 grid (8-bit exponent, 7 explicit mantissa bits) with
//! round-to-nearest, ties-to-even.

/// Largest finite bfloat16 value.
pub const BF16_MAX: f64 = 3.389_531_389_251_535_5e38;

const F32_MIN_NORMAL: f64 = 1.175_494_350_822_287_5e-38;
// The subnormal bf16 grid spacing is 2^-133.
const SUBNORMAL_UP: f64 = f64::from_bits((1023 + 133) << 52);
const SUBNORMAL_DOWN: f64 = f64::from_bits((1023 - 133) << 52);

/// Round an `f64` directly to the nearest bfloat16 value (no intermediate f32 step).
pub fn bf16_round_f64(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    let mag = x.abs();
    let rounded = if mag < F32_MIN_NORMAL {
        (mag * SUBNORMAL_UP).round_ties_even() * SUBNORMAL_DOWN
    } else {
        // 52 - 7 = 45 mantissa bits are dropped.
        let bits = mag.to_bits();
        let lsb = (bits >> 45) & 1;
        let bits = (bits + (1u64 << 44) - 1 + lsb) & !((1u64 << 45) - 1);
        let r = f64::from_bits(bits);
        if r > BF16_MAX {
            f64::INFINITY
        } else {
            r
        }
    };
    rounded.copysign(x)
}

/// Round an `f32` to the nearest bfloat16 value, ties to even. NaN stays NaN.
pub fn bf16_round(x: f32) -> f32 {
    bf16_round_f64(x as f64) as f32
}

/// True when `x` is exactly representable in bfloat16.
pub fn is_bf16_exact(x: f32) -> bool {
    x.is_nan() || x.to_bits() & 0xFFFF == 0
}

/// Upper 16 bits of an `f32` that is already bf16-exact.
pub(crate) fn to_bf16_bits(x: f32) -> u16 {
    (x.to_bits() >> 16) as u16
}

pub(crate) fn from_bf16_bits(bits: u16) -> f32 {
    f32::from_bits((bits as u32) << 16)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Picks between the two bf16 values bracketing `x` by direct comparison.
    fn neighbor_oracle(x: f32) -> f32 {
        let bits = x.to_bits();
        let lower = f32::from_bits(bits & 0xFFFF_0000);
        if lower == x {
            return x;
        }
        let upper = f32::from_bits((bits & 0xFFFF_0000) + 0x1_0000);
        let dl = (x as f64 - lower as f64).abs();
        let du = (upper as f64 - x as f64).abs();
        if dl < du {
            lower
        } else if du < dl {
            upper
        } else if (bits >> 16) & 1 == 0 {
            lower
        } else {
            upper
        }
    }

    #[test]
    fn exact_values_are_kept() {
        assert_eq!(bf16_round(1.0), 1.0);
        assert_eq!(bf16_round(0.0), 0.0);
        assert_eq!(bf16_round(-0.0).to_bits(), (-0.0f32).to_bits());
        assert_eq!(bf16_round(7.0), 7.0);
        assert_eq!(bf16_round(f32::INFINITY), f32::INFINITY);
        assert!(bf16_round(f32::NAN).is_nan());
    }

    #[test]
    fn rounds_1_004() {
        // bf16 neighbours of 1.004 are 1.0 and 1.0078125; the midpoint is
        // 1.00390625, so 1.004 rounds up.
        assert_eq!(neighbor_oracle(1.004), 1.007_812_5);
        assert_eq!(bf16_round(1.004), 1.007_812_5);
        // 1.00390625 is the exact midpoint; ties go to the even mantissa (1.0).
        assert_eq!(bf16_round(1.0 + 2f32.powi(-8)), 1.0);
        // 1.01171875 is the midpoint of 1.0078125 (odd) and 1.015625 (even).
        assert_eq!(bf16_round(1.0 + 3.0 * 2f32.powi(-8)), 1.015_625);
    }

    #[test]
    fn overflow_and_subnormals() {
        assert_eq!(bf16_round(f32::MAX), f32::INFINITY);
        assert_eq!(bf16_round_f64(BF16_MAX), BF16_MAX);
        let tiny = f32::from_bits(1); // smallest f32 subnormal rounds to zero in bf16
        assert_eq!(bf16_round(tiny), 0.0);
        let sub = f32::from_bits(0x0001_8000);
        assert_eq!(bf16_round(sub), neighbor_oracle(sub));
    }

    #[test]
    fn f64_path_does_not_double_round() {
        // Just above the midpoint between 1.0 and 1.0078125: must round up,
        // even though the nearest f32 would be the midpoint itself.
        let x = 1.003_906_25f64 + 1e-12;
        assert_eq!(bf16_round_f64(x), 1.007_812_5);
    }

    proptest! {
        #[test]
        fn matches_neighbor_oracle(bits in any::<u32>()) {
            let x = f32::from_bits(bits);
            prop_assume!(x.is_finite() && x.abs() <= BF16_MAX as f32);
            let got = bf16_round(x);
            let want = neighbor_oracle(x);
            prop_assert_eq!(got.to_bits(), want.to_bits());
        }

        #[test]
        fn idempotent(x in -1e30f32..1e30) {
            let r = bf16_round(x);
            prop_assert_eq!(bf16_round(r), r);
            prop_assert!(is_bf16_exact(r));
        }

        #[test]
        fn monotone(a in -1e30f32..1e30, b in -1e30f32..1e30) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(bf16_round(lo) <= bf16_round(hi));
        }
    }
}
