//! Standard normal density, tails and hazard rate.
//!
//! The right tail switches to a Mills-ratio continued fraction above
//! `z = 8`, where `erfc` starts losing relative precision and eventually
//! underflows.

use core::f64::consts::{FRAC_1_SQRT_2, PI};

const TAIL_SWITCH: f64 = 8.0;
const CF_TERMS: u32 = 96;

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    libm::exp(-0.5 * z * z) / libm::sqrt(2.0 * PI)
}

/// Standard normal cumulative distribution function.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(z)`, accurate in relative terms for large `z`.
pub fn norm_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

/// Hazard rate of the standard normal, `φ(z) / (1 - Φ(z))`.
///
/// Total on finite inputs. For `z > 8` the reciprocal Mills ratio is
/// evaluated by backward recurrence of its continued fraction, so no
/// overflow or `0/0` occurs for large arguments.
pub fn hazard(z: f64) -> f64 {
    if z > TAIL_SWITCH {
        let mut t = z;
        for k in (1..=CF_TERMS).rev() {
            t = z + f64::from(k) / t;
        }
        t
    } else {
        let sf = norm_sf(z);
        if sf == 0.0 {
            return z;
        }
        norm_pdf(z) / sf
    }
}

/// `λ'(z) = λ(z) (λ(z) - z)`.
pub fn hazard_derivative(z: f64) -> f64 {
    let h = hazard(z);
    h * (h - z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hazard_at_zero_is_twice_the_density() {
        let expected = 2.0 / libm::sqrt(2.0 * PI);
        assert!((hazard(0.0) - expected).abs() < 1e-15);
        assert!((hazard(0.0) - 0.797_884_560_802_865_4).abs() < 1e-12);
    }

    #[test]
    fn hazard_vanishes_in_left_tail() {
        assert!(hazard(-30.0).abs() < 1e-12);
        assert!(hazard(-40.0) >= 0.0);
    }

    #[test]
    fn hazard_is_finite_far_right() {
        for z in [8.5, 10.0, 20.0, 39.0, 40.0, 1e3] {
            let h = hazard(z);
            assert!(h.is_finite());
            // λ(z) = z + 1/z - 2/z^3 + ...
            let asym = z + 1.0 / z - 2.0 / (z * z * z);
            assert!((h - asym).abs() < 10.0 / (z * z * z * z * z), "z={z}");
        }
    }

    #[test]
    fn tail_switch_is_continuous() {
        let below = hazard(TAIL_SWITCH - 1e-12);
        let above = hazard(TAIL_SWITCH + 1e-12);
        assert!((below - above).abs() < 1e-10, "{below} vs {above}");
    }

    #[test]
    fn hazard_at_fixed_point() {
        // λ(z) = 2z is solved near 0.6120 (bisection oracle lives in the
        // integration tests); at the rounded point both sides are ~1.224.
        assert!((hazard(0.6120) - 1.2240).abs() < 1e-3);
    }

    #[test]
    fn hazard_monotone_and_dominates_identity() {
        let mut prev = hazard(-10.0);
        let mut z = -10.0;
        while z <= 10.0 {
            let h = hazard(z);
            assert!(h > z, "λ({z}) = {h}");
            if z > -10.0 {
                assert!(h > prev, "not increasing at {z}");
            }
            prev = h;
            z += 0.01;
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for z in [-3.0, -0.5, 0.0, 0.612, 2.0, 7.9, 9.0, 15.0] {
            let h = 1e-5;
            let fd = (hazard(z + h) - hazard(z - h)) / (2.0 * h);
            assert!((fd - hazard_derivative(z)).abs() < 1e-6, "z={z}");
        }
    }
}
