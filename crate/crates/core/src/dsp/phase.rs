//! Wrapped-phase helpers: the quadrant-corrected arctangent used by the
//! phase predictor and the linear anti-wrapping distance used by the phase losses.

use crate::float::Float;

/// `1` for `x >= 0`, `-1` otherwise (note: `sgn_star(0) == 1`).
#[inline]
pub fn sgn_star<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one()
    } else {
        -T::one()
    }
}

/// Phase of the pseudo-complex value `r + i·im`, in `(-π, π]`.
///
/// `arctan(im / r) - π/2 · sgn*(im) · (sgn*(r) - 1)`; the origin maps to 0.
#[inline]
pub fn phi<T: Float>(r: T, im: T) -> T {
    let zero = T::zero();
    if r == zero && im == zero {
        return zero;
    }
    let half_pi = T::FRAC_PI_2();
    // r == 0 (of either sign) would otherwise pick up the sign of -0.0
    let base = if r == zero {
        if im > zero {
            half_pi
        } else {
            -half_pi
        }
    } else {
        (im / r).atan()
    };
    base - half_pi * sgn_star(im) * (sgn_star(r) - T::one())
}

/// `|x - 2π·round(x / 2π)|`, rounding half away from zero. Result in `[0, π]`.
#[inline]
pub fn anti_wrap<T: Float>(x: T) -> T {
    let two_pi = T::PI() + T::PI();
    (x - two_pi * (x / two_pi).round()).abs()
}

/// Signed principal value `x - 2π·round(x / 2π)`; [`anti_wrap`] is its magnitude.
#[inline]
pub(crate) fn principal<T: Float>(x: T) -> T {
    let two_pi = T::PI() + T::PI();
    x - two_pi * (x / two_pi).round()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn phi_hand_values() {
        assert_eq!(phi(1.0, 0.0), 0.0);
        assert!((phi(-1.0, 1.0) - 3.0 * PI / 4.0).abs() < 1e-15);
        assert!((phi(0.0, 1.0) - PI / 2.0).abs() < 1e-15);
        assert!((phi(0.0, -1.0) + PI / 2.0).abs() < 1e-15);
        assert!((phi(-0.0, 1.0) - PI / 2.0).abs() < 1e-15);
        assert_eq!(phi(-1.0, 0.0), PI);
        assert_eq!(phi(0.0, 0.0), 0.0);
    }

    #[test]
    fn phi_agrees_with_atan2_on_axes_and_quadrants() {
        for &(r, i) in &[(2.0, 3.0), (-2.0, 3.0), (-2.0, -3.0), (2.0, -3.0), (1e-300, -1.0), (-5.0, 1e-300)] {
            let want = f64::atan2(i, r);
            assert!((phi(r, i) - want).abs() < 1e-12, "({r}, {i})");
        }
    }

    #[test]
    fn anti_wrap_hand_values() {
        assert_eq!(anti_wrap(0.0), 0.0);
        assert!(anti_wrap(2.0 * PI) < 1e-15);
        assert!((anti_wrap(PI) - PI).abs() < 1e-15);
        assert!((anti_wrap(2.5 * PI) - 0.5 * PI).abs() < 1e-12);
        assert!((anti_wrap(-0.3f64) - 0.3).abs() < 1e-15);
        // half-integer multiples: both rounding choices give π
        assert!((anti_wrap(3.0 * PI) - PI).abs() < 1e-12);
        assert!((anti_wrap(-3.0 * PI) - PI).abs() < 1e-12);
    }

    #[test]
    fn sgn_star_of_zero_is_one() {
        assert_eq!(sgn_star(0.0f32), 1.0);
        assert_eq!(sgn_star(-1e-30f64), -1.0);
    }
}
