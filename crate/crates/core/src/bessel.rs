//! Bessel functions `J0`, `J1` on `[0, 50]` and the first zero of `J0`.
//!
//! Power series up to [`SWITCH`], Hankel's asymptotic expansion beyond.

use std::f64::consts::{FRAC_PI_4, PI};

use crate::error::{Error, Result};

/// Largest argument handled by the power series.
pub const SWITCH: f64 = 12.0;
/// Largest supported argument.
pub const X_MAX: f64 = 50.0;

fn check(x: f64) -> Result<()> {
    if !(0.0..=X_MAX).contains(&x) {
        return Err(Error::Domain {
            what: "Bessel argument",
            value: x,
            range: "[0, 50]",
        });
    }
    Ok(())
}

/// `J_ν(x)` for ν ∈ {0, 1} by the defining series, summed until terms drop below rounding.
pub fn series(nu: u32, x: f64) -> f64 {
    let q = -0.25 * x * x;
    // First term (x/2)^ν / ν!
    let mut term = if nu == 0 { 1.0 } else { 0.5 * x };
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + nu as f64));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs().max(1e-300) && k > 2.0 {
            break;
        }
        if k > 200.0 {
            break;
        }
        k += 1.0;
    }
    sum
}

/// Hankel asymptotic expansion of `J_ν(x)`, truncated at its smallest term.
pub fn asymptotic(nu: u32, x: f64) -> f64 {
    let mu = 4.0 * (nu * nu) as f64;
    let z = 8.0 * x;
    let (mut p, mut q) = (1.0, 0.0);
    let mut a = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        a *= (mu - odd * odd) / (kf * z);
        if a.abs() >= last {
            break;
        }
        last = a.abs();
        // a_k / x^k with sign pattern (-1)^{floor(k/2)} on P (even k) and Q (odd k).
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * a;
        } else {
            q += sign * a;
        }
        if a.abs() < 1e-17 {
            break;
        }
    }
    let omega = x - 0.5 * nu as f64 * PI - FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * omega.cos() - q * omega.sin())
}

fn eval(nu: u32, x: f64) -> f64 {
    if x <= SWITCH {
        series(nu, x)
    } else {
        asymptotic(nu, x)
    }
}

pub fn j0(x: f64) -> Result<f64> {
    check(x)?;
    Ok(eval(0, x))
}

pub fn j1(x: f64) -> Result<f64> {
    check(x)?;
    Ok(eval(1, x))
}

/// Unchecked `J0` for arguments already known to lie in `[0, 50]`.
pub(crate) fn j0_unchecked(x: f64) -> f64 {
    eval(0, x)
}

pub(crate) fn j1_unchecked(x: f64) -> f64 {
    eval(1, x)
}

/// First positive zero of `J0` and `J1` there, computed once.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BesselTable {
    pub xi1: f64,
    /// `|J0'(ξ1)| = J1(ξ1)`.
    pub j1_at_xi1: f64,
}

impl BesselTable {
    pub fn get() -> Self {
        static TABLE: std::sync::OnceLock<BesselTable> = std::sync::OnceLock::new();
        *TABLE.get_or_init(|| {
            let xi1 = first_zero_j0();
            BesselTable {
                xi1,
                j1_at_xi1: series(1, xi1),
            }
        })
    }
}

/// Bisection on `[2, 3]` down to a bracket of width `1e-12`.
fn first_zero_j0() -> f64 {
    let (mut lo, mut hi) = (2.0_f64, 3.0_f64);
    let mut flo = series(0, lo);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        let fm = series(0, mid);
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Reference values from a 30-digit evaluation (mpmath).
    const J0_REF: [(f64, f64); 6] = [
        (1.0, 0.765_197_686_557_966_6),
        (5.0, -0.177_596_771_314_338_3),
        (10.0, -0.245_935_764_451_348_3),
        (15.0, -0.014_224_472_826_780_773),
        (30.0, -0.086_367_983_581_040_21),
        (50.0, 0.055_812_327_669_251_815),
    ];
    const J1_REF: [(f64, f64); 6] = [
        (1.0, 0.440_050_585_744_933_5),
        (5.0, -0.327_579_137_591_465_2),
        (10.0, 0.043_472_746_168_861_44),
        (15.0, 0.205_104_038_613_522_8),
        (30.0, -0.118_751_062_616_622_94),
        (50.0, -0.097_511_828_125_175_14),
    ];

    #[test]
    fn reference_values() {
        for (x, v) in J0_REF {
            assert!((j0(x).unwrap() - v).abs() < 1e-10, "J0({x})");
        }
        for (x, v) in J1_REF {
            assert!((j1(x).unwrap() - v).abs() < 1e-10, "J1({x})");
        }
    }

    #[test]
    fn origin_and_zero() {
        assert_eq!(j0(0.0).unwrap(), 1.0);
        assert_eq!(j1(0.0).unwrap(), 0.0);
        let t = BesselTable::get();
        assert!(j0(t.xi1).unwrap().abs() < 1e-12);
        assert!((t.xi1 - 2.404826).abs() < 1e-6);
        assert!((t.j1_at_xi1 - 0.519147).abs() < 1e-6);
    }

    #[test]
    fn branches_agree_at_switch() {
        for nu in [0, 1] {
            let d = (series(nu, SWITCH) - asymptotic(nu, SWITCH)).abs();
            assert!(d < 1e-10, "nu = {nu}: {d:e}");
        }
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(j0(-0.1), Err(Error::Domain { .. })));
        assert!(matches!(j1(50.5), Err(Error::Domain { .. })));
    }

    proptest! {
        #[test]
        fn derivative_identity(x in 0.5f64..50.0) {
            // J0'(x) = -J1(x), checked by a centred difference.
            let h: f64 = 1e-5;
            let d = (j0(x + h.min(50.0 - x)).unwrap() - j0(x - h).unwrap())
                / (h + h.min(50.0 - x));
            prop_assert!((d + j1(x).unwrap()).abs() < 1e-6);
        }

        #[test]
        fn bounded_by_one(x in 0.0f64..50.0) {
            prop_assert!(j0(x).unwrap().abs() <= 1.0 + 1e-12);
            prop_assert!(j1(x).unwrap().abs() <= 0.6);
        }
    }
}
