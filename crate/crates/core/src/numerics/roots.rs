//! Safeguarded bracketed root finding (Brent's method).

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RootSettings {
    /// Final bracket width, in the units of the root variable.
    pub abs_tol: f64,
    pub max_iterations: usize,
}

impl Default for RootSettings {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            max_iterations: 200,
        }
    }
}

/// Finds a root of `g` on `[lo, hi]`.
///
/// Requires `g(lo) * g(hi) <= 0`. Inverse quadratic and secant steps are
/// taken only while they stay inside the bracket and shrink it fast enough;
/// otherwise the step is a bisection. Infinite function values are allowed
/// (they force bisection), NaN is not. The returned point lies in a final
/// bracket of width at most `abs_tol` (or a few ulps of the root, whichever
/// is larger).
pub fn find_root<G>(mut g: G, lo: f64, hi: f64, settings: &RootSettings) -> Result<f64>
where
    G: FnMut(f64) -> f64,
{
    if !(settings.abs_tol > 0.0) {
        return Err(Error::Domain("root abs_tol must be strictly positive".into()));
    }
    if !(lo <= hi) {
        return Err(Error::Domain(alloc::format!("invalid bracket [{lo}, {hi}]")));
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (g(a), g(b));
    if fa.is_nan() || fb.is_nan() {
        return Err(Error::NoBracket {
            lo,
            hi,
            g_lo: fa,
            g_hi: fb,
        });
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoBracket {
            lo,
            hi,
            g_lo: fa,
            g_hi: fb,
        });
    }

    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..settings.max_iterations {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.25 * settings.abs_tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        let mut bisect = true;
        if e.abs() >= tol1 && fa.abs() > fb.abs() && fa.is_finite() && fb.is_finite() && fc.is_finite() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if p.is_finite()
                && q.is_finite()
                && 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs())
            {
                e = d;
                d = p / q;
                bisect = false;
            }
        }
        if bisect {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = g(b);
        if fb.is_nan() {
            return Err(Error::Domain(alloc::format!(
                "root function returned NaN at {b}"
            )));
        }
    }
    Err(Error::RootNotConverged {
        estimate: b,
        bracket_width: (c - b).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_and_sqrt2() {
        let s = RootSettings::default();
        assert!((find_root(|x| x - 2.0, 0.0, 5.0, &s).unwrap() - 2.0).abs() < 1e-9);
        let r = find_root(|x| x * x - 2.0, 0.0, 2.0, &s).unwrap();
        assert!((r - core::f64::consts::SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn endpoint_roots() {
        let s = RootSettings::default();
        assert_eq!(find_root(|x| x, 0.0, 1.0, &s).unwrap(), 0.0);
        assert_eq!(find_root(|x| x - 1.0, 0.0, 1.0, &s).unwrap(), 1.0);
    }

    #[test]
    fn no_sign_change_is_an_error() {
        let s = RootSettings::default();
        assert!(matches!(
            find_root(|x| x * x + 1.0, -1.0, 1.0, &s),
            Err(Error::NoBracket { .. })
        ));
    }

    #[test]
    fn infinite_values_fall_back_to_bisection() {
        let s = RootSettings::default();
        let g = |x: f64| if x < 1e-3 { f64::INFINITY } else { 1.0 / x - 4.0 };
        let r = find_root(g, 0.0, 10.0, &s).unwrap();
        assert!((r - 0.25).abs() < 1e-9);
    }

    #[test]
    fn flat_function_still_converges() {
        let s = RootSettings::default();
        let r = find_root(|x: f64| libm::pow(x - 1.0, 9.0), 0.0, 3.0, &s).unwrap();
        assert!((r - 1.0).abs() < 1e-2);
    }
}
