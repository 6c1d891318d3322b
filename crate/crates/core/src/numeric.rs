//! Small numerical kernels shared by the space, equilibrium and fitness
//! modules: adaptive Simpson quadrature and bracketed bisection.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol` with adaptive
/// Simpson's rule (Richardson-corrected panels).
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::QuadratureFailure(format!(
            "non-finite limits [{a}, {b}]"
        )));
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut failed = false;
    let value = simpson_step(&f, a, b, fa, fm, fb, whole, tol, tol, MAX_DEPTH, &mut failed);
    if failed || !value.is_finite() {
        return Err(Error::QuadratureFailure(format!(
            "no convergence on [{a}, {b}] at tolerance {tol:e}"
        )));
    }
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    root_tol: f64,
    depth: u32,
    failed: &mut bool,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        *failed = true;
        return f64::NAN;
    }
    // below this the panels only disagree by rounding
    let noise = 64.0 * f64::EPSILON * (left.abs() + right.abs());
    if delta.abs() <= (15.0 * tol).max(noise) {
        return left + right + delta / 15.0;
    }
    if depth == 0 || lm <= a || rm >= b {
        // a kink or jump resolved to the last bit: fine unless it is large
        if delta.abs() > root_tol {
            *failed = true;
        }
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, root_tol, depth - 1, failed)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, root_tol, depth - 1, failed)
}

/// Finds a sign change of `f` in `[lo, hi]` by bisection, stopping once the
/// bracket is no wider than `xtol` (or floating point cannot split it).
pub fn bisect<F>(f: F, mut lo: f64, mut hi: f64, xtol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        return Err(Error::NoSignChange { lo, hi });
    }
    while hi - lo > xtol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return Ok(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomials_and_transcendentals() {
        let v = adaptive_simpson(|x| x * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        let v = adaptive_simpson(f64::exp, 0.0, 1.0, 1e-12).unwrap();
        assert!((v - (std::f64::consts::E - 1.0)).abs() < 1e-11);
        let v = adaptive_simpson(|x| 1.0 / x, 1.0, 10.0, 1e-11).unwrap();
        assert!((v - 10f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn simpson_handles_kinks() {
        let v = adaptive_simpson(|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-12).unwrap();
        let exact = 0.5 * 0.3 * 0.3 + 0.5 * 0.7 * 0.7;
        assert!((v - exact).abs() < 1e-11);
    }

    #[test]
    fn simpson_reports_non_finite() {
        assert!(adaptive_simpson(|x| 1.0 / x, 0.0, 1.0, 1e-10).is_err());
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-15).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn bisect_rejects_same_sign() {
        assert!(matches!(
            bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12),
            Err(Error::NoSignChange { .. })
        ));
    }
}
