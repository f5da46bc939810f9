//! Beta-function special functions and adaptive quadrature.

use crate::error::{Error, Result};

const CF_MAX_ITER: usize = 2000;
const CF_EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

pub fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// Density of `Be(a, b)` at `x`.
pub fn beta_pdf(a: f64, b: f64, x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    if x == 0.0 || x == 1.0 {
        let edge = if x == 0.0 { a } else { b };
        return match edge.partial_cmp(&1.0) {
            Some(core::cmp::Ordering::Less) => f64::INFINITY,
            Some(core::cmp::Ordering::Equal) => libm::exp(-ln_beta(a, b)),
            _ => 0.0,
        };
    }
    libm::exp((a - 1.0) * libm::log(x) + (b - 1.0) * libm::log1p(-x) - ln_beta(a, b))
}

/// Regularized incomplete beta function `I_x(a, b)` by continued fraction
/// (modified Lentz), using `I_x(a, b) = 1 - I_{1-x}(b, a)` where the fraction
/// converges faster.
pub fn beta_inc_reg(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Domain(alloc::format!("Be({a}, {b}) needs positive shape parameters")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(alloc::format!("incomplete beta at x = {x} outside [0, 1]")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(x);
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        Ok(1.0 - beta_cf(b, a, 1.0 - x)?)
    } else {
        beta_cf(a, b, x)
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    let prefix = libm::exp(a * libm::log(x) + b * libm::log1p(-x) - ln_beta(a, b)) / a;
    let clamp = |v: f64| if v.abs() < TINY { TINY } else { v };
    let mut c = 1.0;
    let mut d = 1.0 / clamp(1.0 - (a + b) * x / (a + 1.0));
    let mut f = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let even = m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
        d = 1.0 / clamp(1.0 + even * d);
        c = clamp(1.0 + even / c);
        f *= d * c;
        let odd = -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
        d = 1.0 / clamp(1.0 + odd * d);
        c = clamp(1.0 + odd / c);
        let delta = d * c;
        f *= delta;
        if (delta - 1.0).abs() < CF_EPS {
            return Ok(prefix * f);
        }
    }
    Err(Error::Domain(alloc::format!("incomplete beta continued fraction did not converge for I_{x}({a}, {b})")))
}

/// Adaptive Simpson quadrature over `[lo, hi]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
    let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
    simpson_step(f, lo, hi, flo, fmid, fhi, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    flo: f64,
    fmid: f64,
    fhi: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let mid = 0.5 * (lo + hi);
    let (lm, rm) = (0.5 * (lo + mid), 0.5 * (mid + hi));
    let (flm, frm) = (f(lm), f(rm));
    let left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
    let right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, lo, mid, flo, flm, fmid, left, tol / 2.0, depth - 1)
        + simpson_step(f, mid, hi, fmid, frm, fhi, right, tol / 2.0, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, 1) = x; I_x(2, 2) = 3x^2 - 2x^3; I_x(a, 1) = x^a.
        for &x in &[0.01, 0.3, 0.5, 0.77, 0.999] {
            assert!((beta_inc_reg(1.0, 1.0, x).unwrap() - x).abs() < 1e-14);
            assert!((beta_inc_reg(2.0, 2.0, x).unwrap() - (3.0 * x * x - 2.0 * x * x * x)).abs() < 1e-14);
            assert!((beta_inc_reg(3.5, 1.0, x).unwrap() - libm::pow(x, 3.5)).abs() < 1e-14);
        }
        assert_eq!(beta_inc_reg(2.0, 3.0, 0.0).unwrap(), 0.0);
        assert_eq!(beta_inc_reg(2.0, 3.0, 1.0).unwrap(), 1.0);
        assert!(beta_inc_reg(0.0, 3.0, 0.5).is_err());
        assert!(beta_inc_reg(1.0, 3.0, 1.5).is_err());
    }

    #[test]
    fn symmetry_relation() {
        for &(a, b, x) in &[(0.5, 2.5, 0.2), (50.0, 50.0, 0.49), (7.0, 3.0, 0.9)] {
            let l = beta_inc_reg(a, b, x).unwrap();
            let r = 1.0 - beta_inc_reg(b, a, 1.0 - x).unwrap();
            assert!((l - r).abs() < 1e-13);
        }
    }

    #[test]
    fn simpson_integrates_polynomials_and_pdf() {
        let v = adaptive_simpson(&|x: f64| x * x * x, 0.0, 2.0, 1e-12);
        assert!((v - 4.0).abs() < 1e-12);
        let mass = adaptive_simpson(&|x| beta_pdf(3.0, 4.0, x), 0.0, 1.0, 1e-12);
        assert!((mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pdf_edges() {
        assert_eq!(beta_pdf(1.0, 1.0, 0.0), 1.0);
        assert_eq!(beta_pdf(2.0, 2.0, 1.0), 0.0);
        assert!(beta_pdf(0.5, 2.0, 0.0).is_infinite());
        assert_eq!(beta_pdf(2.0, 2.0, 1.5), 0.0);
    }
}
