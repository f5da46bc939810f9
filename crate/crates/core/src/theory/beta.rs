use serde::{Deserialize, Serialize};

use super::special::{adaptive_simpson, beta_inc_reg, beta_pdf};
use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Relative excess of the polynomial over the exact interval mass beyond which
/// the polynomial is flagged as outside its range of validity.
pub const POLY_VALIDITY_TOL: f64 = 0.10;

/// Shape parameters of `Be(alpha, beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSpec {
    alpha: f64,
    beta: f64,
}

impl BetaSpec {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::Domain(alloc::format!("Be({alpha}, {beta}) needs finite positive shape parameters")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn std_dev(&self) -> f64 {
        let s = self.alpha + self.beta;
        libm::sqrt(self.alpha * self.beta / (s * s * (s + 1.0)))
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        beta_inc_reg(self.alpha, self.beta, x.clamp(0.0, 1.0))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        beta_pdf(self.alpha, self.beta, x)
    }
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::Precondition(alloc::format!("interval half-width {eps} must lie in (0, 0.5)")));
    }
    Ok(())
}

/// `P(0.5 - eps <= X <= 0.5 + eps)` for `X ~ spec`, from the incomplete beta
/// function; falls back to quadrature if the continued fraction fails.
pub fn beta_interval_exact(spec: &BetaSpec, eps: f64) -> Result<f64> {
    check_epsilon(eps)?;
    match (spec.cdf(0.5 + eps), spec.cdf(0.5 - eps)) {
        (Ok(hi), Ok(lo)) => Ok((hi - lo).clamp(0.0, 1.0)),
        _ => beta_interval_quadrature(spec, eps),
    }
}

/// Same mass by adaptive Simpson integration of the density.
pub fn beta_interval_quadrature(spec: &BetaSpec, eps: f64) -> Result<f64> {
    check_epsilon(eps)?;
    let f = |x: f64| spec.pdf(x);
    Ok(adaptive_simpson(&f, 0.5 - eps, 0.5 + eps, 1e-13).clamp(0.0, 1.0))
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

/// Normal approximation `Phi((0.5 + eps - mu) / sigma) - Phi((0.5 - eps - mu) / sigma)`.
pub fn beta_interval_normal(spec: &BetaSpec, eps: f64) -> Result<f64> {
    check_epsilon(eps)?;
    let (mu, sigma) = (spec.mean(), spec.std_dev());
    Ok(normal_cdf((0.5 + eps - mu) / sigma) - normal_cdf((0.5 - eps - mu) / sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyApprox {
    /// `2 eps / (sqrt(2 pi) sigma) * (1 - (0.5 - mu)^2 / (3 sigma^2))`.
    pub value: f64,
    /// `2 eps / (sqrt(2 pi) sigma)`.
    pub leading_factor: f64,
    pub exact: f64,
    pub out_of_validity: bool,
}

/// Third-order Taylor polynomial of the normal approximation, with a validity
/// flag raised when the leading factor exceeds 1, the value leaves `[0, 1]`, or
/// the value overshoots the exact mass by more than [`POLY_VALIDITY_TOL`].
pub fn beta_interval_poly(spec: &BetaSpec, eps: f64) -> Result<PolyApprox> {
    check_epsilon(eps)?;
    let (mu, sigma) = (spec.mean(), spec.std_dev());
    let leading_factor = 2.0 * eps / (SQRT_2PI * sigma);
    let value = leading_factor * (1.0 - (0.5 - mu) * (0.5 - mu) / (3.0 * sigma * sigma));
    let exact = beta_interval_exact(spec, eps)?;
    let out_of_validity =
        leading_factor > 1.0 || !(0.0..=1.0).contains(&value) || value > exact * (1.0 + POLY_VALIDITY_TOL);
    Ok(PolyApprox { value, leading_factor, exact, out_of_validity })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference masses from 40-digit evaluation of the regularized incomplete beta.
    const BE50_EPS01: f64 = 0.158_144_472_225_882_2;
    const BE500_EPS01: f64 = 0.472_848_783_286_829_07;

    fn spec(a: f64, b: f64) -> BetaSpec {
        BetaSpec::new(a, b).unwrap()
    }

    #[test]
    fn moments() {
        let s = spec(50.0, 50.0);
        assert_eq!(s.mean(), 0.5);
        assert!((s.std_dev() - libm::sqrt(1.0 / 404.0)).abs() < 1e-15);
        assert!(BetaSpec::new(0.0, 1.0).is_err());
        assert!(BetaSpec::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn exact_examples() {
        assert!((beta_interval_exact(&spec(1.0, 1.0), 0.1).unwrap() - 0.2).abs() < 1e-14);
        // F(x) = 3x^2 - 2x^3 on [0.4, 0.6].
        assert!((beta_interval_exact(&spec(2.0, 2.0), 0.1).unwrap() - 0.296).abs() < 1e-12);
        assert!((beta_interval_exact(&spec(50.0, 50.0), 0.01).unwrap() - BE50_EPS01).abs() < 1e-10);
        assert!((beta_interval_exact(&spec(500.0, 500.0), 0.01).unwrap() - BE500_EPS01).abs() < 1e-10);
    }

    #[test]
    fn quadrature_agrees_with_continued_fraction() {
        for &(a, b, e) in &[(2.0, 2.0, 0.1), (50.0, 50.0, 0.01), (2.0, 5.0, 0.1), (3.0, 7.0, 0.2), (500.0, 500.0, 0.01)] {
            let s = spec(a, b);
            let cf = beta_interval_exact(&s, e).unwrap();
            let q = beta_interval_quadrature(&s, e).unwrap();
            assert!((cf - q).abs() < 1e-10, "Be({a},{b}) eps {e}: {cf} vs {q}");
        }
        assert!((beta_interval_quadrature(&spec(50.0, 50.0), 0.01).unwrap() - BE50_EPS01).abs() < 1e-10);
    }

    #[test]
    fn epsilon_range() {
        let s = spec(2.0, 2.0);
        for e in [0.0, 0.5, -0.1, f64::NAN] {
            assert!(matches!(beta_interval_exact(&s, e), Err(Error::Precondition(_))));
            assert!(beta_interval_normal(&s, e).is_err());
            assert!(beta_interval_poly(&s, e).is_err());
        }
    }

    #[test]
    fn normal_examples() {
        let s = spec(7.0, 7.0);
        let n = beta_interval_normal(&s, 0.05).unwrap();
        assert!((n - (2.0 * normal_cdf(0.05 / s.std_dev()) - 1.0)).abs() < 1e-15);
        let s = spec(50.0, 50.0);
        let exact = beta_interval_exact(&s, 0.01).unwrap();
        assert!(((beta_interval_normal(&s, 0.01).unwrap() - exact) / exact).abs() < 0.02);
        assert!(beta_interval_normal(&s, 1e-12).unwrap() < 1e-9);
    }

    #[test]
    fn poly_examples() {
        let s = spec(9.0, 9.0);
        let p = beta_interval_poly(&s, 0.02).unwrap();
        assert_eq!(p.value, p.leading_factor);
        let s = spec(50.0, 50.0);
        let p = beta_interval_poly(&s, 0.01).unwrap();
        let plug_in = 0.02 / (SQRT_2PI * libm::sqrt(1.0 / 404.0));
        assert!((p.value - plug_in).abs() < 1e-15);
        let normal = beta_interval_normal(&s, 0.01).unwrap();
        assert!(((p.value - normal) / normal).abs() < 0.01);
        assert!(!p.out_of_validity);
        let u = beta_interval_poly(&spec(1.0, 1.0), 0.1).unwrap();
        assert!((u.value - 0.276_395_319_577_068_4).abs() < 1e-12);
        assert!((u.exact - 0.2).abs() < 1e-14);
        assert!(u.out_of_validity);
    }

    #[test]
    fn exact_is_monotone_and_bounded() {
        for &(a, b) in &[(0.7, 0.7), (2.0, 5.0), (50.0, 50.0), (300.0, 10.0)] {
            let s = spec(a, b);
            let mut prev = 0.0;
            for i in 1..100 {
                let p = beta_interval_exact(&s, i as f64 * 0.005).unwrap();
                assert!(p >= prev - 1e-15 && p <= 1.0, "Be({a},{b})");
                prev = p;
            }
        }
    }
}
