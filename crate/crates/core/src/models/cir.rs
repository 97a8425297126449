use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use super::TransitionKernel;
use crate::error::{Error, Result};
use crate::oracle::PathRng;
use crate::special::{ln_bessel_i, ln_gamma};

/// Square-root diffusion `dX = kappa (theta - X) dt + gamma sqrt(X) dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirParams {
    pub kappa: f64,
    pub theta: f64,
    pub gamma: f64,
}

impl CirParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.theta > 0.0 && self.gamma > 0.0) {
            return Err(Error::Parameter(format!("CIR needs kappa, theta, gamma > 0, got {self:?}")));
        }
        if self.q() <= -1.0 {
            return Err(Error::Parameter(format!("CIR order q = {} must exceed -1", self.q())));
        }
        Ok(())
    }

    /// Bessel order `2 kappa theta / gamma^2 - 1`.
    pub fn q(&self) -> f64 {
        2.0 * self.kappa * self.theta / (self.gamma * self.gamma) - 1.0
    }

    fn c(&self, t: f64) -> f64 {
        2.0 * self.kappa / ((1.0 - (-self.kappa * t).exp()) * self.gamma * self.gamma)
    }
}

/// Exact CIR transition density, evaluated in log space.
pub fn cir_exact_density(x_next: f64, x: f64, t: f64, p: &CirParams) -> f64 {
    if x_next <= 0.0 || t <= 0.0 {
        return 0.0;
    }
    let q = p.q();
    let c = p.c(t);
    let u = c * x * (-p.kappa * t).exp();
    let v = c * x_next;
    let ln_f = if u <= 0.0 {
        // limit x -> 0: gamma law with shape q + 1
        c.ln() - v + q * v.ln() - ln_gamma(q + 1.0)
    } else {
        let z = 2.0 * (u * v).sqrt();
        c.ln() - u - v + 0.5 * q * (v / u).ln() + ln_bessel_i(q, z)
    };
    ln_f.exp()
}

#[derive(Debug, Clone)]
pub struct CirKernel {
    pub params: CirParams,
}

impl CirKernel {
    pub fn new(params: CirParams) -> Result<Self> {
        params.validate()?;
        Ok(CirKernel { params })
    }
}

impl TransitionKernel for CirKernel {
    fn name(&self) -> &str {
        "cir"
    }

    fn density(&self, x_next: f64, x: f64, dt: f64) -> f64 {
        cir_exact_density(x_next, x.max(0.0), dt, &self.params)
    }

    fn mean(&self, x: f64, dt: f64) -> f64 {
        let p = &self.params;
        p.theta + (x.max(0.0) - p.theta) * (-p.kappa * dt).exp()
    }

    fn sd(&self, x: f64, dt: f64) -> f64 {
        let p = &self.params;
        let e = (-p.kappa * dt).exp();
        let g2 = p.gamma * p.gamma;
        (x.max(0.0) * g2 / p.kappa * (e - e * e) + p.theta * g2 / (2.0 * p.kappa) * (1.0 - e).powi(2)).sqrt()
    }

    fn domain(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    /// Exact draw: Poisson mixture of gammas (the noncentral chi-square law).
    fn sample(&self, x: f64, dt: f64, rng: &mut PathRng) -> f64 {
        let p = &self.params;
        let c = p.c(dt);
        let u = c * x.max(0.0) * (-p.kappa * dt).exp();
        let n = if u > 0.0 { Poisson::new(u).expect("positive rate").sample(rng.inner()) } else { 0.0 };
        Gamma::new(p.q() + 1.0 + n, 1.0 / c).expect("positive shape").sample(rng.inner())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testing::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    const BASE: CirParams = CirParams { kappa: 11.0, theta: 0.2, gamma: 1.5 };

    #[test]
    fn normalizes_and_has_the_conditional_mean() {
        let k = CirKernel::new(BASE).unwrap();
        let (x, t) = (0.2, 0.08);
        assert!((mass(&k, x, t, 30.0) - 1.0).abs() < 1e-6);
        let m = moment(&k, x, t, 30.0, 1);
        assert_relative_eq!(m, 0.2 + (x - 0.2) * (-11.0 * t).exp(), max_relative = 1e-8);
        let m2 = moment(&k, 0.35, 1.0 / 1250.0, 20.0, 2) - k.mean(0.35, 1.0 / 1250.0).powi(2);
        assert_relative_eq!(m2.sqrt(), k.sd(0.35, 1.0 / 1250.0), max_relative = 1e-6);
    }

    fn noncentral_chi2_pdf(y: f64, d: f64, lambda: f64) -> f64 {
        let mut sum = 0.0;
        for j in 0..2000 {
            let jf = j as f64;
            let k = 0.5 * d + jf;
            let ln_pois = -0.5 * lambda + jf * (0.5 * lambda).ln() - ln_gamma(jf + 1.0);
            let ln_chi = (k - 1.0) * y.ln() - 0.5 * y - k * 2f64.ln() - ln_gamma(k);
            let term = (ln_pois + ln_chi).exp();
            sum += term;
            if jf > 0.5 * lambda && term < 1e-18 * sum {
                break;
            }
        }
        sum
    }

    #[test]
    fn matches_noncentral_chi_square() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let p = BASE;
        for _ in 0..20 {
            let x = rng.random_range(0.02..0.5);
            let t = rng.random_range(0.0008..0.1);
            let k = CirKernel::new(p).unwrap();
            let xn = k.mean(x, t) + rng.random_range(-2.0..2.0) * k.sd(x, t);
            let xn = xn.max(1e-3);
            let c = p.c(t);
            let d = 4.0 * p.kappa * p.theta / (p.gamma * p.gamma);
            let lambda = 2.0 * c * x * (-p.kappa * t).exp();
            let oracle = 2.0 * c * noncentral_chi2_pdf(2.0 * c * xn, d, lambda);
            assert_relative_eq!(cir_exact_density(xn, x, t, &p), oracle, max_relative = 1e-10);
        }
    }

    #[test]
    fn zero_start_is_a_gamma_law() {
        let k = CirKernel::new(BASE).unwrap();
        let t = 1.0 / 1250.0;
        assert!((mass(&k, 0.0, t, 30.0) - 1.0).abs() < 1e-6);
        assert_relative_eq!(cir_exact_density(0.01, 0.0, t, &BASE), cir_exact_density(0.01, 1e-14, t, &BASE), max_relative = 1e-6);
    }

    #[test]
    fn rejects_non_positive_parameters() {
        assert!(CirKernel::new(CirParams { kappa: 0.0, theta: 0.2, gamma: 1.0 }).is_err());
    }

    #[test]
    fn sampler_is_exact() {
        let k = CirKernel::new(BASE).unwrap();
        check_sampler_moments(&k, 0.2, 1.0 / 1250.0, 100_000);
        assert!(sampler_ks(&k, 0.2, 1.0 / 250.0, 100_000, 12.0) < 0.01);
    }
}
