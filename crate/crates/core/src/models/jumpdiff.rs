use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::TransitionKernel;
use crate::error::{Error, Result};
use crate::oracle::PathRng;
use crate::special::{gaussian_pdf, ln_gamma, normal_cdf};

/// `dX = mu dt + sigma dW + J dN`, `N` Poisson with intensity `lambda`,
/// `J ~ N(mu_j, sigma_j^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpDiffusionParams {
    pub mu: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub mu_j: f64,
    pub sigma_j: f64,
}

impl JumpDiffusionParams {
    /// Drift chosen as `-lambda mu_j` so increments have mean zero.
    pub fn martingale(sigma: f64, lambda: f64, mu_j: f64, sigma_j: f64) -> Self {
        JumpDiffusionParams { mu: -lambda * mu_j, sigma, lambda, mu_j, sigma_j }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma_j > 0.0 && self.lambda >= 0.0) || !self.mu.is_finite() || !self.mu_j.is_finite() {
            return Err(Error::Parameter(format!("jump diffusion needs sigma, sigma_j > 0 and lambda >= 0, got {self:?}")));
        }
        Ok(())
    }

    pub fn increment_mean(&self, dt: f64) -> f64 {
        self.mu * dt + self.lambda * dt * self.mu_j
    }

    pub fn increment_variance(&self, dt: f64) -> f64 {
        self.sigma * self.sigma * dt + self.lambda * dt * (self.sigma_j * self.sigma_j + self.mu_j * self.mu_j)
    }

    /// `(probability, mean, sd)` of each jump-count component, truncated
    /// once the remaining Poisson mass is below 1e-12.
    pub fn components(&self, dt: f64) -> Vec<(f64, f64, f64)> {
        let rate = self.lambda * dt;
        let mut out = Vec::new();
        let mut cum = 0.0;
        for k in 0..10_000 {
            let kf = k as f64;
            let p = if rate == 0.0 {
                if k == 0 { 1.0 } else { 0.0 }
            } else {
                (-rate + kf * rate.ln() - ln_gamma(kf + 1.0)).exp()
            };
            cum += p;
            let sd = (self.sigma * self.sigma * dt + kf * self.sigma_j * self.sigma_j).sqrt();
            out.push((p, self.mu * dt + kf * self.mu_j, sd));
            if 1.0 - cum < 1e-12 {
                break;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct JumpDiffusionKernel {
    pub params: JumpDiffusionParams,
}

impl JumpDiffusionKernel {
    pub fn new(params: JumpDiffusionParams) -> Result<Self> {
        params.validate()?;
        Ok(JumpDiffusionKernel { params })
    }
}

impl TransitionKernel for JumpDiffusionKernel {
    fn name(&self) -> &str {
        "jumpdiff"
    }

    fn density(&self, x_next: f64, x: f64, dt: f64) -> f64 {
        self.params.components(dt).iter().map(|&(p, m, s)| p * gaussian_pdf(x_next, x + m, s)).sum()
    }

    fn cdf(&self, x_next: f64, x: f64, dt: f64) -> Option<f64> {
        Some(self.params.components(dt).iter().map(|&(p, m, s)| p * normal_cdf((x_next - x - m) / s)).sum())
    }

    fn mean(&self, x: f64, dt: f64) -> f64 {
        x + self.params.increment_mean(dt)
    }

    fn sd(&self, _x: f64, dt: f64) -> f64 {
        self.params.increment_variance(dt).sqrt()
    }

    /// Covers every retained component out to `width` of its own sd.
    fn support(&self, x: f64, dt: f64, width: f64) -> (f64, f64) {
        let comps = self.params.components(dt);
        let lo = comps.iter().filter(|c| c.0 > 1e-12).map(|&(_, m, s)| m - width * s).fold(f64::INFINITY, f64::min);
        let hi = comps.iter().filter(|c| c.0 > 1e-12).map(|&(_, m, s)| m + width * s).fold(f64::NEG_INFINITY, f64::max);
        (x + lo, x + hi)
    }

    fn sample(&self, x: f64, dt: f64, rng: &mut PathRng) -> f64 {
        let p = &self.params;
        let rate = p.lambda * dt;
        let k = if rate > 0.0 { Poisson::new(rate).expect("positive rate").sample(rng.inner()) } else { 0.0 };
        let sd = (p.sigma * p.sigma * dt + k * p.sigma_j * p.sigma_j).sqrt();
        x + p.mu * dt + k * p.mu_j + sd * rng.normal()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testing::*;
    use approx::assert_relative_eq;

    #[test]
    fn no_jumps_is_normal() {
        let k = JumpDiffusionKernel::new(JumpDiffusionParams::martingale(0.2, 0.0, -0.05, 0.01)).unwrap();
        assert_relative_eq!(k.density(0.01, 0.0, 0.004), gaussian_pdf(0.01, 0.0, 0.2 * 0.004f64.sqrt()), max_relative = 1e-14);
    }

    #[test]
    fn martingale_drift_and_variance() {
        let dt = 1.0 / 250.0;
        let null = JumpDiffusionKernel::new(JumpDiffusionParams::martingale(0.1975, 10.0, 0.0, 0.01)).unwrap();
        assert!((moment(&null, 0.0, dt, 8.0, 1)).abs() < 1e-12);
        let var = moment(&null, 0.0, dt, 8.0, 2);
        assert_relative_eq!(var, 0.1975f64.powi(2) * dt + 10.0 * dt * 0.0001, max_relative = 1e-9);

        let alt = JumpDiffusionKernel::new(JumpDiffusionParams::martingale(0.1975, 10.0, -0.05, 0.01)).unwrap();
        assert_eq!(alt.mean(0.3, dt), 0.3);
        assert!((moment(&alt, 0.0, dt, 8.0, 1)).abs() < 1e-12);
        assert!((mass(&alt, 0.0, dt, 8.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sampler_matches() {
        let dt = 1.0 / 250.0;
        let k = JumpDiffusionKernel::new(JumpDiffusionParams::martingale(0.1975, 10.0, -0.05, 0.01)).unwrap();
        check_sampler_moments(&k, 0.0, dt, 100_000);
        assert!(sampler_ks(&k, 0.0, dt, 100_000, 8.0) < 0.01);
    }
}
