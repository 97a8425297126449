//! Small reference kernels with closed forms, used as oracles.

use super::{Nodes, QuadSpec, TransitionKernel};
use crate::error::{Error, Result};
use crate::oracle::PathRng;
use crate::special::{gaussian_pdf, normal_cdf};

/// Geometric Brownian motion over one step.
#[derive(Debug, Clone, Copy)]
pub struct GbmKernel {
    pub mu: f64,
    pub sigma: f64,
}

impl GbmKernel {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Parameter(format!("GBM sigma must be positive, got {sigma}")));
        }
        Ok(GbmKernel { mu, sigma })
    }

    fn log_moments(&self, dt: f64) -> (f64, f64) {
        ((self.mu - 0.5 * self.sigma * self.sigma) * dt, self.sigma * dt.sqrt())
    }
}

impl TransitionKernel for GbmKernel {
    fn name(&self) -> &str {
        "gbm"
    }

    fn density(&self, x_next: f64, x: f64, dt: f64) -> f64 {
        if x_next <= 0.0 || x <= 0.0 {
            return 0.0;
        }
        let (m, s) = self.log_moments(dt);
        gaussian_pdf((x_next / x).ln(), m, s) / x_next
    }

    fn cdf(&self, x_next: f64, x: f64, dt: f64) -> Option<f64> {
        if x_next <= 0.0 {
            return Some(0.0);
        }
        let (m, s) = self.log_moments(dt);
        Some(normal_cdf(((x_next / x).ln() - m) / s))
    }

    fn mean(&self, x: f64, dt: f64) -> f64 {
        x * (self.mu * dt).exp()
    }

    fn sd(&self, x: f64, dt: f64) -> f64 {
        self.mean(x, dt) * ((self.sigma * self.sigma * dt).exp() - 1.0).sqrt()
    }

    fn support(&self, x: f64, dt: f64, width: f64) -> (f64, f64) {
        let (m, s) = self.log_moments(dt);
        (x * (m - width * s).exp(), x * (m + width * s).exp())
    }

    fn domain(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn nodes(&self, x: f64, dt: f64, q: &QuadSpec) -> Result<Nodes> {
        let (m, s) = self.log_moments(dt);
        let normal = NormalIncrementKernel { shift: m, sd: s };
        let mut nodes = normal.nodes(0.0, dt, q)?;
        nodes.points.iter_mut().for_each(|u| *u = x * u.exp());
        Ok(nodes)
    }

    fn sample(&self, x: f64, dt: f64, rng: &mut PathRng) -> f64 {
        let (m, s) = self.log_moments(dt);
        x * (m + s * rng.normal()).exp()
    }

    fn multiplicative(&self) -> bool {
        true
    }
}

/// `x' = x + shift + sd Z`, independent of the level.
#[derive(Debug, Clone, Copy)]
pub struct NormalIncrementKernel {
    pub shift: f64,
    pub sd: f64,
}

impl TransitionKernel for NormalIncrementKernel {
    fn name(&self) -> &str {
        "normal"
    }

    fn density(&self, x_next: f64, x: f64, _dt: f64) -> f64 {
        gaussian_pdf(x_next, x + self.shift, self.sd)
    }

    fn cdf(&self, x_next: f64, x: f64, _dt: f64) -> Option<f64> {
        Some(normal_cdf((x_next - x - self.shift) / self.sd))
    }

    fn mean(&self, x: f64, _dt: f64) -> f64 {
        x + self.shift
    }

    fn sd(&self, _x: f64, _dt: f64) -> f64 {
        self.sd
    }

    fn sample(&self, x: f64, _dt: f64, rng: &mut PathRng) -> f64 {
        x + self.shift + self.sd * rng.normal()
    }
}

/// Level-independent next state drawn from finitely many atoms.
#[derive(Debug, Clone)]
pub struct DiscreteKernel {
    pub atoms: Vec<f64>,
    pub probs: Vec<f64>,
}

impl DiscreteKernel {
    pub fn new(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if atoms.is_empty() || atoms.len() != probs.len() || probs.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter("discrete kernel needs matching atoms and probabilities summing to 1".into()));
        }
        Ok(DiscreteKernel { atoms, probs })
    }

    pub fn uniform(atoms: Vec<f64>) -> Self {
        let p = 1.0 / atoms.len() as f64;
        let probs = vec![p; atoms.len()];
        DiscreteKernel { atoms, probs }
    }
}

impl TransitionKernel for DiscreteKernel {
    fn name(&self) -> &str {
        "discrete"
    }

    fn density(&self, _x_next: f64, _x: f64, _dt: f64) -> f64 {
        0.0
    }

    fn cdf(&self, x_next: f64, _x: f64, _dt: f64) -> Option<f64> {
        Some(self.atoms.iter().zip(&self.probs).filter(|(a, _)| **a <= x_next).map(|(_, p)| p).sum())
    }

    fn mean(&self, _x: f64, _dt: f64) -> f64 {
        self.atoms.iter().zip(&self.probs).map(|(a, p)| a * p).sum()
    }

    fn sd(&self, x: f64, dt: f64) -> f64 {
        let m = self.mean(x, dt);
        self.atoms.iter().zip(&self.probs).map(|(a, p)| p * (a - m).powi(2)).sum::<f64>().sqrt()
    }

    fn atoms(&self, _x: f64, _dt: f64) -> Option<Nodes> {
        Some(Nodes { points: self.atoms.clone(), weights: self.probs.clone() })
    }

    fn nodes(&self, _x: f64, _dt: f64, _q: &QuadSpec) -> Result<Nodes> {
        Ok(Nodes { points: self.atoms.clone(), weights: self.probs.clone() })
    }

    fn sample(&self, _x: f64, _dt: f64, rng: &mut PathRng) -> f64 {
        let u = rng.uniform();
        let mut acc = 0.0;
        for (a, p) in self.atoms.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return *a;
            }
        }
        *self.atoms.last().expect("non-empty atoms")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testing::*;
    use approx::assert_relative_eq;

    #[test]
    fn gbm_nodes_reproduce_the_mean() {
        let k = GbmKernel::new(0.03, 0.25).unwrap();
        let n = k.nodes(1.3, 0.1, &QuadSpec::default()).unwrap();
        let m: f64 = n.points.iter().zip(&n.weights).map(|(p, w)| p * w).sum();
        assert_relative_eq!(m, k.mean(1.3, 0.1), max_relative = 1e-9);
        assert!((mass(&k, 1.3, 0.1, 8.0) - 1.0).abs() < 1e-6);
        check_sampler_moments(&k, 1.3, 0.1, 100_000);
    }

    #[test]
    fn discrete_sampler_frequencies() {
        let k = DiscreteKernel::uniform(vec![0.0, 1.0, 2.0]);
        let mut rng = PathRng::new(1, 0);
        let mut counts = [0usize; 3];
        for _ in 0..30_000 {
            counts[k.sample(0.0, 1.0, &mut rng) as usize] += 1;
        }
        assert!(counts.iter().all(|&c| (c as f64 - 10_000.0).abs() < 400.0), "{counts:?}");
        assert_eq!(k.cdf(1.0, 0.0, 1.0), Some(2.0 / 3.0));
    }
}
