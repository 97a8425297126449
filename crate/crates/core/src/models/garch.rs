use serde::{Deserialize, Serialize};

use super::{Nodes, QuadSpec, TransitionKernel};
use crate::error::{Error, Result};
use crate::oracle::PathRng;
use crate::quadrature::composite_weights;
use crate::special::{gamma_p, normal_pdf};

/// GARCH(1,1) variance recursion `s2' = omega + beta s2 + alpha eps^2`,
/// `eps ~ N(0, s2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl GarchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::Parameter(format!("GARCH needs omega, alpha, beta > 0, got {self:?}")));
        }
        if self.alpha + self.beta >= 1.0 {
            return Err(Error::Parameter(format!("GARCH needs alpha + beta < 1, got {}", self.alpha + self.beta)));
        }
        Ok(())
    }

    pub fn stationary_variance(&self) -> f64 {
        self.omega / (1.0 - self.alpha - self.beta)
    }

    fn shift(&self, s2: f64) -> f64 {
        self.omega + self.beta * s2
    }
}

/// Shifted gamma(1/2, 2 alpha s2) transition of the GARCH variance.
/// The time step is ignored; one step is one observation.
#[derive(Debug, Clone)]
pub struct GarchKernel {
    pub params: GarchParams,
}

impl GarchKernel {
    pub fn new(params: GarchParams) -> Result<Self> {
        params.validate()?;
        Ok(GarchKernel { params })
    }

    /// Draws `(eps, s2')` together, for return simulation.
    pub fn sample_with_shock(&self, s2: f64, rng: &mut PathRng) -> (f64, f64) {
        let eps = s2.max(0.0).sqrt() * rng.normal();
        (eps, self.params.shift(s2) + self.params.alpha * eps * eps)
    }
}

impl TransitionKernel for GarchKernel {
    fn name(&self) -> &str {
        "garch"
    }

    fn density(&self, x_next: f64, x: f64, _dt: f64) -> f64 {
        let d = x_next - self.params.shift(x);
        if d <= 0.0 {
            return 0.0;
        }
        let scale = 2.0 * self.params.alpha * x;
        (-d / scale).exp() / (std::f64::consts::PI * scale * d).sqrt()
    }

    fn cdf(&self, x_next: f64, x: f64, _dt: f64) -> Option<f64> {
        let d = x_next - self.params.shift(x);
        Some(gamma_p(0.5, d / (2.0 * self.params.alpha * x)))
    }

    fn mean(&self, x: f64, _dt: f64) -> f64 {
        self.params.shift(x) + self.params.alpha * x
    }

    fn sd(&self, x: f64, _dt: f64) -> f64 {
        std::f64::consts::SQRT_2 * self.params.alpha * x
    }

    fn support(&self, x: f64, _dt: f64, _width: f64) -> (f64, f64) {
        let s = self.params.shift(x);
        (s, s + 40.0 * self.params.alpha * x)
    }

    fn domain(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    /// Nodes in the shock `|Z|`: `x' = shift + alpha x Z^2`, which removes
    /// the square-root singularity at the shift point.
    fn nodes(&self, x: f64, _dt: f64, q: &QuadSpec) -> Result<Nodes> {
        let shift = self.params.shift(x);
        let a = self.params.alpha * x;
        let width = q.support_width;
        let h = width / q.z_count as f64;
        let w = composite_weights(q.rule, q.z_count, h);
        let mut points = Vec::with_capacity(w.len());
        let mut weights = Vec::with_capacity(w.len());
        for (k, wk) in w.into_iter().enumerate() {
            let z = k as f64 * h;
            points.push(shift + a * z * z);
            weights.push(wk * 2.0 * normal_pdf(z));
        }
        Nodes { points, weights }.normalized()
    }

    fn sample(&self, x: f64, _dt: f64, rng: &mut PathRng) -> f64 {
        self.sample_with_shock(x, rng).1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testing::*;
    use approx::assert_relative_eq;

    const BASE: GarchParams = GarchParams { omega: 0.001, alpha: 0.05, beta: 0.9 };

    #[test]
    fn cdf_edges_and_incomplete_gamma_point() {
        let k = GarchKernel::new(BASE).unwrap();
        let s2 = 0.02;
        let shift = 0.001 + 0.9 * s2;
        assert_eq!(k.cdf(shift, s2, 1.0), Some(0.0));
        let v = k.cdf(shift + 2.0 * 0.05 * s2, s2, 1.0).unwrap();
        assert_relative_eq!(v, gamma_p(0.5, 1.0), max_relative = 1e-14);
        assert_relative_eq!(v, 0.842_700_792_949_714_9, max_relative = 1e-12);
    }

    #[test]
    fn mean_and_normalization() {
        let k = GarchKernel::new(BASE).unwrap();
        for s2 in [0.01, 0.02, 0.05] {
            assert_relative_eq!(k.mean(s2, 1.0), 0.001 + 0.9 * s2 + 0.05 * s2, max_relative = 1e-15);
            let (a, b) = k.support(s2, 1.0, 8.0);
            assert!((k.cdf(b, s2, 1.0).unwrap() - k.cdf(a, s2, 1.0).unwrap() - 1.0).abs() < 1e-8);
            let nodes = k.nodes(s2, 1.0, &QuadSpec::default()).unwrap();
            let m: f64 = nodes.points.iter().zip(&nodes.weights).map(|(p, w)| p * w).sum();
            assert_relative_eq!(m, k.mean(s2, 1.0), max_relative = 1e-10);
        }
    }

    #[test]
    fn cdf_is_strictly_increasing() {
        let k = GarchKernel::new(BASE).unwrap();
        let (a, b) = k.support(0.03, 1.0, 8.0);
        let mut prev = 0.0;
        for i in 1..=400 {
            let v = k.cdf(a + (b - a) * i as f64 / 400.0, 0.03, 1.0).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn sampler_matches() {
        let k = GarchKernel::new(BASE).unwrap();
        check_sampler_moments(&k, 0.02, 1.0, 100_000);
        assert!(sampler_ks(&k, 0.02, 1.0, 100_000, 8.0) < 0.01);
    }

    #[test]
    fn rejects_non_stationary() {
        assert!(GarchKernel::new(GarchParams { omega: 0.001, alpha: 0.2, beta: 0.85 }).is_err());
    }
}
