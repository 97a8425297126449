use serde::{Deserialize, Serialize};

use super::TransitionKernel;
use crate::error::{Error, Result};
use crate::oracle::PathRng;
use crate::special::{gaussian_pdf, normal_cdf};

/// Level floor applied inside power-law diffusion coefficients.
pub const LEVEL_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DiffusionKind {
    /// `dS = mu S dt + sigma S^gamma_cev dW`
    Cev { mu: f64, sigma: f64, gamma_cev: f64 },
    /// `dV = kappa V^a (theta - V) dt + gamma V^b dW`
    Sv { kappa: f64, theta: f64, gamma: f64, a: f64, b: f64 },
    /// `dX = mu dt + sigma dW`
    Arithmetic { mu: f64, sigma: f64 },
}

/// Drift and diffusion coefficients for an Euler-discretized scalar SDE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenericDiffusionParams {
    pub kind: DiffusionKind,
}

impl GenericDiffusionParams {
    pub fn cev(mu: f64, sigma: f64, gamma_cev: f64) -> Self {
        GenericDiffusionParams { kind: DiffusionKind::Cev { mu, sigma, gamma_cev } }
    }

    pub fn sv(kappa: f64, theta: f64, gamma: f64, a: f64, b: f64) -> Self {
        GenericDiffusionParams { kind: DiffusionKind::Sv { kappa, theta, gamma, a, b } }
    }

    pub fn arithmetic(mu: f64, sigma: f64) -> Self {
        GenericDiffusionParams { kind: DiffusionKind::Arithmetic { mu, sigma } }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            DiffusionKind::Cev { sigma, gamma_cev, .. } => {
                if !(sigma > 0.0 && gamma_cev >= 0.0) {
                    return Err(Error::Parameter(format!("CEV needs sigma > 0 and gamma >= 0, got {self:?}")));
                }
            }
            DiffusionKind::Sv { kappa, theta, gamma, a, b } => {
                if !(kappa > 0.0 && theta > 0.0 && gamma > 0.0) {
                    return Err(Error::Parameter(format!("SV needs kappa, theta, gamma > 0, got {self:?}")));
                }
                if !(a == 0.0 || a == 1.0) || ![0.5, 1.0, 1.5].contains(&b) {
                    return Err(Error::Parameter(format!("SV exponents need a in {{0,1}}, b in {{1/2,1,3/2}}, got a={a}, b={b}")));
                }
            }
            DiffusionKind::Arithmetic { sigma, .. } => {
                if !(sigma > 0.0) {
                    return Err(Error::Parameter(format!("diffusion sigma must be positive, got {sigma}")));
                }
            }
        }
        Ok(())
    }

    pub fn drift(&self, x: f64) -> f64 {
        match self.kind {
            DiffusionKind::Cev { mu, .. } => mu * x,
            DiffusionKind::Sv { kappa, theta, a, .. } => kappa * x.max(LEVEL_FLOOR).powf(a) * (theta - x),
            DiffusionKind::Arithmetic { mu, .. } => mu,
        }
    }

    pub fn diffusion(&self, x: f64) -> f64 {
        match self.kind {
            DiffusionKind::Cev { sigma, gamma_cev, .. } => sigma * x.max(LEVEL_FLOOR).powf(gamma_cev),
            DiffusionKind::Sv { gamma, b, .. } => gamma * x.max(LEVEL_FLOOR).powf(b),
            DiffusionKind::Arithmetic { sigma, .. } => sigma,
        }
    }

    fn label(&self) -> &'static str {
        match self.kind {
            DiffusionKind::Cev { .. } => "cev",
            DiffusionKind::Sv { .. } => "sv",
            DiffusionKind::Arithmetic { .. } => "arithmetic",
        }
    }
}

/// Euler-Maruyama step `N(x + drift(x) dt, diffusion(x)^2 dt)`.
#[derive(Debug, Clone)]
pub struct EulerKernel {
    pub params: GenericDiffusionParams,
}

impl EulerKernel {
    pub fn new(params: GenericDiffusionParams) -> Result<Self> {
        params.validate()?;
        Ok(EulerKernel { params })
    }

    /// Checks that both coefficients are finite and the diffusion positive
    /// at every point.
    pub fn check_points(&self, xs: &[f64]) -> Result<()> {
        for &x in xs {
            let (m, s) = (self.params.drift(x), self.params.diffusion(x));
            if !m.is_finite() || !s.is_finite() || s <= 0.0 {
                return Err(Error::Model(format!("{}: bad coefficients at x = {x} (drift {m}, diffusion {s})", self.params.label())));
            }
        }
        Ok(())
    }
}

impl TransitionKernel for EulerKernel {
    fn name(&self) -> &str {
        self.params.label()
    }

    fn density(&self, x_next: f64, x: f64, dt: f64) -> f64 {
        gaussian_pdf(x_next, self.mean(x, dt), self.sd(x, dt))
    }

    fn cdf(&self, x_next: f64, x: f64, dt: f64) -> Option<f64> {
        Some(normal_cdf((x_next - self.mean(x, dt)) / self.sd(x, dt)))
    }

    fn mean(&self, x: f64, dt: f64) -> f64 {
        x + self.params.drift(x) * dt
    }

    fn sd(&self, x: f64, dt: f64) -> f64 {
        self.params.diffusion(x) * dt.sqrt()
    }

    fn sample(&self, x: f64, dt: f64, rng: &mut PathRng) -> f64 {
        self.mean(x, dt) + self.sd(x, dt) * rng.normal()
    }
}
