//! One-step transition kernels for the processes the recursion supports.
//!
//! A kernel reports its conditional density, moments, a quadrature node set
//! for the backward step, and an exact (or Euler) path sampler for the
//! Monte Carlo oracle.

mod cir;
mod diffusion;
mod garch;
mod jumpdiff;
mod simple;
mod vg;

pub use cir::{cir_exact_density, CirKernel, CirParams};
pub use diffusion::{DiffusionKind, EulerKernel, GenericDiffusionParams};
pub use garch::{GarchKernel, GarchParams};
pub use jumpdiff::{JumpDiffusionKernel, JumpDiffusionParams};
pub use simple::{DiscreteKernel, GbmKernel, NormalIncrementKernel};
pub use vg::{vg_density, vg_levy_density, VgKernel, VgParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::PathRng;
use crate::quadrature::{composite_weights, Rule};

/// How the backward step discretizes the integral over the next state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    pub rule: Rule,
    /// Number of intervals across the support.
    pub z_count: usize,
    /// Half-width of the support in conditional standard deviations.
    pub support_width: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec { rule: Rule::Simpson, z_count: 128, support_width: 8.0 }
    }
}

impl QuadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.z_count < 8 {
            return Err(Error::Parameter(format!("z_count must be at least 8, got {}", self.z_count)));
        }
        if !(self.support_width >= 4.0) {
            return Err(Error::Parameter(format!("support_width must be at least 4, got {}", self.support_width)));
        }
        Ok(())
    }
}

/// Next-state nodes and weights for one conditioning state; the weights
/// already include the density and sum to one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Nodes {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Nodes {
    pub fn point_mass(x: f64) -> Self {
        Nodes { points: vec![x], weights: vec![1.0] }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn normalized(mut self) -> Result<Self> {
        let total: f64 = self.weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Model(format!("quadrature weights sum to {total}")));
        }
        self.weights.iter_mut().for_each(|w| *w /= total);
        Ok(self)
    }
}

pub trait TransitionKernel: Send + Sync {
    fn name(&self) -> &str;

    /// Density of the next state `x_next` given the current state `x`.
    fn density(&self, x_next: f64, x: f64, dt: f64) -> f64;

    /// Closed-form conditional CDF, when one exists.
    fn cdf(&self, _x_next: f64, _x: f64, _dt: f64) -> Option<f64> {
        None
    }

    fn mean(&self, x: f64, dt: f64) -> f64;

    fn sd(&self, x: f64, dt: f64) -> f64;

    /// Integration interval for the next state. Defaults to
    /// `mean +- width * sd`, cut at the natural domain.
    fn support(&self, x: f64, dt: f64, width: f64) -> (f64, f64) {
        let m = self.mean(x, dt);
        let s = self.sd(x, dt);
        let (lo, hi) = self.domain();
        ((m - width * s).max(lo), (m + width * s).min(hi))
    }

    /// Natural state space.
    fn domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Finite support points with probabilities, for purely discrete laws.
    fn atoms(&self, _x: f64, _dt: f64) -> Option<Nodes> {
        None
    }

    /// True when the conditional sd is negligible and the step is a point mass.
    fn is_degenerate(&self, x: f64, dt: f64) -> bool {
        let m = self.mean(x, dt);
        self.sd(x, dt) < 1e-12 * m.abs() || self.sd(x, dt) == 0.0
    }

    /// Quadrature nodes for integrating against the transition law.
    ///
    /// The default places `z_count + 1` equally spaced nodes on
    /// [`Self::support`] and folds the density into the rule weights.
    fn nodes(&self, x: f64, dt: f64, q: &QuadSpec) -> Result<Nodes> {
        if self.is_degenerate(x, dt) {
            return Ok(Nodes::point_mass(self.mean(x, dt)));
        }
        let (a, b) = self.support(x, dt, q.support_width);
        let h = (b - a) / q.z_count as f64;
        let w = composite_weights(q.rule, q.z_count, h);
        let mut points = Vec::with_capacity(q.z_count + 1);
        let mut weights = Vec::with_capacity(q.z_count + 1);
        for (k, wk) in w.into_iter().enumerate() {
            let p = if k == q.z_count { b } else { a + k as f64 * h };
            let d = self.density(p, x, dt);
            if !d.is_finite() {
                return Err(Error::Model(format!("{}: non-finite density at x = {x}, x' = {p}", self.name())));
            }
            points.push(p);
            weights.push(wk * d);
        }
        Nodes { points, weights }.normalized()
    }

    /// One draw of the next state.
    fn sample(&self, x: f64, dt: f64, rng: &mut PathRng) -> f64;

    /// `f(x'|x) dx' = f(x'/x|1) d(x'/x)`.
    fn multiplicative(&self) -> bool {
        false
    }
}

/// Mass of the transition law on `[a, b]`, by the closed-form CDF when
/// available and otherwise three-point Gauss-Legendre.
pub(crate) fn interval_mass(k: &dyn TransitionKernel, x: f64, dt: f64, a: f64, b: f64) -> f64 {
    if let (Some(fa), Some(fb)) = (k.cdf(a, x, dt), k.cdf(b, x, dt)) {
        return fb - fa;
    }
    gl3(|p| k.density(p, x, dt), a, b)
}

pub(crate) fn gl3<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    const X: f64 = 0.774_596_669_241_483_4;
    const W0: f64 = 8.0 / 9.0;
    const W1: f64 = 5.0 / 9.0;
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    h * (W0 * f(c) + W1 * (f(c - h * X) + f(c + h * X)))
}

/// Model selection as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    Cir(CirParams),
    Cev { mu: f64, sigma: f64, gamma_cev: f64 },
    Sv { kappa: f64, theta: f64, gamma: f64, a: f64, b: f64 },
    Garch(GarchParams),
    Vg(VgParams),
    Jumpdiff(JumpDiffusionParams),
}

impl ModelSpec {
    pub fn build(&self) -> Result<Box<dyn TransitionKernel>> {
        Ok(match self {
            ModelSpec::Cir(p) => Box::new(CirKernel::new(*p)?),
            ModelSpec::Cev { mu, sigma, gamma_cev } => {
                Box::new(EulerKernel::new(GenericDiffusionParams::cev(*mu, *sigma, *gamma_cev))?)
            }
            ModelSpec::Sv { kappa, theta, gamma, a, b } => {
                Box::new(EulerKernel::new(GenericDiffusionParams::sv(*kappa, *theta, *gamma, *a, *b))?)
            }
            ModelSpec::Garch(p) => Box::new(GarchKernel::new(*p)?),
            ModelSpec::Vg(p) => Box::new(VgKernel::new(*p)?),
            ModelSpec::Jumpdiff(p) => Box::new(JumpDiffusionKernel::new(*p)?),
        })
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use crate::quadrature::{integrate, Tolerance};

    /// Integral of the density over the reported support.
    pub fn mass(k: &dyn TransitionKernel, x: f64, dt: f64, width: f64) -> f64 {
        let (a, b) = k.support(x, dt, width);
        let tol = Tolerance { abs: 1e-12, rel: 1e-11, max_segments: 4000 };
        integrate(|p| k.density(p, x, dt), a, b, tol).unwrap()
    }

    pub fn moment(k: &dyn TransitionKernel, x: f64, dt: f64, width: f64, pow: i32) -> f64 {
        let (a, b) = k.support(x, dt, width);
        let tol = Tolerance { abs: 1e-14, rel: 1e-11, max_segments: 4000 };
        integrate(|p| p.powi(pow) * k.density(p, x, dt), a, b, tol).unwrap()
    }

    /// Sampler mean and sd against the reporters, 5 standard errors.
    pub fn check_sampler_moments(k: &dyn TransitionKernel, x: f64, dt: f64, draws: usize) {
        let mut rng = PathRng::new(7, 0);
        let xs: Vec<f64> = (0..draws).map(|_| k.sample(x, dt, &mut rng)).collect();
        let n = draws as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = k.sd(x, dt);
        assert!((m - k.mean(x, dt)).abs() < 5.0 * sd / n.sqrt(), "{}: mean {m} vs {}", k.name(), k.mean(x, dt));
        // sd of the sample variance is about sd^2 sqrt(2/n) for light tails
        let kurt = xs.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n / (v * v);
        let se_var = sd * sd * ((kurt - 1.0) / n).sqrt();
        assert!((v - sd * sd).abs() < 5.0 * se_var, "{}: var {v} vs {}", k.name(), sd * sd);
    }

    /// KS distance between sampler draws and the kernel law (its CDF, or
    /// the density integrated on a fine grid).
    pub fn sampler_ks(k: &dyn TransitionKernel, x: f64, dt: f64, draws: usize, width: f64) -> f64 {
        let mut rng = PathRng::new(11, 3);
        let mut xs: Vec<f64> = (0..draws).map(|_| k.sample(x, dt, &mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let (a, b) = k.support(x, dt, width);
        let cells = 4000;
        let h = (b - a) / cells as f64;
        let mut cum = vec![0.0; cells + 1];
        for i in 0..cells {
            cum[i + 1] = cum[i] + interval_mass(k, x, dt, a + i as f64 * h, a + (i + 1) as f64 * h);
        }
        let total = cum[cells];
        let cdf = |v: f64| -> f64 {
            if let Some(c) = k.cdf(v, x, dt) {
                return c;
            }
            if v <= a {
                return 0.0;
            }
            if v >= b {
                return 1.0;
            }
            let t = (v - a) / h;
            let i = (t as usize).min(cells - 1);
            let f = t - i as f64;
            (cum[i] + f * (cum[i + 1] - cum[i])) / total
        };
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = cdf(v);
                (c - i as f64 / n).abs().max((c - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max)
    }
}
