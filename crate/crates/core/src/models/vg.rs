use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{Nodes, QuadSpec, TransitionKernel};
use crate::error::{Error, Result};
use crate::oracle::PathRng;
use crate::quadrature::{composite_weights, integrate, Tolerance};
use crate::special::{gaussian_pdf, ln_gamma};

/// Exponential variance gamma: `S_t = S_0 exp((r + omega) t + X_t)` with
/// `X_t = theta G_t + sigma W(G_t)` and `G` a gamma process of variance
/// rate `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VgParams {
    pub sigma: f64,
    pub theta: f64,
    pub nu: f64,
    pub r: f64,
}

impl VgParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.nu > 0.0) || !self.theta.is_finite() || !self.r.is_finite() {
            return Err(Error::Parameter(format!("VG needs sigma, nu > 0, got {self:?}")));
        }
        if 1.0 - self.theta * self.nu - 0.5 * self.sigma * self.sigma * self.nu <= 0.0 {
            return Err(Error::Parameter(format!("VG needs 1 - theta nu - sigma^2 nu / 2 > 0, got {self:?}")));
        }
        Ok(())
    }

    /// Martingale correction `(1/nu) ln(1 - theta nu - sigma^2 nu / 2)`.
    pub fn omega(&self) -> f64 {
        (1.0 - self.theta * self.nu - 0.5 * self.sigma * self.sigma * self.nu).ln() / self.nu
    }

    /// Variance of `X_1`.
    pub fn unit_variance(&self) -> f64 {
        self.sigma * self.sigma + self.nu * self.theta * self.theta
    }

    /// Log of `E[exp(c X_t)]`, infinite when the moment does not exist.
    pub fn ln_mgf(&self, c: f64, t: f64) -> f64 {
        let base = 1.0 - c * self.theta * self.nu - 0.5 * c * c * self.sigma * self.sigma * self.nu;
        if base <= 0.0 {
            f64::INFINITY
        } else {
            -t / self.nu * base.ln()
        }
    }
}

/// Above this shape `t / nu` the gamma clock is treated as deterministic.
const NORMAL_LIMIT_SHAPE: f64 = 1e6;

/// Density of the VG increment `X_t` at `x`, from the gamma-mixture
/// integral evaluated in `ln g`.
pub fn vg_density(x: f64, t: f64, p: &VgParams) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Parameter(format!("VG density needs t > 0, got {t}")));
    }
    let shape = t / p.nu;
    if shape > NORMAL_LIMIT_SHAPE {
        return Ok(gaussian_pdf(x, p.theta * t, p.sigma * t.sqrt()));
    }
    let ln_norm = ln_gamma(shape) + shape * p.nu.ln();
    let centre = (shape * p.nu).ln();
    let s_hi = (p.nu * (shape + 50.0 + 12.0 * shape.sqrt())).ln();
    let s_lo = centre - (60.0 / (shape - 0.5).max(0.05)).min(200.0);
    let integrand = |s: f64| {
        let g = s.exp();
        // gamma density times the Jacobian g
        let ln_gam = shape * s - g / p.nu - ln_norm;
        ln_gam.exp() * gaussian_pdf(x, p.theta * g, p.sigma * g.sqrt())
    };
    let tol = Tolerance { abs: 1e-300, rel: 1e-10, max_segments: 4000 };
    // split at the mode of the mixing law to help the adaptive rule
    let left = integrate(integrand, s_lo, centre, tol)?;
    let right = integrate(integrand, centre, s_hi, tol)?;
    Ok(left + right)
}

/// Levy density of the VG process.
pub fn vg_levy_density(z: f64, p: &VgParams) -> Result<f64> {
    if z == 0.0 {
        return Err(Error::Domain("VG Levy density is singular at z = 0".into()));
    }
    let s2 = p.sigma * p.sigma;
    let rate = (2.0 / p.nu + p.theta * p.theta / s2).sqrt() / p.sigma;
    Ok((p.theta * z / s2).exp() / (p.nu * z.abs()) * (-rate * z.abs()).exp())
}

type TableKey = (u64, usize, u64, bool);

/// VG price kernel on the level `S`; multiplicative.
#[derive(Debug)]
pub struct VgKernel {
    pub params: VgParams,
    omega: f64,
    tables: Mutex<HashMap<TableKey, Arc<Nodes>>>,
}

impl Clone for VgKernel {
    fn clone(&self) -> Self {
        VgKernel { params: self.params, omega: self.omega, tables: Mutex::new(HashMap::new()) }
    }
}

impl VgKernel {
    pub fn new(params: VgParams) -> Result<Self> {
        params.validate()?;
        Ok(VgKernel { params, omega: params.omega(), tables: Mutex::new(HashMap::new()) })
    }

    fn drift(&self, dt: f64) -> f64 {
        (self.params.r + self.omega) * dt
    }

    fn log_sd(&self, dt: f64) -> f64 {
        (self.params.unit_variance() * dt).sqrt()
    }

    /// Log-return nodes `u` with density-folded weights, cached per step.
    pub fn log_return_nodes(&self, dt: f64, q: &QuadSpec) -> Result<Arc<Nodes>> {
        let key = (dt.to_bits(), q.z_count, q.support_width.to_bits(), q.rule == crate::quadrature::Rule::Simpson);
        if let Some(n) = self.tables.lock().expect("table lock").get(&key) {
            return Ok(n.clone());
        }
        let m = self.params.theta * dt;
        let s = self.log_sd(dt);
        let (a, b) = (m - q.support_width * s, m + q.support_width * s);
        let h = (b - a) / q.z_count as f64;
        let w = composite_weights(q.rule, q.z_count, h);
        let mut points = Vec::with_capacity(w.len());
        let mut weights = Vec::with_capacity(w.len());
        for (k, wk) in w.into_iter().enumerate() {
            let u = a + k as f64 * h;
            points.push(u);
            weights.push(wk * vg_density(u, dt, &self.params)?);
        }
        let nodes = Arc::new(Nodes { points, weights }.normalized()?);
        self.tables.lock().expect("table lock").insert(key, nodes.clone());
        Ok(nodes)
    }
}

impl TransitionKernel for VgKernel {
    fn name(&self) -> &str {
        "vg"
    }

    fn density(&self, x_next: f64, x: f64, dt: f64) -> f64 {
        if x_next <= 0.0 || x <= 0.0 {
            return 0.0;
        }
        let u = (x_next / x).ln() - self.drift(dt);
        vg_density(u, dt, &self.params).unwrap_or(f64::NAN) / x_next
    }

    fn mean(&self, x: f64, dt: f64) -> f64 {
        x * (self.params.r * dt).exp()
    }

    fn sd(&self, x: f64, dt: f64) -> f64 {
        let second = (self.params.ln_mgf(2.0, dt) + 2.0 * self.drift(dt)).exp();
        let m = self.mean(x, dt);
        (x * x * second - m * m).max(0.0).sqrt()
    }

    fn support(&self, x: f64, dt: f64, width: f64) -> (f64, f64) {
        let m = self.params.theta * dt + self.drift(dt);
        let s = self.log_sd(dt);
        (x * (m - width * s).exp(), x * (m + width * s).exp())
    }

    fn domain(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn nodes(&self, x: f64, dt: f64, q: &QuadSpec) -> Result<Nodes> {
        let table = self.log_return_nodes(dt, q)?;
        let d = self.drift(dt);
        Ok(Nodes { points: table.points.iter().map(|u| x * (u + d).exp()).collect(), weights: table.weights.clone() })
    }

    /// Gamma subordination: draw the clock, then the Brownian increment.
    fn sample(&self, x: f64, dt: f64, rng: &mut PathRng) -> f64 {
        let p = &self.params;
        let g = Gamma::new(dt / p.nu, p.nu).expect("positive shape").sample(rng.inner());
        let u = p.theta * g + p.sigma * g.sqrt() * rng.normal();
        x * (u + self.drift(dt)).exp()
    }

    fn multiplicative(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::testing::*;
    use approx::assert_relative_eq;

    const BASE: VgParams = VgParams { sigma: 0.2, theta: 1.2, nu: 0.001, r: 0.02 };

    #[test]
    fn omega_value() {
        assert_relative_eq!(BASE.omega(), 1000.0 * (0.99878f64).ln(), max_relative = 1e-12);
        assert!((BASE.omega() + 1.22075).abs() < 1e-5);
    }

    #[test]
    fn density_normalizes_and_has_the_drift_mean() {
        let p = VgParams { sigma: 0.25, theta: -0.3, nu: 0.2, r: 0.0 };
        for t in [0.1, 1.0] {
            let s = (p.unit_variance() * t).sqrt();
            // exponential tails: 14 sd still leaves ~1e-5 of mass at t = 0.1
            let (a, b) = (p.theta * t - 40.0 * s, p.theta * t + 40.0 * s);
            let tol = Tolerance { abs: 1e-12, rel: 1e-9, max_segments: 4000 };
            // shape t/nu <= 1/2 puts a singularity at zero, so split there
            let int = |f: &dyn Fn(f64) -> f64| integrate(f, a, 0.0, tol).unwrap() + integrate(f, 0.0, b, tol).unwrap();
            let m0 = int(&|x| vg_density(x, t, &p).unwrap());
            let m1 = int(&|x| x * vg_density(x, t, &p).unwrap());
            assert!((m0 - 1.0).abs() < 1e-5, "t={t}: {m0}");
            assert!((m1 - p.theta * t).abs() < 1e-6, "t={t}: {m1}");
        }
    }

    #[test]
    fn unit_shape_is_an_asymmetric_laplace_law() {
        let p = VgParams { sigma: 0.3, theta: 0.1, nu: 0.5, r: 0.0 };
        let t = 0.5;
        let s2 = p.sigma * p.sigma;
        let root = (p.theta * p.theta + 2.0 * s2 / p.nu).sqrt();
        for x in [-0.4, -0.05, 0.2, 0.6] {
            let exact = (p.theta * x / s2).exp() * (-root * x.abs() / s2).exp() / (p.nu * root);
            assert_relative_eq!(vg_density(x, t, &p).unwrap(), exact, max_relative = 1e-8);
        }
    }

    #[test]
    fn levy_density_properties() {
        let sym = VgParams { theta: 0.0, ..BASE };
        for z in [1e-4, 0.01, 0.3] {
            assert!(vg_levy_density(z, &BASE).unwrap() > 0.0);
            assert!(vg_levy_density(-z, &BASE).unwrap() > 0.0);
            assert_eq!(vg_levy_density(z, &sym).unwrap(), vg_levy_density(-z, &sym).unwrap());
        }
        assert!(vg_levy_density(0.0, &BASE).is_err());
        let tol = Tolerance { abs: 1e-14, rel: 1e-10, max_segments: 4000 };
        let f = |z: f64| z * z * vg_levy_density(z, &BASE).unwrap();
        let v = integrate(f, 1e-8, 1.0, tol).unwrap() + integrate(f, -1.0, -1e-8, tol).unwrap();
        assert_relative_eq!(v, BASE.unit_variance(), max_relative = 1e-6);
    }

    #[test]
    fn kernel_is_risk_neutral() {
        let k = VgKernel::new(BASE).unwrap();
        let dt = 1.0 / 250.0;
        let n = k.nodes(1.0, dt, &QuadSpec { support_width: 10.0, ..QuadSpec::default() }).unwrap();
        let m: f64 = n.points.iter().zip(&n.weights).map(|(p, w)| p * w).sum();
        assert_relative_eq!(m, (0.02 * dt).exp(), max_relative = 1e-9);
        assert!((mass(&k, 1.0, dt, 10.0) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn sampler_matches() {
        let k = VgKernel::new(BASE).unwrap();
        let dt = 1.0 / 250.0;
        check_sampler_moments(&k, 1.0, dt, 100_000);
        assert!(sampler_ks(&k, 1.0, dt, 100_000, 10.0) < 0.01);
    }

    #[test]
    fn sampled_log_returns_have_vg_moments() {
        let p = VgParams { sigma: 0.2, theta: -0.4, nu: 0.3, r: 0.0 };
        let k = VgKernel::new(p).unwrap();
        let t = 0.5;
        let mut rng = PathRng::new(3, 9);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| k.sample(1.0, t, &mut rng).ln() - p.omega() * t).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let var = p.unit_variance() * t;
        assert!((m - p.theta * t).abs() < 4.0 * (var / n as f64).sqrt());
        // Var of VG: sigma^2 t + nu theta^2 t, fourth moment makes the se ~3x normal
        assert!((v - var).abs() < 4.0 * var * (6.0 / n as f64).sqrt(), "{v} vs {var}");
    }
}
