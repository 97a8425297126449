//! European calls under variance gamma, hedge ratios and hedging-error
//! summands, and Asian prices read off engine densities.

mod asian;
mod hedge;

pub use asian::{asian_price, mc_asian_price, write_ladder_csv, LadderRow};
pub use hedge::{
    delta_ratio, hedging_error_functional, min_variance_ratio, HedgeKind, HedgeStrategy, LevyWeights, PriceTable, TableSpec,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::VgParams;
use crate::quadrature::{integrate, Tolerance};

/// Settings for the damped-transform call price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CallPricerConfig {
    /// Damping exponent on the log strike.
    pub alpha: f64,
    /// Width of each adaptive panel in frequency.
    pub panel_width: f64,
    /// Panels allowed before the tail cutoff must have been reached.
    pub max_panels: usize,
}

impl Default for CallPricerConfig {
    fn default() -> Self {
        CallPricerConfig { alpha: 1.5, panel_width: 10.0, max_panels: 2000 }
    }
}

impl CallPricerConfig {
    /// Rejects a damping exponent for which `E[S_T^(alpha + 1)]` is infinite.
    pub fn validate(&self, p: &VgParams) -> Result<()> {
        if !(self.alpha > 0.0 && self.panel_width > 0.0 && self.max_panels > 0) {
            return Err(Error::Parameter(format!("bad call pricer settings {self:?}")));
        }
        let c = self.alpha + 1.0;
        if 1.0 - c * p.theta * p.nu - 0.5 * c * c * p.sigma * p.sigma * p.nu <= 0.0 {
            return Err(Error::Parameter(format!(
                "damping alpha = {} needs the moment of order {c} of S_T, which is infinite for {p:?}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// `E[exp(i u ln S_T)]` for complex `u`.
///
/// The power `(1 - i u theta nu + u^2 sigma^2 nu / 2)^(-T/nu)` uses the
/// principal logarithm. It stays continuous along the pricing contour as
/// long as the base keeps a positive real part, and an error is returned
/// rather than letting the branch wrap.
pub fn vg_char_fn(u: Complex64, maturity: f64, p: &VgParams, s0: f64) -> Result<Complex64> {
    let iu = Complex64::i() * u;
    let base = 1.0 - iu * p.theta * p.nu + u * u * (0.5 * p.sigma * p.sigma * p.nu);
    if !(base.re > 0.0) {
        return Err(Error::Model(format!("branch tracking failed at u = {u}: base {base} left the right half plane")));
    }
    let drift = s0.ln() + (p.r + p.omega()) * maturity;
    Ok((iu * drift - maturity / p.nu * base.ln()).exp())
}

/// Call price `E[e^{-rT} (S_T - K)^+]` by the damped inverse transform.
pub fn call_price(s0: f64, strike: f64, maturity: f64, p: &VgParams, cfg: &CallPricerConfig) -> Result<f64> {
    if !(strike > 0.0 && s0 > 0.0 && maturity > 0.0) {
        return Err(Error::Parameter(format!("call needs S0, K, T > 0, got {s0}, {strike}, {maturity}")));
    }
    cfg.validate(p)?;
    let a = cfg.alpha;
    let k = strike.ln();
    let disc = (-p.r * maturity).exp();
    let lead = (-a * k).exp() / std::f64::consts::PI;
    let term = |v: f64| -> Result<Complex64> {
        let u = Complex64::new(v, -(a + 1.0));
        let denom = Complex64::new(a * a + a - v * v, (2.0 * a + 1.0) * v);
        Ok(vg_char_fn(u, maturity, p, s0)? * disc / denom)
    };
    // the phase e^{-ivk} has unit modulus, so |term| bounds the integrand
    let cut = 1e-12 / lead;
    let tol = Tolerance { abs: 1e-13 / lead, rel: 1e-11, max_segments: 400 };
    let mut failure = None;
    let mut total = 0.0;
    let mut panel = 0;
    loop {
        if panel == cfg.max_panels {
            return Err(Error::Quadrature { estimate: total * lead, bound: f64::NAN });
        }
        let (lo, hi) = (panel as f64 * cfg.panel_width, (panel + 1) as f64 * cfg.panel_width);
        total += integrate(
            |v| match term(v) {
                Ok(t) => (Complex64::new(0.0, -v * k).exp() * t).re,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            },
            lo,
            hi,
            tol,
        )?;
        if let Some(e) = failure.take() {
            return Err(e);
        }
        panel += 1;
        if term(hi)?.norm() < cut {
            break;
        }
    }
    let price = lead * total;
    let floor = (s0 - strike * disc).max(0.0);
    Ok(price.clamp(floor, s0))
}
