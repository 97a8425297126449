use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{call_price, CallPricerConfig};
use crate::error::{Error, Result};
use crate::lattice::Grid1D;
use crate::models::{vg_levy_density, VgParams};
use crate::quadrature::{integrate, Tolerance};
use crate::recursion::StepFunctional;

/// Price range and resolution of the pricing tables (uniform in `ln S`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub s_min: f64,
    pub s_max: f64,
    pub points: usize,
}

impl Default for TableSpec {
    fn default() -> Self {
        TableSpec { s_min: 0.4, s_max: 2.5, points: 600 }
    }
}

impl TableSpec {
    fn grid(&self) -> Result<Grid1D> {
        if !(self.s_min > 0.0 && self.s_max > self.s_min && self.points >= 2) {
            return Err(Error::Parameter(format!("bad table range {self:?}")));
        }
        Grid1D::new(self.s_min.ln(), self.s_max.ln(), self.points - 1)
    }
}

/// Values on rebalancing times over a grid in `ln S`.
#[derive(Debug)]
struct Table {
    log_s: Grid1D,
    rows: Vec<Vec<f64>>,
    clamped: AtomicUsize,
}

impl Table {
    fn at(&self, n: usize, s: f64) -> f64 {
        let g = &self.log_s;
        let mut v = s.ln();
        if !(v >= g.min() && v <= g.max()) {
            self.clamped.fetch_add(1, Ordering::Relaxed);
            v = v.clamp(g.min(), g.max());
        }
        let (k, t) = g.locate(v);
        let row = &self.rows[n];
        if t == 0.0 {
            return row[k];
        }
        // nodes are uniform in ln S but the weights are linear in S, so
        // the affine deep in-the-money price is reproduced exactly
        let (a, b) = (g.at(k).exp(), g.at(k + 1).exp());
        let w = ((s.clamp(a, b) - a) / (b - a)).clamp(0.0, 1.0);
        row[k] + w * (row[k + 1] - row[k])
    }

    /// Bilinear in `(t, ln S)` for times between the rows.
    fn at_time(&self, times: &[f64], t: f64, s: f64) -> f64 {
        let last = self.rows.len() - 1;
        let t = t.clamp(times[0], times[last]);
        let n = times.partition_point(|&v| v <= t).saturating_sub(1).min(last);
        if n == last || t == times[n] {
            return self.at(n, s);
        }
        let w = (t - times[n]) / (times[n + 1] - times[n]);
        (1.0 - w) * self.at(n, s) + w * self.at(n + 1, s)
    }
}

/// Call prices `C(t_n, S)` at the rebalancing times `t_n = n T / N`,
/// with the payoff itself at `t_N`.
#[derive(Debug)]
pub struct PriceTable {
    pub strike: f64,
    pub maturity: f64,
    pub steps: usize,
    pub params: VgParams,
    pub pricer: CallPricerConfig,
    times: Vec<f64>,
    table: Table,
}

impl PriceTable {
    pub fn build(params: VgParams, strike: f64, maturity: f64, steps: usize, spec: &TableSpec, pricer: CallPricerConfig) -> Result<Self> {
        if steps == 0 || !(maturity > 0.0) {
            return Err(Error::Parameter(format!("need steps >= 1 and T > 0, got {steps}, {maturity}")));
        }
        let log_s = spec.grid()?;
        let times: Vec<f64> = (0..=steps).map(|n| maturity * n as f64 / steps as f64).collect();
        let rows = (0..=steps)
            .into_par_iter()
            .map(|n| {
                log_s
                    .points()
                    .into_iter()
                    .map(|v| {
                        let s = v.exp();
                        if n == steps {
                            Ok((s - strike).max(0.0))
                        } else {
                            call_price(s, strike, maturity - times[n], &params, &pricer)
                        }
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PriceTable { strike, maturity, steps, params, pricer, times, table: Table { log_s, rows, clamped: AtomicUsize::new(0) } })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `C(t_n, S)`; the payoff is exact at `n = N`.
    pub fn price(&self, n: usize, s: f64) -> f64 {
        if n == self.steps {
            return (s - self.strike).max(0.0);
        }
        self.table.at(n, s)
    }

    pub fn price_at(&self, t: f64, s: f64) -> f64 {
        self.table.at_time(&self.times, t, s)
    }

    /// Queries that fell outside the price range and were clamped.
    pub fn clamped_queries(&self) -> usize {
        self.table.clamped.load(Ordering::Relaxed)
    }
}

/// `dC/dS` by a central difference with relative bump `1e-4`.
pub fn delta_ratio(s: f64, strike: f64, tau: f64, p: &VgParams, cfg: &CallPricerConfig) -> Result<f64> {
    let b = 1e-4 * s;
    let up = call_price(s + b, strike, tau, p, cfg)?;
    let down = call_price(s - b, strike, tau, p, cfg)?;
    Ok((up - down) / (2.0 * b))
}

/// The Levy-measure integrals shared by every minimal-variance ratio.
#[derive(Debug, Clone, Copy)]
pub struct LevyWeights {
    pub params: VgParams,
    pub z_min: f64,
    /// Jump sizes beyond `[-z_lo, z_hi]` carry negligible weight.
    pub z_lo: f64,
    pub z_hi: f64,
    /// `int (e^z - 1)^2 k(z) dz`
    pub denominator: f64,
}

const LEVY_TOL: Tolerance = Tolerance { abs: 1e-12, rel: 1e-9, max_segments: 4000 };

impl LevyWeights {
    pub fn new(params: VgParams) -> Result<Self> {
        params.validate()?;
        let weight = |z: f64| (z.exp() - 1.0).powi(2) * vg_levy_density(z, &params).unwrap_or(0.0);
        // walk out until the weight has dropped below 1e-13; beyond that
        // the exponential tail integrates to well under 1e-10
        let reach = |sign: f64| {
            let mut z = 1e-3;
            while weight(sign * z) >= 1e-13 && z < 50.0 {
                z *= 1.05;
            }
            z
        };
        let z_min = 1e-8;
        let (z_lo, z_hi) = (reach(-1.0), reach(1.0));
        let denominator = integrate(weight, -z_lo, -z_min, LEVY_TOL)? + integrate(weight, z_min, z_hi, LEVY_TOL)?;
        if !(denominator >= 1e-14) {
            return Err(Error::Model(format!("Levy measure has degenerate activity: {denominator:e}")));
        }
        Ok(LevyWeights { params, z_min, z_lo, z_hi, denominator })
    }
}

/// Minimal-variance hedge ratio
/// `(1/S) int k(z) (e^z - 1) (C(S e^z) - C(S)) dz / int (e^z - 1)^2 k(z) dz`
/// for a price function `c` of the spot at a fixed time.
pub fn min_variance_ratio<C: Fn(f64) -> f64>(s: f64, w: &LevyWeights, c: C) -> Result<f64> {
    let c0 = c(s);
    let f = |z: f64| vg_levy_density(z, &w.params).unwrap_or(0.0) * (z.exp() - 1.0) * (c(s * z.exp()) - c0);
    let tol = Tolerance { abs: 1e-12 * s, ..LEVY_TOL };
    let num = integrate(f, -w.z_lo, -w.z_min, tol)? + integrate(f, w.z_min, w.z_hi, tol)?;
    Ok(num / (s * w.denominator))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HedgeKind {
    Delta,
    #[serde(rename = "minvar")]
    MinVariance,
}

impl std::str::FromStr for HedgeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta" => Ok(HedgeKind::Delta),
            "minvar" | "min-variance" => Ok(HedgeKind::MinVariance),
            other => Err(Error::Parameter(format!("unknown hedge strategy `{other}` (delta, minvar)"))),
        }
    }
}

/// Hedge ratios `phi(t_n, S)` for `n < N`, tabulated on the price grid.
#[derive(Debug)]
pub struct HedgeStrategy {
    pub kind: HedgeKind,
    pub steps: usize,
    times: Vec<f64>,
    table: Table,
}

impl HedgeStrategy {
    pub fn build(kind: HedgeKind, prices: &PriceTable) -> Result<Self> {
        let log_s = prices.table.log_s;
        let steps = prices.steps;
        let levy = match kind {
            HedgeKind::MinVariance => Some(LevyWeights::new(prices.params)?),
            HedgeKind::Delta => None,
        };
        let rows = (0..steps)
            .into_par_iter()
            .map(|n| {
                let tau = prices.maturity - prices.times[n];
                log_s
                    .points()
                    .into_iter()
                    .map(|v| {
                        let s = v.exp();
                        match &levy {
                            None => delta_ratio(s, prices.strike, tau, &prices.params, &prices.pricer),
                            Some(w) => min_variance_ratio(s, w, |x| prices.table.at(n, x)),
                        }
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        // clamps from the z-integrals above the table are expected, not diagnostics
        prices.table.clamped.store(0, Ordering::Relaxed);
        let times = prices.times[..steps].to_vec();
        Ok(HedgeStrategy { kind, steps, times, table: Table { log_s, rows, clamped: AtomicUsize::new(0) } })
    }

    /// `phi(t_n, S)`
    pub fn ratio(&self, n: usize, s: f64) -> f64 {
        self.table.at(n.min(self.steps - 1), s)
    }

    pub fn ratio_at(&self, t: f64, s: f64) -> f64 {
        self.table.at_time(&self.times, t, s)
    }

    pub fn clamped_queries(&self) -> usize {
        self.table.clamped.load(Ordering::Relaxed)
    }
}

/// Per-step hedging error of a short call hedged with `phi`:
/// `h(n, S, S') = phi S' - C(t_{n+1}, S') - (1 + r dt)(phi S - C(t_n, S))`,
/// with `phi = phi(t_n, S)`.
pub fn hedging_error_functional(strategy: Arc<HedgeStrategy>, prices: Arc<PriceTable>, r: f64, dt: f64, steps: usize) -> Result<StepFunctional> {
    if strategy.steps != steps || prices.steps != steps {
        return Err(Error::Parameter(format!(
            "tables cover {} and {} steps, hedge needs {steps}",
            strategy.steps, prices.steps
        )));
    }
    let growth = 1.0 + r * dt;
    Ok(StepFunctional::time_dependent("hedging_error", move |n, s, sn| {
        let phi = strategy.ratio(n, s);
        phi * sn - prices.price(n + 1, sn) - growth * (phi * s - prices.price(n, s))
    }))
}
