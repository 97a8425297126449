//! Quantiles and moments of engine laws, the GARCH return mixture, and
//! the left-tailed third-moment test.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{DomainPolicy, Grid1D, Mode};
use crate::models::{GarchKernel, JumpDiffusionKernel, JumpDiffusionParams, QuadSpec, TransitionKernel};
use crate::oracle::{simulate, McConfig};
use crate::recursion::{run_recursion, Distribution, RecursionConfig, StepFunctional};
use crate::special::{gaussian_pdf, normal_cdf};

/// Inverse of the tabulated CDF by linear interpolation.
///
/// Probabilities outside `[eps, 1 - eps]`, or outside the range the CDF
/// actually reaches on its grid, are refused.
pub fn quantile(law: &Distribution, p: f64, eps: f64) -> Result<f64> {
    let c = &law.cdf;
    let lo = eps.max(c[0]);
    let hi = (1.0 - eps).min(c[c.len() - 1]);
    if !(p >= lo && p <= hi) || !(p > 0.0 && p < 1.0) {
        return Err(Error::TailResolution { p, lo, hi });
    }
    let k = c.partition_point(|&v| v < p);
    if k == 0 {
        return Ok(law.y.at(0));
    }
    let (a, b) = (c[k - 1], c[k]);
    let t = if b > a { (p - a) / (b - a) } else { 1.0 };
    Ok(law.y.at(k - 1) + t * law.y.step())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    /// Third central moment.
    pub third: f64,
}

pub fn moments(law: &Distribution) -> Moments {
    Moments { mean: law.mean(), variance: law.variance(), third: law.central_moment(3) }
}

/// Law of the total return `sum eps_n` from the law of the average
/// variance `vbar`: a zero-mean normal mixture with variance `N vbar`.
///
/// The output grid covers `8` standard deviations of the widest component
/// with `points` intervals.
pub fn garch_return_density(iv: &Distribution, n: usize, points: usize) -> Result<Distribution> {
    if n == 0 || points < 2 {
        return Err(Error::Parameter(format!("need N >= 1 and at least 2 intervals, got {n}, {points}")));
    }
    let nonpositive = iv.cdf_at(0.0);
    if nonpositive > 1e-8 {
        return Err(Error::Model(format!("average variance has mass {nonpositive:e} at or below zero")));
    }
    let dv = iv.y.step();
    let comps: Vec<(f64, f64)> = iv
        .points()
        .into_iter()
        .zip(&iv.pdf)
        .enumerate()
        .filter(|(_, (v, f))| *v > 0.0 && **f > 0.0)
        .map(|(k, (v, &f))| {
            // trapezoid weights: half at the two ends of the grid
            let w = if k == 0 || k == iv.y.intervals() { 0.5 * dv } else { dv };
            ((n as f64 * v).sqrt(), w * f)
        })
        .collect();
    let s_max = comps.iter().map(|c| c.0).fold(0.0, f64::max);
    if s_max == 0.0 {
        return Err(Error::Model("average variance law has no positive support".into()));
    }
    let y = Grid1D::new(-8.0 * s_max, 8.0 * s_max, points)?;
    let (pdf, cdf): (Vec<f64>, Vec<f64>) = y
        .points()
        .par_iter()
        .map(|&r| {
            comps.iter().fold((0.0, 0.0), |(p, c), &(s, w)| (p + w * gaussian_pdf(r, 0.0, s), c + w * normal_cdf(r / s)))
        })
        .unzip();
    Ok(Distribution { y, cdf, pdf })
}

/// Monte Carlo sample of the total GARCH return over `n` observations,
/// `sum_{k<n} eps_k` with `eps_k ~ N(0, s2_k)`, sorted.
pub fn simulate_garch_return(kernel: &GarchKernel, s2_0: f64, n: usize, cfg: &McConfig) -> Result<Vec<f64>> {
    let mut out = simulate(cfg, |_, rng| {
        let mut s2 = s2_0;
        let mut total = 0.0;
        for _ in 0..n {
            let (eps, next) = kernel.sample_with_shock(s2, rng);
            total += eps;
            s2 = next;
        }
        Ok(total)
    })?;
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// The third-moment test `H0: mu_J = 0` against `H1: mu_J < 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub significance: f64,
    pub null: JumpDiffusionParams,
    pub alternative: JumpDiffusionParams,
    pub sample_sizes: Vec<usize>,
    pub dt: f64,
}

impl TestSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.significance > 0.0 && self.significance <= 0.5) {
            return Err(Error::Parameter(format!("significance must lie in (0, 0.5], got {}", self.significance)));
        }
        if self.null.mu_j != 0.0 {
            return Err(Error::Parameter(format!("null needs mu_J = 0, got {}", self.null.mu_j)));
        }
        if !(self.alternative.mu_j < 0.0) {
            return Err(Error::Parameter(format!("alternative needs mu_J < 0, got {}", self.alternative.mu_j)));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(Error::Parameter("sample sizes must be positive and non-empty".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Parameter(format!("dt must be positive, got {}", self.dt)));
        }
        self.null.validate()?;
        self.alternative.validate()
    }
}

/// Engine resolution for the test statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestEngine {
    pub policy: DomainPolicy,
    pub quad: QuadSpec,
}

/// Laws of the sample mean of `(dR)^3` for every requested `n`, from one
/// run over the largest `n`. Increments do not depend on the level, so a
/// single conditioning column suffices.
pub fn sample_mean_laws(params: &JumpDiffusionParams, spec: &TestSpec, engine: &TestEngine) -> Result<Vec<(usize, Distribution)>> {
    spec.validate()?;
    let kernel = JumpDiffusionKernel::new(*params)?;
    let n_max = *spec.sample_sizes.iter().max().expect("validated non-empty");
    let cfg = RecursionConfig {
        steps: n_max,
        dt: spec.dt,
        x_grid: Grid1D::point(0.0),
        y_grid: None,
        policy: engine.policy,
        quad: engine.quad,
        mode: Mode::Cdf,
        record_rows: true,
    };
    let run = run_recursion(&kernel, &StepFunctional::cubed_increment(), &cfg, 0.0)?;
    spec.sample_sizes
        .iter()
        .map(|&n| {
            let law = &run.rows.iter().find(|(k, _)| *k == n).expect("every count is recorded").1;
            Ok((n, law.scaled(1.0 / n as f64)?))
        })
        .collect()
}

/// Left-tail critical value of the sample mean at each sample size.
pub fn critical_values(spec: &TestSpec, engine: &TestEngine) -> Result<Vec<(usize, f64)>> {
    sample_mean_laws(&spec.null, spec, engine)?
        .into_iter()
        .map(|(n, law)| Ok((n, quantile(&law, spec.significance, engine.policy.tolerance)?)))
        .collect()
}

/// Probability of rejecting under the alternative at each sample size.
pub fn power_curve(spec: &TestSpec, criticals: &[(usize, f64)], engine: &TestEngine) -> Result<Vec<(usize, f64)>> {
    if criticals.len() != spec.sample_sizes.len() || criticals.iter().zip(&spec.sample_sizes).any(|(c, n)| c.0 != *n) {
        return Err(Error::Parameter("critical values were computed for different sample sizes".into()));
    }
    let laws = sample_mean_laws(&spec.alternative, spec, engine)?;
    Ok(laws.iter().zip(criticals).map(|((n, law), (_, c))| (*n, law.cdf_at(*c))).collect())
}

/// Smallest sample size whose power reaches `target`.
pub fn required_sample_size(power: &[(usize, f64)], target: f64) -> Option<usize> {
    power.iter().filter(|(_, p)| *p >= target).map(|(n, _)| *n).min()
}

/// Share of simulated samples of size `n` whose mean of `(dR)^3` falls
/// at or below `critical`.
pub fn mc_rejection_rate(params: &JumpDiffusionParams, n: usize, dt: f64, critical: f64, cfg: &McConfig) -> Result<f64> {
    let kernel = JumpDiffusionKernel::new(*params)?;
    let stats = simulate(cfg, |_, rng| {
        let mut s = 0.0;
        for _ in 0..n {
            s += kernel.sample(0.0, dt, rng).powi(3);
        }
        Ok(s / n as f64)
    })?;
    Ok(stats.iter().filter(|&&s| s <= critical).count() as f64 / stats.len() as f64)
}

/// CSV `n,critical_value,power` preceded by `#` lines with the test set-up.
pub fn write_test_report<W: Write>(spec: &TestSpec, criticals: &[(usize, f64)], power: &[(usize, f64)], mut out: W) -> Result<()> {
    writeln!(out, "# significance = {}, dt = {}", spec.significance, spec.dt)?;
    writeln!(out, "# null: {:?}", spec.null)?;
    writeln!(out, "# alternative: {:?}", spec.alternative)?;
    writeln!(out, "n,critical_value,power")?;
    for ((n, c), (_, p)) in criticals.iter().zip(power) {
        writeln!(out, "{n},{c:.16e},{p:.16e}")?;
    }
    Ok(())
}
