use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::TransitionKernel;
use crate::oracle::{mean_stderr, simulate, McConfig};
use crate::quadrature::trapezoid;
use crate::recursion::DistributionResult;

/// `e^{-rT} E[(Y - K)^+]` from the engine law of the average `Y`.
///
/// `spot` rescales a run made at `X_0 = result.x0`, which is only valid
/// for scale-invariant runs (a single conditioning column).
pub fn asian_price(result: &DistributionResult, spot: f64, strike: f64, r: f64, maturity: f64) -> Result<f64> {
    if result.mass_defect > 1e-2 {
        return Err(Error::Refused(format!("density mass defect {:.3e} exceeds 1e-2", result.mass_defect)));
    }
    let law = if spot == result.x0 {
        result.law.clone()
    } else if result.surface.x_grid().is_point() {
        result.law.scaled(spot / result.x0)?
    } else {
        return Err(Error::Unsupported("rescaling a law needs a scale-invariant run".into()));
    };
    let vals: Vec<f64> = law.pdf.iter().enumerate().map(|(k, f)| (law.y.at(k) - strike).max(0.0) * f).collect();
    Ok((-r * maturity).exp() * trapezoid(&vals, law.y.step()))
}

/// Monte Carlo Asian call prices for several strikes from one set of
/// paths, as `(price, standard error)`. Antithetic pairs are averaged
/// before the error is taken.
pub fn mc_asian_price(
    kernel: &dyn TransitionKernel,
    spot: f64,
    strikes: &[f64],
    steps: usize,
    dt: f64,
    r: f64,
    cfg: &McConfig,
) -> Result<Vec<(f64, f64)>> {
    if cfg.antithetic && cfg.paths % 2 == 1 {
        return Err(Error::Parameter("antithetic runs need an even path count".into()));
    }
    let averages = simulate(cfg, |_, rng| {
        let mut s = spot;
        let mut sum = 0.0;
        for _ in 0..steps {
            s = kernel.sample(s, dt, rng);
            sum += s;
        }
        Ok(sum / steps as f64)
    })?;
    let disc = (-r * dt * steps as f64).exp();
    Ok(strikes
        .iter()
        .map(|&k| {
            let pay: Vec<f64> = averages.iter().map(|a| disc * (a - k).max(0.0)).collect();
            if cfg.antithetic {
                let pairs: Vec<f64> = pay.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect();
                mean_stderr(&pairs)
            } else {
                mean_stderr(&pay)
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub strike: f64,
    pub engine_price: f64,
    pub mc_price: f64,
    pub mc_stderr: f64,
}

/// CSV `strike,engine_price,mc_price,mc_stderr`.
pub fn write_ladder_csv<W: Write>(rows: &[LadderRow], mut out: W) -> Result<()> {
    writeln!(out, "strike,engine_price,mc_price,mc_stderr")?;
    for r in rows {
        writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", r.strike, r.engine_price, r.mc_price, r.mc_stderr)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{DomainPolicy, Grid1D, Mode};
    use crate::models::{QuadSpec, VgKernel, VgParams};
    use crate::recursion::{run_scale_invariant, RecursionConfig, StepFunctional};

    const BASE: VgParams = VgParams { sigma: 0.2, theta: 1.2, nu: 0.001, r: 0.02 };

    // the running average drifts up by about 1/N per step, so the upper
    // boundary needs thousands of single-cell extensions
    fn run(steps: usize) -> DistributionResult {
        let k = VgKernel::new(BASE).unwrap();
        let cfg = RecursionConfig {
            steps,
            dt: 1.0 / 250.0,
            x_grid: Grid1D::point(1.0),
            y_grid: None,
            policy: DomainPolicy { tolerance: 1e-8, points: 2000, max_extensions: 20_000 },
            quad: QuadSpec { support_width: 10.0, ..QuadSpec::default() },
            mode: Mode::Cdf,
            record_rows: false,
        };
        run_scale_invariant(&k, &StepFunctional::average_level(steps), &cfg).unwrap()
    }

    #[test]
    fn strike_limits_and_shape() {
        let r = run(5);
        let t = 5.0 / 250.0;
        let zero = asian_price(&r, 1.0, 0.0, BASE.r, t).unwrap();
        assert!((zero - (-BASE.r * t).exp() * r.law.mean() * r.law.mass()).abs() < 1e-12);
        assert_eq!(asian_price(&r, 1.0, r.law.y.max(), BASE.r, t).unwrap(), 0.0);
        let ks: Vec<f64> = (0..21).map(|i| 0.9 + 0.01 * i as f64).collect();
        let c: Vec<f64> = ks.iter().map(|&k| asian_price(&r, 1.0, k, BASE.r, t).unwrap()).collect();
        for w in c.windows(3) {
            assert!(w[1] <= w[0]);
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-9);
        }
        let a = asian_price(&r, 2.0, 2.0, BASE.r, t).unwrap();
        let b = asian_price(&r, 1.0, 1.0, BASE.r, t).unwrap();
        assert!((a - 2.0 * b).abs() < 1e-4);
    }

    #[test]
    fn refuses_a_leaky_density() {
        let mut r = run(2);
        r.mass_defect = 0.05;
        assert!(matches!(asian_price(&r, 1.0, 1.0, 0.0, 0.01), Err(Error::Refused(_))));
    }

    #[test]
    fn antithetic_pairs_reduce_the_error() {
        let k = VgKernel::new(BASE).unwrap();
        let plain = McConfig::new(20_000, 5);
        let anti = McConfig { antithetic: true, ..plain };
        let a = mc_asian_price(&k, 1.0, &[1.0], 20, 1.0 / 250.0, BASE.r, &plain).unwrap()[0];
        let b = mc_asian_price(&k, 1.0, &[1.0], 20, 1.0 / 250.0, BASE.r, &anti).unwrap()[0];
        assert!(b.1 / a.1 < 0.9, "{} vs {}", b.1, a.1);
    }
}
