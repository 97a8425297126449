//! Law of the time average of a square-root variance process, the
//! integrated variance behind an option on realized volatility.
//!
//!     cargo run --release --example integrated_variance

use recurdist::models::{EulerKernel, GenericDiffusionParams};
use recurdist::oracle::{ks_distance, simulate_y};
use recurdist::stats::quantile;
use recurdist::{run_recursion, DomainPolicy, Grid1D, McConfig, Mode, QuadSpec, RecursionConfig, StepFunctional};

fn main() -> recurdist::Result<()> {
    let kernel = EulerKernel::new(GenericDiffusionParams::sv(11.0, 0.2, 0.8, 0.0, 0.5))?;
    let (steps, dt, v0) = (40, 1.0 / 250.0, 0.2);
    let h = StepFunctional::average_level(steps);
    let cfg = RecursionConfig {
        steps,
        dt,
        x_grid: Grid1D::with_step(0.004, 0.8, 0.004)?,
        y_grid: None,
        policy: DomainPolicy::new(1e-8, 600, 2000)?,
        quad: QuadSpec::default(),
        mode: Mode::Cdf,
        record_rows: false,
    };
    let run = run_recursion(&kernel, &h, &cfg, v0)?;
    let law = &run.law;
    println!("E[mean variance] = {:.5} (theta 0.2, V0 0.2)", law.mean());
    for p in [0.05, 0.5, 0.95] {
        println!("  {:>4.0}% quantile {:.5}", 100.0 * p, quantile(law, p, 1e-8)?);
    }
    let sample = simulate_y(&kernel, &h, steps, dt, v0, &McConfig::new(20_000, 11))?;
    println!("KS against 20000 paths {:.4}", ks_distance(&sample, law)?);
    Ok(())
}
