//! The simulation oracle on its own: deterministic per-path streams, a
//! histogram, and KS distances to an engine law and between samples.
//!
//!     cargo run --release --example mc_oracle

use recurdist::models::GbmKernel;
use recurdist::oracle::{histogram, ks_distance, ks_two_sample, simulate_y};
use recurdist::{run_recursion, DomainPolicy, Grid1D, McConfig, Mode, QuadSpec, RecursionConfig, StepFunctional};

fn main() -> recurdist::Result<()> {
    let kernel = GbmKernel::new(0.05, 0.3)?;
    let h = StepFunctional::increment();
    let (steps, dt) = (12, 1.0 / 12.0);
    let a = simulate_y(&kernel, &h, steps, dt, 1.0, &McConfig::new(50_000, 1))?;
    let again = simulate_y(&kernel, &h, steps, dt, 1.0, &McConfig::new(50_000, 1))?;
    assert_eq!(a, again, "streams are keyed by (seed, path)");
    let b = simulate_y(&kernel, &h, steps, dt, 1.0, &McConfig::new(50_000, 2))?;
    println!("two-sample KS between seeds 1 and 2: {:.4}", ks_two_sample(&a, &b));

    let cfg = RecursionConfig {
        steps,
        dt,
        x_grid: Grid1D::with_step(0.1, 4.0, 0.02)?,
        y_grid: None,
        policy: DomainPolicy::new(1e-8, 400, 2000)?,
        quad: QuadSpec::default(),
        mode: Mode::Cdf,
        record_rows: false,
    };
    let run = run_recursion(&kernel, &h, &cfg, 1.0)?;
    println!("KS of the engine law against seed 1: {:.4}", ks_distance(&a, &run.law)?);

    let hist = histogram(&a, 20)?;
    for (k, ht) in hist.heights.iter().enumerate().step_by(4) {
        println!("  [{:+.3}, {:+.3})  sim {ht:.3}  engine {:.3}", hist.edges[k], hist.edges[k + 1], run.law.pdf_at(0.5 * (hist.edges[k] + hist.edges[k + 1])));
    }
    Ok(())
}
