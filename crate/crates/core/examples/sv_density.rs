//! Stochastic variance dV = kappa (theta - V) dt + gamma V^b dW on a coarse
//! version of the preset grid, with a simulated overlay.
//!
//!     cargo run --release --example sv_density [preset]

use recurdist::pipelines::{preset, Job};

fn main() -> recurdist::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "sv-fig5-bone".into());
    let Job::Density(mut job) = preset(&name)? else {
        panic!("`{name}` is not a density preset");
    };
    job.engine.steps = 25;
    job.engine.y_intervals = 400;
    job.engine.dx *= 4.0;
    job.mc_paths = 20_000;
    let report = job.run(3)?;
    let law = &report.result.law;
    println!("{name}: {} steps in {:.2}s", job.engine.steps, report.engine_seconds);
    println!("mean {:.5}  sd {:.5}  mass defect {:.1e}", law.mean(), law.variance().sqrt(), report.result.mass_defect);
    if let Some(mc) = &report.mc {
        println!("KS against {} paths {:.4}", mc.paths, mc.ks);
    }
    Ok(())
}
