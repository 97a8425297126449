//! GARCH(1,1): law of the variance after N days, of the average variance,
//! and of the N-day return as a normal mixture over the latter.
//!
//!     cargo run --release --example garch_return

use recurdist::pipelines::{preset, Job};

fn main() -> recurdist::Result<()> {
    let Job::Garch(mut job) = preset("garch-fig7")? else { unreachable!() };
    job.engine.steps = 10;
    // the variance law is narrow next to the y-range the x-grid forces,
    // so it needs far more y intervals than the preset's 150
    job.engine.y_intervals = 1200;
    // the mixture ignores that each shock feeds the next variance, which
    // leaves a small KS residual on the return law at this sample size
    job.mc_paths = 200_000;
    let r = job.run(5)?;
    for (name, law, mc) in [
        ("variance", &r.variance, &r.mc_variance),
        ("integrated variance", &r.iv_run.law, &r.mc_iv),
        ("return", &r.returns, &r.mc_returns),
    ] {
        let ks = mc.as_ref().map_or(f64::NAN, |m| m.ks);
        println!("{name:>20}: mean {:+.5}  sd {:.5}  KS {ks:.4}", law.mean(), law.variance().sqrt());
    }
    Ok(())
}
