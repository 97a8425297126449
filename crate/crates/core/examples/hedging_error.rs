//! Discounted error of discretely delta hedging a written call, compared
//! with the local minimum-variance hedge, under variance gamma.
//!
//!     cargo run --release --example hedging_error

use recurdist::pipelines::{preset, Job};
use recurdist::stats::moments;

fn main() -> recurdist::Result<()> {
    let Job::Hedge(mut job) = preset("hedge-fig9")? else { unreachable!() };
    job.strikes = vec![1.0];
    job.engine.y_intervals = 800;
    job.engine.dx = 0.005;
    job.mc_paths = 20_000;
    for run in job.run(4)?.runs {
        let m = moments(&run.result.law);
        let ks = run.mc.as_ref().map_or(f64::NAN, |o| o.ks);
        println!(
            "{:?} K={}: mean {:+.5}  sd {:.5}  skew {:+.3}  KS {ks:.4}",
            run.strategy,
            run.strike,
            m.mean,
            m.variance.sqrt(),
            m.third / m.variance.powf(1.5)
        );
    }
    Ok(())
}
