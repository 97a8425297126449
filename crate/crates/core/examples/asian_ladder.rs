//! Arithmetic Asian calls under variance gamma. The summand S'/N is
//! homogeneous and the kernel multiplicative, so one run at S0 = 1 prices
//! every spot.
//!
//!     cargo run --release --example asian_ladder

use recurdist::models::{VgKernel, VgParams};
use recurdist::pricing::{asian_price, mc_asian_price};
use recurdist::{run_scale_invariant, DomainPolicy, Grid1D, McConfig, Mode, QuadSpec, RecursionConfig, StepFunctional};

fn main() -> recurdist::Result<()> {
    let p = VgParams { sigma: 0.2, theta: 1.2, nu: 0.001, r: 0.02 };
    let kernel = VgKernel::new(p)?;
    let (steps, dt) = (20, 1.0 / 250.0);
    let cfg = RecursionConfig {
        steps,
        dt,
        x_grid: Grid1D::point(1.0),
        y_grid: None,
        policy: DomainPolicy::new(1e-8, 2000, 100_000)?,
        quad: QuadSpec { support_width: 10.0, ..QuadSpec::default() },
        mode: Mode::Cdf,
        record_rows: false,
    };
    let run = run_scale_invariant(&kernel, &StepFunctional::average_level(steps), &cfg)?;
    let strikes = [0.9, 0.95, 1.0, 1.05, 1.1];
    let mc = mc_asian_price(&kernel, 1.0, &strikes, steps, dt, p.r, &McConfig { paths: 200_000, seed: 8, antithetic: true })?;
    let t = steps as f64 * dt;
    println!("strike    engine        mc  (stderr)   engine at S0=2, K=2x");
    for (&k, (m, se)) in strikes.iter().zip(mc) {
        let c = asian_price(&run, 1.0, k, p.r, t)?;
        let doubled = asian_price(&run, 2.0, 2.0 * k, p.r, t)?;
        println!("{k:>6.2} {c:>9.6} {m:>9.6}  ({se:.1e})   {doubled:.6}");
    }
    Ok(())
}
