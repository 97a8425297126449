//! Law of X_N - X_0 for a CIR short rate, against the exact transition
//! density and a simulated sample.
//!
//!     cargo run --release --example cir_density

use recurdist::models::{cir_exact_density, CirKernel, CirParams};
use recurdist::oracle::{ks_distance, simulate_y};
use recurdist::{run_recursion, DomainPolicy, Grid1D, McConfig, Mode, QuadSpec, RecursionConfig, StepFunctional};

fn main() -> recurdist::Result<()> {
    let p = CirParams { kappa: 11.0, theta: 0.2, gamma: 1.5 };
    let kernel = CirKernel::new(p)?;
    let (steps, dt, x0) = (50, 1.0 / 1250.0, 0.2);
    let cfg = RecursionConfig {
        steps,
        dt,
        x_grid: Grid1D::with_step(0.0, 0.6, 0.004)?,
        y_grid: None,
        policy: DomainPolicy::new(1e-8, 500, 2000)?,
        quad: QuadSpec::default(),
        mode: Mode::Pdf,
        record_rows: false,
    };
    let run = run_recursion(&kernel, &StepFunctional::increment(), &cfg, x0)?;
    println!("mass defect {:.2e}, converged {}", run.mass_defect, run.converged);

    // X_N is exact in one jump of length N dt
    let t = steps as f64 * dt;
    let law = &run.law;
    let l1: f64 = law
        .points()
        .into_iter()
        .enumerate()
        .map(|(k, y)| (law.pdf[k] - cir_exact_density(x0 + y, x0, t, &p)).abs() * law.y.step())
        .sum();
    println!("L1 distance to the exact density {l1:.4}");

    let sample = simulate_y(&kernel, &StepFunctional::increment(), steps, dt, x0, &McConfig::new(20_000, 7))?;
    println!("KS distance to 20000 simulated paths {:.4}", ks_distance(&sample, law)?);
    println!("mean {:.5}  sd {:.5}", law.mean(), law.variance().sqrt());
    Ok(())
}
