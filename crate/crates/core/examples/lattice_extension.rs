//! The lattice building blocks: a two-dimensional CDF surface, bilinear
//! evaluation, adaptive widening of the y-domain and differencing to a PDF.
//!
//!     cargo run --example lattice_extension

use recurdist::lattice::{extend_y_domain, first_difference};
use recurdist::special::normal_cdf;
use recurdist::{DomainPolicy, Grid1D, LatticeFunction, Mode};

fn main() -> recurdist::Result<()> {
    // column x holds the CDF of N(x, 1); the initial y-range is far too narrow
    let xg = Grid1D::new(-1.0, 1.0, 4)?;
    let yg = Grid1D::new(-2.0, 2.0, 40)?;
    let f = LatticeFunction::from_fn(xg, yg, Mode::Cdf, |x, y| normal_cdf(y - x))?;
    println!("bilinear F(0.3, 0.5) = {:.6}, exact {:.6}", f.evaluate(0.3, 0.5)?, normal_cdf(0.2));

    let policy = DomainPolicy::new(1e-6, 200, 100)?;
    let ext = extend_y_domain(f, &policy, |y| Ok(xg.points().iter().map(|x| normal_cdf(y - x)).collect()))?;
    let g = ext.function.y_grid();
    println!(
        "{} extensions below, {} above; y now spans [{:.3}, {:.3}] in {} intervals",
        ext.lower,
        ext.upper,
        g.min(),
        g.max(),
        g.intervals()
    );
    ext.function.check_invariants(1e-9)?;

    let pdf = first_difference(&ext.function)?;
    println!("pdf at (0, 0) = {:.5}, clipped mass {:.1e}", pdf.function.evaluate(0.0, 0.0)?, pdf.clipped_mass);
    Ok(())
}
