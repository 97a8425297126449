//! Uniform grids and functions tabulated on an x-by-y lattice.
//!
//! A [`LatticeFunction`] holds one of the three objects the backward
//! recursion can propagate: a conditional CDF, a conditional PDF, or the
//! expected hockey-stick payoff `E[(Y - y)^+ | x]`. Queries outside the
//! stored domain follow fixed reference rules, see [`LatticeFunction::evaluate`].

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Boundary, Error, Result};
use crate::quadrature::trapezoid;

/// Uniformly spaced points `min + k * step` for `k = 0..=intervals`.
///
/// A grid with `intervals == 0` is a single point; it is only meaningful as
/// an x-axis for level-independent models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    min: f64,
    max: f64,
    intervals: usize,
}

impl Grid1D {
    pub fn new(min: f64, max: f64, intervals: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || min >= max {
            return Err(Error::Domain(format!("grid bounds must satisfy min < max, got [{min}, {max}]")));
        }
        if intervals < 1 {
            return Err(Error::Domain("grid needs at least one interval".into()));
        }
        Ok(Grid1D { min, max, intervals })
    }

    /// Grid through `min` with the given spacing, extended to cover `max`.
    pub fn with_step(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::Domain(format!("grid step must be positive, got {step}")));
        }
        let intervals = ((max - min) / step - 1e-9).ceil().max(1.0) as usize;
        Grid1D::new(min, min + intervals as f64 * step, intervals)
    }

    pub fn point(x: f64) -> Self {
        Grid1D { min: x, max: x, intervals: 0 }
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_point(&self) -> bool {
        self.intervals == 0
    }

    pub fn step(&self) -> f64 {
        if self.intervals == 0 {
            0.0
        } else {
            (self.max - self.min) / self.intervals as f64
        }
    }

    /// Point `k`, computed directly from the bounds.
    pub fn at(&self, k: usize) -> f64 {
        if k == self.intervals {
            return self.max;
        }
        self.min + k as f64 * self.step()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.at(k)).collect()
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    /// Cell index and fractional offset of `v`, clamped to the grid.
    pub(crate) fn locate(&self, v: f64) -> (usize, f64) {
        if self.intervals == 0 || v <= self.min {
            return (0, 0.0);
        }
        if v >= self.max {
            return (self.intervals - 1, 1.0);
        }
        let t = (v - self.min) / self.step();
        // snap to nodes so values there are reproduced exactly
        let r = t.round();
        if (t - r).abs() < 1e-10 {
            let r = r as usize;
            return if r >= self.intervals { (self.intervals - 1, 1.0) } else { (r, 0.0) };
        }
        let i = (t.floor() as usize).min(self.intervals - 1);
        (i, t - i as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Cdf,
    Pdf,
    Payoff,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Cdf => "cdf",
            Mode::Pdf => "pdf",
            Mode::Payoff => "payoff",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cdf" => Ok(Mode::Cdf),
            "pdf" => Ok(Mode::Pdf),
            "payoff" => Ok(Mode::Payoff),
            other => Err(Error::Parameter(format!("unknown object function `{other}`"))),
        }
    }
}

/// Values on `x_grid` by `y_grid`, stored x-major so each x column is a
/// contiguous slice over y.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeFunction {
    x_grid: Grid1D,
    y_grid: Grid1D,
    values: Vec<f64>,
    mode: Mode,
}

impl LatticeFunction {
    pub fn new(x_grid: Grid1D, y_grid: Grid1D, values: Vec<f64>, mode: Mode) -> Result<Self> {
        if y_grid.is_point() {
            return Err(Error::Domain("y grid must have at least two points".into()));
        }
        if values.len() != x_grid.len() * y_grid.len() {
            return Err(Error::Domain(format!(
                "expected {} lattice values, got {}",
                x_grid.len() * y_grid.len(),
                values.len()
            )));
        }
        Ok(LatticeFunction { x_grid, y_grid, values, mode })
    }

    /// Tabulate `f(x, y)` on the lattice.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(x_grid: Grid1D, y_grid: Grid1D, mode: Mode, f: F) -> Result<Self> {
        let mut values = Vec::with_capacity(x_grid.len() * y_grid.len());
        for i in 0..x_grid.len() {
            let x = x_grid.at(i);
            for k in 0..y_grid.len() {
                values.push(f(x, y_grid.at(k)));
            }
        }
        LatticeFunction::new(x_grid, y_grid, values, mode)
    }

    pub(crate) fn from_columns(x_grid: Grid1D, y_grid: Grid1D, columns: Vec<Vec<f64>>, mode: Mode) -> Result<Self> {
        let values = columns.into_iter().flatten().collect();
        LatticeFunction::new(x_grid, y_grid, values, mode)
    }

    pub fn x_grid(&self) -> &Grid1D {
        &self.x_grid
    }

    pub fn y_grid(&self) -> &Grid1D {
        &self.y_grid
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, i: usize) -> &[f64] {
        let ny = self.y_grid.len();
        &self.values[i * ny..(i + 1) * ny]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.y_grid.len())
    }

    pub fn node(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.y_grid.len() + k]
    }

    /// Value at `(x, y)` under the reference rules:
    ///
    /// * inside the lattice: bilinear interpolation;
    /// * `y > y_max`: 1 for a CDF, 0 for a PDF or payoff;
    /// * `y < y_min`: 0 for a CDF or PDF; a payoff continues linearly from
    ///   its two lowest nodes;
    /// * `x` outside the x-grid: the nearest boundary column.
    pub fn evaluate(&self, x: f64, y: f64) -> Result<f64> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Domain(format!("non-finite lattice query ({x}, {y})")));
        }
        let (i, wx) = self.x_grid.locate(x);
        Ok(self.eval_located(i, wx, y))
    }

    /// Evaluation with a pre-located x cell; `y` must be finite.
    #[inline]
    pub(crate) fn eval_located(&self, i: usize, wx: f64, y: f64) -> f64 {
        let a = self.column_value(i, y);
        if wx == 0.0 || self.x_grid.is_point() {
            return a;
        }
        let b = self.column_value(i + 1, y);
        if wx == 1.0 {
            return b;
        }
        a + wx * (b - a)
    }

    #[inline]
    pub(crate) fn column_value(&self, i: usize, y: f64) -> f64 {
        let col = self.column(i);
        let g = &self.y_grid;
        if y > g.max {
            return match self.mode {
                Mode::Cdf => 1.0,
                Mode::Pdf | Mode::Payoff => 0.0,
            };
        }
        if y < g.min {
            return match self.mode {
                Mode::Cdf | Mode::Pdf => 0.0,
                Mode::Payoff => col[0] + (g.min - y) * (col[0] - col[1]) / g.step(),
            };
        }
        let (k, t) = g.locate(y);
        if t == 0.0 {
            col[k]
        } else if t == 1.0 {
            col[k + 1]
        } else {
            col[k] + t * (col[k + 1] - col[k])
        }
    }

    /// Row at `x0`, interpolated between neighbouring columns.
    pub fn row_at(&self, x0: f64) -> Vec<f64> {
        let (i, wx) = self.x_grid.locate(x0);
        let a = self.column(i);
        if wx == 0.0 || self.x_grid.is_point() {
            return a.to_vec();
        }
        let b = self.column(i + 1);
        a.iter().zip(b).map(|(a, b)| a + wx * (b - a)).collect()
    }

    /// Checks the mode's shape constraints up to `tol`.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        for (i, col) in self.columns().enumerate() {
            for (k, &v) in col.iter().enumerate() {
                let bad = match self.mode {
                    Mode::Cdf => v < -tol || v > 1.0 + tol || (k > 0 && v < col[k - 1] - tol),
                    Mode::Pdf => v < -tol,
                    Mode::Payoff => v < -tol || (k > 0 && v > col[k - 1] + tol),
                };
                if bad || !v.is_finite() {
                    return Err(Error::Domain(format!(
                        "{} invariant violated at column {i}, y = {}",
                        self.mode.as_str(),
                        self.y_grid.at(k)
                    )));
                }
            }
        }
        Ok(())
    }

    /// CSV dump `x,y,value,mode`, row-major over x then y.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y,value,mode")?;
        for i in 0..self.x_grid.len() {
            let x = self.x_grid.at(i);
            for k in 0..self.y_grid.len() {
                writeln!(
                    out,
                    "{:.16e},{:.16e},{:.16e},{}",
                    x,
                    self.y_grid.at(k),
                    self.node(i, k),
                    self.mode.as_str()
                )?;
            }
        }
        Ok(())
    }

    /// Same x columns resampled onto another y grid with [`Self::evaluate`].
    pub fn resample_y(&self, y_grid: Grid1D) -> Result<LatticeFunction> {
        let mut values = Vec::with_capacity(self.x_grid.len() * y_grid.len());
        for i in 0..self.x_grid.len() {
            for k in 0..y_grid.len() {
                values.push(self.column_value(i, y_grid.at(k)));
            }
        }
        LatticeFunction::new(self.x_grid, y_grid, values, self.mode)
    }

    pub(crate) fn map_columns<F: FnMut(&mut [f64])>(&mut self, mut f: F) {
        let ny = self.y_grid.len();
        self.values.chunks_mut(ny).for_each(|c| f(c));
    }
}

/// Adaptive y-domain settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainPolicy {
    /// Boundary tolerance: a CDF must be within this of 0 and 1 at the
    /// ends of the y-domain, a PDF or payoff below it.
    pub tolerance: f64,
    /// Number of y intervals kept after every re-discretization.
    pub points: usize,
    /// Extension budget per call.
    pub max_extensions: usize,
}

impl DomainPolicy {
    pub fn new(tolerance: f64, points: usize, max_extensions: usize) -> Result<Self> {
        let p = DomainPolicy { tolerance, points, max_extensions };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::Parameter(format!("tolerance must lie in (0, 1), got {}", self.tolerance)));
        }
        if self.points < 16 {
            return Err(Error::Parameter(format!("need at least 16 y intervals, got {}", self.points)));
        }
        if self.max_extensions == 0 {
            return Err(Error::Parameter("extension budget must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of [`extend_y_domain`].
#[derive(Debug, Clone)]
pub struct Extension {
    pub function: LatticeFunction,
    pub lower: usize,
    pub upper: usize,
}

impl Extension {
    pub fn total(&self) -> usize {
        self.lower + self.upper
    }
}

fn boundary_fails(mode: Mode, tol: f64, at: Boundary, edge: &[f64], inner: &[f64], dy: f64) -> bool {
    match (mode, at) {
        (Mode::Cdf, Boundary::Lower) => edge.iter().any(|&v| v > tol),
        (Mode::Cdf, Boundary::Upper) => edge.iter().any(|&v| v < 1.0 - tol),
        (Mode::Pdf, _) => edge.iter().any(|&v| v > tol),
        (Mode::Payoff, Boundary::Upper) => edge.iter().any(|&v| v > tol),
        // Below the support the payoff is affine with slope -1.
        (Mode::Payoff, Boundary::Lower) => {
            edge.iter().zip(inner).any(|(&g0, &g1)| ((g0 - g1) / dy - 1.0).abs() > tol)
        }
    }
}

/// Widens the y-domain until the boundary criterion holds for every
/// x column, then re-discretizes onto exactly `policy.points` intervals.
///
/// `fill(y)` must return the values of the new y column (one per x node);
/// in the recursion it is the same quadrature that produced `f`. Each
/// extension moves one boundary by the current `dy`.
pub fn extend_y_domain<F>(f: LatticeFunction, policy: &DomainPolicy, mut fill: F) -> Result<Extension>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    policy.validate()?;
    let nx = f.x_grid.len();
    let ny = f.y_grid.len();
    let dy = f.y_grid.step();
    let tol = policy.tolerance;
    let mode = f.mode;
    let edge = |k: usize| -> Vec<f64> { (0..nx).map(|i| f.node(i, k)).collect() };

    let mut budget = policy.max_extensions;
    let mut low: Vec<Vec<f64>> = Vec::new();
    let mut cur_edge = edge(0);
    let mut cur_inner = edge(1);
    while boundary_fails(mode, tol, Boundary::Lower, &cur_edge, &cur_inner, dy) {
        if budget == 0 {
            return Err(Error::Growth { boundary: Boundary::Lower, budget: policy.max_extensions });
        }
        budget -= 1;
        let y = f.y_grid.min - (low.len() + 1) as f64 * dy;
        let col = fill(y)?;
        cur_inner = std::mem::replace(&mut cur_edge, col.clone());
        low.push(col);
    }
    let mut high: Vec<Vec<f64>> = Vec::new();
    let mut cur_edge = edge(ny - 1);
    let mut cur_inner = edge(ny - 2);
    while boundary_fails(mode, tol, Boundary::Upper, &cur_edge, &cur_inner, dy) {
        if budget == 0 {
            return Err(Error::Growth { boundary: Boundary::Upper, budget: policy.max_extensions });
        }
        budget -= 1;
        let y = f.y_grid.max + (high.len() + 1) as f64 * dy;
        let col = fill(y)?;
        cur_inner = std::mem::replace(&mut cur_edge, col.clone());
        high.push(col);
    }

    let (lower, upper) = (low.len(), high.len());
    if lower + upper == 0 && f.y_grid.intervals == policy.points {
        return Ok(Extension { function: f, lower, upper });
    }

    let wide_grid = Grid1D::new(
        f.y_grid.min - lower as f64 * dy,
        f.y_grid.max + upper as f64 * dy,
        f.y_grid.intervals + lower + upper,
    )?;
    let mut columns = Vec::with_capacity(nx);
    for i in 0..nx {
        let mut c = Vec::with_capacity(wide_grid.len());
        c.extend(low.iter().rev().map(|col| col[i]));
        c.extend_from_slice(f.column(i));
        c.extend(high.iter().map(|col| col[i]));
        columns.push(c);
    }
    let wide = LatticeFunction::from_columns(f.x_grid, wide_grid, columns, mode)?;
    let target = Grid1D::new(wide_grid.min, wide_grid.max, policy.points)?;
    let mut function = wide.resample_y(target)?;
    if mode == Mode::Pdf {
        // Keep each column's mass through the change of spacing.
        let h_old = wide_grid.step();
        let h_new = target.step();
        let mut i = 0;
        function.map_columns(|c| {
            let before = trapezoid(wide.column(i), h_old);
            let after = trapezoid(c, h_new);
            if after > 0.0 {
                let s = before / after;
                c.iter_mut().for_each(|v| *v *= s);
            }
            i += 1;
        });
    }
    Ok(Extension { function, lower, upper })
}

/// Result of a difference operator: the PDF surface and the mass removed
/// by clipping negative values.
#[derive(Debug, Clone)]
pub struct Differenced {
    pub function: LatticeFunction,
    pub clipped_mass: f64,
}

fn clip_negative(col: &mut [f64], h: f64) -> f64 {
    let mut clipped = 0.0;
    let n = col.len();
    for (k, v) in col.iter_mut().enumerate() {
        if *v < 0.0 {
            let w = if k == 0 || k == n - 1 { 0.5 * h } else { h };
            clipped += -*v * w;
            *v = 0.0;
        }
    }
    clipped
}

/// CDF to PDF by central differences along y (one-sided at the ends).
pub fn first_difference(f: &LatticeFunction) -> Result<Differenced> {
    if f.mode != Mode::Cdf {
        return Err(Error::Domain(format!("first difference needs a CDF, got {}", f.mode.as_str())));
    }
    let ny = f.y_grid.len();
    if ny < 3 {
        return Err(Error::Domain("first difference needs at least 3 y points".into()));
    }
    let h = f.y_grid.step();
    let mut out = f.clone();
    out.mode = Mode::Pdf;
    let mut clipped = 0.0;
    for i in 0..f.x_grid.len() {
        let src = f.column(i);
        let dst = &mut out.values[i * ny..(i + 1) * ny];
        dst[0] = (src[1] - src[0]) / h;
        dst[ny - 1] = (src[ny - 1] - src[ny - 2]) / h;
        for k in 1..ny - 1 {
            dst[k] = (src[k + 1] - src[k - 1]) / (2.0 * h);
        }
        clipped += clip_negative(dst, h);
    }
    Ok(Differenced { function: out, clipped_mass: clipped })
}

/// Payoff to PDF by second central differences along y; the end nodes
/// copy their neighbours.
pub fn second_difference(f: &LatticeFunction) -> Result<Differenced> {
    if f.mode != Mode::Payoff {
        return Err(Error::Domain(format!("second difference needs a payoff, got {}", f.mode.as_str())));
    }
    let ny = f.y_grid.len();
    if ny < 3 {
        return Err(Error::Domain("second difference needs at least 3 y points".into()));
    }
    let h = f.y_grid.step();
    let mut out = f.clone();
    out.mode = Mode::Pdf;
    let mut clipped = 0.0;
    for i in 0..f.x_grid.len() {
        let src = f.column(i);
        let dst = &mut out.values[i * ny..(i + 1) * ny];
        for k in 1..ny - 1 {
            dst[k] = (src[k + 1] - 2.0 * src[k] + src[k - 1]) / (h * h);
        }
        dst[0] = dst[1];
        dst[ny - 1] = dst[ny - 2];
        clipped += clip_negative(dst, h);
    }
    Ok(Differenced { function: out, clipped_mass: clipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{normal_cdf, normal_pdf};
    use approx::assert_relative_eq;

    fn grid(a: f64, b: f64, n: usize) -> Grid1D {
        Grid1D::new(a, b, n).unwrap()
    }

    #[test]
    fn grid_points_are_reconstructed_from_bounds() {
        let g = grid(-1.0, 2.0, 30);
        assert_eq!(g.len(), 31);
        assert_eq!(g.at(0), -1.0);
        assert_eq!(g.at(30), 2.0);
        assert_eq!(g.at(17), -1.0 + 17.0 * 0.1);
        assert!(Grid1D::new(1.0, 1.0, 4).is_err());
        assert!(Grid1D::new(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn out_of_domain_rules() {
        let xg = grid(0.0, 1.0, 4);
        let yg = grid(-1.0, 1.0, 20);
        let cdf = LatticeFunction::from_fn(xg, yg, Mode::Cdf, |_, y| 0.5 * (y + 1.0)).unwrap();
        assert_eq!(cdf.evaluate(0.3, 2.0).unwrap(), 1.0);
        assert_eq!(cdf.evaluate(0.3, -2.0).unwrap(), 0.0);
        let pdf = LatticeFunction::from_fn(xg, yg, Mode::Pdf, |_, _| 0.5).unwrap();
        assert_eq!(pdf.evaluate(0.3, -2.0).unwrap(), 0.0);
        assert_eq!(pdf.evaluate(0.3, 2.0).unwrap(), 0.0);
        assert_eq!(pdf.evaluate(0.3, 0.1).unwrap(), 0.5);
        // payoff (0 - y)^+ continues with slope -1 below the grid
        let pay = LatticeFunction::from_fn(xg, yg, Mode::Payoff, |_, y| (-y).max(0.0)).unwrap();
        assert_relative_eq!(pay.evaluate(0.5, -3.0).unwrap(), 3.0, max_relative = 1e-12);
        assert_eq!(pay.evaluate(0.5, 3.0).unwrap(), 0.0);
        assert!(cdf.evaluate(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn x_outside_grid_uses_boundary_column() {
        let xg = grid(0.0, 1.0, 4);
        let yg = grid(0.0, 1.0, 10);
        let f = LatticeFunction::from_fn(xg, yg, Mode::Pdf, |x, y| x + y).unwrap();
        assert_relative_eq!(f.evaluate(-5.0, 0.5).unwrap(), 0.5, max_relative = 1e-14);
        assert_relative_eq!(f.evaluate(7.0, 0.5).unwrap(), 1.5, max_relative = 1e-14);
    }

    #[test]
    fn evaluate_is_exact_at_nodes() {
        let xg = grid(0.0, 1.0, 7);
        let yg = grid(-2.0, 3.0, 13);
        let f = LatticeFunction::from_fn(xg, yg, Mode::Pdf, |x, y| (x * 3.1 + y).sin().abs() + 1e-3 * x).unwrap();
        for i in 0..xg.len() {
            for k in 0..yg.len() {
                assert_eq!(f.evaluate(xg.at(i), yg.at(k)).unwrap(), f.node(i, k));
            }
        }
    }

    #[test]
    fn extension_not_needed_keeps_grid() {
        let xg = grid(0.0, 1.0, 2);
        let yg = grid(-10.0, 10.0, 16);
        let f = LatticeFunction::from_fn(xg, yg, Mode::Cdf, |_, y| normal_cdf(y)).unwrap();
        let policy = DomainPolicy::new(1e-8, 16, 100).unwrap();
        let ext = extend_y_domain(f.clone(), &policy, |_| unreachable!()).unwrap();
        assert_eq!(ext.total(), 0);
        assert_eq!(ext.function, f);
    }

    #[test]
    fn pdf_above_tolerance_extends_upper() {
        let eps = 1e-6;
        let xg = grid(0.0, 1.0, 2);
        let yg = grid(0.0, 1.0, 16);
        let f = LatticeFunction::from_fn(xg, yg, Mode::Pdf, |_, y| if y >= 1.0 { 2.0 * eps } else { 0.0 }).unwrap();
        let policy = DomainPolicy::new(eps, 16, 100).unwrap();
        let ext = extend_y_domain(f, &policy, |_| Ok(vec![0.0; 3])).unwrap();
        assert!(ext.upper >= 1);
        assert_eq!(ext.lower, 0);
        assert!(ext.function.y_grid().max() > 1.0);
        assert_eq!(ext.function.y_grid().intervals(), 16);
    }

    #[test]
    fn normal_pdf_domain_grows_past_six_sigma() {
        let eps = 1e-8;
        let xg = grid(0.0, 1.0, 2);
        let yg = grid(-2.0, 2.0, 16);
        let f = LatticeFunction::from_fn(xg, yg, Mode::Pdf, |_, y| normal_pdf(y)).unwrap();
        let policy = DomainPolicy::new(eps, 16, 1000).unwrap();
        let ext = extend_y_domain(f, &policy, |y| Ok(vec![normal_pdf(y); 3])).unwrap();
        let g = ext.function.y_grid();
        assert!(g.min() <= -6.0 && g.max() >= 6.0, "[{}, {}]", g.min(), g.max());
        assert!(normal_pdf(g.max()) < eps);
        assert_eq!(g.intervals(), 16);
    }

    #[test]
    fn growth_budget_is_enforced() {
        let xg = grid(0.0, 1.0, 2);
        let yg = grid(0.0, 1.0, 16);
        let f = LatticeFunction::from_fn(xg, yg, Mode::Cdf, |_, _| 0.5).unwrap();
        let policy = DomainPolicy::new(1e-8, 16, 5).unwrap();
        let err = extend_y_domain(f, &policy, |_| Ok(vec![0.5; 3])).unwrap_err();
        assert!(matches!(err, Error::Growth { boundary: Boundary::Lower, budget: 5 }));
    }

    #[test]
    fn first_difference_cases() {
        let xg = grid(0.0, 1.0, 2);
        let ramp = LatticeFunction::from_fn(xg, grid(0.0, 1.0, 50), Mode::Cdf, |_, y| y).unwrap();
        let d = first_difference(&ramp).unwrap();
        assert!(d.function.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let ones = LatticeFunction::from_fn(xg, grid(0.0, 1.0, 50), Mode::Cdf, |_, _| 1.0).unwrap();
        assert!(first_difference(&ones).unwrap().function.values().iter().all(|&v| v == 0.0));

        let normal = LatticeFunction::from_fn(xg, grid(-6.0, 6.0, 1000), Mode::Cdf, |_, y| normal_cdf(y)).unwrap();
        let d = first_difference(&normal).unwrap().function;
        let worst = (0..=1000)
            .map(|k| (d.node(0, k) - normal_pdf(d.y_grid().at(k))).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-4, "{worst}");
        assert!(first_difference(&d).is_err());
    }

    #[test]
    fn first_difference_preserves_cdf_range() {
        let xg = grid(0.0, 1.0, 2);
        let yg = grid(-3.0, 4.0, 700);
        let f = LatticeFunction::from_fn(xg, yg, Mode::Cdf, |_, y| normal_cdf(y)).unwrap();
        let d = first_difference(&f).unwrap().function;
        let range = normal_cdf(4.0) - normal_cdf(-3.0);
        assert!((trapezoid(d.column(0), yg.step()) - range).abs() < 1e-6);
    }

    #[test]
    fn second_difference_cases() {
        let xg = grid(0.0, 1.0, 2);
        let yg = grid(-1.0, 1.0, 20);
        let c = yg.at(7);
        let point = LatticeFunction::from_fn(xg, yg, Mode::Payoff, |_, y| (c - y).max(0.0)).unwrap();
        let d = second_difference(&point).unwrap().function;
        let col = d.column(0);
        assert!(col.iter().enumerate().all(|(k, &v)| k == 7 || v.abs() < 1e-9));
        assert_relative_eq!(trapezoid(col, yg.step()), 1.0, max_relative = 1e-9);

        let affine = LatticeFunction::from_fn(xg, yg, Mode::Payoff, |_, y| 2.0 - y).unwrap();
        assert!(second_difference(&affine).unwrap().function.values().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn second_difference_recovers_normal_density() {
        // g(y) = E[(Z - y)^+] = phi(y) - y (1 - Phi(y)), tabulated by quadrature
        let g = |y: f64| {
            let n = 4000;
            let (a, b) = (y, 12.0);
            let h = (b - a) / n as f64;
            let w = crate::quadrature::composite_weights(crate::quadrature::Rule::Simpson, n, h);
            (0..=n).map(|k| {
                let z = a + k as f64 * h;
                w[k] * (z - y) * normal_pdf(z)
            }).sum::<f64>()
        };
        let xg = grid(0.0, 1.0, 1);
        let yg = grid(-5.0, 5.0, 400);
        let f = LatticeFunction::from_fn(xg, yg, Mode::Payoff, |_, y| g(y)).unwrap();
        let d = second_difference(&f).unwrap().function;
        for k in 1..400 {
            let y = yg.at(k);
            assert!((d.node(0, k) - normal_pdf(y)).abs() < 1e-3, "y={y}");
        }
    }

    #[test]
    fn csv_dump_layout() {
        let f = LatticeFunction::from_fn(grid(0.0, 1.0, 1), grid(0.0, 1.0, 2), Mode::Cdf, |_, y| y).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "x,y,value,mode");
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[2], "0.0000000000000000e0,5.0000000000000000e-1,5.0000000000000000e-1,cdf");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bilinear_cdf_stays_monotone_in_y(
                steps in proptest::collection::vec(0.0f64..1.0, 2 * 12),
                x in 0.0f64..1.0,
                ya in -0.2f64..1.2,
                dyq in 0.0f64..0.5,
            ) {
                // two columns of a CDF built from random non-negative increments
                let mut vals = Vec::new();
                for c in 0..2 {
                    let inc = &steps[c * 12..(c + 1) * 12];
                    let total: f64 = inc.iter().sum::<f64>() + 1e-9;
                    let mut acc = 0.0;
                    vals.push(0.0);
                    for v in &inc[..11] {
                        acc += v / total;
                        vals.push(acc.min(1.0));
                    }
                }
                let f = LatticeFunction::new(grid(0.0, 1.0, 1), grid(0.0, 1.0, 11), vals, Mode::Cdf).unwrap();
                let lo = f.evaluate(x, ya).unwrap();
                let hi = f.evaluate(x, ya + dyq).unwrap();
                prop_assert!(hi >= lo - 1e-12);
            }
        }
    }
}
