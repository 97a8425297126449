//! Backward recursion for the law of `Y = sum_{i=1..N} h(i-1, X_{i-1}, X_i)`.
//!
//! The engine propagates one of three object functions on an x-by-y
//! lattice, from the last step back to the first:
//!
//! * CDF:    `F_n(y|x) = E[F_{n+1}(y - h(n, x, X') | X')]`
//! * PDF:    `f_n(y|x) = E[f_{n+1}(y - h(n, x, X') | X')]`
//! * payoff: `g_n(y|x) = E[g_{n+1}(y - h(n, x, X') | X')]`, `g = E[(Y - y)^+]`
//!
//! with the expectation over the one-step transition from `x`. Between
//! steps the y-domain is widened until the boundary criterion holds, keeping
//! the number of y intervals fixed.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{extend_y_domain, first_difference, DomainPolicy, Grid1D, LatticeFunction, Mode};
use crate::models::{gl3, interval_mass, Nodes, QuadSpec, TransitionKernel};
use crate::quadrature::trapezoid;

type HFn = dyn Fn(usize, f64, f64) -> f64 + Send + Sync;

/// The summand `h(n, x, x')` of the path functional.
#[derive(Clone)]
pub struct StepFunctional {
    label: String,
    eval: Arc<HFn>,
    time_dependent: bool,
    homogeneous: bool,
}

impl std::fmt::Debug for StepFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StepFunctional").field("label", &self.label).field("time_dependent", &self.time_dependent).finish()
    }
}

impl StepFunctional {
    /// A time-independent summand `h(x, x')`.
    pub fn new<F: Fn(f64, f64) -> f64 + Send + Sync + 'static>(label: &str, f: F) -> Self {
        StepFunctional { label: label.into(), eval: Arc::new(move |_, x, xn| f(x, xn)), time_dependent: false, homogeneous: false }
    }

    /// A summand that depends on the step index.
    pub fn time_dependent<F: Fn(usize, f64, f64) -> f64 + Send + Sync + 'static>(label: &str, f: F) -> Self {
        StepFunctional { label: label.into(), eval: Arc::new(f), time_dependent: true, homogeneous: false }
    }

    /// Declares `h(c x, c x') = c h(x, x')` for `c > 0`.
    pub fn homogeneous(mut self) -> Self {
        self.homogeneous = true;
        self
    }

    /// `x' - x`
    pub fn increment() -> Self {
        StepFunctional::new("increment", |x, xn| xn - x).homogeneous()
    }

    /// `x'`
    pub fn next_level() -> Self {
        StepFunctional::new("next_level", |_, xn| xn).homogeneous()
    }

    /// `x' / n`, the running average of the visited levels.
    pub fn average_level(n: usize) -> Self {
        let c = 1.0 / n as f64;
        StepFunctional::new("average_level", move |_, xn| xn * c).homogeneous()
    }

    /// `x / n`, the left-endpoint average.
    pub fn average_start_level(n: usize) -> Self {
        let c = 1.0 / n as f64;
        StepFunctional::new("average_start_level", move |x, _| x * c).homogeneous()
    }

    /// `(x' - x)^3`
    pub fn cubed_increment() -> Self {
        StepFunctional::new("cubed_increment", |x, xn| (xn - x).powi(3))
    }

    pub fn constant(c: f64) -> Self {
        StepFunctional::new("constant", move |_, _| c)
    }

    #[inline]
    pub fn eval(&self, n: usize, x: f64, x_next: f64) -> f64 {
        (self.eval)(n, x, x_next)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }

    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionConfig {
    /// Number of transitions `N`.
    pub steps: usize,
    pub dt: f64,
    pub x_grid: Grid1D,
    /// Starting y-grid; derived from the one-step range of `h` when absent.
    pub y_grid: Option<Grid1D>,
    pub policy: DomainPolicy,
    pub quad: QuadSpec,
    pub mode: Mode,
    /// Keep the conditioning row of every intermediate surface.
    #[serde(default)]
    pub record_rows: bool,
}

impl RecursionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::Parameter("need at least one step".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Parameter(format!("dt must be positive, got {}", self.dt)));
        }
        self.policy.validate()?;
        self.quad.validate()
    }
}

/// One row of the per-step diagnostics log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub extensions: usize,
    pub mass_defect: f64,
}

/// A one-dimensional law tabulated on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub y: Grid1D,
    pub cdf: Vec<f64>,
    pub pdf: Vec<f64>,
}

impl Distribution {
    /// Builds both columns from a row of the given object function.
    pub fn from_row(y: Grid1D, row: &[f64], mode: Mode) -> Result<Self> {
        let n = row.len();
        if n < 3 || n != y.len() {
            return Err(Error::Domain("distribution row needs at least 3 points on its grid".into()));
        }
        let h = y.step();
        let (mut cdf, mut pdf) = match mode {
            Mode::Cdf => {
                let cdf = row.to_vec();
                let mut pdf = vec![0.0; n];
                pdf[0] = (row[1] - row[0]) / h;
                pdf[n - 1] = (row[n - 1] - row[n - 2]) / h;
                for k in 1..n - 1 {
                    pdf[k] = (row[k + 1] - row[k - 1]) / (2.0 * h);
                }
                (cdf, pdf)
            }
            Mode::Pdf => {
                let pdf = row.to_vec();
                let mut cdf = vec![0.0; n];
                for k in 1..n {
                    cdf[k] = cdf[k - 1] + 0.5 * h * (row[k] + row[k - 1]);
                }
                (cdf, pdf)
            }
            Mode::Payoff => {
                let mut cdf = vec![0.0; n];
                cdf[0] = 1.0 + (row[1] - row[0]) / h;
                cdf[n - 1] = 1.0 + (row[n - 1] - row[n - 2]) / h;
                let mut pdf = vec![0.0; n];
                for k in 1..n - 1 {
                    cdf[k] = 1.0 + (row[k + 1] - row[k - 1]) / (2.0 * h);
                    pdf[k] = (row[k + 1] - 2.0 * row[k] + row[k - 1]) / (h * h);
                }
                pdf[0] = pdf[1];
                pdf[n - 1] = pdf[n - 2];
                (cdf, pdf)
            }
        };
        let mut run = 0.0f64;
        for v in cdf.iter_mut() {
            run = run.max(v.clamp(0.0, 1.0));
            *v = run;
        }
        pdf.iter_mut().for_each(|v| *v = v.max(0.0));
        Ok(Distribution { y, cdf, pdf })
    }

    pub fn points(&self) -> Vec<f64> {
        self.y.points()
    }

    /// Linear interpolation of the CDF; 0 below and 1 above the grid.
    pub fn cdf_at(&self, v: f64) -> f64 {
        if v < self.y.min() {
            return 0.0;
        }
        if v > self.y.max() {
            return 1.0;
        }
        let (k, t) = self.y.locate(v);
        self.cdf[k] + t * (self.cdf[k + 1] - self.cdf[k])
    }

    pub fn pdf_at(&self, v: f64) -> f64 {
        if !self.y.contains(v) {
            return 0.0;
        }
        let (k, t) = self.y.locate(v);
        self.pdf[k] + t * (self.pdf[k + 1] - self.pdf[k])
    }

    /// Trapezoidal integral of the density.
    pub fn mass(&self) -> f64 {
        trapezoid(&self.pdf, self.y.step())
    }

    /// `|1 - mass|`
    pub fn mass_defect(&self) -> f64 {
        (1.0 - self.mass()).abs()
    }

    fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let vals: Vec<f64> = self.pdf.iter().enumerate().map(|(k, p)| f(self.y.at(k)) * p).collect();
        trapezoid(&vals, self.y.step())
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|y| y) / self.mass()
    }

    /// Central moment of the given order, normalized by the mass.
    pub fn central_moment(&self, order: i32) -> f64 {
        let m = self.mean();
        self.integrate(|y| (y - m).powi(order)) / self.mass()
    }

    pub fn variance(&self) -> f64 {
        self.central_moment(2)
    }

    /// Law of `c Y` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::Parameter(format!("scale factor must be positive, got {c}")));
        }
        let y = Grid1D::new(self.y.min() * c, self.y.max() * c, self.y.intervals())?;
        Ok(Distribution { y, cdf: self.cdf.clone(), pdf: self.pdf.iter().map(|p| p / c).collect() })
    }

    /// Law of `Y + c`.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        let y = Grid1D::new(self.y.min() + c, self.y.max() + c, self.y.intervals())?;
        Ok(Distribution { y, cdf: self.cdf.clone(), pdf: self.pdf.clone() })
    }

    /// CSV `y,cdf,pdf` at 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "y,cdf,pdf")?;
        for k in 0..self.y.len() {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", self.y.at(k), self.cdf[k], self.pdf[k])?;
        }
        Ok(())
    }
}

/// Output of a recursion run.
#[derive(Debug, Clone)]
pub struct DistributionResult {
    /// Step-0 surface in the propagated mode.
    pub surface: LatticeFunction,
    pub x0: f64,
    /// Law of `Y` given `X_0 = x0`.
    pub law: Distribution,
    pub mass_defect: f64,
    /// Mass removed by clipping negative densities.
    pub clipped_mass: f64,
    /// Largest quadrature weight that fell outside the x-grid (plus one
    /// cell of slack) in any column and step.
    pub escaped_mass: f64,
    pub converged: bool,
    pub history: Vec<StepRecord>,
    /// `(summand count, law)` for every intermediate surface, when
    /// requested.
    pub rows: Vec<(usize, Distribution)>,
}

impl DistributionResult {
    /// CSV `step,y_min,y_max,extensions,mass_defect`.
    pub fn write_diagnostics<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,y_min,y_max,extensions,mass_defect")?;
        for r in &self.history {
            writeln!(out, "{},{:.16e},{:.16e},{},{:.6e}", r.step, r.y_min, r.y_max, r.extensions, r.mass_defect)?;
        }
        Ok(())
    }
}

/// Per-column quadrature data, built once per run.
struct Column {
    x: f64,
    nodes: Nodes,
    loc: Vec<(usize, f64)>,
    h: Vec<f64>,
}

struct Engine<'a> {
    h: &'a StepFunctional,
    cfg: &'a RecursionConfig,
    columns: Vec<Column>,
    escaped: f64,
}

impl<'a> Engine<'a> {
    fn new(kernel: &'a dyn TransitionKernel, h: &'a StepFunctional, cfg: &'a RecursionConfig) -> Result<Self> {
        let xg = cfg.x_grid;
        let slack = xg.step();
        let columns: Vec<Column> = (0..xg.len())
            .into_par_iter()
            .map(|i| {
                let x = xg.at(i);
                let nodes = kernel.nodes(x, cfg.dt, &cfg.quad)?;
                let loc = nodes.points.iter().map(|&p| xg.locate(p)).collect();
                let h_vals = if h.is_time_dependent() {
                    Vec::new()
                } else {
                    nodes.points.iter().map(|&p| h.eval(0, x, p)).collect()
                };
                Ok(Column { x, nodes, loc, h: h_vals })
            })
            .collect::<Result<_>>()?;
        let mut escaped = 0.0f64;
        if !xg.is_point() {
            for c in &columns {
                let out: f64 = c
                    .nodes
                    .points
                    .iter()
                    .zip(&c.nodes.weights)
                    .filter(|(p, _)| **p < xg.min() - slack || **p > xg.max() + slack)
                    .map(|(_, w)| w)
                    .sum();
                escaped = escaped.max(out);
            }
        }
        Ok(Engine { h, cfg, columns, escaped })
    }

    fn h_values(&self, c: &Column, n: usize) -> std::borrow::Cow<'_, [f64]> {
        if self.h.is_time_dependent() {
            std::borrow::Cow::Owned(c.nodes.points.iter().map(|&p| self.h.eval(n, c.x, p)).collect())
        } else {
            std::borrow::Cow::Borrowed(&[])
        }
    }

    fn check_finite(&self, n: usize, c: &Column, vals: &[f64]) -> Result<()> {
        if let Some(j) = vals.iter().position(|v| !v.is_finite()) {
            let x_next = c.nodes.points.get(j).copied().unwrap_or(f64::NAN);
            return Err(Error::NonFiniteDensity { step: n, x: c.x, x_next });
        }
        Ok(())
    }

    /// Initial y-grid from the one-step range of `h`, padded.
    fn auto_y_grid(&self) -> Result<Grid1D> {
        let n = self.cfg.steps - 1;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in &self.columns {
            for &p in &c.nodes.points {
                let v = self.h.eval(n, c.x, p);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Domain("step functional is not finite on the quadrature support".into()));
        }
        let pad = if hi > lo { 0.1 * (hi - lo) } else { 1e-3 * lo.abs().max(1.0) };
        Grid1D::new(lo - pad, hi + pad, self.cfg.policy.points)
    }
}

/// Quadrature data for the last transition out of one state.
struct TerminalColumn<'a> {
    h: &'a StepFunctional,
    kernel: &'a dyn TransitionKernel,
    x: f64,
    dt: f64,
    n: usize,
    kind: TerminalKind,
}

enum TerminalKind {
    Atoms(Vec<(f64, f64)>),
    Cells {
        edges: Vec<f64>,
        h_edges: Vec<f64>,
        mass: Vec<f64>,
        tail_lo: f64,
        tail_hi: f64,
        total: f64,
    },
}

impl<'a> TerminalColumn<'a> {
    fn new(kernel: &'a dyn TransitionKernel, h: &'a StepFunctional, n: usize, x: f64, dt: f64, q: &QuadSpec) -> Result<Self> {
        let kind = if let Some(a) = kernel.atoms(x, dt) {
            TerminalKind::Atoms(a.points.into_iter().zip(a.weights).collect())
        } else if kernel.is_degenerate(x, dt) {
            TerminalKind::Atoms(vec![(kernel.mean(x, dt), 1.0)])
        } else {
            let (a, b) = kernel.support(x, dt, q.support_width);
            let cells = q.z_count;
            let w = (b - a) / cells as f64;
            let edges: Vec<f64> = (0..=cells).map(|k| if k == cells { b } else { a + k as f64 * w }).collect();
            let h_edges: Vec<f64> = edges.iter().map(|&p| h.eval(n, x, p)).collect();
            let mass: Vec<f64> = edges.windows(2).map(|e| interval_mass(kernel, x, dt, e[0], e[1])).collect();
            if let Some(k) = mass.iter().position(|m| !m.is_finite()) {
                return Err(Error::NonFiniteDensity { step: n, x, x_next: edges[k] });
            }
            let (tail_lo, tail_hi) = match (kernel.cdf(a, x, dt), kernel.cdf(b, x, dt)) {
                (Some(fa), Some(fb)) => (fa, 1.0 - fb),
                _ => (0.0, 0.0),
            };
            let total = mass.iter().sum::<f64>() + tail_lo + tail_hi;
            if !(total > 0.0) {
                return Err(Error::Model(format!("{}: no transition mass on the support at x = {x}", kernel.name())));
            }
            TerminalKind::Cells { edges, h_edges, mass, tail_lo, tail_hi, total }
        };
        Ok(TerminalColumn { h, kernel, x, dt, n, kind })
    }

    /// Root of `h(x') = y` inside a cell whose end values straddle `y`.
    fn crossing(&self, a: f64, b: f64, ha: f64, y: f64) -> f64 {
        let (mut lo, mut hi) = (a, b);
        let below = ha <= y;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if (self.h.eval(self.n, self.x, mid) <= y) == below {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn cdf(&self, y: f64) -> f64 {
        match &self.kind {
            TerminalKind::Atoms(a) => a.iter().filter(|(p, _)| self.h.eval(self.n, self.x, *p) <= y).map(|(_, w)| w).sum(),
            TerminalKind::Cells { edges, h_edges, mass, tail_lo, tail_hi, total } => {
                let last = edges.len() - 1;
                let mut acc = 0.0;
                if h_edges[0] <= y {
                    acc += tail_lo;
                }
                if h_edges[last] <= y {
                    acc += tail_hi;
                }
                for c in 0..last {
                    let (ia, ib) = (h_edges[c] <= y, h_edges[c + 1] <= y);
                    acc += match (ia, ib) {
                        (true, true) => mass[c],
                        (false, false) => 0.0,
                        _ => {
                            let r = self.crossing(edges[c], edges[c + 1], h_edges[c], y);
                            if ia {
                                interval_mass(self.kernel, self.x, self.dt, edges[c], r)
                            } else {
                                interval_mass(self.kernel, self.x, self.dt, r, edges[c + 1])
                            }
                        }
                    };
                }
                (acc / total).clamp(0.0, 1.0)
            }
        }
    }

    fn payoff(&self, y: f64) -> f64 {
        match &self.kind {
            TerminalKind::Atoms(a) => a.iter().map(|(p, w)| w * (self.h.eval(self.n, self.x, *p) - y).max(0.0)).sum(),
            TerminalKind::Cells { edges, h_edges, total, .. } => {
                let last = edges.len() - 1;
                let f = |p: f64| (self.h.eval(self.n, self.x, p) - y).max(0.0) * self.kernel.density(p, self.x, self.dt);
                let mut acc = 0.0;
                for c in 0..last {
                    let (ia, ib) = (h_edges[c] > y, h_edges[c + 1] > y);
                    acc += match (ia, ib) {
                        (true, true) => gl3(f, edges[c], edges[c + 1]),
                        (false, false) => 0.0,
                        _ => {
                            let r = self.crossing(edges[c], edges[c + 1], h_edges[c], y);
                            if ia {
                                gl3(f, edges[c], r)
                            } else {
                                gl3(f, r, edges[c + 1])
                            }
                        }
                    };
                }
                acc / total
            }
        }
    }

    /// Object-function value at `y`; `dy` is the lattice spacing used to
    /// difference the CDF in PDF mode.
    fn value(&self, mode: Mode, y: f64, dy: f64) -> f64 {
        match mode {
            Mode::Cdf => self.cdf(y),
            Mode::Payoff => self.payoff(y),
            Mode::Pdf => ((self.cdf(y + dy) - self.cdf(y - dy)) / (2.0 * dy)).max(0.0),
        }
    }
}

/// Surface of the last transition (step `N-1`) on the given lattice.
pub fn terminal_surface(
    kernel: &dyn TransitionKernel,
    h: &StepFunctional,
    cfg: &RecursionConfig,
    y_grid: Grid1D,
) -> Result<LatticeFunction> {
    cfg.validate()?;
    terminal_on(kernel, h, cfg, cfg.x_grid, y_grid)
}

fn terminal_on(
    kernel: &dyn TransitionKernel,
    h: &StepFunctional,
    cfg: &RecursionConfig,
    x_grid: Grid1D,
    y_grid: Grid1D,
) -> Result<LatticeFunction> {
    let n = cfg.steps - 1;
    let base = if cfg.mode == Mode::Payoff { Mode::Payoff } else { Mode::Cdf };
    let ys = y_grid.points();
    let columns: Vec<Vec<f64>> = (0..x_grid.len())
        .into_par_iter()
        .map(|i| {
            let t = TerminalColumn::new(kernel, h, n, x_grid.at(i), cfg.dt, &cfg.quad)?;
            Ok(ys.iter().map(|&y| t.value(base, y, 0.0)).collect())
        })
        .collect::<Result<_>>()?;
    let surface = LatticeFunction::from_columns(x_grid, y_grid, columns, base)?;
    if cfg.mode == Mode::Pdf {
        Ok(first_difference(&surface)?.function)
    } else {
        Ok(surface)
    }
}

/// Shape repairs after each step; returns the mass clipped from a PDF.
fn repair(f: &mut LatticeFunction) -> f64 {
    let mode = f.mode();
    let h = f.y_grid().step();
    let mut clipped = 0.0;
    f.map_columns(|c| match mode {
        Mode::Cdf => {
            let mut run = 0.0f64;
            for v in c.iter_mut() {
                run = run.max(v.clamp(0.0, 1.0));
                *v = run;
            }
        }
        Mode::Pdf => {
            for v in c.iter_mut() {
                if *v < 0.0 {
                    clipped += -*v * h;
                    *v = 0.0;
                }
            }
        }
        Mode::Payoff => {
            let mut run = f64::INFINITY;
            for v in c.iter_mut() {
                run = run.min(v.max(0.0));
                *v = run;
            }
        }
    });
    clipped
}

/// Largest per-column `|1 - mass|` of a surface.
fn surface_mass_defect(f: &LatticeFunction) -> f64 {
    let h = f.y_grid().step();
    f.columns()
        .map(|c| {
            let n = c.len();
            match f.mode() {
                Mode::Cdf => c[0] + (1.0 - c[n - 1]),
                Mode::Pdf => (1.0 - trapezoid(c, h)).abs(),
                Mode::Payoff => {
                    let lo = (c[0] - c[1]) / h;
                    let hi = (c[n - 2] - c[n - 1]) / h;
                    (1.0 - (lo - hi)).abs()
                }
            }
        })
        .fold(0.0, f64::max)
}

/// Adds `w * next(y_k - d)` for every node `y_k`, where `-d / dy = s + frac`.
#[inline]
fn accumulate_shifted(out: &mut [f64], col: &[f64], w: f64, s: i64, frac: f64, mode: Mode) {
    let ny = col.len() as i64;
    let below_end = (-s).clamp(0, ny);
    let interior_end = (ny - 1 - s).clamp(below_end, ny);
    if mode == Mode::Payoff {
        let slope = col[0] - col[1];
        for k in 0..below_end {
            let t = (k + s) as f64 + frac;
            out[k as usize] += w * (col[0] - t * slope);
        }
    }
    let lo = below_end as usize;
    let hi = interior_end as usize;
    let off = s as isize;
    if frac == 0.0 {
        for k in lo..hi {
            out[k] += w * col[(k as isize + off) as usize];
        }
    } else {
        for k in lo..hi {
            let idx = (k as isize + off) as usize;
            let a = col[idx];
            out[k] += w * (a + frac * (col[idx + 1] - a));
        }
    }
    for k in hi..ny as usize {
        let idx = k as i64 + s;
        let v = if idx == ny - 1 && frac == 0.0 {
            col[(ny - 1) as usize]
        } else {
            match mode {
                Mode::Cdf => 1.0,
                Mode::Pdf | Mode::Payoff => 0.0,
            }
        };
        if v != 0.0 {
            out[k] += w * v;
        }
    }
}

/// One backward step on the lattice, before domain extension.
fn step_surface(engine: &Engine<'_>, next: &LatticeFunction, n: usize) -> Result<LatticeFunction> {
    let yg = *next.y_grid();
    let ny = yg.len();
    let dy = yg.step();
    let mode = next.mode();
    let columns: Vec<Vec<f64>> = engine
        .columns
        .par_iter()
        .map(|c| {
            let td = engine.h_values(c, n);
            let hv: &[f64] = if engine.h.is_time_dependent() { &td } else { &c.h };
            engine.check_finite(n, c, hv)?;
            let mut out = vec![0.0; ny];
            for (j, &w) in c.nodes.weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let (ix, wx) = c.loc[j];
                let t = -hv[j] / dy;
                let s = t.floor();
                let frac = t - s;
                let s = s as i64;
                if wx < 1.0 {
                    accumulate_shifted(&mut out, next.column(ix), w * (1.0 - wx), s, frac, mode);
                }
                if wx > 0.0 && !next.x_grid().is_point() {
                    accumulate_shifted(&mut out, next.column(ix + 1), w * wx, s, frac, mode);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    LatticeFunction::from_columns(*next.x_grid(), yg, columns, mode)
}

/// The step operator at a single `y`, for every column.
fn step_fill(engine: &Engine<'_>, next: &LatticeFunction, n: usize, y: f64) -> Result<Vec<f64>> {
    engine
        .columns
        .par_iter()
        .map(|c| {
            let td = engine.h_values(c, n);
            let hv: &[f64] = if engine.h.is_time_dependent() { &td } else { &c.h };
            let mut acc = 0.0;
            for (j, &w) in c.nodes.weights.iter().enumerate() {
                let (ix, wx) = c.loc[j];
                acc += w * next.eval_located(ix, wx, y - hv[j]);
            }
            if !acc.is_finite() {
                return Err(Error::NonFiniteDensity { step: n, x: c.x, x_next: f64::NAN });
            }
            Ok(acc)
        })
        .collect()
}

/// One full backward step: quadrature, repairs, domain extension.
pub fn backward_step(
    next: &LatticeFunction,
    kernel: &dyn TransitionKernel,
    h: &StepFunctional,
    n: usize,
    cfg: &RecursionConfig,
) -> Result<(LatticeFunction, StepRecord)> {
    cfg.validate()?;
    if next.mode() != cfg.mode {
        return Err(Error::Domain(format!("surface mode {} differs from config mode {}", next.mode().as_str(), cfg.mode.as_str())));
    }
    let engine = Engine::new(kernel, h, cfg)?;
    let (f, rec, _) = full_step(&engine, next, n)?;
    Ok((f, rec))
}

fn full_step(engine: &Engine<'_>, next: &LatticeFunction, n: usize) -> Result<(LatticeFunction, StepRecord, f64)> {
    let mut f = step_surface(engine, next, n)?;
    let mut clipped = repair(&mut f);
    let ext = extend_y_domain(f, &engine.cfg.policy, |y| step_fill(engine, next, n, y))?;
    let extensions = ext.total();
    let mut f = ext.function;
    clipped += repair(&mut f);
    let rec = StepRecord {
        step: n,
        y_min: f.y_grid().min(),
        y_max: f.y_grid().max(),
        extensions,
        mass_defect: surface_mass_defect(&f),
    };
    Ok((f, rec, clipped))
}

fn terminal_extended(
    kernel: &dyn TransitionKernel,
    h: &StepFunctional,
    cfg: &RecursionConfig,
    x_grid: Grid1D,
    y_grid: Grid1D,
) -> Result<(LatticeFunction, StepRecord, f64)> {
    let mut f = terminal_on(kernel, h, cfg, x_grid, y_grid)?;
    let mut clipped = repair(&mut f);
    let n = cfg.steps - 1;
    let xs = x_grid.points();
    let dy = y_grid.step();
    let terminals: Vec<TerminalColumn<'_>> =
        xs.iter().map(|&x| TerminalColumn::new(kernel, h, n, x, cfg.dt, &cfg.quad)).collect::<Result<_>>()?;
    let ext = extend_y_domain(f, &cfg.policy, |y| Ok(terminals.par_iter().map(|t| t.value(cfg.mode, y, dy)).collect()))?;
    let extensions = ext.total();
    let mut f = ext.function;
    clipped += repair(&mut f);
    let rec = StepRecord { step: n, y_min: f.y_grid().min(), y_max: f.y_grid().max(), extensions, mass_defect: surface_mass_defect(&f) };
    Ok((f, rec, clipped))
}

fn finish(
    surface: LatticeFunction,
    x0: f64,
    cfg: &RecursionConfig,
    mut history: Vec<StepRecord>,
    clipped: f64,
    escaped: f64,
    rows: Vec<(usize, Distribution)>,
) -> Result<DistributionResult> {
    let law = Distribution::from_row(*surface.y_grid(), &surface.row_at(x0), surface.mode())?;
    let mass_defect = law.mass_defect();
    history.sort_by(|a, b| b.step.cmp(&a.step));
    let converged = mass_defect <= 10.0 * cfg.policy.tolerance;
    Ok(DistributionResult { surface, x0, law, mass_defect, clipped_mass: clipped, escaped_mass: escaped, converged, history, rows })
}

/// Runs the recursion from the last transition back to the first and
/// conditions on `X_0 = x0`.
pub fn run_recursion(
    kernel: &dyn TransitionKernel,
    h: &StepFunctional,
    cfg: &RecursionConfig,
    x0: f64,
) -> Result<DistributionResult> {
    cfg.validate()?;
    let xg = cfg.x_grid;
    if !(x0 >= xg.min() - 1e-12 && x0 <= xg.max() + 1e-12) {
        return Err(Error::Domain(format!("x0 = {x0} lies outside [{}, {}]", xg.min(), xg.max())));
    }
    let engine = Engine::new(kernel, h, cfg)?;
    let y0 = match cfg.y_grid {
        Some(g) => g,
        None => engine.auto_y_grid()?,
    };
    let (mut f, rec, mut clipped) = terminal_extended(kernel, h, cfg, xg, y0)?;
    let mut history = vec![rec];
    let mut rows = Vec::new();
    if cfg.record_rows {
        rows.push((1, Distribution::from_row(*f.y_grid(), &f.row_at(x0), f.mode())?));
    }
    for n in (0..cfg.steps - 1).rev() {
        let (next, rec, c) = full_step(&engine, &f, n)?;
        clipped += c;
        history.push(rec);
        f = next;
        if cfg.record_rows {
            rows.push((cfg.steps - n, Distribution::from_row(*f.y_grid(), &f.row_at(x0), f.mode())?));
        }
    }
    finish(f, x0, cfg, history, clipped, engine.escaped, rows)
}

/// One-dimensional recursion for multiplicative kernels and degree-one
/// homogeneous summands, normalized to `x = 1`:
/// `F_n(y) = E[F_{n+1}((y - h(n, 1, U)) / U)]`.
///
/// The law at any other start follows by scaling: `Y | x0 ~ x0 Y | 1`.
pub fn run_scale_invariant(kernel: &dyn TransitionKernel, h: &StepFunctional, cfg: &RecursionConfig) -> Result<DistributionResult> {
    if !kernel.multiplicative() {
        return Err(Error::Unsupported(format!("{} kernel is not multiplicative", kernel.name())));
    }
    if !h.is_homogeneous() {
        return Err(Error::Unsupported(format!("step functional `{}` is not declared homogeneous", h.label())));
    }
    let mut cfg = cfg.clone();
    cfg.x_grid = Grid1D::point(1.0);
    cfg.validate()?;
    let engine = Engine::new(kernel, h, &cfg)?;
    let col = &engine.columns[0];
    let y0 = match cfg.y_grid {
        Some(g) => g,
        None => engine.auto_y_grid()?,
    };
    let (mut f, rec, mut clipped) = terminal_extended(kernel, h, &cfg, cfg.x_grid, y0)?;
    let mut history = vec![rec];
    let mut rows = Vec::new();
    if cfg.record_rows {
        rows.push((1, Distribution::from_row(*f.y_grid(), f.column(0), f.mode())?));
    }
    for n in (0..cfg.steps - 1).rev() {
        let hv: Vec<f64> = if h.is_time_dependent() {
            col.nodes.points.iter().map(|&u| h.eval(n, 1.0, u)).collect()
        } else {
            col.h.clone()
        };
        engine.check_finite(n, col, &hv)?;
        let pts = &col.nodes.points;
        let wts = &col.nodes.weights;
        let scaled_at = |next: &LatticeFunction, y: f64| -> f64 {
            pts.iter().zip(wts).zip(&hv).map(|((&u, &w), &d)| w * next.column_value(0, (y - d) / u)).sum()
        };
        let ys = f.y_grid().points();
        let vals: Vec<f64> = ys.par_iter().map(|&y| scaled_at(&f, y)).collect();
        let mut g = LatticeFunction::new(cfg.x_grid, *f.y_grid(), vals, f.mode())?;
        clipped += repair(&mut g);
        let ext = extend_y_domain(g, &cfg.policy, |y| Ok(vec![scaled_at(&f, y)]))?;
        let extensions = ext.total();
        let mut g = ext.function;
        clipped += repair(&mut g);
        history.push(StepRecord {
            step: n,
            y_min: g.y_grid().min(),
            y_max: g.y_grid().max(),
            extensions,
            mass_defect: surface_mass_defect(&g),
        });
        f = g;
        if cfg.record_rows {
            rows.push((cfg.steps - n, Distribution::from_row(*f.y_grid(), f.column(0), f.mode())?));
        }
    }
    finish(f, 1.0, &cfg, history, clipped, 0.0, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DiscreteKernel, GbmKernel, NormalIncrementKernel};
    use crate::special::normal_cdf;

    fn policy(points: usize) -> DomainPolicy {
        DomainPolicy::new(1e-8, points, 10_000).unwrap()
    }

    fn config(steps: usize, x_grid: Grid1D, y_grid: Option<Grid1D>, mode: Mode, points: usize) -> RecursionConfig {
        RecursionConfig { steps, dt: 1.0, x_grid, y_grid, policy: policy(points), quad: QuadSpec::default(), mode, record_rows: false }
    }

    #[test]
    fn deterministic_kernel_gives_a_unit_step() {
        let k = NormalIncrementKernel { shift: 0.0, sd: 0.0 };
        let xg = Grid1D::new(0.0, 1.0, 4).unwrap();
        let yg = Grid1D::new(-1.0, 1.0, 20).unwrap();
        let cfg = config(1, xg, Some(yg), Mode::Cdf, 20);
        let f = terminal_surface(&k, &StepFunctional::increment(), &cfg, yg).unwrap();
        for i in 0..xg.len() {
            for k in 0..yg.len() {
                assert_eq!(f.node(i, k), if yg.at(k) >= 0.0 { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn zero_summand_is_a_step_at_zero() {
        let k = NormalIncrementKernel { shift: 0.0, sd: 0.3 };
        let xg = Grid1D::new(0.0, 1.0, 4).unwrap();
        let yg = Grid1D::new(-1.0, 1.0, 20).unwrap();
        let cfg = config(1, xg, Some(yg), Mode::Cdf, 20);
        let f = terminal_surface(&k, &StepFunctional::constant(0.0), &cfg, yg).unwrap();
        assert!(f.values().iter().enumerate().all(|(idx, &v)| v == if yg.at(idx % 21) >= 0.0 { 1.0 } else { 0.0 }));
    }

    #[test]
    fn terminal_normal_cdf() {
        let s = 0.4;
        let k = NormalIncrementKernel { shift: 0.0, sd: s };
        let xg = Grid1D::new(-1.0, 1.0, 8).unwrap();
        let yg = Grid1D::new(-3.0, 3.0, 120).unwrap();
        let cfg = config(1, xg, Some(yg), Mode::Cdf, 120);
        let f = terminal_surface(&k, &StepFunctional::increment(), &cfg, yg).unwrap();
        for i in 0..xg.len() {
            for j in 0..yg.len() {
                assert!((f.node(i, j) - normal_cdf(yg.at(j) / s)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn normalization_is_preserved() {
        let k = NormalIncrementKernel { shift: 0.0, sd: 0.2 };
        let xg = Grid1D::new(-1.0, 1.0, 10).unwrap();
        let yg = Grid1D::new(-2.0, 2.0, 40).unwrap();
        let cfg = config(2, xg, Some(yg), Mode::Cdf, 40);
        let ones = LatticeFunction::from_fn(xg, yg, Mode::Cdf, |_, _| 1.0).unwrap();
        let (f, _) = backward_step(&ones, &k, &StepFunctional::increment(), 0, &cfg).unwrap();
        // increments reach 8 sd = 1.6, so y - h stays on the grid for y >= -0.4
        let fy = *f.y_grid();
        for col in f.columns() {
            for (kk, &v) in col.iter().enumerate() {
                if fy.at(kk) - 1.6 >= yg.min() {
                    assert!((v - 1.0).abs() < 1e-12, "y = {}: {v}", fy.at(kk));
                }
            }
        }
    }

    #[test]
    fn one_step_equals_terminal_at_x0() {
        let k = NormalIncrementKernel { shift: 0.1, sd: 0.3 };
        let xg = Grid1D::new(-1.0, 1.0, 8).unwrap();
        let yg = Grid1D::new(-2.0, 2.0, 200).unwrap();
        let cfg = config(1, xg, Some(yg), Mode::Cdf, 200);
        let r = run_recursion(&k, &StepFunctional::increment(), &cfg, 0.25).unwrap();
        let t = terminal_surface(&k, &StepFunctional::increment(), &cfg, *r.surface.y_grid()).unwrap();
        let row = t.row_at(0.25);
        for (a, b) in r.law.cdf.iter().zip(&row) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_normal_steps_convolve() {
        let s = 0.25;
        let k = NormalIncrementKernel { shift: 0.0, sd: s };
        let xg = Grid1D::new(-2.5, 2.5, 200).unwrap();
        let cfg = config(2, xg, None, Mode::Cdf, 400);
        let r = run_recursion(&k, &StepFunctional::increment(), &cfg, 0.0).unwrap();
        let sd = s * 2f64.sqrt();
        let worst = r.law.points().iter().zip(&r.law.cdf).map(|(y, c)| (c - normal_cdf(y / sd)).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn three_point_convolution_is_exact() {
        let k = DiscreteKernel::uniform(vec![0.0, 1.0, 2.0]);
        let xg = Grid1D::new(0.0, 2.0, 2).unwrap();
        let yg = Grid1D::new(-1.0, 7.0, 32).unwrap();
        let cfg = config(3, xg, Some(yg), Mode::Cdf, 32);
        let r = run_recursion(&k, &StepFunctional::next_level(), &cfg, 0.0).unwrap();
        // brute force over the 27 outcomes
        let mut counts = [0usize; 7];
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    counts[a + b + c] += 1;
                }
            }
        }
        for (k, y) in r.law.points().iter().enumerate() {
            let exact = counts.iter().enumerate().filter(|(s, _)| *s as f64 <= *y + 1e-12).map(|(_, c)| *c).sum::<usize>() as f64 / 27.0;
            assert!((r.law.cdf[k] - exact).abs() < 1e-12, "y={y}");
        }
    }

    #[test]
    fn pdf_and_payoff_modes_agree_with_cdf_mode() {
        let k = NormalIncrementKernel { shift: 0.0, sd: 0.25 };
        let xg = Grid1D::new(-2.5, 2.5, 200).unwrap();
        let sd = 0.25 * 3f64.sqrt();
        for mode in [Mode::Pdf, Mode::Payoff] {
            let cfg = config(3, xg, None, mode, 400);
            let r = run_recursion(&k, &StepFunctional::increment(), &cfg, 0.0).unwrap();
            let worst = r.law.points().iter().zip(&r.law.cdf).map(|(y, c)| (c - normal_cdf(y / sd)).abs()).fold(0.0, f64::max);
            assert!(worst < 2e-3, "{mode:?}: {worst}");
            assert!(r.mass_defect < 1e-3, "{mode:?}: {}", r.mass_defect);
        }
    }

    #[test]
    fn scale_invariant_matches_the_surface() {
        let k = GbmKernel::new(0.02, 0.2).unwrap();
        let n = 12;
        let h = StepFunctional::average_level(n);
        let cfg = RecursionConfig {
            steps: n,
            dt: 1.0 / 12.0,
            x_grid: Grid1D::new(0.3, 2.5, 440).unwrap(),
            y_grid: None,
            policy: policy(400),
            quad: QuadSpec::default(),
            mode: Mode::Cdf,
            record_rows: false,
        };
        let one = run_scale_invariant(&k, &h, &cfg).unwrap();
        let full = run_recursion(&k, &h, &cfg, 1.0).unwrap();
        let gap = one.law.points().iter().zip(&one.law.cdf).map(|(y, c)| (c - full.law.cdf_at(*y)).abs()).fold(0.0, f64::max);
        assert!(gap < 5e-3, "{gap}");
        let err = run_scale_invariant(&NormalIncrementKernel { shift: 0.0, sd: 1.0 }, &h, &cfg).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn single_step_scale_invariant_is_the_terminal_law() {
        let k = GbmKernel::new(0.0, 0.3).unwrap();
        let cfg = config(1, Grid1D::point(1.0), None, Mode::Cdf, 200);
        let r = run_scale_invariant(&k, &StepFunctional::next_level(), &cfg).unwrap();
        for (y, c) in r.law.points().iter().zip(&r.law.cdf) {
            assert!((c - k.cdf(*y, 1.0, 1.0).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn history_has_one_line_per_step() {
        let k = NormalIncrementKernel { shift: 0.0, sd: 0.25 };
        let cfg = config(4, Grid1D::new(-3.0, 3.0, 60).unwrap(), None, Mode::Cdf, 100);
        let r = run_recursion(&k, &StepFunctional::increment(), &cfg, 0.0).unwrap();
        let mut buf = Vec::new();
        r.write_diagnostics(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("step,y_min,y_max,extensions,mass_defect\n3,"));
        assert!(r.converged);
    }
}
