//! End-to-end jobs behind the command-line tool and the examples: a
//! serializable job description, a `run` that returns a report, and plain
//! numeric tables for output.
//!
//! Every job has named presets holding its reference settings.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{DomainPolicy, Grid1D, Mode};
use crate::models::{cir_exact_density, GarchKernel, GarchParams, JumpDiffusionParams, ModelSpec, QuadSpec, VgKernel, VgParams};
use crate::models::CirParams;
use crate::oracle::{histogram_on, ks_distance, simulate_y, McConfig};
use crate::pricing::{
    asian_price, hedging_error_functional, mc_asian_price, CallPricerConfig, HedgeKind, HedgeStrategy, LadderRow, PriceTable, TableSpec,
};
use crate::quadrature::{integrate, trapezoid, Rule, Tolerance};
use crate::recursion::{run_recursion, run_scale_invariant, Distribution, DistributionResult, RecursionConfig, StepFunctional};
use crate::stats::{
    critical_values, garch_return_density, mc_rejection_rate, power_curve, required_sample_size, simulate_garch_return, TestEngine, TestSpec,
};

/// Grid, tolerance and quadrature settings shared by every recursion job.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSettings {
    pub steps: usize,
    pub dt: f64,
    /// Conditioning grid; `x_min == x_max` gives a single column.
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    pub y_intervals: usize,
    pub tolerance: f64,
    pub max_extensions: usize,
    pub z_count: usize,
    pub support_width: f64,
    pub rule: Rule,
    pub mode: Mode,
}

impl EngineSettings {
    pub fn x_grid(&self) -> Result<Grid1D> {
        if self.x_min == self.x_max {
            Ok(Grid1D::point(self.x_min))
        } else {
            Grid1D::with_step(self.x_min, self.x_max, self.dx)
        }
    }

    pub fn policy(&self) -> DomainPolicy {
        DomainPolicy { tolerance: self.tolerance, points: self.y_intervals, max_extensions: self.max_extensions }
    }

    pub fn quad(&self) -> QuadSpec {
        QuadSpec { rule: self.rule, z_count: self.z_count, support_width: self.support_width }
    }

    pub fn recursion(&self) -> Result<RecursionConfig> {
        let cfg = RecursionConfig {
            steps: self.steps,
            dt: self.dt,
            x_grid: self.x_grid()?,
            y_grid: None,
            policy: self.policy(),
            quad: self.quad(),
            mode: self.mode,
            record_rows: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The summand `h` by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    /// `x' - x`, so `Y = X_N - X_0`.
    Increment,
    /// `x'`
    NextLevel,
    /// `x' / N`, the average of `X_1..X_N`.
    AverageLevel,
    /// `x / N`, the average of `X_0..X_{N-1}`.
    AverageStartLevel,
}

impl Functional {
    pub fn build(self, steps: usize) -> StepFunctional {
        match self {
            Functional::Increment => StepFunctional::increment(),
            Functional::NextLevel => StepFunctional::next_level(),
            Functional::AverageLevel => StepFunctional::average_level(steps),
            Functional::AverageStartLevel => StepFunctional::average_start_level(steps),
        }
    }
}

/// Plain numeric table: CSV with `#` notes, or JSON with the same numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub notes: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Table { notes: Vec::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for n in &self.notes {
            writeln!(out, "# {n}")?;
        }
        writeln!(out, "{}", self.columns.join(","))?;
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        Ok(serde_json::to_writer_pretty(out, self)?)
    }
}

fn law_table(law: &Distribution) -> Table {
    let mut t = Table::new(&["y", "cdf", "pdf"]);
    t.rows = (0..law.y.len()).map(|k| vec![law.y.at(k), law.cdf[k], law.pdf[k]]).collect();
    t
}

fn diagnostics_table(r: &DistributionResult) -> Table {
    let mut t = Table::new(&["step", "y_min", "y_max", "extensions", "mass_defect"]);
    t.rows = r.history.iter().map(|h| vec![h.step as f64, h.y_min, h.y_max, h.extensions as f64, h.mass_defect]).collect();
    t
}

/// Empirical CDF of a sorted sample at `v`.
fn ecdf(sorted: &[f64], v: f64) -> f64 {
    sorted.partition_point(|s| *s <= v) as f64 / sorted.len() as f64
}

/// Monte Carlo comparison of an engine law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McOverlay {
    pub paths: usize,
    pub ks: f64,
    /// Histogram height and empirical CDF at each engine grid point.
    pub pdf: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl McOverlay {
    fn new(sample: &[f64], law: &Distribution, bins: usize) -> Result<Self> {
        let ks = ks_distance(sample, law)?;
        let h = histogram_on(sample, law.y.min(), law.y.max(), bins)?;
        let pts = law.points();
        Ok(McOverlay {
            paths: sample.len(),
            ks,
            pdf: pts.iter().map(|v| h.height_at(*v)).collect(),
            cdf: pts.iter().map(|v| ecdf(sample, *v)).collect(),
        })
    }
}

// ---------------------------------------------------------------- density

/// Law of `Y = sum h(X_n, X_{n+1})` for one of the scalar models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityJob {
    pub model: ModelSpec,
    pub functional: Functional,
    pub x0: f64,
    pub engine: EngineSettings,
    /// Monte Carlo overlay paths, 0 for none.
    pub mc_paths: usize,
    pub mc_bins: usize,
    /// Add the exact CIR density (increment or next-level summands only).
    pub closed_form: bool,
}

/// Exact law of a CIR `X_N - X_0` (or `X_N`) on the engine grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedForm {
    pub pdf: Vec<f64>,
    pub cdf: Vec<f64>,
    /// `int |f - f_exact| dy` over the engine grid.
    pub l1: f64,
    pub rmse: f64,
    /// Largest CDF gap at the grid points.
    pub ks: f64,
}

impl ClosedForm {
    pub fn cir(law: &Distribution, p: &CirParams, x0: f64, maturity: f64, shift: f64) -> Result<Self> {
        let pts = law.points();
        let pdf: Vec<f64> = pts.iter().map(|y| cir_exact_density(y + shift, x0, maturity, p)).collect();
        let tol = Tolerance { abs: 1e-13, rel: 1e-11, max_segments: 400 };
        let f = |v: f64| cir_exact_density(v, x0, maturity, p);
        let mut cdf = Vec::with_capacity(pts.len());
        let mut acc = 0.0;
        let mut from = 0.0;
        for y in &pts {
            let to = (y + shift).max(0.0);
            if to > from {
                acc += integrate(f, from, to, tol)?;
                from = to;
            }
            cdf.push(acc);
        }
        let diff: Vec<f64> = law.pdf.iter().zip(&pdf).map(|(a, b)| (a - b).abs()).collect();
        let l1 = trapezoid(&diff, law.y.step());
        let rmse = (diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64).sqrt();
        let ks = law.cdf.iter().zip(&cdf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        Ok(ClosedForm { pdf, cdf, l1, rmse, ks })
    }
}

#[derive(Debug, Clone)]
pub struct DensityReport {
    pub result: DistributionResult,
    pub engine_seconds: f64,
    pub closed_form: Option<ClosedForm>,
    pub mc: Option<McOverlay>,
}

impl DensityJob {
    pub fn run(&self, seed: u64) -> Result<DensityReport> {
        let kernel = self.model.build()?;
        let cfg = self.engine.recursion()?;
        let h = self.functional.build(cfg.steps);
        let t0 = Instant::now();
        let result = run_recursion(kernel.as_ref(), &h, &cfg, self.x0)?;
        let engine_seconds = t0.elapsed().as_secs_f64();
        let closed_form = if self.closed_form {
            let ModelSpec::Cir(p) = &self.model else {
                return Err(Error::Unsupported(format!("no closed form for model {:?}", self.model)));
            };
            let shift = match self.functional {
                Functional::Increment => self.x0,
                Functional::NextLevel if cfg.steps == 1 => 0.0,
                f => return Err(Error::Unsupported(format!("no closed form for the {f:?} summand"))),
            };
            Some(ClosedForm::cir(&result.law, p, self.x0, cfg.steps as f64 * cfg.dt, shift)?)
        } else {
            None
        };
        let mc = if self.mc_paths > 0 {
            let sample = simulate_y(kernel.as_ref(), &h, cfg.steps, cfg.dt, self.x0, &McConfig::new(self.mc_paths, seed))?;
            Some(McOverlay::new(&sample, &result.law, self.mc_bins)?)
        } else {
            None
        };
        Ok(DensityReport { result, engine_seconds, closed_form, mc })
    }
}

impl DensityReport {
    pub fn converged(&self) -> bool {
        self.result.converged
    }

    /// `("", law with overlays)` and `("diagnostics", step log)`.
    pub fn tables(&self) -> Vec<(String, Table)> {
        let law = &self.result.law;
        let mut t = law_table(law);
        if let Some(c) = &self.closed_form {
            t.columns.extend(["exact_cdf".into(), "exact_pdf".into()]);
            for (k, r) in t.rows.iter_mut().enumerate() {
                r.extend([c.cdf[k], c.pdf[k]]);
            }
            t.notes.push(format!("closed form: L1 = {:.6e}, KS = {:.6e}, RMSE = {:.6e}", c.l1, c.ks, c.rmse));
        }
        if let Some(m) = &self.mc {
            t.columns.extend(["mc_cdf".into(), "mc_pdf".into()]);
            for (k, r) in t.rows.iter_mut().enumerate() {
                r.extend([m.cdf[k], m.pdf[k]]);
            }
            t.notes.push(format!("monte carlo: {} paths, KS = {:.6e}", m.paths, m.ks));
        }
        t.notes.push(format!("mass defect {:.3e}, converged {}", self.result.mass_defect, self.result.converged));
        vec![(String::new(), t), ("diagnostics".into(), diagnostics_table(&self.result))]
    }
}

// ---------------------------------------------------------------- garch

/// GARCH variance after `N` steps, integrated variance and total return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GarchJob {
    pub params: GarchParams,
    pub x0: f64,
    pub engine: EngineSettings,
    pub return_points: usize,
    pub mc_paths: usize,
    pub mc_bins: usize,
}

#[derive(Debug, Clone)]
pub struct GarchReport {
    /// Law of `sigma^2_N - sigma^2_0`.
    pub variance_run: DistributionResult,
    /// Law of `sigma^2_N`.
    pub variance: Distribution,
    /// Law of `(1/N) sum_{k<N} sigma^2_k`.
    pub iv_run: DistributionResult,
    pub returns: Distribution,
    pub mc_variance: Option<McOverlay>,
    pub mc_iv: Option<McOverlay>,
    pub mc_returns: Option<McOverlay>,
}

impl GarchJob {
    pub fn run(&self, seed: u64) -> Result<GarchReport> {
        let kernel = GarchKernel::new(self.params)?;
        let cfg = self.engine.recursion()?;
        let n = cfg.steps;
        let variance_run = run_recursion(&kernel, &StepFunctional::increment(), &cfg, self.x0)?;
        let variance = variance_run.law.shifted(self.x0)?;
        let iv_h = StepFunctional::average_start_level(n);
        let iv_run = run_recursion(&kernel, &iv_h, &cfg, self.x0)?;
        let returns = garch_return_density(&iv_run.law, n, self.return_points)?;
        let (mut mc_variance, mut mc_iv, mut mc_returns) = (None, None, None);
        if self.mc_paths > 0 {
            let mc = McConfig::new(self.mc_paths, seed);
            let v: Vec<f64> = simulate_y(&kernel, &StepFunctional::increment(), n, cfg.dt, self.x0, &mc)?
                .into_iter()
                .map(|y| y + self.x0)
                .collect();
            mc_variance = Some(McOverlay::new(&v, &variance, self.mc_bins)?);
            let iv = simulate_y(&kernel, &iv_h, n, cfg.dt, self.x0, &mc)?;
            mc_iv = Some(McOverlay::new(&iv, &iv_run.law, self.mc_bins)?);
            let r = simulate_garch_return(&kernel, self.x0, n, &mc)?;
            mc_returns = Some(McOverlay::new(&r, &returns, self.mc_bins)?);
        }
        Ok(GarchReport { variance_run, variance, iv_run, returns, mc_variance, mc_iv, mc_returns })
    }
}

impl GarchReport {
    pub fn converged(&self) -> bool {
        self.variance_run.converged && self.iv_run.converged
    }

    /// `variance`, `iv` and `return` laws.
    pub fn tables(&self) -> Vec<(String, Table)> {
        let with_mc = |law: &Distribution, mc: &Option<McOverlay>| {
            let mut t = law_table(law);
            if let Some(m) = mc {
                t.columns.extend(["mc_cdf".into(), "mc_pdf".into()]);
                for (k, r) in t.rows.iter_mut().enumerate() {
                    r.extend([m.cdf[k], m.pdf[k]]);
                }
                t.notes.push(format!("monte carlo: {} paths, KS = {:.6e}", m.paths, m.ks));
            }
            t
        };
        vec![
            ("variance".into(), with_mc(&self.variance, &self.mc_variance)),
            ("iv".into(), with_mc(&self.iv_run.law, &self.mc_iv)),
            ("return".into(), with_mc(&self.returns, &self.mc_returns)),
        ]
    }
}

// ---------------------------------------------------------------- hedge

/// Hedging-error laws for a VG stock over `engine.steps` rebalancing dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HedgeJob {
    pub vg: VgParams,
    pub s0: f64,
    pub strikes: Vec<f64>,
    pub strategies: Vec<HedgeKind>,
    pub engine: EngineSettings,
    pub table: TableSpec,
    pub pricer: CallPricerConfig,
    pub mc_paths: usize,
    pub mc_bins: usize,
}

#[derive(Debug, Clone)]
pub struct HedgeRun {
    pub strategy: HedgeKind,
    pub strike: f64,
    pub result: DistributionResult,
    pub mc: Option<McOverlay>,
    /// Price and ratio lookups that fell outside the tabulated range.
    pub clamped_queries: usize,
}

#[derive(Debug, Clone)]
pub struct HedgeReport {
    pub runs: Vec<HedgeRun>,
}

impl HedgeJob {
    pub fn run(&self, seed: u64) -> Result<HedgeReport> {
        let kernel = VgKernel::new(self.vg)?;
        let cfg = self.engine.recursion()?;
        let maturity = cfg.steps as f64 * cfg.dt;
        let mut runs = Vec::new();
        for &strike in &self.strikes {
            let prices = Arc::new(PriceTable::build(self.vg, strike, maturity, cfg.steps, &self.table, self.pricer)?);
            for &strategy in &self.strategies {
                let ratios = Arc::new(HedgeStrategy::build(strategy, &prices)?);
                let h = hedging_error_functional(ratios.clone(), prices.clone(), self.vg.r, cfg.dt, cfg.steps)?;
                let result = run_recursion(&kernel, &h, &cfg, self.s0)?;
                let mc = if self.mc_paths > 0 {
                    let sample = simulate_y(&kernel, &h, cfg.steps, cfg.dt, self.s0, &McConfig::new(self.mc_paths, seed))?;
                    Some(McOverlay::new(&sample, &result.law, self.mc_bins)?)
                } else {
                    None
                };
                let clamped_queries = prices.clamped_queries() + ratios.clamped_queries();
                runs.push(HedgeRun { strategy, strike, result, mc, clamped_queries });
            }
        }
        Ok(HedgeReport { runs })
    }
}

impl HedgeReport {
    pub fn converged(&self) -> bool {
        self.runs.iter().all(|r| r.result.converged)
    }

    /// One law per `(strategy, strike)`, named like `delta-K1`.
    pub fn tables(&self) -> Vec<(String, Table)> {
        self.runs
            .iter()
            .map(|r| {
                let mut t = law_table(&r.result.law);
                if let Some(m) = &r.mc {
                    t.columns.extend(["mc_cdf".into(), "mc_pdf".into()]);
                    for (k, row) in t.rows.iter_mut().enumerate() {
                        row.extend([m.cdf[k], m.pdf[k]]);
                    }
                    t.notes.push(format!("monte carlo: {} paths, KS = {:.6e}", m.paths, m.ks));
                }
                t.notes.push(format!("clamped table lookups: {}", r.clamped_queries));
                let kind = match r.strategy {
                    HedgeKind::Delta => "delta",
                    HedgeKind::MinVariance => "minvar",
                };
                (format!("{kind}-K{}", r.strike), t)
            })
            .collect()
    }
}

// ---------------------------------------------------------------- asian

/// Arithmetic-average calls on a VG stock from one scale-free run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsianJob {
    pub vg: VgParams,
    pub s0: f64,
    pub strikes: Vec<f64>,
    pub engine: EngineSettings,
    pub mc_paths: usize,
    pub antithetic: bool,
}

#[derive(Debug, Clone)]
pub struct AsianReport {
    pub result: DistributionResult,
    pub ladder: Vec<LadderRow>,
    /// `|price(2 S0, 2 K) - 2 price(S0, K)|`, largest over the ladder.
    pub scale_gap: f64,
}

impl AsianJob {
    pub fn run(&self, seed: u64) -> Result<AsianReport> {
        let kernel = VgKernel::new(self.vg)?;
        let cfg = self.engine.recursion()?;
        let maturity = cfg.steps as f64 * cfg.dt;
        let result = run_scale_invariant(&kernel, &StepFunctional::average_level(cfg.steps), &cfg)?;
        let mc = if self.mc_paths > 0 {
            let c = McConfig { paths: self.mc_paths, seed, antithetic: self.antithetic };
            mc_asian_price(&kernel, self.s0, &self.strikes, cfg.steps, cfg.dt, self.vg.r, &c)?
        } else {
            vec![(f64::NAN, f64::NAN); self.strikes.len()]
        };
        let mut ladder = Vec::new();
        let mut scale_gap: f64 = 0.0;
        for (&strike, (mc_price, mc_stderr)) in self.strikes.iter().zip(mc) {
            let engine_price = asian_price(&result, self.s0, strike, self.vg.r, maturity)?;
            let doubled = asian_price(&result, 2.0 * self.s0, 2.0 * strike, self.vg.r, maturity)?;
            scale_gap = scale_gap.max((doubled - 2.0 * engine_price).abs());
            ladder.push(LadderRow { strike, engine_price, mc_price, mc_stderr });
        }
        Ok(AsianReport { result, ladder, scale_gap })
    }
}

impl AsianReport {
    pub fn converged(&self) -> bool {
        self.result.converged
    }

    /// `ladder` and the `average` law at `X_0 = 1`.
    pub fn tables(&self) -> Vec<(String, Table)> {
        let mut t = Table::new(&["strike", "engine_price", "mc_price", "mc_stderr"]);
        t.rows = self.ladder.iter().map(|r| vec![r.strike, r.engine_price, r.mc_price, r.mc_stderr]).collect();
        t.notes.push(format!("scale identity gap {:.3e}", self.scale_gap));
        vec![("ladder".into(), t), ("average".into(), law_table(&self.result.law))]
    }
}

// ---------------------------------------------------------------- skew

/// Left-tailed test of `mu_J = 0` on the sample mean of cubed returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkewJob {
    pub significance: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub sigma_j: f64,
    /// Mean jump size under the alternative.
    pub mu_j: f64,
    /// Compensate the drift so returns have mean zero.
    pub compensated: bool,
    pub dt: f64,
    pub n_max: usize,
    pub target_power: f64,
    pub y_intervals: usize,
    pub tolerance: f64,
    pub max_extensions: usize,
    pub z_count: usize,
    pub support_width: f64,
    /// Replications for the size check at the required sample size.
    pub size_paths: usize,
}

#[derive(Debug, Clone)]
pub struct SkewReport {
    pub spec: TestSpec,
    pub criticals: Vec<(usize, f64)>,
    pub power: Vec<(usize, f64)>,
    pub required_n: Option<usize>,
    /// Simulated rejection rate under the null at `required_n` (or `n_max`).
    pub mc_size: Option<f64>,
}

impl SkewJob {
    pub fn test_spec(&self) -> TestSpec {
        let params = |mu_j: f64| {
            if self.compensated {
                JumpDiffusionParams::martingale(self.sigma, self.lambda, mu_j, self.sigma_j)
            } else {
                JumpDiffusionParams { mu: 0.0, sigma: self.sigma, lambda: self.lambda, mu_j, sigma_j: self.sigma_j }
            }
        };
        TestSpec {
            significance: self.significance,
            null: params(0.0),
            alternative: params(self.mu_j),
            sample_sizes: (1..=self.n_max).collect(),
            dt: self.dt,
        }
    }

    pub fn engine(&self) -> TestEngine {
        TestEngine {
            policy: DomainPolicy { tolerance: self.tolerance, points: self.y_intervals, max_extensions: self.max_extensions },
            quad: QuadSpec { rule: Rule::Simpson, z_count: self.z_count, support_width: self.support_width },
        }
    }

    pub fn run(&self, seed: u64) -> Result<SkewReport> {
        let spec = self.test_spec();
        let engine = self.engine();
        let criticals = critical_values(&spec, &engine)?;
        let power = power_curve(&spec, &criticals, &engine)?;
        let required_n = required_sample_size(&power, self.target_power);
        let mc_size = if self.size_paths > 0 {
            let n = required_n.unwrap_or(self.n_max);
            let c = criticals[n - 1].1;
            Some(mc_rejection_rate(&spec.null, n, spec.dt, c, &McConfig::new(self.size_paths, seed))?)
        } else {
            None
        };
        Ok(SkewReport { spec, criticals, power, required_n, mc_size })
    }
}

impl SkewReport {
    pub fn converged(&self) -> bool {
        true
    }

    /// `n,critical_value,power` with the set-up as notes.
    pub fn tables(&self) -> Vec<(String, Table)> {
        let mut t = Table::new(&["n", "critical_value", "power"]);
        t.rows = self.criticals.iter().zip(&self.power).map(|((n, c), (_, p))| vec![*n as f64, *c, *p]).collect();
        t.notes.push(format!("significance = {}, dt = {}", self.spec.significance, self.spec.dt));
        t.notes.push(format!("null: {:?}", self.spec.null));
        t.notes.push(format!("alternative: {:?}", self.spec.alternative));
        match self.required_n {
            Some(n) => t.notes.push(format!("smallest n reaching the target power: {n}")),
            None => t.notes.push("target power not reached".into()),
        }
        if let Some(s) = self.mc_size {
            t.notes.push(format!("simulated size: {s:.4}"));
        }
        vec![("report".into(), t)]
    }
}

// ---------------------------------------------------------------- presets

/// Any job, tagged by the command that runs it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Job {
    Density(DensityJob),
    Garch(GarchJob),
    Hedge(HedgeJob),
    Asian(AsianJob),
    Skew(SkewJob),
}

/// Preset names with the command that runs each.
pub const PRESETS: &[(&str, &str)] = &[
    ("cir-fig2", "density"),
    ("cev-fig4", "density"),
    ("sv-fig5-ahalf", "density"),
    ("sv-fig5-aone", "density"),
    ("sv-fig5-athreehalf", "density"),
    ("sv-fig5-bhalf", "density"),
    ("sv-fig5-bone", "density"),
    ("sv-fig5-bthreehalf", "density"),
    ("iv-fig6-ahalf", "iv"),
    ("iv-fig6-aone", "iv"),
    ("iv-fig6-athreehalf", "iv"),
    ("iv-fig6-bhalf", "iv"),
    ("iv-fig6-bone", "iv"),
    ("iv-fig6-bthreehalf", "iv"),
    ("garch-fig7", "garch-return"),
    ("hedge-fig9", "hedge"),
    ("asian-fig8", "asian"),
    ("skew-fig10", "skewtest"),
];

/// Preset that a command runs when none is named.
pub fn default_preset(command: &str) -> Option<&'static str> {
    Some(match command {
        "density" => "cir-fig2",
        "iv" => "iv-fig6-ahalf",
        "garch-return" => "garch-fig7",
        "hedge" => "hedge-fig9",
        "asian" => "asian-fig8",
        "skewtest" => "skew-fig10",
        _ => return None,
    })
}

fn engine(steps: usize, dt: f64, x: (f64, f64, f64), y_intervals: usize, mode: Mode) -> EngineSettings {
    EngineSettings {
        steps,
        dt,
        x_min: x.0,
        x_max: x.1,
        dx: x.2,
        y_intervals,
        tolerance: 1e-8,
        max_extensions: 2000,
        z_count: 128,
        support_width: 8.0,
        rule: Rule::Simpson,
        mode,
    }
}

const HEDGE_VG: VgParams = VgParams { sigma: 0.2, theta: 1.2, nu: 0.001, r: 0.02 };

// the y-domain must cover every column's law, so columns far from V0
// cost resolution at V0; the x-range shrinks as the volatility exponent grows
fn sv(a: f64, b: f64, functional: Functional) -> Job {
    let x = if b == 0.5 {
        (0.002, 0.8, 0.002)
    } else if b == 1.0 {
        (0.02, 0.6, 0.002)
    } else {
        (0.05, 0.5, 0.001)
    };
    Job::Density(DensityJob {
        model: ModelSpec::Sv { kappa: 11.0, theta: 0.2, gamma: 0.8, a, b },
        functional,
        x0: 0.2,
        engine: engine(100, 1.0 / 1250.0, x, 1000, Mode::Cdf),
        mc_paths: 0,
        mc_bins: 100,
        closed_form: false,
    })
}

fn sv_exponents(tail: &str) -> Option<(f64, f64)> {
    let (a, b) = tail.split_at(1);
    let a = match a {
        "a" => 0.0,
        "b" => 1.0,
        _ => return None,
    };
    let b = match b {
        "half" => 0.5,
        "one" => 1.0,
        "threehalf" => 1.5,
        _ => return None,
    };
    Some((a, b))
}

/// Job for a named preset, or a usage error listing them all.
pub fn preset(name: &str) -> Result<Job> {
    let job = match name {
        "cir-fig2" => Job::Density(DensityJob {
            model: ModelSpec::Cir(CirParams { kappa: 11.0, theta: 0.2, gamma: 1.5 }),
            functional: Functional::Increment,
            x0: 0.2,
            engine: engine(100, 1.0 / 1250.0, (0.0, 0.6, 0.002), 1000, Mode::Pdf),
            mc_paths: 0,
            mc_bins: 100,
            closed_form: true,
        }),
        "cev-fig4" => Job::Density(DensityJob {
            model: ModelSpec::Cev { mu: 0.05, sigma: 0.2, gamma_cev: 0.7 },
            functional: Functional::Increment,
            x0: 1.0,
            engine: engine(200, 1.0 / 1250.0, (0.5, 1.5, 0.005), 200, Mode::Cdf),
            mc_paths: 0,
            mc_bins: 100,
            closed_form: false,
        }),
        "garch-fig7" => Job::Garch(GarchJob {
            params: GarchParams { omega: 0.001, alpha: 0.05, beta: 0.9 },
            x0: 0.02,
            engine: engine(20, 1.0, (0.01, 0.05, 0.0002), 150, Mode::Cdf),
            return_points: 2000,
            mc_paths: 0,
            mc_bins: 100,
        }),
        "hedge-fig9" => Job::Hedge(HedgeJob {
            vg: HEDGE_VG,
            s0: 1.0,
            strikes: vec![0.9, 1.0, 1.05],
            strategies: vec![HedgeKind::Delta, HedgeKind::MinVariance],
            // the hedging error of a deep in-the-money call is a spike a few cells wide at 400 intervals
            engine: EngineSettings { support_width: 10.0, ..engine(20, 1.0 / 250.0, (0.7, 1.4, 0.002), 4000, Mode::Cdf) },
            table: TableSpec::default(),
            pricer: CallPricerConfig::default(),
            mc_paths: 0,
            mc_bins: 100,
        }),
        "asian-fig8" => Job::Asian(AsianJob {
            vg: HEDGE_VG,
            s0: 1.0,
            strikes: vec![0.9, 0.95, 1.0, 1.05, 1.1],
            // the average drifts by about 1/N per step and the domain grows
            // one cell at a time, so a fine grid needs a large budget
            engine: EngineSettings {
                support_width: 10.0,
                max_extensions: 400_000,
                ..engine(20, 1.0 / 250.0, (1.0, 1.0, 0.0), 8000, Mode::Cdf)
            },
            mc_paths: 1_000_000,
            antithetic: true,
        }),
        "skew-fig10" => Job::Skew(SkewJob {
            significance: 0.05,
            sigma: 0.1975,
            lambda: 10.0,
            sigma_j: 0.01,
            mu_j: -0.05,
            compensated: true,
            dt: 1.0 / 250.0,
            n_max: 200,
            target_power: 0.9,
            y_intervals: 8000,
            tolerance: 1e-8,
            max_extensions: 20_000,
            z_count: 256,
            support_width: 8.0,
            size_paths: 100_000,
        }),
        _ => {
            if let Some(t) = name.strip_prefix("sv-fig5-").and_then(sv_exponents) {
                sv(t.0, t.1, Functional::Increment)
            } else if let Some(t) = name.strip_prefix("iv-fig6-").and_then(sv_exponents) {
                sv(t.0, t.1, Functional::AverageLevel)
            } else {
                let names: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
                return Err(Error::Parameter(format!("unknown preset `{name}`; available presets: {}", names.join(", "))));
            }
        }
    };
    Ok(job)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    #[test]
    fn every_preset_resolves_and_round_trips() {
        for (name, command) in PRESETS {
            let job = preset(name).unwrap();
            let kind_ok = matches!(
                (&job, *command),
                (Job::Density(_), "density" | "iv") | (Job::Garch(_), "garch-return") | (Job::Hedge(_), "hedge") | (Job::Asian(_), "asian") | (Job::Skew(_), "skewtest")
            );
            assert!(kind_ok, "{name}");
            let text = serde_json::to_string(&job).unwrap();
            assert_eq!(serde_json::from_str::<Job>(&text).unwrap(), job);
        }
        let err = preset("fig99").unwrap_err().to_string();
        assert!(err.contains("cir-fig2") && err.contains("skew-fig10"));
    }

    #[test]
    fn config_overrides_a_preset() {
        let Job::Density(base) = preset("cir-fig2").unwrap() else { panic!() };
        let cfg = Config::parse("preset = cir-fig2\nx0 = 0.25\n[engine]\ny_intervals = 250\n[model]\nkappa = 9\n").unwrap();
        let job = cfg.apply(&base, &["preset"]).unwrap();
        assert_eq!(job.x0, 0.25);
        assert_eq!(job.engine.y_intervals, 250);
        assert_eq!(job.model, ModelSpec::Cir(CirParams { kappa: 9.0, theta: 0.2, gamma: 1.5 }));
        let switch = Config::parse("[model]\nmodel = cev\nmu = 0.05\nsigma = 0.2\ngamma_cev = 0.7\n").unwrap();
        let job = switch.apply(&base, &[]).unwrap();
        assert_eq!(job.model, ModelSpec::Cev { mu: 0.05, sigma: 0.2, gamma_cev: 0.7 });
        let bad = Config::parse("[engine]\nmode = sideways\n").unwrap();
        assert!(matches!(bad.apply(&base, &[]), Err(Error::Config { line: 2, .. })));
    }

    #[test]
    fn table_formats_agree() {
        let mut t = Table::new(&["a", "b"]);
        t.rows = vec![vec![0.1, 1.0 / 3.0], vec![std::f64::consts::PI, -2.5e-300]];
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        let mut json = Vec::new();
        t.write_json(&mut json).unwrap();
        let back: Table = serde_json::from_slice(&json).unwrap();
        let parsed: Vec<Vec<f64>> = String::from_utf8(csv)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
            .collect();
        assert_eq!(parsed, t.rows);
        assert_eq!(back.rows, t.rows);
    }

    #[test]
    fn small_density_job_with_overlays() {
        let Job::Density(mut job) = preset("cir-fig2").unwrap() else { panic!() };
        job.engine.steps = 10;
        job.engine.dx = 0.01;
        job.engine.y_intervals = 200;
        job.mc_paths = 20_000;
        let r = job.run(3).unwrap();
        let c = r.closed_form.as_ref().unwrap();
        assert!(c.l1 < 0.05 && c.ks < 0.02, "{c:?}");
        assert!(r.mc.as_ref().unwrap().ks < 0.03);
        let tabs = r.tables();
        assert_eq!(tabs[0].1.columns.len(), 7);
        assert_eq!(tabs[1].1.rows.len(), 10);
    }
}
