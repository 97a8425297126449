//! Monte Carlo ground truth for the engine.
//!
//! Every path owns a ChaCha stream selected by `(seed, path index)`, so a
//! parallel run reproduces the sequential one exactly.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::TransitionKernel;
use crate::recursion::{Distribution, StepFunctional};

/// Random stream for one path. In antithetic mode every normal draw is
/// negated; other draws (gamma clocks, Poisson counts) are shared.
#[derive(Debug, Clone)]
pub struct PathRng {
    rng: ChaCha8Rng,
    antithetic: bool,
}

impl PathRng {
    pub fn new(seed: u64, path: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        PathRng { rng, antithetic: false }
    }

    /// The mirror image of `new(seed, path)`.
    pub fn antithetic(seed: u64, path: u64) -> Self {
        PathRng { antithetic: true, ..PathRng::new(seed, path) }
    }

    pub fn normal(&mut self) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        if self.antithetic {
            -z
        } else {
            z
        }
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    pub fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl McConfig {
    pub fn new(paths: usize, seed: u64) -> Self {
        McConfig { paths, seed, antithetic: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::Parameter("path count must be positive".into()));
        }
        Ok(())
    }

    /// Stream of path `i`: antithetic runs pair path `2k + 1` with the
    /// mirror of path `2k`.
    pub fn stream(&self, i: usize) -> PathRng {
        if self.antithetic {
            let k = (i / 2) as u64;
            if i % 2 == 0 {
                PathRng::new(self.seed, k)
            } else {
                PathRng::antithetic(self.seed, k)
            }
        } else {
            PathRng::new(self.seed, i as u64)
        }
    }
}

/// Runs `path` once per path index and returns the values in path order.
pub fn simulate<F>(cfg: &McConfig, path: F) -> Result<Vec<f64>>
where
    F: Fn(usize, &mut PathRng) -> Result<f64> + Sync,
{
    cfg.validate()?;
    (0..cfg.paths).into_par_iter().map(|i| path(i, &mut cfg.stream(i))).collect()
}

/// Sample of `Y = sum_n h(n, X_n, X_{n+1})` over `steps` transitions from
/// `x0`, sorted ascending.
pub fn simulate_y(
    kernel: &dyn TransitionKernel,
    h: &StepFunctional,
    steps: usize,
    dt: f64,
    x0: f64,
    cfg: &McConfig,
) -> Result<Vec<f64>> {
    let mut ys = simulate(cfg, |i, rng| {
        let mut x = x0;
        let mut y = 0.0;
        for n in 0..steps {
            let xn = kernel.sample(x, dt, rng);
            if !xn.is_finite() {
                return Err(Error::Model(format!("{} sampler failed on path {i}, step {n}", kernel.name())));
            }
            y += h.eval(n, x, xn);
            x = xn;
        }
        Ok(y)
    })?;
    ys.sort_by(f64::total_cmp);
    Ok(ys)
}

/// Sample mean and its standard error.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (v / n).sqrt())
}

/// Sup distance between the empirical CDF of a sorted sample and the
/// engine CDF. Fails if more than 1% of the sample lies outside the
/// engine's y-grid.
pub fn ks_distance(sample: &[f64], law: &Distribution) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Parameter("empty sample".into()));
    }
    let outside = sample.iter().filter(|&&v| !law.y.contains(v)).count();
    let frac = outside as f64 / sample.len() as f64;
    if frac > 0.01 {
        return Err(Error::Coverage { uncovered: 100.0 * frac });
    }
    let n = sample.len() as f64;
    let dy = law.y.step();
    let mut d = 0.0f64;
    let mut i = 0;
    while i < sample.len() {
        let v = sample[i];
        let mut j = i + 1;
        while j < sample.len() && sample[j] == v {
            j += 1;
        }
        let c = law.cdf_at(v);
        d = d.max((c - j as f64 / n).abs());
        // an atom in the sample can only be matched to within one y cell,
        // so its left limit is compared one step earlier
        let left = if j - i > 1 { law.cdf_at(v - dy) } else { c };
        d = d.max((left - i as f64 / n).abs());
        i = j;
    }
    Ok(d)
}

/// Two-sample KS distance between sorted samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Density-normalized histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub heights: Vec<f64>,
}

impl Histogram {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "bin_left,bin_right,height")?;
        for (k, h) in self.heights.iter().enumerate() {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", self.edges[k], self.edges[k + 1], h)?;
        }
        Ok(())
    }

    /// Height of the bin containing `v`, 0 outside.
    pub fn height_at(&self, v: f64) -> f64 {
        let n = self.heights.len();
        if v < self.edges[0] || v > self.edges[n] {
            return 0.0;
        }
        let w = (self.edges[n] - self.edges[0]) / n as f64;
        let k = (((v - self.edges[0]) / w) as usize).min(n - 1);
        self.heights[k]
    }
}

/// Histogram over the sample range with `bins` equal bins.
pub fn histogram(sample: &[f64], bins: usize) -> Result<Histogram> {
    if sample.is_empty() {
        return Err(Error::Parameter("histogram of an empty sample".into()));
    }
    let lo = sample.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    histogram_on(sample, lo, hi, bins)
}

/// Histogram on `[lo, hi]`; values outside are dropped but still count in
/// the normalization.
pub fn histogram_on(sample: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Histogram> {
    if sample.is_empty() {
        return Err(Error::Parameter("histogram of an empty sample".into()));
    }
    if bins == 0 || !(hi > lo) {
        return Err(Error::Parameter(format!("histogram needs bins >= 1 and lo < hi, got {bins} on [{lo}, {hi}]")));
    }
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in sample {
        if v >= lo && v <= hi {
            counts[(((v - lo) / w) as usize).min(bins - 1)] += 1;
        }
    }
    let n = sample.len() as f64;
    let edges = (0..=bins).map(|k| if k == bins { hi } else { lo + k as f64 * w }).collect();
    let heights = counts.iter().map(|&c| c as f64 / (n * w)).collect();
    Ok(Histogram { edges, heights })
}

/// One value per line at 17 significant digits.
pub fn write_sample<W: Write>(sample: &[f64], mut out: W) -> Result<()> {
    for v in sample {
        writeln!(out, "{v:.16e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Grid1D;
    use crate::models::NormalIncrementKernel;
    use crate::special::normal_cdf;

    #[test]
    fn deterministic_kernel_gives_identical_samples() {
        let k = NormalIncrementKernel { shift: 0.1, sd: 0.0 };
        let ys = simulate_y(&k, &StepFunctional::increment(), 5, 1.0, 0.0, &McConfig::new(100, 1)).unwrap();
        assert!(ys.iter().all(|&y| (y - 0.5).abs() < 1e-12));
    }

    #[test]
    fn constant_summand() {
        let k = NormalIncrementKernel { shift: 0.0, sd: 1.0 };
        let ys = simulate_y(&k, &StepFunctional::constant(0.3), 7, 1.0, 0.0, &McConfig::new(50, 1)).unwrap();
        assert!(ys.iter().all(|&y| (y - 2.1).abs() < 1e-12));
    }

    #[test]
    fn normal_sums_match_closed_form() {
        let k = NormalIncrementKernel { shift: 0.05, sd: 0.2 };
        let n = 10;
        let ys = simulate_y(&k, &StepFunctional::increment(), n, 1.0, 0.0, &McConfig::new(20_000, 3)).unwrap();
        let (m, se) = mean_stderr(&ys);
        assert!((m - 0.5).abs() < 4.0 * se);
        let var = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (ys.len() as f64 - 1.0);
        let exact = 0.04 * n as f64;
        assert!((var - exact).abs() < 4.0 * exact * (2.0 / ys.len() as f64).sqrt());
    }

    #[test]
    fn same_seed_same_bytes() {
        let k = NormalIncrementKernel { shift: 0.0, sd: 1.0 };
        let run = || {
            let ys = simulate_y(&k, &StepFunctional::increment(), 3, 1.0, 0.0, &McConfig::new(1000, 42)).unwrap();
            let mut buf = Vec::new();
            write_sample(&ys, &mut buf).unwrap();
            buf
        };
        assert_eq!(run(), run());
    }

    fn normal_law() -> Distribution {
        let y = Grid1D::new(-8.0, 8.0, 4000).unwrap();
        let cdf: Vec<f64> = y.points().iter().map(|&v| normal_cdf(v)).collect();
        let pdf: Vec<f64> = y.points().iter().map(|&v| crate::special::normal_pdf(v)).collect();
        Distribution { y, cdf, pdf }
    }

    #[test]
    fn ks_of_inverse_transform_sample_is_small() {
        let law = normal_law();
        let n = 100_000;
        let mut rng = PathRng::new(9, 0);
        let mut s: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = rng.uniform();
                let k = law.cdf.partition_point(|&c| c < u).clamp(1, law.cdf.len() - 1);
                let (c0, c1) = (law.cdf[k - 1], law.cdf[k]);
                law.y.at(k - 1) + (u - c0) / (c1 - c0) * law.y.step()
            })
            .collect();
        s.sort_by(f64::total_cmp);
        assert!(ks_distance(&s, &law).unwrap() < 1.4 / (n as f64).sqrt() * 1.5);
    }

    #[test]
    fn ks_edge_cases() {
        let y = Grid1D::new(-1.0, 1.0, 200).unwrap();
        let cdf: Vec<f64> = y.points().iter().map(|&v| if v >= 0.0 { 1.0 } else { 0.0 }).collect();
        let step = Distribution { y, cdf, pdf: vec![0.0; 201] };
        let s = vec![0.0; 100];
        assert!(ks_distance(&s, &step).unwrap() <= 0.5 * y.step() + 1e-12);

        let law = normal_law();
        let far = vec![7.9; 10];
        assert!(ks_distance(&far, &law).unwrap() > 0.99);
        let out = vec![100.0; 10];
        assert!(matches!(ks_distance(&out, &law), Err(Error::Coverage { .. })));
    }

    #[test]
    fn histogram_cases() {
        let mut rng = PathRng::new(2, 0);
        let s: Vec<f64> = (0..50_000).map(|_| 2.0 * rng.uniform()).collect();
        let h = histogram(&s, 20).unwrap();
        let per_bin = 50_000.0 / 20.0;
        assert!(h.heights.iter().all(|v| (v - 0.5).abs() < 0.5 * 5.0 / f64::sqrt(per_bin)));
        let total: f64 = h.heights.iter().sum::<f64>() * (h.edges[1] - h.edges[0]);
        assert!((total - 1.0).abs() < 1e-12);

        let one = histogram_on(&s, 0.0, 2.0, 1).unwrap();
        assert_eq!(one.heights, vec![0.5]);
        assert!(histogram(&[], 10).is_err());
    }

    #[test]
    fn antithetic_pairs_mirror_normals() {
        let mut a = PathRng::new(5, 3);
        let mut b = PathRng::antithetic(5, 3);
        for _ in 0..10 {
            assert_eq!(a.normal(), -b.normal());
        }
        let cfg = McConfig { paths: 4, seed: 5, antithetic: true };
        assert_eq!(cfg.stream(2).normal(), -cfg.stream(3).normal());
    }

    #[test]
    fn two_sample_ks() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        let b: Vec<f64> = (200..300).map(|i| i as f64).collect();
        assert_eq!(ks_two_sample(&a, &b), 1.0);
    }
}
