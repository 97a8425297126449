//! Special functions used by the transition kernels.
//!
//! The modified Bessel function of the first kind is evaluated here; gamma,
//! incomplete gamma and the inverse error function come from `statrs`, the
//! error function from `libm`.

use std::f64::consts::PI;

use statrs::function::{erf, gamma as sgamma};

/// Argument at which [`bessel_i`] switches from the power series to the
/// large-argument expansion (only when the order is small enough, see
/// [`ln_bessel_i`]).
pub const BESSEL_SWITCH: f64 = 30.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn gamma(x: f64) -> f64 {
    sgamma::gamma(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    sgamma::ln_gamma(x)
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    sgamma::gamma_lr(a, x)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse of the standard normal CDF.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let z = -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * p);
    // erfc_inv is only good to ~1e-10; one Halley step fixes it
    let e = (normal_cdf(z) - p) / normal_pdf(z);
    z - e / (1.0 + 0.5 * z * e)
}

/// Density of `N(mean, sd^2)` at `x`.
pub fn gaussian_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    normal_pdf((x - mean) / sd) / sd
}

/// `ln I_q(z)` for real order `q >= -1` and `z >= 0`.
///
/// The power series is summed outward from its largest term, so it is safe
/// for any argument. The large-argument expansion is used once
/// `z >= max(BESSEL_SWITCH, q^2)`.
pub fn ln_bessel_i(q: f64, z: f64) -> f64 {
    debug_assert!(q >= -1.0 && z >= 0.0);
    if z == 0.0 {
        return if q == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if z >= BESSEL_SWITCH && z >= q * q {
        ln_bessel_i_asymptotic(q, z)
    } else {
        ln_bessel_i_series(q, z)
    }
}

pub fn bessel_i(q: f64, z: f64) -> f64 {
    ln_bessel_i(q, z).exp()
}

/// Power-series branch: `sum_k (z/2)^(2k+q) / (k! Gamma(k+q+1))`.
pub fn ln_bessel_i_series(q: f64, z: f64) -> f64 {
    // I_{-1} = I_1
    let q = if q == -1.0 { 1.0 } else { q };
    let half = 0.5 * z;
    let ln_half = half.ln();
    let half2 = half * half;
    let ln_term = |k: f64| (2.0 * k + q) * ln_half - ln_gamma(k + 1.0) - ln_gamma(k + q + 1.0);

    // Largest term where (z/2)^2 = k (k + q).
    let peak = ((-q + (q * q + z * z).sqrt()) * 0.5).floor().max(0.0);
    let ln_peak = ln_term(peak);

    let mut sum = 1.0;
    let mut t = 1.0;
    let mut k = peak;
    loop {
        k += 1.0;
        t *= half2 / (k * (k + q));
        sum += t;
        if t < 1e-17 * sum {
            break;
        }
    }
    let mut t = 1.0;
    let mut k = peak;
    while k > 0.0 {
        t *= k * (k + q) / half2;
        k -= 1.0;
        sum += t;
        if t < 1e-17 * sum {
            break;
        }
    }
    ln_peak + sum.ln()
}

/// Large-argument expansion `e^z / sqrt(2 pi z) * sum_k (-1)^k a_k(q) / z^k`,
/// truncated at its smallest term.
pub fn ln_bessel_i_asymptotic(q: f64, z: f64) -> f64 {
    let mu = 4.0 * q * q;
    let mut sum = 1.0;
    let mut term: f64 = 1.0;
    let mut k = 1.0;
    loop {
        let odd = 2.0 * k - 1.0;
        let next = -term * (mu - odd * odd) / (8.0 * k * z);
        let past_turning = odd * odd > mu;
        if past_turning && next.abs() >= term.abs() {
            break;
        }
        sum += next;
        term = next;
        if term.abs() < 1e-18 * sum.abs() || k > 500.0 {
            break;
        }
        k += 1.0;
    }
    z - 0.5 * (2.0 * PI * z).ln() + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bessel_at_zero() {
        assert_eq!(bessel_i(0.0, 0.0), 1.0);
        assert_eq!(bessel_i(1.5, 0.0), 0.0);
    }

    #[test]
    fn half_integer_order_closed_form() {
        for z in [1.0_f64, 2.0, 5.0] {
            let exact = (2.0 / (PI * z)).sqrt() * z.sinh();
            assert_relative_eq!(bessel_i(0.5, z), exact, max_relative = 1e-12);
        }
        // I_{-1/2}(z) = sqrt(2/(pi z)) cosh z
        for z in [0.3_f64, 4.0, 45.0] {
            let exact = (2.0 / (PI * z)).sqrt() * z.cosh();
            assert_relative_eq!(bessel_i(-0.5, z), exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn order_minus_one_equals_order_one() {
        for z in [0.5, 3.0, 12.0] {
            assert_relative_eq!(bessel_i(-1.0, z), bessel_i(1.0, z), max_relative = 1e-13);
        }
    }

    #[test]
    fn branches_agree_near_switch() {
        let q = 0.9556;
        let s = ln_bessel_i_series(q, 10.0).exp();
        let a = ln_bessel_i_asymptotic(q, 10.0).exp();
        assert_relative_eq!(s, a, max_relative = 1e-9);
        for q in [0.0, 1.0, 2.5, 5.0] {
            let s = ln_bessel_i_series(q, BESSEL_SWITCH);
            let a = ln_bessel_i_asymptotic(q, BESSEL_SWITCH);
            assert!((s - a).abs() < 1e-12, "q={q}: {s} vs {a}");
        }
    }

    #[test]
    fn recurrence_holds_across_orders() {
        // I_{q-1}(z) - I_{q+1}(z) = (2q/z) I_q(z)
        for &(q, z) in &[(1.3, 0.7), (2.0, 8.0), (3.7, 29.0), (1.2, 250.0), (4.0, 500.0)] {
            let lhs = bessel_i(q - 1.0, z) - bessel_i(q + 1.0, z);
            let rhs = 2.0 * q / z * bessel_i(q, z);
            assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
        }
    }

    #[test]
    fn incomplete_gamma_half_matches_erf() {
        for x in [0.1_f64, 1.0, 3.0] {
            assert_relative_eq!(gamma_p(0.5, x), libm::erf(x.sqrt()), max_relative = 1e-12);
        }
        assert_eq!(gamma_p(0.5, 0.0), 0.0);
    }

    #[test]
    fn gamma_values() {
        assert_relative_eq!(gamma(0.5), PI.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(gamma(5.0), 24.0, max_relative = 1e-12);
        assert_relative_eq!(ln_gamma(101.0), (1..=100).map(|k| (k as f64).ln()).sum::<f64>(), max_relative = 1e-12);
    }

    #[test]
    fn normal_round_trip() {
        for p in [1e-6, 0.025, 0.5, 0.9, 0.999] {
            assert_relative_eq!(normal_cdf(normal_quantile(p)), p, max_relative = 1e-12);
        }
        assert_relative_eq!(normal_quantile(0.05), -1.6448536269514722, max_relative = 1e-12);
    }
}
