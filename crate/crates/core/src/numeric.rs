//! Small numerical helpers: stable log-domain averaging, compensated sums
//! and the normal / chi-square tail functions used by the baselines.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// `ln(sum(exp(x)))`, stable for arbitrarily large or small inputs.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `ln(mean(exp(x)))`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Two-sided standard normal tail probability `P(|Z| >= |z|)`.
pub fn two_sided_normal_p(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Quantile of the chi-square distribution with one degree of freedom.
pub fn chi2_1_quantile(p: f64) -> f64 {
    ChiSquared::new(1.0)
        .expect("one degree of freedom")
        .inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let xs = [0.1f64, -2.0, 3.5];
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_survives_overflow() {
        let v = log_mean_exp(&[1000.0, 1000.0]);
        assert!((v - 1000.0).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut acc = CompensatedSum::new();
        acc.add(1e16);
        for _ in 0..10 {
            acc.add(1.0);
        }
        acc.add(-1e16);
        assert_eq!(acc.value(), 10.0);
    }

    #[test]
    fn normal_tails() {
        assert_eq!(two_sided_normal_p(0.0), 1.0);
        assert!((two_sided_normal_p(1.959963984540054) - 0.05).abs() < 1e-12);
        assert!((two_sided_normal_p(-1.959963984540054) - 0.05).abs() < 1e-12);
        // deep tail keeps relative precision
        let deep = two_sided_normal_p(30.0);
        assert!((deep / 9.813_427_854_296_374e-198 - 1.0).abs() < 1e-11);
    }

    #[test]
    fn chi2_median() {
        // median of chi2(1) = (Phi^{-1}(0.75))^2
        let q = normal_quantile(0.75);
        assert!((chi2_1_quantile(0.5) - q * q).abs() < 1e-9);
    }
}
