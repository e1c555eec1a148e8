//! Analytic Bayes factors for the simple linear-regression association test.
//!
//! With a flat prior on the intercept and `beta ~ N(0, omega^2)`, the Bayes
//! factor of the alternative against `beta = 0` depends on the data only
//! through `z = beta_hat / u` and `u = se(beta_hat)`:
//!
//! ```text
//! BF(omega) = sqrt(u^2 / (omega^2 + u^2)) * exp(z^2 / 2 * omega^2 / (omega^2 + u^2))
//! ```
//!
//! Model averaging over a grid of `omega` values and over candidate variants
//! are both plain arithmetic means of Bayes factors; they are evaluated in
//! the log domain so that very strong signals do not overflow.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{chi2_1_quantile, log_mean_exp, CompensatedSum};

/// Largest log value whose exponential is finite.
pub(crate) const LN_F64_MAX: f64 = 709.782712893384;

/// A Bayes factor stored by its natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BayesFactor(f64);

impl BayesFactor {
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(invalid(format!(
                "bayes factor must be positive and finite, got {value}"
            )));
        }
        Ok(Self(value.ln()))
    }

    pub fn from_ln(ln: f64) -> Self {
        Self(ln)
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    /// Natural-scale value; `+inf` once it exceeds the f64 range.
    pub fn value(self) -> f64 {
        self.0.exp()
    }
}

/// Prior standard deviations of the effect size, averaged uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaGrid(Vec<f64>);

impl OmegaGrid {
    pub fn new(omegas: Vec<f64>) -> Result<Self> {
        if omegas.is_empty() {
            return Err(Error::Empty("omega grid"));
        }
        if let Some(bad) = omegas.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(invalid(format!("omega values must be positive, got {bad}")));
        }
        Ok(Self(omegas))
    }

    pub fn omegas(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for OmegaGrid {
    fn default() -> Self {
        Self(vec![0.1, 0.2, 0.4, 0.8, 1.6])
    }
}

fn check_stats(z: f64, se: f64) -> Result<()> {
    if !z.is_finite() {
        return Err(invalid(format!("z must be finite, got {z}")));
    }
    if !(se > 0.0 && se.is_finite()) {
        return Err(invalid(format!("se must be positive and finite, got {se}")));
    }
    Ok(())
}

fn ln_bf_cox_unchecked(z: f64, se: f64, omega: f64) -> f64 {
    let u2 = se * se;
    let w2 = omega * omega;
    let denom = w2 + u2;
    0.5 * (u2 / denom).ln() + 0.5 * z * z * (w2 / denom)
}

/// Single-`omega` Bayes factor for a regression slope.
pub fn bf_cox(z: f64, se: f64, omega: f64) -> Result<BayesFactor> {
    check_stats(z, se)?;
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(invalid(format!("omega must be positive, got {omega}")));
    }
    Ok(BayesFactor(ln_bf_cox_unchecked(z, se, omega)))
}

/// Grid-averaged Bayes factor.
pub fn bf_averaged(z: f64, se: f64, grid: &OmegaGrid) -> Result<BayesFactor> {
    check_stats(z, se)?;
    Ok(BayesFactor(CoxKernel::new(se, grid).ln_bf(z)))
}

/// Precomputed per-`omega` terms for a fixed standard error, so that many
/// z values (e.g. permutations) can be scored cheaply.
#[derive(Debug, Clone)]
pub(crate) struct CoxKernel {
    half_log_ratio: Vec<f64>,
    shrink: Vec<f64>,
    max_shrink: f64,
    ln_len: f64,
}

impl CoxKernel {
    pub(crate) fn new(se: f64, grid: &OmegaGrid) -> Self {
        let u2 = se * se;
        let (half_log_ratio, shrink): (Vec<f64>, Vec<f64>) = grid
            .omegas()
            .iter()
            .map(|w| {
                let denom = w * w + u2;
                (0.5 * (u2 / denom).ln(), 0.5 * (w * w / denom))
            })
            .unzip();
        let max_shrink = shrink.iter().copied().fold(0.0, f64::max);
        Self {
            half_log_ratio,
            shrink,
            max_shrink,
            ln_len: (grid.len() as f64).ln(),
        }
    }

    /// `sum_l BF(omega_l)` at `z`, or `None` when a term could overflow.
    pub(crate) fn natural_sum(&self, z: f64) -> Option<f64> {
        let z2 = z * z;
        if z2 * self.max_shrink >= 600.0 {
            return None;
        }
        Some(
            self.half_log_ratio
                .iter()
                .zip(&self.shrink)
                .map(|(a, b)| (a + b * z2).exp())
                .sum(),
        )
    }

    /// Log of the grid-averaged Bayes factor at `z`.
    pub(crate) fn ln_bf(&self, z: f64) -> f64 {
        match self.natural_sum(z) {
            Some(sum) => sum.ln() - self.ln_len,
            None => {
                let z2 = z * z;
                let terms: Vec<f64> = self
                    .half_log_ratio
                    .iter()
                    .zip(&self.shrink)
                    .map(|(a, b)| a + b * z2)
                    .collect();
                log_mean_exp(&terms)
            }
        }
    }
}

/// Gene-level Bayes factor: the arithmetic mean over candidate variants.
pub fn bf_gene(variant_bfs: &[BayesFactor]) -> Result<BayesFactor> {
    if variant_bfs.is_empty() {
        return Err(Error::Empty("variant Bayes factors"));
    }
    if let Some(bad) = variant_bfs.iter().find(|b| b.0.is_nan()) {
        return Err(invalid(format!("invalid variant Bayes factor {bad:?}")));
    }
    let logs: Vec<f64> = variant_bfs.iter().map(|b| b.0).collect();
    Ok(BayesFactor(ln_mean_of_bfs(&logs)))
}

/// Log of the mean of `exp(logs)`: plain compensated mean while every term is
/// representable, log-sum-exp otherwise.
pub(crate) fn ln_mean_of_bfs(logs: &[f64]) -> f64 {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max < LN_F64_MAX - 20.0 {
        let mut acc = CompensatedSum::new();
        for &l in logs {
            acc.add(l.exp());
        }
        (acc.value() / logs.len() as f64).ln()
    } else {
        log_mean_exp(logs)
    }
}

/// How the residual standard deviation of a regression is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ResidualScale {
    /// Known residual standard deviation.
    Known(f64),
    /// `sqrt(RSS / (n - 2))` from the fitted simple regression.
    Estimated,
}

impl Default for ResidualScale {
    fn default() -> Self {
        ResidualScale::Known(1.0)
    }
}

/// Least-squares summary of a simple regression with intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionBf {
    pub beta_hat: f64,
    pub se: f64,
    pub z: f64,
    pub bf: BayesFactor,
}

/// Fits `y = mu + beta * g + e` and scores the slope with [`bf_averaged`].
pub fn bf_from_regression(
    y: &[f64],
    g: &[f64],
    scale: ResidualScale,
    grid: &OmegaGrid,
) -> Result<RegressionBf> {
    if y.len() != g.len() {
        return Err(Error::LengthMismatch {
            what: "phenotype vs genotype",
            left: y.len(),
            right: g.len(),
        });
    }
    let n = y.len();
    if n < 3 {
        return Err(invalid(format!("need at least 3 observations, got {n}")));
    }
    if y.iter().chain(g).any(|v| !v.is_finite()) {
        return Err(invalid("non-finite value in regression input"));
    }
    let mean_g = g.iter().sum::<f64>() / n as f64;
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&gi, &yi) in g.iter().zip(y) {
        let dg = gi - mean_g;
        sxx += dg * dg;
        sxy += dg * (yi - mean_y);
    }
    if sxx <= 0.0 || sxx < 1e-12 * n as f64 {
        return Err(Error::DegenerateGenotypes);
    }
    let beta_hat = sxy / sxx;
    let sigma = match scale {
        ResidualScale::Known(sigma) => {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(invalid(format!("sigma must be positive, got {sigma}")));
            }
            sigma
        }
        ResidualScale::Estimated => {
            let rss: f64 = g
                .iter()
                .zip(y)
                .map(|(&gi, &yi)| {
                    let r = yi - mean_y - beta_hat * (gi - mean_g);
                    r * r
                })
                .sum();
            let s = (rss / (n as f64 - 2.0)).sqrt();
            if s.is_nan() || s <= 0.0 {
                return Err(Error::Numerical("zero residual variance".into()));
            }
            s
        }
    };
    let se = sigma / sxx.sqrt();
    let z = beta_hat / se;
    let bf = bf_averaged(z, se, grid)?;
    Ok(RegressionBf {
        beta_hat,
        se,
        z,
        bf,
    })
}

/// Null `gamma`-quantile of the grid-averaged Bayes factor for a test with
/// standard error `se`.
///
/// Under the null `z ~ N(0, 1)`, and the averaged Bayes factor is increasing
/// in `z^2`, so its quantile is the Bayes factor evaluated at the
/// chi-square(1) quantile of `z^2`. Comparing `bf <= q` is therefore the same
/// event as the two-sided p-value of `z` exceeding `1 - gamma`.
pub fn chi2_null_quantile(se: f64, grid: &OmegaGrid, gamma: f64) -> Result<BayesFactor> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let z = chi2_1_quantile(gamma).sqrt();
    bf_averaged(z, se, grid)
}
