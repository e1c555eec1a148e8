//! Upper-bound estimators of the null proportion.
//!
//! * EBF: the longest ascending prefix of Bayes factors whose mean stays
//!   below one. Under the null a Bayes factor has expectation one, so null
//!   tests alone can sustain such a prefix.
//! * QBF: the fraction of Bayes factors at or below their null
//!   `gamma`-quantile, divided by `gamma`.
//! * Storey: the same count expressed through p-values, `#{p > 1 - gamma}`.

use crate::error::{invalid, Error, Result};
use crate::model::{Pi0Estimate, Pi0Method};
use crate::numeric::CompensatedSum;

/// Default `gamma` for the quantile-based estimators.
pub const DEFAULT_GAMMA: f64 = 0.5;

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("gamma must lie in (0, 1), got {gamma}")))
    }
}

/// EBF estimate from natural-scale Bayes factors.
///
/// `+inf` marks a Bayes factor beyond the f64 range; any prefix containing
/// one has mean at least one. When even the smallest factor is `>= 1` the
/// result is `d0 = 0`, `pi0_hat = 0` (see [`Pi0Estimate::is_degenerate_ebf`]).
pub fn ebf_pi0(bfs: &[f64]) -> Result<Pi0Estimate> {
    if bfs.is_empty() {
        return Err(Error::Empty("Bayes factors"));
    }
    if let Some(bad) = bfs.iter().find(|b| b.is_nan() || **b <= 0.0) {
        return Err(invalid(format!(
            "Bayes factors must be positive, got {bad}"
        )));
    }
    let mut sorted = bfs.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);

    let mut acc = CompensatedSum::new();
    let mut d0 = 0;
    for (i, &bf) in sorted.iter().enumerate() {
        if bf == f64::INFINITY {
            break;
        }
        acc.add(bf);
        let sum = acc.value();
        if !sum.is_finite() {
            break;
        }
        let d = i + 1;
        if sum / (d as f64) < 1.0 {
            d0 = d;
        }
    }
    Ok(Pi0Estimate::ebf(d0, bfs.len()))
}

/// QBF estimate `min(1, #{bf_i <= q_i} / (m * gamma))`.
///
/// Only the comparison `bf_i <= q_i` is used, so both slices may be given on
/// any common increasing scale (natural or log).
pub fn qbf_pi0(bfs: &[f64], null_quantiles: &[f64], gamma: f64) -> Result<Pi0Estimate> {
    check_gamma(gamma)?;
    if bfs.len() != null_quantiles.len() {
        return Err(Error::LengthMismatch {
            what: "Bayes factors vs null quantiles",
            left: bfs.len(),
            right: null_quantiles.len(),
        });
    }
    if bfs.is_empty() {
        return Err(Error::Empty("Bayes factors"));
    }
    if bfs.iter().chain(null_quantiles).any(|v| v.is_nan()) {
        return Err(invalid("NaN in QBF input"));
    }
    let count = bfs
        .iter()
        .zip(null_quantiles)
        .filter(|(bf, q)| bf <= q)
        .count();
    Ok(Pi0Estimate::from_count(
        Pi0Method::Qbf,
        count,
        bfs.len(),
        gamma,
    ))
}

/// Storey's estimate `min(1, #{p_i > 1 - gamma} / (m * gamma))`.
pub fn storey_pi0(pvalues: &[f64], gamma: f64) -> Result<Pi0Estimate> {
    check_gamma(gamma)?;
    if pvalues.is_empty() {
        return Err(Error::Empty("p-values"));
    }
    if let Some(bad) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(invalid(format!("p-values must lie in [0, 1], got {bad}")));
    }
    let cut = 1.0 - gamma;
    let count = pvalues.iter().filter(|&&p| p > cut).count();
    Ok(Pi0Estimate::from_count(
        Pi0Method::Storey,
        count,
        pvalues.len(),
        gamma,
    ))
}

/// Bayes factor level `m / alpha` above which EBF rejects unconditionally.
pub fn auto_reject_threshold(m: usize, alpha: f64) -> f64 {
    m as f64 / alpha
}
