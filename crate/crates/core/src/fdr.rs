//! Conservative posteriors, the Bayesian FDR threshold rule, and the
//! Benjamini-Hochberg / Storey q-value baselines.

use std::collections::BTreeSet;

use crate::error::{invalid, Result};
use crate::model::{
    validate_records, DecisionReport, Pi0Estimate, Pi0Method, PosteriorEntry, PosteriorTable,
    TestRecord,
};
use crate::pi0::{auto_reject_threshold, storey_pi0};

/// A set of rejected test ids.
pub type RejectionSet = BTreeSet<String>;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Posterior probability of the alternative and its complement, given the
/// null proportion and the log Bayes factor.
fn posterior(pi0_hat: f64, log_bf: f64) -> (f64, f64) {
    if pi0_hat >= 1.0 {
        return (0.0, 1.0);
    }
    if pi0_hat <= 0.0 {
        return (1.0, 0.0);
    }
    let log_odds = (-pi0_hat).ln_1p() - pi0_hat.ln() + log_bf;
    // evaluate whichever side is small directly so it keeps relative precision
    if log_odds >= 0.0 {
        let e = (-log_odds).exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    } else {
        let e = log_odds.exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    }
}

/// `v_i = (1 - pi0) BF_i / (pi0 + (1 - pi0) BF_i)` for every record.
pub fn posterior_table(records: &[TestRecord], pi0: &Pi0Estimate) -> Result<PosteriorTable> {
    if !(0.0..=1.0).contains(&pi0.pi0_hat) {
        return Err(invalid(format!(
            "pi0 must lie in [0, 1], got {}",
            pi0.pi0_hat
        )));
    }
    let records = validate_records(records.to_vec())?;
    let entries = records
        .into_iter()
        .map(|r| {
            let (v_hat, null_prob) = posterior(pi0.pi0_hat, r.log_bf);
            PosteriorEntry {
                id: r.id,
                v_hat,
                null_prob,
            }
        })
        .collect();
    Ok(PosteriorTable {
        entries,
        pi0: pi0.clone(),
    })
}

/// Rejects the largest upper level set of `v_hat` whose mean null
/// probability is at most `alpha`.
///
/// Tied `v_hat` values form blocks that are rejected or kept together. The
/// reported threshold is the `v_hat` of the best-ranked kept test (or 0 when
/// everything is rejected); any value in the gap gives the same decisions.
pub fn bfdr_decide(table: &PosteriorTable, alpha: f64) -> Result<DecisionReport> {
    check_alpha(alpha)?;
    let entries = &table.entries;
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        entries[b]
            .v_hat
            .total_cmp(&entries[a].v_hat)
            .then_with(|| entries[a].id.cmp(&entries[b].id))
    });

    let mut cut = 0;
    let mut cut_mean = 0.0;
    let mut null_mass = 0.0;
    let mut pos = 0;
    while pos < order.len() {
        let v = entries[order[pos]].v_hat;
        while pos < order.len() && entries[order[pos]].v_hat == v {
            null_mass += entries[order[pos]].null_prob;
            pos += 1;
        }
        let mean = null_mass / pos as f64;
        if mean <= alpha {
            cut = pos;
            cut_mean = mean;
        }
    }

    let threshold = match order.get(cut) {
        Some(&i) => entries[i].v_hat,
        None if entries.is_empty() => 1.0,
        None => 0.0,
    };
    let rejected = order[..cut]
        .iter()
        .map(|&i| entries[i].id.clone())
        .collect();
    Ok(DecisionReport {
        alpha,
        threshold,
        rejected,
        estimated_bfdr: if cut == 0 { 0.0 } else { cut_mean },
        auto_rejected: BTreeSet::new(),
    })
}

/// Storey q-values `q(p_(i)) = min_{j >= i} pi0 * m * p_(j) / j`, aligned
/// with the input order. With `pi0 = 1` these are the Benjamini-Hochberg
/// adjusted p-values.
pub fn qvalues(pvalues: &[f64], pi0: f64) -> Result<Vec<f64>> {
    if let Some(bad) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(invalid(format!("p-values must lie in [0, 1], got {bad}")));
    }
    if !(0.0..=1.0).contains(&pi0) {
        return Err(invalid(format!("pi0 must lie in [0, 1], got {pi0}")));
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let mut q = vec![0.0; m];
    let mut running = f64::INFINITY;
    for (rank, &i) in order.iter().enumerate().rev() {
        let candidate = pi0 * pvalues[i] * m as f64 / (rank + 1) as f64;
        running = running.min(candidate);
        q[i] = running.min(1.0);
    }
    Ok(q)
}

fn step_up(pvalues: &[(String, f64)], pi0: f64, alpha: f64) -> Result<RejectionSet> {
    check_alpha(alpha)?;
    let p: Vec<f64> = pvalues.iter().map(|(_, p)| *p).collect();
    // validates the inputs; the cut itself is compared without dividing
    qvalues(&p, pi0)?;
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let cut = (1..=m)
        .rev()
        .find(|&k| pi0 * p[order[k - 1]] * m as f64 <= alpha * k as f64)
        .unwrap_or(0);
    Ok(order[..cut].iter().map(|&i| pvalues[i].0.clone()).collect())
}

/// Benjamini-Hochberg step-up rejections.
pub fn bh_decide(pvalues: &[(String, f64)], alpha: f64) -> Result<RejectionSet> {
    step_up(pvalues, 1.0, alpha)
}

/// Storey q-value rejections with `pi0` from [`storey_pi0`].
pub fn storey_decide(
    pvalues: &[(String, f64)],
    gamma: f64,
    alpha: f64,
) -> Result<(Pi0Estimate, RejectionSet)> {
    let p: Vec<f64> = pvalues.iter().map(|(_, p)| *p).collect();
    let pi0 = storey_pi0(&p, gamma)?;
    let rejected = step_up(pvalues, pi0.pi0_hat, alpha)?;
    Ok((pi0, rejected))
}

/// q-value rejections at a caller-supplied null proportion.
pub fn storey_decide_with_pi0(
    pvalues: &[(String, f64)],
    pi0: f64,
    alpha: f64,
) -> Result<RejectionSet> {
    step_up(pvalues, pi0, alpha)
}

/// Adds every record with `bf >= m / alpha` to the rejection set and lists
/// it under `auto_rejected`.
pub fn apply_auto_reject(
    mut report: DecisionReport,
    records: &[TestRecord],
    m: usize,
    alpha: f64,
) -> DecisionReport {
    let level = auto_reject_threshold(m, alpha);
    for record in records {
        if record.bf() >= level {
            report.rejected.insert(record.id.clone());
            report.auto_rejected.insert(record.id.clone());
        }
    }
    report
}

/// Conservative posterior table and Bayesian FDR decisions for `records`
/// under `pi0`. EBF estimates additionally get the `m / alpha` automatic
/// rejections.
pub fn robust_decision(
    records: &[TestRecord],
    pi0: &Pi0Estimate,
    alpha: f64,
) -> Result<(PosteriorTable, DecisionReport)> {
    let table = posterior_table(records, pi0)?;
    let mut report = bfdr_decide(&table, alpha)?;
    if pi0.method == Pi0Method::Ebf {
        report = apply_auto_reject(report, records, records.len(), alpha);
    }
    Ok((table, report))
}
