//! End-to-end replicate analyses: run every procedure on a simulated
//! dataset and score it against the truth.

use serde::{Deserialize, Serialize};

use crate::bayes_factor::{chi2_null_quantile, OmegaGrid};
use crate::error::{invalid, Error, Result};
use crate::fdr::{bh_decide, robust_decision, storey_decide, RejectionSet};
use crate::model::{EvalReport, Pi0Estimate, SimTruth, TestRecord, TruthParams};
use crate::numeric::two_sided_normal_p;
use crate::parallel::map_indices;
use crate::permutation::{add_one_pvalue, empirical_quantile, GeneStats, PreparedGene};
use crate::pi0::{ebf_pi0, qbf_pi0};
use crate::rng::substream_key;
use crate::simulation::{score, simulate_ii_gene, GeneData, SimIIConfig};

/// One procedure's result on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: String,
    pub pi0_hat: Option<f64>,
    pub eval: EvalReport,
}

fn bayes_outcome(
    name: String,
    records: &[TestRecord],
    pi0: &Pi0Estimate,
    alpha: f64,
    truth: &SimTruth,
) -> Result<MethodOutcome> {
    let (_, report) = robust_decision(records, pi0, alpha)?;
    Ok(MethodOutcome {
        method: name,
        pi0_hat: Some(pi0.pi0_hat),
        eval: score(&report.rejected, truth)?,
    })
}

fn frequentist_outcome(
    name: String,
    pi0_hat: Option<f64>,
    rejected: &RejectionSet,
    truth: &SimTruth,
) -> Result<MethodOutcome> {
    Ok(MethodOutcome {
        method: name,
        pi0_hat,
        eval: score(rejected, truth)?,
    })
}

/// Two-sided p-values of the records' z-statistics.
pub fn z_pvalues(records: &[TestRecord]) -> Result<Vec<(String, f64)>> {
    records
        .iter()
        .map(|r| {
            let z =
                r.z.ok_or_else(|| invalid(format!("record {} has no z statistic", r.id)))?;
            Ok((r.id.clone(), two_sided_normal_p(z)))
        })
        .collect()
}

/// Log null `gamma`-quantiles of the records' grid-averaged Bayes factors.
pub fn chi2_log_quantiles(
    records: &[TestRecord],
    grid: &OmegaGrid,
    gamma: f64,
) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            let se =
                r.se.ok_or_else(|| invalid(format!("record {} has no standard error", r.id)))?;
            Ok(chi2_null_quantile(se, grid, gamma)?.ln())
        })
        .collect()
}

/// EBF, QBF, Benjamini-Hochberg and Storey on a scenario I replicate.
pub fn evaluate_sim_i(
    records: &[TestRecord],
    truth: &SimTruth,
    grid: &OmegaGrid,
    alpha: f64,
    gamma: f64,
) -> Result<Vec<MethodOutcome>> {
    let bfs: Vec<f64> = records.iter().map(TestRecord::bf).collect();
    let ebf = ebf_pi0(&bfs)?;

    let log_bfs: Vec<f64> = records.iter().map(|r| r.log_bf).collect();
    let quantiles = chi2_log_quantiles(records, grid, gamma)?;
    let qbf = qbf_pi0(&log_bfs, &quantiles, gamma)?;

    let pvalues = z_pvalues(records)?;
    let bh = bh_decide(&pvalues, alpha)?;
    let (storey_pi0, storey) = storey_decide(&pvalues, gamma, alpha)?;

    Ok(vec![
        bayes_outcome("EBF".into(), records, &ebf, alpha, truth)?,
        bayes_outcome("QBF".into(), records, &qbf, alpha, truth)?,
        frequentist_outcome("BH".into(), None, &bh, truth)?,
        frequentist_outcome("Storey".into(), Some(storey_pi0.pi0_hat), &storey, truth)?,
    ])
}

/// Which permutation quantities to compute per gene.
///
/// Permutation runs are identified by their size: every run with `n`
/// permutations uses the seed derived from `(seed, n)`, so a quantile run and
/// a p-value run of the same size share their permutations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationDesign {
    pub seed: u64,
    pub gamma: f64,
    /// Permutation counts for QBF null quantiles.
    pub quantile_perms: Vec<usize>,
    /// Permutation count for gene-BF and min-p permutation p-values.
    pub pvalue_perms: Option<usize>,
}

impl PermutationDesign {
    pub fn plan_seed(&self, n_perms: usize) -> u64 {
        substream_key(self.seed, "plan", &n_perms.to_string())
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(invalid(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        for &n in self.quantile_perms.iter().chain(&self.pvalue_perms) {
            if n == 0 {
                return Err(invalid("permutation counts must be positive"));
            }
            if self.gamma * (n as f64 + 1.0) < 1.0 {
                return Err(invalid(format!(
                    "{n} permutations too few for gamma {}",
                    self.gamma
                )));
            }
        }
        Ok(())
    }
}

/// Observed and permutation-derived statistics of one gene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneSummary {
    pub id: String,
    pub alternative: bool,
    pub n_variants: usize,
    pub ln_bf: f64,
    pub min_p: f64,
    /// Log null quantiles, aligned with `PermutationDesign::quantile_perms`.
    pub ln_null_quantiles: Vec<f64>,
    pub p_bf: Option<f64>,
    pub p_minp: Option<f64>,
}

pub fn summarize_gene(
    gene: &GeneData,
    sigma: f64,
    grid: &OmegaGrid,
    design: &PermutationDesign,
) -> Result<GeneSummary> {
    let prepared = PreparedGene::new(&gene.genotypes, sigma, grid)?;
    let observed = prepared.stats(&gene.y)?;

    let mut runs: Vec<(usize, Vec<GeneStats>)> = Vec::new();
    let mut run_for = |n: usize| -> Result<usize> {
        if let Some(pos) = runs.iter().position(|(k, _)| *k == n) {
            return Ok(pos);
        }
        let stats = prepared.permuted_stats(&gene.y, &gene.id, design.plan_seed(n), n)?;
        runs.push((n, stats));
        Ok(runs.len() - 1)
    };

    let mut quantile_runs = Vec::with_capacity(design.quantile_perms.len());
    for &n in &design.quantile_perms {
        quantile_runs.push(run_for(n)?);
    }
    let pvalue_run = design.pvalue_perms.map(&mut run_for).transpose()?;

    let ln_null_quantiles = quantile_runs
        .iter()
        .map(|&r| {
            let ln: Vec<f64> = runs[r].1.iter().map(|s| s.ln_bf).collect();
            empirical_quantile(&ln, design.gamma)
        })
        .collect::<Result<Vec<_>>>()?;

    let (p_bf, p_minp) = match pvalue_run {
        Some(r) => {
            let stats = &runs[r].1;
            let bf: Vec<f64> = stats.iter().map(|s| s.ln_bf).collect();
            let minp: Vec<f64> = stats.iter().map(GeneStats::min_p).collect();
            (
                Some(add_one_pvalue(observed.ln_bf, &bf, true)),
                Some(add_one_pvalue(observed.min_p(), &minp, false)),
            )
        }
        None => (None, None),
    };

    Ok(GeneSummary {
        id: gene.id.clone(),
        alternative: gene.is_alternative(),
        n_variants: prepared.n_variants(),
        ln_bf: observed.ln_bf,
        min_p: observed.min_p(),
        ln_null_quantiles,
        p_bf,
        p_minp,
    })
}

/// Generates and summarizes every gene of a scenario II replicate, one gene
/// at a time, in parallel when enabled. Output order is gene order.
pub fn run_sim_ii(
    config: &SimIIConfig,
    grid: &OmegaGrid,
    design: &PermutationDesign,
) -> Result<Vec<GeneSummary>> {
    config.validate()?;
    design.validate()?;
    map_indices(config.m, |i| {
        let gene = simulate_ii_gene(config, i)?;
        summarize_gene(&gene, config.sigma, grid, design)
    })
    .into_iter()
    .collect()
}

pub fn summaries_truth(summaries: &[GeneSummary], config: &SimIIConfig) -> SimTruth {
    SimTruth {
        ids: summaries.iter().map(|s| s.id.clone()).collect(),
        z: summaries.iter().map(|s| s.alternative).collect(),
        params: TruthParams {
            pi0: config.pi0,
            n: config.n,
            phi_range: config.phi_range,
        },
    }
}

/// EBF, QBF for each quantile run, and the p-value baselines when present.
pub fn evaluate_sim_ii(
    summaries: &[GeneSummary],
    truth: &SimTruth,
    design: &PermutationDesign,
    alpha: f64,
) -> Result<Vec<MethodOutcome>> {
    if summaries.is_empty() {
        return Err(Error::Empty("gene summaries"));
    }
    let records: Vec<TestRecord> = summaries
        .iter()
        .map(|s| TestRecord::from_log_bf(s.id.clone(), s.ln_bf))
        .collect();
    let bfs: Vec<f64> = records.iter().map(TestRecord::bf).collect();
    let mut out = vec![bayes_outcome(
        "EBF".into(),
        &records,
        &ebf_pi0(&bfs)?,
        alpha,
        truth,
    )?];

    let log_bfs: Vec<f64> = summaries.iter().map(|s| s.ln_bf).collect();
    for (r, &n) in design.quantile_perms.iter().enumerate() {
        let q: Vec<f64> = summaries.iter().map(|s| s.ln_null_quantiles[r]).collect();
        let pi0 = qbf_pi0(&log_bfs, &q, design.gamma)?;
        out.push(bayes_outcome(
            format!("QBF({n})"),
            &records,
            &pi0,
            alpha,
            truth,
        )?);
    }

    if let Some(n) = design.pvalue_perms {
        type PvalueOf = fn(&GeneSummary) -> Option<f64>;
        let sources: [(&str, PvalueOf); 2] = [("p_bf", |s| s.p_bf), ("p_minp", |s| s.p_minp)];
        for (label, get) in sources {
            let p = summaries
                .iter()
                .map(|s| {
                    get(s)
                        .map(|p| (s.id.clone(), p))
                        .ok_or_else(|| invalid(format!("gene {} has no {label}", s.id)))
                })
                .collect::<Result<Vec<_>>>()?;
            let bh = bh_decide(&p, alpha)?;
            out.push(frequentist_outcome(
                format!("BH({label},{n})"),
                None,
                &bh,
                truth,
            )?);
            let (pi0, storey) = storey_decide(&p, design.gamma, alpha)?;
            out.push(frequentist_outcome(
                format!("Storey({label},{n})"),
                Some(pi0.pi0_hat),
                &storey,
                truth,
            )?);
        }
    }
    Ok(out)
}

/// Mean and range of one method's results across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub reps: usize,
    pub pi0_mean: Option<f64>,
    pub pi0_min: Option<f64>,
    pub pi0_max: Option<f64>,
    pub fdp_mean: f64,
    pub fdp_min: f64,
    pub fdp_max: f64,
    pub fnp_mean: f64,
    pub fnp_min: f64,
    pub fnp_max: f64,
}

fn mean_min_max(xs: &[f64]) -> (f64, f64, f64) {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, min, max)
}

/// Aggregates per-replicate outcomes by method name, in first-seen order.
pub fn aggregate(replicates: &[Vec<MethodOutcome>]) -> Vec<MethodSummary> {
    let mut names: Vec<&str> = Vec::new();
    for outcome in replicates.iter().flatten() {
        if !names.contains(&outcome.method.as_str()) {
            names.push(&outcome.method);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let rows: Vec<&MethodOutcome> = replicates
                .iter()
                .flatten()
                .filter(|o| o.method == name)
                .collect();
            let pi0: Vec<f64> = rows.iter().filter_map(|o| o.pi0_hat).collect();
            let (pi0_mean, pi0_min, pi0_max) = if pi0.is_empty() {
                (None, None, None)
            } else {
                let (a, b, c) = mean_min_max(&pi0);
                (Some(a), Some(b), Some(c))
            };
            let fdp: Vec<f64> = rows.iter().map(|o| o.eval.fdp).collect();
            let fnp: Vec<f64> = rows.iter().map(|o| o.eval.fnp).collect();
            let (fdp_mean, fdp_min, fdp_max) = mean_min_max(&fdp);
            let (fnp_mean, fnp_min, fnp_max) = mean_min_max(&fnp);
            MethodSummary {
                method: name.to_string(),
                reps: rows.len(),
                pi0_mean,
                pi0_min,
                pi0_max,
                fdp_mean,
                fdp_min,
                fdp_max,
                fnp_mean,
                fnp_min,
                fnp_max,
            }
        })
        .collect()
}
