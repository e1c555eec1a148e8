//! Robust Bayesian false discovery rate control driven by Bayes factors.
//!
//! The pipeline is: compute a Bayes factor per test ([`bayes_factor`]),
//! bound the null proportion from above ([`pi0`]), turn both into
//! conservative posteriors and threshold them ([`fdr`]). [`permutation`]
//! calibrates gene-level statistics whose null distribution is unknown, and
//! [`simulation`] / [`experiment`] generate data with known truth to score
//! the procedures against Benjamini-Hochberg and Storey q-values.

pub mod bayes_factor;
pub mod error;
pub mod experiment;
pub mod fdr;
pub mod model;
pub mod numeric;
mod parallel;
pub mod permutation;
pub mod pi0;
pub mod rng;
pub mod simulation;

pub use bayes_factor::{
    bf_averaged, bf_cox, bf_from_regression, bf_gene, chi2_null_quantile, BayesFactor, OmegaGrid,
    RegressionBf, ResidualScale,
};
pub use error::{Error, Result};
pub use fdr::{
    apply_auto_reject, bfdr_decide, bh_decide, posterior_table, qvalues, robust_decision,
    storey_decide, storey_decide_with_pi0, RejectionSet,
};
pub use model::{
    validate_records, DecisionReport, EvalReport, Pi0Estimate, Pi0Method, PosteriorEntry,
    PosteriorTable, SimTruth, TestRecord, TruthParams,
};
pub use permutation::{
    gene_bf, min_p_statistic, permutation_pvalue, permute_null_quantile, GenotypeMatrix,
    PermutationPlan, Statistic,
};
pub use pi0::{auto_reject_threshold, ebf_pi0, qbf_pi0, storey_pi0, DEFAULT_GAMMA};
pub use simulation::{score, simulate_i, simulate_ii, GeneData, SimIConfig, SimIIConfig};
