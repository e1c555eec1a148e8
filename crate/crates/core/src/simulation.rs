//! Synthetic eQTL association data with known truth, and FDP/FNP scoring.
//!
//! Scenario I: one variant per test, `y = mu + beta g + e`, genotypes
//! `Binomial(2, f)` with `f ~ U[maf]`, and under the alternative
//! `beta ~ N(0, phi^2)` with `phi ~ U[phi_range]`.
//!
//! Scenario II: `k` correlated candidate variants per gene, one to five of
//! them causal under the alternative. Linkage disequilibrium comes from a
//! Gaussian copula: each haplotype carries a latent AR(1) sequence with
//! adjacent correlation `ld_decay`, thresholded at the allele frequency.
//!
//! Every test draws from its own generator substream, so datasets are
//! reproducible bit-for-bit and independent of thread count.

use std::collections::{BTreeSet, HashMap};

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bayes_factor::{bf_from_regression, OmegaGrid, ResidualScale};
use crate::error::{invalid, Error, Result};
use crate::model::{EvalReport, SimTruth, TestRecord, TruthParams};
use crate::numeric::normal_quantile;
use crate::parallel::map_indices;
use crate::permutation::GenotypeMatrix;
use crate::rng::substream;

const MAX_GENOTYPE_REDRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimIConfig {
    pub m: usize,
    pub n: usize,
    pub pi0: f64,
    pub mu: f64,
    pub sigma: f64,
    pub phi_range: (f64, f64),
    pub maf_range: (f64, f64),
    pub seed: u64,
    pub grid: OmegaGrid,
}

impl Default for SimIConfig {
    fn default() -> Self {
        Self {
            m: 10_000,
            n: 100,
            pi0: 0.9,
            mu: 1.0,
            sigma: 1.0,
            phi_range: (0.5, 1.5),
            maf_range: (0.05, 0.5),
            seed: 0,
            grid: OmegaGrid::default(),
        }
    }
}

fn check_common(
    m: usize,
    n: usize,
    pi0: f64,
    sigma: f64,
    phi: (f64, f64),
    maf: (f64, f64),
) -> Result<()> {
    if m == 0 {
        return Err(invalid("m must be positive"));
    }
    if n < 3 {
        return Err(invalid(format!("sample size must be at least 3, got {n}")));
    }
    if !(0.0..=1.0).contains(&pi0) {
        return Err(invalid(format!("pi0 must lie in [0, 1], got {pi0}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("sigma must be positive, got {sigma}")));
    }
    if !(phi.0 > 0.0 && phi.0 <= phi.1 && phi.1.is_finite()) {
        return Err(invalid(format!("invalid phi range {phi:?}")));
    }
    if !(maf.0 > 0.0 && maf.0 <= maf.1 && maf.1 <= 0.5) {
        return Err(invalid(format!("invalid allele frequency range {maf:?}")));
    }
    Ok(())
}

impl SimIConfig {
    pub fn validate(&self) -> Result<()> {
        check_common(
            self.m,
            self.n,
            self.pi0,
            self.sigma,
            self.phi_range,
            self.maf_range,
        )
    }
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..range.1)
    }
}

fn is_constant(values: &[f64]) -> bool {
    values.iter().all(|&v| v == values[0])
}

fn test_id(prefix: &str, i: usize) -> String {
    format!("{prefix}{:05}", i + 1)
}

fn draw_effect(rng: &mut ChaCha8Rng, phi_range: (f64, f64)) -> f64 {
    let phi = uniform(rng, phi_range);
    Normal::new(0.0, phi).expect("positive phi").sample(rng)
}

fn draw_phenotype(
    rng: &mut ChaCha8Rng,
    mu: f64,
    sigma: f64,
    signal: impl Fn(usize) -> f64,
    n: usize,
) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let e: f64 = StandardNormal.sample(rng);
            mu + signal(i) + sigma * e
        })
        .collect()
}

fn sim_i_test(config: &SimIConfig, i: usize) -> Result<(TestRecord, bool)> {
    let id = test_id("test", i);
    let mut rng = substream(config.seed, "sim1", &id, 0);
    let alternative = rng.random::<f64>() < 1.0 - config.pi0;
    let f = uniform(&mut rng, config.maf_range);
    let beta = if alternative {
        draw_effect(&mut rng, config.phi_range)
    } else {
        0.0
    };
    let mut g = vec![0.0; config.n];
    let mut redraws = 0;
    loop {
        for gi in g.iter_mut() {
            let a = (rng.random::<f64>() < f) as u8 + (rng.random::<f64>() < f) as u8;
            *gi = f64::from(a);
        }
        if !is_constant(&g) {
            break;
        }
        redraws += 1;
        if redraws >= MAX_GENOTYPE_REDRAWS {
            return Err(Error::Numerical(format!("{id}: genotypes stayed constant")));
        }
    }
    let y = draw_phenotype(&mut rng, config.mu, config.sigma, |j| beta * g[j], config.n);
    let fit = bf_from_regression(&y, &g, ResidualScale::Known(config.sigma), &config.grid)?;
    let record = TestRecord::from_log_bf(id, fit.bf.ln()).with_stats(fit.z, fit.se);
    Ok((record, alternative))
}

/// Scenario I dataset: one record per test plus the alternative indicators.
pub fn simulate_i(config: &SimIConfig) -> Result<(Vec<TestRecord>, SimTruth)> {
    config.validate()?;
    let results = map_indices(config.m, |i| sim_i_test(config, i));
    let mut records = Vec::with_capacity(config.m);
    let mut z = Vec::with_capacity(config.m);
    for r in results {
        let (record, alt) = r?;
        records.push(record);
        z.push(alt);
    }
    let truth = SimTruth {
        ids: records.iter().map(|r| r.id.clone()).collect(),
        z,
        params: TruthParams {
            pi0: config.pi0,
            n: config.n,
            phi_range: config.phi_range,
        },
    };
    Ok((records, truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimIIConfig {
    pub m: usize,
    pub n: usize,
    pub pi0: f64,
    pub mu: f64,
    pub sigma: f64,
    pub phi_range: (f64, f64),
    pub maf_range: (f64, f64),
    pub seed: u64,
    /// Candidate variants per gene, inclusive.
    pub k_range: (usize, usize),
    /// Causal variants per alternative gene, inclusive; capped at `k`.
    pub n_causal_range: (usize, usize),
    /// Latent correlation between adjacent variants.
    pub ld_decay: f64,
}

impl Default for SimIIConfig {
    fn default() -> Self {
        Self {
            m: 10_000,
            n: 85,
            pi0: 0.9,
            mu: 1.0,
            sigma: 1.0,
            phi_range: (0.5, 1.5),
            maf_range: (0.05, 0.5),
            seed: 0,
            k_range: (40, 120),
            n_causal_range: (1, 5),
            ld_decay: 0.5,
        }
    }
}

impl SimIIConfig {
    pub fn validate(&self) -> Result<()> {
        check_common(
            self.m,
            self.n,
            self.pi0,
            self.sigma,
            self.phi_range,
            self.maf_range,
        )?;
        let (klo, khi) = self.k_range;
        if klo == 0 || klo > khi {
            return Err(invalid(format!(
                "invalid variant count range {:?}",
                self.k_range
            )));
        }
        let (clo, chi) = self.n_causal_range;
        if clo == 0 || clo > chi || clo > klo {
            return Err(invalid(format!(
                "invalid causal count range {:?} for variant range {:?}",
                self.n_causal_range, self.k_range
            )));
        }
        if !(0.0..=1.0).contains(&self.ld_decay) {
            return Err(invalid(format!(
                "ld_decay must lie in [0, 1], got {}",
                self.ld_decay
            )));
        }
        Ok(())
    }
}

/// Phenotype and candidate-variant genotypes of one simulated gene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneData {
    pub id: String,
    pub y: Vec<f64>,
    pub genotypes: GenotypeMatrix,
    /// Indices of causal variants; empty under the null.
    pub causal: Vec<usize>,
}

impl GeneData {
    pub fn is_alternative(&self) -> bool {
        !self.causal.is_empty()
    }
}

/// Allele dosages for `n` individuals at `k` variants with latent AR(1)
/// correlation `rho` along each haplotype. Column-major.
#[allow(clippy::needless_range_loop)]
fn draw_ld_genotypes(
    rng: &mut ChaCha8Rng,
    n: usize,
    thresholds: &[f64],
    rho: f64,
) -> Vec<Vec<f64>> {
    let k = thresholds.len();
    let innovation = (1.0 - rho * rho).max(0.0).sqrt();
    let mut columns = vec![vec![0.0; n]; k];
    for i in 0..n {
        for _ in 0..2 {
            let mut x: f64 = StandardNormal.sample(rng);
            for (j, &t) in thresholds.iter().enumerate() {
                if j > 0 {
                    let e: f64 = StandardNormal.sample(rng);
                    x = rho * x + innovation * e;
                }
                if x < t {
                    columns[j][i] += 1.0;
                }
            }
        }
    }
    columns
}

/// Generates gene `index` of a scenario II dataset.
pub fn simulate_ii_gene(config: &SimIIConfig, index: usize) -> Result<GeneData> {
    let id = test_id("gene", index);
    let mut rng = substream(config.seed, "sim2", &id, 0);
    let alternative = rng.random::<f64>() < 1.0 - config.pi0;
    let k = rng.random_range(config.k_range.0..=config.k_range.1);
    let thresholds: Vec<f64> = (0..k)
        .map(|_| normal_quantile(uniform(&mut rng, config.maf_range)))
        .collect();
    let mut redraws = 0;
    let columns = loop {
        let cols = draw_ld_genotypes(&mut rng, config.n, &thresholds, config.ld_decay);
        if !cols.iter().any(|c| is_constant(c)) {
            break cols;
        }
        redraws += 1;
        if redraws >= MAX_GENOTYPE_REDRAWS {
            return Err(Error::Numerical(format!("{id}: genotypes stayed constant")));
        }
    };
    let causal = if alternative {
        let hi = config.n_causal_range.1.min(k);
        let count = rng.random_range(config.n_causal_range.0..=hi);
        let mut picked = index::sample(&mut rng, k, count).into_vec();
        picked.sort_unstable();
        picked
    } else {
        Vec::new()
    };
    let effects: Vec<(usize, f64)> = causal
        .iter()
        .map(|&j| (j, draw_effect(&mut rng, config.phi_range)))
        .collect();
    let y = draw_phenotype(
        &mut rng,
        config.mu,
        config.sigma,
        |i| effects.iter().map(|&(j, b)| b * columns[j][i]).sum(),
        config.n,
    );
    Ok(GeneData {
        id,
        y,
        genotypes: GenotypeMatrix::from_columns(columns)?,
        causal,
    })
}

/// Scenario II dataset held fully in memory.
pub fn simulate_ii(config: &SimIIConfig) -> Result<(Vec<GeneData>, SimTruth)> {
    config.validate()?;
    let genes = map_indices(config.m, |i| simulate_ii_gene(config, i))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let truth = SimTruth {
        ids: genes.iter().map(|g| g.id.clone()).collect(),
        z: genes.iter().map(GeneData::is_alternative).collect(),
        params: TruthParams {
            pi0: config.pi0,
            n: config.n,
            phi_range: config.phi_range,
        },
    };
    Ok((genes, truth))
}

/// Realized FDP and FNP of a rejection set; both use the `max(1, .)`
/// denominator convention.
pub fn score(rejected: &BTreeSet<String>, truth: &SimTruth) -> Result<EvalReport> {
    let index: HashMap<&str, usize> = truth
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut mask = vec![false; truth.len()];
    for id in rejected {
        let &i = index
            .get(id.as_str())
            .ok_or_else(|| Error::UnknownId(id.clone()))?;
        mask[i] = true;
    }
    Ok(score_mask(&mask, &truth.z))
}

pub(crate) fn score_mask(rejected: &[bool], alternative: &[bool]) -> EvalReport {
    let mut false_disc = 0;
    let mut n_rejected = 0;
    let mut missed = 0;
    let mut n_true_alt = 0;
    for (&r, &alt) in rejected.iter().zip(alternative) {
        n_rejected += r as usize;
        n_true_alt += alt as usize;
        false_disc += (r && !alt) as usize;
        missed += (!r && alt) as usize;
    }
    let kept = rejected.len() - n_rejected;
    EvalReport {
        fdp: false_disc as f64 / n_rejected.max(1) as f64,
        fnp: missed as f64 / kept.max(1) as f64,
        n_rejected,
        n_true_alt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_i(pi0: f64) -> SimIConfig {
        SimIConfig {
            m: 300,
            n: 50,
            pi0,
            seed: 3,
            ..SimIConfig::default()
        }
    }

    fn small_ii(pi0: f64) -> SimIIConfig {
        SimIIConfig {
            m: 40,
            n: 40,
            pi0,
            seed: 5,
            k_range: (5, 12),
            ..SimIIConfig::default()
        }
    }

    #[test]
    fn pure_null_and_pure_alternative() {
        let (_, truth) = simulate_i(&small_i(1.0)).unwrap();
        assert!(truth.z.iter().all(|&z| !z));
        let (_, truth) = simulate_i(&small_i(0.0)).unwrap();
        assert!(truth.z.iter().all(|&z| z));
    }

    #[test]
    fn records_carry_regression_stats() {
        let (records, truth) = simulate_i(&small_i(0.5)).unwrap();
        assert_eq!(records.len(), 300);
        assert_eq!(truth.ids.len(), 300);
        for r in &records {
            assert!(r.z.unwrap().is_finite());
            assert!(r.se.unwrap() > 0.0);
            assert!(r.log_bf.is_finite());
        }
    }

    #[test]
    fn sim_i_is_reproducible() {
        let a = simulate_i(&small_i(0.7)).unwrap();
        let b = simulate_i(&small_i(0.7)).unwrap();
        assert_eq!(a, b);
        let c = simulate_i(&SimIConfig {
            seed: 4,
            ..small_i(0.7)
        })
        .unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(simulate_i(&SimIConfig {
            n: 2,
            ..small_i(0.5)
        })
        .is_err());
        assert!(simulate_i(&SimIConfig {
            maf_range: (0.3, 0.1),
            ..small_i(0.5)
        })
        .is_err());
        assert!(simulate_ii(&SimIIConfig {
            n_causal_range: (0, 2),
            ..small_ii(0.5)
        })
        .is_err());
        assert!(simulate_ii(&SimIIConfig {
            k_range: (3, 12),
            n_causal_range: (4, 5),
            ..small_ii(0.5)
        })
        .is_err());
    }

    #[test]
    fn sim_ii_pure_null_has_no_causal_variants() {
        let (genes, truth) = simulate_ii(&small_ii(1.0)).unwrap();
        assert!(genes.iter().all(|g| g.causal.is_empty()));
        assert_eq!(truth.n_alternative(), 0);
    }

    #[test]
    fn sim_ii_gene_shapes() {
        let cfg = small_ii(0.0);
        let (genes, _) = simulate_ii(&cfg).unwrap();
        for g in &genes {
            let k = g.genotypes.n_variants();
            assert!((5..=12).contains(&k));
            assert!((1..=5).contains(&g.causal.len()));
            assert!(g.causal.iter().all(|&j| j < k));
            assert_eq!(g.y.len(), 40);
            for col in g.genotypes.columns() {
                assert!(col.iter().all(|&d| d == 0.0 || d == 1.0 || d == 2.0));
                assert!(!is_constant(col));
            }
        }
    }

    #[test]
    fn sim_ii_single_causal_no_ld() {
        let cfg = SimIIConfig {
            n_causal_range: (1, 1),
            ld_decay: 0.0,
            pi0: 0.0,
            ..small_ii(0.0)
        };
        let (genes, _) = simulate_ii(&cfg).unwrap();
        assert!(genes.iter().all(|g| g.causal.len() == 1));
    }

    #[test]
    fn sim_ii_gene_streams_are_independent_of_m() {
        let cfg = small_ii(0.5);
        let (genes, _) = simulate_ii(&cfg).unwrap();
        let again = simulate_ii_gene(
            &SimIIConfig {
                m: 1000,
                ..cfg.clone()
            },
            7,
        )
        .unwrap();
        assert_eq!(genes[7], again);
    }

    fn truth(z: &[bool]) -> SimTruth {
        SimTruth {
            ids: (0..z.len()).map(|i| format!("t{i}")).collect(),
            z: z.to_vec(),
            params: TruthParams {
                pi0: 0.5,
                n: 10,
                phi_range: (0.5, 1.5),
            },
        }
    }

    fn set(ids: &[usize]) -> BTreeSet<String> {
        ids.iter().map(|i| format!("t{i}")).collect()
    }

    #[test]
    fn score_exact_alternatives() {
        let t = truth(&[true, false, true, false]);
        let r = score(&set(&[0, 2]), &t).unwrap();
        assert_eq!((r.fdp, r.fnp, r.n_rejected, r.n_true_alt), (0.0, 0.0, 2, 2));
    }

    #[test]
    fn score_nothing_rejected() {
        let mut z = vec![false; 100];
        z[..15].iter_mut().for_each(|v| *v = true);
        let r = score(&BTreeSet::new(), &truth(&z)).unwrap();
        assert_eq!(r.fdp, 0.0);
        assert_eq!(r.fnp, 0.15);
    }

    #[test]
    fn score_everything_rejected() {
        let t = truth(&[true, false, false, false]);
        let r = score(&set(&[0, 1, 2, 3]), &t).unwrap();
        assert_eq!(r.fnp, 0.0);
        assert_eq!(r.fdp, 0.75);
    }

    #[test]
    fn score_unknown_id() {
        let t = truth(&[true]);
        let bad: BTreeSet<String> = ["zzz".to_string()].into_iter().collect();
        assert_eq!(score(&bad, &t).unwrap_err(), Error::UnknownId("zzz".into()));
    }
}
