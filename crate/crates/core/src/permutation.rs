//! Permutation calibration of gene-level statistics.
//!
//! The phenotype vector is shuffled (Fisher-Yates) while the genotype matrix
//! stays fixed. Permutation `p` of test `id` draws from ChaCha8 stream `p`
//! keyed by `(seed, id)`, so any subset of permutations can be recomputed
//! independently and in any order.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::bayes_factor::{BayesFactor, CoxKernel, OmegaGrid};
use crate::error::{invalid, Error, Result};
use crate::numeric::{log_sum_exp, two_sided_normal_p};
use crate::rng::substream;

const PERM_DOMAIN: &str = "perm";

/// Per-variant genotypes of one gene, stored column-wise (one column per
/// candidate variant, one row per individual).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenotypeMatrix {
    n_samples: usize,
    columns: Vec<Vec<f64>>,
}

impl GenotypeMatrix {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let n_samples = columns
            .first()
            .map(Vec::len)
            .ok_or(Error::Empty("genotype columns"))?;
        if let Some(bad) = columns.iter().find(|c| c.len() != n_samples) {
            return Err(Error::LengthMismatch {
                what: "genotype column length",
                left: n_samples,
                right: bad.len(),
            });
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite genotype value"));
        }
        Ok(Self { n_samples, columns })
    }

    /// Builds a matrix from rows (individuals) of variant values.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows
            .first()
            .map(Vec::len)
            .ok_or(Error::Empty("genotype rows"))?;
        if rows.iter().any(|r| r.len() != k) {
            return Err(invalid("ragged genotype rows"));
        }
        let columns = (0..k)
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect();
        Self::from_columns(columns)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_variants(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }
}

/// Which statistic a permutation run calibrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statistic {
    /// Log gene-level Bayes factor; larger is more extreme.
    GeneBf,
    /// Minimum single-variant p-value; smaller is more extreme.
    MinP,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationPlan {
    pub n_perms: usize,
    pub seed: u64,
    pub statistic: Statistic,
}

impl PermutationPlan {
    pub fn new(n_perms: usize, seed: u64, statistic: Statistic) -> Result<Self> {
        if n_perms == 0 {
            return Err(invalid("n_perms must be at least 1"));
        }
        Ok(Self {
            n_perms,
            seed,
            statistic,
        })
    }
}

/// Both gene-level statistics for one phenotype vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneStats {
    /// Log of the variant-averaged Bayes factor.
    pub ln_bf: f64,
    /// Largest single-variant `|z|`.
    pub max_abs_z: f64,
}

impl GeneStats {
    pub fn min_p(&self) -> f64 {
        two_sided_normal_p(self.max_abs_z)
    }

    pub fn get(&self, statistic: Statistic) -> f64 {
        match statistic {
            Statistic::GeneBf => self.ln_bf,
            Statistic::MinP => self.min_p(),
        }
    }
}

/// A gene with its genotype columns centered and the per-variant Bayes
/// factor terms precomputed for a known residual scale.
///
/// Constant columns carry no information and are dropped.
#[derive(Debug, Clone)]
pub struct PreparedGene {
    n_samples: usize,
    centered: Vec<f64>,
    z_scale: Vec<f64>,
    kernels: Vec<CoxKernel>,
    ln_terms: f64,
}

impl PreparedGene {
    pub fn new(genotypes: &GenotypeMatrix, sigma: f64, grid: &OmegaGrid) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("sigma must be positive, got {sigma}")));
        }
        let n = genotypes.n_samples();
        let mut centered = Vec::with_capacity(n * genotypes.n_variants());
        let mut z_scale = Vec::new();
        let mut kernels = Vec::new();
        for col in genotypes.columns() {
            let mean = col.iter().sum::<f64>() / n as f64;
            let sxx: f64 = col.iter().map(|g| (g - mean) * (g - mean)).sum();
            if sxx.is_nan() || sxx <= 1e-12 * n as f64 {
                continue;
            }
            centered.extend(col.iter().map(|g| g - mean));
            let root = sxx.sqrt();
            z_scale.push(1.0 / (sigma * root));
            kernels.push(CoxKernel::new(sigma / root, grid));
        }
        if kernels.is_empty() {
            return Err(Error::DegenerateGenotypes);
        }
        let ln_terms = ((kernels.len() * grid.len()) as f64).ln();
        Ok(Self {
            n_samples: n,
            centered,
            z_scale,
            kernels,
            ln_terms,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Number of informative (non-constant) variants.
    pub fn n_variants(&self) -> usize {
        self.kernels.len()
    }

    /// Single-variant z-statistics of `y` against every informative variant.
    pub fn z_scores(&self, y: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_variants());
        self.fill_z(y, &mut out);
        out
    }

    fn fill_z(&self, y: &[f64], out: &mut Vec<f64>) {
        out.clear();
        // Columns are centered, so the slope numerator needs no centering of y.
        for (col, scale) in self
            .centered
            .chunks_exact(self.n_samples)
            .zip(&self.z_scale)
        {
            let sxy: f64 = col.iter().zip(y).map(|(g, v)| g * v).sum();
            out.push(sxy * scale);
        }
    }

    fn stats_with(&self, y: &[f64], z: &mut Vec<f64>) -> GeneStats {
        self.fill_z(y, z);
        let max_abs_z = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        GeneStats {
            ln_bf: self.ln_gene_bf(z),
            max_abs_z,
        }
    }

    // ln( (1 / kL) * sum_j sum_l BF_j(omega_l) )
    fn ln_gene_bf(&self, z: &[f64]) -> f64 {
        let mut total = 0.0;
        for (kernel, &zj) in self.kernels.iter().zip(z) {
            match kernel.natural_sum(zj) {
                Some(s) => total += s,
                None => {
                    let per_variant: Vec<f64> = self
                        .kernels
                        .iter()
                        .zip(z)
                        .map(|(kernel, &zj)| kernel.ln_bf(zj))
                        .collect();
                    return log_sum_exp(&per_variant) - (self.kernels.len() as f64).ln();
                }
            }
        }
        total.ln() - self.ln_terms
    }

    /// Observed statistics for `y`.
    pub fn stats(&self, y: &[f64]) -> Result<GeneStats> {
        self.check_y(y)?;
        let mut z = Vec::with_capacity(self.n_variants());
        Ok(self.stats_with(y, &mut z))
    }

    fn check_y(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.n_samples {
            return Err(Error::LengthMismatch {
                what: "phenotype vs genotype rows",
                left: y.len(),
                right: self.n_samples,
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite phenotype value"));
        }
        Ok(())
    }

    /// Statistics of permutations `first .. first + count` of `y`.
    pub fn permuted_stats_range(
        &self,
        y: &[f64],
        id: &str,
        seed: u64,
        first: usize,
        count: usize,
    ) -> Result<Vec<GeneStats>> {
        self.check_y(y)?;
        let mut shuffled = y.to_vec();
        let mut z = Vec::with_capacity(self.n_variants());
        Ok((first..first + count)
            .map(|p| {
                let mut rng = substream(seed, PERM_DOMAIN, id, p as u64);
                shuffled.copy_from_slice(y);
                shuffled.shuffle(&mut rng);
                self.stats_with(&shuffled, &mut z)
            })
            .collect())
    }

    /// Statistics of permutations `0 .. n_perms` of `y`.
    pub fn permuted_stats(
        &self,
        y: &[f64],
        id: &str,
        seed: u64,
        n_perms: usize,
    ) -> Result<Vec<GeneStats>> {
        self.permuted_stats_range(y, id, seed, 0, n_perms)
    }

    /// Ln of the gene-level Bayes factor; kept for callers that only need it.
    pub fn ln_bf(&self, y: &[f64]) -> Result<f64> {
        Ok(self.stats(y)?.ln_bf)
    }
}

/// Type-1 empirical quantile: the `ceil(gamma * n)`-th smallest value
/// (1-based, at least the first).
pub fn empirical_quantile(values: &[f64], gamma: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("permuted statistics"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let rank = ((gamma * values.len() as f64).ceil() as usize).clamp(1, values.len());
    Ok(sorted[rank - 1])
}

/// Add-one permutation p-value `(1 + #{extreme}) / (n + 1)`.
///
/// Ties with the observed value count as extreme.
pub fn add_one_pvalue(observed: f64, permuted: &[f64], larger_is_extreme: bool) -> f64 {
    let extreme = permuted
        .iter()
        .filter(|&&s| {
            if larger_is_extreme {
                s >= observed
            } else {
                s <= observed
            }
        })
        .count();
    (1 + extreme) as f64 / (permuted.len() + 1) as f64
}

/// Null `gamma`-quantile of the gene-level Bayes factor estimated from
/// `plan.n_perms` phenotype permutations.
pub fn permute_null_quantile(
    id: &str,
    y: &[f64],
    genotypes: &GenotypeMatrix,
    sigma: f64,
    grid: &OmegaGrid,
    gamma: f64,
    plan: &PermutationPlan,
) -> Result<BayesFactor> {
    if plan.statistic != Statistic::GeneBf {
        return Err(invalid(
            "null quantiles are defined for the gene Bayes factor",
        ));
    }
    if !(gamma > 0.0 && gamma < 1.0) || gamma * (plan.n_perms as f64 + 1.0) < 1.0 {
        return Err(invalid(format!(
            "gamma {gamma} unusable with {} permutations",
            plan.n_perms
        )));
    }
    let gene = PreparedGene::new(genotypes, sigma, grid)?;
    let ln: Vec<f64> = gene
        .permuted_stats(y, id, plan.seed, plan.n_perms)?
        .iter()
        .map(|s| s.ln_bf)
        .collect();
    Ok(BayesFactor::from_ln(empirical_quantile(&ln, gamma)?))
}

/// Permutation p-value of an observed statistic.
///
/// `observed` is on the statistic's own scale: the log gene Bayes factor for
/// [`Statistic::GeneBf`], the min-p value for [`Statistic::MinP`].
pub fn permutation_pvalue(
    id: &str,
    observed: f64,
    y: &[f64],
    genotypes: &GenotypeMatrix,
    sigma: f64,
    grid: &OmegaGrid,
    plan: &PermutationPlan,
) -> Result<f64> {
    let gene = PreparedGene::new(genotypes, sigma, grid)?;
    let permuted: Vec<f64> = gene
        .permuted_stats(y, id, plan.seed, plan.n_perms)?
        .iter()
        .map(|s| s.get(plan.statistic))
        .collect();
    let larger_is_extreme = plan.statistic == Statistic::GeneBf;
    Ok(add_one_pvalue(observed, &permuted, larger_is_extreme))
}

/// Smallest two-sided single-variant p-value over the informative variants.
pub fn min_p_statistic(y: &[f64], genotypes: &GenotypeMatrix, sigma: f64) -> Result<f64> {
    let gene = PreparedGene::new(genotypes, sigma, &OmegaGrid::default())?;
    Ok(gene.stats(y)?.min_p())
}

/// Observed gene-level Bayes factor.
pub fn gene_bf(
    y: &[f64],
    genotypes: &GenotypeMatrix,
    sigma: f64,
    grid: &OmegaGrid,
) -> Result<BayesFactor> {
    let gene = PreparedGene::new(genotypes, sigma, grid)?;
    Ok(BayesFactor::from_ln(gene.ln_bf(y)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes_factor::{bf_from_regression, bf_gene, ResidualScale};

    fn toy() -> (Vec<f64>, GenotypeMatrix) {
        let y = vec![0.3, -1.2, 0.8, 2.1, -0.4, 0.0, 1.7, -0.9, 0.5, 1.1];
        let g1 = vec![0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 1.0, 2.0];
        let g2 = vec![1.0, 1.0, 0.0, 2.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0];
        (y, GenotypeMatrix::from_columns(vec![g1, g2]).unwrap())
    }

    #[test]
    fn gene_bf_matches_mean_of_variant_bfs() {
        let (y, g) = toy();
        let grid = OmegaGrid::default();
        let per: Vec<BayesFactor> = g
            .columns()
            .iter()
            .map(|c| {
                bf_from_regression(&y, c, ResidualScale::Known(1.0), &grid)
                    .unwrap()
                    .bf
            })
            .collect();
        let expected = bf_gene(&per).unwrap();
        let got = gene_bf(&y, &g, 1.0, &grid).unwrap();
        assert!((got.ln() - expected.ln()).abs() < 1e-12);
    }

    #[test]
    fn constant_columns_are_skipped() {
        let (y, g) = toy();
        let mut cols = g.columns().to_vec();
        cols.push(vec![1.0; 10]);
        let with_const = GenotypeMatrix::from_columns(cols).unwrap();
        let grid = OmegaGrid::default();
        assert_eq!(
            gene_bf(&y, &g, 1.0, &grid).unwrap(),
            gene_bf(&y, &with_const, 1.0, &grid).unwrap()
        );
        let all_const = GenotypeMatrix::from_columns(vec![vec![2.0; 10]]).unwrap();
        assert_eq!(
            min_p_statistic(&y, &all_const, 1.0).unwrap_err(),
            Error::DegenerateGenotypes
        );
    }

    #[test]
    fn quantile_order_statistic() {
        let stats: Vec<f64> = (1..=101).rev().map(f64::from).collect();
        assert_eq!(empirical_quantile(&stats, 0.5).unwrap(), 51.0);
        assert_eq!(empirical_quantile(&[7.0], 0.5).unwrap(), 7.0);
        assert_eq!(empirical_quantile(&[3.0, 1.0], 0.01).unwrap(), 1.0);
    }

    #[test]
    fn single_permutation_quantile() {
        let (y, g) = toy();
        let grid = OmegaGrid::default();
        let plan = PermutationPlan::new(1, 11, Statistic::GeneBf).unwrap();
        let q = permute_null_quantile("g", &y, &g, 1.0, &grid, 0.9, &plan).unwrap();
        let gene = PreparedGene::new(&g, 1.0, &grid).unwrap();
        let only = gene.permuted_stats(&y, "g", 11, 1).unwrap()[0].ln_bf;
        assert_eq!(q.ln(), only);
    }

    #[test]
    fn constant_phenotype_is_permutation_invariant() {
        let (_, g) = toy();
        let y = vec![0.7; 10];
        let grid = OmegaGrid::default();
        let observed = gene_bf(&y, &g, 1.0, &grid).unwrap();
        let plan = PermutationPlan::new(25, 3, Statistic::GeneBf).unwrap();
        let q = permute_null_quantile("g", &y, &g, 1.0, &grid, 0.5, &plan).unwrap();
        assert!((q.ln() - observed.ln()).abs() < 1e-12);
    }

    #[test]
    fn quantile_requires_gene_bf_and_enough_perms() {
        let (y, g) = toy();
        let grid = OmegaGrid::default();
        let plan = PermutationPlan::new(10, 3, Statistic::MinP).unwrap();
        assert!(permute_null_quantile("g", &y, &g, 1.0, &grid, 0.5, &plan).is_err());
        let plan = PermutationPlan::new(10, 3, Statistic::GeneBf).unwrap();
        assert!(permute_null_quantile("g", &y, &g, 1.0, &grid, 0.05, &plan).is_err());
        assert!(PermutationPlan::new(0, 3, Statistic::GeneBf).is_err());
    }

    #[test]
    fn add_one_estimator() {
        let perms: Vec<f64> = (0..99).map(f64::from).collect();
        assert_eq!(add_one_pvalue(1000.0, &perms, true), 0.01);
        assert_eq!(add_one_pvalue(-1.0, &perms, true), 1.0);
        assert_eq!(add_one_pvalue(5.0, &[5.0], true), 1.0);
        assert_eq!(add_one_pvalue(5.0, &[5.0], false), 1.0);
        assert_eq!(add_one_pvalue(0.001, &[0.5, 0.2], false), 1.0 / 3.0);
    }

    #[test]
    fn pvalue_bounds() {
        let (y, g) = toy();
        let grid = OmegaGrid::default();
        for statistic in [Statistic::GeneBf, Statistic::MinP] {
            let plan = PermutationPlan::new(50, 5, statistic).unwrap();
            let gene = PreparedGene::new(&g, 1.0, &grid).unwrap();
            let observed = gene.stats(&y).unwrap().get(statistic);
            let p = permutation_pvalue("g", observed, &y, &g, 1.0, &grid, &plan).unwrap();
            assert!((1.0 / 51.0..=1.0).contains(&p), "{p}");
        }
    }

    #[test]
    fn min_p_single_null_variant() {
        // y orthogonal to the centered genotype gives z = 0
        let g = GenotypeMatrix::from_columns(vec![vec![0.0, 1.0, 2.0]]).unwrap();
        let y = [1.0, 5.0, 1.0];
        assert_eq!(min_p_statistic(&y, &g, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn min_p_two_variants() {
        // y lies along the centered second column, scaled so that z_2 = 1.96;
        // the first column then has z_1 = z_2 / sqrt(2).
        let g1 = vec![0.0, 1.0, 2.0, 1.0];
        let g2 = vec![0.0, 0.0, 2.0, 2.0];
        let y0 = [1.0, 5.0, 1.0, 5.0];
        let gene = PreparedGene::new(
            &GenotypeMatrix::from_columns(vec![g1.clone(), g2.clone()]).unwrap(),
            1.0,
            &OmegaGrid::default(),
        )
        .unwrap();
        let z0 = gene.z_scores(&y0);
        assert_eq!(z0[0], 0.0);
        // scale y along the centered g2 direction to hit |z2| = 1.96
        let c2: Vec<f64> = g2.iter().map(|v| v - 1.0).collect();
        let sxx2: f64 = c2.iter().map(|v| v * v).sum();
        let target = 1.959963984540054;
        let y: Vec<f64> = c2.iter().map(|v| v * target / sxx2.sqrt()).collect();
        let z = gene.z_scores(&y);
        assert!((z[1] - target).abs() < 1e-12);
        let g = GenotypeMatrix::from_columns(vec![g1, g2]).unwrap();
        let mp = min_p_statistic(&y, &g, 1.0).unwrap();
        assert!((mp - 0.05).abs() < 1e-9, "{mp}");
    }

    #[test]
    fn duplicate_columns_same_min_p() {
        let (y, g) = toy();
        let single = GenotypeMatrix::from_columns(vec![g.column(0).to_vec()]).unwrap();
        let dup =
            GenotypeMatrix::from_columns(vec![g.column(0).to_vec(), g.column(0).to_vec()]).unwrap();
        assert_eq!(
            min_p_statistic(&y, &single, 1.0).unwrap(),
            min_p_statistic(&y, &dup, 1.0).unwrap()
        );
    }

    #[test]
    fn permutation_ranges_are_consistent() {
        let (y, g) = toy();
        let gene = PreparedGene::new(&g, 1.0, &OmegaGrid::default()).unwrap();
        let all = gene.permuted_stats(&y, "g", 9, 10).unwrap();
        let tail = gene.permuted_stats_range(&y, "g", 9, 4, 6).unwrap();
        assert_eq!(&all[4..], &tail[..]);
    }

    #[test]
    fn length_mismatch_rejected() {
        let (_, g) = toy();
        assert!(min_p_statistic(&[1.0, 2.0, 3.0], &g, 1.0).is_err());
    }
}
