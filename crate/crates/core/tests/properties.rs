use std::collections::BTreeSet;

use bfdr::experiment::z_pvalues;
use bfdr::fdr::qvalues;
use bfdr::{
    bf_averaged, bf_cox, bf_from_regression, bf_gene, bfdr_decide, bh_decide, ebf_pi0,
    posterior_table, qbf_pi0, robust_decision, score, storey_decide, storey_decide_with_pi0,
    storey_pi0, validate_records, BayesFactor, OmegaGrid, Pi0Estimate, ResidualScale, SimTruth,
    TestRecord, TruthParams,
};
use proptest::collection::vec;
use proptest::prelude::*;

fn records_from(log_bfs: &[f64]) -> Vec<TestRecord> {
    log_bfs
        .iter()
        .enumerate()
        .map(|(i, &l)| TestRecord::from_log_bf(format!("t{i:03}"), l))
        .collect()
}

fn id_pvalues(p: &[f64]) -> Vec<(String, f64)> {
    p.iter()
        .enumerate()
        .map(|(i, &p)| (format!("t{i:03}"), p))
        .collect()
}

/// Log Bayes factors drawn from a small pool so that ties occur.
fn tied_log_bfs() -> impl Strategy<Value = Vec<f64>> {
    (vec(-5.0f64..15.0, 1..8), 1usize..100).prop_flat_map(|(pool, m)| {
        vec(0..pool.len(), m).prop_map(move |idx| idx.iter().map(|&i| pool[i]).collect())
    })
}

fn brute_force_qvalues(p: &[f64], pi0: f64) -> Vec<f64> {
    let m = p.len() as f64;
    p.iter()
        .map(|&pi| {
            // q(p) = min over thresholds t >= p of pi0 m t / #{p_j <= t}
            p.iter()
                .filter(|&&t| t >= pi)
                .map(|&t| pi0 * m * t / p.iter().filter(|&&pj| pj <= t).count() as f64)
                .fold(f64::INFINITY, f64::min)
                .min(1.0)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn record_lists_round_trip_through_json(
        raw in vec(("[a-z0-9_]{1,8}", -700.0f64..700.0, proptest::option::of(-40.0f64..40.0), proptest::option::of(1e-6f64..10.0)), 0..20)
    ) {
        let records: Vec<TestRecord> = raw
            .into_iter()
            .map(|(id, log_bf, z, se)| TestRecord { id, log_bf, z, se })
            .collect();
        let records = validate_records(records).unwrap();
        let text = serde_json::to_string(&records).unwrap();
        let back: Vec<TestRecord> = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, records);
    }

    #[test]
    fn averaged_is_mean_of_components(z in -8.0f64..8.0, se in 0.01f64..3.0) {
        let grid = OmegaGrid::default();
        let parts: Vec<f64> = grid
            .omegas()
            .iter()
            .map(|&w| bf_cox(z, se, w).unwrap().value())
            .collect();
        let mean = parts.iter().sum::<f64>() / parts.len() as f64;
        let avg = bf_averaged(z, se, &grid).unwrap().value();
        prop_assert!((avg / mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn null_cox_factor_below_one(se in 1e-3f64..100.0, omega in 1e-3f64..100.0) {
        prop_assert!(bf_cox(0.0, se, omega).unwrap().value() < 1.0);
    }

    #[test]
    fn cox_factor_decreases_past_its_maximum(z in 0.5f64..6.0, se in 0.05f64..2.0) {
        let omegas: Vec<f64> = (1..=400).map(|i| 0.01 * 1.03f64.powi(i)).collect();
        let ln: Vec<f64> = omegas.iter().map(|&w| bf_cox(z, se, w).unwrap().ln()).collect();
        let peak = (0..ln.len()).max_by(|&a, &b| ln[a].total_cmp(&ln[b])).unwrap();
        for w in ln[peak..].windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn ranking_by_bf_matches_ranking_by_z2(zs in vec(-6.0f64..6.0, 2..30), se in 0.05f64..1.0) {
        let grid = OmegaGrid::default();
        let bfs: Vec<f64> = zs.iter().map(|&z| bf_averaged(z, se, &grid).unwrap().ln()).collect();
        for i in 0..zs.len() {
            for j in 0..zs.len() {
                if zs[i] * zs[i] < zs[j] * zs[j] - 1e-9 {
                    prop_assert!(bfs[i] < bfs[j]);
                }
            }
        }
    }

    #[test]
    fn gene_bf_ignores_variant_order(ln in vec(-5.0f64..800.0, 1..40), seed in any::<u64>()) {
        let bfs: Vec<BayesFactor> = ln.iter().map(|&l| BayesFactor::from_ln(l)).collect();
        let mut shuffled = bfs.clone();
        let n = shuffled.len();
        let mut state = seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        let a = bf_gene(&bfs).unwrap().ln();
        let b = bf_gene(&shuffled).unwrap().ln();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn regression_matches_normal_equations(
        g in vec(0u8..3, 5..60),
        noise in vec(-2.0f64..2.0, 60),
        beta in -2.0f64..2.0,
        sigma in 0.2f64..3.0,
    ) {
        prop_assume!(g.iter().any(|&x| x != g[0]));
        let n = g.len();
        let g: Vec<f64> = g.iter().map(|&x| f64::from(x)).collect();
        let y: Vec<f64> = (0..n).map(|i| 0.3 + beta * g[i] + noise[i]).collect();
        // X = [1, g]; solve (X'X) b = X'y with an explicit 2x2 inverse
        let (s1, sg, sgg) = (n as f64, g.iter().sum::<f64>(), g.iter().map(|x| x * x).sum::<f64>());
        let (sy, sgy) = (y.iter().sum::<f64>(), g.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>());
        let det = s1 * sgg - sg * sg;
        let slope = (s1 * sgy - sg * sy) / det;
        let se = sigma * (s1 / det).sqrt();
        let fit = bf_from_regression(&y, &g, ResidualScale::Known(sigma), &OmegaGrid::default()).unwrap();
        prop_assert!((fit.beta_hat - slope).abs() < 1e-9 * slope.abs().max(1.0));
        prop_assert!((fit.se / se - 1.0).abs() < 1e-9);
        prop_assert!((fit.z - slope / se).abs() < 1e-8 * (slope / se).abs().max(1.0));
    }

    #[test]
    fn ebf_ignores_input_order(ln in vec(-4.0f64..6.0, 1..200)) {
        let bfs: Vec<f64> = ln.iter().map(|l| l.exp()).collect();
        let mut rev = bfs.clone();
        rev.reverse();
        let mut sorted = bfs.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let a = ebf_pi0(&bfs).unwrap();
        prop_assert_eq!(a.d0, ebf_pi0(&rev).unwrap().d0);
        prop_assert_eq!(a.d0, ebf_pi0(&sorted).unwrap().d0);
        prop_assert_eq!(a.pi0_hat, a.d0.unwrap() as f64 / bfs.len() as f64);
    }

    #[test]
    fn qbf_equals_storey_under_monotone_map(z in vec(-6.0f64..6.0, 1..300)) {
        // with a shared null, p = 1 - F0(statistic) and q_gamma = F0^{-1}(gamma)
        let records: Vec<TestRecord> = z
            .iter()
            .enumerate()
            .map(|(i, &z)| TestRecord::from_log_bf(format!("t{i}"), 0.0).with_stats(z, 1.0))
            .collect();
        let p: Vec<f64> = z_pvalues(&records).unwrap().into_iter().map(|(_, p)| p).collect();
        let stat: Vec<f64> = z.iter().map(|z| z * z).collect();
        for g in 1..=9 {
            let gamma = g as f64 / 10.0;
            let q = vec![bfdr::numeric::chi2_1_quantile(gamma); z.len()];
            prop_assert_eq!(
                qbf_pi0(&stat, &q, gamma).unwrap().pi0_hat.to_bits(),
                storey_pi0(&p, gamma).unwrap().pi0_hat.to_bits()
            );
        }
    }

    #[test]
    fn bfdr_matches_level_set_enumeration(ln in tied_log_bfs(), pi0 in 0.01f64..0.99, alpha in 0.01f64..0.3) {
        let records = records_from(&ln);
        let table = posterior_table(&records, &Pi0Estimate::fixed(pi0, records.len()).unwrap()).unwrap();
        let report = bfdr_decide(&table, alpha).unwrap();
        let v: Vec<f64> = table.entries.iter().map(|e| e.v_hat).collect();
        let mut best: BTreeSet<String> = BTreeSet::new();
        for t in v.iter().copied().chain([f64::NEG_INFINITY]) {
            let set: Vec<usize> = (0..v.len()).filter(|&i| v[i] > t).collect();
            if set.is_empty() {
                continue;
            }
            let mean = set.iter().map(|&i| 1.0 - v[i]).sum::<f64>() / set.len() as f64;
            if mean <= alpha && set.len() > best.len() {
                best = set.iter().map(|&i| table.entries[i].id.clone()).collect();
            }
        }
        prop_assert_eq!(&report.rejected, &best);
        if !report.rejected.is_empty() {
            prop_assert!(report.estimated_bfdr <= alpha);
        }
        let level_set: BTreeSet<String> = table
            .entries
            .iter()
            .filter(|e| e.v_hat > report.threshold)
            .map(|e| e.id.clone())
            .collect();
        prop_assert_eq!(level_set, report.rejected);
    }

    #[test]
    fn posterior_increases_with_bf(ln in vec(-50.0f64..50.0, 2..50), pi0 in 0.0f64..0.999) {
        let records = records_from(&ln);
        let table = posterior_table(&records, &Pi0Estimate::fixed(pi0, ln.len()).unwrap()).unwrap();
        for i in 0..ln.len() {
            let e = &table.entries[i];
            prop_assert!((0.0..=1.0).contains(&e.v_hat));
            for j in 0..ln.len() {
                if ln[i] < ln[j] {
                    prop_assert!(e.v_hat <= table.entries[j].v_hat);
                }
            }
        }
    }

    #[test]
    fn larger_alpha_never_shrinks_rejections(
        ln in tied_log_bfs(),
        p in vec(0.0f64..1.0, 100),
        pi0 in 0.05f64..0.95,
        a1 in 0.01f64..0.2,
        extra in 0.0f64..0.2,
    ) {
        let a2 = a1 + extra;
        let records = records_from(&ln);
        let table = posterior_table(&records, &Pi0Estimate::fixed(pi0, records.len()).unwrap()).unwrap();
        prop_assert!(bfdr_decide(&table, a1).unwrap().rejected.is_subset(&bfdr_decide(&table, a2).unwrap().rejected));

        let ebf = ebf_pi0(&records.iter().map(TestRecord::bf).collect::<Vec<_>>()).unwrap();
        let (_, r1) = robust_decision(&records, &ebf, a1).unwrap();
        let (_, r2) = robust_decision(&records, &ebf, a2).unwrap();
        prop_assert!(r1.rejected.is_subset(&r2.rejected));

        let p = id_pvalues(&p);
        prop_assert!(bh_decide(&p, a1).unwrap().is_subset(&bh_decide(&p, a2).unwrap()));
        prop_assert!(storey_decide(&p, 0.5, a1).unwrap().1.is_subset(&storey_decide(&p, 0.5, a2).unwrap().1));
    }

    #[test]
    fn rejections_ignore_input_order(ln in tied_log_bfs(), pi0 in 0.05f64..0.95, alpha in 0.01f64..0.2) {
        let records = records_from(&ln);
        let mut reversed = records.clone();
        reversed.reverse();
        let est = Pi0Estimate::fixed(pi0, records.len()).unwrap();
        let a = bfdr_decide(&posterior_table(&records, &est).unwrap(), alpha).unwrap();
        let b = bfdr_decide(&posterior_table(&reversed, &est).unwrap(), alpha).unwrap();
        prop_assert_eq!(a.rejected, b.rejected);
        prop_assert_eq!(a.threshold, b.threshold);
    }

    #[test]
    fn qvalues_match_brute_force(p in vec(0.0f64..1.0, 1..80), pi0 in 0.05f64..1.0) {
        let fast = qvalues(&p, pi0).unwrap();
        let slow = brute_force_qvalues(&p, pi0);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn smaller_pi0_rejects_a_superset_of_bh(p in vec(0.0f64..0.2, 1..80), alpha in 0.01f64..0.2) {
        let p = id_pvalues(&p);
        let bh = bh_decide(&p, alpha).unwrap();
        prop_assert_eq!(&storey_decide_with_pi0(&p, 1.0, alpha).unwrap(), &bh);
        prop_assert!(bh.is_subset(&storey_decide_with_pi0(&p, 0.5, alpha).unwrap()));
    }

    #[test]
    fn ebf_never_misses_automatic_rejections(
        ln in vec(-3.0f64..3.0, 1..200),
        big in vec(0.0f64..30.0, 1..5),
        alpha in 0.01f64..0.2,
    ) {
        let m = ln.len() + big.len();
        let level = (m as f64 / alpha).ln();
        let all: Vec<f64> = ln.into_iter().chain(big.iter().map(|b| level + b)).collect();
        let records = records_from(&all);
        let ebf = ebf_pi0(&records.iter().map(TestRecord::bf).collect::<Vec<_>>()).unwrap();
        let report = bfdr_decide(&posterior_table(&records, &ebf).unwrap(), alpha).unwrap();
        for r in records.iter().filter(|r| r.bf() >= m as f64 / alpha) {
            prop_assert!(report.is_rejected(&r.id));
        }
    }

    #[test]
    fn scores_ignore_relabeling(z in vec(any::<bool>(), 1..100), rejected in vec(any::<bool>(), 100)) {
        let ids: Vec<String> = (0..z.len()).map(|i| format!("g{i}")).collect();
        let renamed: Vec<String> = (0..z.len()).map(|i| format!("x{}", z.len() - i)).collect();
        let params = TruthParams { pi0: 0.5, n: 10, phi_range: (0.5, 1.5) };
        let truth = SimTruth { ids: ids.clone(), z: z.clone(), params: params.clone() };
        let relabeled = SimTruth { ids: renamed.clone(), z, params };
        let pick = |names: &[String]| -> BTreeSet<String> {
            names.iter().zip(&rejected).filter(|(_, r)| **r).map(|(n, _)| n.clone()).collect()
        };
        prop_assert_eq!(score(&pick(&ids), &truth).unwrap(), score(&pick(&renamed), &relabeled).unwrap());
    }
}
