use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use serde::Serialize;

use bfdr::experiment::{
    aggregate, chi2_log_quantiles, evaluate_sim_i, evaluate_sim_ii, run_sim_ii, summaries_truth,
    z_pvalues, GeneSummary, MethodOutcome, MethodSummary, PermutationDesign,
};
use bfdr::rng::substream_key;
use bfdr::{simulate_i, OmegaGrid, SimIConfig, SimIIConfig, SimTruth, TestRecord};

use crate::error::{usage, CliError, Result};
use crate::table::{human, machine};
use crate::GridArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Scenario {
    #[value(name = "I", alias = "i", alias = "1")]
    I,
    #[value(name = "II", alias = "ii", alias = "2")]
    II,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long, value_enum)]
    scenario: Scenario,

    /// Number of tests (genes).
    #[arg(long, default_value_t = 10_000)]
    m: usize,

    /// Sample size; 100 for scenario I and 85 for scenario II when omitted.
    #[arg(long)]
    n: Option<usize>,

    /// True null proportion; several comma-separated values run one study each.
    #[arg(long, value_delimiter = ',', default_value = "0.9")]
    pi0: Vec<f64>,

    #[arg(long, default_value_t = 1)]
    reps: usize,

    #[arg(long, env = "BFDR_SEED", default_value_t = 1)]
    seed: u64,

    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    #[arg(long, default_value_t = 0.5)]
    gamma: f64,

    #[arg(long, default_value_t = 1.0)]
    mu: f64,

    #[arg(long, default_value_t = 1.0)]
    sigma: f64,

    /// Range of the effect-size scale phi, as `low,high`.
    #[arg(long, value_parser = parse_pair::<f64>, default_value = "0.5,1.5")]
    phi_range: (f64, f64),

    /// Range of minor allele frequencies, as `low,high`.
    #[arg(long, value_parser = parse_pair::<f64>, default_value = "0.05,0.5")]
    maf_range: (f64, f64),

    /// Scenario II: variants per gene, as `low,high`.
    #[arg(long, value_parser = parse_pair::<usize>, default_value = "40,120")]
    k_range: (usize, usize),

    /// Scenario II: causal variants per alternative gene, as `low,high`.
    #[arg(long, value_parser = parse_pair::<usize>, default_value = "1,5")]
    causal_range: (usize, usize),

    /// Scenario II: latent correlation between adjacent variants.
    #[arg(long, default_value_t = 0.5)]
    ld_decay: f64,

    /// Scenario II: permutation counts for QBF null quantiles.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    perms: Vec<usize>,

    /// Scenario II: permutations for the gene-BF and min-p p-values; 0 skips them.
    #[arg(long, default_value_t = 500)]
    pvalue_perms: usize,

    /// Directory for per-replicate datasets, evals.tsv, summary.tsv and table.txt.
    #[arg(long)]
    out_dir: Option<PathBuf>,

    #[command(flatten)]
    grid: GridArgs,
}

fn parse_pair<T: FromStr>(s: &str) -> std::result::Result<(T, T), String> {
    let parse = |x: &str| {
        x.trim()
            .parse::<T>()
            .map_err(|_| format!("bad number '{}'", x.trim()))
    };
    match s.split_once(',') {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => Err(format!("expected `low,high`, got '{s}'")),
    }
}

#[derive(Debug, Serialize)]
struct EvalRow {
    pi0: f64,
    rep: usize,
    #[serde(flatten)]
    outcome: MethodOutcome,
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    pi0: f64,
    #[serde(flatten)]
    summary: MethodSummary,
}

/// Files produced by a run, written only once everything has succeeded.
struct Output {
    files: Vec<(String, String)>,
}

impl Output {
    fn commit(self, dir: &Path) -> Result<()> {
        let parent = match dir.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
        let staging = tempfile::Builder::new()
            .prefix(".bfdr-sim")
            .tempdir_in(&parent)
            .map_err(|e| CliError::io(&parent, e))?;
        for (name, contents) in &self.files {
            let path = staging.path().join(name);
            std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        }
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        for (name, _) in &self.files {
            let to = dir.join(name);
            std::fs::rename(staging.path().join(name), &to).map_err(|e| CliError::io(&to, e))?;
        }
        Ok(())
    }
}

fn dataset_name(pi0: f64, rep: usize) -> String {
    format!("pi0-{pi0}_rep{:02}.tsv", rep + 1)
}

fn sim_i_dataset(
    records: &[TestRecord],
    truth: &SimTruth,
    grid: &OmegaGrid,
    gamma: f64,
    header: &str,
) -> Result<String> {
    let p = z_pvalues(records)?;
    let q = chi2_log_quantiles(records, grid, gamma)?;
    let mut out = format!("{header}id\tlog_bf\tbf\tz\tse\tp\tlog_null_q\talternative\n");
    for (i, r) in records.iter().enumerate() {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.id,
            machine(r.log_bf),
            machine(r.bf()),
            machine(r.z.unwrap_or(f64::NAN)),
            machine(r.se.unwrap_or(f64::NAN)),
            machine(p[i].1),
            machine(q[i]),
            u8::from(truth.z[i])
        );
    }
    Ok(out)
}

fn sim_ii_dataset(genes: &[GeneSummary], design: &PermutationDesign, header: &str) -> String {
    let mut out = format!("{header}id\talternative\tn_variants\tlog_bf\tmin_p");
    for n in &design.quantile_perms {
        let _ = write!(out, "\tlog_null_q_{n}");
    }
    if design.pvalue_perms.is_some() {
        out.push_str("\tp_bf\tp_minp");
    }
    out.push('\n');
    for g in genes {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            g.id,
            u8::from(g.alternative),
            g.n_variants,
            machine(g.ln_bf),
            machine(g.min_p)
        );
        for q in &g.ln_null_quantiles {
            let _ = write!(out, "\t{}", machine(*q));
        }
        if let (Some(a), Some(b)) = (g.p_bf, g.p_minp) {
            let _ = write!(out, "\t{}\t{}", machine(a), machine(b));
        }
        out.push('\n');
    }
    out
}

fn opt(x: Option<f64>, f: fn(f64) -> String) -> String {
    x.map_or_else(|| "NA".to_string(), f)
}

fn evals_tsv(rows: &[EvalRow]) -> String {
    let mut out = String::from("pi0\trep\tmethod\tpi0_hat\tfdp\tfnp\tn_rejected\tn_true_alt\n");
    for r in rows {
        let o = &r.outcome;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            machine(r.pi0),
            r.rep + 1,
            o.method,
            opt(o.pi0_hat, machine),
            machine(o.eval.fdp),
            machine(o.eval.fnp),
            o.eval.n_rejected,
            o.eval.n_true_alt
        );
    }
    out
}

fn summary_tsv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "pi0\tmethod\treps\tpi0_hat_mean\tpi0_hat_min\tpi0_hat_max\tfdp_mean\tfdp_min\tfdp_max\tfnp_mean\tfnp_min\tfnp_max\n",
    );
    for r in rows {
        let s = &r.summary;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            machine(r.pi0),
            s.method,
            s.reps,
            opt(s.pi0_mean, machine),
            opt(s.pi0_min, machine),
            opt(s.pi0_max, machine),
            machine(s.fdp_mean),
            machine(s.fdp_min),
            machine(s.fdp_max),
            machine(s.fnp_mean),
            machine(s.fnp_min),
            machine(s.fnp_max)
        );
    }
    out
}

fn with_range(mean: f64, min: f64, max: f64) -> String {
    format!("{} [{}, {}]", human(mean), human(min), human(max))
}

fn human_table(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:<6} {:<18} {:<26} {:<34} {}\n",
        "pi0", "method", "pi0_hat [min, max]", "FDP [min, max]", "FNP [min, max]"
    );
    for r in rows {
        let s = &r.summary;
        let pi0 = match (s.pi0_mean, s.pi0_min, s.pi0_max) {
            (Some(a), Some(b), Some(c)) => with_range(a, b, c),
            _ => "-".to_string(),
        };
        let _ = writeln!(
            out,
            "{:<6} {:<18} {:<26} {:<34} {}",
            human(r.pi0),
            s.method,
            pi0,
            with_range(s.fdp_mean, s.fdp_min, s.fdp_max),
            with_range(s.fnp_mean, s.fnp_min, s.fnp_max)
        );
    }
    out
}

pub fn run(args: &SimArgs, json: bool) -> Result<()> {
    if args.reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(usage(format!(
            "--alpha must lie in (0, 1), got {}",
            args.alpha
        )));
    }
    if args.pi0.is_empty() {
        return Err(usage("--pi0 needs at least one value"));
    }
    let grid = args.grid.grid()?;
    let mut files = Vec::new();
    let mut evals = Vec::new();
    let mut summaries = Vec::new();

    for (s, &pi0) in args.pi0.iter().enumerate() {
        let mut outcomes = Vec::with_capacity(args.reps);
        for rep in 0..args.reps {
            let label = format!("{s}/{rep}");
            let data_seed = substream_key(args.seed, "sim-rep", &label);
            let header = format!(
                "# scenario={:?} pi0={pi0} rep={} seed={} data_seed={data_seed}\n",
                args.scenario,
                rep + 1,
                args.seed
            );
            let outcome = match args.scenario {
                Scenario::I => {
                    let cfg = SimIConfig {
                        m: args.m,
                        n: args.n.unwrap_or(100),
                        pi0,
                        mu: args.mu,
                        sigma: args.sigma,
                        phi_range: args.phi_range,
                        maf_range: args.maf_range,
                        seed: data_seed,
                        grid: grid.clone(),
                    };
                    let (records, truth) = simulate_i(&cfg)?;
                    if args.out_dir.is_some() {
                        files.push((
                            dataset_name(pi0, rep),
                            sim_i_dataset(&records, &truth, &grid, args.gamma, &header)?,
                        ));
                    }
                    evaluate_sim_i(&records, &truth, &grid, args.alpha, args.gamma)?
                }
                Scenario::II => {
                    let cfg = SimIIConfig {
                        m: args.m,
                        n: args.n.unwrap_or(85),
                        pi0,
                        mu: args.mu,
                        sigma: args.sigma,
                        phi_range: args.phi_range,
                        maf_range: args.maf_range,
                        seed: data_seed,
                        k_range: args.k_range,
                        n_causal_range: args.causal_range,
                        ld_decay: args.ld_decay,
                    };
                    let design = PermutationDesign {
                        seed: substream_key(args.seed, "perm-rep", &label),
                        gamma: args.gamma,
                        quantile_perms: args.perms.clone(),
                        pvalue_perms: (args.pvalue_perms > 0).then_some(args.pvalue_perms),
                    };
                    let genes = run_sim_ii(&cfg, &grid, &design)?;
                    let truth = summaries_truth(&genes, &cfg);
                    if args.out_dir.is_some() {
                        files.push((
                            dataset_name(pi0, rep),
                            sim_ii_dataset(&genes, &design, &header),
                        ));
                    }
                    evaluate_sim_ii(&genes, &truth, &design, args.alpha)?
                }
            };
            evals.extend(outcome.iter().cloned().map(|o| EvalRow {
                pi0,
                rep,
                outcome: o,
            }));
            outcomes.push(outcome);
        }
        summaries.extend(
            aggregate(&outcomes)
                .into_iter()
                .map(|summary| SummaryRow { pi0, summary }),
        );
    }

    let table = human_table(&summaries);
    if let Some(dir) = &args.out_dir {
        files.push(("evals.tsv".into(), evals_tsv(&evals)));
        files.push(("summary.tsv".into(), summary_tsv(&summaries)));
        files.push(("table.txt".into(), table.clone()));
        Output { files }.commit(dir)?;
    }
    if json {
        let doc = serde_json::json!({
            "scenario": args.scenario,
            "seed": args.seed,
            "alpha": args.alpha,
            "gamma": args.gamma,
            "evals": evals,
            "summary": summaries,
        });
        println!(
            "{}",
            serde_json::to_string_pretty(&doc).map_err(|e| usage(e.to_string()))?
        );
    } else {
        print!("{table}");
    }
    Ok(())
}
