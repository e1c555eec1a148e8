use std::path::PathBuf;

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use bfdr::fdr::qvalues;
use bfdr::{
    bfdr_decide, bh_decide, ebf_pi0, gene_bf, permute_null_quantile, posterior_table, qbf_pi0,
    robust_decision, storey_decide, PermutationPlan, Pi0Estimate, Statistic, TestRecord,
};

use crate::bf::load_gene;
use crate::error::{usage, Result};
use crate::table::{emit, human, machine, Table};
use crate::GridArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Ebf,
    Qbf,
    Storey,
    Bh,
}

impl Method {
    fn label(self) -> &'static str {
        match self {
            Method::Ebf => "EBF",
            Method::Qbf => "QBF",
            Method::Storey => "Storey",
            Method::Bh => "BH",
        }
    }

    fn is_bayesian(self) -> bool {
        matches!(self, Method::Ebf | Method::Qbf)
    }
}

#[derive(Debug, Args)]
pub struct FdrArgs {
    /// Input TSV; `-` reads stdin.
    #[arg(short, long)]
    input: PathBuf,

    /// Report TSV; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,

    #[arg(short, long, value_enum)]
    method: Method,

    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    /// Quantile level for QBF and Storey.
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,

    /// Column of null quantiles for QBF. Names starting with `log_` are read
    /// on the log scale. Defaults to `log_null_q`, then `null_q`, then a
    /// lone `log_null_q_<perms>` column.
    #[arg(long)]
    null_q_column: Option<String>,

    /// Column of p-values for Storey and BH.
    #[arg(long, default_value = "p")]
    p_column: String,

    /// Estimate QBF null quantiles with this many phenotype permutations,
    /// using the y_file / g_file columns.
    #[arg(long)]
    perms: Option<usize>,

    #[arg(long, env = "BFDR_SEED", default_value_t = 1)]
    seed: u64,

    /// Known residual standard deviation for permutation runs.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,

    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Debug, Serialize)]
struct Entry {
    id: String,
    score: f64,
    rejected: bool,
}

#[derive(Debug, Serialize)]
struct Report {
    method: Method,
    alpha: f64,
    pi0: Pi0Estimate,
    /// `v_hat` for the Bayesian rules, `q` for the p-value rules.
    score: &'static str,
    entries: Vec<Entry>,
    threshold: f64,
    n_rejected: usize,
    /// Estimated Bayesian FDR (EBF, QBF) or q-value at the cut (Storey, BH).
    estimated_fdr: f64,
    auto_rejected: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
}

fn read_log_bfs(table: &Table) -> Result<Vec<f64>> {
    if let Some(col) = table.column("log_bf") {
        return table
            .rows()
            .iter()
            .map(|row| {
                let v = table.number(row, col)?;
                if v == f64::INFINITY {
                    return Err(table.error(row, "bf must be finite"));
                }
                if v == f64::NEG_INFINITY {
                    return Err(table.error(row, "bf must be positive"));
                }
                Ok(v)
            })
            .collect();
    }
    let col = table.require("bf")?;
    table
        .rows()
        .iter()
        .map(|row| {
            let v = table.number(row, col)?;
            if v.is_nan() || v <= 0.0 {
                return Err(table.error(row, "bf must be positive"));
            }
            if v.is_infinite() {
                return Err(table.error(row, "bf must be finite"));
            }
            Ok(v.ln())
        })
        .collect()
}

fn null_column(table: &Table, requested: Option<&str>) -> Result<Option<(usize, bool)>> {
    let is_log = |name: &str| name.starts_with("log_");
    if let Some(name) = requested {
        return Ok(Some((table.require(name)?, is_log(name))));
    }
    for name in ["log_null_q", "null_q"] {
        if let Some(col) = table.column(name) {
            return Ok(Some((col, is_log(name))));
        }
    }
    // a scenario II dataset with a single permutation count
    let suffixed: Vec<usize> = (0..table.header().len())
        .filter(|&c| table.header()[c].starts_with("log_null_q_"))
        .collect();
    Ok(match suffixed[..] {
        [col] => Some((col, true)),
        _ => None,
    })
}

/// Observed log gene BFs and log null quantiles by permutation.
fn permuted_quantiles(
    table: &Table,
    args: &FdrArgs,
    ids: &[String],
    n_perms: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let y_col = table.require("y_file")?;
    let g_col = table.require("g_file")?;
    let grid = args.grid.grid()?;
    let plan = PermutationPlan::new(n_perms, args.seed, Statistic::GeneBf)?;
    let pairs: Vec<(f64, f64)> = table
        .rows()
        .par_iter()
        .zip(ids)
        .map(|(row, id)| {
            let (y, g) = load_gene(table, row, y_col, g_col)?;
            let observed = gene_bf(&y, &g, args.sigma, &grid).map_err(|e| table.error(row, e))?;
            let q = permute_null_quantile(id, &y, &g, args.sigma, &grid, args.gamma, &plan)
                .map_err(|e| table.error(row, e))?;
            Ok((observed.ln(), q.ln()))
        })
        .collect::<Result<_>>()?;
    Ok(pairs.into_iter().unzip())
}

fn bayes_report(
    method: Method,
    ids: &[String],
    log_bfs: &[f64],
    pi0: Pi0Estimate,
    alpha: f64,
) -> Result<Report> {
    let records: Vec<TestRecord> = ids
        .iter()
        .zip(log_bfs)
        .map(|(id, &l)| TestRecord::from_log_bf(id.clone(), l))
        .collect();
    let (table, decision) = if method == Method::Ebf {
        robust_decision(&records, &pi0, alpha)?
    } else {
        let table = posterior_table(&records, &pi0)?;
        let decision = bfdr_decide(&table, alpha)?;
        (table, decision)
    };
    let warning = pi0.is_degenerate_ebf().then(|| {
        "no prefix of the sorted Bayes factors has mean below 1; pi0_hat is 0".to_string()
    });
    Ok(Report {
        method,
        alpha,
        score: "v_hat",
        entries: table
            .entries
            .iter()
            .map(|e| Entry {
                id: e.id.clone(),
                score: e.v_hat,
                rejected: decision.is_rejected(&e.id),
            })
            .collect(),
        threshold: decision.threshold,
        n_rejected: decision.n_rejected(),
        estimated_fdr: decision.estimated_bfdr,
        auto_rejected: decision.auto_rejected.into_iter().collect(),
        pi0,
        warning,
    })
}

fn pvalue_report(method: Method, ids: &[String], p: &[f64], args: &FdrArgs) -> Result<Report> {
    let pairs: Vec<(String, f64)> = ids.iter().cloned().zip(p.iter().copied()).collect();
    let (pi0, rejected) = match method {
        Method::Bh => (
            Pi0Estimate::fixed(1.0, p.len())?,
            bh_decide(&pairs, args.alpha)?,
        ),
        _ => storey_decide(&pairs, args.gamma, args.alpha)?,
    };
    let q = qvalues(p, pi0.pi0_hat)?;
    let entries: Vec<Entry> = pairs
        .iter()
        .zip(&q)
        .map(|((id, _), &q)| Entry {
            id: id.clone(),
            score: q,
            rejected: rejected.contains(id),
        })
        .collect();
    let cut = |values: &[f64]| {
        entries
            .iter()
            .zip(values)
            .filter(|(e, _)| e.rejected)
            .map(|(_, &v)| v)
            .fold(0.0, f64::max)
    };
    Ok(Report {
        method,
        alpha: args.alpha,
        score: "q",
        threshold: cut(p),
        estimated_fdr: cut(&q),
        n_rejected: rejected.len(),
        entries,
        pi0,
        auto_rejected: Vec::new(),
        warning: None,
    })
}

fn render_tsv(r: &Report) -> String {
    let mut out = format!(
        "#pi0_hat={}\tmethod={}\tpi0_method={}\tm={}",
        machine(r.pi0.pi0_hat),
        r.method.label(),
        r.pi0.method,
        r.pi0.m
    );
    if let Some(g) = r.pi0.gamma {
        out.push_str(&format!("\tgamma={}", machine(g)));
    }
    if let Some(d0) = r.pi0.d0 {
        out.push_str(&format!("\td0={d0}"));
    }
    out.push('\n');
    if let Some(w) = &r.warning {
        out.push_str(&format!("#warning={w}\n"));
    }
    out.push_str(&format!("id\t{}\trejected\n", r.score));
    for e in &r.entries {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            e.id,
            machine(e.score),
            u8::from(e.rejected)
        ));
    }
    let fdr_key = if r.method.is_bayesian() {
        "estimated_bfdr"
    } else {
        "estimated_fdr"
    };
    out.push_str(&format!("#alpha={}\n", machine(r.alpha)));
    out.push_str(&format!("#threshold={}\n", machine(r.threshold)));
    out.push_str(&format!("#n_rejected={}\n", r.n_rejected));
    out.push_str(&format!("#{fdr_key}={}\n", machine(r.estimated_fdr)));
    out.push_str(&format!("#auto_rejected={}\n", r.auto_rejected.join(",")));
    out
}

fn render_human(r: &Report) -> String {
    let mut pi0 = format!("pi0_hat {} ({}", human(r.pi0.pi0_hat), r.pi0.method);
    if let Some(d0) = r.pi0.d0 {
        pi0.push_str(&format!(", d0 {d0} of {}", r.pi0.m));
    }
    if let Some(g) = r.pi0.gamma {
        pi0.push_str(&format!(", gamma {}", human(g)));
    }
    pi0.push(')');
    let what = if r.method.is_bayesian() {
        "estimated BFDR"
    } else {
        "q at cut"
    };
    let mut s = format!(
        "{}: {pi0}; rejected {} of {} at alpha {}; threshold {}; {what} {}",
        r.method.label(),
        r.n_rejected,
        r.entries.len(),
        human(r.alpha),
        human(r.threshold),
        human(r.estimated_fdr)
    );
    if !r.auto_rejected.is_empty() {
        s.push_str(&format!("; {} automatic", r.auto_rejected.len()));
    }
    if let Some(w) = &r.warning {
        s.push_str(&format!("\nwarning: {w}"));
    }
    s
}

pub fn run(args: &FdrArgs, json: bool) -> Result<()> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(usage(format!(
            "--alpha must lie in (0, 1), got {}",
            args.alpha
        )));
    }
    if !(args.gamma > 0.0 && args.gamma < 1.0) {
        return Err(usage(format!(
            "--gamma must lie in (0, 1), got {}",
            args.gamma
        )));
    }
    let table = Table::read(&args.input)?;
    let id_col = table.require("id")?;
    let ids: Vec<String> = table
        .rows()
        .iter()
        .map(|r| table.text(r, id_col).to_string())
        .collect();

    let report = match args.method {
        Method::Ebf => {
            let log_bfs = read_log_bfs(&table)?;
            let bfs: Vec<f64> = log_bfs.iter().map(|l| l.exp()).collect();
            bayes_report(Method::Ebf, &ids, &log_bfs, ebf_pi0(&bfs)?, args.alpha)?
        }
        Method::Qbf => {
            let (log_bfs, log_q) = match (
                null_column(&table, args.null_q_column.as_deref())?,
                args.perms,
            ) {
                (Some((col, is_log)), _) => {
                    let q = table
                        .rows()
                        .iter()
                        .map(|row| {
                            let v = table.number(row, col)?;
                            if is_log {
                                Ok(v)
                            } else if v > 0.0 {
                                Ok(v.ln())
                            } else {
                                Err(table.error(row, "null quantile must be positive"))
                            }
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    (read_log_bfs(&table)?, q)
                }
                (None, Some(n)) if table.has("y_file") && table.has("g_file") => {
                    permuted_quantiles(&table, args, &ids, n)?
                }
                _ => {
                    return Err(usage(
                        "qbf needs a null_q column, or --perms with y_file and g_file columns",
                    ))
                }
            };
            let pi0 = qbf_pi0(&log_bfs, &log_q, args.gamma)?;
            bayes_report(Method::Qbf, &ids, &log_bfs, pi0, args.alpha)?
        }
        Method::Storey | Method::Bh => {
            if !table.has(&args.p_column) {
                return Err(usage(format!(
                    "{} needs a '{}' column of p-values",
                    args.method.label().to_lowercase(),
                    args.p_column
                )));
            }
            let col = table.require(&args.p_column)?;
            let p = table
                .rows()
                .iter()
                .map(|row| {
                    let v = table.number(row, col)?;
                    if (0.0..=1.0).contains(&v) {
                        Ok(v)
                    } else {
                        Err(table.error(row, "p-value must lie in [0, 1]"))
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            pvalue_report(args.method, &ids, &p, args)?
        }
    };

    let tsv = render_tsv(&report);
    if json {
        if let Some(path) = &args.output {
            emit(Some(path), &tsv)?;
        }
        println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(|e| usage(e.to_string()))?
        );
    } else if let Some(path) = &args.output {
        emit(Some(path), &tsv)?;
        println!("{}", render_human(&report));
    } else {
        emit(None, &tsv)?;
        eprintln!("{}", render_human(&report));
    }
    Ok(())
}
