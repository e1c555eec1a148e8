use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use bfdr::{bf_averaged, bf_from_regression, gene_bf, GenotypeMatrix, ResidualScale};

use crate::error::{usage, Result};
use crate::table::{emit, machine, read_matrix, Row, Table};
use crate::GridArgs;

#[derive(Debug, Args)]
pub struct BfArgs {
    /// Input TSV with columns (id, z, se) or (id, y_file, g_file); `-` reads stdin.
    #[arg(short, long)]
    input: PathBuf,

    /// Output TSV (id, log_bf, bf); standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// Known residual standard deviation.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,

    /// Estimate the residual scale from the regression residuals
    /// (single-variant genotype files only).
    #[arg(long)]
    estimate_sigma: bool,

    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Serialize)]
struct BfRow {
    id: String,
    log_bf: f64,
    bf: f64,
}

/// Phenotype and genotype matrix referenced by one row. Relative paths
/// resolve against the table's directory.
pub fn load_gene(
    table: &Table,
    row: &Row,
    y_col: usize,
    g_col: usize,
) -> Result<(Vec<f64>, GenotypeMatrix)> {
    let base = table.base_dir();
    let y: Vec<f64> = read_matrix(&base.join(table.text(row, y_col)))?
        .into_iter()
        .flatten()
        .collect();
    let g = GenotypeMatrix::from_rows(&read_matrix(&base.join(table.text(row, g_col)))?)
        .map_err(|e| table.error(row, e))?;
    if g.n_samples() != y.len() {
        return Err(table.error(
            row,
            format!("{} phenotypes but {} genotype rows", y.len(), g.n_samples()),
        ));
    }
    Ok((y, g))
}

pub fn run(args: &BfArgs, json: bool) -> Result<()> {
    if !(args.sigma > 0.0 && args.sigma.is_finite()) {
        return Err(usage("--sigma must be positive"));
    }
    let grid = args.grid.grid()?;
    let table = Table::read(&args.input)?;
    let id_col = table.require("id")?;

    let log_bfs: Vec<f64> = if table.has("z") || !table.has("y_file") {
        let z_col = table.require("z")?;
        let se_col = table.require("se")?;
        table
            .rows()
            .iter()
            .map(|row| {
                let z = table.number(row, z_col)?;
                let se = table.number(row, se_col)?;
                if se.is_nan() || se <= 0.0 {
                    return Err(table.error(row, "se must be positive"));
                }
                Ok(bf_averaged(z, se, &grid)
                    .map_err(|e| table.error(row, e))?
                    .ln())
            })
            .collect::<Result<_>>()?
    } else {
        let y_col = table.require("y_file")?;
        let g_col = table.require("g_file")?;
        table
            .rows()
            .par_iter()
            .map(|row| {
                let (y, g) = load_gene(&table, row, y_col, g_col)?;
                if args.estimate_sigma {
                    if g.n_variants() != 1 {
                        return Err(table
                            .error(row, "--estimate-sigma needs a single-variant genotype file"));
                    }
                    let fit = bf_from_regression(&y, g.column(0), ResidualScale::Estimated, &grid)
                        .map_err(|e| table.error(row, e))?;
                    return Ok(fit.bf.ln());
                }
                Ok(gene_bf(&y, &g, args.sigma, &grid)
                    .map_err(|e| table.error(row, e))?
                    .ln())
            })
            .collect::<Result<_>>()?
    };

    let rows: Vec<BfRow> = table
        .rows()
        .iter()
        .zip(log_bfs)
        .map(|(row, log_bf)| BfRow {
            id: table.text(row, id_col).to_string(),
            log_bf,
            bf: log_bf.exp(),
        })
        .collect();

    let mut tsv = String::from("id\tlog_bf\tbf\n");
    for r in &rows {
        tsv.push_str(&format!(
            "{}\t{}\t{}\n",
            r.id,
            machine(r.log_bf),
            machine(r.bf)
        ));
    }
    if json {
        if let Some(path) = &args.output {
            emit(Some(path), &tsv)?;
        }
        println!("{}", serde_json::json!({ "tests": rows }));
    } else {
        emit(args.output.as_deref(), &tsv)?;
    }
    Ok(())
}
