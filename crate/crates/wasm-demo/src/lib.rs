//! Browser bindings for the demo page in `www/`.
//!
//! Every export returns a JSON string; errors surface as JS exceptions.
//! The `*_json` functions hold the logic so they can be tested natively.

use bfdr::experiment::evaluate_sim_i;
use bfdr::{
    bf_averaged, bf_cox, ebf_pi0, robust_decision, simulate_i, OmegaGrid, SimIConfig, TestRecord,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest study the page will simulate in one call.
pub const MAX_M: usize = 50_000;
const TRACE_POINTS: usize = 400;

#[derive(Debug, Serialize)]
struct Curve {
    omega: Option<f64>,
    log_bf: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct BfCurves {
    z: Vec<f64>,
    averaged: Curve,
    components: Vec<Curve>,
}

fn parse_grid(text: &str) -> Result<OmegaGrid, String> {
    let omegas = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("bad omega '{s}'")))
        .collect::<Result<Vec<_>, _>>()?;
    if omegas.is_empty() {
        return Ok(OmegaGrid::default());
    }
    OmegaGrid::new(omegas).map_err(|e| e.to_string())
}

/// Log Bayes factor against `z` on `[-z_max, z_max]`, for the averaged
/// factor and each grid component.
pub fn bf_curve_json(se: f64, grid: &str, z_max: f64, points: usize) -> Result<String, String> {
    let grid = parse_grid(grid)?;
    if !(z_max > 0.0 && z_max <= 40.0) {
        return Err(format!("z range must lie in (0, 40], got {z_max}"));
    }
    if !(2..=2_000).contains(&points) {
        return Err(format!("points must lie in [2, 2000], got {points}"));
    }
    let z: Vec<f64> = (0..points)
        .map(|i| -z_max + 2.0 * z_max * i as f64 / (points - 1) as f64)
        .collect();
    let eval = |f: &dyn Fn(f64) -> bfdr::Result<bfdr::BayesFactor>| {
        z.iter()
            .map(|&z| f(z).map(|b| b.ln()))
            .collect::<bfdr::Result<Vec<_>>>()
            .map_err(|e| e.to_string())
    };
    let averaged = Curve {
        omega: None,
        log_bf: eval(&|z| bf_averaged(z, se, &grid))?,
    };
    let components = grid
        .omegas()
        .iter()
        .map(|&w| {
            Ok(Curve {
                omega: Some(w),
                log_bf: eval(&|z| bf_cox(z, se, w))?,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    serde_json::to_string(&BfCurves {
        z,
        averaged,
        components,
    })
    .map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
struct MethodRow {
    method: String,
    pi0_hat: Option<f64>,
    n_rejected: usize,
    fdp: f64,
    fnp: f64,
}

/// Running mean of the sorted Bayes factors, thinned for plotting.
#[derive(Debug, Serialize)]
struct Trace {
    rank: Vec<usize>,
    running_mean: Vec<f64>,
    d0: usize,
}

#[derive(Debug, Serialize)]
struct SimResult {
    m: usize,
    n_alternative: usize,
    methods: Vec<MethodRow>,
    trace: Trace,
}

fn ebf_trace(records: &[TestRecord], d0: usize) -> Trace {
    let mut bfs: Vec<f64> = records.iter().map(TestRecord::bf).collect();
    bfs.sort_unstable_by(f64::total_cmp);
    let step = bfs.len().div_ceil(TRACE_POINTS).max(1);
    let (mut rank, mut running_mean) = (Vec::new(), Vec::new());
    let mut sum = 0.0;
    for (i, bf) in bfs.iter().enumerate() {
        sum += bf;
        let d = i + 1;
        if d % step == 0 || d == bfs.len() || d == d0 {
            rank.push(d);
            running_mean.push(sum / d as f64);
        }
    }
    Trace {
        rank,
        running_mean,
        d0,
    }
}

/// One simulated study scored under every procedure.
pub fn simulate_json(
    m: usize,
    pi0: f64,
    seed: u64,
    alpha: f64,
    gamma: f64,
) -> Result<String, String> {
    if m > MAX_M {
        return Err(format!("at most {MAX_M} tests in the browser, got {m}"));
    }
    let config = SimIConfig {
        m,
        pi0,
        seed,
        ..SimIConfig::default()
    };
    let (records, truth) = simulate_i(&config).map_err(|e| e.to_string())?;
    let outcomes =
        evaluate_sim_i(&records, &truth, &config.grid, alpha, gamma).map_err(|e| e.to_string())?;
    let ebf = ebf_pi0(&records.iter().map(TestRecord::bf).collect::<Vec<_>>())
        .map_err(|e| e.to_string())?;
    let result = SimResult {
        m,
        n_alternative: truth.n_alternative(),
        methods: outcomes
            .into_iter()
            .map(|o| MethodRow {
                method: o.method,
                pi0_hat: o.pi0_hat,
                n_rejected: o.eval.n_rejected,
                fdp: o.eval.fdp,
                fnp: o.eval.fnp,
            })
            .collect(),
        trace: ebf_trace(&records, ebf.d0.unwrap_or(0)),
    };
    serde_json::to_string(&result).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
struct Row {
    id: String,
    bf: f64,
    v_hat: f64,
    rejected: bool,
}

#[derive(Debug, Serialize)]
struct Analysis {
    pi0_hat: f64,
    d0: usize,
    threshold: f64,
    estimated_bfdr: f64,
    n_rejected: usize,
    auto_rejected: Vec<String>,
    rows: Vec<Row>,
}

/// EBF analysis of pasted Bayes factors: one `bf` or `id bf` per line.
pub fn analyze_json(text: &str, alpha: f64) -> Result<String, String> {
    let mut records = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (line_no, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let (id, value) = match fields.as_slice() {
            [] => continue,
            [v] => (format!("t{}", records.len() + 1), *v),
            [id, v] => (id.to_string(), *v),
            _ => return Err(format!("line {}: expected 'bf' or 'id bf'", line_no + 1)),
        };
        let bf: f64 = value
            .parse()
            .map_err(|_| format!("line {}: bad number '{value}'", line_no + 1))?;
        if !seen.insert(id.clone()) {
            return Err(format!("line {}: duplicate id '{id}'", line_no + 1));
        }
        records.push(TestRecord::new(id, bf));
    }
    let records = bfdr::validate_records(records).map_err(|e| e.to_string())?;
    let pi0 = ebf_pi0(&records.iter().map(TestRecord::bf).collect::<Vec<_>>())
        .map_err(|e| e.to_string())?;
    let (table, report) = robust_decision(&records, &pi0, alpha).map_err(|e| e.to_string())?;
    let rows = records
        .iter()
        .zip(&table.entries)
        .map(|(r, e)| Row {
            id: r.id.clone(),
            bf: r.bf(),
            v_hat: e.v_hat,
            rejected: report.is_rejected(&r.id),
        })
        .collect();
    let analysis = Analysis {
        pi0_hat: pi0.pi0_hat,
        d0: pi0.d0.unwrap_or(0),
        threshold: report.threshold,
        estimated_bfdr: report.estimated_bfdr,
        n_rejected: report.n_rejected(),
        auto_rejected: report.auto_rejected.iter().cloned().collect(),
        rows,
    };
    serde_json::to_string(&analysis).map_err(|e| e.to_string())
}

fn js(result: Result<String, String>) -> Result<String, JsError> {
    result.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn bf_curve(se: f64, grid: &str, z_max: f64, points: usize) -> Result<String, JsError> {
    js(bf_curve_json(se, grid, z_max, points))
}

#[wasm_bindgen]
pub fn simulate(m: usize, pi0: f64, seed: u32, alpha: f64, gamma: f64) -> Result<String, JsError> {
    js(simulate_json(m, pi0, u64::from(seed), alpha, gamma))
}

#[wasm_bindgen]
pub fn analyze(text: &str, alpha: f64) -> Result<String, JsError> {
    js(analyze_json(text, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn curve_is_symmetric_and_matches_the_library() {
        let v = parse(&bf_curve_json(0.2, "0.1, 0.4", 5.0, 11).unwrap());
        let z = v["z"].as_array().unwrap();
        assert_eq!(z.len(), 11);
        assert_eq!(z[5].as_f64().unwrap(), 0.0);
        let avg: Vec<f64> = v["averaged"]["log_bf"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        assert_eq!(avg[0], avg[10]);
        let grid = OmegaGrid::new(vec![0.1, 0.4]).unwrap();
        assert_eq!(avg[8], bf_averaged(3.0, 0.2, &grid).unwrap().ln());
        assert_eq!(v["components"][1]["omega"], 0.4);
    }

    #[test]
    fn empty_grid_text_means_the_default_grid() {
        let v = parse(&bf_curve_json(1.0, "  ", 3.0, 3).unwrap());
        assert_eq!(
            v["components"].as_array().unwrap().len(),
            OmegaGrid::default().len()
        );
        assert!(bf_curve_json(1.0, "0.1,x", 3.0, 3).is_err());
        assert!(bf_curve_json(1.0, "", 3.0, 1).is_err());
    }

    #[test]
    fn simulation_reports_every_method() {
        let v = parse(&simulate_json(2_000, 0.8, 3, 0.05, 0.5).unwrap());
        let names: Vec<&str> = v["methods"]
            .as_array()
            .unwrap()
            .iter()
            .map(|m| m["method"].as_str().unwrap())
            .collect();
        assert_eq!(names.len(), 4);
        let d0 = v["trace"]["d0"].as_u64().unwrap() as usize;
        let ebf = v["methods"][0]["pi0_hat"].as_f64().unwrap();
        assert_eq!(ebf, d0 as f64 / 2_000.0);
        // the trace includes the stopping point, where the mean is below one
        let ranks = v["trace"]["rank"].as_array().unwrap();
        let at = ranks
            .iter()
            .position(|r| r.as_u64() == Some(d0 as u64))
            .unwrap();
        assert!(v["trace"]["running_mean"][at].as_f64().unwrap() < 1.0);
        assert!(simulate_json(MAX_M + 1, 0.8, 3, 0.05, 0.5).is_err());
    }

    #[test]
    fn analysis_of_pasted_factors() {
        let v = parse(&analyze_json("a 0.5\n\nb 0.8\n2.0\n", 0.05).unwrap());
        assert_eq!(v["d0"], 2);
        assert!((v["pi0_hat"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(v["rows"][2]["id"], "t3");
        assert!((v["rows"][0]["v_hat"].as_f64().unwrap() - 0.2).abs() < 1e-15);
        assert!(analyze_json("a b c", 0.05).unwrap_err().contains("line 1"));
        assert!(analyze_json("a -1", 0.05).is_err());
        assert!(analyze_json("", 0.05).is_err());
        assert!(analyze_json("a 1\na 2", 0.05)
            .unwrap_err()
            .contains("duplicate"));
    }
}
