//! Dispatch of a resolved config to the library and assembly of reports.

use crate::config::{command_name, Command, Preset, RunConfig};
use crate::error::{CliError, CliResult};
use lambda_var::consist::{pit_check, rolling_backtest, run_consistency, ConsistencyReport};
use lambda_var::dist::empirical_from;
use lambda_var::elicit::{
    build_level_set_counterexample, check_convex_level_sets_with, verify_elicitability,
    LevelSetVerdict,
};
use lambda_var::measures::{crossing_bracket, es, lambda_var_with_membership, var};
use lambda_var::robust::{kolmogorov_distance, levy_distance, robustness_experiment};
use lambda_var::{DataSet, DistributionModel, LambdaFunction};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Upper end of Λ in the level-sets preset.
pub const LEVEL_SETS_LAM_MAX: f64 = 0.9;

/// A plot-ready table written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Int(usize),
    Real(f64),
}

impl Table {
    fn new(header: Vec<&'static str>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    /// Header row, `,` separator, reals with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Int(i) => i.to_string(),
                    Cell::Real(x) => format!("{x:.16e}"),
                })
                .collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// Report body and the optional table.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Value,
    pub table: Table,
}

impl Outcome {
    /// Pretty JSON with sorted keys and a trailing newline.
    pub fn json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("report serializes");
        s.push('\n');
        s
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn config_hash(cfg: &RunConfig) -> String {
    let canonical = serde_json::to_string(&cfg.analysis_value()).expect("config serializes");
    sha256_hex(canonical.as_bytes())
}

fn runtime(e: lambda_var::Error) -> CliError {
    CliError::runtime(e.to_string())
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

struct Input {
    data: DataSet,
    description: Value,
}

fn load_data(path: &Path) -> CliResult<Input> {
    let bytes = std::fs::read(path).map_err(|e| {
        CliError::validation("data", format!("cannot read {}: {e}", path.display()))
    })?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| CliError::validation("data", format!("{} is not UTF-8", path.display())))?;
    let data = DataSet::from_csv_str(text, path.display().to_string())
        .map_err(|e| CliError::validation("data", format!("{}: {e}", path.display())))?;
    let description = json!({
        "path": path.display().to_string(),
        "observations": data.len(),
        "sha256": sha256_hex(&bytes),
    });
    Ok(Input { data, description })
}

/// Runs the command and wraps the result with version, seed and config.
pub fn execute(cfg: &RunConfig) -> CliResult<Outcome> {
    let (result, table) = match cfg.command {
        Command::Compute => compute(cfg)?,
        Command::Elicit => match cfg.preset {
            Some(Preset::LevelSets) => level_sets(cfg)?,
            _ => elicit(cfg)?,
        },
        Command::Robustness => robustness(cfg)?,
        Command::Consistency => consistency(cfg)?,
        Command::Backtest => backtest(cfg)?,
        Command::Levy => levy(cfg)?,
    };
    let report = json!({
        "command": command_name(cfg.command),
        "version": concat!("lambda-var ", env!("CARGO_PKG_VERSION")),
        "seed": cfg.seed,
        "config": to_json(cfg),
        "config_sha256": config_hash(cfg),
        "result": result,
    });
    Ok(Outcome { report, table })
}

fn grid(lo: f64, hi: f64, points: usize) -> impl Iterator<Item = f64> {
    let h = (hi - lo) / (points - 1) as f64;
    (0..points).map(move |i| {
        if i + 1 == points {
            hi
        } else {
            lo + i as f64 * h
        }
    })
}

fn cdf_table(f: &DistributionModel, l: &LambdaFunction) -> Table {
    let (lo, hi) = crossing_bracket(f, l);
    let mut t = Table::new(vec!["x", "cdf", "lambda"]);
    for x in grid(lo, hi, 1001) {
        t.rows.push(vec![
            Cell::Real(x),
            Cell::Real(f.cdf(x)),
            Cell::Real(l.eval(x)),
        ]);
    }
    t
}

fn compute(cfg: &RunConfig) -> CliResult<(Value, Table)> {
    let l = cfg.require_lambda()?;
    let (f, source) = match &cfg.data {
        Some(p) => {
            let input = load_data(p)?;
            (
                empirical_from(&input.data),
                json!({ "data": input.description }),
            )
        }
        None => (
            cfg.require_model("model")?,
            json!({ "model": to_json(&cfg.model) }),
        ),
    };
    let level = cfg.level.unwrap_or(l.lam_min());
    let lv = lambda_var_with_membership(&f, &l);
    let v = var(&f, level).map_err(runtime)?;
    let e = es(&f, level).map_err(runtime)?;
    let result = json!({
        "source": source,
        "lambda_var": to_json(&lv),
        "var": to_json(&v),
        "es": to_json(&e),
    });
    Ok((result, cdf_table(&f, &l)))
}

fn elicit(cfg: &RunConfig) -> CliResult<(Value, Table)> {
    let l = cfg.require_lambda()?;
    let f = cfg.require_model("model")?;
    let step = cfg.grid_step.unwrap_or(1e-3);
    let r = verify_elicitability(&f, &l, step).map_err(runtime)?;
    let mut t = Table::new(vec!["x", "expected_score"]);
    for (x, g) in r.curve.grid.iter().zip(&r.curve.values) {
        t.rows.push(vec![Cell::Real(*x), Cell::Real(*g)]);
    }
    let mut v = to_json(&r);
    if let Value::Object(m) = &mut v {
        m.remove("curve");
        m.insert("evaluation".into(), to_json(&r.curve.evaluation));
        m.insert("curve_points".into(), json!(r.curve.grid.len()));
    }
    Ok((v, t))
}

/// Inputs of the level-sets preset, also used for validation.
pub(crate) fn level_set_inputs(
    cfg: &RunConfig,
) -> CliResult<(DistributionModel, DistributionModel, LambdaFunction)> {
    let k = cfg.k.unwrap_or(15);
    let eps = cfg.eps.unwrap_or(0.01);
    build_level_set_counterexample(k, eps, LEVEL_SETS_LAM_MAX).map_err(|e| {
        let msg = e.to_string();
        let field = if k < 4 || msg.contains("collapse") {
            "k"
        } else {
            "eps"
        };
        CliError::validation(field, msg)
    })
}

fn level_sets(cfg: &RunConfig) -> CliResult<(Value, Table)> {
    let (f1, f2, l) = level_set_inputs(cfg)?;
    let k = cfg.k.unwrap_or(15);
    let alphas: Vec<f64> = (0..=8).map(|i| i as f64 / 8.0).collect();
    let r = check_convex_level_sets_with(&f1, &f2, &l, &alphas, 1.0 / k as f64).map_err(runtime)?;
    let mut t = Table::new(vec!["alpha", "crossing"]);
    for m in &r.mixtures {
        t.rows
            .push(vec![Cell::Real(m.alpha), Cell::Real(m.crossing)]);
    }
    let mut v = to_json(&r);
    if let Value::Object(m) = &mut v {
        m.insert("convex".into(), json!(r.verdict == LevelSetVerdict::Holds));
        m.insert("lam_max".into(), json!(LEVEL_SETS_LAM_MAX));
    }
    Ok((v, t))
}

fn robustness(cfg: &RunConfig) -> CliResult<(Value, Table)> {
    let l = cfg.require_lambda()?;
    let f = cfg.require_model("model")?;
    let p = cfg
        .perturb
        .clone()
        .unwrap_or(lambda_var::robust::Perturbation::None);
    let n = cfg.n.unwrap_or(250);
    let m = cfg.replicas.unwrap_or(1000);
    let r = robustness_experiment(&f, &l, &p, n, m, cfg.seed).map_err(runtime)?;
    let mut t = Table::new(vec!["replica", "estimate_f", "estimate_g"]);
    for (i, (a, b)) in r
        .estimator_law_f
        .values()
        .iter()
        .zip(r.estimator_law_g.values())
        .enumerate()
    {
        t.rows
            .push(vec![Cell::Int(i), Cell::Real(*a), Cell::Real(*b)]);
    }
    let result = json!({
        "base_model": to_json(&r.base_model),
        "perturbed_model": to_json(&r.perturbed_model),
        "perturbation": to_json(&r.perturbation),
        "input_distance": r.input_distance,
        "law_distance": r.law_distance,
        "n": r.n,
        "replicas": r.replicas,
        "mean_estimate_f": r.estimator_law_f.mean(),
        "mean_estimate_g": r.estimator_law_g.mean(),
        "seed": r.seed,
    });
    Ok((result, t))
}

fn calibration_table(r: &ConsistencyReport) -> Table {
    let mut t = Table::new(vec!["k", "t", "w", "y", "z", "running_average"]);
    for (s, a) in r.per_step.iter().zip(&r.running_average) {
        t.rows.push(vec![
            Cell::Int(s.k),
            Cell::Real(s.t),
            Cell::Real(s.w),
            Cell::Real(s.y),
            Cell::Real(s.z),
            Cell::Real(*a),
        ]);
    }
    t
}

/// `4 sqrt(λᴹ(1 - λᵐ) / n)`.
pub fn clt_bound(l: &LambdaFunction, n: usize) -> f64 {
    4.0 * (l.lam_max() * (1.0 - l.lam_min()) / n as f64).sqrt()
}

fn summary(r: &ConsistencyReport, l: &LambdaFunction) -> Value {
    let bound = clt_bound(l, r.n);
    let exceedances = r.per_step.iter().filter(|s| s.y <= s.t).count();
    json!({
        "n": r.n,
        "final_average": r.final_average,
        "standardized": r.standardized,
        "clt_bound": bound,
        "within_bound": r.final_average.abs() <= bound,
        "exceedance_frequency": exceedances as f64 / r.n as f64,
        "continuous_predictors": r.continuous_predictors,
    })
}

fn consistency(cfg: &RunConfig) -> CliResult<(Value, Table)> {
    let l = cfg.require_lambda()?;
    let p = cfg
        .process
        .as_ref()
        .ok_or_else(|| CliError::validation("process", "missing"))?
        .build()
        .map_err(|e| CliError::validation("process", e.to_string()))?;
    let n = cfg.n.unwrap_or(10_000);
    let r = run_consistency(&p, &l, n, cfg.seed).map_err(runtime)?;
    let pit = pit_check(&p, &l, n, cfg.seed).map_err(runtime)?;
    let mut v = summary(&r, &l);
    if let Value::Object(m) = &mut v {
        m.insert("pit".into(), to_json(&pit));
    }
    Ok((v, calibration_table(&r)))
}

fn backtest(cfg: &RunConfig) -> CliResult<(Value, Table)> {
    let l = cfg.require_lambda()?;
    let input = load_data(cfg.data.as_deref().expect("validated"))?;
    let window = cfg.window.unwrap_or(250);
    if window >= input.data.len() {
        return Err(CliError::validation(
            "window",
            format!(
                "{window} leaves no observations to backtest in {} points",
                input.data.len()
            ),
        ));
    }
    let r = rolling_backtest(&input.data, window, &l).map_err(runtime)?;
    let mut v = summary(&r, &l);
    if let Value::Object(m) = &mut v {
        m.insert("data".into(), input.description);
        m.insert("window".into(), json!(window));
    }
    Ok((v, calibration_table(&r)))
}

fn levy(cfg: &RunConfig) -> CliResult<(Value, Table)> {
    let f = cfg.require_model("model")?;
    let (g, second) = match &cfg.data {
        Some(p) => {
            let input = load_data(p)?;
            (
                empirical_from(&input.data),
                json!({ "data": input.description }),
            )
        }
        None => (
            cfg.require_model("other")?,
            json!({ "model": to_json(&cfg.other) }),
        ),
    };
    let (a, b) = f.hull();
    let (c, d) = g.hull();
    let (lo, hi) = (a.min(c) - 1.0, b.max(d) + 1.0);
    let mut t = Table::new(vec!["x", "cdf_first", "cdf_second"]);
    for x in grid(lo, hi, 1001) {
        t.rows.push(vec![
            Cell::Real(x),
            Cell::Real(f.cdf(x)),
            Cell::Real(g.cdf(x)),
        ]);
    }
    let result = json!({
        "first": { "model": to_json(&cfg.model) },
        "second": second,
        "levy": levy_distance(&f, &g),
        "kolmogorov": kolmogorov_distance(&f, &g),
    });
    Ok((result, t))
}
