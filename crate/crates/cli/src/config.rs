//! Flag and config-file parsing, merged into a validated [`RunConfig`].

use crate::error::{CliError, CliResult};
use clap::{Parser, ValueEnum};
use lambda_var::consist::ProcessSpec;
use lambda_var::dist::ModelSpec;
use lambda_var::robust::Perturbation;
use lambda_var::LambdaSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// ΛVaR, VaR and ES of a data file or model.
    Compute,
    /// Expected-score minimiser against the crossing.
    Elicit,
    /// Lévy distance between estimator laws under F and a perturbation.
    Robustness,
    /// Calibration averages along a simulated process.
    Consistency,
    /// Rolling-window calibration on a P&L series.
    Backtest,
    /// Lévy and Kolmogorov distances between two laws.
    Levy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Two-point law against the Λ with a linear ramp on [-101, -99].
    Counterexample,
    /// Truncated example of non-convex level sets.
    LevelSets,
}

#[derive(Debug, Clone, Default, Parser)]
#[command(
    name = "lvar",
    version,
    about = "Lambda value at risk analyses",
    allow_negative_numbers = true
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `constant:0.05`, `step:b1,b2;l0,l1,l2`, `linear:x,v;x,v`,
    /// `clamped_normal:mu,sigma,lmin,lmax`, `counterexample[:eps]`.
    #[arg(long)]
    pub lambda: Option<String>,
    /// CSV file with one P&L value per line.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `normal:mu,sigma`, `point:c`, `empirical:x,...`, `discrete:v,p;v,p`.
    #[arg(long)]
    pub model: Option<String>,
    /// Second model for `levy`.
    #[arg(long)]
    pub other: Option<String>,
    /// `iid-normal`, `regime-switching`, `garch`, `iid:<model>`,
    /// `garch:omega,alpha,beta`, `regime:m,s;m,s|p,p;p,p[|init]`.
    #[arg(long)]
    pub process: Option<String>,
    /// `none`, `shift:d`, `scale:c`, `move:from,to,mass`.
    #[arg(long)]
    pub perturb: Option<String>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// ε of the elicit presets.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Truncation of the level-sets preset.
    #[arg(long)]
    pub k: Option<usize>,
    /// VaR/ES level for `compute` (default: the minimum of Λ).
    #[arg(long)]
    pub level: Option<f64>,
    /// Sample size or number of steps.
    #[arg(long)]
    pub n: Option<usize>,
    /// Monte Carlo replicas for `robustness`.
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Estimation window for `backtest`.
    #[arg(long)]
    pub window: Option<usize>,
    /// Expected-score grid step for `elicit`.
    #[arg(long = "grid-step")]
    pub grid_step: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: machine parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
    /// JSON report path (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV table path.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Config file contents. Structured fields accept either the flag string
/// or a JSON object.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub command: Option<Command>,
    pub lambda: Option<Value>,
    pub data: Option<PathBuf>,
    pub model: Option<Value>,
    pub other: Option<Value>,
    pub process: Option<Value>,
    pub perturb: Option<Value>,
    pub preset: Option<Preset>,
    pub eps: Option<f64>,
    pub k: Option<usize>,
    pub level: Option<f64>,
    pub n: Option<usize>,
    pub replicas: Option<usize>,
    pub window: Option<usize>,
    pub grid_step: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

impl ConfigFile {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::validation("config", e.to_string()))
    }

    pub fn from_path(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::validation("config", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }
}

pub const DEFAULT_SEED: u64 = 42;

/// Largest truncation accepted by the level-sets preset.
pub const MAX_K: usize = 1000;

/// Fully resolved run description, embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub lambda: Option<LambdaSpec>,
    pub data: Option<PathBuf>,
    pub model: Option<ModelSpec>,
    pub other: Option<ModelSpec>,
    pub process: Option<ProcessSpec>,
    pub perturb: Option<Perturbation>,
    pub preset: Option<Preset>,
    pub eps: Option<f64>,
    pub k: Option<usize>,
    pub level: Option<f64>,
    pub n: Option<usize>,
    pub replicas: Option<usize>,
    pub window: Option<usize>,
    pub grid_step: Option<f64>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

fn from_text<T: FromStr<Err = lambda_var::Error>>(field: &str, s: &str) -> CliResult<T> {
    s.parse()
        .map_err(|e: lambda_var::Error| CliError::validation(field, e.to_string()))
}

fn from_value<T: DeserializeOwned + FromStr<Err = lambda_var::Error>>(
    field: &str,
    v: Value,
) -> CliResult<T> {
    match v {
        Value::String(s) => from_text(field, &s),
        other => {
            serde_json::from_value(other).map_err(|e| CliError::validation(field, e.to_string()))
        }
    }
}

/// Named processes accepted by `--process` besides the generic syntax.
pub fn process_preset(name: &str) -> Option<ProcessSpec> {
    match name {
        "iid-normal" => Some(ProcessSpec::Iid {
            model: ModelSpec::Normal {
                mu: 0.0,
                sigma: 1.0,
            },
        }),
        "regime-switching" => Some(ProcessSpec::RegimeSwitchingNormal {
            states: vec![[0.0, 1.0], [-0.5, 2.0]],
            transition: vec![vec![0.95, 0.05], vec![0.1, 0.9]],
            initial: 0,
        }),
        "garch" => Some(ProcessSpec::Garch11 {
            omega: 0.05,
            alpha: 0.1,
            beta: 0.85,
        }),
        _ => None,
    }
}

fn parse_process(field: &str, v: Value) -> CliResult<ProcessSpec> {
    if let Value::String(s) = &v {
        if let Some(p) = process_preset(s.trim()) {
            return Ok(p);
        }
    }
    from_value(field, v)
}

fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

impl RunConfig {
    /// Merges flags over the config file (if any) and validates the result.
    pub fn resolve(cli: &Cli) -> CliResult<Self> {
        let file = match &cli.config {
            Some(p) => ConfigFile::from_path(p)?,
            None => ConfigFile::default(),
        };
        Self::merge(cli, file)
    }

    pub fn merge(cli: &Cli, file: ConfigFile) -> CliResult<Self> {
        let command = pick(cli.command, file.command).ok_or_else(|| {
            CliError::validation(
                "command",
                "no command given on the command line or in the config",
            )
        })?;
        let text = |s: &Option<String>| s.clone().map(Value::String);

        let lambda = pick(text(&cli.lambda), file.lambda)
            .map(|v| from_value::<LambdaSpec>("lambda", v))
            .transpose()?;
        let model = pick(text(&cli.model), file.model)
            .map(|v| from_value::<ModelSpec>("model", v))
            .transpose()?;
        let other = pick(text(&cli.other), file.other)
            .map(|v| from_value::<ModelSpec>("other", v))
            .transpose()?;
        let process = pick(text(&cli.process), file.process)
            .map(|v| parse_process("process", v))
            .transpose()?;
        let perturb = pick(text(&cli.perturb), file.perturb)
            .map(|v| from_value::<Perturbation>("perturb", v))
            .transpose()?;

        let cfg = RunConfig {
            command,
            lambda,
            data: pick(cli.data.clone(), file.data),
            model,
            other,
            process,
            perturb,
            preset: pick(cli.preset, file.preset),
            eps: pick(cli.eps, file.eps),
            k: pick(cli.k, file.k),
            level: pick(cli.level, file.level),
            n: pick(cli.n, file.n),
            replicas: pick(cli.replicas, file.replicas),
            window: pick(cli.window, file.window),
            grid_step: pick(cli.grid_step, file.grid_step),
            seed: pick(cli.seed, file.seed).unwrap_or(DEFAULT_SEED),
            threads: pick(cli.threads, file.threads),
            out: pick(cli.out.clone(), file.out),
            csv: pick(cli.csv.clone(), file.csv),
        };
        cfg.validate()
    }

    fn validate(mut self) -> CliResult<Self> {
        let allowed: &[&str] = match self.command {
            Command::Compute => &["lambda", "data", "model", "level"],
            Command::Elicit => &["lambda", "model", "preset", "eps", "k", "grid_step"],
            Command::Robustness => &["lambda", "model", "perturb", "n", "replicas"],
            Command::Consistency => &["lambda", "process", "n"],
            Command::Backtest => &["lambda", "data", "window"],
            Command::Levy => &["model", "other", "data"],
        };
        for field in self.present_fields() {
            if !allowed.contains(&field) {
                return Err(CliError::validation(
                    field,
                    format!("not used by `{}`", command_name(self.command)),
                ));
            }
        }
        if self.threads == Some(0) {
            return Err(CliError::validation("threads", "must be at least 1"));
        }

        match self.command {
            Command::Compute => {
                let l = self.require_lambda()?;
                match (&self.data, &self.model) {
                    (Some(_), Some(_)) => {
                        return Err(CliError::validation(
                            "model",
                            "give either --data or --model, not both",
                        ))
                    }
                    (None, None) => {
                        return Err(CliError::validation(
                            "data",
                            "compute needs --data or --model",
                        ))
                    }
                    _ => {}
                }
                self.build_model("model")?;
                let level = self.level.unwrap_or(l.lam_min());
                if !(level > 0.0 && level < 1.0) {
                    return Err(CliError::validation(
                        "level",
                        format!("{level} is outside (0, 1)"),
                    ));
                }
                self.level = Some(level);
            }
            Command::Elicit => {
                if self.preset == Some(Preset::LevelSets) {
                    if self.grid_step.is_some() {
                        return Err(CliError::validation(
                            "grid_step",
                            "not used by the level_sets preset",
                        ));
                    }
                } else {
                    let step = self.grid_step.unwrap_or(1e-3);
                    if !(step > 0.0 && step <= 1.0) {
                        return Err(CliError::validation(
                            "grid_step",
                            format!("{step} is outside (0, 1]"),
                        ));
                    }
                    self.grid_step = Some(step);
                }
                match self.preset {
                    Some(Preset::Counterexample) => {
                        if self.k.is_some() {
                            return Err(CliError::validation(
                                "k",
                                "only used by the level_sets preset",
                            ));
                        }
                        self.forbid_with_preset()?;
                        let eps = self.eps.unwrap_or(0.004);
                        self.eps = Some(eps);
                        self.lambda = Some(LambdaSpec::Counterexample { eps });
                        self.model = Some(ModelSpec::Discrete {
                            atoms: vec![[-100.0, 0.015], [4.0, 0.985]],
                        });
                        self.require_lambda().map_err(|e| e.rename("eps"))?;
                    }
                    Some(Preset::LevelSets) => {
                        self.forbid_with_preset()?;
                        self.eps = Some(self.eps.unwrap_or(0.01));
                        let k = self.k.unwrap_or(15);
                        if k > MAX_K {
                            return Err(CliError::validation("k", format!("{k} exceeds {MAX_K}")));
                        }
                        self.k = Some(k);
                        crate::run::level_set_inputs(&self)?;
                    }
                    None => {
                        if self.eps.is_some() {
                            return Err(CliError::validation(
                                "eps",
                                "only used by the elicit presets",
                            ));
                        }
                        if self.k.is_some() {
                            return Err(CliError::validation(
                                "k",
                                "only used by the level_sets preset",
                            ));
                        }
                        self.require_lambda()?;
                        self.require_model("model")?;
                    }
                }
            }
            Command::Robustness => {
                self.require_lambda()?;
                let f = self.require_model("model")?;
                let p = self
                    .perturb
                    .as_ref()
                    .ok_or_else(|| CliError::validation("perturb", "robustness needs --perturb"))?;
                p.apply(&f)
                    .map_err(|e| CliError::validation("perturb", e.to_string()))?;
                self.n = Some(positive("n", self.n.unwrap_or(250))?);
                self.replicas = Some(positive("replicas", self.replicas.unwrap_or(1000))?);
            }
            Command::Consistency => {
                self.require_lambda()?;
                let p = self.process.as_ref().ok_or_else(|| {
                    CliError::validation("process", "consistency needs --process")
                })?;
                p.build()
                    .map_err(|e| CliError::validation("process", e.to_string()))?;
                self.n = Some(positive("n", self.n.unwrap_or(10_000))?);
            }
            Command::Backtest => {
                self.require_lambda()?;
                if self.data.is_none() {
                    return Err(CliError::validation("data", "backtest needs --data"));
                }
                self.window = Some(positive("window", self.window.unwrap_or(250))?);
            }
            Command::Levy => {
                self.require_model("model")?;
                match (&self.other, &self.data) {
                    (Some(_), Some(_)) => {
                        return Err(CliError::validation(
                            "other",
                            "give either --other or --data, not both",
                        ))
                    }
                    (None, None) => {
                        return Err(CliError::validation(
                            "other",
                            "levy needs --other or --data",
                        ))
                    }
                    _ => {}
                }
                self.build_model("other")?;
            }
        }
        Ok(self)
    }

    fn present_fields(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        let mut add = |name, present: bool| {
            if present {
                v.push(name);
            }
        };
        add("lambda", self.lambda.is_some());
        add("data", self.data.is_some());
        add("model", self.model.is_some());
        add("other", self.other.is_some());
        add("process", self.process.is_some());
        add("perturb", self.perturb.is_some());
        add("preset", self.preset.is_some());
        add("eps", self.eps.is_some());
        add("k", self.k.is_some());
        add("level", self.level.is_some());
        add("n", self.n.is_some());
        add("replicas", self.replicas.is_some());
        add("window", self.window.is_some());
        add("grid_step", self.grid_step.is_some());
        v
    }

    fn forbid_with_preset(&self) -> CliResult<()> {
        if self.lambda.is_some() {
            return Err(CliError::validation("lambda", "the preset fixes Λ"));
        }
        if self.model.is_some() {
            return Err(CliError::validation("model", "the preset fixes the model"));
        }
        Ok(())
    }

    pub(crate) fn require_lambda(&self) -> CliResult<lambda_var::LambdaFunction> {
        self.lambda
            .as_ref()
            .ok_or_else(|| CliError::validation("lambda", "missing Λ specification"))?
            .build()
            .map_err(|e| CliError::validation("lambda", e.to_string()))
    }

    pub(crate) fn require_model(
        &self,
        field: &'static str,
    ) -> CliResult<lambda_var::DistributionModel> {
        self.build_model(field)?
            .ok_or_else(|| CliError::validation(field, "missing model specification"))
    }

    pub(crate) fn build_model(
        &self,
        field: &'static str,
    ) -> CliResult<Option<lambda_var::DistributionModel>> {
        let spec = if field == "other" {
            &self.other
        } else {
            &self.model
        };
        spec.as_ref()
            .map(|s| {
                s.build()
                    .map_err(|e| CliError::validation(field, e.to_string()))
            })
            .transpose()
    }

    /// Resolved config with output paths and thread count removed; the
    /// config hash is taken over its canonical JSON.
    pub fn analysis_value(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut v {
            for k in ["out", "csv", "threads"] {
                m.remove(k);
            }
        }
        v
    }
}

fn positive(field: &'static str, v: usize) -> CliResult<usize> {
    if v == 0 {
        Err(CliError::validation(field, "must be at least 1"))
    } else {
        Ok(v)
    }
}

pub fn command_name(c: Command) -> &'static str {
    match c {
        Command::Compute => "compute",
        Command::Elicit => "elicit",
        Command::Robustness => "robustness",
        Command::Consistency => "consistency",
        Command::Backtest => "backtest",
        Command::Levy => "levy",
    }
}
