//! Sequential calibration of ΛVaR forecasts: data-process simulators with
//! continuous conditional laws, calibration sums and their statistic.

use crate::dist::{DataSet, DistributionModel, ModelSpec};
use crate::error::{invalid, Error, Result};
use crate::lambda::{parse_list, LambdaFunction};
use crate::measures::{crossing, ScanConfig};
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// A data-generating process whose conditional law `F_k` given the past
/// is known before `Y_k` is drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum DataProcess {
    Iid(DistributionModel),
    /// Hidden Markov chain of normal regimes. The conditional law given
    /// the observed past is the filter's predictive mixture.
    RegimeSwitchingNormal {
        states: Vec<(f64, f64)>,
        transition: Vec<Vec<f64>>,
        predictive: Vec<f64>,
        hidden: usize,
    },
    Garch11 {
        omega: f64,
        alpha: f64,
        beta: f64,
        last_variance: f64,
        last_y: f64,
    },
}

impl DataProcess {
    pub fn iid(model: DistributionModel) -> Result<Self> {
        if !model.is_continuous() {
            return invalid("iid process needs a continuous model");
        }
        Ok(Self::Iid(model))
    }

    pub fn regime_switching(
        states: Vec<(f64, f64)>,
        transition: Vec<Vec<f64>>,
        initial: usize,
    ) -> Result<Self> {
        let m = states.len();
        if m == 0 {
            return invalid("regime switching needs at least one state");
        }
        for (mu, sigma) in &states {
            DistributionModel::normal(*mu, *sigma)?;
        }
        if transition.len() != m || transition.iter().any(|r| r.len() != m) {
            return invalid(format!("transition matrix must be {m}x{m}"));
        }
        for row in &transition {
            if row.iter().any(|p| !(*p >= 0.0 && *p <= 1.0)) {
                return invalid("transition probabilities must lie in [0, 1]");
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return invalid(format!("transition row sums to {s}"));
            }
        }
        if initial >= m {
            return invalid(format!("initial state {initial} out of range"));
        }
        let mut predictive = vec![0.0; m];
        predictive[initial] = 1.0;
        Ok(Self::RegimeSwitchingNormal {
            states,
            transition,
            predictive,
            hidden: initial,
        })
    }

    /// Starts from the stationary variance and `Y₀ = 0`.
    pub fn garch11(omega: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(omega > 0.0 && alpha >= 0.0 && beta >= 0.0 && alpha + beta < 1.0) {
            return invalid("garch needs omega > 0, alpha, beta >= 0 and alpha + beta < 1");
        }
        Self::garch11_from(omega, alpha, beta, omega / (1.0 - alpha - beta), 0.0)
    }

    pub fn garch11_from(
        omega: f64,
        alpha: f64,
        beta: f64,
        last_variance: f64,
        last_y: f64,
    ) -> Result<Self> {
        if !(omega > 0.0 && alpha >= 0.0 && beta >= 0.0 && alpha + beta < 1.0) {
            return invalid("garch needs omega > 0, alpha, beta >= 0 and alpha + beta < 1");
        }
        if !(last_variance > 0.0 && last_variance.is_finite() && last_y.is_finite()) {
            return invalid("garch state must be finite with positive variance");
        }
        Ok(Self::Garch11 {
            omega,
            alpha,
            beta,
            last_variance,
            last_y,
        })
    }

    /// `F_k`, a function of the state before `Y_k` is drawn.
    pub fn conditional(&self) -> DistributionModel {
        match self {
            Self::Iid(m) => m.clone(),
            Self::RegimeSwitchingNormal {
                states, predictive, ..
            } => {
                let mut weights = Vec::new();
                let mut comps = Vec::new();
                for (p, (mu, sigma)) in predictive.iter().zip(states) {
                    if *p > 0.0 {
                        weights.push(*p);
                        comps
                            .push(DistributionModel::normal(*mu, *sigma).expect("validated state"));
                    }
                }
                if comps.len() == 1 {
                    comps.pop().unwrap()
                } else {
                    DistributionModel::mixture(weights, comps).expect("normalised filter")
                }
            }
            Self::Garch11 {
                omega,
                alpha,
                beta,
                last_variance,
                last_y,
            } => {
                let v = garch_variance(*omega, *alpha, *beta, *last_variance, *last_y);
                DistributionModel::normal(0.0, v.sqrt()).expect("positive variance")
            }
        }
    }

    /// Draws `Y_k` and advances the state.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        match self {
            Self::Iid(m) => m.sample_one(rng),
            Self::RegimeSwitchingNormal {
                states,
                transition,
                predictive,
                hidden,
            } => {
                let (mu, sigma) = states[*hidden];
                let y = DistributionModel::normal(mu, sigma)
                    .unwrap()
                    .sample_one(rng);
                // filter update, then one-step prediction
                let mut post: Vec<f64> = predictive
                    .iter()
                    .zip(states.iter())
                    .map(|(p, (m, s))| p * crate::normal::pdf((y - m) / s) / s)
                    .collect();
                let total: f64 = post.iter().sum();
                if total > 0.0 && total.is_finite() {
                    post.iter_mut().for_each(|p| *p /= total);
                } else {
                    post = predictive.clone();
                }
                let m = states.len();
                let mut next = vec![0.0; m];
                for (i, pi) in post.iter().enumerate() {
                    for (j, nj) in next.iter_mut().enumerate() {
                        *nj += pi * transition[i][j];
                    }
                }
                next.iter_mut().for_each(|p| {
                    if *p < 1e-300 {
                        *p = 0.0
                    }
                });
                let total: f64 = next.iter().sum();
                next.iter_mut().for_each(|p| *p /= total);
                *predictive = next;
                let u: f64 = rng.sample(Open01);
                let row = &transition[*hidden];
                let mut acc = 0.0;
                let mut to = m - 1;
                for (j, p) in row.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        to = j;
                        break;
                    }
                }
                *hidden = to;
                y
            }
            Self::Garch11 {
                omega,
                alpha,
                beta,
                last_variance,
                last_y,
            } => {
                let v = garch_variance(*omega, *alpha, *beta, *last_variance, *last_y);
                let y = DistributionModel::normal(0.0, v.sqrt())
                    .unwrap()
                    .sample_one(rng);
                *last_variance = v;
                *last_y = y;
                y
            }
        }
    }

    /// `(F_k, Y_k)`: the conditional law is fixed before the draw.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (DistributionModel, f64) {
        let f = self.conditional();
        let y = self.advance(rng);
        (f, y)
    }
}

fn garch_variance(omega: f64, alpha: f64, beta: f64, last_variance: f64, last_y: f64) -> f64 {
    omega + alpha * last_y * last_y + beta * last_variance
}

/// Serializable process description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    Iid {
        model: ModelSpec,
    },
    RegimeSwitchingNormal {
        states: Vec<[f64; 2]>,
        transition: Vec<Vec<f64>>,
        #[serde(default)]
        initial: usize,
    },
    Garch11 {
        omega: f64,
        alpha: f64,
        beta: f64,
    },
}

impl ProcessSpec {
    pub fn build(&self) -> Result<DataProcess> {
        match self {
            Self::Iid { model } => DataProcess::iid(model.build()?),
            Self::RegimeSwitchingNormal {
                states,
                transition,
                initial,
            } => DataProcess::regime_switching(
                states.iter().map(|[m, s]| (*m, *s)).collect(),
                transition.clone(),
                *initial,
            ),
            Self::Garch11 { omega, alpha, beta } => DataProcess::garch11(*omega, *alpha, *beta),
        }
    }
}

/// Flag syntax: `iid:<model>`, `garch:omega,alpha,beta`,
/// `regime:mu1,s1;mu2,s2|p11,p12;p21,p22[|initial]`.
impl FromStr for ProcessSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let Some((kind, rest)) = s.split_once(':') else {
            return invalid(format!("process `{s}` needs kind:parameters"));
        };
        match kind.trim() {
            "iid" => Ok(Self::Iid {
                model: rest.parse()?,
            }),
            "garch" | "garch11" => match parse_list(rest)?.as_slice() {
                [omega, alpha, beta] => Ok(Self::Garch11 {
                    omega: *omega,
                    alpha: *alpha,
                    beta: *beta,
                }),
                _ => invalid("garch takes omega,alpha,beta"),
            },
            "regime" | "regime_switching" => {
                let parts: Vec<&str> = rest.split('|').collect();
                if !(2..=3).contains(&parts.len()) {
                    return invalid("regime takes states|transition[|initial]");
                }
                let mut states = Vec::new();
                for st in parts[0].split(';') {
                    match parse_list(st)?.as_slice() {
                        [m, s] => states.push([*m, *s]),
                        _ => return invalid(format!("state `{st}` is not mu,sigma")),
                    }
                }
                let transition = parts[1]
                    .split(';')
                    .map(parse_list)
                    .collect::<Result<Vec<_>>>()?;
                let initial = match parts.get(2) {
                    Some(p) => p
                        .trim()
                        .parse()
                        .map_err(|_| Error::InvalidInput(format!("bad initial state `{p}`")))?,
                    None => 0,
                };
                Ok(Self::RegimeSwitchingNormal {
                    states,
                    transition,
                    initial,
                })
            }
            other => invalid(format!("unknown process kind `{other}`")),
        }
    }
}

/// `l(x, y) = Λ(x) - 1{y ≤ x}`.
pub fn calibration(l: &LambdaFunction, t: f64, y: f64) -> f64 {
    l.eval(t) - if y <= t { 1.0 } else { 0.0 }
}

/// `λ - 1{y ≤ x}`.
pub fn var_calibration(lam: f64, t: f64, y: f64) -> f64 {
    lam - if y <= t { 1.0 } else { 0.0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub w: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub n: usize,
    pub per_step: Vec<StepRecord>,
    pub running_average: Vec<f64>,
    pub final_average: f64,
    /// `Σz / sqrt(Σ w(1 - w))`.
    pub standardized: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// False when the predictive laws are step functions, where the
    /// consistency theorem does not apply.
    pub continuous_predictors: bool,
}

fn assemble(
    per_step: Vec<StepRecord>,
    seed: Option<u64>,
    continuous_predictors: bool,
) -> ConsistencyReport {
    let mut running_average = Vec::with_capacity(per_step.len());
    let mut s = 0.0;
    let mut var = 0.0;
    for (i, r) in per_step.iter().enumerate() {
        s += r.z;
        var += r.w * (1.0 - r.w);
        running_average.push(s / (i + 1) as f64);
    }
    ConsistencyReport {
        n: per_step.len(),
        final_average: *running_average.last().unwrap_or(&0.0),
        standardized: if var > 0.0 { s / var.sqrt() } else { 0.0 },
        per_step,
        running_average,
        seed,
        continuous_predictors,
    }
}

fn simulate(
    process: &DataProcess,
    l: &LambdaFunction,
    n: usize,
    seed: u64,
) -> Result<(ConsistencyReport, Vec<f64>)> {
    if n == 0 {
        return invalid("number of steps must be positive");
    }
    let mut p = process.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ScanConfig::default();
    let mut cached: Option<(DistributionModel, f64)> = None;
    let mut per_step = Vec::with_capacity(n);
    let mut pit = Vec::with_capacity(n);
    for k in 1..=n {
        let f = p.conditional();
        let t = match &cached {
            Some((g, t)) if *g == f => *t,
            _ => {
                let (t, _) = crossing(&f, l, &cfg);
                cached = Some((f.clone(), t));
                t
            }
        };
        let w = l.eval(t);
        let y = p.advance(&mut rng);
        pit.push(f.cdf(y));
        per_step.push(StepRecord {
            k,
            t,
            w,
            y,
            z: calibration(l, t, y),
        });
    }
    Ok((assemble(per_step, Some(seed), true), pit))
}

/// Runs `n` steps of the process and accumulates `z_k = Λ(t_k) - 1{Y_k ≤ t_k}`
/// with `t_k = T_Λ(F_k)`.
pub fn run_consistency(
    process: &DataProcess,
    l: &LambdaFunction,
    n: usize,
    seed: u64,
) -> Result<ConsistencyReport> {
    simulate(process, l, n, seed).map(|(r, _)| r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PitDiagnostic {
    pub n: usize,
    /// Kolmogorov statistic of `U_k = F_k(Y_k)` against Uniform(0, 1).
    pub kolmogorov: f64,
    /// 1% critical value `1.63 / √n`.
    pub critical_value: f64,
    pub exceedance_frequency: f64,
    pub mean_w: f64,
    pub gap: f64,
}

fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() {
            (s - t) + x
        } else {
            (x - t) + s
        };
        s = t;
    }
    s + c
}

pub fn uniform_ks_statistic(us: &[f64]) -> f64 {
    let mut u = us.to_vec();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, v)| ((i + 1) as f64 / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max)
}

pub fn pit_check(
    process: &DataProcess,
    l: &LambdaFunction,
    n: usize,
    seed: u64,
) -> Result<PitDiagnostic> {
    let (report, pit) = simulate(process, l, n, seed)?;
    let nf = n as f64;
    let hits = report.per_step.iter().filter(|r| r.y <= r.t).count() as f64 / nf;
    let mean_w = compensated_sum(report.per_step.iter().map(|r| r.w)) / nf;
    Ok(PitDiagnostic {
        n,
        kolmogorov: uniform_ks_statistic(&pit),
        critical_value: 1.63 / nf.sqrt(),
        exceedance_frequency: hits,
        mean_w,
        gap: (hits - mean_w).abs(),
    })
}

/// Calibration statistic on observed data with a rolling empirical
/// predictor built from the previous `window` observations.
pub fn rolling_backtest(
    series: &DataSet,
    window: usize,
    l: &LambdaFunction,
) -> Result<ConsistencyReport> {
    let v = series.values();
    if window == 0 || v.len() <= window {
        return Err(Error::InvalidInput(format!(
            "series of length {} is too short for window {window}",
            v.len()
        )));
    }
    let cfg = ScanConfig::default();
    let mut per_step = Vec::with_capacity(v.len() - window);
    for k in window..v.len() {
        let f = DistributionModel::empirical(v[k - window..k].to_vec())?;
        let (t, _) = crossing(&f, l, &cfg);
        let y = v[k];
        per_step.push(StepRecord {
            k: k + 1,
            t,
            w: l.eval(t),
            y,
            z: calibration(l, t, y),
        });
    }
    Ok(assemble(per_step, None, false))
}
