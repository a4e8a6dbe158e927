//! The Λ confidence curve: right-continuous, monotone, bounded in
//! `[λᵐ, λᴹ] ⊂ (0, 1)`.
//!
//! Besides pointwise evaluation each shape carries a closed-form
//! antiderivative `Ψ` (normalized so `Ψ(0) = 0`) and, for nondecreasing
//! shapes, the generalized inverse `Λ⁻(y) = inf{x : Λ(x) ≥ y}`.

use crate::dist::DistributionModel;
use crate::error::{invalid, Error, Result};
use crate::normal;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Nondecreasing,
    Nonincreasing,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Constant {
        lam: f64,
    },
    /// Level `levels[i]` holds on `[breakpoints[i-1], breakpoints[i])`.
    Step {
        breakpoints: Vec<f64>,
        levels: Vec<f64>,
        #[serde(skip)]
        cum: Vec<f64>,
    },
    /// Linear interpolation between knots, constant beyond both ends.
    PiecewiseLinear {
        xs: Vec<f64>,
        values: Vec<f64>,
        #[serde(skip)]
        cum: Vec<f64>,
    },
    /// `λᵐ` left of `x_min`, `Φ((x-μ)/σ)` on `[x_min, x_max)`, `λᴹ` after.
    ClampedNormal {
        mu: f64,
        sigma: f64,
        x_min: f64,
        x_max: f64,
    },
}

/// How Λ behaves on a cell that contains no breakpoint in its interior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellBehaviour {
    Flat,
    StrictlyIncreasing,
    StrictlyDecreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaFunction {
    shape: Shape,
    lam_min: f64,
    lam_max: f64,
    monotonicity: Monotonicity,
}

fn check_level(v: f64, what: &str) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        invalid(format!("{what} {v} outside (0, 1)"))
    }
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite()) && xs.windows(2).all(|w| w[0] < w[1])
}

fn classify(values: &[f64]) -> Result<Monotonicity> {
    let up = values.windows(2).all(|w| w[0] <= w[1]);
    let down = values.windows(2).all(|w| w[0] >= w[1]);
    match (up, down) {
        (true, true) => Ok(Monotonicity::Constant),
        (true, false) => Ok(Monotonicity::Nondecreasing),
        (false, true) => Ok(Monotonicity::Nonincreasing),
        (false, false) => invalid("lambda levels are not monotone"),
    }
}

fn bounds(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        })
}

/// `∫ (t-μ)Φ((t-μ)/σ) dt`-style primitive of the normal CDF.
fn normal_cdf_primitive(t: f64, mu: f64, sigma: f64) -> f64 {
    let z = (t - mu) / sigma;
    (t - mu) * normal::cdf(z) + sigma * normal::pdf(z)
}

impl LambdaFunction {
    pub fn constant(lam: f64) -> Result<Self> {
        check_level(lam, "constant level")?;
        Ok(Self {
            shape: Shape::Constant { lam },
            lam_min: lam,
            lam_max: lam,
            monotonicity: Monotonicity::Constant,
        })
    }

    pub fn step(breakpoints: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if levels.len() != breakpoints.len() + 1 {
            return invalid("step function needs one more level than breakpoints");
        }
        if !strictly_increasing(&breakpoints) {
            return invalid("step breakpoints must be finite and strictly increasing");
        }
        for l in &levels {
            check_level(*l, "step level")?;
        }
        let monotonicity = classify(&levels)?;
        let (lam_min, lam_max) = bounds(&levels);
        let mut cum = vec![0.0; breakpoints.len()];
        for i in 1..breakpoints.len() {
            cum[i] = cum[i - 1] + levels[i] * (breakpoints[i] - breakpoints[i - 1]);
        }
        Ok(Self {
            shape: Shape::Step {
                breakpoints,
                levels,
                cum,
            },
            lam_min,
            lam_max,
            monotonicity,
        })
    }

    pub fn piecewise_linear(knots: &[(f64, f64)]) -> Result<Self> {
        if knots.is_empty() {
            return invalid("piecewise-linear lambda needs at least one knot");
        }
        let xs: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let values: Vec<f64> = knots.iter().map(|k| k.1).collect();
        if !strictly_increasing(&xs) {
            return invalid("knot abscissae must be finite and strictly increasing");
        }
        for v in &values {
            check_level(*v, "knot value")?;
        }
        let monotonicity = classify(&values)?;
        let (lam_min, lam_max) = bounds(&values);
        let mut cum = vec![0.0; xs.len()];
        for i in 1..xs.len() {
            cum[i] = cum[i - 1] + 0.5 * (values[i - 1] + values[i]) * (xs[i] - xs[i - 1]);
        }
        Ok(Self {
            shape: Shape::PiecewiseLinear { xs, values, cum },
            lam_min,
            lam_max,
            monotonicity,
        })
    }

    /// Clamped normal CDF with explicit clamp points. Requires
    /// `λᵐ ≤ Φ((x_min-μ)/σ)` and `Φ((x_max-μ)/σ) ≤ λᴹ` (to 1e-12).
    pub fn clamped_normal(
        mu: f64,
        sigma: f64,
        x_min: f64,
        x_max: f64,
        lam_min: f64,
        lam_max: f64,
    ) -> Result<Self> {
        if !(sigma > 0.0) || !mu.is_finite() || !sigma.is_finite() {
            return invalid(format!("clamped normal needs sigma > 0, got {sigma}"));
        }
        if !(x_min <= x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return invalid(format!(
                "clamp points must satisfy x_min <= x_max, got {x_min} > {x_max}"
            ));
        }
        check_level(lam_min, "lam_min")?;
        check_level(lam_max, "lam_max")?;
        if lam_min > lam_max {
            return invalid(format!("lam_min {lam_min} exceeds lam_max {lam_max}"));
        }
        let at_min = normal::cdf((x_min - mu) / sigma);
        let at_max = normal::cdf((x_max - mu) / sigma);
        if lam_min > at_min + 1e-12 || at_max > lam_max + 1e-12 {
            return invalid(format!(
                "clamps break monotonicity: Φ at x_min = {at_min}, Φ at x_max = {at_max}"
            ));
        }
        Ok(Self {
            shape: Shape::ClampedNormal {
                mu,
                sigma,
                x_min,
                x_max,
            },
            lam_min,
            lam_max,
            monotonicity: Monotonicity::Nondecreasing,
        })
    }

    /// Clamped normal whose clamp levels are the CDF values at the clamp points.
    pub fn clamped_normal_from_breaks(mu: f64, sigma: f64, x_min: f64, x_max: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return invalid(format!("clamped normal needs sigma > 0, got {sigma}"));
        }
        let lo = normal::cdf((x_min - mu) / sigma);
        let hi = normal::cdf((x_max - mu) / sigma);
        Self::clamped_normal(mu, sigma, x_min, x_max, lo, hi)
    }

    /// Continuous clamped normal meeting `λᵐ` and `λᴹ` at its clamp points.
    pub fn clamped_normal_continuous(
        mu: f64,
        sigma: f64,
        lam_min: f64,
        lam_max: f64,
    ) -> Result<Self> {
        check_level(lam_min, "lam_min")?;
        check_level(lam_max, "lam_max")?;
        let x_min = mu + sigma * normal::quantile(lam_min);
        let x_max = mu + sigma * normal::quantile(lam_max);
        Self::clamped_normal(mu, sigma, x_min, x_max, lam_min, lam_max)
    }

    /// `ε + {0 for x<-101; (x+101)/100 on [-101,-99); 2% after}` with
    /// `ε ∈ (0, 0.005)`, against which a two-point P&L at -100/4 is not
    /// minimized by its own crossing.
    pub fn counterexample(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.005) {
            return invalid(format!("counterexample eps {eps} outside (0, 0.005)"));
        }
        Self::piecewise_linear(&[(-101.0, eps), (-99.0, eps + 0.02)])
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn lam_min(&self) -> f64 {
        self.lam_min
    }

    pub fn lam_max(&self) -> f64 {
        self.lam_max
    }

    pub fn monotonicity(&self) -> Monotonicity {
        self.monotonicity
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.monotonicity != Monotonicity::Nonincreasing
    }

    pub fn is_constant(&self) -> Option<f64> {
        match self.shape {
            Shape::Constant { lam } => Some(lam),
            _ => None,
        }
    }

    pub fn is_continuous(&self) -> bool {
        match &self.shape {
            Shape::Constant { .. } | Shape::PiecewiseLinear { .. } => true,
            Shape::Step { .. } => self.monotonicity == Monotonicity::Constant,
            Shape::ClampedNormal { x_min, x_max, .. } => {
                (self.eval(*x_min) - self.lam_min).abs() <= 1e-12
                    && (self.eval_left(*x_max) - self.lam_max).abs() <= 1e-12
            }
        }
    }

    /// Locations where Λ changes formula.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Constant { .. } => Vec::new(),
            Shape::Step { breakpoints, .. } => breakpoints.clone(),
            Shape::PiecewiseLinear { xs, .. } => xs.clone(),
            Shape::ClampedNormal { x_min, x_max, .. } => {
                if x_min == x_max {
                    vec![*x_min]
                } else {
                    vec![*x_min, *x_max]
                }
            }
        }
    }

    /// Right-continuous value `Λ(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Constant { lam } => *lam,
            Shape::Step {
                breakpoints,
                levels,
                ..
            } => levels[breakpoints.partition_point(|b| *b <= x)],
            Shape::PiecewiseLinear { xs, values, .. } => {
                let n = xs.len();
                if x <= xs[0] {
                    return values[0];
                }
                if x >= xs[n - 1] {
                    return values[n - 1];
                }
                let i = xs.partition_point(|k| *k <= x) - 1;
                let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
                values[i] + t * (values[i + 1] - values[i])
            }
            Shape::ClampedNormal {
                mu,
                sigma,
                x_min,
                x_max,
            } => {
                if x < *x_min {
                    self.lam_min
                } else if x >= *x_max {
                    self.lam_max
                } else {
                    normal::cdf((x - mu) / sigma).clamp(self.lam_min, self.lam_max)
                }
            }
        }
    }

    /// `lim_{t↑x} Λ(t)`.
    pub fn eval_left(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Step {
                breakpoints,
                levels,
                ..
            } => levels[breakpoints.partition_point(|b| *b < x)],
            Shape::ClampedNormal {
                mu,
                sigma,
                x_min,
                x_max,
            } => {
                if x <= *x_min {
                    self.lam_min
                } else if x > *x_max {
                    self.lam_max
                } else {
                    normal::cdf((x - mu) / sigma).clamp(self.lam_min, self.lam_max)
                }
            }
            _ => self.eval(x),
        }
    }

    /// Behaviour of Λ on `[a, b)`; the cell must not straddle a breakpoint.
    pub fn cell_behaviour(&self, a: f64, b: f64) -> CellBehaviour {
        let mid = if b.is_finite() && a.is_finite() {
            0.5 * (a + b)
        } else if a.is_finite() {
            a + 1.0
        } else if b.is_finite() {
            b - 1.0
        } else {
            0.0
        };
        match &self.shape {
            Shape::Constant { .. } | Shape::Step { .. } => CellBehaviour::Flat,
            Shape::PiecewiseLinear { xs, values, .. } => {
                if mid <= xs[0] || mid >= xs[xs.len() - 1] {
                    return CellBehaviour::Flat;
                }
                let i = xs.partition_point(|k| *k <= mid) - 1;
                match values[i + 1].partial_cmp(&values[i]) {
                    Some(std::cmp::Ordering::Greater) => CellBehaviour::StrictlyIncreasing,
                    Some(std::cmp::Ordering::Less) => CellBehaviour::StrictlyDecreasing,
                    _ => CellBehaviour::Flat,
                }
            }
            Shape::ClampedNormal { x_min, x_max, .. } => {
                if mid < *x_min || mid >= *x_max {
                    CellBehaviour::Flat
                } else {
                    CellBehaviour::StrictlyIncreasing
                }
            }
        }
    }

    /// Solves `Λ(x) = level` inside a strictly monotone cell `(a, b)`.
    pub fn solve_in_cell(&self, level: f64, a: f64, b: f64) -> Option<f64> {
        let x = match &self.shape {
            Shape::PiecewiseLinear { xs, values, .. } => {
                let mid = 0.5 * (a + b);
                if mid <= xs[0] || mid >= xs[xs.len() - 1] {
                    return None;
                }
                let i = xs.partition_point(|k| *k <= mid) - 1;
                let dv = values[i + 1] - values[i];
                if dv == 0.0 {
                    return None;
                }
                xs[i] + (level - values[i]) / dv * (xs[i + 1] - xs[i])
            }
            Shape::ClampedNormal { mu, sigma, .. } => mu + sigma * normal::quantile(level),
            _ => return None,
        };
        (x > a && x < b).then_some(x)
    }

    /// Primitive anchored at the first breakpoint (arbitrary constant).
    fn primitive(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Constant { lam } => lam * x,
            Shape::Step {
                breakpoints,
                levels,
                cum,
            } => {
                if breakpoints.is_empty() {
                    return levels[0] * x;
                }
                let j = breakpoints.partition_point(|b| *b <= x);
                if j == 0 {
                    levels[0] * (x - breakpoints[0])
                } else {
                    cum[j - 1] + levels[j] * (x - breakpoints[j - 1])
                }
            }
            Shape::PiecewiseLinear { xs, values, cum } => {
                let n = xs.len();
                if x <= xs[0] {
                    return values[0] * (x - xs[0]);
                }
                if x >= xs[n - 1] {
                    return cum[n - 1] + values[n - 1] * (x - xs[n - 1]);
                }
                let i = xs.partition_point(|k| *k <= x) - 1;
                let h = x - xs[i];
                let slope = (values[i + 1] - values[i]) / (xs[i + 1] - xs[i]);
                cum[i] + h * (values[i] + 0.5 * slope * h)
            }
            Shape::ClampedNormal {
                mu,
                sigma,
                x_min,
                x_max,
            } => {
                if x <= *x_min {
                    return self.lam_min * (x - x_min);
                }
                let g_min = normal_cdf_primitive(*x_min, *mu, *sigma);
                if x <= *x_max {
                    return normal_cdf_primitive(x, *mu, *sigma) - g_min;
                }
                normal_cdf_primitive(*x_max, *mu, *sigma) - g_min + self.lam_max * (x - x_max)
            }
        }
    }

    /// `Ψ(x) = ∫₀ˣ Λ(t) dt`.
    pub fn antiderivative(&self, x: f64) -> f64 {
        self.primitive(x) - self.primitive(0.0)
    }

    /// `∫ₐᵇ Λ(t) dt` (signed).
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.primitive(b) - self.primitive(a)
    }

    /// `Λ⁻(y) = inf{x : Λ(x) ≥ y}`; `-∞` when every `x` qualifies and
    /// `+∞` when none does.
    pub fn generalized_inverse(&self, y: f64) -> Result<f64> {
        if !self.is_nondecreasing() {
            return Err(Error::UnsupportedMonotonicity);
        }
        let left = self.eval(f64::NEG_INFINITY);
        let right = self.eval(f64::INFINITY);
        if y <= left {
            return Ok(f64::NEG_INFINITY);
        }
        if y > right {
            return Ok(f64::INFINITY);
        }
        let x = match &self.shape {
            Shape::Constant { .. } => unreachable!("constant handled by the limits"),
            Shape::Step {
                breakpoints,
                levels,
                ..
            } => {
                let j = levels.partition_point(|l| *l < y);
                return Ok(breakpoints[j - 1]);
            }
            Shape::PiecewiseLinear { xs, values, .. } => {
                let j = values.partition_point(|v| *v < y);
                let t = (y - values[j - 1]) / (values[j] - values[j - 1]);
                (xs[j - 1] + t * (xs[j] - xs[j - 1])).min(xs[j])
            }
            Shape::ClampedNormal {
                mu,
                sigma,
                x_min,
                x_max,
            } => {
                if y <= self.eval(*x_min) {
                    return Ok(*x_min);
                }
                if y > self.eval_left(*x_max) {
                    return Ok(*x_max);
                }
                (mu + sigma * normal::quantile(y)).clamp(*x_min, *x_max)
            }
        };
        Ok(self.nudge_up(x, y))
    }

    // Rounding may leave Λ(x) a few ulps short of y; step right until it is not.
    fn nudge_up(&self, mut x: f64, y: f64) -> f64 {
        for _ in 0..64 {
            if self.eval(x) >= y {
                return x;
            }
            x = x.next_up();
        }
        x
    }
}

/// Free parameters of the clamped-normal construction over a normal family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampedNormalParams {
    /// `μ = max μᵢ + mu_offset`, must be positive.
    pub mu_offset: f64,
    /// `σ = min σᵢ · sigma_factor`, must lie in `(0, 1)`.
    pub sigma_factor: f64,
}

impl Default for ClampedNormalParams {
    fn default() -> Self {
        Self {
            mu_offset: 1.0,
            sigma_factor: 0.5,
        }
    }
}

/// Builds a continuous nondecreasing clamped-normal Λ under which every
/// model of the family crosses Λ exactly once.
pub fn build_clamped_normal(
    models: &[DistributionModel],
    lam_min: f64,
    lam_max: f64,
    params: ClampedNormalParams,
) -> Result<LambdaFunction> {
    if models.is_empty() {
        return invalid("clamped-normal construction needs at least one model");
    }
    if lam_min > lam_max {
        return invalid(format!("lam_min {lam_min} exceeds lam_max {lam_max}"));
    }
    if !(params.mu_offset > 0.0) || !(params.sigma_factor > 0.0 && params.sigma_factor < 1.0) {
        return invalid("mu_offset must be > 0 and sigma_factor in (0, 1)");
    }
    let mut mu_bar = f64::NEG_INFINITY;
    let mut sigma_low = f64::INFINITY;
    for m in models {
        match m {
            DistributionModel::Normal(n) => {
                mu_bar = mu_bar.max(n.mu());
                sigma_low = sigma_low.min(n.sigma());
            }
            _ => return invalid("clamped-normal construction accepts normal models only"),
        }
    }
    LambdaFunction::clamped_normal_continuous(
        mu_bar + params.mu_offset,
        sigma_low * params.sigma_factor,
        lam_min,
        lam_max,
    )
}

/// Serializable description of a Λ function, as accepted on the command
/// line and in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaSpec {
    Constant {
        lam: f64,
    },
    Step {
        breakpoints: Vec<f64>,
        levels: Vec<f64>,
    },
    PiecewiseLinear {
        knots: Vec<[f64; 2]>,
    },
    ClampedNormal {
        mu: f64,
        sigma: f64,
        lam_min: f64,
        lam_max: f64,
    },
    Counterexample {
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_eps() -> f64 {
    0.004
}

impl LambdaSpec {
    pub fn build(&self) -> Result<LambdaFunction> {
        match self {
            Self::Constant { lam } => LambdaFunction::constant(*lam),
            Self::Step {
                breakpoints,
                levels,
            } => LambdaFunction::step(breakpoints.clone(), levels.clone()),
            Self::PiecewiseLinear { knots } => {
                let k: Vec<(f64, f64)> = knots.iter().map(|p| (p[0], p[1])).collect();
                LambdaFunction::piecewise_linear(&k)
            }
            Self::ClampedNormal {
                mu,
                sigma,
                lam_min,
                lam_max,
            } => LambdaFunction::clamped_normal_continuous(*mu, *sigma, *lam_min, *lam_max),
            Self::Counterexample { eps } => LambdaFunction::counterexample(*eps),
        }
    }
}

pub(crate) fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::InvalidInput(format!("`{t}` is not a finite real")))
        })
        .collect()
}

/// Flag syntax: `constant:0.05`, `counterexample[:eps]`,
/// `clamped_normal:mu,sigma,lam_min,lam_max`, `step:b1,b2;l0,l1,l2`,
/// `linear:x1,v1;x2,v2;...`.
impl FromStr for LambdaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, rest) = match s.split_once(':') {
            Some((k, r)) => (k.trim(), Some(r.trim())),
            None => (s, None),
        };
        fn need<'a>(kind: &str, r: Option<&'a str>) -> Result<&'a str> {
            r.filter(|r| !r.is_empty()).ok_or_else(|| {
                Error::InvalidInput(format!("lambda kind `{kind}` needs parameters"))
            })
        }
        match kind {
            "constant" => {
                let v = parse_list(need(kind, rest)?)?;
                match v.as_slice() {
                    [lam] => Ok(Self::Constant { lam: *lam }),
                    _ => invalid("constant takes exactly one level"),
                }
            }
            "counterexample" => match rest {
                None | Some("") => Ok(Self::Counterexample { eps: default_eps() }),
                Some(r) => match parse_list(r)?.as_slice() {
                    [eps] => Ok(Self::Counterexample { eps: *eps }),
                    _ => invalid("counterexample takes one eps"),
                },
            },
            "clamped_normal" => match parse_list(need(kind, rest)?)?.as_slice() {
                [mu, sigma, lam_min, lam_max] => Ok(Self::ClampedNormal {
                    mu: *mu,
                    sigma: *sigma,
                    lam_min: *lam_min,
                    lam_max: *lam_max,
                }),
                _ => invalid("clamped_normal takes mu,sigma,lam_min,lam_max"),
            },
            "step" => {
                let r = need(kind, rest)?;
                let (b, l) = r
                    .split_once(';')
                    .ok_or_else(|| Error::InvalidInput("step takes breakpoints;levels".into()))?;
                let breakpoints = if b.trim().is_empty() {
                    Vec::new()
                } else {
                    parse_list(b)?
                };
                Ok(Self::Step {
                    breakpoints,
                    levels: parse_list(l)?,
                })
            }
            "linear" | "piecewise_linear" => {
                let mut knots = Vec::new();
                for pair in need(kind, rest)?.split(';') {
                    match parse_list(pair)?.as_slice() {
                        [x, v] => knots.push([*x, *v]),
                        _ => return invalid(format!("knot `{pair}` is not x,value")),
                    }
                }
                Ok(Self::PiecewiseLinear { knots })
            }
            other => invalid(format!("unknown lambda kind `{other}`")),
        }
    }
}
