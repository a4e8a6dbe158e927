//! P&L distribution models and data sets.
//!
//! Every model exposes a right-continuous CDF, its left limit, both
//! generalized quantiles and an inverse-transform sampler. Step models
//! (empirical, discrete and mixtures of those) are evaluated exactly from
//! their atoms; normal components go through [`crate::normal`].

use crate::error::{invalid, Error, Result};
use crate::normal;
use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::str::FromStr;

/// A labelled tuple of finite P&L observations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataSet {
    values: Vec<f64>,
    label: String,
}

impl DataSet {
    pub fn new(values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return invalid("data set is empty");
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite value at index {i}"));
        }
        Ok(Self {
            values,
            label: label.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Parses one real per line. A non-numeric first line is taken as a
    /// header; blank lines are skipped. Line numbers in errors are 1-based.
    pub fn from_csv_str(text: &str, label: impl Into<String>) -> Result<Self> {
        let mut values = Vec::new();
        let mut seen_content = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let first = !seen_content;
            seen_content = true;
            match line.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                Ok(_) => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("non-finite value `{line}`"),
                    })
                }
                Err(_) if first && looks_like_header(line) => {}
                Err(_) => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected a real number, found `{line}`"),
                    })
                }
            }
        }
        if values.is_empty() {
            return invalid("no observations in input");
        }
        Self::new(values, label)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        Self::from_csv_str(&text, path.display().to_string())
    }
}

fn looks_like_header(line: &str) -> bool {
    line.chars().any(|c| c.is_alphabetic() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Empirical {
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discrete {
    values: Vec<f64>,
    probs: Vec<f64>,
    #[serde(skip)]
    cum: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Normal {
    mu: f64,
    sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mixture {
    weights: Vec<f64>,
    components: Vec<DistributionModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionModel {
    Empirical(Empirical),
    Discrete(Discrete),
    Normal(Normal),
    Mixture(Mixture),
}

impl Empirical {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn count_le(&self, x: f64) -> usize {
        self.values.partition_point(|v| *v <= x)
    }

    fn count_lt(&self, x: f64) -> usize {
        self.values.partition_point(|v| *v < x)
    }
}

impl Discrete {
    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().copied().zip(self.probs.iter().copied())
    }

    fn cum_before(&self, idx: usize) -> f64 {
        if idx == 0 {
            0.0
        } else {
            self.cum[idx - 1]
        }
    }
}

impl Normal {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl Mixture {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[DistributionModel] {
        &self.components
    }
}

/// Builds the empirical distribution of a data set.
pub fn empirical_from(data: &DataSet) -> DistributionModel {
    let mut values = data.values.clone();
    values.sort_by(f64::total_cmp);
    DistributionModel::Empirical(Empirical { values })
}

impl DistributionModel {
    pub fn empirical(values: Vec<f64>) -> Result<Self> {
        Ok(empirical_from(&DataSet::new(values, "")?))
    }

    pub fn discrete(atoms: &[(f64, f64)]) -> Result<Self> {
        if atoms.is_empty() {
            return invalid("discrete model needs at least one atom");
        }
        let mut sorted: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for &(v, p) in atoms {
            if !v.is_finite() {
                return invalid(format!("atom value {v} is not finite"));
            }
            if !(p > 0.0 && p <= 1.0) {
                return invalid(format!("atom probability {p} outside (0, 1]"));
            }
            sorted.push((v, p));
        }
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut probs: Vec<f64> = Vec::with_capacity(sorted.len());
        for (v, p) in sorted {
            match values.last() {
                Some(&last) if last == v => *probs.last_mut().unwrap() += p,
                _ => {
                    values.push(v);
                    probs.push(p);
                }
            }
        }
        let mut cum = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cum.push(acc);
        }
        if (acc - 1.0).abs() > 1e-12 {
            return invalid(format!("atom probabilities sum to {acc}, expected 1"));
        }
        *cum.last_mut().unwrap() = 1.0;
        Ok(Self::Discrete(Discrete { values, probs, cum }))
    }

    pub fn point_mass(c: f64) -> Result<Self> {
        Self::discrete(&[(c, 1.0)])
    }

    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
            return invalid(format!(
                "normal needs finite mu and sigma > 0, got ({mu}, {sigma})"
            ));
        }
        Ok(Self::Normal(Normal { mu, sigma }))
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<DistributionModel>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return invalid("mixture needs one weight per component");
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && **w <= 1.0)) {
            return invalid(format!("mixture weight {w} outside (0, 1]"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("mixture weights sum to {total}, expected 1"));
        }
        Ok(Self::Mixture(Mixture {
            weights,
            components,
        }))
    }

    /// `alpha * a + (1 - alpha) * b`, collapsing the degenerate weights.
    pub fn convex_combination(alpha: f64, a: &Self, b: &Self) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return invalid(format!("mixing weight {alpha} outside [0, 1]"));
        }
        if alpha == 1.0 {
            return Ok(a.clone());
        }
        if alpha == 0.0 {
            return Ok(b.clone());
        }
        Self::mixture(vec![alpha, 1.0 - alpha], vec![a.clone(), b.clone()])
    }

    /// Right-continuous distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::Empirical(e) => e.count_le(x) as f64 / e.values.len() as f64,
            Self::Discrete(d) => d.cum_before(d.values.partition_point(|v| *v <= x)),
            Self::Normal(n) => normal::cdf((x - n.mu) / n.sigma),
            Self::Mixture(m) => m
                .weights
                .iter()
                .zip(&m.components)
                .map(|(w, c)| w * c.cdf(x))
                .sum(),
        }
    }

    /// `lim_{t↑x} F(t)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        match self {
            Self::Empirical(e) => e.count_lt(x) as f64 / e.values.len() as f64,
            Self::Discrete(d) => d.cum_before(d.values.partition_point(|v| *v < x)),
            Self::Normal(_) => self.cdf(x),
            Self::Mixture(m) => m
                .weights
                .iter()
                .zip(&m.components)
                .map(|(w, c)| w * c.cdf_left(x))
                .sum(),
        }
    }

    pub fn pdf(&self, x: f64) -> Option<f64> {
        match self {
            Self::Normal(n) => Some(normal::pdf((x - n.mu) / n.sigma) / n.sigma),
            Self::Mixture(m) => m
                .weights
                .iter()
                .zip(&m.components)
                .map(|(w, c)| c.pdf(x).map(|p| w * p))
                .sum(),
            _ => None,
        }
    }

    /// True when the CDF is a finite step function.
    pub fn is_step(&self) -> bool {
        match self {
            Self::Empirical(_) | Self::Discrete(_) => true,
            Self::Normal(_) => false,
            Self::Mixture(m) => m.components.iter().all(Self::is_step),
        }
    }

    /// True when the CDF is continuous everywhere.
    pub fn is_continuous(&self) -> bool {
        match self {
            Self::Empirical(_) | Self::Discrete(_) => false,
            Self::Normal(_) => true,
            Self::Mixture(m) => m.components.iter().all(Self::is_continuous),
        }
    }

    /// Sorted, deduplicated atom locations of all step parts.
    pub fn support_points(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_support(&mut out);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn collect_support(&self, out: &mut Vec<f64>) {
        match self {
            Self::Empirical(e) => out.extend_from_slice(&e.values),
            Self::Discrete(d) => out.extend_from_slice(&d.values),
            Self::Normal(_) => {}
            Self::Mixture(m) => m.components.iter().for_each(|c| c.collect_support(out)),
        }
    }

    /// Atoms `(value, mass)` of a step model, merged and sorted. Empty for
    /// models with a continuous part.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        if !self.is_step() {
            return Vec::new();
        }
        let mut raw = Vec::new();
        self.collect_atoms(1.0, &mut raw);
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (v, p) in raw {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        merged
    }

    fn collect_atoms(&self, scale: f64, out: &mut Vec<(f64, f64)>) {
        match self {
            Self::Empirical(e) => {
                let n = e.values.len();
                let mut i = 0;
                while i < n {
                    let v = e.values[i];
                    let j = e.values[i..].partition_point(|x| *x == v) + i;
                    out.push((v, scale * (j - i) as f64 / n as f64));
                    i = j;
                }
            }
            Self::Discrete(d) => out.extend(d.atoms().map(|(v, p)| (v, scale * p))),
            Self::Normal(_) => {}
            Self::Mixture(m) => {
                for (w, c) in m.weights.iter().zip(&m.components) {
                    c.collect_atoms(scale * w, out);
                }
            }
        }
    }

    /// Upper quantile `q⁺_λ = inf{x : F(x) > λ}`.
    pub fn quantile_plus(&self, lam: f64) -> f64 {
        self.quantile(lam, true)
    }

    /// Lower quantile `q⁻_λ = inf{x : F(x) ≥ λ}`.
    pub fn quantile_minus(&self, lam: f64) -> f64 {
        self.quantile(lam, false)
    }

    fn quantile(&self, lam: f64, strict: bool) -> f64 {
        let hit = |p: f64| if strict { p > lam } else { p >= lam };
        match self {
            Self::Normal(n) => n.mu + n.sigma * normal::quantile(lam),
            Self::Empirical(e) => {
                let n = e.values.len() as f64;
                let idx = e
                    .values
                    .partition_point(|v| !hit(e.count_le(*v) as f64 / n));
                e.values[idx.min(e.values.len() - 1)]
            }
            Self::Discrete(d) => {
                let idx = d.cum.partition_point(|c| !hit(*c));
                d.values[idx.min(d.values.len() - 1)]
            }
            Self::Mixture(m) => {
                if self.is_step() {
                    let support = self.support_points();
                    let idx = support.partition_point(|b| !hit(self.cdf(*b)));
                    return support[idx.min(support.len() - 1)];
                }
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for c in &m.components {
                    lo = lo.min(c.quantile_minus(lam));
                    hi = hi.max(c.quantile_plus(lam));
                }
                let (mut lo, mut hi) = (lo - 1.0, hi + 1.0);
                while hi - lo > 1e-10 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if hit(self.cdf(mid)) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            }
        }
    }

    pub fn mean(&self) -> Result<f64> {
        let m = match self {
            Self::Empirical(e) => e.values.iter().sum::<f64>() / e.values.len() as f64,
            Self::Discrete(d) => d.atoms().map(|(v, p)| v * p).sum(),
            Self::Normal(n) => n.mu,
            Self::Mixture(m) => {
                let mut acc = 0.0;
                for (w, c) in m.weights.iter().zip(&m.components) {
                    acc += w * c.mean()?;
                }
                acc
            }
        };
        if m.is_finite() {
            Ok(m)
        } else {
            Err(Error::NotInD1)
        }
    }

    /// `E[X ; X < q]`.
    pub fn partial_expectation_below(&self, q: f64) -> f64 {
        match self {
            Self::Empirical(e) => {
                let k = e.count_lt(q);
                e.values[..k].iter().sum::<f64>() / e.values.len() as f64
            }
            Self::Discrete(d) => d
                .atoms()
                .take_while(|(v, _)| *v < q)
                .map(|(v, p)| v * p)
                .sum(),
            Self::Normal(n) => {
                let z = (q - n.mu) / n.sigma;
                n.mu * normal::cdf(z) + n.sigma * normal::partial_mean_below(z)
            }
            Self::Mixture(m) => m
                .weights
                .iter()
                .zip(&m.components)
                .map(|(w, c)| w * c.partial_expectation_below(q))
                .sum(),
        }
    }

    /// Interval holding all atoms and the `[1e-8, 1 - 1e-8]` quantile range
    /// of every continuous part.
    pub fn hull(&self) -> (f64, f64) {
        match self {
            Self::Empirical(e) => (e.values[0], *e.values.last().unwrap()),
            Self::Discrete(d) => (d.values[0], *d.values.last().unwrap()),
            Self::Normal(n) => {
                let z = normal::quantile(1e-8);
                (n.mu + n.sigma * z, n.mu - n.sigma * z)
            }
            Self::Mixture(m) => m
                .components
                .iter()
                .map(Self::hull)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
                    (lo.min(a), hi.max(b))
                }),
        }
    }

    /// The law of `X + delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        self.affine(1.0, delta)
    }

    /// The law of `factor * X`, `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return invalid(format!("scale factor {factor} must be positive"));
        }
        Ok(self.affine(factor, 0.0))
    }

    fn affine(&self, a: f64, b: f64) -> Self {
        match self {
            Self::Empirical(e) => Self::Empirical(Empirical {
                values: e.values.iter().map(|v| a * v + b).collect(),
            }),
            Self::Discrete(d) => Self::Discrete(Discrete {
                values: d.values.iter().map(|v| a * v + b).collect(),
                probs: d.probs.clone(),
                cum: d.cum.clone(),
            }),
            Self::Normal(n) => Self::Normal(Normal {
                mu: a * n.mu + b,
                sigma: a * n.sigma,
            }),
            Self::Mixture(m) => Self::Mixture(Mixture {
                weights: m.weights.clone(),
                components: m.components.iter().map(|c| c.affine(a, b)).collect(),
            }),
        }
    }

    /// One inverse-transform draw. Each non-mixture variant consumes exactly
    /// one uniform, so models related by a monotone map stay coupled when
    /// driven by the same stream.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Mixture(m) => {
                let u: f64 = rng.sample(Open01);
                let mut acc = 0.0;
                let last = m.components.len() - 1;
                for (i, (w, c)) in m.weights.iter().zip(&m.components).enumerate() {
                    acc += w;
                    if u <= acc || i == last {
                        return c.sample_one(rng);
                    }
                }
                unreachable!()
            }
            _ => {
                let u: f64 = rng.sample(Open01);
                self.inverse_transform(u)
            }
        }
    }

    fn inverse_transform(&self, u: f64) -> f64 {
        match self {
            Self::Empirical(e) => {
                let n = e.values.len();
                e.values[((u * n as f64) as usize).min(n - 1)]
            }
            Self::Discrete(d) => {
                let idx = d.cum.partition_point(|c| *c < u);
                d.values[idx.min(d.values.len() - 1)]
            }
            Self::Normal(n) => n.mu + n.sigma * normal::quantile(u),
            Self::Mixture(_) => self.quantile_minus(u),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<DataSet> {
        if n == 0 {
            return invalid("sample size must be at least 1");
        }
        let values = (0..n).map(|_| self.sample_one(rng)).collect();
        DataSet::new(values, "sample")
    }
}

/// Serializable description of a model, validated by [`ModelSpec::build`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Normal {
        mu: f64,
        sigma: f64,
    },
    PointMass {
        value: f64,
    },
    Empirical {
        values: Vec<f64>,
    },
    Discrete {
        atoms: Vec<[f64; 2]>,
    },
    Mixture {
        weights: Vec<f64>,
        components: Vec<ModelSpec>,
    },
}

impl ModelSpec {
    pub fn build(&self) -> Result<DistributionModel> {
        match self {
            Self::Normal { mu, sigma } => DistributionModel::normal(*mu, *sigma),
            Self::PointMass { value } => DistributionModel::point_mass(*value),
            Self::Empirical { values } => DistributionModel::empirical(values.clone()),
            Self::Discrete { atoms } => {
                let pairs: Vec<(f64, f64)> = atoms.iter().map(|[v, p]| (*v, *p)).collect();
                DistributionModel::discrete(&pairs)
            }
            Self::Mixture {
                weights,
                components,
            } => {
                let comps = components
                    .iter()
                    .map(Self::build)
                    .collect::<Result<Vec<_>>>()?;
                DistributionModel::mixture(weights.clone(), comps)
            }
        }
    }
}

/// Flag syntax: `normal:mu,sigma`, `point:c`, `empirical:x1,x2,...`,
/// `discrete:v1,p1;v2,p2;...`.
impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use crate::lambda::parse_list;
        let s = s.trim();
        let Some((kind, rest)) = s.split_once(':') else {
            return invalid(format!("model `{s}` needs kind:parameters"));
        };
        match kind.trim() {
            "normal" => match parse_list(rest)?.as_slice() {
                [mu, sigma] => Ok(Self::Normal {
                    mu: *mu,
                    sigma: *sigma,
                }),
                _ => invalid("normal takes mu,sigma"),
            },
            "point" | "point_mass" => match parse_list(rest)?.as_slice() {
                [value] => Ok(Self::PointMass { value: *value }),
                _ => invalid("point takes one value"),
            },
            "empirical" => Ok(Self::Empirical {
                values: parse_list(rest)?,
            }),
            "discrete" => {
                let mut atoms = Vec::new();
                for pair in rest.split(';') {
                    match parse_list(pair)?.as_slice() {
                        [v, p] => atoms.push([*v, *p]),
                        _ => return invalid(format!("atom `{pair}` is not value,prob")),
                    }
                }
                Ok(Self::Discrete { atoms })
            }
            other => invalid(format!("unknown model kind `{other}`")),
        }
    }
}
