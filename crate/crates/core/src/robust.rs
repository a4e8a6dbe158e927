//! Lévy metric and the Monte Carlo robustness experiment for historical
//! ΛVaR estimators.

use crate::dist::{DataSet, DistributionModel};
use crate::error::{invalid, Error, Result};
use crate::lambda::{parse_list, LambdaFunction};
use crate::measures::historical_estimate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevyOptions {
    /// Grid density used when either CDF has a continuous part.
    pub grid_points: usize,
    /// Bisection tolerance on ε.
    pub tolerance: f64,
}

impl Default for LevyOptions {
    fn default() -> Self {
        Self {
            grid_points: 4096,
            tolerance: 1e-9,
        }
    }
}

/// Evaluation points for one pair; atoms are kept separate so shifted
/// atoms can be evaluated without cancellation.
struct Points {
    atoms_f: Vec<f64>,
    atoms_g: Vec<f64>,
    grid: Vec<f64>,
}

impl Points {
    fn new(f: &DistributionModel, g: &DistributionModel, grid_points: usize) -> Self {
        let grid = if f.is_step() && g.is_step() {
            Vec::new()
        } else {
            let (a0, a1) = f.hull();
            let (b0, b1) = g.hull();
            let (lo, hi) = (a0.min(b0) - 1.0, a1.max(b1) + 1.0);
            let n = grid_points.max(2);
            let h = (hi - lo) / (n - 1) as f64;
            (0..n).map(|j| lo + j as f64 * h).collect()
        };
        Self {
            atoms_f: f.support_points(),
            atoms_g: g.support_points(),
            grid,
        }
    }
}

/// `F(x - ε) - ε ≤ G(x) ≤ F(x + ε) + ε` for every x.
///
/// Both differences are piecewise constant between the jumps of G and
/// the shifted jumps of F (right-continuous), so checking each piece at
/// its left end is exact for step pairs.
fn corridor(
    f: &DistributionModel,
    g: &DistributionModel,
    af: &[f64],
    ag: &[f64],
    grid: &[f64],
    eps: f64,
) -> bool {
    let lower = |gx: f64, fy: f64| fy - eps <= gx;
    let upper = |gx: f64, fy: f64| gx <= fy + eps;
    for &b in ag {
        if !lower(g.cdf(b), f.cdf(b - eps)) || !upper(g.cdf(b), f.cdf(b + eps)) {
            return false;
        }
    }
    for &a in af {
        if !lower(g.cdf(a + eps), f.cdf(a)) {
            return false;
        }
        // G(x) ≤ F(x+ε)+ε on the piece starting at a - ε, where F(x+ε) = F(a)
        if !upper(g.cdf(a - eps), f.cdf(a)) {
            return false;
        }
        // left of a - ε the piece still sees F(a⁻)
        if !upper(g.cdf_left(a - eps), f.cdf_left(a)) {
            return false;
        }
    }
    for &x in grid {
        let gx = g.cdf(x);
        if !lower(gx, f.cdf(x - eps)) || !upper(gx, f.cdf(x + eps)) {
            return false;
        }
        if !lower(g.cdf(x + eps), f.cdf(x)) || !upper(g.cdf(x - eps), f.cdf(x)) {
            return false;
        }
    }
    true
}

fn feasible(f: &DistributionModel, g: &DistributionModel, p: &Points, eps: f64) -> bool {
    corridor(f, g, &p.atoms_f, &p.atoms_g, &p.grid, eps)
        && corridor(g, f, &p.atoms_g, &p.atoms_f, &p.grid, eps)
}

/// `d(F, G) = inf{ε > 0 : F(x-ε) - ε ≤ G(x) ≤ F(x+ε) + ε ∀x}`.
pub fn levy_distance(f: &DistributionModel, g: &DistributionModel) -> f64 {
    levy_distance_with(f, g, &LevyOptions::default())
}

pub fn levy_distance_with(f: &DistributionModel, g: &DistributionModel, opts: &LevyOptions) -> f64 {
    let p = Points::new(f, g, opts.grid_points);
    if feasible(f, g, &p, 0.0) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > opts.tolerance {
        let mid = 0.5 * (lo + hi);
        if feasible(f, g, &p, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `sup_x |F(x) - G(x)|`, exact for step pairs.
pub fn kolmogorov_distance(f: &DistributionModel, g: &DistributionModel) -> f64 {
    let p = Points::new(f, g, 4096);
    p.atoms_f
        .iter()
        .chain(&p.atoms_g)
        .chain(&p.grid)
        .map(|x| {
            let right = (f.cdf(*x) - g.cdf(*x)).abs();
            let left = (f.cdf_left(*x) - g.cdf_left(*x)).abs();
            right.max(left)
        })
        .fold(0.0, f64::max)
}

fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// `M` draws from the law of the historical ΛVaR estimator at sample size
/// `n`. Replica `r` uses stream `r` of the seeded generator.
pub fn estimator_law(
    f: &DistributionModel,
    l: &LambdaFunction,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<DataSet> {
    if n == 0 || replicas == 0 {
        return invalid("sample size and replica count must be positive");
    }
    let values = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, r);
            let data = f.sample(&mut rng, n)?;
            Ok(historical_estimate(&data, l).value)
        })
        .collect::<Result<Vec<f64>>>()?;
    DataSet::new(values, "estimator_law")
}

/// Constructive maps `F ↦ G` with controllable Lévy distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Perturbation {
    None,
    /// Law of `X + delta`; `d(F, G) ≤ |delta|`.
    Shift {
        delta: f64,
    },
    /// Law of `factor · X`.
    Scale {
        factor: f64,
    },
    /// Moves `mass` from the atom at `from` to `to` (step models only).
    MoveMass {
        from: f64,
        to: f64,
        mass: f64,
    },
}

impl Perturbation {
    pub fn apply(&self, f: &DistributionModel) -> Result<DistributionModel> {
        match *self {
            Self::None => Ok(f.clone()),
            Self::Shift { delta } => {
                if !delta.is_finite() {
                    return invalid("shift must be finite");
                }
                Ok(f.shifted(delta))
            }
            Self::Scale { factor } => f.scaled(factor),
            Self::MoveMass { from, to, mass } => {
                if !f.is_step() {
                    return invalid("mass moves need a discrete or empirical model");
                }
                if !(mass > 0.0 && to.is_finite()) {
                    return invalid("mass must be positive and target finite");
                }
                let mut atoms = f.atoms();
                let Some(src) = atoms.iter_mut().find(|(v, _)| *v == from) else {
                    return invalid(format!("no atom at {from}"));
                };
                if src.1 < mass {
                    return invalid(format!("atom at {from} holds only {}", src.1));
                }
                src.1 -= mass;
                atoms.push((to, mass));
                atoms.retain(|(_, p)| *p > 0.0);
                DistributionModel::discrete(&atoms)
            }
        }
    }
}

/// Flag syntax: `none`, `shift:delta`, `scale:factor`, `move:from,to,mass`.
impl FromStr for Perturbation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let args = if rest.trim().is_empty() {
            Vec::new()
        } else {
            parse_list(rest)?
        };
        match (kind.trim(), args.as_slice()) {
            ("none", []) => Ok(Self::None),
            ("shift", [delta]) => Ok(Self::Shift { delta: *delta }),
            ("scale", [factor]) => Ok(Self::Scale { factor: *factor }),
            ("move" | "move_mass", [from, to, mass]) => Ok(Self::MoveMass {
                from: *from,
                to: *to,
                mass: *mass,
            }),
            ("none" | "shift" | "scale" | "move" | "move_mass", _) => {
                invalid(format!("wrong number of parameters in perturbation `{s}`"))
            }
            (other, _) => invalid(format!("unknown perturbation kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub base_model: DistributionModel,
    pub perturbed_model: DistributionModel,
    pub perturbation: Perturbation,
    pub input_distance: f64,
    pub n: usize,
    pub replicas: usize,
    pub estimator_law_f: DataSet,
    pub estimator_law_g: DataSet,
    pub law_distance: f64,
    pub seed: u64,
}

/// Estimator laws under F and the perturbed G, drawn with common random
/// numbers, and their Lévy distance.
pub fn robustness_experiment(
    f: &DistributionModel,
    l: &LambdaFunction,
    perturbation: &Perturbation,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<RobustnessReport> {
    let g = perturbation.apply(f)?;
    let law_f = estimator_law(f, l, n, replicas, seed)?;
    let law_g = estimator_law(&g, l, n, replicas, seed)?;
    let ef = DistributionModel::empirical(law_f.values().to_vec())?;
    let eg = DistributionModel::empirical(law_g.values().to_vec())?;
    Ok(RobustnessReport {
        input_distance: levy_distance(f, &g),
        law_distance: levy_distance(&ef, &eg),
        base_model: f.clone(),
        perturbed_model: g,
        perturbation: perturbation.clone(),
        n,
        replicas,
        estimator_law_f: law_f,
        estimator_law_g: law_g,
        seed,
    })
}
