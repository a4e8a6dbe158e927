//! Scoring function for ΛVaR, expected-score curves and elicitability
//! checks on `M_Λ`, plus the convex-level-set test.

use crate::dist::DistributionModel;
use crate::error::{invalid, Error, Result};
use crate::lambda::LambdaFunction;
use crate::measures::{crossing, in_m_lambda, ScanConfig};
use crate::normal;
use crate::quad::GaussLegendre;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// `S(x, y) = (y - x)⁻ - ∫_y^x Λ(t) dt`.
pub fn score(l: &LambdaFunction, x: f64, y: f64) -> f64 {
    if x == y {
        return 0.0;
    }
    (x - y).max(0.0) - (l.antiderivative(x) - l.antiderivative(y))
}

/// The same score written as a pinball loss with weight
/// `w = (Ψ(x) - Ψ(y)) / (x - y)`: `w(y - x)⁺ + (1 - w)(y - x)⁻`.
pub fn score_weighted(l: &LambdaFunction, x: f64, y: f64) -> f64 {
    if x == y {
        return 0.0;
    }
    let w = l.integral(y, x) / (x - y);
    let d = y - x;
    w * d.max(0.0) + (1.0 - w) * (-d).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evaluation {
    ExactDiscrete,
    Quadrature { nodes: usize, truncation_bound: f64 },
    MonteCarlo { seed: u64, n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub argmin_x: f64,
    pub argmin_value: f64,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreOptions {
    /// Gauss–Legendre nodes per integration piece.
    pub nodes: usize,
    /// Quadrature is truncated at the `tail` and `1 - tail` quantiles.
    pub tail: f64,
    /// Replace exact evaluation by a sample average.
    pub monte_carlo: Option<(u64, usize)>,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            nodes: 512,
            tail: 1e-8,
            monte_carlo: None,
        }
    }
}

/// `g(x) = E_F[S(x, Y)]`, split into atom sums and normal components.
///
/// For a normal component `g(x) = E(x - Y)⁺ - Ψ(x) + E Ψ(Y)` where the
/// first term is closed form and `E Ψ(Y)` is integrated once.
#[derive(Debug, Clone)]
pub struct ExpectedScore<'a> {
    l: &'a LambdaFunction,
    atoms: Vec<(f64, f64)>,
    normals: Vec<(f64, f64, f64)>,
    constant: f64,
    evaluation: Evaluation,
}

fn decompose(
    f: &DistributionModel,
    weight: f64,
    atoms: &mut Vec<(f64, f64)>,
    normals: &mut Vec<(f64, f64, f64)>,
) {
    if f.is_step() {
        atoms.extend(f.atoms().into_iter().map(|(v, p)| (v, p * weight)));
        return;
    }
    match f {
        DistributionModel::Normal(n) => normals.push((weight, n.mu(), n.sigma())),
        DistributionModel::Mixture(m) => {
            for (w, c) in m.weights().iter().zip(m.components()) {
                decompose(c, weight * w, atoms, normals);
            }
        }
        _ => unreachable!("non-step models are normals or mixtures"),
    }
}

impl<'a> ExpectedScore<'a> {
    pub fn new(f: &DistributionModel, l: &'a LambdaFunction, opts: &ScoreOptions) -> Result<Self> {
        f.mean()?;
        if let Some((seed, n)) = opts.monte_carlo {
            if n == 0 {
                return invalid("Monte Carlo sample size must be positive");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = f.sample(&mut rng, n)?;
            let p = 1.0 / n as f64;
            return Ok(Self {
                l,
                atoms: data.values().iter().map(|v| (*v, p)).collect(),
                normals: Vec::new(),
                constant: 0.0,
                evaluation: Evaluation::MonteCarlo { seed, n },
            });
        }
        let mut atoms = Vec::new();
        let mut normals = Vec::new();
        decompose(f, 1.0, &mut atoms, &mut normals);
        if normals.is_empty() {
            return Ok(Self {
                l,
                atoms,
                normals,
                constant: 0.0,
                evaluation: Evaluation::ExactDiscrete,
            });
        }
        if opts.nodes == 0 || !(opts.tail > 0.0 && opts.tail < 0.5) {
            return invalid("quadrature needs positive nodes and tail in (0, 0.5)");
        }
        let gl = GaussLegendre::new(opts.nodes);
        let zt = -normal::quantile(opts.tail);
        let knots = l.breakpoints();
        let mut constant = 0.0;
        let mut bound = 0.0;
        for &(w, mu, sigma) in &normals {
            let (lo, hi) = (mu - sigma * zt, mu + sigma * zt);
            let mut cuts = vec![lo];
            cuts.extend(knots.iter().copied().filter(|k| *k > lo && *k < hi));
            cuts.push(hi);
            let mut s = 0.0;
            for c in cuts.windows(2) {
                s += gl.integrate(c[0], c[1], |y| {
                    l.antiderivative(y) * normal::pdf((y - mu) / sigma) / sigma
                });
            }
            constant += w * s;
            // |Ψ(y)| ≤ λᴹ|y| and E[|Y|; tails] ≤ 2σφ(z) + 2|μ|·tail
            bound += w * l.lam_max() * (2.0 * sigma * normal::pdf(zt) + 2.0 * mu.abs() * opts.tail);
        }
        Ok(Self {
            l,
            atoms,
            normals,
            constant,
            evaluation: Evaluation::Quadrature {
                nodes: opts.nodes,
                truncation_bound: bound,
            },
        })
    }

    pub fn evaluation(&self) -> &Evaluation {
        &self.evaluation
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut g: f64 = self
            .atoms
            .iter()
            .map(|(a, p)| p * score(self.l, x, *a))
            .sum();
        if !self.normals.is_empty() {
            let psi = self.l.antiderivative(x);
            for &(w, mu, sigma) in &self.normals {
                let z = (x - mu) / sigma;
                g += w * ((x - mu) * normal::cdf(z) + sigma * normal::pdf(z) - psi);
            }
            g += self.constant;
        }
        g
    }

    fn curve(&self, grid: Vec<f64>) -> ScoreCurve {
        let values: Vec<f64> = grid.par_iter().map(|x| self.eval(*x)).collect();
        let best = argmin_index(&values);
        ScoreCurve {
            argmin_x: grid[best],
            argmin_value: values[best],
            grid,
            values,
            evaluation: self.evaluation.clone(),
        }
    }

    /// Golden-section minimisation on `[a, b]`.
    pub fn refine(&self, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        let (mut fc, mut fd) = (self.eval(c), self.eval(d));
        for _ in 0..200 {
            if b - a <= tol {
                break;
            }
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - r * (b - a);
                fc = self.eval(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + r * (b - a);
                fd = self.eval(d);
            }
        }
        let x = 0.5 * (a + b);
        (x, self.eval(x))
    }
}

fn argmin_index(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |(bi, bv), (i, v)| if *v < bv { (i, *v) } else { (bi, bv) },
        )
        .0
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return invalid("score grid is empty");
    }
    if !grid.iter().all(|x| x.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("score grid must be finite and strictly increasing");
    }
    Ok(())
}

/// Expected score on a user grid.
pub fn expected_score_curve(
    f: &DistributionModel,
    l: &LambdaFunction,
    grid: &[f64],
) -> Result<ScoreCurve> {
    expected_score_curve_with(f, l, grid, &ScoreOptions::default())
}

pub fn expected_score_curve_with(
    f: &DistributionModel,
    l: &LambdaFunction,
    grid: &[f64],
    opts: &ScoreOptions,
) -> Result<ScoreCurve> {
    check_grid(grid)?;
    Ok(ExpectedScore::new(f, l, opts)?.curve(grid.to_vec()))
}

/// Exact minimiser candidates for a step F: atoms, Λ breakpoints and the
/// points where Λ meets the level of F inside a cell.
pub fn step_candidates(f: &DistributionModel, l: &LambdaFunction) -> Vec<f64> {
    let support = f.support_points();
    let knots = l.breakpoints();
    let mut pts: Vec<f64> = support.clone();
    pts.extend(knots.iter().copied());
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut out = pts.clone();
    for (i, &a) in pts.iter().enumerate() {
        let b = pts.get(i + 1).copied().unwrap_or(a + 1.0);
        if let Some(x) = l.solve_in_cell(f.cdf(a), a, b) {
            out.push(x);
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

fn scan_hull(f: &DistributionModel, l: &LambdaFunction) -> (f64, f64) {
    let (mut lo, mut hi) = f.hull();
    for k in l.breakpoints() {
        lo = lo.min(k);
        hi = hi.max(k);
    }
    (lo - 1.0, hi + 1.0)
}

const DEFAULT_POINTS: usize = 10_000;
const MAX_POINTS: usize = 2_000_000;

fn regular_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = (((hi - lo) / step).ceil() as usize).clamp(1, MAX_POINTS);
    let h = (hi - lo) / n as f64;
    (0..=n).map(|j| lo + j as f64 * h).collect()
}

fn merge(mut a: Vec<f64>, b: &[f64]) -> Vec<f64> {
    a.extend_from_slice(b);
    a.sort_by(f64::total_cmp);
    a.dedup();
    a
}

/// Grid used when none is given: the hull of F and the Λ breakpoints
/// padded by one, with 10⁴ points, plus exact candidates for step F.
pub fn default_grid(f: &DistributionModel, l: &LambdaFunction) -> Vec<f64> {
    let (lo, hi) = scan_hull(f, l);
    let grid = regular_grid(lo, hi, (hi - lo) / DEFAULT_POINTS as f64);
    if f.is_step() {
        merge(grid, &step_candidates(f, l))
    } else {
        grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    /// F ∈ M_Λ and the minimiser is the crossing.
    Pass,
    /// F ∉ M_Λ and the minimiser differs from the crossing.
    Counterexample,
    /// F ∉ M_Λ yet the minimiser is the crossing.
    Vacuous,
    /// F ∈ M_Λ but the minimiser differs: numerical failure.
    Mismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElicitabilityReport {
    pub verdict: Verdict,
    pub in_m_lambda: bool,
    pub crossing: f64,
    pub argmin: f64,
    pub argmin_value: f64,
    pub score_at_crossing: f64,
    /// `g(x*) - g(argmin)`.
    pub score_gap: f64,
    pub grid_step: f64,
    pub tolerance: f64,
    /// Another point away from the argmin scores within 1e-9 of it.
    pub near_tie: bool,
    pub curve: ScoreCurve,
}

const TIE: f64 = 1e-9;

/// Compares the expected-score argmin with the crossing `x*`.
pub fn verify_elicitability(
    f: &DistributionModel,
    l: &LambdaFunction,
    grid_step: f64,
) -> Result<ElicitabilityReport> {
    verify_elicitability_with(f, l, grid_step, &ScoreOptions::default())
}

pub fn verify_elicitability_with(
    f: &DistributionModel,
    l: &LambdaFunction,
    grid_step: f64,
    opts: &ScoreOptions,
) -> Result<ElicitabilityReport> {
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return invalid("grid_step must be positive");
    }
    let member = in_m_lambda(f, l);
    let (x_star, _) = crossing(f, l, &ScanConfig::default());
    let g = ExpectedScore::new(f, l, opts)?;
    let (lo, hi) = scan_hull(f, l);
    let mut grid = regular_grid(lo.min(x_star - 1.0), hi.max(x_star + 1.0), grid_step);
    let exact = f.is_step() && opts.monte_carlo.is_none();
    if exact {
        grid = merge(grid, &step_candidates(f, l));
    }
    grid = merge(grid, &[x_star]);
    let mut curve = g.curve(grid);
    let (mut argmin, mut argmin_value) = (curve.argmin_x, curve.argmin_value);
    if !exact {
        let i = curve.grid.partition_point(|x| *x < argmin);
        let a = curve.grid[i.saturating_sub(1)];
        let b = curve.grid[(i + 1).min(curve.grid.len() - 1)];
        let (x, v) = g.refine(a, b, 1e-10);
        if v <= argmin_value {
            argmin = x;
            argmin_value = v;
            curve.argmin_x = x;
            curve.argmin_value = v;
        }
    }
    let score_at_crossing = g.eval(x_star);
    let tolerance = if exact { 1e-8 } else { grid_step };
    let matches = (argmin - x_star).abs() <= tolerance;
    let near_tie = curve
        .grid
        .iter()
        .zip(&curve.values)
        .any(|(x, v)| (x - argmin).abs() > 2.0 * grid_step && v - argmin_value <= TIE);
    let verdict = match (member.member, matches) {
        (true, true) => Verdict::Pass,
        (true, false) => Verdict::Mismatch,
        (false, false) => Verdict::Counterexample,
        (false, true) => Verdict::Vacuous,
    };
    Ok(ElicitabilityReport {
        verdict,
        in_m_lambda: member.member,
        crossing: x_star,
        argmin,
        argmin_value,
        score_at_crossing,
        score_gap: score_at_crossing - argmin_value,
        grid_step,
        tolerance,
        near_tie,
        curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureCrossing {
    pub alpha: f64,
    pub crossing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LevelSetVerdict {
    Holds,
    Violated { alpha: f64, crossing: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSetReport {
    pub verdict: LevelSetVerdict,
    pub crossing_f1: f64,
    pub crossing_f2: f64,
    pub mixtures: Vec<MixtureCrossing>,
}

const SOLVER_TOL: f64 = 1e-9;

/// Checks `T(αF₁ + (1-α)F₂) = γ` when `T(F₁) = T(F₂) = γ`.
pub fn check_convex_level_sets(
    f1: &DistributionModel,
    f2: &DistributionModel,
    l: &LambdaFunction,
    alphas: &[f64],
) -> Result<LevelSetReport> {
    check_convex_level_sets_with(f1, f2, l, alphas, 1e-10)
}

/// As [`check_convex_level_sets`] with a configurable tolerance on the
/// precondition `T(F₁) = T(F₂)`. A mixture passes when its crossing lies
/// in `[min(T₁, T₂), max(T₁, T₂)]` up to the solver tolerance.
pub fn check_convex_level_sets_with(
    f1: &DistributionModel,
    f2: &DistributionModel,
    l: &LambdaFunction,
    alphas: &[f64],
    precondition_tol: f64,
) -> Result<LevelSetReport> {
    let cfg = ScanConfig::default();
    let (t1, _) = crossing(f1, l, &cfg);
    let (t2, _) = crossing(f2, l, &cfg);
    if (t1 - t2).abs() > precondition_tol {
        return Err(Error::InapplicablePrecondition(format!(
            "crossings differ: T(F1) = {t1}, T(F2) = {t2}"
        )));
    }
    if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return invalid("mixture weights must lie in [0, 1]");
    }
    let (lo, hi) = (t1.min(t2) - SOLVER_TOL, t1.max(t2) + SOLVER_TOL);
    let mut mixtures = Vec::with_capacity(alphas.len());
    let mut verdict = LevelSetVerdict::Holds;
    for &alpha in alphas {
        let mix = DistributionModel::convex_combination(alpha, f1, f2)?;
        let (t, _) = crossing(&mix, l, &cfg);
        if (t < lo || t > hi) && verdict == LevelSetVerdict::Holds {
            verdict = LevelSetVerdict::Violated { alpha, crossing: t };
        }
        mixtures.push(MixtureCrossing { alpha, crossing: t });
    }
    Ok(LevelSetReport {
        verdict,
        crossing_f1: t1,
        crossing_f2: t2,
        mixtures,
    })
}

/// Truncation at `k ≤ K` of the infinite-sum example where ΛVaR fails to
/// have convex level sets for a Λ with infinitely many jumps.
///
/// `F₁ = ε` on `[0, 1/(K+1))`, `ε + 2⁻ᵏ` on `[1/(k+1), 1/k)`, 1 from 1 on;
/// `F₂` adds `(-1)ᵏ10⁻ᵏ` on interval `k`; Λ is `ε` left of 0, the average
/// `½(F₁ + F₂)` on `[0, 1)` and `λᴹ` from 1 on.
pub fn build_level_set_counterexample(
    k_max: usize,
    eps: f64,
    lam_max: f64,
) -> Result<(DistributionModel, DistributionModel, LambdaFunction)> {
    if k_max < 4 {
        return invalid("truncation K must be at least 4");
    }
    if !(eps > 0.0 && eps < 0.5) {
        return invalid("eps must lie in (0, 1/2)");
    }
    // cell starts 0, 1/(K+1), 1/K, ..., 1/2 and the level of each cell
    let mut starts = vec![0.0];
    let mut l1 = vec![eps];
    let mut l2 = vec![eps];
    for k in (1..=k_max).rev() {
        starts.push(1.0 / (k as f64 + 1.0));
        let base = eps + 0.5f64.powi(k as i32);
        let bump = 10f64.powi(-(k as i32));
        l1.push(base);
        l2.push(if k % 2 == 0 { base + bump } else { base - bump });
    }
    let to_model = |levels: &[f64]| -> Result<DistributionModel> {
        if !levels.windows(2).all(|w| w[0] < w[1]) {
            return invalid(format!(
                "cell levels collapse in double precision for K = {k_max}, eps = {eps}"
            ));
        }
        let mut atoms = Vec::with_capacity(levels.len() + 1);
        let mut prev = 0.0;
        for (x, lv) in starts.iter().zip(levels) {
            atoms.push((*x, lv - prev));
            prev = *lv;
        }
        atoms.push((1.0, 1.0 - prev));
        DistributionModel::discrete(&atoms)
    };
    let f1 = to_model(&l1)?;
    let f2 = to_model(&l2)?;
    let mix = DistributionModel::convex_combination(0.5, &f1, &f2)?;
    let mut breakpoints = starts.clone();
    breakpoints.push(1.0);
    let mut levels = vec![eps];
    levels.extend(starts.iter().map(|x| mix.cdf(*x)));
    let top = *levels.last().unwrap();
    if !(lam_max > top && lam_max < 1.0) {
        return invalid(format!("lam_max must lie in ({top}, 1)"));
    }
    levels.push(lam_max);
    let l = LambdaFunction::step(breakpoints, levels)?;
    Ok((f1, f2, l))
}
