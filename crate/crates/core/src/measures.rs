//! ΛVaR, VaR and ES together with class-membership tests.
//!
//! The crossing `x* = inf{x : F(x) > Λ(x)}` is located exactly whenever
//! one side is a step function: on every cell between breakpoints the
//! step side is constant and the other side is constant or strictly
//! monotone, so the strict inequality has a closed-form solution set.
//! Smooth pairs fall back to a bracketed scan followed by bisection.

use crate::dist::{empirical_from, DataSet, DistributionModel};
use crate::error::{invalid, Error, Result};
use crate::lambda::{CellBehaviour, LambdaFunction, Shape};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    LambdaVar,
    Var,
    Es,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    ExactPiecewise,
    ClosedForm,
    BracketedScan,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskReport {
    pub functional: Functional,
    /// The risk number `ρ(F)`.
    pub value: f64,
    /// `T(F)`: the crossing for ΛVaR, the quantile for VaR and ES.
    pub crossing: f64,
    pub method: SolverMethod,
    /// Confidence level for VaR and ES.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub in_c_lambda: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub in_m_lambda: Option<bool>,
}

/// Resolution of the bracketed scan used for smooth pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanConfig {
    /// Grid step as a fraction of the bracket width.
    pub resolution: f64,
    /// Absolute bisection tolerance in `x`.
    pub tolerance: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            resolution: 1e-3,
            tolerance: 1e-10,
        }
    }
}

/// `[x_lo, x_hi]` such that `F < Λ` left of `x_lo` and `F > Λ` at `x_hi`.
pub fn crossing_bracket(f: &DistributionModel, l: &LambdaFunction) -> (f64, f64) {
    let left_knot = l.breakpoints().first().copied().unwrap_or(f64::INFINITY);
    let x_lo = f.quantile_minus(0.5 * l.lam_min()).min(left_knot) - 1.0;
    let x_hi = f.quantile_plus(l.lam_max()) + 1.0;
    (x_lo, x_hi)
}

/// Locates `inf{x : F(x) > Λ(x)}`.
pub fn crossing(
    f: &DistributionModel,
    l: &LambdaFunction,
    cfg: &ScanConfig,
) -> (f64, SolverMethod) {
    if f.is_step() {
        return (step_cdf_crossing(f, l), SolverMethod::ExactPiecewise);
    }
    let quantile_method = match f {
        DistributionModel::Normal(_) => SolverMethod::ClosedForm,
        _ => SolverMethod::BracketedScan,
    };
    if let Some(lam) = l.is_constant() {
        return (f.quantile_plus(lam), quantile_method);
    }
    if let Shape::Step {
        breakpoints,
        levels,
        ..
    } = l.shape()
    {
        let method = if quantile_method == SolverMethod::ClosedForm {
            SolverMethod::ExactPiecewise
        } else {
            quantile_method
        };
        return (step_lambda_crossing(f, breakpoints, levels), method);
    }
    (bracketed_crossing(f, l, cfg), SolverMethod::BracketedScan)
}

fn step_cdf_crossing(f: &DistributionModel, l: &LambdaFunction) -> f64 {
    let support = f.support_points();
    let knots = l.breakpoints();
    for (i, &a) in support.iter().enumerate() {
        let b = support.get(i + 1).copied().unwrap_or(f64::INFINITY);
        let c = f.cdf(a);
        if c > l.eval(a) {
            return a;
        }
        if l.is_nondecreasing() {
            continue;
        }
        // Λ nonincreasing: walk its own cells inside [a, b).
        let inner: Vec<f64> = knots.iter().copied().filter(|k| *k > a && *k < b).collect();
        let mut lo = a;
        for hi in inner.iter().copied().chain(std::iter::once(b)) {
            if c > l.eval(lo) {
                return lo;
            }
            if l.cell_behaviour(lo, hi) == CellBehaviour::StrictlyDecreasing {
                if let Some(x) = l.solve_in_cell(c, lo, hi) {
                    return x;
                }
            }
            lo = hi;
        }
    }
    // F reaches 1 > λᴹ at its last atom, so the loop always returns.
    *support.last().expect("step model has atoms")
}

fn step_lambda_crossing(f: &DistributionModel, breakpoints: &[f64], levels: &[f64]) -> f64 {
    let mut a = f64::NEG_INFINITY;
    for (i, &level) in levels.iter().enumerate() {
        let b = breakpoints.get(i).copied().unwrap_or(f64::INFINITY);
        let cand = f.quantile_plus(level).max(a);
        if cand < b {
            return cand;
        }
        a = b;
    }
    unreachable!("last cell is unbounded")
}

fn bracketed_crossing(f: &DistributionModel, l: &LambdaFunction, cfg: &ScanConfig) -> f64 {
    let above = |x: f64| f.cdf(x) > l.eval(x);
    let (x_lo, x_hi) = crossing_bracket(f, l);
    let cells = (1.0 / cfg.resolution).ceil().max(1.0) as usize;
    let h = (x_hi - x_lo) / cells as f64;
    let mut prev = x_lo;
    for j in 1..=cells {
        let x = if j == cells {
            x_hi
        } else {
            x_lo + j as f64 * h
        };
        if above(x) {
            let (mut lo, mut hi) = (prev, x);
            while hi - lo > cfg.tolerance {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if above(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return hi;
        }
        prev = x;
    }
    x_hi
}

/// `ΛVaR(F) = -inf{x : F(x) > Λ(x)}`.
pub fn lambda_var(f: &DistributionModel, l: &LambdaFunction) -> RiskReport {
    lambda_var_with(f, l, &ScanConfig::default())
}

pub fn lambda_var_with(f: &DistributionModel, l: &LambdaFunction, cfg: &ScanConfig) -> RiskReport {
    let (x, method) = crossing(f, l, cfg);
    RiskReport {
        functional: Functional::LambdaVar,
        value: -x,
        crossing: x,
        method,
        level: None,
        in_c_lambda: None,
        in_m_lambda: None,
    }
}

fn check_unit(lam: f64) -> Result<()> {
    if lam > 0.0 && lam < 1.0 {
        Ok(())
    } else {
        invalid(format!("confidence level {lam} outside (0, 1)"))
    }
}

fn quantile_method(f: &DistributionModel) -> SolverMethod {
    if f.is_step() {
        SolverMethod::ExactPiecewise
    } else if matches!(f, DistributionModel::Normal(_)) {
        SolverMethod::ClosedForm
    } else {
        SolverMethod::BracketedScan
    }
}

/// `VaR_λ(F) = -q⁺_λ(F)`.
pub fn var(f: &DistributionModel, lam: f64) -> Result<RiskReport> {
    check_unit(lam)?;
    let q = f.quantile_plus(lam);
    Ok(RiskReport {
        functional: Functional::Var,
        value: -q,
        crossing: q,
        method: quantile_method(f),
        level: Some(lam),
        in_c_lambda: None,
        in_m_lambda: None,
    })
}

/// `ES_λ(F) = (1/λ)∫₀^λ VaR_s(F) ds`, via
/// `∫₀^λ q⁺_s ds = E[X; X < q] + q(λ - F(q⁻))` with `q = q⁻_λ`.
pub fn es(f: &DistributionModel, lam: f64) -> Result<RiskReport> {
    check_unit(lam)?;
    f.mean()?;
    let q = f.quantile_minus(lam);
    let tail = f.partial_expectation_below(q) + q * (lam - f.cdf_left(q));
    let value = -tail / lam;
    if !value.is_finite() {
        return Err(Error::NotInD1);
    }
    Ok(RiskReport {
        functional: Functional::Es,
        value,
        crossing: f.quantile_plus(lam),
        method: quantile_method(f),
        level: Some(lam),
        in_c_lambda: None,
        in_m_lambda: None,
    })
}

/// A risk functional ready to be applied to a distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "functional", rename_all = "snake_case")]
pub enum RiskFunctional {
    LambdaVar(LambdaFunction),
    Var { level: f64 },
    Es { level: f64 },
}

impl RiskFunctional {
    pub fn evaluate(&self, f: &DistributionModel) -> Result<RiskReport> {
        match self {
            Self::LambdaVar(l) => Ok(lambda_var(f, l)),
            Self::Var { level } => var(f, *level),
            Self::Es { level } => es(f, *level),
        }
    }
}

/// Historical estimator: ΛVaR of the empirical distribution of the data.
pub fn historical_estimate(data: &DataSet, l: &LambdaFunction) -> RiskReport {
    lambda_var(&empirical_from(data), l)
}

pub fn historical(data: &DataSet, functional: &RiskFunctional) -> Result<RiskReport> {
    functional.evaluate(&empirical_from(data))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MembershipMethod {
    ExactPiecewise,
    Analytic,
    GridScan,
}

/// A point of `E_F = {x : F(x) = Λ(x) or F(x⁻) = Λ(x)}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Intersection {
    pub x: f64,
    /// Set when F and Λ coincide on `[x, interval_end)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval_end: Option<f64>,
    /// Whether `F(t) > Λ(t)` on some `(x, x + ε)`.
    pub exceeds_right: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CLambdaCertificate {
    pub member: bool,
    pub intersections: Vec<Intersection>,
    pub method: MembershipMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MLambdaCertificate {
    pub member: bool,
    /// The single crossing when `member` holds, else the candidate x*.
    pub crossing: f64,
    /// First point where the single-crossing sign pattern fails.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation: Option<f64>,
    pub method: MembershipMethod,
}

/// Cell starts for a step F: its atoms plus Λ breakpoints to the right of
/// the first atom (F vanishes before it). Sorted, deduplicated.
fn step_cells(f: &DistributionModel, l: &LambdaFunction, extra: &[f64]) -> Vec<f64> {
    let support = f.support_points();
    let first = support[0];
    let mut pts: Vec<f64> = support;
    pts.extend(l.breakpoints().into_iter().filter(|b| *b > first));
    pts.extend(
        extra
            .iter()
            .copied()
            .filter(|b| *b > first && b.is_finite()),
    );
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

const GRID_POINTS: usize = 10_000;

fn dense_grid(f: &DistributionModel, l: &LambdaFunction) -> Vec<f64> {
    let (lo, hi) = crossing_bracket(f, l);
    let h = (hi - lo) / GRID_POINTS as f64;
    let mut g: Vec<f64> = (0..=GRID_POINTS).map(|j| lo + j as f64 * h).collect();
    g.extend(l.breakpoints().into_iter().filter(|b| *b > lo && *b < hi));
    g.extend(
        f.support_points()
            .into_iter()
            .filter(|b| *b > lo && *b < hi),
    );
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// Membership in `C_Λ`: every intersection point of F and Λ is followed
/// immediately by `F > Λ`. Requires a continuous Λ.
pub fn in_c_lambda(f: &DistributionModel, l: &LambdaFunction) -> Result<CLambdaCertificate> {
    if !l.is_continuous() {
        return Err(Error::InapplicablePrecondition(
            "C_Λ membership is defined for continuous Λ".into(),
        ));
    }
    if f.is_step() {
        return Ok(c_lambda_step(f, l));
    }
    if let DistributionModel::Normal(n) = f {
        if let Some(lam) = l.is_constant() {
            return Ok(CLambdaCertificate {
                member: true,
                intersections: vec![Intersection {
                    x: f.quantile_plus(lam),
                    interval_end: None,
                    exceeds_right: true,
                }],
                method: MembershipMethod::Analytic,
            });
        }
        if let Shape::ClampedNormal {
            mu,
            sigma,
            x_min,
            x_max,
        } = *l.shape()
        {
            if (mu - n.mu()).abs() <= 1e-12 && (sigma - n.sigma()).abs() <= 1e-12 && x_min < x_max {
                return Ok(CLambdaCertificate {
                    member: false,
                    intersections: vec![Intersection {
                        x: x_min,
                        interval_end: Some(x_max),
                        exceeds_right: false,
                    }],
                    method: MembershipMethod::Analytic,
                });
            }
        }
    }
    Ok(c_lambda_grid(f, l))
}

fn c_lambda_step(f: &DistributionModel, l: &LambdaFunction) -> CLambdaCertificate {
    let cells = step_cells(f, l, &[]);
    let mut intersections = Vec::new();
    for (i, &a) in cells.iter().enumerate() {
        let b = cells.get(i + 1).copied().unwrap_or(f64::INFINITY);
        let c = f.cdf(a);
        let c_left = f.cdf_left(a);
        let la = l.eval(a);
        let h_a = c - la;
        let h_b = c - l.eval_left(b);
        let behaviour = l.cell_behaviour(a, b);
        if c == la || c_left == la {
            let exceeds =
                h_a > 0.0 || (h_a == 0.0 && behaviour == CellBehaviour::StrictlyDecreasing);
            let interval_end = (h_a == 0.0 && behaviour == CellBehaviour::Flat).then_some(b);
            intersections.push(Intersection {
                x: a,
                interval_end,
                exceeds_right: exceeds,
            });
        }
        let interior = match behaviour {
            CellBehaviour::StrictlyIncreasing if h_a > 0.0 && h_b < 0.0 => Some(false),
            CellBehaviour::StrictlyDecreasing if h_a < 0.0 && h_b > 0.0 => Some(true),
            _ => None,
        };
        if let Some(exceeds) = interior {
            let x = l.solve_in_cell(c, a, b).unwrap_or(0.5 * (a + b));
            intersections.push(Intersection {
                x,
                interval_end: None,
                exceeds_right: exceeds,
            });
        }
    }
    CLambdaCertificate {
        member: intersections.iter().all(|i| i.exceeds_right),
        intersections,
        method: MembershipMethod::ExactPiecewise,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sign {
    Neg,
    Zero,
    Pos,
}

fn sign_of(h: f64, tol: f64) -> Sign {
    if h > tol {
        Sign::Pos
    } else if h < -tol {
        Sign::Neg
    } else {
        Sign::Zero
    }
}

fn c_lambda_grid(f: &DistributionModel, l: &LambdaFunction) -> CLambdaCertificate {
    const TOL: f64 = 1e-12;
    let grid = dense_grid(f, l);
    let h = |x: f64| f.cdf(x) - l.eval(x);
    let signs: Vec<Sign> = grid.iter().map(|x| sign_of(h(*x), TOL)).collect();
    let mut intersections = Vec::new();
    let mut j = 0;
    let mut last_nonzero = Sign::Neg;
    while j < signs.len() {
        match signs[j] {
            Sign::Zero => {
                let start = j;
                while j < signs.len() && signs[j] == Sign::Zero {
                    j += 1;
                }
                let after = signs.get(j).copied().unwrap_or(Sign::Pos);
                let interval_end = (j - start >= 2).then(|| grid[j - 1]);
                intersections.push(Intersection {
                    x: grid[start],
                    interval_end,
                    exceeds_right: interval_end.is_none() && after == Sign::Pos,
                });
                last_nonzero = after;
                continue;
            }
            s => {
                if s != last_nonzero {
                    // strict sign change between grid[j-1] and grid[j]
                    let (mut lo, mut hi) = (grid[j - 1], grid[j]);
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if sign_of(h(mid), 0.0) == last_nonzero {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    intersections.push(Intersection {
                        x: hi,
                        interval_end: None,
                        exceeds_right: s == Sign::Pos,
                    });
                }
                last_nonzero = s;
            }
        }
        j += 1;
    }
    CLambdaCertificate {
        member: intersections.iter().all(|i| i.exceeds_right),
        intersections,
        method: MembershipMethod::GridScan,
    }
}

/// Membership in `M_Λ`: `F < Λ` strictly left of some `x̄` and `F > Λ`
/// strictly right of it.
pub fn in_m_lambda(f: &DistributionModel, l: &LambdaFunction) -> MLambdaCertificate {
    let (x_star, _) = crossing(f, l, &ScanConfig::default());
    if f.is_step() {
        m_lambda_step(f, l, x_star)
    } else {
        m_lambda_grid(f, l, x_star)
    }
}

fn m_lambda_step(f: &DistributionModel, l: &LambdaFunction, x_star: f64) -> MLambdaCertificate {
    let cells = step_cells(f, l, &[x_star]);
    let fail = |x: f64| MLambdaCertificate {
        member: false,
        crossing: x_star,
        violation: Some(x),
        method: MembershipMethod::ExactPiecewise,
    };
    for (i, &a) in cells.iter().enumerate() {
        let b = cells.get(i + 1).copied().unwrap_or(f64::INFINITY);
        let c = f.cdf(a);
        let h_a = c - l.eval(a);
        let h_b = c - l.eval_left(b);
        if b <= x_star {
            // negative on [a, b)
            if !(h_a < 0.0 && h_b <= 0.0) {
                return fail(a);
            }
        } else if a > x_star {
            // positive on [a, b)
            if !(h_a > 0.0 && h_b >= 0.0) {
                return fail(a);
            }
        } else {
            // a ≤ x* < b, x* is a cell start so a == x*: positive on (a, b)
            if !(h_a >= 0.0 && h_b >= 0.0 && (h_a > 0.0 || h_b > 0.0)) {
                return fail(a);
            }
        }
    }
    MLambdaCertificate {
        member: true,
        crossing: x_star,
        violation: None,
        method: MembershipMethod::ExactPiecewise,
    }
}

fn m_lambda_grid(f: &DistributionModel, l: &LambdaFunction, x_star: f64) -> MLambdaCertificate {
    let window = 1e-8 * x_star.abs().max(1.0);
    for x in dense_grid(f, l) {
        let h = f.cdf(x) - l.eval(x);
        let ok = if x < x_star - window {
            h < 0.0
        } else if x > x_star + window {
            h > 0.0
        } else {
            true
        };
        if !ok {
            return MLambdaCertificate {
                member: false,
                crossing: x_star,
                violation: Some(x),
                method: MembershipMethod::GridScan,
            };
        }
    }
    MLambdaCertificate {
        member: true,
        crossing: x_star,
        violation: None,
        method: MembershipMethod::GridScan,
    }
}

/// ΛVaR with both class-membership flags filled in.
pub fn lambda_var_with_membership(f: &DistributionModel, l: &LambdaFunction) -> RiskReport {
    let mut r = lambda_var(f, l);
    r.in_m_lambda = Some(in_m_lambda(f, l).member);
    r.in_c_lambda = in_c_lambda(f, l).ok().map(|c| c.member);
    r
}
