//! Acceptance suite. Prints one PASS/FAIL line per criterion, with the
//! individual checks indented below it, and exits non-zero on failure.

use lambda_var::consist::{pit_check, run_consistency, DataProcess};
use lambda_var::elicit::{
    build_level_set_counterexample, check_convex_level_sets, check_convex_level_sets_with,
    expected_score_curve, score, score_weighted, verify_elicitability, ExpectedScore,
    LevelSetVerdict, ScoreOptions, Verdict,
};
use lambda_var::lambda::{build_clamped_normal, ClampedNormalParams};
use lambda_var::measures::{crossing, in_m_lambda, lambda_var, var, ScanConfig};
use lambda_var::robust::{kolmogorov_distance, levy_distance, robustness_experiment, Perturbation};
use lambda_var::{DistributionModel, LambdaFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

struct Check {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Check {
    Check {
        pass,
        detail: detail.into(),
    }
}

fn run(id: u32, title: &str, body: fn() -> Vec<Check>) -> bool {
    let start = Instant::now();
    let checks = body();
    let pass = checks.iter().all(|c| c.pass);
    println!(
        "criterion {id}: {} {title} ({:.2}s)",
        if pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    for c in &checks {
        println!("    [{}] {}", if c.pass { "ok" } else { "FAIL" }, c.detail);
    }
    pass
}

fn two_point() -> DistributionModel {
    DistributionModel::discrete(&[(-100.0, 0.015), (4.0, 0.985)]).unwrap()
}

fn counterexample_arithmetic() -> Vec<Check> {
    let eps = 0.004;
    let l = LambdaFunction::counterexample(eps).unwrap();
    let f = two_point();
    let psi_m100 = l.antiderivative(-100.0);
    let psi_4 = l.antiderivative(4.0);
    let curve = expected_score_curve(&f, &l, &[-100.0, 4.0]).unwrap();
    let gap = curve.values[0] - curve.values[1];
    let t = lambda_var(&f, &l).crossing;
    let verdict = verify_elicitability(&f, &l, 0.01).unwrap();
    vec![
        check(
            (psi_m100 - (-51.4)).abs() <= 1e-12,
            format!("Ψ(-100) = {psi_m100:.12} (stated -51.4)"),
        ),
        check(
            (psi_4 - 0.096).abs() <= 1e-12,
            format!("Ψ(4) = {psi_4:.12} (stated 0.096)"),
        ),
        check(
            (gap - 49.52).abs() <= 1e-9,
            format!("g(-100) - g(4) = {gap:.12} (stated 49.52 ± 1e-9)"),
        ),
        check(t == -100.0, format!("T_Λ(F) = {t} (stated -100 exactly)")),
        check(
            verdict.verdict == Verdict::Counterexample,
            format!(
                "verify_elicitability = {:?}, argmin {}, crossing {}",
                verdict.verdict, verdict.argmin, verdict.crossing
            ),
        ),
    ]
}

fn reduction_to_var() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut bad_emp = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..60);
        // quarter-integer values so ties are common
        let v: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-40..40) as f64 / 4.0)
            .collect();
        let lam = if rng.random_bool(0.5) {
            rng.random_range(1..n.max(2)) as f64 / n as f64
        } else {
            rng.random_range(0.001..0.999)
        };
        if lam <= 0.0 || lam >= 1.0 {
            continue;
        }
        let f = DistributionModel::empirical(v).unwrap();
        let l = LambdaFunction::constant(lam).unwrap();
        if lambda_var(&f, &l).value != var(&f, lam).unwrap().value {
            bad_emp += 1;
        }
    }
    let mut bad_norm = 0;
    for _ in 0..100 {
        let lam = rng.random_range(0.001..0.999);
        let f = DistributionModel::normal(rng.random_range(-5.0..5.0), rng.random_range(0.1..5.0))
            .unwrap();
        let l = LambdaFunction::constant(lam).unwrap();
        if lambda_var(&f, &l).value != var(&f, lam).unwrap().value {
            bad_norm += 1;
        }
    }
    vec![
        check(
            bad_emp == 0,
            format!("empirical: {bad_emp}/1000 mismatches"),
        ),
        check(bad_norm == 0, format!("normal: {bad_norm}/100 mismatches")),
    ]
}

fn elicitability_on_m() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let models: Vec<DistributionModel> = (0..20)
        .map(|_| {
            DistributionModel::normal(rng.random_range(-2.0..2.0), rng.random_range(0.5..2.0))
                .unwrap()
        })
        .collect();
    let l = build_clamped_normal(&models, 0.01, 0.1, ClampedNormalParams::default()).unwrap();
    let mut worst: f64 = 0.0;
    let mut verdicts_ok = 0;
    for f in &models {
        let r = verify_elicitability(f, &l, 1e-3).unwrap();
        worst = worst.max((r.argmin - r.crossing).abs());
        if r.verdict == Verdict::Pass {
            verdicts_ok += 1;
        }
    }
    vec![
        check(
            verdicts_ok == 20,
            format!("{verdicts_ok}/20 models verdict PASS"),
        ),
        check(
            worst <= 1e-6,
            format!("max |argmin - x*| = {worst:.3e} (≤ 1e-6)"),
        ),
    ]
}

fn random_step_lambda(rng: &mut ChaCha8Rng) -> LambdaFunction {
    let k = rng.random_range(1..5);
    let mut b: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
    b.sort_by(f64::total_cmp);
    b.dedup();
    let mut levels: Vec<f64> = (0..=b.len()).map(|_| rng.random_range(0.01..0.4)).collect();
    levels.sort_by(f64::total_cmp);
    if rng.random_bool(0.5) {
        levels.reverse();
    }
    LambdaFunction::step(b, levels).unwrap()
}

/// A normal with the same crossing as `f1`, or `None` if the random
/// attempt misses.
fn matched_normal(
    rng: &mut ChaCha8Rng,
    f1: &DistributionModel,
    l: &LambdaFunction,
) -> Option<DistributionModel> {
    let cfg = ScanConfig::default();
    let (t, _) = crossing(f1, l, &cfg);
    let sigma = rng.random_range(0.3..3.0);
    let level = if (f1.cdf(t) - l.eval(t)).abs() < 1e-12 {
        l.eval(t)
    } else {
        // crossing on a downward jump: F(t) must clear the new level only
        rng.random_range(l.eval(t)..l.eval_left(t))
    };
    let mu = t - sigma * lambda_var::normal::quantile(level);
    let f2 = DistributionModel::normal(mu, sigma).ok()?;
    let (t2, _) = crossing(&f2, l, &cfg);
    ((t2 - t).abs() <= 1e-10).then_some(f2)
}

fn convex_level_sets() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let alphas: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
    let mut triples = 0;
    let mut holds = 0;
    let mut attempts = 0;
    while triples < 200 && attempts < 100_000 {
        attempts += 1;
        let l = random_step_lambda(&mut rng);
        let f1 = DistributionModel::normal(rng.random_range(-2.0..2.0), rng.random_range(0.3..3.0))
            .unwrap();
        let Some(f2) = matched_normal(&mut rng, &f1, &l) else {
            continue;
        };
        triples += 1;
        let r = check_convex_level_sets(&f1, &f2, &l, &alphas).unwrap();
        if r.verdict == LevelSetVerdict::Holds {
            holds += 1;
        }
    }
    let (f1, f2, l) = build_level_set_counterexample(15, 0.01, 0.9).unwrap();
    let r = check_convex_level_sets_with(&f1, &f2, &l, &[0.5], 1.0 / 15.0).unwrap();
    let violated =
        matches!(r.verdict, LevelSetVerdict::Violated { crossing, .. } if crossing == 1.0);
    vec![
        check(
            triples == 200 && holds == 200,
            format!("{holds}/{triples} matched step-Λ triples HOLD ({attempts} draws)"),
        ),
        check(violated, format!("K=15 truncated example: {:?}", r.verdict)),
        check(
            r.crossing_f1.abs() <= 1.0 / 15.0 && r.crossing_f2.abs() <= 1.0 / 15.0,
            format!(
                "T(F1) = {}, T(F2) = {} (|·| ≤ 1/15)",
                r.crossing_f1, r.crossing_f2
            ),
        ),
    ]
}

fn robustness() -> Vec<Check> {
    let f = DistributionModel::normal(0.0, 1.0).unwrap();
    let l = LambdaFunction::constant(0.05).unwrap();
    let ladder: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|d| {
            robustness_experiment(&f, &l, &Perturbation::Shift { delta: *d }, 500, 2000, 42)
                .unwrap()
                .law_distance
        })
        .collect();
    let g = DistributionModel::discrete(&[(0.0, 0.001), (1.0, 0.999)]).unwrap();
    let lg = LambdaFunction::constant(0.001).unwrap();
    let mv = Perturbation::MoveMass {
        from: 1.0,
        to: 0.0,
        mass: 0.001,
    };
    let r = robustness_experiment(&g, &lg, &mv, 500, 2000, 42).unwrap();
    vec![
        check(
            ladder[0] >= ladder[1] && ladder[1] >= ladder[2],
            format!("C_Λ ladder δ = 0.04, 0.02, 0.01: law distances {ladder:.4?}"),
        ),
        check(
            ladder[2] <= 0.05,
            format!("law distance at δ = 0.01: {:.4} (≤ 0.05)", ladder[2]),
        ),
        check(
            r.law_distance >= 0.2,
            format!(
                "non-C_Λ scenario: input distance {:.4}, law distance {:.4} (≥ 0.2)",
                r.input_distance, r.law_distance
            ),
        ),
    ]
}

fn consistency() -> Vec<Check> {
    let n = 100_000;
    let iid = DataProcess::iid(DistributionModel::normal(0.0, 1.0).unwrap()).unwrap();
    let c = LambdaFunction::constant(0.05).unwrap();
    let r = run_consistency(&iid, &c, n, 42).unwrap();

    let states = vec![(0.0, 1.0), (-0.5, 2.0)];
    let rs =
        DataProcess::regime_switching(states.clone(), vec![vec![0.95, 0.05], vec![0.1, 0.9]], 0)
            .unwrap();
    let models: Vec<DistributionModel> = states
        .iter()
        .map(|(m, s)| DistributionModel::normal(*m, *s).unwrap())
        .collect();
    let lc = build_clamped_normal(&models, 0.01, 0.1, ClampedNormalParams::default()).unwrap();
    let rr = run_consistency(&rs, &lc, n, 42).unwrap();
    let bound = 4.0 * (lc.lam_max() * (1.0 - lc.lam_min()) / n as f64).sqrt();

    let pit = pit_check(&iid, &c, n, 42).unwrap();
    let pit_rs = pit_check(&rs, &lc, n, 42).unwrap();
    vec![
        check(
            r.final_average.abs() <= 0.00276,
            format!(
                "iid normal, Λ = 0.05: |final_average| = {:.5} (≤ 0.00276)",
                r.final_average.abs()
            ),
        ),
        check(
            rr.final_average.abs() <= bound,
            format!(
                "regime switching, clamped-normal Λ: |final_average| = {:.5} (≤ {bound:.5})",
                rr.final_average.abs()
            ),
        ),
        check(
            pit.kolmogorov <= pit.critical_value,
            format!(
                "PIT iid: KS = {:.5} (≤ {:.5})",
                pit.kolmogorov, pit.critical_value
            ),
        ),
        check(
            pit_rs.kolmogorov <= pit_rs.critical_value,
            format!(
                "PIT regime switching: KS = {:.5} (≤ {:.5})",
                pit_rs.kolmogorov, pit_rs.critical_value
            ),
        ),
    ]
}

fn random_lambda(rng: &mut ChaCha8Rng) -> LambdaFunction {
    match rng.random_range(0..5) {
        0 => LambdaFunction::constant(rng.random_range(0.01..0.5)).unwrap(),
        1 => random_step_lambda(rng),
        2 => {
            let x = rng.random_range(-3.0..3.0);
            let (a, b) = (rng.random_range(0.01..0.4), rng.random_range(0.01..0.4));
            LambdaFunction::piecewise_linear(&[(x, a), (x + rng.random_range(0.1..3.0), b)])
                .unwrap()
        }
        3 => LambdaFunction::clamped_normal_continuous(
            rng.random_range(-1.0..1.0),
            rng.random_range(0.2..2.0),
            0.01,
            0.2,
        )
        .unwrap(),
        _ => LambdaFunction::counterexample(rng.random_range(0.001..0.005)).unwrap(),
    }
}

fn random_empirical(rng: &mut ChaCha8Rng) -> DistributionModel {
    let n = rng.random_range(1..30);
    DistributionModel::empirical((0..n).map(|_| rng.random_range(-4.0..4.0)).collect()).unwrap()
}

fn property_suites() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut out = Vec::new();

    // Lévy metric axioms
    let mut bad = 0;
    for _ in 0..100 {
        let (f, g, h) = (
            random_empirical(&mut rng),
            random_empirical(&mut rng),
            random_empirical(&mut rng),
        );
        let dfg = levy_distance(&f, &g);
        let ok = (0.0..=1.0).contains(&dfg)
            && levy_distance(&f, &f) == 0.0
            && (dfg - levy_distance(&g, &f)).abs() <= 1e-9
            && dfg <= levy_distance(&f, &h) + levy_distance(&h, &g) + 2e-9
            && dfg <= kolmogorov_distance(&f, &g) + 1e-9;
        if !ok {
            bad += 1;
        }
    }
    out.push(check(
        bad == 0,
        format!("Lévy metric axioms: {bad}/100 violations"),
    ));

    // score nonnegativity and the two score forms
    let (mut neg, mut disagree) = (0, 0);
    for _ in 0..10_000 {
        let l = random_lambda(&mut rng);
        let (x, y) = (
            rng.random_range(-150.0..10.0),
            rng.random_range(-150.0..10.0),
        );
        let s = score(&l, x, y);
        if s < 0.0 || (x != y && s == 0.0) {
            neg += 1;
        }
        if x != y && (s - score_weighted(&l, x, y)).abs() > 1e-12 * (1.0 + s.abs()) {
            disagree += 1;
        }
    }
    out.push(check(
        neg == 0,
        format!("score nonnegativity: {neg}/10000 violations"),
    ));
    out.push(check(
        disagree == 0,
        format!("score forms agree to 1e-12: {disagree}/10000 violations"),
    ));

    // monotonicity and quasiconvexity of ΛVaR
    let (mut mono, mut quasi) = (0, 0);
    for _ in 0..500 {
        let l = random_lambda(&mut rng);
        let f = random_empirical(&mut rng);
        let right = f.shifted(rng.random_range(0.0..2.0));
        if lambda_var(&right, &l).value > lambda_var(&f, &l).value {
            mono += 1;
        }
        let g = random_empirical(&mut rng);
        let mix =
            DistributionModel::convex_combination(rng.random_range(0.0..1.0), &f, &g).unwrap();
        let bound = lambda_var(&f, &l).value.max(lambda_var(&g, &l).value);
        if lambda_var(&mix, &l).value > bound {
            quasi += 1;
        }
    }
    out.push(check(
        mono == 0,
        format!("monotonicity: {mono}/500 violations"),
    ));
    out.push(check(
        quasi == 0,
        format!("quasiconvexity: {quasi}/500 violations"),
    ));

    // one-sided derivative signs of the expected score on M_Λ
    let std = DistributionModel::normal(0.0, 1.0).unwrap();
    let cases = vec![
        (std.clone(), LambdaFunction::constant(0.05).unwrap()),
        (
            std.clone(),
            build_clamped_normal(std::slice::from_ref(&std), 0.01, 0.1, Default::default())
                .unwrap(),
        ),
        (
            DistributionModel::normal(0.5, 2.0).unwrap(),
            LambdaFunction::piecewise_linear(&[(-3.0, 0.2), (1.0, 0.02)]).unwrap(),
        ),
        (
            DistributionModel::empirical(
                (0..40)
                    .map(|i| (i as f64 * 0.37).sin() * 3.0 + i as f64 * 0.01)
                    .collect(),
            )
            .unwrap(),
            LambdaFunction::constant(0.101).unwrap(),
        ),
    ];
    let h = 1e-6;
    let (mut sign_bad, mut min_bad, mut tested) = (0, 0, 0);
    for (f, l) in &cases {
        assert!(in_m_lambda(f, l).member);
        let g = ExpectedScore::new(f, l, &ScoreOptions::default()).unwrap();
        let (x_star, _) = crossing(f, l, &ScanConfig::default());
        let g_star = g.eval(x_star);
        let (lo, hi) = f.hull();
        let mut kinks = f.support_points();
        kinks.extend(l.breakpoints());
        for j in 0..=400 {
            let x = lo - 0.5 + (hi - lo + 1.0) * j as f64 / 400.0;
            if (x - x_star).abs() < 1e-4 || kinks.iter().any(|k| (x - k).abs() <= 2.0 * h) {
                continue;
            }
            tested += 1;
            let gx = g.eval(x);
            let slope = (g.eval(x + h) - gx) / h;
            if (x < x_star && slope >= 0.0) || (x > x_star && slope <= 0.0) {
                sign_bad += 1;
            }
            if g_star > gx + 1e-12 {
                min_bad += 1;
            }
        }
    }
    out.push(check(
        sign_bad == 0,
        format!("expected-score slope signs: {sign_bad}/{tested} violations"),
    ));
    out.push(check(
        min_bad == 0,
        format!("g(x*) ≤ g(x): {min_bad}/{tested} violations"),
    ));
    out
}

fn main() {
    let start = Instant::now();
    let results = [
        run(1, "counterexample arithmetic", counterexample_arithmetic),
        run(2, "reduction to VaR", reduction_to_var),
        run(3, "elicitability on M_Λ", elicitability_on_m),
        run(4, "convex level sets", convex_level_sets),
        run(5, "qualitative robustness", robustness),
        run(6, "calibration consistency", consistency),
        run(7, "metric and functional properties", property_suites),
    ];
    let passed = results.iter().filter(|p| **p).count();
    println!(
        "acceptance: {passed}/{} criteria passed ({:.1}s)",
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if passed != results.len() {
        std::process::exit(1);
    }
}
