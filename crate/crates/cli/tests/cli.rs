use clap::Parser;
use lambda_var_cli::{execute, Cli, CliError, ConfigFile, RunConfig};
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn lvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lvar"))
        .args(args)
        .current_dir(workspace())
        .output()
        .expect("binary runs")
}

fn report(args: &[&str]) -> Value {
    let out = lvar(args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn cli(args: &[&str]) -> Cli {
    Cli::try_parse_from(std::iter::once("lvar").chain(args.iter().copied())).unwrap()
}

const RETURNS: &str = "crates/cli/tests/data/returns.csv";

#[test]
fn compute_on_data() {
    let r = report(&["compute", "--lambda", "constant:0.05", "--data", RETURNS]);
    let res = &r["result"];
    assert_eq!(res["lambda_var"]["value"], res["var"]["value"]);
    assert!(res["es"]["value"].as_f64().unwrap() >= res["var"]["value"].as_f64().unwrap());
    assert_eq!(res["source"]["data"]["observations"], 500);
    assert_eq!(r["seed"], 42);
    assert_eq!(r["config"]["level"], 0.05);
    assert_eq!(r["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn compute_matches_library() {
    let r = report(&[
        "compute",
        "--model",
        "normal:0.5,2",
        "--lambda",
        "linear:-3,0.2;1,0.02",
    ]);
    let v = r["result"]["lambda_var"]["value"].as_f64().unwrap();
    assert!((v - 1.662_374_894_968_651).abs() < 1e-9);
    assert_eq!(r["result"]["var"]["level"], 0.02);
}

#[test]
fn frozen_compute_report() {
    let out = lvar(&["compute", "--lambda", "constant:0.05", "--data", RETURNS]);
    let golden =
        std::fs::read_to_string(workspace().join("crates/cli/tests/golden/compute_returns.json"))
            .unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), golden);
}

#[test]
fn counterexample_preset() {
    let r = report(&["elicit", "--preset", "counterexample", "--eps", "0.004"]);
    let res = &r["result"];
    assert_eq!(res["verdict"], "COUNTEREXAMPLE");
    assert_eq!(res["crossing"], -100.0);
    assert_eq!(res["argmin"], 4.0);
    assert!((res["score_gap"].as_f64().unwrap() - 0.931).abs() < 1e-9);
    assert_eq!(r["config"]["lambda"]["kind"], "counterexample");
}

#[test]
fn counterexample_eps_out_of_range() {
    let out = lvar(&["elicit", "--preset", "counterexample", "--eps", "0.01"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("invalid `eps`"), "{}", stderr(&out));
}

#[test]
fn consistency_iid_normal() {
    let r = report(&[
        "consistency",
        "--process",
        "iid-normal",
        "--lambda",
        "constant:0.05",
        "--n",
        "100000",
        "--seed",
        "42",
    ]);
    let res = &r["result"];
    let bound = 3.0 * (0.05f64 * 0.95 / 100_000.0).sqrt();
    assert!(res["final_average"].as_f64().unwrap().abs() < bound);
    assert_eq!(res["within_bound"], true);
    assert_eq!(res["pit"]["n"], 100_000);
}

#[test]
fn byte_identical_reports() {
    let args = [
        "robustness",
        "--model",
        "normal:0,1",
        "--lambda",
        "constant:0.05",
        "--perturb",
        "shift:0.05",
        "--n",
        "100",
        "--replicas",
        "200",
    ];
    let a = lvar(&args);
    let b = lvar(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let mut threaded = args.to_vec();
    threaded.extend(["--threads", "1"]);
    let c: Value = serde_json::from_slice(&lvar(&threaded).stdout).unwrap();
    let a: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(a["result"], c["result"]);
    assert_eq!(a["config_sha256"], c["config_sha256"]);
}

#[test]
fn seed_changes_results() {
    let base = [
        "consistency",
        "--process",
        "garch",
        "--lambda",
        "constant:0.05",
        "--n",
        "500",
    ];
    let a = report(&base);
    let mut other = base.to_vec();
    other.extend(["--seed", "7"]);
    let b = report(&other);
    assert_ne!(a["result"]["final_average"], b["result"]["final_average"]);
    assert_ne!(a["config_sha256"], b["config_sha256"]);
}

#[test]
fn keys_are_sorted() {
    let out = lvar(&["levy", "--model", "normal:0,1", "--other", "normal:0,1.2"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let top: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("  \"") && !l.starts_with("   "))
        .map(|l| l.trim().split('"').nth(1).unwrap())
        .collect();
    let mut sorted = top.clone();
    sorted.sort();
    assert_eq!(top, sorted);
    assert_eq!(
        top,
        [
            "command",
            "config",
            "config_sha256",
            "result",
            "seed",
            "version"
        ]
    );
}

#[test]
fn csv_tables() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let report = dir.path().join("report.json");
    let out = lvar(&[
        "elicit",
        "--model",
        "normal:0,1",
        "--lambda",
        "clamped_normal:1,0.5,0.01,0.1",
        "--grid-step",
        "0.01",
        "--csv",
        path.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,expected_score"));
    let row = lines.next().unwrap();
    for cell in row.split(',') {
        let mantissa = cell.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(
            mantissa.chars().filter(char::is_ascii_digit).count(),
            17,
            "{cell}"
        );
        cell.parse::<f64>().unwrap();
    }
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["result"]["verdict"], "PASS");
    assert_eq!(
        r["result"]["curve_points"].as_u64().unwrap() as usize,
        text.lines().count() - 1
    );
}

#[test]
fn consistency_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("steps.csv");
    let out = lvar(&[
        "backtest",
        "--data",
        RETURNS,
        "--lambda",
        "constant:0.05",
        "--window",
        "400",
        "--csv",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next(), Some("k,t,w,y,z,running_average"));
    assert_eq!(text.lines().count(), 101);
    assert!(text.lines().nth(1).unwrap().starts_with("401,"));
}

#[test]
fn validation_errors_name_the_field() {
    let cases: &[(&[&str], &str)] = &[
        (
            &["compute", "--lambda", "bogus:1", "--data", RETURNS],
            "invalid `lambda`",
        ),
        (&["compute", "--lambda", "constant:0.05"], "invalid `data`"),
        (
            &["compute", "--lambda", "constant:0.05", "--data", "nope.csv"],
            "cannot read",
        ),
        (
            &[
                "compute",
                "--lambda",
                "constant:0.05",
                "--data",
                RETURNS,
                "--level",
                "1.5",
            ],
            "invalid `level`",
        ),
        (
            &[
                "compute",
                "--lambda",
                "constant:0.05",
                "--data",
                RETURNS,
                "--window",
                "5",
            ],
            "invalid `window`",
        ),
        (
            &[
                "robustness",
                "--model",
                "normal:0,1",
                "--lambda",
                "constant:0.05",
            ],
            "invalid `perturb`",
        ),
        (
            &[
                "robustness",
                "--model",
                "normal:0,1",
                "--lambda",
                "constant:0.05",
                "--perturb",
                "move:0,1,0.1",
            ],
            "invalid `perturb`",
        ),
        (
            &[
                "robustness",
                "--model",
                "normal:0,1",
                "--lambda",
                "constant:0.05",
                "--perturb",
                "none",
                "--n",
                "0",
            ],
            "invalid `n`",
        ),
        (
            &[
                "consistency",
                "--process",
                "garch:0.1,0.5,0.6",
                "--lambda",
                "constant:0.05",
            ],
            "invalid `process`",
        ),
        (
            &[
                "consistency",
                "--process",
                "iid:normal:0",
                "--lambda",
                "constant:0.05",
            ],
            "invalid `process`",
        ),
        (
            &[
                "backtest",
                "--data",
                RETURNS,
                "--lambda",
                "constant:0.05",
                "--window",
                "500",
            ],
            "invalid `window`",
        ),
        (
            &[
                "elicit",
                "--model",
                "normal:0,1",
                "--lambda",
                "constant:0.05",
                "--grid-step",
                "0",
            ],
            "invalid `grid_step`",
        ),
        (
            &["elicit", "--preset", "level-sets", "--k", "2"],
            "invalid `k`",
        ),
        (
            &["elicit", "--preset", "level-sets", "--k", "151"],
            "invalid `k`",
        ),
        (
            &["elicit", "--preset", "level-sets", "--k", "5000"],
            "invalid `k`",
        ),
        (&["levy", "--model", "normal:0,1"], "invalid `other`"),
        (
            &[
                "levy",
                "--model",
                "normal:0,1",
                "--other",
                "normal:0,1",
                "--threads",
                "0",
            ],
            "invalid `threads`",
        ),
        (&["--lambda", "constant:0.05"], "invalid `command`"),
    ];
    for (args, needle) in cases {
        let out = lvar(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
        assert!(stderr(&out).contains(needle), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn malformed_data_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "pnl\n0.1\nabc\n").unwrap();
    let out = lvar(&[
        "compute",
        "--lambda",
        "constant:0.05",
        "--data",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(lvar(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(lvar(&["compute", "--n", "many"]).status.code(), Some(2));
    assert_eq!(lvar(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_three() {
    let out = lvar(&[
        "levy",
        "--model",
        "normal:0,1",
        "--other",
        "normal:0,2",
        "--out",
        "/nonexistent-dir/report.json",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("cannot write"));
}

#[test]
fn flags_override_config_file() {
    let file = ConfigFile::from_json(
        r#"{"command": "consistency", "process": "iid-normal", "lambda": {"kind": "constant", "lam": 0.1},
            "n": 100, "seed": 3}"#,
    )
    .unwrap();
    let cfg = RunConfig::merge(&cli(&["--n", "50"]), file.clone()).unwrap();
    assert_eq!(cfg.n, Some(50));
    assert_eq!(cfg.seed, 3);
    assert_eq!(
        cfg.lambda,
        Some(lambda_var::LambdaSpec::Constant { lam: 0.1 })
    );
    let cfg = RunConfig::merge(
        &cli(&["consistency", "--lambda", "constant:0.2", "--seed", "9"]),
        file,
    )
    .unwrap();
    assert_eq!(
        cfg.lambda,
        Some(lambda_var::LambdaSpec::Constant { lam: 0.2 })
    );
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.n, Some(100));
}

#[test]
fn structured_and_text_specs_agree() {
    let text = ConfigFile::from_json(
        r#"{"command": "compute", "model": "discrete:-1,0.2;2,0.8", "lambda": "step:0;0.1,0.3"}"#,
    )
    .unwrap();
    let structured = ConfigFile::from_json(
        r#"{"command": "compute",
            "model": {"kind": "discrete", "atoms": [[-1, 0.2], [2, 0.8]]},
            "lambda": {"kind": "step", "breakpoints": [0], "levels": [0.1, 0.3]}}"#,
    )
    .unwrap();
    let a = RunConfig::merge(&Cli::default(), text).unwrap();
    let b = RunConfig::merge(&Cli::default(), structured).unwrap();
    assert_eq!(a, b);
    assert_eq!(execute(&a).unwrap().json(), execute(&b).unwrap().json());
}

#[test]
fn config_file_errors() {
    let err =
        ConfigFile::from_json(r#"{"command": "compute", "lambdas": "constant:0.05"}"#).unwrap_err();
    assert!(matches!(err, CliError::Validation { ref field, .. } if field == "config"));
    let file =
        ConfigFile::from_json(r#"{"command": "compute", "lambda": {"kind": "constant"}}"#).unwrap();
    let err = RunConfig::merge(&Cli::default(), file).unwrap_err();
    assert!(
        matches!(err, CliError::Validation { ref field, .. } if field == "lambda"),
        "{err}"
    );
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn unused_parameters_rejected() {
    let file = ConfigFile::from_json(
        r#"{"command": "levy", "model": "normal:0,1", "other": "point:0", "n": 5}"#,
    )
    .unwrap();
    let err = RunConfig::merge(&Cli::default(), file).unwrap_err();
    assert!(
        matches!(err, CliError::Validation { ref field, .. } if field == "n"),
        "{err}"
    );
}

#[test]
fn hash_ignores_output_paths() {
    let a = RunConfig::merge(
        &cli(&["levy", "--model", "normal:0,1", "--other", "point:0"]),
        ConfigFile::default(),
    )
    .unwrap();
    let b = RunConfig::merge(
        &cli(&[
            "levy",
            "--model",
            "normal:0,1",
            "--other",
            "point:0",
            "--out",
            "x.json",
            "--threads",
            "2",
        ]),
        ConfigFile::default(),
    )
    .unwrap();
    assert_eq!(
        lambda_var_cli::run::config_hash(&a),
        lambda_var_cli::run::config_hash(&b)
    );
}

#[test]
fn level_sets_preset() {
    let r = report(&["elicit", "--preset", "level-sets"]);
    let res = &r["result"];
    assert_eq!(res["convex"], false);
    assert_eq!(res["verdict"]["alpha"], 0.5);
    assert_eq!(res["verdict"]["crossing"], 1.0);
    for m in res["mixtures"].as_array().unwrap() {
        let (a, t) = (
            m["alpha"].as_f64().unwrap(),
            m["crossing"].as_f64().unwrap(),
        );
        if a != 0.5 {
            assert!((1.0 / 16.0..=1.0 / 15.0).contains(&t), "{a}: {t}");
        }
    }
}

#[test]
fn levy_against_data() {
    let r = report(&["levy", "--model", "normal:0,0.01", "--data", RETURNS]);
    let d = r["result"]["levy"].as_f64().unwrap();
    let k = r["result"]["kolmogorov"].as_f64().unwrap();
    assert!(d > 0.0 && d <= k);
}
