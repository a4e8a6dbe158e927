//! Replays the fuzz corpus through every parser entry point and throws
//! generated inputs at them; none may panic.

use lambda_var::consist::ProcessSpec;
use lambda_var::dist::ModelSpec;
use lambda_var::robust::Perturbation;
use lambda_var::{DataSet, LambdaSpec};
use lambda_var_cli::{Cli, ConfigFile, RunConfig};
use proptest::prelude::*;
use std::path::Path;

fn csv(text: &str) {
    if let Ok(d) = DataSet::from_csv_str(text, "fuzz") {
        assert!(!d.is_empty());
        assert!(d.values().iter().all(|v| v.is_finite()));
    }
}

fn lambda(text: &str) {
    let specs = [
        text.parse::<LambdaSpec>().ok(),
        serde_json::from_str::<LambdaSpec>(text).ok(),
    ];
    for spec in specs.into_iter().flatten() {
        if let Ok(l) = spec.build() {
            assert!(l.lam_min() <= l.lam_max());
            for x in [-1e3, -101.0, -1.0, 0.0, 0.5, 1.0, 1e3] {
                let v = l.eval(x);
                assert!(v >= l.lam_min() && v <= l.lam_max(), "{text}: Λ({x}) = {v}");
            }
        }
    }
}

fn model(text: &str) {
    let specs = [
        text.parse::<ModelSpec>().ok(),
        serde_json::from_str::<ModelSpec>(text).ok(),
    ];
    for spec in specs.into_iter().flatten() {
        if let Ok(f) = spec.build() {
            let mut last = 0.0;
            for x in [-1e6, -10.0, -1.0, 0.0, 1.0, 10.0, 1e6] {
                let p = f.cdf(x);
                assert!(
                    (0.0..=1.0).contains(&p) && p >= last,
                    "{text}: F({x}) = {p}"
                );
                last = p;
            }
        }
    }
}

fn process(text: &str) {
    for spec in [
        text.parse::<ProcessSpec>().ok(),
        serde_json::from_str::<ProcessSpec>(text).ok(),
    ]
    .into_iter()
    .flatten()
    {
        if let Ok(p) = spec.build() {
            let _ = p.conditional();
        }
    }
    let _ = text.parse::<Perturbation>();
    let _ = serde_json::from_str::<Perturbation>(text);
}

fn config(text: &str) {
    if let Ok(file) = ConfigFile::from_json(text) {
        if let Ok(cfg) = RunConfig::merge(&Cli::default(), file) {
            let _ = lambda_var_cli::run::config_hash(&cfg);
        }
    }
}

type Target = (&'static str, fn(&str));

const TARGETS: [Target; 5] = [
    ("parse_csv", csv),
    ("parse_lambda_spec", lambda),
    ("parse_model_spec", model),
    ("parse_process_spec", process),
    ("parse_config", config),
];

/// Seeds named `reject_*` are inputs that must be refused cleanly.
fn named_corpus(target: &str) -> Vec<(String, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut seeds: Vec<(String, String)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read_to_string(&path).unwrap())
        })
        .collect();
    seeds.sort();
    seeds
}

fn corpus(target: &str) -> Vec<String> {
    named_corpus(target).into_iter().map(|(_, s)| s).collect()
}

#[test]
fn corpus_replays() {
    for (name, run) in TARGETS {
        let seeds = corpus(name);
        assert!(seeds.len() >= 5, "{name}: {} seeds", seeds.len());
        for s in &seeds {
            run(s);
        }
    }
}

#[test]
fn corpus_seeds_parse() {
    for (name, s) in named_corpus("parse_lambda_spec") {
        let spec = s
            .parse::<LambdaSpec>()
            .ok()
            .or_else(|| serde_json::from_str::<LambdaSpec>(&s).ok());
        let ok = spec.is_some_and(|l| l.build().is_ok());
        assert_eq!(ok, !name.starts_with("reject_"), "{name}: {s}");
    }
    for (name, s) in named_corpus("parse_config") {
        let ok = RunConfig::merge(&Cli::default(), ConfigFile::from_json(&s).unwrap()).is_ok();
        assert_eq!(ok, !name.starts_with("reject_"), "{name}: {s}");
    }
}

fn mutate(seed: &str, cut: usize, insert: &str) -> String {
    let chars: Vec<char> = seed.chars().collect();
    let at = cut % (chars.len() + 1);
    let mut out: String = chars[..at].iter().collect();
    out.push_str(insert);
    out.extend(&chars[at..]);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn spec_grammar_noise(s in "[a-z_]{0,16}:?[-0-9.,;|eE+a-z]{0,40}") {
        lambda(&s);
        model(&s);
        process(&s);
    }

    #[test]
    fn csv_noise(s in "([-0-9.eE+a-z ]{0,12}\n){0,20}") {
        csv(&s);
    }

    #[test]
    fn mutated_seeds(t in 0usize..5, pick in 0usize..64, cut in 0usize..200, insert in "[-0-9.,;:|\\[\\]{}\"a-z ]{0,8}") {
        let (name, run) = TARGETS[t];
        let seeds = corpus(name);
        let seed = &seeds[pick % seeds.len()];
        run(&mutate(seed, cut, &insert));
    }
}
