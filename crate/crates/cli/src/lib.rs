//! Command-line surface of `lambda-var`: config resolution, dispatch and
//! report emission.

pub mod config;
pub mod error;
pub mod run;

pub use config::{Cli, Command, ConfigFile, Preset, RunConfig};
pub use error::{CliError, CliResult};
pub use run::{execute, Outcome};

use std::path::Path;

fn write(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match threads {
        None => Ok(f()),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| CliError::runtime(format!("cannot start thread pool: {e}"))),
    }
}

/// Resolves, runs and writes the reports. Returns the JSON report when no
/// `--out` path was given.
pub fn run(cli: &Cli) -> CliResult<Option<String>> {
    let cfg = RunConfig::resolve(cli)?;
    let outcome = in_pool(cfg.threads, || execute(&cfg))??;
    if let Some(p) = &cfg.csv {
        write(p, &outcome.table.to_csv())?;
    }
    let json = outcome.json();
    match &cfg.out {
        Some(p) => write(p, &json).map(|_| None),
        None => Ok(Some(json)),
    }
}
