#![no_main]

use lambda_var_cli::{Cli, ConfigFile, RunConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(file) = ConfigFile::from_json(text) {
        if let Ok(cfg) = RunConfig::merge(&Cli::default(), file) {
            let _ = lambda_var_cli::run::config_hash(&cfg);
        }
    }
});
