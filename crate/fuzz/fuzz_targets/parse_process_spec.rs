#![no_main]

use lambda_var::consist::ProcessSpec;
use lambda_var::robust::Perturbation;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
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
});
