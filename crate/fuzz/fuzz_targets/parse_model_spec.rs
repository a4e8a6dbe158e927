#![no_main]

use lambda_var::dist::ModelSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let specs = [
        text.parse::<ModelSpec>().ok(),
        serde_json::from_str::<ModelSpec>(text).ok(),
    ];
    for spec in specs.into_iter().flatten() {
        if let Ok(f) = spec.build() {
            let mut last = 0.0;
            for x in [-1e6, -10.0, -1.0, 0.0, 1.0, 10.0, 1e6] {
                let p = f.cdf(x);
                assert!((0.0..=1.0).contains(&p) && p >= last);
                last = p;
            }
        }
    }
});
