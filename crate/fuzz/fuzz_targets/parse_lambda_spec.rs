#![no_main]

use lambda_var::LambdaSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let specs = [
        text.parse::<LambdaSpec>().ok(),
        serde_json::from_str::<LambdaSpec>(text).ok(),
    ];
    for spec in specs.into_iter().flatten() {
        if let Ok(l) = spec.build() {
            assert!(l.lam_min() <= l.lam_max());
            for x in [-1e3, -101.0, -1.0, 0.0, 0.5, 1.0, 1e3] {
                let v = l.eval(x);
                assert!(v >= l.lam_min() && v <= l.lam_max());
            }
        }
    }
});
