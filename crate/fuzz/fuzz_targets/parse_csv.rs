#![no_main]

use lambda_var::DataSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(d) = DataSet::from_csv_str(text, "fuzz") {
        assert!(!d.is_empty());
        assert!(d.values().iter().all(|v| v.is_finite()));
    }
});
