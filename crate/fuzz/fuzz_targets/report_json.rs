#![no_main]

use libfuzzer_sys::fuzz_target;
use renewal_core::spectral::RootReport;

fuzz_target!(|data: &[u8]| {
    if let Ok(reports) = serde_json::from_slice::<Vec<RootReport>>(data) {
        let text = serde_json::to_string(&reports).unwrap();
        let _: Vec<RootReport> = serde_json::from_str(&text).unwrap();
    }
});
