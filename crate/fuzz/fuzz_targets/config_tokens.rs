#![no_main]

use libfuzzer_sys::fuzz_target;
use renewal_core::cli::{config_tokens, parse_args};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(tokens) = config_tokens(text) {
        for t in &tokens {
            assert!(t.starts_with("--"));
        }
        let _ = parse_args(std::iter::once("law".to_string()).chain(tokens));
    }
});
