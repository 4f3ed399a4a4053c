#![no_main]

use libfuzzer_sys::fuzz_target;
use renewal_core::cli::parse_invocation;

// NUL-separated argument vector
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_invocation(text.split('\0'));
});
