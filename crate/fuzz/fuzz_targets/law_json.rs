#![no_main]

use libfuzzer_sys::fuzz_target;
use renewal_core::InterArrivalLaw;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(law) = InterArrivalLaw::from_json(text) {
        let again = InterArrivalLaw::from_json(&law.to_json()).expect("re-encoded law parses");
        assert_eq!(again.density_vec(8), law.density_vec(8));
    }
});
