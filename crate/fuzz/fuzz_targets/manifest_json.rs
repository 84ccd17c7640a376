#![no_main]

use libfuzzer_sys::fuzz_target;
use rsma_core::experiments::Manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = Manifest::from_json(text) {
        let json = m.to_json().expect("manifest serializes");
        assert_eq!(Manifest::from_json(&json).expect("round trip"), m);
    }
});
