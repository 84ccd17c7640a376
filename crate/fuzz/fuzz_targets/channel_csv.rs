#![no_main]

use libfuzzer_sys::fuzz_target;
use rsma_core::channels::{read_channel_csv, write_channel_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(draws) = read_channel_csv(data) else {
        return;
    };
    let mut out = Vec::new();
    write_channel_csv(&mut out, &draws).expect("accepted draws serialize");
    let again = read_channel_csv(out.as_slice()).expect("written dump parses");
    assert_eq!(draws.len(), again.len());
    for (a, b) in draws.iter().zip(&again) {
        assert_eq!(a.gains(), b.gains());
    }
});
