#![no_main]

use libfuzzer_sys::fuzz_target;
use rsma_core::cone::{parse_program, write_program};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(program) = parse_program(text) else {
        return;
    };
    let dumped = write_program(&program);
    let again = parse_program(&dumped).expect("written program parses");
    assert_eq!(write_program(&again), dumped);
});
