#![no_main]

use libfuzzer_sys::fuzz_target;
use rsma_cli::{parse_args, CliError};

// One argument per line; parsing only, nothing is run.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let argv = std::iter::once("rsma").chain(text.lines());
    match parse_args(argv) {
        Ok(_) => {}
        Err(e @ (CliError::Usage { .. } | CliError::Run { .. })) => {
            assert_ne!(e.exit_code(), 0);
            let _ = e.record();
        }
        Err(CliError::Info(_)) => {}
    }
});
