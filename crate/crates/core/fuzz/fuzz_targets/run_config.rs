#![no_main]

use libfuzzer_sys::fuzz_target;
use quadfem_cli::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let argv = std::iter::once("quadfem").chain(text.split_whitespace());
    if let Err(e) = RunConfig::parse_from(argv) {
        assert!(matches!(e.exit_code(), 1 | 2));
    }
});
