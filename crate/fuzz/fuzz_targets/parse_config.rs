#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = histent_cli::parse_config(text) {
        // Whatever parses must survive its own echo.
        histent_cli::parse_config(&cfg.echo()).expect("echo of a valid config parses");
    }
});
