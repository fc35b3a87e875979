#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 64 * 1024 {
        return;
    }
    if let Ok(text) = std::str::from_utf8(data) {
        // Parsing plus full cross-field validation must never panic.
        let _ = berrylab::RootConfig::from_toml_str(text);
    }
});
