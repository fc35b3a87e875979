#![no_main]

use berrylab::metrics::{harvest_success_rate, reach_success_rate, read_success_records};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 256 * 1024 {
        return;
    }
    if let Ok(records) = read_success_records(data) {
        let _ = reach_success_rate(&records, 0.02);
        let _ = harvest_success_rate(&records);
    }
});
