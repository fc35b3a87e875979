#![no_main]

use berrylab::io::read_jsonl;
use berrylab::perception::{process_stream, DetectionRecord, PerceptionConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 256 * 1024 {
        return;
    }
    if let Ok(records) = read_jsonl::<DetectionRecord>(data) {
        let _ = process_stream(&records, PerceptionConfig::default());
    }
});
