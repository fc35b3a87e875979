#![no_main]

use berrylab::metrics::{analyze_log, read_trajectory_csv, MetricsConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 256 * 1024 {
        return;
    }
    if let Ok(logs) = read_trajectory_csv(data) {
        let config = MetricsConfig::default();
        for log in logs.iter().take(16) {
            let _ = analyze_log(log, &config);
        }
    }
});
