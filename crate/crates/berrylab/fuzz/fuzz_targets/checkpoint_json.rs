#![no_main]

use berrylab::checkpoint::PolicyCheckpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() > 1024 * 1024 {
        return;
    }
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(ck) = PolicyCheckpoint::from_json_str(text) {
            // A checkpoint that validates must produce a usable policy.
            let policy = ck.into_policy().expect("validated checkpoint must load");
            let obs = vec![0.1; ck.obs_dim];
            let _ = policy.forward(&obs);
        }
    }
});
