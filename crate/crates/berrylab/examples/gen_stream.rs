//! Regenerate the bundled synthetic detection streams under `data/`.
//!
//! Run: `cargo run --example gen_stream -p berrylab -- [out_dir]`

use std::path::PathBuf;

use berrylab::io::write_jsonl;
use berrylab::perception::synthetic::{generate_stream, SyntheticScene};
use berrylab::perception::PerceptionConfig;

fn main() {
    let out_dir: PathBuf =
        std::env::args().nth(1).map(Into::into).unwrap_or_else(|| "crates/berrylab/data".into());
    std::fs::create_dir_all(&out_dir).expect("create output dir");
    let intr = PerceptionConfig::default().intrinsics;

    let three = SyntheticScene::default();
    let records = generate_stream(&intr, &three);
    let path = out_dir.join("three_berries.jsonl");
    let file = std::fs::File::create(&path).expect("create stream file");
    write_jsonl(std::io::BufWriter::new(file), &records).expect("write stream");
    println!("wrote {} ({} records)", path.display(), records.len());

    // Same scene plus one berry whose depth puts it outside the workspace box.
    let mut with_outlier = SyntheticScene::default();
    with_outlier.berries.push([0.05, 0.05, 0.15]);
    let records = generate_stream(&intr, &with_outlier);
    let path = out_dir.join("three_berries_one_outside.jsonl");
    let file = std::fs::File::create(&path).expect("create stream file");
    write_jsonl(std::io::BufWriter::new(file), &records).expect("write stream");
    println!("wrote {} ({} records)", path.display(), records.len());
}
