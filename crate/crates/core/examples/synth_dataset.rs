//! Generate a small mixed-quality dataset on disk, read it back, and print
//! the relevant-area histogram per source tag.
//! `cargo run --release --example synth_dataset -- [out_dir]`

use std::path::PathBuf;

use ivm::io::{dataset_stats, load_manifest_records, read_manifest, write_synth_dataset};
use ivm::synth::{build_mixed_dataset, build_test_set, NoiseSpec, SceneSpec};

fn main() -> ivm::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synth_out".into()));
    let spec = SceneSpec::default();
    let data = build_mixed_dataset(3, 20, 200, 0.4, &spec, &NoiseSpec::default())?;
    let test = build_test_set(3, 20, &spec)?;
    write_synth_dataset(&dir, &data, &test)?;

    let loaded = load_manifest_records(&dir.join("o.jsonl"))?;
    let corrupted = loaded.iter().filter(|r| !r.is_clean()).count();
    println!("o records={} corrupted={corrupted}", loaded.len());
    for r in loaded.iter().filter(|r| !r.is_clean()).take(3) {
        println!("  {} {} \"{}\"", r.record.id, r.record.source, r.record.instruction);
    }

    let mut records = read_manifest(&dir.join("e.jsonl"))?;
    records.extend(read_manifest(&dir.join("o.jsonl"))?);
    print!("{}", dataset_stats(&records, &dir, 0.0, 10)?);
    Ok(())
}
