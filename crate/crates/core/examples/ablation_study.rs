//! A miniature encoding and mask ablation; `dst-track ablate` runs the full one.
//!
//! `cargo run --release --example ablation_study`

use dst_track::ablation::{run_ablation, smoke_config};

fn main() -> dst_track::Result<()> {
    let mut cfg = smoke_config();
    cfg.train.iterations = 100;
    cfg.ablation.videos = 10;
    let report = run_ablation(&cfg)?;
    print!("{}", report.arms_csv());
    print!("{}", report.comparisons_csv());
    let dir = std::env::temp_dir().join("dst-track-ablation");
    report.write(&dir)?;
    println!("tables and chart written to {}", dir.display());
    Ok(())
}
