//! Writes and reads back every file format: video container, checkpoint,
//! MOT text and track JSON.
//!
//! `cargo run --example file_formats`

use dst_track::association::{EmbeddingStack, ModelConfig};
use dst_track::encoding::RoiSpec;
use dst_track::io::{load_tracks, load_video, save_video, to_json_pretty, tracks_to_mot, Checkpoint, TrackDocument};
use dst_track::metrics::ground_truth_tracks;
use dst_track::numeric::OptimizerConfig;
use dst_track::simulator::{generate, ScenarioConfig};

fn main() -> dst_track::Result<()> {
    let dir = std::env::temp_dir().join("dst-track-formats");
    std::fs::create_dir_all(&dir).map_err(|e| dst_track::Error::Io { path: dir.clone(), source: e })?;
    let roi = RoiSpec::new(3, 3)?;

    let video = generate(&ScenarioConfig {
        channels: 4,
        roi,
        frames: 10,
        ..ScenarioConfig::default()
    })?;
    save_video(&video, &dir.join("video.bin"))?;
    assert_eq!(load_video(&dir.join("video.bin"))?, video);

    let ck = Checkpoint {
        stack: EmbeddingStack::new(ModelConfig {
            channels: 4,
            roi,
            embed_dim: 8,
            ..ModelConfig::default()
        })?,
        optimizer: OptimizerConfig::default(),
        iteration: 0,
    };
    ck.save(&dir.join("model.ckpt"))?;
    assert_eq!(Checkpoint::load(&dir.join("model.ckpt"))?, ck);

    let gt = ground_truth_tracks(&video);
    let mot = tracks_to_mot(&gt);
    std::fs::write(dir.join("gt.txt"), &mot).map_err(|e| dst_track::Error::Io { path: dir.clone(), source: e })?;
    assert_eq!(load_tracks(&dir.join("gt.txt"))?, gt);
    println!("MOT lines:\n{}", mot.lines().take(3).collect::<Vec<_>>().join("\n"));

    let json = to_json_pretty(&TrackDocument::of(&gt))?;
    println!("track JSON starts:\n{}", json.lines().take(6).collect::<Vec<_>>().join("\n"));
    println!("files in {}", dir.display());
    Ok(())
}
