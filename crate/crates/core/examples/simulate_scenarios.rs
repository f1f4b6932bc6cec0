//! Generates one video per scenario kind and summarises it.
//!
//! `cargo run --example simulate_scenarios`

use dst_track::simulator::{generate, ScenarioConfig, ScenarioKind};

fn main() -> dst_track::Result<()> {
    for kind in [
        ScenarioKind::Crossing,
        ScenarioKind::Parallel,
        ScenarioKind::Occlusion,
        ScenarioKind::RandomWalk,
    ] {
        let video = generate(&ScenarioConfig {
            kind,
            targets: 4,
            channels: 8,
            frames: 48,
            seed: 7,
            ..ScenarioConfig::default()
        })?;
        let detections: usize = video.frames.iter().map(Vec::len).sum();
        let hidden = video.frames.iter().flatten().filter(|d| !d.visible).count();
        let missed = video.truth.iter().map(Vec::len).sum::<usize>() - detections;
        println!("{kind:>12}: {detections} detections, {hidden} partly covered, {missed} dropped by occlusion");
    }
    Ok(())
}
