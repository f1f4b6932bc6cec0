//! Trains briefly, tracks a held-out crossing video and scores it.
//!
//! `cargo run --release --example track_video`

use dst_track::association::{EmbeddingStack, ModelConfig};
use dst_track::encoding::AlphaPolicy;
use dst_track::metrics::{counts, ground_truth_tracks};
use dst_track::numeric::OptimizerConfig;
use dst_track::simulator::{generate, ScenarioConfig};
use dst_track::tracker::{run, TrackerConfig};
use dst_track::training::{scenario_clips, train, Trainer};

fn main() -> dst_track::Result<()> {
    let scenario = ScenarioConfig {
        channels: 16,
        ..ScenarioConfig::default()
    };
    let stack = EmbeddingStack::new(ModelConfig {
        channels: 16,
        embed_dim: 32,
        ..ModelConfig::default()
    })?;
    let mut trainer = Trainer::new(stack, OptimizerConfig::default(), AlphaPolicy::Uniform)?;
    train(&mut trainer, scenario_clips(&scenario, 16, 0, 0), 600)?;
    let stack = trainer.into_stack();

    let video = generate(&ScenarioConfig {
        seed: 424_242,
        ..scenario.clone()
    })?;
    let pred = run(&stack, &TrackerConfig::default(), scenario.geometry()?, &video.detections())?;
    let c = counts(&pred, &ground_truth_tracks(&video));
    println!("{} tracks over {} frames", pred.ids().len(), video.len());
    println!(
        "association accuracy {:.3}, idf1 {:.3}, id switches {}",
        c.association_accuracy(),
        c.idf1(),
        c.id_switches
    );
    Ok(())
}
