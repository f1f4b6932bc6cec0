//! Trains a small DST model on generated crossing clips and prints the loss trace.
//!
//! `cargo run --release --example train_model`

use dst_track::association::{EmbeddingStack, ModelConfig};
use dst_track::encoding::AlphaPolicy;
use dst_track::numeric::OptimizerConfig;
use dst_track::simulator::ScenarioConfig;
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
    let report = train(&mut trainer, scenario_clips(&scenario, 16, 0, 0), 300)?;
    for r in report.trace.iter().step_by(50) {
        println!("iteration {:>4}: l_clip {:.4}  l_det_traj {:.4}  l_asso {:.4}", r.iteration, r.l_clip, r.l_det_traj, r.l_asso);
    }
    if let Some(e) = report.failure {
        println!("stopped early: {e}");
    }
    Ok(())
}
