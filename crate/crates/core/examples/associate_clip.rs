//! Detection-detection attention over a simulated clip with an untrained model.
//!
//! `cargo run --example associate_clip`

use dst_track::association::{detection_attention, embed_detection, EmbeddingStack, ModelConfig};
use dst_track::encoding::{encode_roi, RoiSpec};
use dst_track::simulator::{generate, ScenarioConfig};

fn main() -> dst_track::Result<()> {
    let roi = RoiSpec::new(4, 4)?;
    let video = generate(&ScenarioConfig {
        channels: 8,
        roi,
        frames: 3,
        targets: 2,
        distinctness: 1.0,
        seed: 3,
        ..ScenarioConfig::default()
    })?;
    let stack = EmbeddingStack::new(ModelConfig {
        channels: 8,
        roi,
        embed_dim: 16,
        ..ModelConfig::default()
    })?;
    let geom = video.config.geometry()?;
    let (mut embs, mut frames, mut ids) = (Vec::new(), Vec::new(), Vec::new());
    for (t, f) in video.frames.iter().enumerate() {
        for d in f {
            let enc = encode_roi(&d.detection.bbox, &geom, &roi)?;
            embs.push(embed_detection(&d.detection.appearance, &enc, &d.detection.mask, &stack)?);
            frames.push(t);
            ids.push(d.identity);
        }
    }
    let m = detection_attention(&embs, &frames, &stack)?;
    println!("{} queries x {} keys (frame sinks included)", m.scores().rows(), m.scores().cols());
    for r in 0..m.scores().rows() {
        let row: Vec<String> = (0..m.scores().cols())
            .map(|c| if m.is_allowed(r, c) { format!("{:.2}", m.get(r, c)) } else { "  - ".into() })
            .collect();
        println!("frame {} id {}: {}", frames[r], ids[r], row.join(" "));
    }
    println!("max row-group deviation from 1: {:.1e}", m.max_group_deviation());
    Ok(())
}
