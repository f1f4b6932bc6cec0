//! Builds a run configuration, prints it as TOML and parses it back.
//!
//! `cargo run --example run_config`

use dst_track::association::EncodingMode;
use dst_track::config::RunConfig;

fn main() -> dst_track::Result<()> {
    let mut cfg = RunConfig::from_toml("seed = 5\n[scenario]\nkind = \"random-walk\"\ntargets = 4\n")?;
    cfg.model.encoding = EncodingMode::Classic;
    cfg.validate()?;
    let text = cfg.to_toml()?;
    println!("{text}");
    assert_eq!(RunConfig::from_toml(&text)?, cfg);
    let resolved = cfg.resolved();
    println!(
        "resolved seeds: scenario {}, model {}, train {}",
        resolved.scenario.seed, resolved.model.init_seed, resolved.train.seed
    );
    Ok(())
}
