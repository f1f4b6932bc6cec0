//! The `dst-track` command line.
//!
//! Every command reads an optional TOML [`RunConfig`]; flags override the
//! `[paths]` section and the seed. Log verbosity comes from `DST_LOG`
//! (`error`, `warn`, `info`, `debug`, `trace`; default `info`).

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};

use crate::ablation::run_ablation;
use crate::association::EmbeddingStack;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{
    load_tracks, load_video, read_bytes, save_video, to_json_pretty, tracks_to_mot, video_from_bytes, write_bytes,
    Checkpoint, TrackDocument, VideoManifest, VIDEO_MAGIC,
};
use crate::metrics::{counts, EvalReport};
use crate::simulator::{generate, sample_clips};
use crate::tracker;
use crate::training::{cycle_clips, scenario_clips, train, LossRecord, Trainer, LOSS_CSV_HEADER};

/// Environment variable holding the log filter.
pub const LOG_ENV: &str = "DST_LOG";

#[derive(Debug, Parser)]
#[command(name = "dst-track", version, about = "Simulate, train, track and evaluate DST association models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic video and its JSON manifest.
    Simulate(SimulateArgs),
    /// Train an association model and write a checkpoint and loss CSV.
    Train(TrainArgs),
    /// Track a video with a trained checkpoint.
    Track(TrackArgs),
    /// Score predicted tracks against ground truth.
    Eval(EvalArgs),
    /// Run the encoding and mask ablations.
    Ablate(AblateArgs),
    /// Print the resolved configuration as TOML.
    Config(ConfigArgs),
}

#[derive(Debug, Args)]
pub struct ConfigSource {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(short, long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed overriding the scenario, model and training seeds.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: ConfigSource,
    /// Output video container; the manifest goes to `<OUT>.manifest.json`.
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub source: ConfigSource,
    /// Training video container; repeat for several. Without it clips are generated from the scenario.
    #[arg(short, long, value_name = "FILE")]
    pub data: Vec<PathBuf>,
    /// Output checkpoint.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Checkpoint to continue from; `train.iterations` is the total count including its iterations.
    #[arg(long, value_name = "FILE")]
    pub resume: Option<PathBuf>,
    /// Loss trace; defaults to `<CHECKPOINT>.loss.csv`, appended to when resuming.
    #[arg(long, value_name = "FILE")]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[command(flatten)]
    pub source: ConfigSource,
    /// Trained checkpoint.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Video container to track.
    #[arg(long, value_name = "FILE")]
    pub video: Option<PathBuf>,
    /// Output MOT track file.
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Also write the tracks as a JSON document.
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: ConfigSource,
    /// Predicted tracks (MOT or JSON); repeat to pool several videos.
    #[arg(long, value_name = "FILE", required = true)]
    pub pred: Vec<PathBuf>,
    /// Ground truth (video container, MOT or JSON), one per `--pred`.
    #[arg(long, value_name = "FILE", required = true)]
    pub gt: Vec<PathBuf>,
    /// Output JSON report.
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Output CSV report; defaults to the JSON path with a `.csv` extension.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    /// Scenario label for ground truth that is not a video container.
    #[arg(long, value_name = "NAME", default_value = "custom")]
    pub scenario: String,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub source: ConfigSource,
    /// Directory receiving the CSV tables, chart, ground truth and config echo.
    #[arg(short, long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[command(flatten)]
    pub source: ConfigSource,
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "info"))
        .format_timestamp(None)
        .try_init();
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train_cmd(a),
        Command::Track(a) => track(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Config(a) => {
            let cfg = load_config(&a.source)?;
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
    }
}

/// Loads, applies the seed override, resolves and validates.
pub fn load_config(source: &ConfigSource) -> Result<RunConfig> {
    let mut cfg = match &source.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if source.seed.is_some() {
        cfg.seed = source.seed;
    }
    let cfg = cfg.resolved();
    cfg.validate()?;
    Ok(cfg)
}

fn required(flag: Option<PathBuf>, config: &Option<PathBuf>, name: &str, flag_name: &str) -> Result<PathBuf> {
    flag.or_else(|| config.clone())
        .ok_or_else(|| Error::config(format!("paths.{name}"), format!("give --{flag_name} or set paths.{name}")))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let cfg = load_config(&a.source)?;
    let out = required(a.out, &cfg.paths.video, "video", "out")?;
    let video = generate(&cfg.scenario)?;
    save_video(&video, &out)?;
    let manifest = with_suffix(&out, ".manifest.json");
    write_bytes(&manifest, to_json_pretty(&VideoManifest::of(&video))?.as_bytes())?;
    info!("wrote {} frames to {} and {}", video.len(), out.display(), manifest.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let cfg = load_config(&a.source)?;
    let checkpoint = required(a.checkpoint, &cfg.paths.checkpoint, "checkpoint", "checkpoint")?;
    let resume = a.resume.or_else(|| cfg.paths.resume.clone());
    let loss_csv = a.loss_csv.unwrap_or_else(|| with_suffix(&checkpoint, ".loss.csv"));
    let data = if a.data.is_empty() { cfg.paths.data.clone() } else { a.data };

    let (stack, start) = match &resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            if ck.stack.config() != &cfg.model {
                warn!("model settings of {} differ from the config; the checkpoint's are used", p.display());
            }
            (ck.stack, ck.iteration)
        }
        None => (EmbeddingStack::new(cfg.model.clone())?, 0),
    };
    let model = stack.config().clone();
    let mut trainer = Trainer::new(stack, cfg.train.optimizer.clone(), cfg.train.alpha)?.resume_at(start);
    let budget = cfg.train.iterations.saturating_sub(start);
    info!("training iterations {}..{}", start + 1, start + budget);

    let report = if data.is_empty() {
        if cfg.scenario.channels != model.channels || cfg.scenario.roi != model.roi {
            return Err(Error::config("scenario.channels", "scenario features do not fit the model"));
        }
        train(
            &mut trainer,
            scenario_clips(&cfg.scenario, cfg.train.clip_len, cfg.train.seed, start),
            budget,
        )?
    } else {
        let mut clips = Vec::new();
        for p in &data {
            let video = load_video(p)?;
            if video.config.channels != model.channels || video.config.roi != model.roi {
                return Err(Error::config(
                    "model.channels",
                    format!("features of {} do not fit the model", p.display()),
                ));
            }
            clips.extend(sample_clips(&video, cfg.train.clip_len)?);
        }
        train(&mut trainer, cycle_clips(clips, cfg.train.seed, start), budget)?
    };

    let append = resume.is_some() && loss_csv.exists();
    write_loss_csv(&loss_csv, &report.trace, append)?;
    let ck = Checkpoint {
        iteration: trainer.iteration(),
        optimizer: cfg.train.optimizer.clone(),
        stack: trainer.into_stack(),
    };
    ck.save(&checkpoint)?;
    write_bytes(&with_suffix(&checkpoint, ".config.toml"), cfg.to_toml()?.as_bytes())?;
    match report.failure {
        Some(e) => {
            error!("checkpoint of the last finite parameters written to {}", checkpoint.display());
            Err(e)
        }
        None => {
            if let Some(last) = report.trace.last() {
                info!("iteration {} l_asso {:.6}", last.iteration, last.l_asso);
            }
            Ok(())
        }
    }
}

fn write_loss_csv(path: &Path, trace: &[LossRecord], append: bool) -> Result<()> {
    let mut text = String::new();
    if !append {
        text.push_str(LOSS_CSV_HEADER);
        text.push('\n');
    }
    for r in trace {
        text.push_str(&r.csv_row());
        text.push('\n');
    }
    if append {
        let mut f = std::fs::OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    } else {
        write_bytes(path, text.as_bytes())
    }
}

fn track(a: TrackArgs) -> Result<()> {
    let cfg = load_config(&a.source)?;
    let checkpoint = required(a.checkpoint, &cfg.paths.checkpoint, "checkpoint", "checkpoint")?;
    let video_path = required(a.video, &cfg.paths.video, "video", "video")?;
    let out = required(a.out, &cfg.paths.tracks, "tracks", "out")?;
    let ck = Checkpoint::load(&checkpoint)?;
    let video = load_video(&video_path)?;
    let model = ck.stack.config();
    if video.config.channels != model.channels || video.config.roi != model.roi {
        return Err(Error::config(
            "model.channels",
            format!("features of {} do not fit the checkpoint", video_path.display()),
        ));
    }
    let output = tracker::run(&ck.stack, &cfg.tracker, video.config.geometry()?, &video.detections())?;
    write_bytes(&out, tracks_to_mot(&output).as_bytes())?;
    if let Some(json) = a.json {
        write_bytes(&json, to_json_pretty(&TrackDocument::of(&output))?.as_bytes())?;
    }
    info!("{} tracks, {} boxes written to {}", output.ids().len(), output.len(), out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let cfg = load_config(&a.source)?;
    let out = required(a.out, &cfg.paths.report, "report", "out")?;
    if a.pred.len() != a.gt.len() {
        return Err(Error::config("gt", "give one --gt per --pred"));
    }
    let mut entries = Vec::with_capacity(a.pred.len());
    for (p, g) in a.pred.iter().zip(&a.gt) {
        let bytes = read_bytes(g)?;
        let name = if bytes.starts_with(VIDEO_MAGIC) {
            video_from_bytes(&bytes, g)?.config.kind.to_string()
        } else {
            a.scenario.clone()
        };
        entries.push((name, counts(&load_tracks(p)?, &load_tracks(g)?)));
    }
    let report = EvalReport::from_counts(&entries);
    write_bytes(&out, to_json_pretty(&report)?.as_bytes())?;
    let csv = a.csv.unwrap_or_else(|| out.with_extension("csv"));
    write_bytes(&csv, report.csv().as_bytes())?;
    info!(
        "association accuracy {:.4}, idf1 {:.4}, id switches {}",
        report.overall.association_accuracy, report.overall.idf1, report.overall.id_switches
    );
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let cfg = load_config(&a.source)?;
    let dir = required(a.out_dir, &cfg.paths.out_dir, "out_dir", "out-dir")?;
    let report = run_ablation(&cfg)?;
    report.write(&dir)?;
    write_bytes(&dir.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    for c in &report.comparisons {
        info!(
            "{} vs {}: mean difference {:.4}, p = {:.3e}",
            c.arm, c.baseline, c.mean_difference, c.p_value
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn suffix_keeps_extension() {
        assert_eq!(with_suffix(Path::new("a/v.bin"), ".manifest.json"), PathBuf::from("a/v.bin.manifest.json"));
    }

    #[test]
    fn missing_path_is_a_config_error() {
        let e = required(None, &None, "out_dir", "out-dir").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("--out-dir"));
    }
}
