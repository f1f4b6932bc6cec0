//! Controlled comparisons of the encoding and mask choices.
//!
//! The encoding study trains one model per [`EncodingMode`] on the run's
//! scenario; the mask study trains a DST model with and without the attention
//! mask on a cluttered scenario. Every arm of a study sees the same training
//! clip stream, the same initialisation seed and the same evaluation videos,
//! so per-video accuracies pair up across arms.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::association::{EmbeddingStack, EncodingMode, ModelConfig};
use crate::config::RunConfig;
use crate::encoding::RoiSpec;
use crate::error::{Error, Result};
use crate::io::{tracks_to_mot, write_bytes};
use crate::metrics::{counts, ground_truth_tracks, MetricCounts};
use crate::simulator::{generate, ScenarioConfig, ScenarioKind};
use crate::tracker::{self, TrackerConfig};
use crate::training::{scenario_clips, train, TrainConfig, Trainer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    /// Evaluation videos per arm.
    pub videos: usize,
    /// Video `i` of the evaluation set uses simulator seed `eval_seed + i`.
    pub eval_seed: u64,
    /// Scenario of the mask study; the encoding study uses `[scenario]`.
    pub mask_scenario: ScenarioConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            videos: 100,
            eval_seed: 1_000_000,
            mask_scenario: ScenarioConfig {
                kind: ScenarioKind::RandomWalk,
                width: 96,
                height: 96,
                targets: 6,
                distinctness: 0.5,
                ..ScenarioConfig::default()
            },
        }
    }
}

impl AblationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.videos < 2 {
            return Err(Error::config("ablation.videos", "need at least 2 videos for a paired test"));
        }
        self.mask_scenario.validate().map_err(|e| match e {
            Error::Config { field, reason } => Error::config(format!("ablation.mask_{field}"), reason),
            other => other,
        })
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.videos as u64).map(|i| self.eval_seed + i).collect()
    }
}

/// Which comparison an arm belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Encoding,
    Mask,
}

impl std::fmt::Display for Study {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Study::Encoding => "encoding",
            Study::Mask => "mask",
        })
    }
}

/// One model variant: its settings and the scenario it is trained and scored on.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmSpec {
    pub study: Study,
    pub name: String,
    pub model: ModelConfig,
    pub scenario: ScenarioConfig,
}

/// The five arms in output order.
pub fn arm_specs(config: &RunConfig) -> Vec<ArmSpec> {
    let mut out: Vec<ArmSpec> = [EncodingMode::None, EncodingMode::Classic, EncodingMode::Dst]
        .into_iter()
        .map(|encoding| ArmSpec {
            study: Study::Encoding,
            name: encoding.to_string(),
            model: ModelConfig {
                encoding,
                ..config.model.clone()
            },
            scenario: config.scenario.clone(),
        })
        .collect();
    for (name, use_mask) in [("with_mask", true), ("without_mask", false)] {
        out.push(ArmSpec {
            study: Study::Mask,
            name: name.to_string(),
            model: ModelConfig {
                encoding: EncodingMode::Dst,
                use_mask,
                ..config.model.clone()
            },
            scenario: config.ablation.mask_scenario.clone(),
        });
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoResult {
    pub seed: u64,
    pub counts: MetricCounts,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmResult {
    pub study: Study,
    pub name: String,
    pub encoding: EncodingMode,
    pub use_mask: bool,
    pub scenario: ScenarioKind,
    pub iterations: u64,
    /// Mean `l_asso` over the last 50 iterations (or fewer if training was shorter).
    pub final_loss: f64,
    pub videos: Vec<VideoResult>,
    /// Ground truth of every evaluation video, one MOT file per video.
    pub ground_truth: Vec<String>,
}

impl ArmResult {
    pub fn accuracies(&self) -> Vec<f64> {
        self.videos.iter().map(|v| v.counts.association_accuracy()).collect()
    }

    pub fn mean_accuracy(&self) -> f64 {
        mean(&self.accuracies())
    }

    pub fn std_accuracy(&self) -> f64 {
        sample_std(&self.accuracies())
    }

    pub fn pooled(&self) -> MetricCounts {
        let mut c = MetricCounts::default();
        for v in &self.videos {
            c.add(&v.counts);
        }
        c
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Paired t-test of `arm − baseline` per-video accuracies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub study: Study,
    pub arm: String,
    pub baseline: String,
    pub videos: usize,
    pub mean_difference: f64,
    pub t_statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
}

/// Two-sided paired t-test; `differences` are `arm − baseline`.
///
/// With zero spread the statistic is infinite (p = 0) unless the mean
/// difference is also zero (p = 1).
pub fn paired_t_test(differences: &[f64]) -> Result<(f64, f64)> {
    let n = differences.len();
    if n < 2 {
        return Err(Error::Invalid("paired test needs at least 2 pairs".into()));
    }
    let m = mean(differences);
    let s = sample_std(differences);
    if s == 0.0 {
        return Ok(if m == 0.0 {
            (0.0, 1.0)
        } else {
            (m.signum() * f64::INFINITY, 0.0)
        });
    }
    let t = m / (s / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::Invalid(e.to_string()))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok((t, p.clamp(0.0, 1.0)))
}

pub fn compare(arm: &ArmResult, baseline: &ArmResult) -> Result<Comparison> {
    if arm.videos.iter().map(|v| v.seed).ne(baseline.videos.iter().map(|v| v.seed)) {
        return Err(Error::Invalid(format!(
            "arms {} and {} were evaluated on different videos",
            arm.name, baseline.name
        )));
    }
    let d: Vec<f64> = arm
        .accuracies()
        .iter()
        .zip(baseline.accuracies())
        .map(|(a, b)| a - b)
        .collect();
    let (t, p) = paired_t_test(&d)?;
    Ok(Comparison {
        study: arm.study,
        arm: arm.name.clone(),
        baseline: baseline.name.clone(),
        videos: d.len(),
        mean_difference: mean(&d),
        t_statistic: t,
        p_value: p,
    })
}

/// Trains a fresh model of `model` on clips of `scenario`.
pub fn train_arm(model: &ModelConfig, train_cfg: &TrainConfig, scenario: &ScenarioConfig) -> Result<(EmbeddingStack, f64)> {
    let stack = EmbeddingStack::new(model.clone())?;
    let mut trainer = Trainer::new(stack, train_cfg.optimizer.clone(), train_cfg.alpha)?;
    let report = train(
        &mut trainer,
        scenario_clips(scenario, train_cfg.clip_len, train_cfg.seed, 0),
        train_cfg.iterations,
    )?;
    if let Some(e) = report.failure {
        return Err(e);
    }
    let tail = &report.trace[report.trace.len().saturating_sub(50)..];
    let final_loss = if tail.is_empty() {
        f64::NAN
    } else {
        tail.iter().map(|r| r.l_asso).sum::<f64>() / tail.len() as f64
    };
    Ok((trainer.into_stack(), final_loss))
}

/// Tracks each seeded video of `scenario` and scores it against its ground truth.
pub fn evaluate(
    stack: &EmbeddingStack,
    tracker_cfg: &TrackerConfig,
    scenario: &ScenarioConfig,
    seeds: &[u64],
) -> Result<(Vec<VideoResult>, Vec<String>)> {
    let mut results = Vec::with_capacity(seeds.len());
    let mut gts = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let cfg = ScenarioConfig {
            seed,
            ..scenario.clone()
        };
        let video = generate(&cfg)?;
        let pred = tracker::run(stack, tracker_cfg, cfg.geometry()?, &video.detections())?;
        let gt = ground_truth_tracks(&video);
        results.push(VideoResult {
            seed,
            counts: counts(&pred, &gt),
        });
        gts.push(tracks_to_mot(&gt));
    }
    Ok((results, gts))
}

pub fn run_arm(spec: &ArmSpec, config: &RunConfig) -> Result<ArmResult> {
    let start = Instant::now();
    let (stack, final_loss) = train_arm(&spec.model, &config.train, &spec.scenario)?;
    info!(
        "arm {}: trained {} iterations in {:.1}s, final loss {final_loss:.4}",
        spec.name,
        config.train.iterations,
        start.elapsed().as_secs_f64()
    );
    let (videos, ground_truth) = evaluate(&stack, &config.tracker, &spec.scenario, &config.ablation.seeds())?;
    let arm = ArmResult {
        study: spec.study,
        name: spec.name.clone(),
        encoding: spec.model.encoding,
        use_mask: spec.model.use_mask,
        scenario: spec.scenario.kind,
        iterations: config.train.iterations,
        final_loss,
        videos,
        ground_truth,
    };
    info!("arm {}: mean association accuracy {:.4}", arm.name, arm.mean_accuracy());
    Ok(arm)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub arms: Vec<ArmResult>,
    pub comparisons: Vec<Comparison>,
}

/// Header of [`AblationReport::arms_csv`].
pub const ARMS_CSV_HEADER: &str = "study,arm,encoding,use_mask,scenario,iterations,final_loss,videos,mean_association_accuracy,std_association_accuracy,association_accuracy,id_switches,idf1";
/// Header of [`AblationReport::comparisons_csv`].
pub const COMPARISONS_CSV_HEADER: &str = "study,arm,baseline,videos,mean_difference,t_statistic,p_value";
/// Header of [`AblationReport::per_video_csv`].
pub const PER_VIDEO_CSV_HEADER: &str = "study,arm,video,seed,association_accuracy,id_switches,idf1,pairs";

impl AblationReport {
    pub fn arm(&self, name: &str) -> Option<&ArmResult> {
        self.arms.iter().find(|a| a.name == name)
    }

    pub fn comparison(&self, arm: &str, baseline: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.arm == arm && c.baseline == baseline)
    }

    pub fn arms_csv(&self) -> String {
        let mut out = format!("{ARMS_CSV_HEADER}\n");
        for a in &self.arms {
            let pooled = a.pooled();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                a.study,
                a.name,
                a.encoding,
                a.use_mask,
                a.scenario,
                a.iterations,
                a.final_loss,
                a.videos.len(),
                a.mean_accuracy(),
                a.std_accuracy(),
                pooled.association_accuracy(),
                pooled.id_switches,
                pooled.idf1()
            );
        }
        out
    }

    pub fn comparisons_csv(&self) -> String {
        let mut out = format!("{COMPARISONS_CSV_HEADER}\n");
        for c in &self.comparisons {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.study, c.arm, c.baseline, c.videos, c.mean_difference, c.t_statistic, c.p_value
            );
        }
        out
    }

    pub fn per_video_csv(&self) -> String {
        let mut out = format!("{PER_VIDEO_CSV_HEADER}\n");
        for a in &self.arms {
            for (i, v) in a.videos.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{i},{},{},{},{},{}",
                    a.study,
                    a.name,
                    v.seed,
                    v.counts.association_accuracy(),
                    v.counts.id_switches,
                    v.counts.idf1(),
                    v.counts.pairs
                );
            }
        }
        out
    }

    /// Bar chart of mean association accuracy per arm with ±1 std whiskers.
    pub fn svg(&self) -> String {
        const BAR: f64 = 60.0;
        const GAP: f64 = 30.0;
        const LEFT: f64 = 60.0;
        const TOP: f64 = 40.0;
        const PLOT_H: f64 = 240.0;
        let width = LEFT + self.arms.len() as f64 * (BAR + GAP) + GAP;
        let height = TOP + PLOT_H + 70.0;
        let y = |v: f64| TOP + PLOT_H * (1.0 - v.clamp(0.0, 1.0));
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">Mean association accuracy per arm</text>"#,
            width / 2.0
        );
        for k in 0..=4 {
            let v = k as f64 / 4.0;
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{0}" x2="{1}" y2="{0}" stroke="#ddd"/><text x="{2}" y="{3}" text-anchor="end">{v:.2}</text>"##,
                y(v),
                width - GAP / 2.0,
                LEFT - 6.0,
                y(v) + 4.0
            );
        }
        for (i, a) in self.arms.iter().enumerate() {
            let x = LEFT + GAP + i as f64 * (BAR + GAP);
            let m = a.mean_accuracy();
            let sd = a.std_accuracy();
            let fill = match a.study {
                Study::Encoding => "#4c78a8",
                Study::Mask => "#f58518",
            };
            let _ = writeln!(
                s,
                r#"<rect class="bar" data-arm="{}" data-value="{m}" x="{x}" y="{}" width="{BAR}" height="{}" fill="{fill}"/>"#,
                a.name,
                y(m),
                y(0.0) - y(m)
            );
            let cx = x + BAR / 2.0;
            let _ = writeln!(
                s,
                r#"<line x1="{cx}" y1="{}" x2="{cx}" y2="{}" stroke="black"/>"#,
                y(m + sd),
                y(m - sd)
            );
            let _ = writeln!(
                s,
                r#"<text x="{cx}" y="{}" text-anchor="middle">{m:.3}</text>"#,
                y(m + sd) - 4.0
            );
            let _ = writeln!(
                s,
                r##"<text x="{cx}" y="{}" text-anchor="middle">{}</text><text x="{cx}" y="{}" text-anchor="middle" fill="#666">{}</text>"##,
                y(0.0) + 18.0,
                a.name,
                y(0.0) + 34.0,
                a.study
            );
        }
        s.push_str("</svg>\n");
        s
    }

    /// Writes `arms.csv`, `comparisons.csv`, `per_video.csv`, `ablation.svg`
    /// and `gt/<arm>.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("gt")).map_err(|e| Error::io(dir, e))?;
        write_bytes(&dir.join("arms.csv"), self.arms_csv().as_bytes())?;
        write_bytes(&dir.join("comparisons.csv"), self.comparisons_csv().as_bytes())?;
        write_bytes(&dir.join("per_video.csv"), self.per_video_csv().as_bytes())?;
        write_bytes(&dir.join("ablation.svg"), self.svg().as_bytes())?;
        for a in &self.arms {
            write_bytes(&dir.join("gt").join(format!("{}.txt", a.name)), ground_truth_dump(a).as_bytes())?;
        }
        Ok(())
    }
}

/// All evaluation ground truth of an arm as MOT lines prefixed by the video index.
pub fn ground_truth_dump(arm: &ArmResult) -> String {
    let mut out = String::new();
    for (i, text) in arm.ground_truth.iter().enumerate() {
        for line in text.lines() {
            let _ = writeln!(out, "{i},{line}");
        }
    }
    out
}

/// Runs every arm and the paired comparisons.
pub fn run_ablation(config: &RunConfig) -> Result<AblationReport> {
    let config = config.resolved();
    config.validate()?;
    check_mask_scenario(&config.model, &config.ablation.mask_scenario)?;
    let arms = arm_specs(&config)
        .iter()
        .map(|spec| run_arm(spec, &config))
        .collect::<Result<Vec<_>>>()?;
    report_from_arms(arms)
}

/// Comparisons are DST against `none` and `classic`, and with against without mask.
pub fn report_from_arms(arms: Vec<ArmResult>) -> Result<AblationReport> {
    let find = |name: &str| {
        arms.iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Invalid(format!("missing arm {name}")))
    };
    let comparisons = vec![
        compare(find("dst")?, find("none")?)?,
        compare(find("dst")?, find("classic")?)?,
        compare(find("with_mask")?, find("without_mask")?)?,
    ];
    Ok(AblationReport { arms, comparisons })
}

fn check_mask_scenario(model: &ModelConfig, scenario: &ScenarioConfig) -> Result<()> {
    if scenario.channels != model.channels {
        return Err(Error::config(
            "ablation.mask_scenario.channels",
            format!("must equal model.channels ({})", model.channels),
        ));
    }
    if scenario.roi != model.roi {
        return Err(Error::config("ablation.mask_scenario.roi", "must equal model.roi"));
    }
    Ok(())
}

/// Small configuration for quick runs and tests.
pub fn smoke_config() -> RunConfig {
    let roi = RoiSpec::new(3, 3).expect("valid roi");
    let mut c = RunConfig::default();
    c.scenario.channels = 4;
    c.scenario.roi = roi;
    c.scenario.width = 64;
    c.scenario.height = 64;
    c.scenario.frames = 12;
    c.model.channels = 4;
    c.model.roi = roi;
    c.model.embed_dim = 8;
    c.train.iterations = 3;
    c.train.clip_len = 4;
    c.tracker.window = 4;
    c.ablation.videos = 3;
    c.ablation.mask_scenario.channels = 4;
    c.ablation.mask_scenario.roi = roi;
    c.ablation.mask_scenario.width = 64;
    c.ablation.mask_scenario.height = 64;
    c.ablation.mask_scenario.targets = 3;
    c.ablation.mask_scenario.frames = 12;
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn paired_t_hand_example() {
        // d = 1, 2, 3: mean 2, sd 1, t = 2·√3
        let (t, p) = paired_t_test(&[1.0, 2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(t, 2.0 * 3f64.sqrt(), epsilon = 1e-12);
        // t with 2 degrees of freedom has cdf 1/2 + t/(2√(2+t²))
        let oracle = 2.0 * (1.0 - (0.5 + t / (2.0 * (2.0 + t * t).sqrt())));
        assert_abs_diff_eq!(p, oracle, epsilon = 1e-9);
    }

    #[test]
    fn paired_t_degenerate() {
        assert_eq!(paired_t_test(&[0.0, 0.0, 0.0]).unwrap(), (0.0, 1.0));
        assert_eq!(paired_t_test(&[0.5, 0.5]).unwrap().1, 0.0);
        assert!(paired_t_test(&[1.0]).is_err());
    }

    #[test]
    fn arms_share_seeds_and_ground_truth() {
        let cfg = smoke_config();
        let report = run_ablation(&cfg).unwrap();
        assert_eq!(report.arms.len(), 5);
        let names: Vec<&str> = report.arms.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["none", "classic", "dst", "with_mask", "without_mask"]);
        for study in [Study::Encoding, Study::Mask] {
            let arms: Vec<&ArmResult> = report.arms.iter().filter(|a| a.study == study).collect();
            for a in &arms[1..] {
                assert_eq!(ground_truth_dump(a), ground_truth_dump(arms[0]));
                assert_eq!(
                    a.videos.iter().map(|v| v.seed).collect::<Vec<_>>(),
                    cfg.ablation.seeds()
                );
            }
        }
        assert_eq!(report.comparisons.len(), 3);
    }

    #[test]
    fn csv_columns_match_headers() {
        let report = run_ablation(&smoke_config()).unwrap();
        for (text, header) in [
            (report.arms_csv(), ARMS_CSV_HEADER),
            (report.comparisons_csv(), COMPARISONS_CSV_HEADER),
            (report.per_video_csv(), PER_VIDEO_CSV_HEADER),
        ] {
            let mut lines = text.lines();
            assert_eq!(lines.next(), Some(header));
            let cols = header.split(',').count();
            for l in lines {
                assert_eq!(l.split(',').count(), cols, "{l}");
            }
        }
        assert_eq!(report.arms_csv().lines().count(), 6);
        let svg = report.svg();
        assert_eq!(svg.matches(r#"class="bar""#).count(), 5);
    }

    #[test]
    fn mismatched_mask_scenario_rejected() {
        let mut cfg = smoke_config();
        cfg.ablation.mask_scenario.channels = 6;
        match run_ablation(&cfg) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "ablation.mask_scenario.channels"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
