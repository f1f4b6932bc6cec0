//! Seeded synthetic multi-target videos.
//!
//! Targets move under one of four motion models. Each frame yields oracle
//! detections carrying RoI-resolution appearance features, an elliptical
//! attention mask and the ground-truth identity. Appearance is rendered per
//! RoI cell: a cell shows the front-most target whose inscribed ellipse
//! covers it, otherwise background noise. A detection's mask is the
//! elliptical template with the cells showing a target in front zeroed,
//! like an instance segmentation of the visible part.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::association::AttentionMask;
use crate::detection::Detection;
use crate::encoding::{BBox, ImageGeometry, RoiPatch, RoiSpec};
use crate::error::{Error, Result};
use crate::numeric::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Pairs of targets on nearby lanes moving toward each other.
    Crossing,
    /// Targets side by side moving in one common direction.
    Parallel,
    /// Crossing with heavy overlap; the rear target disappears while covered.
    Occlusion,
    /// Independent jittered velocities, reflected at the borders.
    RandomWalk,
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScenarioKind::Crossing => "crossing",
            ScenarioKind::Parallel => "parallel",
            ScenarioKind::Occlusion => "occlusion",
            ScenarioKind::RandomWalk => "random-walk",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub width: usize,
    pub height: usize,
    pub targets: usize,
    /// Speed range in pixels per frame.
    pub speed_min: f64,
    pub speed_max: f64,
    pub box_width: f64,
    pub box_height: f64,
    /// Relative per-target box size jitter.
    pub size_jitter: f64,
    /// Standard deviation of per-frame feature noise.
    pub appearance_noise: f64,
    /// 0: every target shares one appearance; 1: fully distinct appearances.
    pub distinctness: f64,
    /// Standard deviation of the features of uncovered RoI cells.
    pub background_noise: f64,
    pub frames: usize,
    pub channels: usize,
    pub roi: RoiSpec,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            kind: ScenarioKind::Crossing,
            width: 128,
            height: 128,
            targets: 2,
            speed_min: 0.75,
            speed_max: 1.5,
            box_width: 16.0,
            box_height: 32.0,
            size_jitter: 0.1,
            appearance_noise: 0.1,
            distinctness: 0.0,
            background_noise: 1.0,
            frames: 64,
            channels: 64,
            roi: RoiSpec::default(),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.targets == 0 {
            return Err(Error::config("scenario.targets", "must be at least 1"));
        }
        if self.frames == 0 {
            return Err(Error::config("scenario.frames", "must be at least 1"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("scenario.width", "image must be at least 1x1"));
        }
        if !(self.speed_min >= 0.0 && self.speed_max >= self.speed_min && self.speed_max.is_finite()) {
            return Err(Error::config("scenario.speed_min", "need 0 <= speed_min <= speed_max"));
        }
        if !(self.box_width > 0.0 && self.box_height > 0.0) {
            return Err(Error::config("scenario.box_width", "box size must be positive"));
        }
        if self.box_width >= self.width as f64 || self.box_height >= self.height as f64 {
            return Err(Error::config("scenario.box_width", "boxes must be smaller than the image"));
        }
        if !(0.0..0.5).contains(&self.size_jitter) {
            return Err(Error::config("scenario.size_jitter", "must lie in [0, 0.5)"));
        }
        if !(self.appearance_noise >= 0.0) {
            return Err(Error::config("scenario.appearance_noise", "must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.distinctness) {
            return Err(Error::config("scenario.distinctness", "must lie in [0, 1]"));
        }
        if !(self.background_noise >= 0.0) {
            return Err(Error::config("scenario.background_noise", "must be nonnegative"));
        }
        self.geometry()?;
        self.roi.validate()
    }

    pub fn geometry(&self) -> Result<ImageGeometry> {
        ImageGeometry::new(self.width, self.height, self.channels)
            .map_err(|e| match e {
                Error::Config { field, reason } => Error::config(format!("scenario.{field}"), reason),
                other => other,
            })
    }
}

/// Oracle detection with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDetection {
    pub detection: Detection,
    pub identity: u32,
    /// False when a target in front overlaps this one.
    pub visible: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledVideo {
    pub config: ScenarioConfig,
    /// Detections per frame, in shuffled order.
    pub frames: Vec<Vec<SyntheticDetection>>,
    /// True box of every target on every frame, detected or not.
    pub truth: Vec<Vec<BBox>>,
}

impl LabeledVideo {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Detections without labels, as a tracker sees them.
    pub fn detections(&self) -> Vec<Vec<Detection>> {
        self.frames
            .iter()
            .map(|f| f.iter().map(|d| d.detection.clone()).collect())
            .collect()
    }

    /// Whether `identity` emitted a detection on `frame`.
    pub fn is_detected(&self, frame: usize, identity: u32) -> bool {
        self.frames[frame].iter().any(|d| d.identity == identity)
    }
}

/// Mask over the RoI grid: 1 inside the inscribed ellipse, 0 outside and 0.5
/// on cells the boundary passes through.
pub fn elliptical_mask(bbox: &BBox, roi: &RoiSpec) -> Result<AttentionMask> {
    bbox.validate()?;
    roi.validate()?;
    let (a, b) = (roi.width as f64 / 2.0, roi.height as f64 / 2.0);
    let inside = |x: f64, y: f64| ((x - a) / a).powi(2) + ((y - b) / b).powi(2) <= 1.0;
    let mut grid = Tensor::zeros(&[roi.height, roi.width]);
    for y in 0..roi.height {
        for x in 0..roi.width {
            let mut hits = 0;
            for dy in [0.0, 0.5, 1.0] {
                for dx in [0.0, 0.5, 1.0] {
                    if inside(x as f64 + dx, y as f64 + dy) {
                        hits += 1;
                    }
                }
            }
            let v = match hits {
                9 => 1.0,
                0 => 0.0,
                _ => 0.5,
            };
            grid.set2(y, x, v);
        }
    }
    AttentionMask::new(grid)
}

struct Target {
    w: f64,
    h: f64,
    /// Top-left corner per frame.
    path: Vec<(f64, f64)>,
    pattern: Tensor,
}

/// Generates a labeled video; the same config always yields the same video.
pub fn generate(config: &ScenarioConfig) -> Result<LabeledVideo> {
    config.validate()?;
    let mut motion_rng = ChaCha8Rng::seed_from_u64(config.seed);
    motion_rng.set_stream(1);
    let mut look_rng = ChaCha8Rng::seed_from_u64(config.seed);
    look_rng.set_stream(2);
    let mut frame_rng = ChaCha8Rng::seed_from_u64(config.seed);
    frame_rng.set_stream(3);

    let sizes: Vec<(f64, f64)> = (0..config.targets)
        .map(|_| {
            let j = config.size_jitter;
            let sw = if j > 0.0 { motion_rng.random_range(1.0 - j..=1.0 + j) } else { 1.0 };
            let sh = if j > 0.0 { motion_rng.random_range(1.0 - j..=1.0 + j) } else { 1.0 };
            (config.box_width * sw, config.box_height * sh)
        })
        .collect();
    let paths = match config.kind {
        ScenarioKind::Crossing => crossing_paths(config, &sizes, &mut motion_rng, 0.25..=0.5),
        ScenarioKind::Occlusion => crossing_paths(config, &sizes, &mut motion_rng, 0.0..=0.15),
        ScenarioKind::Parallel => parallel_paths(config, &sizes, &mut motion_rng),
        ScenarioKind::RandomWalk => random_walk_paths(config, &sizes, &mut motion_rng),
    };

    let patch_len = config.channels * config.roi.cells();
    let draw_pattern = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..patch_len).map(|_| StandardNormal.sample(rng)).collect()
    };
    let shared = draw_pattern(&mut look_rng);
    let targets: Vec<Target> = sizes
        .iter()
        .zip(paths)
        .map(|(&(w, h), path)| {
            let own = draw_pattern(&mut look_rng);
            let d = config.distinctness;
            let mixed = shared
                .iter()
                .zip(&own)
                .map(|(s, o)| (1.0 - d) * s + d * o)
                .collect();
            Target {
                w,
                h,
                path,
                pattern: Tensor::from_parts(vec![config.channels, config.roi.height, config.roi.width], mixed),
            }
        })
        .collect();

    // front-to-back drawing order
    let mut depth: Vec<usize> = (0..config.targets).collect();
    depth.shuffle(&mut motion_rng);

    let mask_template = elliptical_mask(&BBox::new(0.0, 0.0, 1.0, 1.0)?, &config.roi)?;
    let mut frames = Vec::with_capacity(config.frames);
    let mut truth = Vec::with_capacity(config.frames);
    for t in 0..config.frames {
        let boxes: Vec<BBox> = targets
            .iter()
            .map(|tg| BBox {
                u: tg.path[t].0,
                v: tg.path[t].1,
                w: tg.w,
                h: tg.h,
            })
            .collect();
        let mut dets = Vec::new();
        for k in 0..config.targets {
            let my_rank = depth.iter().position(|&d| d == k).expect("in depth order");
            let in_front = &depth[..my_rank];
            let hidden = config.kind == ScenarioKind::Occlusion
                && in_front.iter().any(|&j| boxes[j].iou(&boxes[k]) > 0.5);
            if hidden {
                continue;
            }
            let overlapped = in_front.iter().any(|&j| boxes[j].iou(&boxes[k]) > 0.0);
            let (appearance, mask) = render_roi(config, &targets, &boxes, &depth, k, &mask_template, &mut frame_rng)?;
            dets.push(SyntheticDetection {
                detection: Detection {
                    frame: t,
                    bbox: boxes[k],
                    appearance,
                    mask,
                },
                identity: k as u32,
                visible: !overlapped,
            });
        }
        dets.shuffle(&mut frame_rng);
        frames.push(dets);
        truth.push(boxes);
    }
    Ok(LabeledVideo {
        config: config.clone(),
        frames,
        truth,
    })
}

fn render_roi(
    config: &ScenarioConfig,
    targets: &[Target],
    boxes: &[BBox],
    depth: &[usize],
    k: usize,
    template: &AttentionMask,
    rng: &mut ChaCha8Rng,
) -> Result<(RoiPatch, AttentionMask)> {
    let (c, rh, rw) = (config.channels, config.roi.height, config.roi.width);
    let own = boxes[k];
    let mut data = vec![0.0; c * rh * rw];
    let mut mask = template.grid().clone();
    for y in 0..rh {
        for x in 0..rw {
            let px = own.u + (x as f64 + 0.5) * own.w / rw as f64;
            let py = own.v + (y as f64 + 0.5) * own.h / rh as f64;
            let cover = depth.iter().copied().find_map(|j| {
                let b = boxes[j];
                let (cx, cy) = b.center();
                let level = ((px - cx) / (b.w / 2.0)).powi(2) + ((py - cy) / (b.h / 2.0)).powi(2);
                (level <= 1.0).then(|| {
                    let gx = (((px - b.u) / b.w * rw as f64) as usize).min(rw - 1);
                    let gy = (((py - b.v) / b.h * rh as f64) as usize).min(rh - 1);
                    (j, gx, gy)
                })
            });
            if cover.is_some_and(|(j, _, _)| j != k) {
                mask.set2(y, x, 0.0);
            }
            for ch in 0..c {
                let base = match cover {
                    Some((j, gx, gy)) => targets[j].pattern.data()[(ch * rh + gy) * rw + gx],
                    None => {
                        let z: f64 = StandardNormal.sample(rng);
                        config.background_noise * z
                    }
                };
                let noise: f64 = StandardNormal.sample(rng);
                data[(ch * rh + y) * rw + x] = base + config.appearance_noise * noise;
            }
        }
    }
    // a fully covered target keeps the plain template
    let mask = if mask.data().iter().all(|&v| v == 0.0) {
        template.clone()
    } else {
        AttentionMask::new(mask)?
    };
    Ok((RoiPatch::new(Tensor::from_parts(vec![c, rh, rw], data))?, mask))
}

fn clamp_path(config: &ScenarioConfig, w: f64, h: f64, centers: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let (mw, mh) = (config.width as f64 - w, config.height as f64 - h);
    centers
        .into_iter()
        .map(|(cx, cy)| (reflect(cx - w / 2.0, mw), reflect(cy - h / 2.0, mh)))
        .collect()
}

/// Folds `x` back into `[0, max]` as if bouncing off both ends.
fn reflect(x: f64, max: f64) -> f64 {
    if max <= 0.0 {
        return 0.0;
    }
    let period = 2.0 * max;
    let r = x.rem_euclid(period);
    if r > max {
        period - r
    } else {
        r
    }
}

fn crossing_paths(
    config: &ScenarioConfig,
    sizes: &[(f64, f64)],
    rng: &mut ChaCha8Rng,
    lane_gap: std::ops::RangeInclusive<f64>,
) -> Vec<Vec<(f64, f64)>> {
    let (wf, hf) = (config.width as f64, config.height as f64);
    let pairs = config.targets.div_ceil(2);
    let jitter = (config.frames / 8).max(1) as f64;
    let mut paths = Vec::with_capacity(config.targets);
    for p in 0..pairs {
        let lane = hf * (p as f64 + 0.5) / pairs as f64;
        let cross_x = rng.random_range(0.4 * wf..=0.6 * wf);
        let cross_t = config.frames as f64 / 2.0 + rng.random_range(-jitter..=jitter);
        let gap = rng.random_range(lane_gap.clone()) * config.box_height;
        let flip = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        for side in 0..2 {
            let k = 2 * p + side;
            if k >= config.targets {
                break;
            }
            let (w, h) = sizes[k];
            let dir = if side == 0 { flip } else { -flip };
            let speed = rng.random_range(config.speed_min..=config.speed_max);
            let cy = lane + if side == 0 { -gap / 2.0 } else { gap / 2.0 };
            let centers = (0..config.frames)
                .map(|t| (cross_x + dir * speed * (t as f64 - cross_t), cy))
                .collect();
            paths.push(clamp_path(config, w, h, centers));
        }
    }
    paths
}

fn parallel_paths(config: &ScenarioConfig, sizes: &[(f64, f64)], rng: &mut ChaCha8Rng) -> Vec<Vec<(f64, f64)>> {
    let (wf, hf) = (config.width as f64, config.height as f64);
    let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let base_speed = rng.random_range(config.speed_min..=config.speed_max);
    let spacing = config.box_height * 1.1;
    let first_lane = hf / 2.0 - spacing * (config.targets as f64 - 1.0) / 2.0;
    let start_x = wf / 2.0 - dir * base_speed * config.frames as f64 / 2.0;
    sizes
        .iter()
        .enumerate()
        .map(|(k, &(w, h))| {
            let speed = base_speed * rng.random_range(0.95..=1.05);
            let x0 = start_x + rng.random_range(-w..=w);
            let cy = first_lane + spacing * k as f64;
            let centers = (0..config.frames)
                .map(|t| (x0 + dir * speed * t as f64, cy))
                .collect();
            clamp_path(config, w, h, centers)
        })
        .collect()
}

fn random_walk_paths(config: &ScenarioConfig, sizes: &[(f64, f64)], rng: &mut ChaCha8Rng) -> Vec<Vec<(f64, f64)>> {
    let (wf, hf) = (config.width as f64, config.height as f64);
    let accel = Normal::new(0.0, 0.25 * config.speed_max).expect("finite std");
    sizes
        .iter()
        .map(|&(w, h)| {
            let mut pos = (
                rng.random_range(w / 2.0..=wf - w / 2.0),
                rng.random_range(h / 2.0..=hf - h / 2.0),
            );
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let speed = rng.random_range(config.speed_min..=config.speed_max);
            let mut vel = (speed * angle.cos(), speed * angle.sin());
            let mut centers = Vec::with_capacity(config.frames);
            for _ in 0..config.frames {
                centers.push(pos);
                vel.0 += accel.sample(rng);
                vel.1 += accel.sample(rng);
                let norm = (vel.0 * vel.0 + vel.1 * vel.1).sqrt();
                let clamped = norm.clamp(config.speed_min, config.speed_max);
                if norm > 0.0 {
                    vel = (vel.0 * clamped / norm, vel.1 * clamped / norm);
                }
                pos = (pos.0 + vel.0, pos.1 + vel.1);
            }
            clamp_path(config, w, h, centers)
        })
        .collect()
}

/// Contiguous stride-1 windows of length `window`; a shorter video gives one
/// clip covering all of it.
pub fn sample_clips(video: &LabeledVideo, window: usize) -> Result<Vec<crate::training::ClipSample>> {
    if video.is_empty() {
        return Err(Error::Invalid("video has no frames".into()));
    }
    if window == 0 {
        return Err(Error::config("window", "must be at least 1"));
    }
    let geometry = video.config.geometry()?;
    let len = video.len();
    let span = window.min(len);
    (0..=len - span)
        .map(|start| crate::training::ClipSample::new(start, geometry, video.frames[start..start + span].to_vec()))
        .collect()
}
