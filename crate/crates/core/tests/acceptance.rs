//! Acceptance run: one line per criterion, non-zero exit if any fails.
//!
//! `cargo test --test acceptance` runs everything, including the ablation
//! training (a few minutes). Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 1 2 6`.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use dst_track::ablation::{arm_specs, report_from_arms, run_arm};
use dst_track::association::{
    det_traj_attention, detection_attention, embed_detection, embed_trajectory, AssociationMatrix, AttentionMask,
    EmbeddingStack, EncodingMode, ModelConfig,
};
use dst_track::config::RunConfig;
use dst_track::encoding::{
    accumulate_trajectory, encode_image, encode_roi, extend_trajectory, AlphaPolicy, BBox, ImageGeometry, RoiPatch,
    RoiSpec,
};
use dst_track::numeric::{finite_diff_gradient, OptimizerConfig, Tensor};
use dst_track::simulator::{generate, ScenarioConfig, SyntheticDetection};
use dst_track::tracker::{assignment_cost, hungarian};
use dst_track::training::{evaluate_loss, loss_and_gradients, scenario_clips, train, ClipSample, Trainer};
use dst_track::Detection;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> (bool, String) {
    let s = elapsed.as_secs_f64();
    (s < limit_s, format!("{s:.2}s (limit {limit_s}s)"))
}

// ---------- independent evaluators of the position encoding ----------

/// Channel `i` at the real pixel position `(x, y)` of a `w×h` image with `c` channels.
fn direct_pixel(i: usize, x: f64, y: f64, w: f64, h: f64, c: f64) -> f64 {
    let phase = 2.0 * PI * i as f64 / c;
    if i % 2 == 1 {
        -(PI * (x / w + y / (w * h)) + phase).cos()
    } else {
        (PI * (y / h + x / (w * h)) + phase).cos()
    }
}

/// RoI grid point `(gx, gy)` sits at pixel `(u + gx·w/W_R, v + gy·h/H_R)`.
fn direct_roi(i: usize, gx: usize, gy: usize, b: &BBox, geom: &ImageGeometry, roi: &RoiSpec) -> f64 {
    let x = b.u + gx as f64 * b.w / roi.width as f64;
    let y = b.v + gy as f64 * b.h / roi.height as f64;
    direct_pixel(i, x, y, geom.width as f64, geom.height as f64, geom.channels as f64)
}

fn random_box(rng: &mut ChaCha8Rng, geom: &ImageGeometry) -> BBox {
    let (wf, hf) = (geom.width as f64, geom.height as f64);
    let w = rng.random_range(1.0..wf.max(1.5));
    let h = rng.random_range(1.0..hf.max(1.5));
    BBox::new(rng.random_range(0.0..wf - w + 1e-9), rng.random_range(0.0..hf - h + 1e-9), w, h).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let geom = ImageGeometry::new(
            rng.random_range(1..=160),
            rng.random_range(1..=160),
            2 * rng.random_range(1..=32),
        )
        .unwrap();
        let grid = encode_image(&geom).unwrap();
        for y in 0..geom.height {
            for x in 0..geom.width {
                let px = grid.pixel(x, y);
                for (i, v) in px.iter().enumerate() {
                    let d = direct_pixel(
                        i,
                        x as f64,
                        y as f64,
                        geom.width as f64,
                        geom.height as f64,
                        geom.channels as f64,
                    );
                    worst = worst.max((v - d).abs());
                }
            }
        }
        let roi = RoiSpec::new(rng.random_range(1..=9), rng.random_range(1..=9)).unwrap();
        for _ in 0..5 {
            let b = random_box(&mut rng, &geom);
            let patch = encode_roi(&b, &geom, &roi).unwrap();
            for i in 0..geom.channels {
                for gy in 0..roi.height {
                    for gx in 0..roi.width {
                        worst = worst.max((patch.get(i, gy, gx) - direct_roi(i, gx, gy, &b, &geom, &roi)).abs());
                    }
                }
            }
        }
    }
    let (fast, t) = within(start.elapsed(), 1.0);
    check(worst <= 1e-12 && fast, format!("max deviation {worst:.2e} (tol 1e-12), {t}"))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let geom = ImageGeometry::new(32, 32, 64).unwrap();
    let grid = encode_image(&geom).unwrap();
    let pixels: Vec<Vec<f64>> = (0..32)
        .flat_map(|y| (0..32).map(move |x| (x, y)))
        .map(|(x, y)| grid.pixel(x, y))
        .collect();
    let mut min_gap = f64::INFINITY;
    for a in 0..pixels.len() {
        for b in a + 1..pixels.len() {
            let gap = pixels[a]
                .iter()
                .zip(&pixels[b])
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
            min_gap = min_gap.min(gap);
        }
    }
    let (fast, t) = within(start.elapsed(), 5.0);
    check(
        min_gap > 1e-6 && fast,
        format!("{} pixels, min pairwise L-inf gap {min_gap:.3e} (need > 1e-6), {t}", pixels.len()),
    )
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    for (w, h, c) in [(32, 32, 64), (17, 5, 8), (1, 1, 2), (40, 23, 16), (7, 64, 4)] {
        let geom = ImageGeometry::new(w, h, c).unwrap();
        let grid = encode_image(&geom).unwrap();
        let full = encode_roi(
            &BBox::new(0.0, 0.0, w as f64, h as f64).unwrap(),
            &geom,
            &RoiSpec::new(w, h).unwrap(),
        )
        .unwrap();
        for (a, b) in grid.tensor().data().iter().zip(full.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    check(worst <= 1e-12, format!("max deviation {worst:.2e} over 5 geometries (tol 1e-12)"))
}

fn linearity_gap(stack: &EmbeddingStack, rng: &mut ChaCha8Rng) -> f64 {
    let cfg = stack.config();
    let geom = ImageGeometry::new(rng.random_range(16..200), rng.random_range(16..200), cfg.channels).unwrap();
    let t = rng.random_range(1..=16);
    let patches: Vec<RoiPatch> = (0..=t)
        .map(|_| encode_roi(&random_box(rng, &geom), &geom, &cfg.roi).unwrap())
        .collect();
    let head = accumulate_trajectory(&patches[..t], &vec![1.0; t]).unwrap();
    let full = extend_trajectory(&head, &patches[t], 1.0).unwrap();
    let l_full = stack.apply_l_map(full.patch()).unwrap();
    let l_head = stack.apply_l_map(head.patch()).unwrap();
    let l_new = stack.apply_l_map(&patches[t]).unwrap();
    l_full
        .data()
        .iter()
        .zip(l_head.data())
        .zip(l_new.data())
        .map(|((f, a), b)| (f - a - b).abs())
        .fold(0.0, f64::max)
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let model = ModelConfig {
        channels: 8,
        roi: RoiSpec::new(4, 4).unwrap(),
        embed_dim: 16,
        ..ModelConfig::default()
    };
    let mut worst_random: f64 = 0.0;
    for draw in 0..100 {
        let stack = EmbeddingStack::new(ModelConfig {
            init_seed: draw,
            ..model.clone()
        })
        .unwrap();
        worst_random = worst_random.max(linearity_gap(&stack, &mut rng));
    }
    let scenario = ScenarioConfig {
        channels: model.channels,
        roi: model.roi,
        width: 64,
        height: 64,
        ..ScenarioConfig::default()
    };
    let initial = EmbeddingStack::new(model.clone()).unwrap();
    let mut trainer = Trainer::new(
        initial.clone(),
        OptimizerConfig {
            learning_rate: 1e-2,
            ..OptimizerConfig::default()
        },
        AlphaPolicy::Uniform,
    )
    .unwrap();
    train(&mut trainer, scenario_clips(&scenario, 6, 9, 0), 40).unwrap();
    let trained = trainer.into_stack();
    let moved = trained
        .l_map()
        .data()
        .iter()
        .zip(initial.l_map().data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut worst_trained: f64 = 0.0;
    for _ in 0..100 {
        worst_trained = worst_trained.max(linearity_gap(&trained, &mut rng));
    }
    check(
        worst_random < 1e-9 && worst_trained < 1e-9 && moved > 0.0,
        format!(
            "max residual {worst_random:.2e} random L, {worst_trained:.2e} trained L (moved {moved:.2e}) (tol 1e-9)"
        ),
    )
}

fn toy_detection(frame: usize, id: u32, u: f64, rng: &mut ChaCha8Rng) -> SyntheticDetection {
    let roi = RoiSpec::new(2, 2).unwrap();
    let data = (0..2 * roi.cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mask = Tensor::new(vec![2, 2], (0..4).map(|_| rng.random_range(0.2..1.0)).collect()).unwrap();
    SyntheticDetection {
        detection: Detection {
            frame,
            bbox: BBox::new(u, 6.0 + 3.0 * frame as f64, 9.0, 14.0).unwrap(),
            appearance: RoiPatch::new(Tensor::new(vec![2, 2, 2], data).unwrap()).unwrap(),
            mask: AttentionMask::new(mask).unwrap(),
        },
        identity: id,
        visible: true,
    }
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    // three detections over two frames
    let frames = vec![
        vec![toy_detection(0, 1, 4.0, &mut rng), toy_detection(0, 2, 30.0, &mut rng)],
        vec![toy_detection(1, 2, 28.0, &mut rng)],
    ];
    let clip = ClipSample::new(0, ImageGeometry::new(64, 48, 2).unwrap(), frames).unwrap();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for mode in [EncodingMode::Dst, EncodingMode::Classic, EncodingMode::None] {
        let mut stack = EmbeddingStack::new(ModelConfig {
            channels: 2,
            roi: RoiSpec::new(2, 2).unwrap(),
            embed_dim: 4,
            encoding: mode,
            use_mask: true,
            frame_sink: true,
            init_seed: 5,
        })
        .unwrap();
        for p in stack.parameters_mut() {
            if p.value.shape().len() == 1 {
                p.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
            }
        }
        let (_, grads) = loss_and_gradients(&stack, &clip, &AlphaPolicy::Uniform).unwrap();
        for (pi, analytic) in grads.iter().enumerate() {
            let numeric = finite_diff_gradient(
                |x| {
                    let mut probe = stack.clone();
                    probe.parameters_mut()[pi].value = x.clone();
                    evaluate_loss(&probe, &clip, &AlphaPolicy::Uniform).unwrap().total()
                },
                &stack.parameters()[pi].value,
                1e-5,
            );
            let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
            let diff: Vec<f64> = analytic.data().iter().zip(numeric.data()).map(|(a, b)| a - b).collect();
            let scale = norm(analytic.data()).max(norm(numeric.data())).max(1e-8);
            worst = worst.max(norm(&diff) / scale);
            checked += 1;
        }
    }
    let (fast, t) = within(start.elapsed(), 30.0);
    check(
        worst < 1e-4 && fast,
        format!("{checked} parameter tensors, max relative error {worst:.2e} (tol 1e-4), {t}"),
    )
}

/// Minimum over all injective row→column maps, by enumeration.
fn brute_force_min(cost: &[Vec<f64>]) -> f64 {
    fn go(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
        if row == cost.len() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                best = best.min(cost[row][c] + go(cost, row + 1, used));
                used[c] = false;
            }
        }
        best
    }
    go(cost, 0, &mut vec![false; cost[0].len()])
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut failures = 0;
    let mut total = 0;
    for (rows, cols, count) in [(5, 5, 1000), (4, 6, 200)] {
        for _ in 0..count {
            let cost: Vec<Vec<f64>> = (0..rows)
                .map(|_| (0..cols).map(|_| rng.random_range(-10.0..10.0)).collect())
                .collect();
            let t = Tensor::new(vec![rows, cols], cost.concat()).unwrap();
            let a = hungarian(&t).unwrap();
            let mut cols_used: Vec<usize> = a.iter().flatten().copied().collect();
            let complete = cols_used.len() == rows;
            cols_used.sort_unstable();
            cols_used.dedup();
            let injective = cols_used.len() == rows;
            let optimal = (assignment_cost(&t, &a) - brute_force_min(&cost)).abs() < 1e-9;
            total += 1;
            if !(complete && injective && optimal) {
                failures += 1;
            }
        }
    }
    let (fast, t) = within(start.elapsed(), 10.0);
    check(
        failures == 0 && fast,
        format!("{} of {total} matrices (1000 5x5, 200 4x6) optimal, {t}", total - failures),
    )
}

/// Largest deviation from 1 of any row-group sum, summed independently from the entries.
fn group_deviation(m: &AssociationMatrix) -> f64 {
    let s = m.scores();
    let groups = m.key_groups();
    let n_groups = groups.iter().copied().max().map_or(0, |g| g + 1);
    let mut worst: f64 = 0.0;
    for r in 0..s.rows() {
        for g in 0..n_groups {
            let cols: Vec<usize> = (0..s.cols()).filter(|&c| groups[c] == g && m.is_allowed(r, c)).collect();
            if cols.is_empty() {
                continue;
            }
            let sum: f64 = cols.iter().map(|&c| m.get(r, c)).sum();
            worst = worst.max((sum - 1.0).abs());
        }
    }
    worst
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst: f64 = 0.0;
    let mut matrices = 0;
    for draw in 0..40u64 {
        for sink in [false, true] {
            let cfg = ModelConfig {
                channels: 4,
                roi: RoiSpec::new(3, 3).unwrap(),
                embed_dim: 8,
                encoding: [EncodingMode::None, EncodingMode::Classic, EncodingMode::Dst][(draw % 3) as usize],
                frame_sink: sink,
                init_seed: draw,
                ..ModelConfig::default()
            };
            let stack = EmbeddingStack::new(cfg.clone()).unwrap();
            let video = generate(&ScenarioConfig {
                kind: dst_track::simulator::ScenarioKind::RandomWalk,
                targets: rng.random_range(1..6),
                frames: rng.random_range(2..8),
                channels: 4,
                roi: cfg.roi,
                seed: draw,
                ..ScenarioConfig::default()
            })
            .unwrap();
            let geom = video.config.geometry().unwrap();
            let mut embs = Vec::new();
            let mut frames = Vec::new();
            for (t, f) in video.frames.iter().enumerate() {
                for d in f {
                    let enc = encode_roi(&d.detection.bbox, &geom, &cfg.roi).unwrap();
                    embs.push(embed_detection(&d.detection.appearance, &enc, &d.detection.mask, &stack).unwrap());
                    frames.push(t);
                }
            }
            let m = detection_attention(&embs, &frames, &stack).unwrap();
            worst = worst.max(group_deviation(&m));
            let mut keys = vec![stack.null_embedding()];
            keys.extend(embs.iter().take(rng.random_range(0..=embs.len())).cloned());
            let (per_det, per_traj) = det_traj_attention(&embs, &keys, &stack).unwrap();
            worst = worst.max(group_deviation(&per_det)).max(group_deviation(&per_traj));
            matrices += 3;
        }
    }
    check(worst <= 1e-6, format!("{matrices} matrices, max |group sum - 1| {worst:.2e} (tol 1e-6)"))
}

fn ablation_config() -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/ablation.toml");
    RunConfig::load(&path).unwrap().resolved()
}

/// Criteria 8 and 9 share one ablation run.
fn criteria_8_9() -> (Outcome, Outcome) {
    let cfg = ablation_config();
    if let Err(e) = cfg.validate() {
        let msg = format!("invalid ablation config: {e}");
        return (Err(msg.clone()), Err(msg));
    }
    let mut arms = Vec::new();
    let mut times = Vec::new();
    for spec in arm_specs(&cfg) {
        let start = Instant::now();
        match run_arm(&spec, &cfg) {
            Ok(a) => arms.push(a),
            Err(e) => {
                let msg = format!("arm {} failed: {e}", spec.name);
                return (Err(msg.clone()), Err(msg));
            }
        }
        times.push((spec.name.clone(), start.elapsed().as_secs_f64()));
    }
    let report = report_from_arms(arms).unwrap();
    let slowest = times.iter().map(|t| t.1).fold(0.0, f64::max);
    let mean = |n: &str| report.arm(n).unwrap().mean_accuracy();
    let (dst, none, classic) = (mean("dst"), mean("none"), mean("classic"));
    let vs_none = report.comparison("dst", "none").unwrap();
    let vs_classic = report.comparison("dst", "classic").unwrap();
    let c8 = check(
        dst > none
            && dst > classic
            && vs_none.p_value < 0.01
            && vs_classic.p_value < 0.01
            && dst >= 0.95
            && none <= 0.60
            && slowest <= 1200.0,
        format!(
            "{} videos: dst {dst:.4}, none {none:.4} (p {:.2e}), classic {classic:.4} (p {:.2e}); bounds dst >= 0.95, none <= 0.60; slowest arm {slowest:.0}s (limit 1200s)",
            vs_none.videos, vs_none.p_value, vs_classic.p_value
        ),
    );
    let (with, without) = (mean("with_mask"), mean("without_mask"));
    let m = report.comparison("with_mask", "without_mask").unwrap();
    let c9 = check(
        with >= without && m.p_value < 0.05,
        format!(
            "{} videos: with mask {with:.4}, without {without:.4}, p {:.2e} (need < 0.05)",
            m.videos, m.p_value
        ),
    );
    (c8, c9)
}

fn run_cli(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dst-track"))
        .args(args)
        .current_dir(cwd)
        .env("DST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

const SMALL_RUN: &str = "[scenario]\nchannels = 4\nwidth = 64\nheight = 64\nframes = 24\n[scenario.roi]\nwidth = 3\nheight = 3\n\
[model]\nchannels = 4\nembed_dim = 8\n[model.roi]\nwidth = 3\nheight = 3\n[train]\niterations = 20\nclip_len = 6\n[tracker]\nwindow = 6\n";

fn pipeline(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    std::fs::write(dir.join("run.toml"), SMALL_RUN).map_err(|e| e.to_string())?;
    run_cli(&["simulate", "-c", "run.toml", "--seed", "17", "-o", "video.bin"], dir)?;
    run_cli(&["train", "-c", "run.toml", "--seed", "17", "--data", "video.bin", "--checkpoint", "model.ckpt"], dir)?;
    run_cli(
        &["track", "-c", "run.toml", "--seed", "17", "--checkpoint", "model.ckpt", "--video", "video.bin", "-o", "tracks.txt", "--json", "tracks.json"],
        dir,
    )?;
    run_cli(&["eval", "--pred", "tracks.txt", "--gt", "video.bin", "-o", "report.json"], dir)?;
    let names = [
        "video.bin",
        "video.bin.manifest.json",
        "model.ckpt",
        "model.ckpt.loss.csv",
        "model.ckpt.config.toml",
        "tracks.txt",
        "tracks.json",
        "report.json",
        "report.csv",
    ];
    names
        .iter()
        .map(|n| {
            std::fs::read(dir.join(n))
                .map(|b| (n.to_string(), b))
                .map_err(|e| format!("{n}: {e}"))
        })
        .collect()
}

fn criterion_10() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = pipeline(a.path())?;
    let second = pipeline(b.path())?;
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    check(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} artifacts byte-identical across two runs", first.len())
        } else {
            format!("differing artifacts: {differing:?}")
        },
    )
}

fn criterion_11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let geom = ImageGeometry::new(96, 80, 6).unwrap();
    let roi = RoiSpec::new(4, 3).unwrap();
    let mut mismatches = 0;
    for draw in 0..100u64 {
        let stack = EmbeddingStack::new(ModelConfig {
            channels: 6,
            roi,
            embed_dim: 10,
            encoding: [EncodingMode::Dst, EncodingMode::Classic, EncodingMode::None][(draw % 3) as usize],
            use_mask: draw % 2 == 0,
            init_seed: 5000 + draw,
            ..ModelConfig::default()
        })
        .unwrap();
        let b = random_box(&mut rng, &geom);
        let enc = encode_roi(&b, &geom, &roi).unwrap();
        let appearance = RoiPatch::new(
            Tensor::new(vec![6, 3, 4], (0..72).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap(),
        )
        .unwrap();
        let mask = AttentionMask::new(Tensor::new(vec![3, 4], (0..12).map(|_| rng.random_range(0.1..1.0)).collect()).unwrap())
            .unwrap();
        let det = embed_detection(&appearance, &enc, &mask, &stack).unwrap();
        let traj = accumulate_trajectory(std::slice::from_ref(&enc), &[1.0]).unwrap();
        let tr = embed_trajectory(&traj, &appearance, &mask, &stack).unwrap();
        let same = det.len() == tr.len() && det.iter().zip(&tr).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("{} of 100 parameter draws bitwise identical", 100 - mismatches))
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| selected.is_empty() || selected.contains(&n);
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let simple: [(usize, &str, fn() -> Outcome); 7] = [
        (1, "encoding exactness", criterion_1),
        (2, "injectivity", criterion_2),
        (3, "identity-RoI reduction", criterion_3),
        (4, "linearity of L", criterion_4),
        (5, "gradient oracle", criterion_5),
        (6, "Hungarian correctness", criterion_6),
        (7, "softmax validity", criterion_7),
    ];
    for (n, name, f) in simple {
        if wanted(n) {
            results.push((n, name, f()));
        }
    }
    if wanted(8) || wanted(9) {
        let (c8, c9) = criteria_8_9();
        if wanted(8) {
            results.push((8, "encoding ablation direction", c8));
        }
        if wanted(9) {
            results.push((9, "mask ablation direction", c9));
        }
    }
    if wanted(10) {
        results.push((10, "end-to-end determinism", criterion_10()));
    }
    if wanted(11) {
        results.push((11, "unified representation", criterion_11()));
    }
    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(d) => println!("criterion {n:>2} PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
