//! Ground-truth association targets, the two association losses and the
//! training loop.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::association::{ClipLayout, EmbedInput, EmbeddingStack};
use crate::encoding::{accumulate_trajectory, encode_roi, AlphaPolicy, ImageGeometry, RoiPatch};
use crate::error::{Error, Result};
use crate::numeric::{adam_step, Graph, OptimizerConfig, Parameter, Tensor, Var};
use crate::simulator::{generate, ScenarioConfig, SyntheticDetection};

/// Floor applied to probabilities inside the logistic loss.
pub const PROB_FLOOR: f64 = 1e-12;

/// A labeled window of consecutive frames.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipSample {
    start_frame: usize,
    geometry: ImageGeometry,
    frames: Vec<Vec<SyntheticDetection>>,
}

impl ClipSample {
    /// Rejects clips where an identity appears twice in one frame.
    pub fn new(start_frame: usize, geometry: ImageGeometry, frames: Vec<Vec<SyntheticDetection>>) -> Result<Self> {
        geometry.validate()?;
        for (t, f) in frames.iter().enumerate() {
            let mut ids: Vec<u32> = f.iter().map(|d| d.identity).collect();
            ids.sort_unstable();
            if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::Invalid(format!(
                    "identity {} appears twice in clip frame {t}",
                    w[0]
                )));
            }
        }
        Ok(ClipSample {
            start_frame,
            geometry,
            frames,
        })
    }

    pub fn start_frame(&self) -> usize {
        self.start_frame
    }

    pub fn geometry(&self) -> ImageGeometry {
        self.geometry
    }

    pub fn frames(&self) -> &[Vec<SyntheticDetection>] {
        &self.frames
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Total number of detections `N`.
    pub fn detection_count(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    /// `(clip frame, detection)` pairs in frame-major order; this is the row
    /// order of the clip association matrix.
    pub fn flat(&self) -> Vec<(usize, &SyntheticDetection)> {
        self.frames
            .iter()
            .enumerate()
            .flat_map(|(t, f)| f.iter().map(move |d| (t, d)))
            .collect()
    }
}

/// Ground-truth clip matrix in the column layout used by the model:
/// detections first, then one sink per frame when `frame_sink` is set.
///
/// Without sinks a row group whose identity is missing from that frame has
/// no target and stays all zero.
pub fn build_gt_clip_matrix(clip: &ClipSample, frame_sink: bool) -> Result<(Tensor, ClipLayout)> {
    let flat = clip.flat();
    let frames: Vec<usize> = flat.iter().map(|(t, _)| *t).collect();
    let layout = ClipLayout::new(&frames, frame_sink);
    let cols = layout.columns();
    let n = flat.len();
    let mut s = Tensor::zeros(&[n, cols]);
    for (i, &(fi, di)) in flat.iter().enumerate() {
        for (g, &frame) in layout.frame_order.iter().enumerate() {
            if frame == fi {
                continue;
            }
            let hit = flat
                .iter()
                .position(|&(fj, dj)| fj == frame && dj.identity == di.identity);
            match hit {
                Some(j) => s.set2(i, j, 1.0),
                None if frame_sink => s.set2(i, n + g, 1.0),
                None => {}
            }
        }
    }
    Ok((s, layout))
}

/// A trajectory key: `identity == None` is the empty trajectory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub identity: Option<u32>,
    /// `(clip frame, index within that frame)`, oldest first.
    pub members: Vec<(usize, usize)>,
}

impl Trajectory {
    pub fn empty() -> Self {
        Trajectory {
            identity: None,
            members: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.identity.is_none()
    }
}

/// Trajectories visible before frame `t`: the empty trajectory first, then one
/// per identity with history, ordered by identity.
pub fn truncate_trajectories(clip: &ClipSample, t: usize) -> Result<Vec<Trajectory>> {
    if t == 0 || t >= clip.len() {
        return Err(Error::Invalid(format!(
            "trajectory cut at frame {t} outside 1..{}",
            clip.len()
        )));
    }
    let mut by_id: std::collections::BTreeMap<u32, Vec<(usize, usize)>> = Default::default();
    for (f, dets) in clip.frames[..t].iter().enumerate() {
        for (k, d) in dets.iter().enumerate() {
            by_id.entry(d.identity).or_default().push((f, k));
        }
    }
    let mut out = vec![Trajectory::empty()];
    out.extend(by_id.into_iter().map(|(id, members)| Trajectory {
        identity: Some(id),
        members,
    }));
    Ok(out)
}

/// Detection–trajectory targets of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameTargets {
    pub frame: usize,
    pub trajectories: Vec<Trajectory>,
    /// `detections × keys`, one-hot rows; newborn identities target the empty trajectory.
    pub per_detection: Tensor,
    /// `keys × detections`; the empty trajectory's row and rows of absent
    /// identities are all zero.
    pub per_trajectory: Tensor,
}

pub fn det_traj_targets(clip: &ClipSample, t: usize) -> Result<FrameTargets> {
    let trajectories = truncate_trajectories(clip, t)?;
    let dets = &clip.frames[t];
    let keys = trajectories.len();
    let mut per_detection = Tensor::zeros(&[dets.len(), keys]);
    let mut per_trajectory = Tensor::zeros(&[keys, dets.len()]);
    for (i, d) in dets.iter().enumerate() {
        let k = trajectories
            .iter()
            .position(|tr| tr.identity == Some(d.identity))
            .unwrap_or(0);
        per_detection.set2(i, k, 1.0);
        if k != 0 {
            per_trajectory.set2(k, i, 1.0);
        }
    }
    Ok(FrameTargets {
        frame: t,
        trajectories,
        per_detection,
        per_trajectory,
    })
}

/// Every supervision target of a clip.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthTargets {
    pub clip: Tensor,
    pub layout: ClipLayout,
    /// Frames `1..T`.
    pub frames: Vec<FrameTargets>,
}

pub fn ground_truth(clip: &ClipSample, frame_sink: bool) -> Result<GroundTruthTargets> {
    let (s, layout) = build_gt_clip_matrix(clip, frame_sink)?;
    let frames = (1..clip.len())
        .map(|t| det_traj_targets(clip, t))
        .collect::<Result<_>>()?;
    Ok(GroundTruthTargets {
        clip: s,
        layout,
        frames,
    })
}

/// `(1/N²) Σ (S − Ŝ)²` with `N` the number of rows.
pub fn loss_clip(target: &Tensor, predicted: &Tensor) -> Result<f64> {
    if target.shape() != predicted.shape() {
        return Err(Error::shape(format!(
            "clip loss on {:?} and {:?}",
            target.shape(),
            predicted.shape()
        )));
    }
    let n = target.shape().first().copied().unwrap_or(0);
    if n == 0 {
        return Ok(0.0);
    }
    let d = target.sub(predicted)?;
    Ok(d.data().iter().map(|v| v * v).sum::<f64>() / (n * n) as f64)
}

/// `−Σ S log Ŝ` summed over frames, with Ŝ floored at [`PROB_FLOOR`].
pub fn loss_det_traj(targets: &[Tensor], predicted: &[Tensor]) -> Result<f64> {
    if targets.len() != predicted.len() {
        return Err(Error::shape(format!(
            "{} target frames, {} predicted",
            targets.len(),
            predicted.len()
        )));
    }
    let mut loss = 0.0;
    let mut clamped = 0;
    for (s, p) in targets.iter().zip(predicted) {
        if s.shape() != p.shape() {
            return Err(Error::shape(format!("det-traj loss on {:?} and {:?}", s.shape(), p.shape())));
        }
        for (&sv, &pv) in s.data().iter().zip(p.data()) {
            if sv != 0.0 {
                if pv < PROB_FLOOR {
                    clamped += 1;
                }
                loss -= sv * pv.max(PROB_FLOOR).ln();
            }
        }
    }
    if clamped > 0 {
        warn!("{clamped} predicted probabilities clamped to {PROB_FLOOR:e}");
    }
    Ok(loss)
}

/// Loss values of one clip.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub clip: f64,
    pub det_traj: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.clip + self.det_traj
    }
}

struct Prepared {
    encodings: Vec<Vec<RoiPatch>>,
    targets: GroundTruthTargets,
    traj_encodings: Vec<Vec<RoiPatch>>,
}

fn prepare(stack: &EmbeddingStack, clip: &ClipSample, alpha: &AlphaPolicy) -> Result<Prepared> {
    let roi = stack.config().roi;
    let geom = clip.geometry();
    if geom.channels != stack.config().channels {
        return Err(Error::shape(format!(
            "clip has {} channels, model expects {}",
            geom.channels,
            stack.config().channels
        )));
    }
    let encodings: Vec<Vec<RoiPatch>> = clip
        .frames
        .iter()
        .map(|f| {
            f.iter()
                .map(|d| encode_roi(&d.detection.bbox, &geom, &roi))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let targets = ground_truth(clip, stack.config().frame_sink)?;
    let traj_encodings = targets
        .frames
        .iter()
        .map(|ft| {
            ft.trajectories
                .iter()
                .filter(|tr| !tr.is_empty())
                .map(|tr| {
                    let patches: Vec<RoiPatch> =
                        tr.members.iter().map(|&(f, k)| encodings[f][k].clone()).collect();
                    Ok(accumulate_trajectory(&patches, &alpha.weights(patches.len()))?
                        .patch()
                        .clone())
                })
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    Ok(Prepared {
        encodings,
        targets,
        traj_encodings,
    })
}

/// Graph nodes of a clip's losses.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub clip: Var,
    pub det_traj: Var,
    pub total: Var,
}

/// Records the full clip loss `l_clip + l_det_traj` on `g`, using
/// `bound` leaves for the parameters of `stack`.
pub fn record_clip_loss<'a>(
    stack: &'a EmbeddingStack,
    g: &mut Graph<'a>,
    bound: &crate::association::BoundStack,
    clip: &ClipSample,
    alpha: &AlphaPolicy,
) -> Result<LossNodes> {
    let prep = prepare(stack, clip, alpha)?;
    let n = clip.detection_count();

    // detection embeddings, one block per non-empty frame
    let mut frame_rows: Vec<Option<Var>> = Vec::with_capacity(clip.len());
    for (t, f) in clip.frames.iter().enumerate() {
        if f.is_empty() {
            frame_rows.push(None);
            continue;
        }
        let inputs: Vec<EmbedInput<'_>> = f
            .iter()
            .zip(&prep.encodings[t])
            .map(|(d, enc)| EmbedInput {
                appearance: &d.detection.appearance,
                encoding: enc,
                mask: &d.detection.mask,
                position: t,
            })
            .collect();
        frame_rows.push(Some(stack.graph_embed(g, bound, &inputs)?));
    }

    let zero = g.input(Tensor::zeros(&[1]));
    let blocks: Vec<Var> = frame_rows.iter().flatten().copied().collect();
    let l_clip = if n > 0 && prep.targets.layout.frame_order.len() > 1 {
        let all = g.concat_rows(&blocks)?;
        let frames: Vec<usize> = clip.flat().iter().map(|(t, _)| *t).collect();
        let (scores, _) = stack.graph_clip_scores(g, bound, all, &frames)?;
        g.squared_error(scores, prep.targets.clip.clone(), (n * n) as f64)?
    } else {
        zero
    };

    let mut dt_terms = Vec::new();
    for (ft, traj_enc) in prep.targets.frames.iter().zip(&prep.traj_encodings) {
        let t = ft.frame;
        let Some(det) = frame_rows[t] else { continue };
        let traj_inputs: Vec<EmbedInput<'_>> = ft
            .trajectories
            .iter()
            .filter(|tr| !tr.is_empty())
            .zip(traj_enc)
            .map(|(tr, enc)| {
                let &(lf, lk) = tr.members.last().expect("non-empty trajectory");
                let last = &clip.frames[lf][lk].detection;
                EmbedInput {
                    appearance: &last.appearance,
                    encoding: enc,
                    mask: &last.mask,
                    position: lf,
                }
            })
            .collect();
        let rows = if traj_inputs.is_empty() {
            None
        } else {
            Some(stack.graph_embed(g, bound, &traj_inputs)?)
        };
        let keys = stack.graph_with_null(g, bound, rows)?;
        let logits = stack.graph_logits(g, bound, det, keys)?;
        let n_keys = ft.trajectories.len();
        let n_det = clip.frames[t].len();
        let per_det = g.grouped_softmax(logits, vec![0; n_keys], None)?;
        dt_terms.push(g.neg_log_likelihood(per_det, ft.per_detection.clone(), PROB_FLOOR)?);
        let lt = g.transpose(logits)?;
        let per_traj = g.grouped_softmax(lt, vec![0; n_det], None)?;
        dt_terms.push(g.neg_log_likelihood(per_traj, ft.per_trajectory.clone(), PROB_FLOOR)?);
    }
    let l_dt = if dt_terms.is_empty() { zero } else { g.sum(&dt_terms)? };
    let total = g.sum(&[l_clip, l_dt])?;
    Ok(LossNodes {
        clip: l_clip,
        det_traj: l_dt,
        total,
    })
}

/// Loss of `clip` under the current parameters.
pub fn evaluate_loss(stack: &EmbeddingStack, clip: &ClipSample, alpha: &AlphaPolicy) -> Result<LossParts> {
    let mut g = Graph::new();
    let bound = stack.bind(&mut g);
    let nodes = record_clip_loss(stack, &mut g, &bound, clip, alpha)?;
    Ok(LossParts {
        clip: g.value(nodes.clip).data()[0],
        det_traj: g.value(nodes.det_traj).data()[0],
    })
}

/// Loss of `clip` and its gradient for every parameter, in checkpoint order.
pub fn loss_and_gradients(
    stack: &EmbeddingStack,
    clip: &ClipSample,
    alpha: &AlphaPolicy,
) -> Result<(LossParts, Vec<Tensor>)> {
    let mut g = Graph::new();
    let bound = stack.bind(&mut g);
    let nodes = record_clip_loss(stack, &mut g, &bound, clip, alpha)?;
    let parts = LossParts {
        clip: g.value(nodes.clip).data()[0],
        det_traj: g.value(nodes.det_traj).data()[0],
    };
    if !parts.total().is_finite() {
        return Err(Error::NonFinite(format!("loss {parts:?}")));
    }
    let grads = g.backward(nodes.total)?;
    let out = bound
        .vars()
        .iter()
        .zip(stack.parameters())
        .map(|(&v, p)| {
            grads
                .wrt(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(p.shape()))
        })
        .collect();
    Ok((parts, out))
}

/// One row of the loss trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: u64,
    pub l_clip: f64,
    pub l_det_traj: f64,
    pub l_asso: f64,
}

/// Header of the loss trace CSV.
pub const LOSS_CSV_HEADER: &str = "iteration,l_clip,l_det_traj,l_asso";

impl LossRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e}",
            self.iteration, self.l_clip, self.l_det_traj, self.l_asso
        )
    }
}

/// Owns the model during optimisation.
#[derive(Clone, Debug)]
pub struct Trainer {
    stack: EmbeddingStack,
    optimizer: OptimizerConfig,
    alpha: AlphaPolicy,
    iteration: u64,
}

impl Trainer {
    pub fn new(stack: EmbeddingStack, optimizer: OptimizerConfig, alpha: AlphaPolicy) -> Result<Self> {
        optimizer.validate()?;
        alpha.validate()?;
        Ok(Trainer {
            stack,
            optimizer,
            alpha,
            iteration: 0,
        })
    }

    /// Continues numbering after `completed` earlier iterations.
    pub fn resume_at(mut self, completed: u64) -> Self {
        self.iteration = completed;
        self
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn stack(&self) -> &EmbeddingStack {
        &self.stack
    }

    pub fn into_stack(self) -> EmbeddingStack {
        self.stack
    }

    /// One AdamW step on `clip`. On a non-finite loss or gradient the
    /// parameters are left untouched and an error is returned.
    pub fn step(&mut self, clip: &ClipSample) -> Result<LossRecord> {
        let (parts, grads) = loss_and_gradients(&self.stack, clip, &self.alpha)?;
        for (p, gr) in self.stack.parameters_mut().iter_mut().zip(&grads) {
            p.zero_grad();
            p.accumulate_grad(gr)?;
        }
        let mut params: Vec<&mut Parameter> = self.stack.parameters_mut().iter_mut().collect();
        adam_step(&mut params, &self.optimizer, self.iteration + 1)?;
        self.iteration += 1;
        let rec = LossRecord {
            iteration: self.iteration,
            l_clip: parts.clip,
            l_det_traj: parts.det_traj,
            l_asso: parts.total(),
        };
        debug!("iteration {} l_asso {:.5}", rec.iteration, rec.l_asso);
        Ok(rec)
    }
}

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: u64,
    /// Clip length `T`.
    pub clip_len: usize,
    pub optimizer: OptimizerConfig,
    pub alpha: AlphaPolicy,
    /// Seed of the clip stream.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 2000,
            clip_len: 16,
            optimizer: OptimizerConfig::default(),
            alpha: AlphaPolicy::Uniform,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clip_len < 2 {
            return Err(Error::config("train.clip_len", "must be at least 2"));
        }
        self.optimizer.validate()?;
        self.alpha.validate()
    }
}

/// Outcome of [`train`]; `failure` is set when a step produced a non-finite
/// value, in which case the model holds the last finite parameters.
#[derive(Debug)]
pub struct TrainReport {
    pub trace: Vec<LossRecord>,
    pub failure: Option<Error>,
}

/// Runs `trainer` over `clips` until the iteration budget is used.
pub fn train<I>(trainer: &mut Trainer, clips: I, iterations: u64) -> Result<TrainReport>
where
    I: IntoIterator<Item = Result<ClipSample>>,
{
    let mut trace = Vec::new();
    let mut clips = clips.into_iter();
    let end = trainer.iteration() + iterations;
    while trainer.iteration() < end {
        let clip = clips
            .next()
            .ok_or_else(|| Error::Invalid("clip stream ended before the iteration budget".into()))??;
        match trainer.step(&clip) {
            Ok(rec) => trace.push(rec),
            Err(e @ Error::NonFinite(_)) => {
                warn!("training stopped at iteration {}: {e}", trainer.iteration() + 1);
                return Ok(TrainReport {
                    trace,
                    failure: Some(e),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TrainReport { trace, failure: None })
}

/// Seed of the `index`-th generated training video.
pub fn clip_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Endless stream of freshly generated clips, one short video per clip,
/// starting at stream position `start`.
pub fn scenario_clips(
    scenario: &ScenarioConfig,
    clip_len: usize,
    seed: u64,
    start: u64,
) -> impl Iterator<Item = Result<ClipSample>> + '_ {
    (start..).map(move |i| {
        let cfg = ScenarioConfig {
            frames: clip_len,
            seed: clip_seed(seed, i),
            ..scenario.clone()
        };
        let video = generate(&cfg)?;
        ClipSample::new(0, cfg.geometry()?, video.frames)
    })
}

/// Endless stream cycling through stride-1 windows of the given clips in a
/// fixed seeded order, starting at stream position `start`.
pub fn cycle_clips(clips: Vec<ClipSample>, seed: u64, start: u64) -> impl Iterator<Item = Result<ClipSample>> {
    let n = clips.len() as u64;
    (start..).map_while(move |i| {
        if n == 0 {
            return None;
        }
        let epoch = i / n;
        let mut order: Vec<u64> = (0..n).collect();
        order.sort_by_key(|&k| clip_seed(seed ^ epoch, k));
        Some(Ok(clips[order[(i % n) as usize] as usize].clone()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::{AttentionMask, EncodingMode, ModelConfig};
    use crate::detection::Detection;
    use crate::encoding::{BBox, RoiSpec};
    use crate::numeric::finite_diff_gradient;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn det(frame: usize, id: u32, u: f64, roi: RoiSpec, channels: usize, rng: &mut ChaCha8Rng) -> SyntheticDetection {
        let data = (0..channels * roi.cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
        SyntheticDetection {
            detection: Detection {
                frame,
                bbox: BBox::new(u, 10.0, 8.0, 12.0).unwrap(),
                appearance: RoiPatch::new(Tensor::new(vec![channels, roi.height, roi.width], data).unwrap())
                    .unwrap(),
                mask: AttentionMask::ones(roi),
            },
            identity: id,
            visible: true,
        }
    }

    /// `frames[t]` lists the identities present on frame `t`.
    fn clip_of(frames: &[&[u32]]) -> ClipSample {
        let roi = RoiSpec::new(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = frames
            .iter()
            .enumerate()
            .map(|(t, ids)| {
                ids.iter()
                    .map(|&id| det(t, id, 5.0 + 20.0 * id as f64 + t as f64, roi, 2, &mut rng))
                    .collect()
            })
            .collect();
        ClipSample::new(0, ImageGeometry::new(64, 48, 2).unwrap(), f).unwrap()
    }

    #[test]
    fn duplicate_identity_rejected() {
        let roi = RoiSpec::new(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = vec![vec![det(0, 3, 1.0, roi, 2, &mut rng), det(0, 3, 9.0, roi, 2, &mut rng)]];
        assert!(ClipSample::new(0, ImageGeometry::new(32, 32, 2).unwrap(), f).is_err());
    }

    #[test]
    fn gt_one_identity_two_frames() {
        let (s, layout) = build_gt_clip_matrix(&clip_of(&[&[0], &[0]]), true).unwrap();
        // columns: det0, det1, sink(frame0), sink(frame1)
        assert_eq!(layout.columns(), 4);
        assert_eq!(s.row(0), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(s.row(1), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn gt_two_identities_block_identity() {
        let (s, _) = build_gt_clip_matrix(&clip_of(&[&[0, 1], &[0, 1]]), false).unwrap();
        let expect = [
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
        ];
        for (r, e) in expect.iter().enumerate() {
            assert_eq!(s.row(r), e);
        }
    }

    #[test]
    fn gt_missing_counterpart_goes_to_sink() {
        let clip = clip_of(&[&[0, 1], &[0]]);
        let (s, layout) = build_gt_clip_matrix(&clip, true).unwrap();
        // identity 1 is on frame 0 only: its row puts mass on frame 1's sink
        let sink1 = 3 + 1;
        assert_eq!(layout.keys[sink1], crate::association::KeyRef::Sink(1));
        assert_eq!(s.at2(1, sink1), 1.0);
        // every allowed row group sums to one
        for r in 0..s.rows() {
            for grp in 0..2 {
                let sum: f64 = (0..layout.columns())
                    .filter(|&c| layout.groups[c] == grp && layout.allowed[r * layout.columns() + c])
                    .map(|c| s.at2(r, c))
                    .sum();
                let own = layout.groups[r] == grp;
                assert_eq!(sum, if own { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn truncation_examples() {
        let born_early = clip_of(&[&[0], &[0]]);
        let t = truncate_trajectories(&born_early, 1).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t[0].is_empty());
        assert_eq!(t[1].members, vec![(0, 0)]);

        let born_late = clip_of(&[&[], &[4]]);
        let t = truncate_trajectories(&born_late, 1).unwrap();
        assert_eq!(t, vec![Trajectory::empty()]);
        let ft = det_traj_targets(&born_late, 1).unwrap();
        assert_eq!(ft.per_detection.data(), &[1.0]);
        assert_eq!(ft.per_trajectory.data(), &[0.0]);

        // identity 2 hidden on frames 2 and 3
        let gappy = clip_of(&[&[2], &[2], &[], &[], &[2], &[2]]);
        let t = truncate_trajectories(&gappy, 5).unwrap();
        let frames: Vec<usize> = t[1].members.iter().map(|m| m.0).collect();
        assert_eq!(frames, vec![0, 1, 4]);

        assert!(truncate_trajectories(&gappy, 0).is_err());
        assert!(truncate_trajectories(&gappy, 6).is_err());
    }

    #[test]
    fn clip_loss_examples() {
        let z = Tensor::zeros(&[2, 2]);
        let o = Tensor::filled(&[2, 2], 1.0);
        assert_eq!(loss_clip(&o, &o).unwrap(), 0.0);
        assert_eq!(loss_clip(&z, &o).unwrap(), 1.0);
        let mut off = z.clone();
        off.set2(1, 0, 0.5);
        assert_eq!(loss_clip(&z, &off).unwrap(), 0.0625);
        assert!(loss_clip(&z, &Tensor::zeros(&[2, 3])).is_err());
    }

    #[test]
    fn det_traj_loss_examples() {
        let s = Tensor::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert_eq!(loss_det_traj(&[s.clone()], &[s.clone()]).unwrap(), 0.0);
        let half = Tensor::from_rows(&[vec![0.5, 0.5]]).unwrap();
        approx::assert_abs_diff_eq!(loss_det_traj(&[s.clone()], &[half]).unwrap(), 2f64.ln(), epsilon = 1e-12);
        let e = (-1f64).exp();
        let p = Tensor::from_rows(&[vec![1.0 - e, e]]).unwrap();
        approx::assert_abs_diff_eq!(
            loss_det_traj(&[s.clone(), s.clone()], &[p.clone(), p]).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        let zero = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
        approx::assert_abs_diff_eq!(
            loss_det_traj(&[s], &[zero]).unwrap(),
            -PROB_FLOOR.ln(),
            epsilon = 1e-9
        );
    }

    fn toy_model(mode: EncodingMode, sink: bool) -> EmbeddingStack {
        EmbeddingStack::new(ModelConfig {
            channels: 2,
            roi: RoiSpec::new(2, 2).unwrap(),
            embed_dim: 4,
            encoding: mode,
            use_mask: true,
            frame_sink: sink,
            init_seed: 5,
        })
        .unwrap()
    }

    #[test]
    fn graph_losses_match_direct_evaluation() {
        let clip = clip_of(&[&[0, 1], &[0], &[1, 0]]);
        let stack = toy_model(EncodingMode::Dst, true);
        let parts = evaluate_loss(&stack, &clip, &AlphaPolicy::Uniform).unwrap();

        // direct evaluation through the inference-side API
        let geom = clip.geometry();
        let roi = stack.config().roi;
        let enc: Vec<Vec<RoiPatch>> = clip
            .frames()
            .iter()
            .map(|f| f.iter().map(|d| encode_roi(&d.detection.bbox, &geom, &roi).unwrap()).collect())
            .collect();
        let flat = clip.flat();
        let embs: Vec<Vec<f64>> = flat
            .iter()
            .map(|&(t, d)| {
                let k = clip.frames()[t].iter().position(|x| x == d).unwrap();
                crate::association::embed_detection(&d.detection.appearance, &enc[t][k], &d.detection.mask, &stack)
                    .unwrap()
            })
            .collect();
        let frames: Vec<usize> = flat.iter().map(|p| p.0).collect();
        let m = crate::association::detection_attention(&embs, &frames, &stack).unwrap();
        let (s, _) = build_gt_clip_matrix(&clip, true).unwrap();
        approx::assert_abs_diff_eq!(parts.clip, loss_clip(&s, m.scores()).unwrap(), epsilon = 1e-12);

        let mut targets = Vec::new();
        let mut preds = Vec::new();
        for t in 1..clip.len() {
            let ft = det_traj_targets(&clip, t).unwrap();
            let mut keys = vec![stack.null_embedding()];
            for tr in ft.trajectories.iter().filter(|t| !t.is_empty()) {
                let patches: Vec<RoiPatch> = tr.members.iter().map(|&(f, k)| enc[f][k].clone()).collect();
                let traj = accumulate_trajectory(&patches, &vec![1.0; patches.len()]).unwrap();
                let &(lf, lk) = tr.members.last().unwrap();
                let last = &clip.frames()[lf][lk].detection;
                keys.push(crate::association::embed_trajectory(&traj, &last.appearance, &last.mask, &stack).unwrap());
            }
            let start = flat.iter().position(|p| p.0 == t).unwrap();
            let dets = &embs[start..start + clip.frames()[t].len()];
            let (pd, pt) = crate::association::det_traj_attention(dets, &keys, &stack).unwrap();
            targets.push(ft.per_detection);
            preds.push(pd.scores().clone());
            targets.push(ft.per_trajectory);
            preds.push(pt.scores().clone());
        }
        approx::assert_abs_diff_eq!(parts.det_traj, loss_det_traj(&targets, &preds).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn gradients_match_finite_differences_on_toy_clip() {
        // three detections over two frames
        let clip = clip_of(&[&[0, 1], &[1]]);
        for mode in [EncodingMode::Dst, EncodingMode::Classic, EncodingMode::None] {
            let mut stack = toy_model(mode, true);
            // zero biases can leave pre-activations exactly on the ReLU kink
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for p in stack.parameters_mut() {
                if p.shape().len() == 1 {
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
                let diff = analytic.sub(&numeric).unwrap();
                let norm = |t: &Tensor| t.data().iter().map(|v| v * v).sum::<f64>().sqrt();
                let scale = norm(analytic).max(norm(&numeric)).max(1e-8);
                assert!(
                    norm(&diff) / scale < 1e-4,
                    "{mode} parameter {pi}: relative error {}",
                    norm(&diff) / scale
                );
            }
        }
    }

    #[test]
    fn zero_iterations_leave_parameters() {
        let stack = toy_model(EncodingMode::Dst, true);
        let mut trainer = Trainer::new(stack.clone(), OptimizerConfig::default(), AlphaPolicy::Uniform).unwrap();
        let report = train(&mut trainer, std::iter::empty(), 0).unwrap();
        assert!(report.trace.is_empty());
        assert_eq!(trainer.stack(), &stack);
    }

    fn tiny_scenario() -> ScenarioConfig {
        ScenarioConfig {
            width: 64,
            height: 64,
            box_width: 8.0,
            box_height: 16.0,
            channels: 2,
            roi: RoiSpec::new(2, 2).unwrap(),
            ..Default::default()
        }
    }

    #[test]
    fn training_is_deterministic_and_resumable() {
        let scen = tiny_scenario();
        let run = |iters: u64| {
            let mut trainer = Trainer::new(toy_model(EncodingMode::Dst, true), OptimizerConfig::default(), AlphaPolicy::Uniform)
                .unwrap();
            let report = train(&mut trainer, scenario_clips(&scen, 4, 9, 0), iters).unwrap();
            (report.trace, trainer)
        };
        let (a, _) = run(6);
        let (b, _) = run(6);
        assert_eq!(a, b);

        let (first, trainer) = run(3);
        let mut trainer = trainer;
        let rest = train(&mut trainer, scenario_clips(&scen, 4, 9, 3), 3).unwrap().trace;
        let iters: Vec<u64> = first.iter().chain(&rest).map(|r| r.iteration).collect();
        assert_eq!(iters, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(first.iter().chain(&rest).copied().collect::<Vec<_>>(), a);
    }

    #[test]
    fn training_reduces_loss_on_toy_stream() {
        let scen = tiny_scenario();
        let clip = scenario_clips(&scen, 4, 77, 0).next().unwrap().unwrap();
        let model = EmbeddingStack::new(ModelConfig {
            channels: 2,
            roi: RoiSpec::new(2, 2).unwrap(),
            embed_dim: 16,
            init_seed: 5,
            ..Default::default()
        })
        .unwrap();
        let mut trainer = Trainer::new(
            model,
            OptimizerConfig {
                learning_rate: 1e-2,
                ..Default::default()
            },
            AlphaPolicy::Uniform,
        )
        .unwrap();
        let before = evaluate_loss(trainer.stack(), &clip, &AlphaPolicy::Uniform).unwrap().total();
        train(&mut trainer, std::iter::repeat_with(|| Ok(clip.clone())), 200).unwrap();
        let after = evaluate_loss(trainer.stack(), &clip, &AlphaPolicy::Uniform).unwrap().total();
        assert!(after < 0.5 * before, "{before} -> {after}");
    }

    #[test]
    fn csv_row_layout() {
        let r = LossRecord {
            iteration: 3,
            l_clip: 0.5,
            l_det_traj: 1.0,
            l_asso: 1.5,
        };
        assert_eq!(r.csv_row(), "3,5e-1,1e0,1.5e0");
        assert_eq!(LOSS_CSV_HEADER.split(',').count(), 4);
    }
}
