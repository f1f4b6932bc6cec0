//! Online tracking: clip-level initialisation, then a stride-1 sliding
//! window that scores each new detection against live tracks and assigns
//! with the Hungarian algorithm.

mod hungarian;

pub use hungarian::{assignment_cost, hungarian};

use std::collections::VecDeque;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::association::{
    det_traj_attention, detection_attention, AttentionMask, EmbedInput, EmbeddingStack,
};
use crate::detection::Detection;
use crate::encoding::{
    accumulate_trajectory, encode_roi, AlphaPolicy, BBox, ImageGeometry, RoiPatch, TrajectoryEncoding,
};
use crate::error::{Error, Result};
use crate::numeric::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Window length `T`.
    pub window: usize,
    /// Minimum association score `β` for extending a track.
    pub birth_threshold: f64,
    pub alpha: AlphaPolicy,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            window: 16,
            birth_threshold: 0.3,
            alpha: AlphaPolicy::Uniform,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::config("tracker.window", "must be at least 2"));
        }
        if !(self.birth_threshold > 0.0 && self.birth_threshold < 1.0) {
            return Err(Error::config("tracker.birth_threshold", "must lie in (0, 1)"));
        }
        self.alpha.validate()
    }
}

/// A trajectory under construction.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackState {
    pub id: u64,
    /// Accumulated encoding over the whole history.
    pub encoding: TrajectoryEncoding,
    pub snapshot: RoiPatch,
    pub mask: AttentionMask,
    /// Boxes with their frame, strictly increasing in frame.
    pub history: Vec<(usize, BBox)>,
    pub active: bool,
    /// Per-frame encodings of the most recent `T − 1` history entries.
    recent: VecDeque<RoiPatch>,
}

impl TrackState {
    pub fn last_frame(&self) -> usize {
        self.history.last().expect("tracks are never empty").0
    }

    /// Encoding over the recent history only, the span the model was trained on.
    pub fn window_encoding(&self, alpha: &AlphaPolicy) -> Result<TrajectoryEncoding> {
        let patches: Vec<RoiPatch> = self.recent.iter().cloned().collect();
        accumulate_trajectory(&patches, &alpha.weights(patches.len()))
    }
}

/// One output box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub frame: usize,
    pub id: u64,
    pub bbox: BBox,
    /// Association score that attached this box; births carry the
    /// empty-trajectory score, clip starts 1.
    pub score: f64,
}

/// Every tracked box of a video, ordered by `(frame, id)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackOutput {
    records: Vec<TrackRecord>,
}

impl TrackOutput {
    /// Sorts records and rejects duplicate `(frame, id)` pairs.
    pub fn new(mut records: Vec<TrackRecord>) -> Result<Self> {
        records.sort_by_key(|r| (r.frame, r.id));
        if let Some(w) = records.windows(2).find(|w| (w[0].frame, w[0].id) == (w[1].frame, w[1].id)) {
            return Err(Error::Invalid(format!(
                "track {} has two boxes on frame {}",
                w[0].id, w[0].frame
            )));
        }
        Ok(TrackOutput { records })
    }

    pub fn records(&self) -> &[TrackRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct track ids in ascending order.
    pub fn ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.records.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Records of one track, by frame.
    pub fn track(&self, id: u64) -> Vec<TrackRecord> {
        self.records.iter().filter(|r| r.id == id).copied().collect()
    }
}

struct WindowDet {
    base: Vec<f64>,
    track: u64,
}

struct WindowFrame {
    frame: usize,
    dets: Vec<WindowDet>,
}

/// Online engine for one video.
pub struct Tracker<'a> {
    stack: &'a EmbeddingStack,
    config: TrackerConfig,
    geometry: ImageGeometry,
    tracks: Vec<TrackState>,
    window: VecDeque<WindowFrame>,
    records: Vec<TrackRecord>,
    next_id: u64,
    next_frame: usize,
    initialized: bool,
}

impl<'a> Tracker<'a> {
    pub fn new(stack: &'a EmbeddingStack, config: TrackerConfig, geometry: ImageGeometry) -> Result<Self> {
        config.validate()?;
        geometry.validate()?;
        if geometry.channels != stack.config().channels {
            return Err(Error::shape(format!(
                "video has {} channels, model expects {}",
                geometry.channels,
                stack.config().channels
            )));
        }
        Ok(Tracker {
            stack,
            config,
            geometry,
            tracks: Vec::new(),
            window: VecDeque::new(),
            records: Vec::new(),
            next_id: 1,
            next_frame: 0,
            initialized: false,
        })
    }

    pub fn tracks(&self) -> &[TrackState] {
        &self.tracks
    }

    /// Frames currently held in the window buffer.
    pub fn window_frames(&self) -> Vec<usize> {
        self.window.iter().map(|w| w.frame).collect()
    }

    pub fn output(&self) -> Result<TrackOutput> {
        TrackOutput::new(self.records.clone())
    }

    fn encode(&self, d: &Detection) -> Result<RoiPatch> {
        encode_roi(&d.bbox, &self.geometry, &self.stack.config().roi)
    }

    fn base_embeddings(&self, dets: &[Detection], encodings: &[RoiPatch]) -> Result<Vec<Vec<f64>>> {
        let inputs: Vec<EmbedInput<'_>> = dets
            .iter()
            .zip(encodings)
            .map(|(d, enc)| EmbedInput {
                appearance: &d.appearance,
                encoding: enc,
                mask: &d.mask,
                position: 0,
            })
            .collect();
        self.stack.embed_base(&inputs)
    }

    fn check_frame(&self, frame: usize, dets: &[Detection]) -> Result<()> {
        match dets.iter().find(|d| d.frame != frame) {
            Some(d) => Err(Error::Invalid(format!(
                "detection stamped frame {} delivered as frame {frame}",
                d.frame
            ))),
            None => Ok(()),
        }
    }

    fn birth(&mut self, frame: usize, d: &Detection, enc: RoiPatch, score: f64) -> Result<u64> {
        let id = self.next_id;
        self.next_id += 1;
        let encoding = accumulate_trajectory(std::slice::from_ref(&enc), &self.config.alpha.weights(1))?;
        let mut recent = VecDeque::new();
        recent.push_back(enc);
        self.tracks.push(TrackState {
            id,
            encoding,
            snapshot: d.appearance.clone(),
            mask: d.mask.clone(),
            history: vec![(frame, d.bbox)],
            active: true,
            recent,
        });
        self.records.push(TrackRecord {
            frame,
            id,
            bbox: d.bbox,
            score,
        });
        Ok(id)
    }

    fn extend(&mut self, idx: usize, frame: usize, d: &Detection, enc: RoiPatch, score: f64) -> Result<()> {
        let alpha = self.config.alpha;
        let keep = self.config.window - 1;
        let t = &mut self.tracks[idx];
        t.history.push((frame, d.bbox));
        match alpha {
            AlphaPolicy::Uniform => t.encoding.extend(&enc, 1.0)?,
            AlphaPolicy::Decay { .. } => {
                let all = t
                    .history
                    .iter()
                    .map(|(_, b)| encode_roi(b, &self.geometry, &self.stack.config().roi))
                    .collect::<Result<Vec<_>>>()?;
                t.encoding = accumulate_trajectory(&all, &alpha.weights(all.len()))?;
            }
        }
        t.recent.push_back(enc);
        while t.recent.len() > keep {
            t.recent.pop_front();
        }
        t.snapshot = d.appearance.clone();
        t.mask = d.mask.clone();
        self.records.push(TrackRecord {
            frame,
            id: t.id,
            bbox: d.bbox,
            score,
        });
        Ok(())
    }

    /// Builds tracks from the first clip by linking detections frame by
    /// frame on their clip association scores.
    pub fn init_from_first_clip(&mut self, frames: &[Vec<Detection>]) -> Result<()> {
        if self.initialized {
            return Err(Error::Invalid("tracker already initialised".into()));
        }
        for (t, dets) in frames.iter().enumerate() {
            self.check_frame(t, dets)?;
        }
        self.initialized = true;
        let flat: Vec<(usize, &Detection)> = frames
            .iter()
            .enumerate()
            .flat_map(|(t, f)| f.iter().map(move |d| (t, d)))
            .collect();
        let encodings: Vec<RoiPatch> = flat.iter().map(|(_, d)| self.encode(d)).collect::<Result<_>>()?;
        let dets: Vec<Detection> = flat.iter().map(|(_, d)| (*d).clone()).collect();
        let bases = self.base_embeddings(&dets, &encodings)?;
        let placed: Vec<Vec<f64>> = bases
            .iter()
            .zip(&flat)
            .map(|(b, (t, _))| self.stack.place(b, *t))
            .collect::<Result<_>>()?;
        let frame_of: Vec<usize> = flat.iter().map(|(t, _)| *t).collect();
        let s = detection_attention(&placed, &frame_of, self.stack)?;

        let beta = self.config.birth_threshold;
        let mut chains: Vec<Vec<usize>> = Vec::new();
        let mut link_score = vec![1.0; flat.len()];
        let mut offset = 0;
        for f in frames {
            let idx: Vec<usize> = (offset..offset + f.len()).collect();
            offset += f.len();
            if idx.is_empty() {
                continue;
            }
            let mut cost = Tensor::filled(&[chains.len(), idx.len()], f64::INFINITY);
            let mut score = Tensor::zeros(&[chains.len(), idx.len()]);
            for (c, chain) in chains.iter().enumerate() {
                for (k, &d) in idx.iter().enumerate() {
                    let sc = chain
                        .iter()
                        .map(|&m| 0.5 * (s.get(d, m) + s.get(m, d)))
                        .sum::<f64>()
                        / chain.len() as f64;
                    score.set2(c, k, sc);
                    if sc >= beta {
                        cost.set2(c, k, 1.0 - sc);
                    }
                }
            }
            let assignment = hungarian(&cost)?;
            let mut taken = vec![false; idx.len()];
            for (c, a) in assignment.iter().enumerate() {
                if let Some(k) = *a {
                    chains[c].push(idx[k]);
                    link_score[idx[k]] = score.at2(c, k);
                    taken[k] = true;
                }
            }
            for (k, &d) in idx.iter().enumerate() {
                if !taken[k] {
                    chains.push(vec![d]);
                }
            }
        }

        let mut track_of = vec![0u64; flat.len()];
        for chain in &chains {
            let (t0, d0) = flat[chain[0]];
            let id = self.birth(t0, d0, encodings[chain[0]].clone(), 1.0)?;
            track_of[chain[0]] = id;
            let ti = self.tracks.len() - 1;
            for &m in &chain[1..] {
                let (tm, dm) = flat[m];
                self.extend(ti, tm, dm, encodings[m].clone(), link_score[m])?;
                track_of[m] = id;
            }
        }
        let mut k = 0;
        for (t, f) in frames.iter().enumerate() {
            let dets = f
                .iter()
                .map(|_| {
                    let w = WindowDet {
                        base: bases[k].clone(),
                        track: track_of[k],
                    };
                    k += 1;
                    w
                })
                .collect();
            self.window.push_back(WindowFrame { frame: t, dets });
        }
        while self.window.len() > self.config.window {
            self.window.pop_front();
        }
        self.next_frame = frames.len();
        debug!("initialised {} tracks from {} frames", self.tracks.len(), frames.len());
        Ok(())
    }

    /// Processes the next frame.
    pub fn step(&mut self, detections: &[Detection]) -> Result<()> {
        if !self.initialized {
            return Err(Error::Invalid("step before initialisation".into()));
        }
        let frame = self.next_frame;
        self.check_frame(frame, detections)?;
        self.next_frame += 1;
        let t_len = self.config.window;
        let start = (frame + 1).saturating_sub(t_len);
        while self.window.front().is_some_and(|w| w.frame < start) {
            self.window.pop_front();
        }
        for t in &mut self.tracks {
            if t.active && frame - t.last_frame() > t_len {
                t.active = false;
            }
        }

        let encodings: Vec<RoiPatch> = detections.iter().map(|d| self.encode(d)).collect::<Result<_>>()?;
        let bases = self.base_embeddings(detections, &encodings)?;
        let new_pos = frame - start;
        let new_embs: Vec<Vec<f64>> = bases
            .iter()
            .map(|b| self.stack.place(b, new_pos))
            .collect::<Result<_>>()?;
        let active: Vec<usize> = (0..self.tracks.len()).filter(|&i| self.tracks[i].active).collect();

        let mut assigned: Vec<Option<(usize, f64)>> = vec![None; detections.len()];
        let mut null_score = vec![1.0; detections.len()];
        if !detections.is_empty() && !active.is_empty() {
            // detection–detection scores against the window
            let mut embs = Vec::new();
            let mut frames = Vec::new();
            let mut owners = Vec::new();
            for w in &self.window {
                for d in &w.dets {
                    embs.push(self.stack.place(&d.base, w.frame - start)?);
                    frames.push(w.frame);
                    owners.push(d.track);
                }
            }
            let first_new = embs.len();
            embs.extend(new_embs.iter().cloned());
            frames.extend(std::iter::repeat_n(frame, detections.len()));
            let dd = detection_attention(&embs, &frames, self.stack)?;

            // detection–trajectory scores
            let mut keys = vec![self.stack.null_embedding()];
            let traj_encs: Vec<TrajectoryEncoding> = active
                .iter()
                .map(|&i| self.tracks[i].window_encoding(&self.config.alpha))
                .collect::<Result<_>>()?;
            let traj_inputs: Vec<EmbedInput<'_>> = active
                .iter()
                .zip(&traj_encs)
                .map(|(&i, enc)| {
                    let t = &self.tracks[i];
                    EmbedInput {
                        appearance: &t.snapshot,
                        encoding: enc.patch(),
                        mask: &t.mask,
                        position: t.last_frame().saturating_sub(start),
                    }
                })
                .collect();
            let traj_bases = self.stack.embed_base(&traj_inputs)?;
            for (b, inp) in traj_bases.iter().zip(&traj_inputs) {
                keys.push(self.stack.place(b, inp.position)?);
            }
            let (per_det, _) = det_traj_attention(&new_embs, &keys, self.stack)?;

            let beta = self.config.birth_threshold;
            let mut cost = Tensor::filled(&[detections.len(), active.len()], f64::INFINITY);
            let mut score = Tensor::zeros(&[detections.len(), active.len()]);
            for d in 0..detections.len() {
                null_score[d] = per_det.get(d, 0);
                for (k, &ti) in active.iter().enumerate() {
                    let id = self.tracks[ti].id;
                    let members: Vec<usize> = (0..first_new).filter(|&m| owners[m] == id).collect();
                    let dt = per_det.get(d, k + 1);
                    let sc = if members.is_empty() {
                        dt
                    } else {
                        let mean = members.iter().map(|&m| dd.get(first_new + d, m)).sum::<f64>()
                            / members.len() as f64;
                        0.5 * (dt + mean)
                    };
                    score.set2(d, k, sc);
                    if sc >= beta {
                        cost.set2(d, k, 1.0 - sc);
                    }
                }
            }
            for (d, a) in hungarian(&cost)?.into_iter().enumerate() {
                assigned[d] = a.map(|k| (active[k], score.at2(d, k)));
            }
        } else if !detections.is_empty() {
            let (per_det, _) = det_traj_attention(&new_embs, &[self.stack.null_embedding()], self.stack)?;
            for (d, s) in null_score.iter_mut().enumerate() {
                *s = per_det.get(d, 0);
            }
        }

        let mut window_dets = Vec::with_capacity(detections.len());
        for (d, det) in detections.iter().enumerate() {
            let id = match assigned[d] {
                Some((ti, sc)) => {
                    self.extend(ti, frame, det, encodings[d].clone(), sc)?;
                    self.tracks[ti].id
                }
                None => self.birth(frame, det, encodings[d].clone(), null_score[d])?,
            };
            window_dets.push(WindowDet {
                base: bases[d].clone(),
                track: id,
            });
        }
        self.window.push_back(WindowFrame {
            frame,
            dets: window_dets,
        });
        Ok(())
    }
}

/// Tracks a whole video: the first `T` frames initialise, the rest step.
pub fn run(
    stack: &EmbeddingStack,
    config: &TrackerConfig,
    geometry: ImageGeometry,
    video: &[Vec<Detection>],
) -> Result<TrackOutput> {
    let mut tracker = Tracker::new(stack, config.clone(), geometry)?;
    if video.is_empty() {
        return Ok(TrackOutput::default());
    }
    let head = config.window.min(video.len());
    tracker.init_from_first_clip(&video[..head])?;
    for f in &video[head..] {
        tracker.step(f)?;
    }
    tracker.output()
}
