//! File formats: the binary tensor container used by checkpoints and
//! simulated videos, the JSON video manifest, MOT-style track text and the
//! structured track JSON. Layouts are documented in `docs/formats.md`.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::association::{AttentionMask, EmbeddingStack, ModelConfig, PARAM_NAMES};
use crate::detection::Detection;
use crate::encoding::{BBox, RoiPatch};
use crate::error::{Error, Result};
use crate::numeric::{OptimizerConfig, Parameter, Tensor};
use crate::simulator::{LabeledVideo, ScenarioConfig, SyntheticDetection};
use crate::tracker::{TrackOutput, TrackRecord};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DSTCKPT\0";
pub const VIDEO_MAGIC: &[u8; 8] = b"DSTVIDEO";
pub const FORMAT_VERSION: u32 = 1;

/// Encodes `magic | version u32 | header length u64 | JSON header | f64 payload`,
/// all integers and floats little-endian.
pub fn encode_container<H: Serialize>(magic: &[u8; 8], header: &H, payload: &[f64]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(20 + json.len() + 8 * payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Inverse of [`encode_container`]; `path` is only used in error messages.
pub fn decode_container<H: DeserializeOwned>(magic: &[u8; 8], bytes: &[u8], path: &Path) -> Result<(H, Vec<f64>)> {
    let bad = |reason: &str| Error::format(path, reason);
    if bytes.len() < 20 || &bytes[..8] != magic {
        return Err(bad("wrong magic bytes"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = &bytes[20..];
    if body.len() < hlen || (body.len() - hlen) % 8 != 0 {
        return Err(bad("truncated container"));
    }
    let header = serde_json::from_slice(&body[..hlen]).map_err(|e| bad(&format!("header: {e}")))?;
    let payload = body[hlen..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header, payload))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn slice(payload: &[f64], offset: usize, len: usize, path: &Path) -> Result<Vec<f64>> {
    payload
        .get(offset..offset + len)
        .map(<[f64]>::to_vec)
        .ok_or_else(|| Error::format(path, format!("payload range {offset}+{len} out of bounds")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    model: ModelConfig,
    optimizer: OptimizerConfig,
    iteration: u64,
    tensors: Vec<TensorEntry>,
}

/// Model parameters, optimiser moments and the iteration count.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub stack: EmbeddingStack,
    pub optimizer: OptimizerConfig,
    pub iteration: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::new();
        let mut tensors = Vec::new();
        for (name, p) in PARAM_NAMES.iter().zip(self.stack.parameters()) {
            for (suffix, t) in [("", &p.value), ("#m", &p.first_moment), ("#v", &p.second_moment)] {
                tensors.push(TensorEntry {
                    name: format!("{name}{suffix}"),
                    shape: t.shape().to_vec(),
                    offset: payload.len(),
                });
                payload.extend_from_slice(t.data());
            }
        }
        let header = CheckpointHeader {
            format: "dst-track-checkpoint".into(),
            model: self.stack.config().clone(),
            optimizer: self.optimizer.clone(),
            iteration: self.iteration,
            tensors,
        };
        encode_container(CHECKPOINT_MAGIC, &header, &payload)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let (h, payload): (CheckpointHeader, Vec<f64>) = decode_container(CHECKPOINT_MAGIC, bytes, path)?;
        let find = |name: &str| -> Result<Tensor> {
            let e = h
                .tensors
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| Error::format(path, format!("missing tensor {name}")))?;
            let len = e.shape.iter().product();
            Tensor::new(e.shape.clone(), slice(&payload, e.offset, len, path)?)
        };
        let mut params = Vec::with_capacity(PARAM_NAMES.len());
        for name in PARAM_NAMES {
            let mut p = Parameter::new(find(name)?);
            p.first_moment = find(&format!("{name}#m"))?;
            p.second_moment = find(&format!("{name}#v"))?;
            params.push(p);
        }
        Ok(Checkpoint {
            stack: EmbeddingStack::from_parameters(h.model, params)?,
            optimizer: h.optimizer,
            iteration: h.iteration,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_bytes(&read_bytes(path)?, path)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct DetectionEntry {
    identity: u32,
    visible: bool,
    bbox: [f64; 4],
    appearance: usize,
    mask: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct VideoHeader {
    format: String,
    seed: u64,
    scenario: ScenarioConfig,
    truth: Vec<Vec<[f64; 4]>>,
    frames: Vec<Vec<DetectionEntry>>,
}

fn bbox_array(b: &BBox) -> [f64; 4] {
    [b.u, b.v, b.w, b.h]
}

/// Serialises a labeled video to the binary container.
pub fn video_to_bytes(video: &LabeledVideo) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    let frames = video
        .frames
        .iter()
        .map(|f| {
            f.iter()
                .map(|d| {
                    let appearance = payload.len();
                    payload.extend_from_slice(d.detection.appearance.data());
                    let mask = payload.len();
                    payload.extend_from_slice(d.detection.mask.grid().data());
                    DetectionEntry {
                        identity: d.identity,
                        visible: d.visible,
                        bbox: bbox_array(&d.detection.bbox),
                        appearance,
                        mask,
                    }
                })
                .collect()
        })
        .collect();
    let header = VideoHeader {
        format: "dst-track-video".into(),
        seed: video.config.seed,
        scenario: video.config.clone(),
        truth: video.truth.iter().map(|f| f.iter().map(bbox_array).collect()).collect(),
        frames,
    };
    encode_container(VIDEO_MAGIC, &header, &payload)
}

/// Reads a video container.
pub fn video_from_bytes(bytes: &[u8], path: &Path) -> Result<LabeledVideo> {
    let (h, payload): (VideoHeader, Vec<f64>) = decode_container(VIDEO_MAGIC, bytes, path)?;
    h.scenario.validate()?;
    let (c, roi) = (h.scenario.channels, h.scenario.roi);
    let frames = h
        .frames
        .iter()
        .enumerate()
        .map(|(t, f)| {
            f.iter()
                .map(|e| {
                    let appearance = RoiPatch::new(Tensor::new(
                        vec![c, roi.height, roi.width],
                        slice(&payload, e.appearance, c * roi.cells(), path)?,
                    )?)?;
                    let mask = AttentionMask::new(Tensor::new(
                        vec![roi.height, roi.width],
                        slice(&payload, e.mask, roi.cells(), path)?,
                    )?)?;
                    let [u, v, w, hh] = e.bbox;
                    Ok(SyntheticDetection {
                        detection: Detection {
                            frame: t,
                            bbox: BBox::new(u, v, w, hh)?,
                            appearance,
                            mask,
                        },
                        identity: e.identity,
                        visible: e.visible,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let truth = h
        .truth
        .iter()
        .map(|f| f.iter().map(|b| BBox::new(b[0], b[1], b[2], b[3])).collect())
        .collect::<Result<_>>()?;
    Ok(LabeledVideo {
        config: h.scenario,
        frames,
        truth,
    })
}

pub fn save_video(video: &LabeledVideo, path: &Path) -> Result<()> {
    write_bytes(path, &video_to_bytes(video)?)
}

pub fn load_video(path: &Path) -> Result<LabeledVideo> {
    video_from_bytes(&read_bytes(path)?, path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestDetection {
    pub identity: u32,
    pub visible: bool,
    pub bbox: [f64; 4],
}

/// Human-readable summary of a video without feature tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoManifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub frames: Vec<Vec<ManifestDetection>>,
}

impl VideoManifest {
    pub fn of(video: &LabeledVideo) -> Self {
        VideoManifest {
            format: "dst-track-video-manifest".into(),
            version: FORMAT_VERSION,
            seed: video.config.seed,
            scenario: video.config.clone(),
            frames: video
                .frames
                .iter()
                .map(|f| {
                    f.iter()
                        .map(|d| ManifestDetection {
                            identity: d.identity,
                            visible: d.visible,
                            bbox: bbox_array(&d.detection.bbox),
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

/// One line per box: `frame,id,u,v,w,h,score` with 1-based frames.
pub fn tracks_to_mot(out: &TrackOutput) -> String {
    let mut s = String::new();
    for r in out.records() {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.frame + 1,
            r.id,
            r.bbox.u,
            r.bbox.v,
            r.bbox.w,
            r.bbox.h,
            r.score
        ));
    }
    s
}

pub fn tracks_from_mot(text: &str, path: &Path) -> Result<TrackOutput> {
    let mut records = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::format(path, format!("line {}: {what}", n + 1));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(bad(&format!("expected 7 fields, got {}", fields.len())));
        }
        let frame: usize = fields[0].parse().map_err(|_| bad("frame"))?;
        if frame == 0 {
            return Err(bad("frames are 1-based"));
        }
        let id: u64 = fields[1].parse().map_err(|_| bad("id"))?;
        let nums: Vec<f64> = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad("number")))
            .collect::<Result<_>>()?;
        records.push(TrackRecord {
            frame: frame - 1,
            id,
            bbox: BBox::new(nums[0], nums[1], nums[2], nums[3]).map_err(|e| bad(&e.to_string()))?,
            score: nums[4],
        });
    }
    TrackOutput::new(records)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackEntry {
    pub id: u64,
    pub frames: Vec<usize>,
    pub boxes: Vec<[f64; 4]>,
    pub scores: Vec<f64>,
}

/// Structured track document: one entry per track, records ordered by frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackDocument {
    pub format: String,
    pub version: u32,
    pub tracks: Vec<TrackEntry>,
}

impl TrackDocument {
    pub fn of(out: &TrackOutput) -> Self {
        TrackDocument {
            format: "dst-track-tracks".into(),
            version: FORMAT_VERSION,
            tracks: out
                .ids()
                .into_iter()
                .map(|id| {
                    let recs = out.track(id);
                    TrackEntry {
                        id,
                        frames: recs.iter().map(|r| r.frame).collect(),
                        boxes: recs.iter().map(|r| bbox_array(&r.bbox)).collect(),
                        scores: recs.iter().map(|r| r.score).collect(),
                    }
                })
                .collect(),
        }
    }

    pub fn into_output(self, path: &Path) -> Result<TrackOutput> {
        let mut records = Vec::new();
        for t in self.tracks {
            if t.frames.len() != t.boxes.len() || t.frames.len() != t.scores.len() {
                return Err(Error::format(path, format!("track {} has ragged arrays", t.id)));
            }
            for ((f, b), s) in t.frames.iter().zip(&t.boxes).zip(&t.scores) {
                records.push(TrackRecord {
                    frame: *f,
                    id: t.id,
                    bbox: BBox::new(b[0], b[1], b[2], b[3])?,
                    score: *s,
                });
            }
        }
        TrackOutput::new(records)
    }
}

/// Reads tracks from MOT text, track JSON, or (for ground truth) a video container.
pub fn load_tracks(path: &Path) -> Result<TrackOutput> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(VIDEO_MAGIC) {
        return Ok(crate::metrics::ground_truth_tracks(&video_from_bytes(&bytes, path)?));
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "not UTF-8 text"))?;
    if text.trim_start().starts_with('{') {
        let doc: TrackDocument = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        doc.into_output(path)
    } else {
        tracks_from_mot(&text, path)
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::EncodingMode;
    use crate::encoding::RoiSpec;
    use crate::simulator::{generate, ScenarioKind};
    use proptest::prelude::*;

    fn small_scenario() -> ScenarioConfig {
        ScenarioConfig {
            kind: ScenarioKind::Occlusion,
            channels: 4,
            frames: 12,
            roi: RoiSpec::new(3, 3).unwrap(),
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn video_round_trip_is_exact() {
        let v = generate(&small_scenario()).unwrap();
        let bytes = video_to_bytes(&v).unwrap();
        let back = video_from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, v);
        assert_eq!(video_to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let stack = EmbeddingStack::new(ModelConfig {
            channels: 4,
            roi: RoiSpec::new(3, 3).unwrap(),
            embed_dim: 6,
            encoding: EncodingMode::Classic,
            ..Default::default()
        })
        .unwrap();
        let ck = Checkpoint {
            stack,
            optimizer: OptimizerConfig::default(),
            iteration: 17,
        };
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(Checkpoint::from_bytes(&bytes, Path::new("mem")).unwrap(), ck);
    }

    #[test]
    fn corrupt_containers_rejected() {
        let v = generate(&small_scenario()).unwrap();
        let bytes = video_to_bytes(&v).unwrap();
        let p = Path::new("mem");
        assert!(matches!(video_from_bytes(&bytes[..bytes.len() - 3], p), Err(Error::Format { .. })));
        assert!(matches!(Checkpoint::from_bytes(&bytes, p), Err(Error::Format { .. })));
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 9;
        assert!(video_from_bytes(&wrong_version, p).is_err());
    }

    #[test]
    fn mot_lines_are_one_based() {
        let out = TrackOutput::new(vec![TrackRecord {
            frame: 0,
            id: 4,
            bbox: BBox::new(1.5, 2.0, 3.0, 4.25).unwrap(),
            score: 0.5,
        }])
        .unwrap();
        assert_eq!(tracks_to_mot(&out), "1,4,1.5,2,3,4.25,0.5\n");
        assert!(tracks_from_mot("0,1,1,1,1,1,1\n", Path::new("x")).is_err());
        assert!(tracks_from_mot("1,1,1,1,1\n", Path::new("x")).is_err());
    }

    proptest! {
        #[test]
        fn track_formats_round_trip(raw in prop::collection::vec((0usize..20, 1u64..6, 0.0f64..100.0, 0.0f64..100.0, 0.5f64..30.0, 0.0f64..1.0), 0..30)) {
            let mut seen = std::collections::HashSet::new();
            let records: Vec<TrackRecord> = raw
                .into_iter()
                .filter(|r| seen.insert((r.0, r.1)))
                .map(|(frame, id, u, v, w, s)| TrackRecord { frame, id, bbox: BBox::new(u, v, w, w * 1.5).unwrap(), score: s })
                .collect();
            let out = TrackOutput::new(records).unwrap();
            let p = Path::new("mem");
            prop_assert_eq!(tracks_from_mot(&tracks_to_mot(&out), p).unwrap(), out.clone());
            let json = serde_json::to_string(&TrackDocument::of(&out)).unwrap();
            let doc: TrackDocument = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(doc.into_output(p).unwrap(), out);
        }
    }
}
