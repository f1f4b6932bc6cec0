//! Association metrics against simulator ground truth.
//!
//! Predicted and ground-truth boxes correspond by exact `(frame, box)`
//! equality; the simulator hands the tracker its ground-truth boxes, so no
//! IoU matching stage is needed.

use std::collections::{BTreeMap, HashMap};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::encoding::BBox;
use crate::numeric::Tensor;
use crate::simulator::LabeledVideo;
use crate::tracker::{hungarian, TrackOutput, TrackRecord};

type BoxKey = (usize, [u64; 4]);

fn key(frame: usize, b: &BBox) -> BoxKey {
    (frame, [b.u.to_bits(), b.v.to_bits(), b.w.to_bits(), b.h.to_bits()])
}

fn lookup(pred: &TrackOutput) -> HashMap<BoxKey, u64> {
    pred.records().iter().map(|r| (key(r.frame, &r.bbox), r.id)).collect()
}

/// Ground truth in track form: the id of each box is its identity.
pub fn ground_truth_tracks(video: &LabeledVideo) -> TrackOutput {
    let records = video
        .frames
        .iter()
        .enumerate()
        .flat_map(|(t, f)| {
            f.iter().map(move |d| TrackRecord {
                frame: t,
                id: u64::from(d.identity),
                bbox: d.detection.bbox,
                score: 1.0,
            })
        })
        .collect();
    TrackOutput::new(records).expect("identities are unique per frame")
}

/// Predicted track id of every ground-truth box, grouped by identity in frame order.
fn assignments(pred: &TrackOutput, gt: &TrackOutput) -> BTreeMap<u64, Vec<Option<u64>>> {
    let map = lookup(pred);
    let mut out: BTreeMap<u64, Vec<Option<u64>>> = BTreeMap::new();
    for r in gt.records() {
        out.entry(r.id).or_default().push(map.get(&key(r.frame, &r.bbox)).copied());
    }
    out
}

/// Raw counts behind the metrics; counts of several videos add up.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCounts {
    /// Consecutive same-identity pairs in the ground truth.
    pub pairs: u64,
    /// Of those, pairs the prediction keeps in one track.
    pub preserved_pairs: u64,
    pub id_switches: u64,
    pub idtp: u64,
    pub gt_boxes: u64,
    pub pred_boxes: u64,
}

impl MetricCounts {
    pub fn add(&mut self, other: &MetricCounts) {
        self.pairs += other.pairs;
        self.preserved_pairs += other.preserved_pairs;
        self.id_switches += other.id_switches;
        self.idtp += other.idtp;
        self.gt_boxes += other.gt_boxes;
        self.pred_boxes += other.pred_boxes;
    }

    /// 1 when there are no pairs to judge.
    pub fn association_accuracy(&self) -> f64 {
        if self.pairs == 0 {
            1.0
        } else {
            self.preserved_pairs as f64 / self.pairs as f64
        }
    }

    pub fn idf1(&self) -> f64 {
        let denom = self.gt_boxes + self.pred_boxes;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.idtp as f64 / denom as f64
        }
    }
}

pub fn counts(pred: &TrackOutput, gt: &TrackOutput) -> MetricCounts {
    let per_id = assignments(pred, gt);
    let mut c = MetricCounts {
        gt_boxes: gt.len() as u64,
        pred_boxes: pred.len() as u64,
        ..Default::default()
    };
    for seq in per_id.values() {
        for w in seq.windows(2) {
            c.pairs += 1;
            if let (Some(a), Some(b)) = (w[0], w[1]) {
                if a == b {
                    c.preserved_pairs += 1;
                }
            }
        }
        let mut prev = None;
        for p in seq.iter().flatten() {
            if prev.is_some_and(|q| q != *p) {
                c.id_switches += 1;
            }
            prev = Some(*p);
        }
    }
    c.idtp = identity_true_positives(pred, gt, &per_id);
    c
}

fn identity_true_positives(pred: &TrackOutput, gt: &TrackOutput, per_id: &BTreeMap<u64, Vec<Option<u64>>>) -> u64 {
    let gt_ids = gt.ids();
    let pred_ids = pred.ids();
    if gt_ids.is_empty() || pred_ids.is_empty() {
        return 0;
    }
    let col: HashMap<u64, usize> = pred_ids.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let mut overlap = Tensor::zeros(&[gt_ids.len(), pred_ids.len()]);
    for (r, g) in gt_ids.iter().enumerate() {
        for p in per_id[g].iter().flatten() {
            let c = col[p];
            overlap.set2(r, c, overlap.at2(r, c) + 1.0);
        }
    }
    let cost = overlap.scaled(-1.0);
    let assignment = hungarian(&cost).expect("finite overlap matrix");
    assignment
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| overlap.at2(r, c) as u64))
        .sum()
}

/// Fraction of consecutive same-identity box pairs the prediction keeps in
/// one track; 1 with a warning when the ground truth has no pairs.
pub fn association_accuracy(pred: &TrackOutput, gt: &TrackOutput) -> f64 {
    let c = counts(pred, gt);
    if c.pairs == 0 {
        warn!("ground truth has no consecutive pairs; association accuracy reported as 1");
    }
    c.association_accuracy()
}

/// Number of times an identity's predicted track changes.
pub fn id_switches(pred: &TrackOutput, gt: &TrackOutput) -> u64 {
    counts(pred, gt).id_switches
}

/// `2·IDTP / (2·IDTP + IDFP + IDFN)` after optimal one-to-one matching of
/// ground-truth and predicted tracks.
pub fn idf1(pred: &TrackOutput, gt: &TrackOutput) -> f64 {
    counts(pred, gt).idf1()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub association_accuracy: f64,
    pub id_switches: u64,
    pub idf1: f64,
    pub pairs: u64,
    pub gt_boxes: u64,
    pub pred_boxes: u64,
}

impl From<&MetricCounts> for Metrics {
    fn from(c: &MetricCounts) -> Self {
        Metrics {
            association_accuracy: c.association_accuracy(),
            id_switches: c.id_switches,
            idf1: c.idf1(),
            pairs: c.pairs,
            gt_boxes: c.gt_boxes,
            pred_boxes: c.pred_boxes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub scenario: String,
    pub videos: u64,
    pub metrics: Metrics,
}

/// Pooled metrics with a per-scenario breakdown.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub overall: Metrics,
    pub scenarios: Vec<ScenarioMetrics>,
}

/// Header of [`EvalReport::csv`].
pub const EVAL_CSV_HEADER: &str = "scenario,videos,association_accuracy,id_switches,idf1,pairs,gt_boxes,pred_boxes";

impl EvalReport {
    pub const VERSION: u32 = 1;

    /// Pools `(scenario, counts)` entries, one per video.
    pub fn from_counts(entries: &[(String, MetricCounts)]) -> Self {
        let mut total = MetricCounts::default();
        let mut by: BTreeMap<&str, (u64, MetricCounts)> = BTreeMap::new();
        for (name, c) in entries {
            total.add(c);
            let slot = by.entry(name.as_str()).or_default();
            slot.0 += 1;
            slot.1.add(c);
        }
        EvalReport {
            version: Self::VERSION,
            overall: Metrics::from(&total),
            scenarios: by
                .into_iter()
                .map(|(name, (videos, c))| ScenarioMetrics {
                    scenario: name.to_string(),
                    videos,
                    metrics: Metrics::from(&c),
                })
                .collect(),
        }
    }

    /// Header line plus one row for the pooled metrics (scenario `all`) and
    /// one per scenario.
    pub fn csv(&self) -> String {
        let videos: u64 = self.scenarios.iter().map(|s| s.videos).sum();
        let mut out = format!("{EVAL_CSV_HEADER}\n");
        out.push_str(&csv_row("all", videos, &self.overall));
        for s in &self.scenarios {
            out.push_str(&csv_row(&s.scenario, s.videos, &s.metrics));
        }
        out
    }
}

fn csv_row(name: &str, videos: u64, m: &Metrics) -> String {
    format!(
        "{name},{videos},{},{},{},{},{},{}\n",
        m.association_accuracy, m.id_switches, m.idf1, m.pairs, m.gt_boxes, m.pred_boxes
    )
}
