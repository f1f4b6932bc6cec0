//! With `distinctness = 0` the two identities of a crossing scenario cannot be
//! told apart from appearance.

use dst_track::simulator::{generate, ScenarioConfig, ScenarioKind, SyntheticDetection};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Two-sided Welch t-test p-value.
fn welch_p(a: &[f64], b: &[f64]) -> f64 {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let se2 = va / na + vb / nb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    2.0 * (1.0 - StudentsT::new(0.0, 1.0, df).unwrap().cdf(t.abs()))
}

/// RMS appearance difference over the RoI cells unoccluded in every
/// detection of `shared`.
fn distance(a: &SyntheticDetection, b: &SyntheticDetection, shared: &[&SyntheticDetection]) -> Option<f64> {
    let (pa, pb) = (&a.detection.appearance, &b.detection.appearance);
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..pa.height() {
        for x in 0..pa.width() {
            let cell = y * pa.width() + x;
            if shared.iter().any(|d| d.detection.mask.grid().data()[cell] < 1.0) {
                continue;
            }
            for c in 0..pa.channels() {
                sum += (pa.get(c, y, x) - pb.get(c, y, x)).powi(2);
                n += 1;
            }
        }
    }
    (n > 0).then(|| (sum / n as f64).sqrt())
}

/// Per seed: distance of identity 0 between two frames, and of identity 0
/// to identity 1 over the same frame gap. Both use the same unoccluded cells.
fn samples(distinctness: f64) -> (Vec<f64>, Vec<f64>) {
    let mut same = Vec::new();
    let mut cross = Vec::new();
    for seed in 0..100 {
        let video = generate(&ScenarioConfig {
            kind: ScenarioKind::Crossing,
            targets: 2,
            distinctness,
            channels: 8,
            frames: 8,
            seed,
            ..ScenarioConfig::default()
        })
        .unwrap();
        let find = |t: usize, id: u32| video.frames[t].iter().find(|d| d.identity == id);
        if let (Some(a0), Some(a1), Some(b1)) = (find(0, 0), find(6, 0), find(6, 1)) {
            let shared = [a0, a1, b1];
            if let (Some(s), Some(c)) = (distance(a0, a1, &shared), distance(a0, b1, &shared)) {
                same.push(s);
                cross.push(c);
            }
        }
    }
    (same, cross)
}

#[test]
fn shared_appearance_is_indistinguishable() {
    let (same, cross) = samples(0.0);
    assert!(same.len() >= 90, "only {} usable seeds", same.len());
    let p = welch_p(&same, &cross);
    assert!(p > 0.01, "identities separable at p = {p}");
}

#[test]
fn distinct_appearance_is_detected() {
    let (same, cross) = samples(1.0);
    assert!(same.len() >= 90, "only {} usable seeds", same.len());
    let p = welch_p(&same, &cross);
    assert!(p < 0.01, "distinct identities not separated, p = {p}");
}
