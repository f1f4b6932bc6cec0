//! Association metrics on a hand-made prediction with one identity swap.
//!
//! `cargo run --example evaluate_metrics`

use dst_track::encoding::BBox;
use dst_track::metrics::counts;
use dst_track::tracker::{TrackOutput, TrackRecord};

fn rec(frame: usize, id: u64, u: f64) -> TrackRecord {
    TrackRecord {
        frame,
        id,
        bbox: BBox::new(u, 10.0, 8.0, 16.0).unwrap(),
        score: 1.0,
    }
}

fn main() -> dst_track::Result<()> {
    // two targets over four frames; the prediction swaps them after frame 1
    let gt = TrackOutput::new((0..4).flat_map(|t| [rec(t, 1, 5.0 * t as f64), rec(t, 2, 60.0 - 5.0 * t as f64)]).collect())?;
    let pred = TrackOutput::new(
        (0..4)
            .flat_map(|t| {
                let (a, b) = if t < 2 { (1, 2) } else { (2, 1) };
                [rec(t, a, 5.0 * t as f64), rec(t, b, 60.0 - 5.0 * t as f64)]
            })
            .collect(),
    )?;
    let c = counts(&pred, &gt);
    println!("pairs {}, preserved {}", c.pairs, c.preserved_pairs);
    println!("association accuracy {:.3}", c.association_accuracy());
    println!("id switches {}", c.id_switches);
    println!("idf1 {:.3}", c.idf1());
    Ok(())
}
