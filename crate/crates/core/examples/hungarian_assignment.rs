//! Minimum-cost assignment on a rectangular cost matrix.
//!
//! `cargo run --example hungarian_assignment`

use dst_track::numeric::Tensor;
use dst_track::tracker::{assignment_cost, hungarian};

fn main() -> dst_track::Result<()> {
    let cost = Tensor::new(
        vec![3, 4],
        vec![
            4.0, 1.0, 3.0, 9.0, //
            2.0, 0.0, 5.0, 8.0, //
            3.0, 2.0, 2.0, 7.0,
        ],
    )?;
    let a = hungarian(&cost)?;
    for (row, col) in a.iter().enumerate() {
        println!("row {row} -> {col:?}");
    }
    println!("total cost {}", assignment_cost(&cost, &a));
    Ok(())
}
