//! Dense position encodings of an image, a box and a short trajectory.
//!
//! `cargo run --example encode_positions`

use dst_track::encoding::{accumulate_trajectory, encode_image, encode_roi, BBox, ImageGeometry, RoiSpec};

fn main() -> dst_track::Result<()> {
    let geom = ImageGeometry::new(64, 48, 8)?;
    let grid = encode_image(&geom)?;
    println!("pixel (0, 0):   {:?}", rounded(&grid.pixel(0, 0)));
    println!("pixel (10, 20): {:?}", rounded(&grid.pixel(10, 20)));

    let roi = RoiSpec::new(3, 3)?;
    let boxes = [
        BBox::new(4.0, 6.0, 12.0, 20.0)?,
        BBox::new(6.0, 6.5, 12.0, 20.0)?,
        BBox::new(8.0, 7.0, 12.0, 20.0)?,
    ];
    let patches = boxes
        .iter()
        .map(|b| encode_roi(b, &geom, &roi))
        .collect::<dst_track::Result<Vec<_>>>()?;
    println!("box 0, channel 0, RoI row 0: {:?}", rounded(&patches[0].data()[..3]));

    let traj = accumulate_trajectory(&patches, &[1.0, 1.0, 1.0])?;
    println!(
        "trajectory of {} frames, channel 0 row 0: {:?}",
        traj.frame_count(),
        rounded(&traj.patch().data()[..3])
    );
    Ok(())
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}
