// Wrap a 2-D embedding around the listener and squeeze elevations into
// a comfortable band.

use std::error::Error;

use soundscape::spatial::{self, VerticalFit};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let coords = [[-3.0, 0.5], [-1.0, -2.0], [0.0, 4.0], [1.5, 1.0], [3.0, -0.5]];
    let points = spatial::cylindrical_map(&coords, spatial::DEFAULT_RADIUS)?;
    let points = spatial::vertical_fit(&points, Some(VerticalFit { z_lo: 0.5, z_hi: 2.5 }))?;
    for p in &points {
        println!(
            "  #{} theta {:>6.3}  ({:>6.3}, {:>6.3}, {:>5.3})  r {:.3}",
            p.segment_index,
            p.theta,
            p.x,
            p.y,
            p.z,
            p.horizontal_radius()
        );
    }
    if let Some((a, b)) = spatial::seam_pair(&points) {
        println!("points {a} and {b} share the seam at theta = 0");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
