//! Stable curve of a saddle and the homoclinic tangency on the d = 20 family.

use std::f64::consts::SQRT_2;

use tangle::manifolds_tangency::{find_tangency, gap_at, saddle_for, stable_curve, DEFAULT_ORDER};
use tangle::MapParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reference = MapParams::reference(2.0);
    let saddle = saddle_for(&reference, 0)?;
    let curve = stable_curve(&reference, &saddle, DEFAULT_ORDER, 0.5, 0.01)?;
    let (first, last) = (curve.points[0], curve.points[curve.points.len() - 1]);
    println!(
        "stable curve through ({:.5}, {:.5}): {} points from ({:.5}, {:.5}) to ({:.5}, {:.5})",
        saddle.point.theta,
        saddle.point.z,
        curve.points.len(),
        first.theta,
        first.z,
        last.theta,
        last.z
    );

    let base = MapParams::new(4.0, 0.005, 3.0, 20.0, SQRT_2)?.with_k(1.0)?;
    for a in [4.0, 4.25, 4.5, 4.75, 5.0] {
        println!("gap at a = {a}: {:+.4e}", gap_at(&base, 15, a)?);
    }
    let rep = find_tangency(&base, 15, (4.5, 4.55))?;
    println!(
        "tangency at a* = {:.10} near ({:.6}, {:.6}), crossing speed {:.4}",
        rep.a_star, rep.tangency_point.theta, rep.tangency_point.z, rep.crossing_speed
    );
    Ok(())
}
