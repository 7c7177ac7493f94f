//! Most-contracted direction of the Jacobian product along an orbit.

use tangle::manifolds_tangency::most_contracted_direction;
use tangle::map_core::{apply, jacobian};
use tangle::survival_sets::attractor_sample;
use tangle::{MapParams, Step};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = MapParams::reference(1.5);
    let sample = attractor_sample(&p, 200, 500, 1)?;
    let mut q = *sample.points.first().ok_or("every seed escaped")?;
    let start = q;
    let mut factors = Vec::new();
    for n in 1..=10 {
        factors.push(jacobian(&p, q)?);
        let d = most_contracted_direction(&factors)?;
        println!(
            "n = {n:>2}: e = ({:+.12}, {:+.12}), ln σ = ({:.3}, {:.3})",
            d.direction[0], d.direction[1], d.log_singular_values.0, d.log_singular_values.1
        );
        q = match apply(&p, q)? {
            Step::Image(r) => r,
            Step::Escaped => break,
        };
    }
    println!("base point ({:.6}, {:.6})", start.theta, start.z);
    Ok(())
}
