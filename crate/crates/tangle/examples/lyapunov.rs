//! Attractor sample and its Lyapunov exponent for a chaotic and a periodic regime.

use tangle::survival_sets::{attractor_sample, lyapunov_exponent};
use tangle::MapParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for a in [1.5, 2.0] {
        let p = MapParams::reference(a);
        let sample = attractor_sample(&p, 1000, 500, 500)?;
        let seed = *sample.points.last().ok_or("every seed escaped")?;
        let l = lyapunov_exponent(&p, seed, 100_000)?;
        println!(
            "a = {a}: λ = {:.4} ± {:.4}, {} distinct attractor points",
            l.exponent,
            l.std_error,
            sample.distinct_points()
        );
    }
    Ok(())
}
