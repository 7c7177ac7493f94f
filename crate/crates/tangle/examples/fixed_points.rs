//! Fixed points by winding number, with multipliers and stability type.

use tangle::periodic_orbits::{feasible_windings, find_fixed_points, find_periodic_orbits, OrbitKind};
use tangle::{ForcingProfile, MapParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = MapParams::reference(2.0);
    let range = feasible_windings(&p);
    let lo = *range.start();
    for r in find_fixed_points(&p, lo..=lo + 2)? {
        println!(
            "m = {:>2} θ = {:.6} z = {:.6}  {:?}  |λ| = ({:.3e}, {:.3e})",
            r.winding_m,
            r.point.theta,
            r.point.z,
            r.kind,
            r.multipliers[0].norm(),
            r.multipliers[1].norm()
        );
    }

    // period-2 sink once a third harmonic is added to the forcing
    let f = ForcingProfile::from_harmonics(&[(1, 1.0), (3, 1.0)], &[])?;
    let q = MapParams::new(1.0, 0.005, 1.0, 2.0, std::f64::consts::SQRT_2)?.with_forcing(f)?;
    let orbits = find_periodic_orbits(&q, 2, 400)?;
    println!("{} period-2 orbits", orbits.len());
    for o in orbits.iter().filter(|o| o.kind == OrbitKind::Sink) {
        println!("sink through ({:.4}, {:.4}) and ({:.4}, {:.4})", o.points[0].theta, o.points[0].z, o.points[1].theta, o.points[1].z);
    }
    Ok(())
}
