//! Map constants derived from the forced folium flow and a direct check of the
//! predicted return map.

use std::f64::consts::SQRT_2;

use tangle::melnikov_bridge::{
    compute_homoclinic_orbit, derive_map_params, melnikov_integrals, validate_return_map, OdeSystem,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut sys = OdeSystem::folium(SQRT_2, 1.0);
    let orbit = compute_homoclinic_orbit(&sys, 1e-9)?;
    let k = melnikov_integrals(&orbit, &sys)?;
    println!("A = {:.6}  C = {:.6}  S = {:.3e}  L± = {:.4} / {:.4}", k.a_val, k.c_val, k.s_val, k.l_plus, k.l_minus);
    let (params, notes) = derive_map_params(&sys, &k)?;
    println!("a = {:.6} b = {:.4e} c = {:.4} d = {:.4} γ = {:.6}", params.a, params.b, params.c, params.d, params.gamma);
    for n in notes {
        println!("note: {n}");
    }

    sys.mu = 1e-5;
    let v = validate_return_map(&sys, &orbit, &k, 50, 10)?;
    println!("μ = {:e}: agreement {:.3} over {} samples", v.mu, v.agreement, v.samples.len());
    Ok(())
}
