//! Horseshoe certificate at one parameter and a scan over one period of a.

use std::f64::consts::{SQRT_2, TAU};

use tangle::horseshoe_certifier::{certify_horseshoe, scan_parameter, ConeSpec, Sampling};
use tangle::MapParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = MapParams::new(2.76, 1e-4, 3.0, 200.0, SQRT_2)?.with_k(1e-6)?;
    let rep = certify_horseshoe(&p, ConeSpec::default(), Sampling::default())?;
    println!(
        "a = {}: certified {} (fold margin {:.3e}, cone margins {:.3e} / {:.3e})",
        rep.param_a, rep.certified, rep.fold_margin, rep.cone_h_margin, rep.cone_v_margin
    );

    let sampling = Sampling { v_theta: 400, v_z: 40, vf: 2500 };
    let scan = scan_parameter(&p, (0.0, TAU), 61, ConeSpec::default(), sampling)?;
    for iv in &scan.intervals {
        println!("[{:.3}, {:.3}] certified {}", iv.a_start, iv.a_end, iv.certified);
    }
    Ok(())
}
