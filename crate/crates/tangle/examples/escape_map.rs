//! Escape-time grids in the three regimes of the reference family.

use tangle::survival_sets::escape_time_grid;
use tangle::MapParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for a in [0.2, 1.5, 2.0] {
        let grid = escape_time_grid(&MapParams::reference(a), 15, (400, 400))?;
        println!("a = {a}: {} of {} cells survive 15 iterations", grid.survivors(), grid.escape_iter.len());
    }
    Ok(())
}
