//! Build a world, check it, sample a calibration set from it.

use pacroute::corpus;
use pacroute::risk::{disagreement_region, LossSpec};
use pacroute::world::{interval_mass, sample_calibration, validate_world, Cell, CellWorld};

fn main() -> pacroute::Result<()> {
    let w = corpus::w1();
    println!(
        "W1 has {} cells, mass of [0.5, 0.9) = {:.3}",
        w.len(),
        interval_mass(&w, 0.5, 0.9)?
    );

    let region = disagreement_region(&w, &LossSpec::zero_one(0.0)?);
    println!(
        "fast model disagrees on cells {:?} (mass {})",
        region.cells, region.mass
    );

    let d = sample_calibration(&w, 10, 42)?;
    for s in &d.samples {
        println!("  x = {:.4}  y = {}", s.x, s.y.0);
    }

    // Masses that do not sum to one are reported, not silently fixed.
    let bad = CellWorld::unchecked(
        2,
        vec![
            Cell::new(0.0, 0.5, 0.5, 0, 0, 0.1),
            Cell::new(0.5, 1.0, 0.4, 1, 0, 0.9),
        ],
    );
    for v in validate_world(&bad) {
        println!("violation: {}", v.message);
    }
    Ok(())
}
