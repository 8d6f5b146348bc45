//! Calibrate under a graded loss table instead of 0-1 loss.

use pacroute::calibrate::{select_threshold, PacConfig};
use pacroute::corpus;
use pacroute::risk::{disagreement_region, exact_miscoverage, LossSpec};
use pacroute::world::sample_calibration;

fn main() -> pacroute::Result<()> {
    let w = corpus::staircase();
    // Off by one label costs 0.4, off by two costs 1.
    let table = vec![
        vec![0.0, 0.4, 1.0],
        vec![0.4, 0.0, 0.4],
        vec![1.0, 0.4, 0.0],
    ];
    for eps in [0.0, 0.5] {
        let loss = LossSpec::table(table.clone(), eps)?;
        let cfg = PacConfig::new(eps, 0.1)?;
        let d = sample_calibration(&w, 500, 9)?;
        let out = select_threshold(&d, &w, &loss, &cfg)?;
        println!(
            "epsilon {eps}: exceedance mass {:.3}, tau_hat {:?}, miscoverage {:.3}",
            disagreement_region(&w, &loss).mass,
            out.tau_hat,
            exact_miscoverage(&w, &loss, out.tau_hat)
        );
    }
    Ok(())
}
