//! Fit a threshold by fixed-sequence testing and inspect each test.

use pacroute::calibrate::{select_threshold, PacConfig};
use pacroute::corpus;
use pacroute::risk::{exact_deferral_mass, exact_miscoverage, LossSpec};
use pacroute::world::sample_calibration;

fn main() -> pacroute::Result<()> {
    let w = corpus::w1();
    let loss = LossSpec::zero_one(0.0)?;
    for n in [10, 100, 1000] {
        let cfg = PacConfig::new(0.0, 0.1)?.with_delta(0.05)?;
        let d = sample_calibration(&w, n, 7)?;
        let out = select_threshold(&d, &w, &loss, &cfg)?;
        println!("n = {n}: tau_hat = {:?}", out.tau_hat);
        for t in &out.tested {
            println!(
                "  tau {:.3}: b = {}, p = {:.3e}, rejected {}",
                t.tau, t.exceedance_count, t.p_value, t.rejected
            );
        }
        println!(
            "  miscoverage {:.3}, deferral mass {:.3}",
            exact_miscoverage(&w, &loss, out.tau_hat),
            exact_deferral_mass(&w, out.tau_hat)
        );
    }
    Ok(())
}
