//! Compare the calibrated router with the always-defer router on an audit grid.

use pacroute::calibrate::{Algorithm, PacConfig};
use pacroute::corpus;
use pacroute::risk::LossSpec;
use pacroute::simulate::{default_audit_points, triviality_audit, Experiment, McConfig};

fn main() -> pacroute::Result<()> {
    let loss = LossSpec::zero_one(0.0)?;
    let cfg = PacConfig::new(0.0, 0.1)?;
    for (name, w) in corpus::all() {
        let mc = McConfig::new(500, 3).with_points(default_audit_points(&w));
        for alg in [Algorithm::Calibrated, Algorithm::Trivial] {
            let exp = Experiment::new(&w, &loss, &cfg, 200).with_algorithm(alg);
            let r = triviality_audit(&exp, &mc)?;
            println!(
                "{name:>10} {alg:?}: max P(fast) {:.3}, trivial {}, mean deferral {:.3}",
                r.max_fast_prob, r.trivial_verdict, r.mean_deferral_mass
            );
        }
    }
    Ok(())
}
