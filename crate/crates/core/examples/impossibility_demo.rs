//! The full argument at one point: a router with a marginal guarantee cannot
//! also control risk conditionally at x*.

use pacroute::calibrate::PacConfig;
use pacroute::corpus;
use pacroute::report::to_canonical_json;
use pacroute::risk::LossSpec;
use pacroute::simulate::{run_impossibility_demo, Experiment, McConfig};

fn main() -> pacroute::Result<()> {
    let w = corpus::w1();
    let loss = LossSpec::zero_one(0.0)?;
    let cfg = PacConfig::new(0.0, 0.1)?.with_delta(0.05)?;
    let exp = Experiment::new(&w, &loss, &cfg, 100);
    let r = run_impossibility_demo(&exp, 0.4, 0.01, &McConfig::new(1000, 20260101))?;
    println!("{}", to_canonical_json(&r.verdicts)?.trim_end());
    println!(
        "gap {:.4} vs TV bound {:.4}; deferral mass {:.3}",
        r.cross_world_gap, r.tv_bound, r.deferral_mass_mean
    );
    Ok(())
}
