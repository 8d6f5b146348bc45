//! Exact probabilities by enumerating every calibration set of a small instance.

use pacroute::calibrate::PacConfig;
use pacroute::corpus;
use pacroute::risk::LossSpec;
use pacroute::simulate::{enumerate_exact, mc_joint_risk, Experiment, Target};

fn main() -> pacroute::Result<()> {
    let w = corpus::w1();
    let loss = LossSpec::zero_one(0.0)?;
    let cfg = PacConfig::new(0.0, 0.5)?
        .with_delta(0.25)?
        .with_grid(vec![0.5, 0.95])?;
    let exp = Experiment::new(&w, &loss, &cfg, 6);

    let joint = enumerate_exact(&exp, Target::Joint)?;
    println!(
        "P(miscoverage) = {:.7} over {} count vectors ({} ordered sets)",
        joint.probability, joint.count_vectors, joint.assignments
    );
    for x in [0.2, 0.9] {
        println!(
            "P(g({x}) = fast) = {:.7}",
            enumerate_exact(&exp, Target::Point(x))?.probability
        );
    }
    let mc = mc_joint_risk(&exp, 50_000, 1)?;
    println!("Monte Carlo: {:.5} +- {:.5}", mc.estimate, mc.std_err);
    Ok(())
}
