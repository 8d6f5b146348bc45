//! Relabel a tiny ball around x* and measure how little the sample law moves.

use pacroute::adversary::{
    build_perturbation, perturb, tv_product_bound, tv_product_exact, tv_single,
};
use pacroute::corpus;
use pacroute::risk::LossSpec;
use pacroute::world::cell_at;

fn main() -> pacroute::Result<()> {
    let w = corpus::w1();
    let loss = LossSpec::zero_one(0.0)?;
    let (x_star, n) = (0.4, 100);
    for eta in [0.1, 0.01, 1.9] {
        let spec = build_perturbation(&w, &loss, x_star, eta, n)?;
        let p = perturb(&w, &loss, &spec)?;
        let tv = tv_single(&w, &p)?;
        println!(
            "eta {eta}: r = {:.3e}, ball mass {:.3e}, n-sample TV <= {:.3e} (exact {:.3e})",
            spec.radius,
            spec.ball_mass,
            tv_product_bound(spec.ball_mass, n),
            tv_product_exact(tv, n)
        );
        let c = cell_at(&p, x_star)?;
        println!(
            "  at x*: expert {} fast {}",
            c.expert_label.0, c.fast_label.0
        );
    }
    Ok(())
}
