//! Local relabelling attacks on a world.
//!
//! Around a point `x*` we pick a radius whose ball carries input mass
//! `delta < eta / (2n)`, then replace the expert's answer inside the ball
//! with a label the fast model gets wrong. The input marginal is untouched.
//! A single `(X, Y)` draw from the two worlds differs in total variation by
//! exactly the relabelled mass, and `n` draws by at most `2 n delta < eta`,
//! so no procedure that only sees `n` calibration points can tell the two
//! apart with probability better than `eta`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::{LossKind, LossSpec};
use crate::world::{cell_at, interval_mass, split_at, CellWorld, Label};

/// Starting radius of the halving search.
pub const INITIAL_RADIUS: f64 = 0.1;

const MAX_HALVINGS: usize = 1100;
const MASS_MATCH_TOLERANCE: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub x_star: f64,
    pub eta: f64,
    pub n: usize,
    pub radius: f64,
    pub ball_mass: f64,
    pub adversarial_label: Label,
}

impl PerturbationSpec {
    /// The ball `(x* - r, x* + r)` clipped to `[0, 1]`.
    pub fn ball(&self) -> (f64, f64) {
        ball(self.x_star, self.radius)
    }

    pub fn mass_budget(&self) -> f64 {
        self.eta / (2.0 * self.n as f64)
    }
}

fn ball(x_star: f64, radius: f64) -> (f64, f64) {
    ((x_star - radius).max(0.0), (x_star + radius).min(1.0))
}

fn check_inputs(x_star: f64, eta: f64, n: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&x_star) {
        return Err(Error::Domain(format!("x* = {x_star} lies outside [0, 1]")));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::Domain(format!("eta = {eta} must be positive")));
    }
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    Ok(())
}

/// Halves the radius from [`INITIAL_RADIUS`] until the ball around `x_star`
/// carries mass strictly below `eta / (2n)`. Returns `(radius, ball_mass)`.
pub fn find_radius(w: &CellWorld, x_star: f64, eta: f64, n: usize) -> Result<(f64, f64)> {
    check_inputs(x_star, eta, n)?;
    let budget = eta / (2.0 * n as f64);
    let mut r = INITIAL_RADIUS;
    for _ in 0..MAX_HALVINGS {
        let m = interval_mass(w, x_star - r, x_star + r)?;
        if m < budget {
            return Ok((r, m));
        }
        r *= 0.5;
        if r == 0.0 {
            break;
        }
    }
    Err(Error::Input(format!(
        "no radius around {x_star} reaches mass below {budget}"
    )))
}

/// A label the fast model at `x_star` loses more than epsilon against.
///
/// Under 0-1 loss this is `(fast + 1) mod alphabet_size`; under a table
/// loss it is the smallest qualifying label.
pub fn adversarial_label(w: &CellWorld, loss: &LossSpec, x_star: f64) -> Result<Label> {
    let fast = cell_at(w, x_star)?.fast_label;
    let k = w.alphabet_size();
    match loss.kind {
        LossKind::ZeroOne => Ok(Label((fast.0 + 1) % k)),
        LossKind::Table => (0..k)
            .map(Label)
            .find(|&y| loss.exceeds(fast, y))
            .ok_or_else(|| {
                Error::Precondition(format!(
                    "no label has loss above {} against fast label {fast}",
                    loss.epsilon
                ))
            }),
    }
}

/// Solves for the radius and picks the adversarial label.
pub fn build_perturbation(
    w: &CellWorld,
    loss: &LossSpec,
    x_star: f64,
    eta: f64,
    n: usize,
) -> Result<PerturbationSpec> {
    let (radius, ball_mass) = find_radius(w, x_star, eta, n)?;
    Ok(PerturbationSpec {
        x_star,
        eta,
        n,
        radius,
        ball_mass,
        adversarial_label: adversarial_label(w, loss, x_star)?,
    })
}

/// The perturbed world: same cells and masses, expert label replaced by the
/// adversarial label on every cell inside the ball.
pub fn perturb(w: &CellWorld, loss: &LossSpec, spec: &PerturbationSpec) -> Result<CellWorld> {
    check_inputs(spec.x_star, spec.eta, spec.n)?;
    if !(spec.radius.is_finite() && spec.radius > 0.0) {
        return Err(Error::Input(format!(
            "radius {} must be positive",
            spec.radius
        )));
    }
    let m = interval_mass(w, spec.x_star - spec.radius, spec.x_star + spec.radius)?;
    if (m - spec.ball_mass).abs() > MASS_MATCH_TOLERANCE {
        return Err(Error::Input(format!(
            "ball mass {} does not match recomputed {m}",
            spec.ball_mass
        )));
    }
    // Also rejects NaN.
    if m.partial_cmp(&spec.mass_budget()) != Some(std::cmp::Ordering::Less) {
        return Err(Error::Input(format!(
            "ball mass {m} is not below eta / (2n) = {}",
            spec.mass_budget()
        )));
    }
    if spec.adversarial_label.0 >= w.alphabet_size() {
        return Err(Error::Input(format!(
            "adversarial label {} outside alphabet of size {}",
            spec.adversarial_label,
            w.alphabet_size()
        )));
    }
    let fast = cell_at(w, spec.x_star)?.fast_label;
    if !loss.exceeds(fast, spec.adversarial_label) {
        return Err(Error::Input(format!(
            "label {} does not push the loss at x* above epsilon",
            spec.adversarial_label
        )));
    }

    let (lo, hi) = spec.ball();
    let split = split_at(w, &[lo, hi]);
    let cells = split
        .cells()
        .iter()
        .map(|c| {
            let mut c = *c;
            if c.left >= lo && c.right <= hi {
                c.expert_label = spec.adversarial_label;
            }
            c
        })
        .collect();
    Ok(split.with_cells(cells))
}

/// Exact total variation between one `(X, Y)` draw from each world.
///
/// Both worlds are refined to their common partition first; their input
/// marginals must then agree cell by cell. Labels are deterministic, so the
/// distance is the mass of the cells where the expert labels differ.
pub fn tv_single(w: &CellWorld, w2: &CellWorld) -> Result<f64> {
    let mut pts: Vec<f64> = w
        .cells()
        .iter()
        .chain(w2.cells())
        .flat_map(|c| [c.left, c.right])
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let a = split_at(w, &pts);
    let b = split_at(w2, &pts);
    if a.len() != b.len() {
        return Err(Error::Input(
            "worlds do not share a common partition".into(),
        ));
    }
    let mut tv = 0.0;
    for (i, (ca, cb)) in a.cells().iter().zip(b.cells()).enumerate() {
        if ca.left != cb.left || ca.right != cb.right {
            return Err(Error::Input(format!(
                "cell {i} boundaries differ after refinement"
            )));
        }
        if (ca.mass - cb.mass).abs() > 1e-12 {
            return Err(Error::Input(format!(
                "input marginals differ on cell {i}: {} vs {}",
                ca.mass, cb.mass
            )));
        }
        if ca.expert_label != cb.expert_label {
            tv += ca.mass;
        }
    }
    Ok(tv)
}

/// `min(1, 2 n delta)`, the product bound used in the indistinguishability argument.
pub fn tv_product_bound(ball_mass: f64, n: usize) -> f64 {
    (2.0 * n as f64 * ball_mass).clamp(0.0, 1.0)
}

/// `min(1, n delta)` from the coupling that redraws only the in-ball points.
pub fn tv_coupling_bound(ball_mass: f64, n: usize) -> f64 {
    (n as f64 * ball_mass).clamp(0.0, 1.0)
}

/// Exact `TV(P^n, P'^n) = 1 - (1 - d)^n` when single draws differ by `d`
/// on a region where the two conditionals have disjoint support.
pub fn tv_product_exact(tv_single: f64, n: usize) -> f64 {
    -(n as f64 * (-tv_single).ln_1p()).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::risk::{disagreement_region, pointwise_risk, RouterThreshold};
    use crate::world::{validate_world, Cell};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero_one() -> LossSpec {
        LossSpec::zero_one(0.0).unwrap()
    }

    #[test]
    fn radius_on_uniform_world() {
        let u = CellWorld::uniform(2, 0, 0, 0.0).unwrap();
        let (r, m) = find_radius(&u, 0.5, 0.1, 10).unwrap();
        assert!(r < 0.0025);
        assert!((m - 2.0 * r).abs() < 1e-16);
        assert!(m < 0.005);
    }

    #[test]
    fn radius_in_massless_band() {
        let w = CellWorld::new(
            2,
            vec![
                Cell::new(0.0, 0.4, 0.5, 0, 0, 0.1),
                Cell::new(0.4, 0.6, 0.0, 0, 0, 0.1),
                Cell::new(0.6, 1.0, 0.5, 0, 0, 0.1),
            ],
        )
        .unwrap();
        let (r, m) = find_radius(&w, 0.5, 0.01, 100).unwrap();
        assert_eq!(r, INITIAL_RADIUS);
        assert_eq!(m, 0.0);
    }

    #[test]
    fn radius_on_w1() {
        let w = corpus::w1();
        let (r, m) = find_radius(&w, 0.4, 0.01, 100).unwrap();
        assert!(2.0 * r < 5e-5);
        assert!(m < 5e-5);
        assert!(find_radius(&w, 1.2, 0.01, 100).is_err());
        assert!(find_radius(&w, 0.4, 0.0, 100).is_err());
        assert!(find_radius(&w, 0.4, 0.01, 0).is_err());
    }

    #[test]
    fn perturb_relabels_only_the_ball() {
        let w = corpus::w1();
        let l = zero_one();
        let spec = build_perturbation(&w, &l, 0.4, 0.01, 100).unwrap();
        assert_eq!(spec.adversarial_label, Label(1));
        let p = perturb(&w, &l, &spec).unwrap();
        assert!(validate_world(&p).is_empty());

        assert_eq!(cell_at(&p, 0.4).unwrap().expert_label, Label(1));
        let tau = RouterThreshold::Tau(1.0);
        assert_eq!(pointwise_risk(&w, &l, tau, 0.4).unwrap(), 0.0);
        assert_eq!(pointwise_risk(&p, &l, tau, 0.4).unwrap(), 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (a, b): (f64, f64) = (rng.gen(), rng.gen());
            let (a, b) = (a.min(b), a.max(b));
            let d = interval_mass(&w, a, b).unwrap() - interval_mass(&p, a, b).unwrap();
            assert!(d.abs() <= 1e-12);
        }
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            if (x - 0.4).abs() > spec.radius {
                let (a, b) = (cell_at(&w, x).unwrap(), cell_at(&p, x).unwrap());
                assert_eq!(
                    (a.expert_label, a.fast_label, a.score),
                    (b.expert_label, b.fast_label, b.score)
                );
            }
        }
    }

    #[test]
    fn tv_examples() {
        let w = corpus::w1();
        assert_eq!(tv_single(&w, &w).unwrap(), 0.0);
        let mut cells = w.cells().to_vec();
        cells[1].expert_label = Label(0);
        let relabeled = CellWorld::new(2, cells).unwrap();
        assert!((tv_single(&w, &relabeled).unwrap() - 0.2).abs() < 1e-15);

        let l = zero_one();
        let spec = build_perturbation(&w, &l, 0.4, 0.01, 100).unwrap();
        let p = perturb(&w, &l, &spec).unwrap();
        let tv = tv_single(&w, &p).unwrap();
        assert!((tv - spec.ball_mass).abs() <= 1e-15);
        assert!(tv_product_bound(tv, 100) < 0.01);

        let other = CellWorld::new(
            2,
            vec![
                Cell::new(0.0, 0.5, 0.9, 0, 0, 0.1),
                Cell::new(0.5, 1.0, 0.1, 0, 0, 0.1),
            ],
        )
        .unwrap();
        assert!(matches!(tv_single(&w, &other), Err(Error::Input(_))));
    }

    #[test]
    fn product_bounds() {
        assert!((tv_product_bound(0.002, 10) - 0.04).abs() < 1e-15);
        assert_eq!(tv_product_bound(0.0, 57), 0.0);
        assert_eq!(tv_product_bound(0.5, 2), 1.0);
        assert!((tv_coupling_bound(0.002, 10) - 0.02).abs() < 1e-15);
        let exact = tv_product_exact(0.002, 10);
        assert!((exact - (1.0 - 0.998f64.powi(10))).abs() < 1e-15);
        assert!(exact <= tv_coupling_bound(0.002, 10));
    }

    #[test]
    fn perturb_rejects_inconsistent_specs() {
        let w = corpus::w1();
        let l = zero_one();
        let spec = build_perturbation(&w, &l, 0.4, 0.01, 100).unwrap();
        let bad_mass = PerturbationSpec {
            ball_mass: spec.ball_mass * 2.0,
            ..spec.clone()
        };
        assert!(matches!(perturb(&w, &l, &bad_mass), Err(Error::Input(_))));
        let big = PerturbationSpec {
            radius: 0.1,
            ball_mass: 0.2,
            ..spec.clone()
        };
        assert!(matches!(perturb(&w, &l, &big), Err(Error::Input(_))));
        let harmless = PerturbationSpec {
            adversarial_label: Label(0),
            ..spec.clone()
        };
        assert!(matches!(perturb(&w, &l, &harmless), Err(Error::Input(_))));
    }

    #[test]
    fn ball_truncates_at_edges() {
        let w = corpus::w1();
        let spec = build_perturbation(&w, &zero_one(), 0.0, 0.01, 100).unwrap();
        let p = perturb(&w, &zero_one(), &spec).unwrap();
        assert_eq!(cell_at(&p, 0.0).unwrap().expert_label, Label(1));
        assert!((tv_single(&w, &p).unwrap() - spec.ball_mass).abs() <= 1e-15);
    }

    #[test]
    fn table_loss_label_choice() {
        let w = corpus::staircase();
        let t = LossSpec::table(
            vec![
                vec![0.0, 0.1, 0.9],
                vec![0.1, 0.0, 0.1],
                vec![0.9, 0.1, 0.0],
            ],
            0.5,
        )
        .unwrap();
        assert_eq!(adversarial_label(&w, &t, 0.1).unwrap(), Label(2));
        assert!(matches!(
            adversarial_label(&w, &t, 0.3),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn disagreement_gains_the_ball() {
        let w = corpus::w1();
        let l = zero_one();
        let spec = build_perturbation(&w, &l, 0.4, 0.01, 100).unwrap();
        let p = perturb(&w, &l, &spec).unwrap();
        let before = disagreement_region(&w, &l).mass;
        let after = disagreement_region(&p, &l).mass;
        assert!((after - before - spec.ball_mass).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn lemma_bounds_hold(x in 0.0f64..=1.0, eta in 1e-4f64..0.99, n in 1usize..1000, which in 0usize..4) {
            let (_, w) = corpus::all().swap_remove(which);
            let l = zero_one();
            let spec = build_perturbation(&w, &l, x, eta, n).unwrap();
            prop_assert!(spec.ball_mass < eta / (2.0 * n as f64));
            let p = perturb(&w, &l, &spec).unwrap();
            prop_assert!(validate_world(&p).is_empty());
            let (lo, hi) = spec.ball();
            prop_assert!((interval_mass(&p, lo, hi).unwrap() - spec.ball_mass).abs() < 1e-15);
            let tv = tv_single(&w, &p).unwrap();
            prop_assert!(tv <= spec.ball_mass + 1e-15);
            prop_assert!(tv_product_bound(tv, n) < eta);
            prop_assert!(l.exceeds(cell_at(&p, x).unwrap().fast_label, cell_at(&p, x).unwrap().expert_label));
        }
    }
}
