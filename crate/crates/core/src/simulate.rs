//! Monte-Carlo and exact estimates of the routing guarantees.
//!
//! Every probability here is over the draw of the calibration set (and, for
//! the joint quantity, a fresh test input). Replication `m` draws from a
//! generator seeded with [`replication_seed`]`(master_seed, stream, m)`, and
//! results are combined in replication order, so estimates do not depend on
//! how many threads run the replications.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    build_perturbation, perturb, tv_coupling_bound, tv_product_bound, tv_product_exact, tv_single,
    PerturbationSpec,
};
use crate::calibrate::{Algorithm, PacConfig};
use crate::error::{Error, Result};
use crate::risk::{
    exact_deferral_mass, exact_miscoverage, pointwise_risk, route, LossSpec, Route, RouterThreshold,
};
use crate::world::{cell_at, CalibrationSet, CellWorld, Sample, WorldSampler};

/// Largest `cells^n` that [`enumerate_exact`] will walk.
pub const ENUMERATION_BUDGET: u64 = 10_000_000;

/// Verdict margin in standard errors.
pub const SIGMA_MARGIN: f64 = 3.0;

const STREAM_BASE: u64 = 0;
const STREAM_PERTURBED: u64 = 1;
const STREAM_JOINT: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub replications: usize,
    pub master_seed: u64,
    /// Points at which conditional probabilities are estimated. Empty means
    /// [`default_audit_points`] for audits and `x*` alone for the demo.
    #[serde(default)]
    pub audit_points: Vec<f64>,
}

impl McConfig {
    pub fn new(replications: usize, master_seed: u64) -> Self {
        McConfig {
            replications,
            master_seed,
            audit_points: Vec::new(),
        }
    }

    pub fn with_points(mut self, points: Vec<f64>) -> Self {
        self.audit_points = points;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if let Some(x) = self.audit_points.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Config(format!(
                "audit point {x} lies outside [0, 1]"
            )));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `index` in `stream`:
/// `splitmix64(splitmix64(master ^ splitmix64(stream)) ^ index)`.
pub fn replication_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream)) ^ index)
}

/// 21 equispaced points on `[0, 1]` plus every cell midpoint, ascending.
pub fn default_audit_points(w: &CellWorld) -> Vec<f64> {
    let mut pts: Vec<f64> = (0..=20).map(|i| f64::from(i) / 20.0).collect();
    pts.extend(w.cells().iter().map(|c| c.midpoint()));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn binomial_se(p: f64, m: usize) -> f64 {
    (p * (1.0 - p) / m as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub x: f64,
    /// Estimated `P(g(x) = 0)`.
    pub est_fast_prob: f64,
    /// Estimated `P(R(x) > epsilon)`.
    pub est_violation_prob: f64,
    /// Binomial standard error of `est_fast_prob`.
    pub std_err: f64,
    pub violation_std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub points: Vec<PointEstimate>,
    pub max_fast_prob: f64,
    pub alpha: f64,
    /// True iff every point has `est_fast_prob <= alpha + 3 std_err`.
    pub trivial_verdict: bool,
    pub points_above_alpha: Vec<f64>,
    /// Mean over replications of the exact expert-routed mass of the fitted router.
    pub mean_deferral_mass: f64,
    pub replications: usize,
    pub n: usize,
}

impl AuditReport {
    pub fn at(&self, x: f64) -> Option<&PointEstimate> {
        self.points.iter().find(|p| p.x == x)
    }
}

/// One row of a per-replication trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub replication: usize,
    pub point: f64,
    pub tau_hat: RouterThreshold,
    /// 1 when the point is routed to the expert.
    pub g: u8,
    pub risk_exceeded: bool,
}

/// Writes trace rows as CSV with header `replication,point,tau_hat,g,risk_exceeded`.
pub fn write_trace_csv<W: std::io::Write>(out: &mut W, rows: &[TraceRow]) -> std::io::Result<()> {
    writeln!(out, "replication,point,tau_hat,g,risk_exceeded")?;
    for r in rows {
        let tau = match r.tau_hat {
            RouterThreshold::Tau(t) => format!("{t:.16e}"),
            RouterThreshold::AlwaysDefer => "ALWAYS_DEFER".to_string(),
        };
        writeln!(
            out,
            "{},{:.16e},{},{},{}",
            r.replication,
            r.point,
            tau,
            r.g,
            u8::from(r.risk_exceeded)
        )?;
    }
    Ok(())
}

struct Replication {
    tau_hat: RouterThreshold,
    fast: Vec<bool>,
    violation: Vec<bool>,
}

/// Shared arguments of every Monte-Carlo routine.
#[derive(Debug, Clone, Copy)]
pub struct Experiment<'a> {
    pub world: &'a CellWorld,
    pub loss: &'a LossSpec,
    pub pac: &'a PacConfig,
    pub algorithm: Algorithm,
    /// Calibration set size.
    pub n: usize,
}

impl<'a> Experiment<'a> {
    pub fn new(world: &'a CellWorld, loss: &'a LossSpec, pac: &'a PacConfig, n: usize) -> Self {
        Experiment {
            world,
            loss,
            pac,
            algorithm: Algorithm::Calibrated,
            n,
        }
    }

    pub fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        self
    }

    pub fn on_world(mut self, world: &'a CellWorld) -> Self {
        self.world = world;
        self
    }

    fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config(
                "calibration size n must be at least 1".into(),
            ));
        }
        self.pac.validate()?;
        self.loss.validate_for(self.world)
    }

    fn fit(&self, d: &CalibrationSet) -> Result<RouterThreshold> {
        self.algorithm.fit(d, self.world, self.loss, self.pac)
    }

    fn replicate(&self, cfg: &McConfig, stream: u64, points: &[f64]) -> Result<Vec<Replication>> {
        self.check()?;
        cfg.validate()?;
        let probes = points
            .iter()
            .map(|&x| {
                let c = cell_at(self.world, x)?;
                Ok((c.score, self.loss.cell_exceeds(c)))
            })
            .collect::<Result<Vec<_>>>()?;
        let sampler = WorldSampler::new(self.world);
        (0..cfg.replications)
            .into_par_iter()
            .map(|m| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(replication_seed(cfg.master_seed, stream, m as u64));
                let d = sampler.calibration_set(&mut rng, self.n);
                let tau_hat = self.fit(&d)?;
                let fast: Vec<bool> = probes
                    .iter()
                    .map(|&(s, _)| route(tau_hat, s) == Route::Fast)
                    .collect();
                let violation = fast
                    .iter()
                    .zip(&probes)
                    .map(|(&f, &(_, bad))| f && bad)
                    .collect();
                Ok(Replication {
                    tau_hat,
                    fast,
                    violation,
                })
            })
            .collect()
    }
}

fn summarize(exp: &Experiment<'_>, points: &[f64], reps: &[Replication]) -> AuditReport {
    let m = reps.len();
    let alpha = exp.pac.alpha;
    let estimates: Vec<PointEstimate> = points
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let fast = reps.iter().filter(|r| r.fast[j]).count() as f64 / m as f64;
            let viol = reps.iter().filter(|r| r.violation[j]).count() as f64 / m as f64;
            PointEstimate {
                x,
                est_fast_prob: fast,
                est_violation_prob: viol,
                std_err: binomial_se(fast, m),
                violation_std_err: binomial_se(viol, m),
            }
        })
        .collect();
    let max_fast_prob = estimates
        .iter()
        .map(|p| p.est_fast_prob)
        .fold(0.0, f64::max);
    let trivial_verdict = estimates
        .iter()
        .all(|p| p.est_fast_prob <= alpha + SIGMA_MARGIN * p.std_err);
    let points_above_alpha = estimates
        .iter()
        .filter(|p| p.est_fast_prob > alpha)
        .map(|p| p.x)
        .collect();
    let mean_deferral_mass = reps
        .iter()
        .map(|r| exact_deferral_mass(exp.world, r.tau_hat))
        .sum::<f64>()
        / m as f64;
    AuditReport {
        points: estimates,
        max_fast_prob,
        alpha,
        trivial_verdict,
        points_above_alpha,
        mean_deferral_mass,
        replications: m,
        n: exp.n,
    }
}

fn resolve_points(w: &CellWorld, cfg: &McConfig) -> Vec<f64> {
    if cfg.audit_points.is_empty() {
        default_audit_points(w)
    } else {
        cfg.audit_points.clone()
    }
}

fn profile_stream(
    exp: &Experiment<'_>,
    cfg: &McConfig,
    stream: u64,
    points: &[f64],
) -> Result<(AuditReport, Vec<TraceRow>)> {
    let reps = exp.replicate(cfg, stream, points)?;
    let trace = reps
        .iter()
        .enumerate()
        .flat_map(|(m, r)| {
            points.iter().enumerate().map(move |(j, &x)| TraceRow {
                replication: m,
                point: x,
                tau_hat: r.tau_hat,
                g: u8::from(!r.fast[j]),
                risk_exceeded: r.violation[j],
            })
        })
        .collect();
    Ok((summarize(exp, points, &reps), trace))
}

/// Per-point estimates of `P(g(x) = 0)` and `P(R(x) > epsilon)` over fresh calibration sets.
pub fn mc_conditional_profile(exp: &Experiment<'_>, cfg: &McConfig) -> Result<AuditReport> {
    mc_conditional_profile_traced(exp, cfg).map(|(r, _)| r)
}

/// [`mc_conditional_profile`] together with its per-replication trace.
pub fn mc_conditional_profile_traced(
    exp: &Experiment<'_>,
    cfg: &McConfig,
) -> Result<(AuditReport, Vec<TraceRow>)> {
    let points = resolve_points(exp.world, cfg);
    profile_stream(exp, cfg, STREAM_BASE, &points)
}

/// Checks whether the algorithm uses the fast model with probability at
/// most alpha (up to Monte-Carlo error) at every audited point.
pub fn triviality_audit(exp: &Experiment<'_>, cfg: &McConfig) -> Result<AuditReport> {
    mc_conditional_profile(exp, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointRisk {
    pub estimate: f64,
    pub std_err: f64,
    pub replications: usize,
}

/// Estimates the joint probability over (calibration set, fresh input) that the risk exceeds epsilon.
pub fn mc_joint_risk(
    exp: &Experiment<'_>,
    replications: usize,
    master_seed: u64,
) -> Result<JointRisk> {
    joint_stream(exp, replications, master_seed, STREAM_JOINT)
}

fn joint_stream(
    exp: &Experiment<'_>,
    replications: usize,
    master_seed: u64,
    stream: u64,
) -> Result<JointRisk> {
    exp.check()?;
    if replications == 0 {
        return Err(Error::Config("replications must be at least 1".into()));
    }
    let sampler = WorldSampler::new(exp.world);
    let hits: Vec<bool> = (0..replications)
        .into_par_iter()
        .map(|m| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(replication_seed(master_seed, stream, m as u64));
            let d = sampler.calibration_set(&mut rng, exp.n);
            let tau_hat = exp.fit(&d)?;
            let x = sampler.draw(&mut rng).x;
            Ok(pointwise_risk(exp.world, exp.loss, tau_hat, x)? > exp.loss.epsilon)
        })
        .collect::<Result<_>>()?;
    let p = hits.iter().filter(|&&h| h).count() as f64 / replications as f64;
    Ok(JointRisk {
        estimate: p,
        std_err: binomial_se(p, replications),
        replications,
    })
}

/// What [`enumerate_exact`] computes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// `P(g(x) = 0)` (and `P(R(x) > epsilon)`) at a fixed input.
    Point(f64),
    /// `P(R(X) > epsilon)` jointly over the calibration set and a fresh input.
    Joint,
}

impl Serialize for Target {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Target::Point(x) => s.serialize_f64(*x),
            Target::Joint => s.serialize_str("JOINT"),
        }
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Target::Point(x)),
            Raw::Str(s) if s == "JOINT" => Ok(Target::Joint),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("unknown target {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactResult {
    pub target: Target,
    /// `P(g(x) = 0)` for a point target, the joint risk for [`Target::Joint`].
    pub probability: f64,
    /// `P(R(x) > epsilon)` for a point target.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation_probability: Option<f64>,
    /// Sum of the multinomial weights of all visited cell-count vectors.
    pub total_weight: f64,
    /// Ordered cell assignments represented, `cells^n`.
    pub assignments: u64,
    /// Distinct cell-count vectors evaluated.
    pub count_vectors: u64,
}

fn checked_assignments(cells: usize, n: usize) -> Result<u64> {
    let err = || Error::Budget {
        cells,
        n,
        budget: ENUMERATION_BUDGET,
    };
    let exp = u32::try_from(n).map_err(|_| err())?;
    let total = (cells as u64).checked_pow(exp).ok_or_else(err)?;
    if total > ENUMERATION_BUDGET {
        return Err(err());
    }
    Ok(total)
}

/// Exact probabilities by enumerating every way `n` calibration points can fall into cells.
///
/// Scores and labels are cell-constant, so the fitted router depends only on
/// how many points land in each cell. Each count vector is weighted by its
/// multinomial probability and evaluated on a representative set with its
/// points at the cell midpoints.
pub fn enumerate_exact(exp: &Experiment<'_>, target: Target) -> Result<ExactResult> {
    exp.check()?;
    let w = exp.world;
    let n = exp.n;
    let assignments = checked_assignments(w.len(), n)?;
    let probe = match target {
        Target::Point(x) => {
            let c = cell_at(w, x)?;
            Some((c.score, exp.loss.cell_exceeds(c)))
        }
        Target::Joint => None,
    };

    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=n).scan(0.0, |acc, k| {
            *acc += (k as f64).ln();
            Some(*acc)
        }))
        .collect();
    let ln_mass: Vec<f64> = w.cells().iter().map(|c| c.mass.ln()).collect();

    let mut acc = Accumulator::default();
    let mut counts = vec![0usize; w.len()];
    walk_counts(exp, 0, n, &mut counts, &ln_fact, &ln_mass, probe, &mut acc)?;

    let (probability, violation_probability) = match target {
        Target::Point(_) => (acc.fast, Some(acc.violation)),
        Target::Joint => (acc.joint, None),
    };
    Ok(ExactResult {
        target,
        probability,
        violation_probability,
        total_weight: acc.weight,
        assignments,
        count_vectors: acc.vectors,
    })
}

#[derive(Default)]
struct Accumulator {
    weight: f64,
    fast: f64,
    violation: f64,
    joint: f64,
    vectors: u64,
}

#[allow(clippy::too_many_arguments)]
fn walk_counts(
    exp: &Experiment<'_>,
    cell: usize,
    remaining: usize,
    counts: &mut Vec<usize>,
    ln_fact: &[f64],
    ln_mass: &[f64],
    probe: Option<(f64, bool)>,
    acc: &mut Accumulator,
) -> Result<()> {
    let k = counts.len();
    if cell == k - 1 {
        counts[cell] = remaining;
        let result = evaluate_counts(exp, counts, ln_fact, ln_mass, probe, acc);
        counts[cell] = 0;
        return result;
    }
    for c in 0..=remaining {
        counts[cell] = c;
        walk_counts(
            exp,
            cell + 1,
            remaining - c,
            counts,
            ln_fact,
            ln_mass,
            probe,
            acc,
        )?;
    }
    counts[cell] = 0;
    Ok(())
}

fn evaluate_counts(
    exp: &Experiment<'_>,
    counts: &[usize],
    ln_fact: &[f64],
    ln_mass: &[f64],
    probe: Option<(f64, bool)>,
    acc: &mut Accumulator,
) -> Result<()> {
    let cells = exp.world.cells();
    // Zero-mass cells holding points have probability zero.
    if counts
        .iter()
        .zip(cells)
        .any(|(&c, cell)| c > 0 && cell.mass == 0.0)
    {
        return Ok(());
    }
    let n = exp.n;
    let mut ln_w = ln_fact[n];
    for (i, &c) in counts.iter().enumerate() {
        if c > 0 {
            ln_w += c as f64 * ln_mass[i] - ln_fact[c];
        }
    }
    let weight = ln_w.exp();

    let samples = counts
        .iter()
        .zip(cells)
        .flat_map(|(&c, cell)| {
            std::iter::repeat_n(
                Sample {
                    x: cell.midpoint(),
                    y: cell.expert_label,
                },
                c,
            )
        })
        .collect();
    let tau_hat = exp.fit(&CalibrationSet::new(samples))?;

    acc.vectors += 1;
    acc.weight += weight;
    match probe {
        Some((score, bad)) => {
            if route(tau_hat, score) == Route::Fast {
                acc.fast += weight;
                if bad {
                    acc.violation += weight;
                }
            }
        }
        None => acc.joint += weight * exact_miscoverage(exp.world, exp.loss, tau_hat),
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoVerdicts {
    /// Base and perturbed fast-routing probabilities at `x*` differ by at
    /// most the product TV bound plus Monte-Carlo error.
    pub indistinguishable: bool,
    /// Under the perturbed world, `P(R(x*) > epsilon)` exceeds alpha by more than 3 standard errors.
    pub conditional_violation: bool,
    /// Joint risk on the base world is at most `alpha + 3 std_err`.
    pub marginal_holds: bool,
    /// The fitted routers send some mass to the fast model on average.
    pub nontrivial: bool,
    /// The base router rarely uses the fast model at `x*` (`est_fast_prob <= alpha`),
    /// so the perturbation has nothing to exploit.
    pub demo_vacuous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub x_star: f64,
    pub alpha: f64,
    pub base_audit: AuditReport,
    pub perturbed_audit: AuditReport,
    pub perturbation: PerturbationSpec,
    /// Exact single-draw TV between the base and perturbed worlds.
    pub tv_single: f64,
    /// `min(1, 2 n delta)`.
    pub tv_bound: f64,
    /// `min(1, n delta)`; diagnostic only.
    pub tv_coupling_bound: f64,
    /// `1 - (1 - tv_single)^n`; diagnostic only.
    pub tv_product_exact: f64,
    pub cross_world_gap: f64,
    pub combined_std_err: f64,
    pub marginal_risk_base: f64,
    pub marginal_risk_std_err: f64,
    pub deferral_mass_mean: f64,
    pub verdicts: DemoVerdicts,
}

/// Runs the full indistinguishability argument at one point and one `eta`.
///
/// 1. audit the base world at `x*`;
/// 2. relabel a ball of mass below `eta / (2n)` around `x*`;
/// 3. confirm the fast model is now wrong at `x*`;
/// 4. audit the perturbed world at `x*` with fresh replications;
/// 5. compare the two against the TV bound and evaluate the verdicts.
pub fn run_impossibility_demo(
    exp: &Experiment<'_>,
    x_star: f64,
    eta: f64,
    cfg: &McConfig,
) -> Result<DemoReport> {
    exp.check()?;
    cfg.validate()?;
    let base = exp.world;
    let c = cell_at(base, x_star)?;
    if exp.loss.cell_exceeds(c) {
        return Err(Error::Precondition(format!(
            "x* = {x_star} lies in the disagreement region; the fast model is already wrong there"
        )));
    }

    let mut points = vec![x_star];
    points.extend(cfg.audit_points.iter().copied().filter(|&x| x != x_star));

    let (base_audit, _) = profile_stream(exp, cfg, STREAM_BASE, &points)?;

    let perturbation = build_perturbation(base, exp.loss, x_star, eta, exp.n)?;
    let perturbed = perturb(base, exp.loss, &perturbation)?;
    let pc = cell_at(&perturbed, x_star)?;
    if !exp.loss.cell_exceeds(pc) {
        return Err(Error::Input(format!(
            "perturbation left the loss at x* = {x_star} within epsilon"
        )));
    }
    let pexp = exp.on_world(&perturbed);
    let (perturbed_audit, _) = profile_stream(&pexp, cfg, STREAM_PERTURBED, &points)?;

    let single = tv_single(base, &perturbed)?;
    let tv_bound = tv_product_bound(perturbation.ball_mass, exp.n);
    let b = &base_audit.points[0];
    let p = &perturbed_audit.points[0];
    let cross_world_gap = (b.est_fast_prob - p.est_fast_prob).abs();
    let combined_std_err = (b.std_err.powi(2) + p.std_err.powi(2)).sqrt();

    let marginal = joint_stream(exp, cfg.replications, cfg.master_seed, STREAM_JOINT)?;
    let alpha = exp.pac.alpha;

    let verdicts = DemoVerdicts {
        indistinguishable: cross_world_gap <= tv_bound + SIGMA_MARGIN * combined_std_err,
        conditional_violation: p.est_violation_prob - SIGMA_MARGIN * p.violation_std_err > alpha,
        marginal_holds: marginal.estimate <= alpha + SIGMA_MARGIN * marginal.std_err,
        nontrivial: base_audit.mean_deferral_mass < 1.0,
        demo_vacuous: b.est_fast_prob <= alpha,
    };

    Ok(DemoReport {
        x_star,
        alpha,
        tv_single: single,
        tv_bound,
        tv_coupling_bound: tv_coupling_bound(perturbation.ball_mass, exp.n),
        tv_product_exact: tv_product_exact(single, exp.n),
        cross_world_gap,
        combined_std_err,
        marginal_risk_base: marginal.estimate,
        marginal_risk_std_err: marginal.std_err,
        deferral_mass_mean: base_audit.mean_deferral_mass,
        base_audit,
        perturbed_audit,
        perturbation,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::world::Cell;

    fn zero_one() -> LossSpec {
        LossSpec::zero_one(0.0).unwrap()
    }

    fn pac(alpha: f64, delta: f64, grid: &[f64]) -> PacConfig {
        PacConfig::new(0.0, alpha)
            .unwrap()
            .with_delta(delta)
            .unwrap()
            .with_grid(grid.to_vec())
            .unwrap()
    }

    #[test]
    fn seeds_are_distinct_across_streams_and_indices() {
        let mut seen = std::collections::HashSet::new();
        for s in 0..3 {
            for m in 0..1000 {
                assert!(seen.insert(replication_seed(42, s, m)));
            }
        }
        assert_eq!(replication_seed(1, 2, 3), replication_seed(1, 2, 3));
    }

    #[test]
    fn default_points_include_midpoints() {
        let pts = default_audit_points(&corpus::w1());
        assert_eq!(pts.len(), 21);
        assert!(pts.contains(&0.4) && pts.contains(&0.9));
        let pts = default_audit_points(&corpus::staircase());
        assert_eq!(pts.len(), 26);
        assert!(pts.iter().any(|p| (p - 0.475).abs() < 1e-15));
        assert!(pts.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn trivial_profile_is_exactly_zero() {
        let w = corpus::staircase();
        let l = zero_one();
        let c = PacConfig::new(0.0, 0.1).unwrap();
        let exp = Experiment::new(&w, &l, &c, 30).with_algorithm(Algorithm::Trivial);
        let r = mc_conditional_profile(&exp, &McConfig::new(50, 1)).unwrap();
        assert!(r
            .points
            .iter()
            .all(|p| p.est_fast_prob == 0.0 && p.est_violation_prob == 0.0));
        assert_eq!(r.max_fast_prob, 0.0);
        assert!(r.trivial_verdict);
        assert_eq!(r.mean_deferral_mass, 1.0);
    }

    #[test]
    fn calibrated_w1_profile() {
        let w = corpus::w1();
        let l = zero_one();
        let c = pac(0.1, 0.05, &[0.5]);
        let exp = Experiment::new(&w, &l, &c, 100);
        let r = mc_conditional_profile(&exp, &McConfig::new(500, 3).with_points(vec![0.4, 0.9]))
            .unwrap();
        assert_eq!(r.points[0].est_fast_prob, 1.0);
        assert_eq!(r.points[1].est_fast_prob, 0.0);
        assert!(!r.trivial_verdict);
    }

    #[test]
    fn audit_on_w1_grid() {
        let w = corpus::w1();
        let l = zero_one();
        let c = pac(0.1, 0.05, &[0.5, 0.95]);
        let exp = Experiment::new(&w, &l, &c, 100);
        let pts: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let r = triviality_audit(&exp, &McConfig::new(300, 9).with_points(pts)).unwrap();
        assert!(!r.trivial_verdict);
        for p in &r.points {
            if p.x < 0.8 {
                assert!(p.est_fast_prob > 0.99, "{p:?}");
            } else {
                assert_eq!(p.est_fast_prob, 0.0);
            }
        }
    }

    #[test]
    fn vacuous_alpha_always_trivial() {
        // alpha close to 1 with every point routed fast still passes within margin
        let w = corpus::agreement();
        let l = zero_one();
        let c = PacConfig::new(0.0, 0.999_999).unwrap();
        let exp = Experiment::new(&w, &l, &c, 20);
        let r = triviality_audit(&exp, &McConfig::new(100, 2)).unwrap();
        assert!(r.max_fast_prob <= 1.0);
    }

    #[test]
    fn violation_never_exceeds_fast() {
        for (_, w) in corpus::all() {
            let l = zero_one();
            let c = PacConfig::new(0.0, 0.3).unwrap();
            let exp = Experiment::new(&w, &l, &c, 40);
            let (r, trace) = mc_conditional_profile_traced(&exp, &McConfig::new(200, 4)).unwrap();
            for p in &r.points {
                assert!(p.est_violation_prob <= p.est_fast_prob);
            }
            assert!(trace.iter().all(|t| !t.risk_exceeded || t.g == 0));
        }
    }

    #[test]
    fn joint_risk_trivial_and_lossless_are_zero() {
        let w = corpus::staircase();
        let l = zero_one();
        let c = PacConfig::new(0.0, 0.1).unwrap();
        let exp = Experiment::new(&w, &l, &c, 50).with_algorithm(Algorithm::Trivial);
        assert_eq!(mc_joint_risk(&exp, 500, 1).unwrap().estimate, 0.0);
        let a = corpus::agreement();
        let exp = Experiment::new(&a, &l, &c, 50);
        let r = mc_joint_risk(&exp, 500, 1).unwrap();
        assert_eq!((r.estimate, r.std_err), (0.0, 0.0));
    }

    #[test]
    fn exact_two_cell_single_point() {
        let w = corpus::w1();
        let l = zero_one();
        // t = 0.5: a lone clean point has p-value 0.5 > delta, so nothing is rejected.
        let c = pac(0.9, 0.4, &[0.5]);
        let exp = Experiment::new(&w, &l, &c, 1);
        let r = enumerate_exact(&exp, Target::Joint).unwrap();
        assert_eq!(r.count_vectors, 2);
        assert_eq!(r.assignments, 2);
        assert!((r.total_weight - 1.0).abs() < 1e-15);
        assert_eq!(r.probability, 0.0);
    }

    #[test]
    fn exact_trivial_is_zero() {
        let w = corpus::staircase();
        let l = zero_one();
        let c = PacConfig::new(0.0, 0.2).unwrap();
        let exp = Experiment::new(&w, &l, &c, 4).with_algorithm(Algorithm::Trivial);
        for x in [0.1, 0.5, 0.9] {
            let r = enumerate_exact(&exp, Target::Point(x)).unwrap();
            assert_eq!(r.probability, 0.0);
            assert_eq!(r.violation_probability, Some(0.0));
        }
        assert_eq!(
            enumerate_exact(&exp, Target::Joint).unwrap().probability,
            0.0
        );
    }

    #[test]
    fn exact_budget_guard() {
        let cells: Vec<Cell> = (0..10)
            .map(|i| Cell::new(i as f64 / 10.0, (i + 1) as f64 / 10.0, 0.1, 0, 0, 0.0))
            .map(|mut c| {
                if c.right > 0.99 {
                    c.right = 1.0;
                }
                c
            })
            .collect();
        let w = CellWorld::new(2, cells).unwrap();
        let l = zero_one();
        let c = PacConfig::new(0.0, 0.1).unwrap();
        let exp = Experiment::new(&w, &l, &c, 9);
        assert!(matches!(
            enumerate_exact(&exp, Target::Joint),
            Err(Error::Budget { .. })
        ));
        let exp = Experiment::new(&w, &l, &c, 7);
        assert!(enumerate_exact(&exp, Target::Joint).is_ok());
    }

    #[test]
    fn demo_precondition_and_trivial() {
        let w = corpus::w1();
        let l = zero_one();
        let c = pac(0.1, 0.05, &[0.5, 0.95]);
        let exp = Experiment::new(&w, &l, &c, 100);
        let cfg = McConfig::new(200, 5);
        assert!(matches!(
            run_impossibility_demo(&exp, 0.9, 0.01, &cfg),
            Err(Error::Precondition(_))
        ));
        let t = exp.with_algorithm(Algorithm::Trivial);
        let r = run_impossibility_demo(&t, 0.4, 0.01, &cfg).unwrap();
        assert!(!r.verdicts.conditional_violation);
        assert!(!r.verdicts.nontrivial);
        assert!(r.verdicts.demo_vacuous);
        assert!(r.verdicts.indistinguishable);
        assert!(r.verdicts.marginal_holds);
    }

    #[test]
    fn demo_with_huge_eta_clamps() {
        let w = corpus::w1();
        let l = zero_one();
        let c = pac(0.1, 0.05, &[0.5, 0.95]);
        let exp = Experiment::new(&w, &l, &c, 1);
        let r = run_impossibility_demo(&exp, 0.4, 1.9, &McConfig::new(100, 5)).unwrap();
        assert_eq!(r.perturbation.radius, 0.1);
        assert!((r.tv_bound - 0.4).abs() < 1e-15);
        assert!(r.verdicts.indistinguishable);
        let exp = Experiment::new(&w, &l, &c, 2);
        let r = run_impossibility_demo(&exp, 0.4, 1.9, &McConfig::new(100, 5)).unwrap();
        assert!(r.verdicts.indistinguishable);
    }
}
