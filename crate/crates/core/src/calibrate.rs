//! Learn-then-test calibration of the routing threshold.
//!
//! Candidate thresholds are tested in ascending order. At each `tau` the
//! null hypothesis `H0: p(tau) > t` (with `t = alpha - delta` and `p` the
//! population miscoverage) is tested with an exact binomial test at level
//! `delta`. The walk stops at the first non-rejection and the selected
//! threshold is the last rejected one, or always-defer when nothing was
//! rejected.
//!
//! Because `p(tau)` is nondecreasing in `tau`, fixed-sequence testing
//! controls the probability of selecting any `tau` with `p(tau) > t` at
//! `delta`. Then for a fresh input `X`,
//!
//! ```text
//! P(R(X) > eps) = E[p(tau_hat)] <= t * 1 + 1 * delta = alpha
//! ```
//!
//! which is the joint (calibration data, test input) guarantee.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::{LossSpec, RouterThreshold};
use crate::world::{cell_at, CalibrationSet, CellWorld};

/// Candidate thresholds: explicit, or derived from the calibration scores.
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdGrid {
    /// Midpoints between consecutive distinct calibration scores, plus one
    /// point above the largest score.
    Auto,
    Explicit(Vec<f64>),
}

impl Serialize for ThresholdGrid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ThresholdGrid::Auto => s.serialize_str("auto"),
            ThresholdGrid::Explicit(v) => v.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ThresholdGrid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            List(Vec<f64>),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::List(v) => Ok(ThresholdGrid::Explicit(v)),
            Raw::Word(w) if w == "auto" => Ok(ThresholdGrid::Auto),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("unknown grid {w:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PacConfigFile")]
pub struct PacConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub delta_split: f64,
    pub threshold_grid: ThresholdGrid,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PacConfigFile {
    epsilon: f64,
    alpha: f64,
    #[serde(default)]
    delta_split: Option<f64>,
    #[serde(default = "auto_grid")]
    threshold_grid: ThresholdGrid,
}

fn auto_grid() -> ThresholdGrid {
    ThresholdGrid::Auto
}

impl TryFrom<PacConfigFile> for PacConfig {
    type Error = Error;

    fn try_from(f: PacConfigFile) -> Result<Self> {
        let cfg = PacConfig {
            epsilon: f.epsilon,
            alpha: f.alpha,
            delta_split: f.delta_split.unwrap_or(f.alpha / 2.0),
            threshold_grid: f.threshold_grid,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl PacConfig {
    /// `delta_split = alpha / 2` and an automatic grid.
    pub fn new(epsilon: f64, alpha: f64) -> Result<Self> {
        let cfg = PacConfig {
            epsilon,
            alpha,
            delta_split: alpha / 2.0,
            threshold_grid: ThresholdGrid::Auto,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_delta(mut self, delta_split: f64) -> Result<Self> {
        self.delta_split = delta_split;
        self.validate()?;
        Ok(self)
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Result<Self> {
        self.threshold_grid = ThresholdGrid::Explicit(grid);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "epsilon {} must be >= 0",
                self.epsilon
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha {} must lie in (0, 1)",
                self.alpha
            )));
        }
        if !(self.delta_split > 0.0 && self.delta_split < self.alpha) {
            return Err(Error::Config(format!(
                "delta_split {} must lie in (0, alpha = {})",
                self.delta_split, self.alpha
            )));
        }
        if let ThresholdGrid::Explicit(g) = &self.threshold_grid {
            if g.is_empty() {
                return Err(Error::Config("threshold grid is empty".into()));
            }
            if g.iter().any(|t| !t.is_finite()) {
                return Err(Error::Config(
                    "threshold grid has a non-finite entry".into(),
                ));
            }
            if g.windows(2).any(|p| p[0] >= p[1]) {
                return Err(Error::Config(
                    "threshold grid is not strictly ascending".into(),
                ));
            }
        }
        Ok(())
    }

    /// Per-threshold null level `t = alpha - delta_split`.
    pub fn test_level(&self) -> f64 {
        self.alpha - self.delta_split
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestedThreshold {
    pub tau: f64,
    pub exceedance_count: usize,
    pub p_value: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub tau_hat: RouterThreshold,
    pub tested: Vec<TestedThreshold>,
    pub n: usize,
}

/// Which router-building procedure runs on the calibration data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Fixed-sequence learn-then-test ([`select_threshold`]).
    #[default]
    Calibrated,
    /// Always defer to the expert ([`trivial_algorithm`]).
    Trivial,
}

impl Algorithm {
    pub fn fit(
        self,
        d: &CalibrationSet,
        w: &CellWorld,
        loss: &LossSpec,
        cfg: &PacConfig,
    ) -> Result<RouterThreshold> {
        match self {
            Algorithm::Calibrated => select_threshold(d, w, loss, cfg).map(|o| o.tau_hat),
            Algorithm::Trivial => Ok(trivial_algorithm()),
        }
    }
}

/// Scores of the calibration points whose fast-model loss against the
/// recorded label exceeds epsilon, sorted ascending, plus every score.
struct ScoredSamples {
    exceeding: Vec<f64>,
    all: Vec<f64>,
}

impl ScoredSamples {
    fn new(d: &CalibrationSet, w: &CellWorld, loss: &LossSpec) -> Result<Self> {
        let mut exceeding = Vec::new();
        let mut all = Vec::with_capacity(d.len());
        for s in &d.samples {
            let c = cell_at(w, s.x)?;
            all.push(c.score);
            if loss.exceeds(c.fast_label, s.y) {
                exceeding.push(c.score);
            }
        }
        exceeding.sort_by(f64::total_cmp);
        all.sort_by(f64::total_cmp);
        all.dedup();
        Ok(ScoredSamples { exceeding, all })
    }

    fn exceedances(&self, tau: f64) -> usize {
        self.exceeding.partition_point(|&s| s <= tau)
    }

    fn auto_grid(&self) -> Vec<f64> {
        let mut g: Vec<f64> = self.all.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        if let Some(&max) = self.all.last() {
            g.push(max + max.abs().max(1.0));
        }
        g
    }
}

/// Number of calibration points with `s(x_i) <= tau` and `loss(fast(x_i), y_i) > epsilon`.
///
/// Scores and fast labels come from `w`; the expert side comes from the
/// recorded `y_i`, so the count stays correct when the data were drawn from
/// a world whose expert labels differ from `w`'s.
pub fn empirical_exceedances(
    d: &CalibrationSet,
    w: &CellWorld,
    loss: &LossSpec,
    tau: f64,
) -> Result<usize> {
    let mut b = 0;
    for s in &d.samples {
        let c = cell_at(w, s.x)?;
        if c.score <= tau && loss.exceeds(c.fast_label, s.y) {
            b += 1;
        }
    }
    Ok(b)
}

/// Exact lower binomial tail `P(Binomial(n, t) <= b)`.
pub fn binomial_pvalue(b: usize, n: usize, t: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::Domain(format!("binomial rate {t} outside (0, 1)")));
    }
    if b > n {
        return Err(Error::Domain(format!("count {b} exceeds trials {n}")));
    }
    if b == n {
        return Ok(1.0);
    }
    if b as f64 > n as f64 * t {
        // Past the mean the lower tail is near 1; summing the short upper tail is more accurate.
        return Ok((1.0 - log_sum_exp((b + 1..=n).map(|k| log_pmf(k, n, t))).exp()).max(0.0));
    }
    Ok(log_sum_exp((0..=b).map(|k| log_pmf(k, n, t)))
        .exp()
        .min(1.0))
}

fn ln_choose(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (1..=k)
        .map(|i| ((n - k + i) as f64).ln() - (i as f64).ln())
        .sum()
}

fn log_pmf(k: usize, n: usize, t: f64) -> f64 {
    ln_choose(n, k) + k as f64 * t.ln() + (n - k) as f64 * (-t).ln_1p()
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// Fixed-sequence learn-then-test over the configured grid.
pub fn select_threshold(
    d: &CalibrationSet,
    w: &CellWorld,
    loss: &LossSpec,
    cfg: &PacConfig,
) -> Result<CalibrationOutcome> {
    if d.is_empty() {
        return Err(Error::Input("calibration set is empty".into()));
    }
    if cfg.epsilon != loss.epsilon {
        return Err(Error::Input(format!(
            "config epsilon {} differs from loss epsilon {}",
            cfg.epsilon, loss.epsilon
        )));
    }
    let n = d.len();
    let stats = ScoredSamples::new(d, w, loss)?;
    let grid = match &cfg.threshold_grid {
        ThresholdGrid::Auto => stats.auto_grid(),
        ThresholdGrid::Explicit(g) => g.clone(),
    };
    let level = cfg.test_level();

    let mut tested = Vec::new();
    let mut tau_hat = RouterThreshold::AlwaysDefer;
    for tau in grid {
        let b = stats.exceedances(tau);
        let p_value = binomial_pvalue(b, n, level)?;
        let rejected = p_value <= cfg.delta_split;
        tested.push(TestedThreshold {
            tau,
            exceedance_count: b,
            p_value,
            rejected,
        });
        if !rejected {
            break;
        }
        tau_hat = RouterThreshold::Tau(tau);
    }
    Ok(CalibrationOutcome { tau_hat, tested, n })
}

/// The always-expert router; ignores all data.
pub fn trivial_algorithm() -> RouterThreshold {
    RouterThreshold::AlwaysDefer
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::risk::{exact_deferral_mass, pointwise_risk};
    use crate::world::{sample_calibration, Label, Sample};
    use proptest::prelude::*;

    fn zero_one() -> LossSpec {
        LossSpec::zero_one(0.0).unwrap()
    }

    fn cfg(alpha: f64, delta: f64, grid: &[f64]) -> PacConfig {
        PacConfig::new(0.0, alpha)
            .unwrap()
            .with_delta(delta)
            .unwrap()
            .with_grid(grid.to_vec())
            .unwrap()
    }

    /// Direct product-form lower tail; independent of the log-space recursion.
    fn tail_oracle(b: usize, n: usize, t: f64) -> f64 {
        let mut total = 0.0;
        for k in 0..=b {
            let mut c = 1.0f64;
            for j in 0..k {
                c *= (n - j) as f64 / (j + 1) as f64;
            }
            total += c * t.powi(k as i32) * (1.0 - t).powi((n - k) as i32);
        }
        total
    }

    #[test]
    fn pvalue_examples() {
        assert_eq!(binomial_pvalue(7, 7, 0.3).unwrap(), 1.0);
        let p = binomial_pvalue(0, 10, 0.05).unwrap();
        assert!((p - 0.598_736_939_238_378_9).abs() < 1e-12, "{p}");
        let p = binomial_pvalue(0, 100, 0.05).unwrap();
        assert!((p / 0.95f64.powi(100) - 1.0).abs() < 1e-12, "{p}");
        assert!((p - 0.005_920_529).abs() < 1e-9);
        assert!(binomial_pvalue(1, 10, 0.0).is_err());
        assert!(binomial_pvalue(1, 10, 1.0).is_err());
        assert!(binomial_pvalue(11, 10, 0.5).is_err());
    }

    #[test]
    fn pvalue_matches_product_oracle() {
        for (b, n, t) in [
            (3, 20, 0.1),
            (10, 40, 0.3),
            (0, 1, 0.5),
            (25, 60, 0.45),
            (5, 200, 0.02),
        ] {
            let p = binomial_pvalue(b, n, t).unwrap();
            let o = tail_oracle(b, n, t);
            assert!(
                (p - o).abs() <= 1e-12 * o.max(1e-300) + 1e-15,
                "{b} {n} {t}: {p} vs {o}"
            );
        }
    }

    #[test]
    fn exceedance_examples() {
        let w = corpus::w1();
        let l = zero_one();
        let high = CalibrationSet::new(vec![
            Sample {
                x: 0.9,
                y: Label(1)
            };
            5
        ]);
        assert_eq!(empirical_exceedances(&high, &w, &l, 0.5).unwrap(), 0);
        assert_eq!(empirical_exceedances(&high, &w, &l, 1.0).unwrap(), 5);

        // 3 disagreeing points with score 0.1 and 7 points with score 0.9
        let mixed = CellWorld::new(
            2,
            vec![
                crate::world::Cell::new(0.0, 0.5, 0.5, 1, 0, 0.1),
                crate::world::Cell::new(0.5, 1.0, 0.5, 1, 0, 0.9),
            ],
        )
        .unwrap();
        let mut samples = vec![
            Sample {
                x: 0.2,
                y: Label(1)
            };
            3
        ];
        samples.extend(vec![
            Sample {
                x: 0.7,
                y: Label(1)
            };
            7
        ]);
        let d = CalibrationSet::new(samples);
        assert_eq!(empirical_exceedances(&d, &mixed, &l, 0.5).unwrap(), 3);
    }

    #[test]
    fn exceedances_read_recorded_labels() {
        // The world says the models agree at 0.4 but the data say otherwise.
        let w = corpus::w1();
        let d = CalibrationSet::new(vec![Sample {
            x: 0.4,
            y: Label(1),
        }]);
        assert_eq!(empirical_exceedances(&d, &w, &zero_one(), 0.5).unwrap(), 1);
    }

    #[test]
    fn select_on_w1_large_n() {
        let w = corpus::w1();
        let d = sample_calibration(&w, 100, 7).unwrap();
        let out = select_threshold(&d, &w, &zero_one(), &cfg(0.1, 0.05, &[0.5, 0.95])).unwrap();
        assert_eq!(out.tau_hat, RouterThreshold::Tau(0.5));
        assert_eq!(out.tested.len(), 2);
        assert_eq!(out.tested[0].exceedance_count, 0);
        assert!((out.tested[0].p_value - 0.95f64.powi(100)).abs() < 1e-15);
        assert!(out.tested[0].rejected);
        assert!(!out.tested[1].rejected);
        assert!(out.tested[1].p_value > 0.99);
        assert_eq!(out.n, 100);
    }

    #[test]
    fn select_small_n_defers() {
        let w = corpus::w1();
        let d = CalibrationSet::new(vec![
            Sample {
                x: 0.3,
                y: Label(0)
            };
            10
        ]);
        let out = select_threshold(&d, &w, &zero_one(), &cfg(0.1, 0.05, &[0.5])).unwrap();
        assert_eq!(out.tau_hat, RouterThreshold::AlwaysDefer);
        assert!((out.tested[0].p_value - 0.598_736_939_238_378_9).abs() < 1e-12);
        assert!(!out.tested[0].rejected);
    }

    #[test]
    fn select_saturates_on_lossless_world() {
        let w = corpus::agreement();
        let d = sample_calibration(&w, 500, 3).unwrap();
        let out = select_threshold(&d, &w, &zero_one(), &cfg(0.1, 0.05, &[0.3, 0.6, 0.8])).unwrap();
        assert_eq!(out.tau_hat, RouterThreshold::Tau(0.8));
        assert!(out
            .tested
            .iter()
            .all(|t| t.rejected && t.exceedance_count == 0));
    }

    #[test]
    fn select_errors() {
        let w = corpus::w1();
        let c = cfg(0.1, 0.05, &[0.5]);
        assert!(matches!(
            select_threshold(&CalibrationSet::new(vec![]), &w, &zero_one(), &c),
            Err(Error::Input(_))
        ));
        let d = sample_calibration(&w, 5, 1).unwrap();
        let l = LossSpec::zero_one(0.5).unwrap();
        assert!(matches!(
            select_threshold(&d, &w, &l, &c),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn auto_grid_uses_observed_scores() {
        let w = corpus::w1();
        let d = sample_calibration(&w, 100, 7).unwrap();
        let out =
            select_threshold(&d, &w, &zero_one(), &PacConfig::new(0.0, 0.1).unwrap()).unwrap();
        let taus: Vec<f64> = out.tested.iter().map(|t| t.tau).collect();
        assert_eq!(taus, vec![0.5, 1.9]);
        assert_eq!(out.tau_hat, RouterThreshold::Tau(0.5));
    }

    #[test]
    fn trivial_examples() {
        let r = trivial_algorithm();
        assert_eq!(r, RouterThreshold::AlwaysDefer);
        let w = corpus::staircase();
        for i in 0..=20 {
            assert_eq!(
                pointwise_risk(&w, &zero_one(), r, i as f64 / 20.0).unwrap(),
                0.0
            );
        }
        assert_eq!(exact_deferral_mass(&w, r), 1.0);
    }

    #[test]
    fn config_validation_and_json() {
        assert!(PacConfig::new(0.0, 0.0).is_err());
        assert!(PacConfig::new(0.0, 0.1).unwrap().with_delta(0.1).is_err());
        assert!(PacConfig::new(0.0, 0.1).unwrap().with_grid(vec![]).is_err());
        assert!(PacConfig::new(0.0, 0.1)
            .unwrap()
            .with_grid(vec![0.5, 0.5])
            .is_err());
        let c: PacConfig =
            serde_json::from_str(r#"{"epsilon":0.0,"alpha":0.2,"threshold_grid":"auto"}"#).unwrap();
        assert_eq!(c.delta_split, 0.1);
        assert_eq!(c.threshold_grid, ThresholdGrid::Auto);
        let c: PacConfig = serde_json::from_str(
            r#"{"epsilon":0.0,"alpha":0.1,"delta_split":0.05,"threshold_grid":[0.5,0.95]}"#,
        )
        .unwrap();
        assert_eq!(c.threshold_grid, ThresholdGrid::Explicit(vec![0.5, 0.95]));
        assert!(serde_json::from_str::<PacConfig>(
            r#"{"epsilon":0.0,"alpha":0.1,"delta_split":0.2}"#
        )
        .is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn rejections_form_a_prefix(seed in any::<u64>(), n in 1usize..300, alpha in 0.05f64..0.9) {
            let w = corpus::staircase();
            let d = sample_calibration(&w, n, seed).unwrap();
            let c = cfg(alpha, alpha / 2.0, &[0.1, 0.25, 0.4, 0.5, 0.7, 1.0]);
            let out = select_threshold(&d, &w, &zero_one(), &c).unwrap();
            let k = out.tested.iter().take_while(|t| t.rejected).count();
            prop_assert!(out.tested.len() - k <= 1);
            prop_assert_eq!(
                out.tau_hat,
                if k == 0 { RouterThreshold::AlwaysDefer } else { RouterThreshold::Tau(out.tested[k - 1].tau) }
            );
            for pair in out.tested.windows(2) {
                prop_assert!(pair[0].tau < pair[1].tau);
                prop_assert!(pair[0].exceedance_count <= pair[1].exceedance_count);
            }
        }

        #[test]
        fn exceedances_nondecreasing(seed in any::<u64>(), mut taus in prop::collection::vec(-0.5f64..1.5, 2..10)) {
            let w = corpus::staircase();
            let d = sample_calibration(&w, 50, seed).unwrap();
            taus.sort_by(f64::total_cmp);
            let counts: Vec<usize> = taus.iter().map(|&t| empirical_exceedances(&d, &w, &zero_one(), t).unwrap()).collect();
            prop_assert!(counts.windows(2).all(|p| p[0] <= p[1]));
        }

        #[test]
        fn pvalue_monotone_in_b_and_n(n in 1usize..400, t in 0.001f64..0.999, frac in 0.0f64..1.0, extra in 1usize..50) {
            let b = ((n as f64) * frac) as usize;
            let p = binomial_pvalue(b, n, t).unwrap();
            if b > 0 {
                prop_assert!(binomial_pvalue(b - 1, n, t).unwrap() <= p * (1.0 + 1e-12));
            }
            prop_assert!(binomial_pvalue(b, n + extra, t).unwrap() <= p * (1.0 + 1e-12));
            prop_assert!(p > 0.0 || n as f64 * t > 50.0);
            prop_assert!(p <= 1.0);
        }
    }
}
