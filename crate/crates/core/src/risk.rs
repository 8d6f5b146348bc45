//! The threshold router and the risk it incurs.

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::world::{cell_at, Cell, CellWorld, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    ZeroOne,
    Table,
}

/// A loss on (fast output, expert output) pairs and the tolerance `epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<Vec<f64>>>,
}

impl LossSpec {
    pub fn zero_one(epsilon: f64) -> Result<Self> {
        let l = LossSpec {
            kind: LossKind::ZeroOne,
            epsilon,
            table: None,
        };
        l.validate()?;
        Ok(l)
    }

    /// `table[fast][expert]` is the loss of answering `fast` when the expert says `expert`.
    pub fn table(table: Vec<Vec<f64>>, epsilon: f64) -> Result<Self> {
        let l = LossSpec {
            kind: LossKind::Table,
            epsilon,
            table: Some(table),
        };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "epsilon {} must be >= 0",
                self.epsilon
            )));
        }
        match self.kind {
            LossKind::ZeroOne => {
                if self.epsilon >= 1.0 {
                    return Err(Error::Config(format!(
                        "0-1 loss never exceeds epsilon = {}",
                        self.epsilon
                    )));
                }
            }
            LossKind::Table => {
                let t = self
                    .table
                    .as_ref()
                    .ok_or_else(|| Error::Config("table loss without a table".into()))?;
                let k = t.len();
                if k < 2 {
                    return Err(Error::Config("loss table needs at least 2 rows".into()));
                }
                for (a, row) in t.iter().enumerate() {
                    if row.len() != k {
                        return Err(Error::Config(format!(
                            "loss table row {a} has {} entries, expected {k}",
                            row.len()
                        )));
                    }
                    for (b, &v) in row.iter().enumerate() {
                        if !(v.is_finite() && v >= 0.0) {
                            return Err(Error::Config(format!("loss table[{a}][{b}] = {v}")));
                        }
                        if a == b && v != 0.0 {
                            return Err(Error::Config(format!(
                                "loss table diagonal [{a}][{a}] = {v} is not 0"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Validates the loss and checks that it covers every label of `w`.
    pub fn validate_for(&self, w: &CellWorld) -> Result<()> {
        self.validate()?;
        if let Some(t) = &self.table {
            if self.kind == LossKind::Table && (t.len() as u64) < u64::from(w.alphabet_size()) {
                return Err(Error::Config(format!(
                    "loss table is {0}x{0} but the world alphabet has {1} labels",
                    t.len(),
                    w.alphabet_size()
                )));
            }
        }
        Ok(())
    }

    pub fn loss(&self, fast: Label, expert: Label) -> f64 {
        match self.kind {
            LossKind::ZeroOne => f64::from(u8::from(fast != expert)),
            LossKind::Table => {
                let t = self.table.as_ref().expect("validated table loss");
                t[fast.index()][expert.index()]
            }
        }
    }

    /// Strict exceedance `loss(fast, expert) > epsilon`.
    pub fn exceeds(&self, fast: Label, expert: Label) -> bool {
        self.loss(fast, expert) > self.epsilon
    }

    pub(crate) fn cell_exceeds(&self, c: &Cell) -> bool {
        self.exceeds(c.fast_label, c.expert_label)
    }
}

/// Where a routed input goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Route {
    Expert,
    Fast,
}

/// A single-threshold router `g(x) = 1{s(x) > tau}`, or the always-expert router.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RouterThreshold {
    Tau(f64),
    AlwaysDefer,
}

const ALWAYS_DEFER: &str = "ALWAYS_DEFER";

impl Serialize for RouterThreshold {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RouterThreshold::Tau(t) => s.serialize_f64(*t),
            RouterThreshold::AlwaysDefer => s.serialize_str(ALWAYS_DEFER),
        }
    }
}

impl<'de> Deserialize<'de> for RouterThreshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(t) => Ok(RouterThreshold::Tau(t)),
            Raw::Str(s) if s == ALWAYS_DEFER => Ok(RouterThreshold::AlwaysDefer),
            Raw::Str(s) => Err(de::Error::custom(format!("unknown threshold {s:?}"))),
        }
    }
}

pub fn route(r: RouterThreshold, score: f64) -> Route {
    match r {
        RouterThreshold::AlwaysDefer => Route::Expert,
        RouterThreshold::Tau(tau) if score > tau => Route::Expert,
        RouterThreshold::Tau(_) => Route::Fast,
    }
}

/// Loss incurred at `x`: zero when the expert answers, otherwise the fast model's loss.
pub fn pointwise_risk(w: &CellWorld, loss: &LossSpec, r: RouterThreshold, x: f64) -> Result<f64> {
    let c = cell_at(w, x)?;
    Ok(match route(r, c.score) {
        Route::Expert => 0.0,
        Route::Fast => loss.loss(c.fast_label, c.expert_label),
    })
}

/// Cells where the fast model's loss exceeds epsilon, and their total mass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisagreementRegion {
    pub cells: Vec<usize>,
    pub mass: f64,
}

pub fn disagreement_region(w: &CellWorld, loss: &LossSpec) -> DisagreementRegion {
    let cells: Vec<usize> = w
        .cells()
        .iter()
        .enumerate()
        .filter(|(_, c)| loss.cell_exceeds(c))
        .map(|(i, _)| i)
        .collect();
    let mass = cells.iter().map(|&i| w.cells()[i].mass).sum::<f64>() + 0.0;
    DisagreementRegion { cells, mass }
}

// An empty f64 sum is -0.0; `+ 0.0` turns it into 0.0.

/// `P_X(R > epsilon)` for a fixed router: mass routed fast where the loss exceeds epsilon.
pub fn exact_miscoverage(w: &CellWorld, loss: &LossSpec, r: RouterThreshold) -> f64 {
    w.cells()
        .iter()
        .filter(|c| route(r, c.score) == Route::Fast && loss.cell_exceeds(c))
        .map(|c| c.mass)
        .sum::<f64>()
        + 0.0
}

/// `P_X(g(X) = 1)`: the mass sent to the expert.
pub fn exact_deferral_mass(w: &CellWorld, r: RouterThreshold) -> f64 {
    match r {
        RouterThreshold::AlwaysDefer => 1.0,
        RouterThreshold::Tau(_) => {
            w.cells()
                .iter()
                .filter(|c| route(r, c.score) == Route::Expert)
                .map(|c| c.mass)
                .sum::<f64>()
                + 0.0
        }
    }
}
