//! Synthetic worlds: joint laws over inputs in `[0, 1]` and expert labels.
//!
//! A [`CellWorld`] tiles `[0, 1]` with half-open cells `[left, right)` (the
//! last cell also owns `x = 1`). Inside a cell the input is uniform, so the
//! input marginal has a piecewise-constant density and no atoms. Each cell
//! carries the expert label, the fast-model label and the routing score,
//! which makes all three functions cell-constant.
//!
//! The expert label is a deterministic function of the input; calibration
//! samples record it as their `y`.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the total mass of a valid world.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Index into a finite output alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub u32);

impl Label {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub left: f64,
    pub right: f64,
    pub mass: f64,
    #[serde(rename = "expert")]
    pub expert_label: Label,
    #[serde(rename = "fast")]
    pub fast_label: Label,
    pub score: f64,
}

impl Cell {
    pub fn new(left: f64, right: f64, mass: f64, expert: u32, fast: u32, score: f64) -> Self {
        Cell {
            left,
            right,
            mass,
            expert_label: Label(expert),
            fast_label: Label(fast),
            score,
        }
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.left + self.right)
    }

    /// Mass of the overlap between this cell and `(a, b)`.
    fn overlap_mass(&self, a: f64, b: f64) -> f64 {
        let lo = a.max(self.left);
        let hi = b.min(self.right);
        if hi <= lo || self.mass == 0.0 {
            return 0.0;
        }
        self.mass * ((hi - lo) / self.width())
    }
}

/// One broken invariant found by [`validate_world`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// Offending cell, when the problem is local to one cell.
    pub cell: Option<usize>,
    pub message: String,
}

impl Violation {
    fn at(cell: usize, message: impl Into<String>) -> Self {
        Violation {
            cell: Some(cell),
            message: message.into(),
        }
    }

    fn global(message: impl Into<String>) -> Self {
        Violation {
            cell: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.cell {
            Some(i) => write!(f, "cell {i}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// A joint distribution over `[0, 1] x labels` given as an ordered list of cells.
///
/// Worlds are immutable once built. [`CellWorld::new`] refuses invalid
/// input; [`CellWorld::unchecked`] exists so that broken worlds can be
/// constructed and handed to [`validate_world`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellWorld {
    alphabet_size: u32,
    cells: Vec<Cell>,
}

impl CellWorld {
    pub fn new(alphabet_size: u32, cells: Vec<Cell>) -> Result<Self> {
        let w = CellWorld::unchecked(alphabet_size, cells);
        let violations = validate_world(&w);
        if violations.is_empty() {
            Ok(w)
        } else {
            Err(Error::InvalidWorld(violations))
        }
    }

    pub fn unchecked(alphabet_size: u32, cells: Vec<Cell>) -> Self {
        CellWorld {
            alphabet_size,
            cells,
        }
    }

    /// Uniform input law with a single label pair and score.
    pub fn uniform(alphabet_size: u32, expert: u32, fast: u32, score: f64) -> Result<Self> {
        CellWorld::new(
            alphabet_size,
            vec![Cell::new(0.0, 1.0, 1.0, expert, fast, score)],
        )
    }

    pub fn alphabet_size(&self) -> u32 {
        self.alphabet_size
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Index of the cell owning `x`.
    pub fn cell_index(&self, x: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("x = {x} lies outside [0, 1]")));
        }
        if self.cells.is_empty() {
            return Err(Error::Input("world has no cells".into()));
        }
        // First cell whose right edge is strictly beyond x; x = 1 falls to the last cell.
        let i = self.cells.partition_point(|c| c.right <= x);
        Ok(i.min(self.cells.len() - 1))
    }

    /// Distinct cell scores in ascending order.
    pub fn distinct_scores(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.cells.iter().map(|c| c.score).collect();
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let w: CellWorld = serde_json::from_str(s)?;
        let violations = validate_world(&w);
        if violations.is_empty() {
            Ok(w)
        } else {
            Err(Error::InvalidWorld(violations))
        }
    }

    /// Reads and validates a world file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub(crate) fn with_cells(&self, cells: Vec<Cell>) -> Self {
        CellWorld {
            alphabet_size: self.alphabet_size,
            cells,
        }
    }
}

/// Every invariant violation of `w`; an empty list means the world is valid.
pub fn validate_world(w: &CellWorld) -> Vec<Violation> {
    let mut out = Vec::new();
    if w.alphabet_size < 2 {
        out.push(Violation::global(format!(
            "alphabet_size {} < 2",
            w.alphabet_size
        )));
    }
    if w.cells.is_empty() {
        out.push(Violation::global("world has no cells"));
        return out;
    }

    for (i, c) in w.cells.iter().enumerate() {
        if !(c.left.is_finite() && c.right.is_finite() && c.mass.is_finite() && c.score.is_finite())
        {
            out.push(Violation::at(i, "non-finite field"));
            continue;
        }
        if c.left >= c.right {
            out.push(Violation::at(
                i,
                format!("left {} is not below right {}", c.left, c.right),
            ));
        }
        if c.left < 0.0 || c.right > 1.0 {
            out.push(Violation::at(
                i,
                format!("[{}, {}) leaves [0, 1]", c.left, c.right),
            ));
        }
        if c.mass < 0.0 {
            out.push(Violation::at(i, format!("negative mass {}", c.mass)));
        }
        for (name, l) in [("expert", c.expert_label), ("fast", c.fast_label)] {
            if l.0 >= w.alphabet_size {
                out.push(Violation::at(
                    i,
                    format!("{name} label {l} >= alphabet_size {}", w.alphabet_size),
                ));
            }
        }
    }

    let first = &w.cells[0];
    if first.left != 0.0 {
        out.push(Violation::at(
            0,
            format!("first cell starts at {}, not 0", first.left),
        ));
    }
    let last = w.cells.len() - 1;
    if w.cells[last].right != 1.0 {
        out.push(Violation::at(
            last,
            format!("last cell ends at {}, not 1", w.cells[last].right),
        ));
    }
    for (i, pair) in w.cells.windows(2).enumerate() {
        let (a, b) = (pair[0].right, pair[1].left);
        if a < b {
            out.push(Violation::at(i + 1, format!("gap at {a}-{b}")));
        } else if a > b {
            out.push(Violation::at(i + 1, format!("overlap at {b}-{a}")));
        }
    }

    let total: f64 = w.cells.iter().map(|c| c.mass).sum();
    if (total - 1.0).abs() > MASS_TOLERANCE {
        out.push(Violation::global(format!(
            "total mass {total} differs from 1"
        )));
    }
    out
}

/// The cell owning `x` under the half-open convention.
pub fn cell_at(w: &CellWorld, x: f64) -> Result<&Cell> {
    w.cell_index(x).map(|i| &w.cells[i])
}

/// Exact `P_X((a, b))`. Endpoints beyond `[0, 1]` are clipped.
pub fn interval_mass(w: &CellWorld, a: f64, b: f64) -> Result<f64> {
    if a.is_nan() || b.is_nan() {
        return Err(Error::Domain("interval endpoint is NaN".into()));
    }
    if a > b {
        return Err(Error::Domain(format!(
            "empty interval order: a = {a} > b = {b}"
        )));
    }
    let (a, b) = (a.max(0.0), b.min(1.0));
    if a >= b {
        return Ok(0.0);
    }
    let start = w.cells.partition_point(|c| c.right <= a);
    let mut m = 0.0;
    for c in &w.cells[start..] {
        if c.left >= b {
            break;
        }
        m += c.overlap_mass(a, b);
    }
    Ok(m.clamp(0.0, 1.0))
}

/// Refines the cell partition so that every point in `(0, 1)` of `points`
/// becomes a boundary. Split pieces share the parent's labels and score and
/// take mass in proportion to their width; points outside `(0, 1)` are ignored.
pub fn split_at(w: &CellWorld, points: &[f64]) -> CellWorld {
    let mut pts: Vec<f64> = points
        .iter()
        .copied()
        .filter(|p| *p > 0.0 && *p < 1.0)
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();

    let mut cells = Vec::with_capacity(w.cells.len() + pts.len());
    for c in &w.cells {
        let inner: Vec<f64> = pts
            .iter()
            .copied()
            .filter(|p| *p > c.left && *p < c.right)
            .collect();
        if inner.is_empty() {
            cells.push(*c);
            continue;
        }
        let width = c.width();
        let mut lo = c.left;
        for hi in inner.into_iter().chain(std::iter::once(c.right)) {
            cells.push(Cell {
                left: lo,
                right: hi,
                mass: c.mass * ((hi - lo) / width),
                ..*c
            });
            lo = hi;
        }
    }
    w.with_cells(cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: f64,
    pub y: Label,
}

/// The calibration data an algorithm sees: inputs with expert outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub samples: Vec<Sample>,
}

impl CalibrationSet {
    pub fn new(samples: Vec<Sample>) -> Self {
        CalibrationSet { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Inverse-CDF sampler over the cells of a world.
#[derive(Debug, Clone)]
pub struct WorldSampler<'w> {
    world: &'w CellWorld,
    cumulative: Vec<f64>,
    last_positive: usize,
}

impl<'w> WorldSampler<'w> {
    pub fn new(world: &'w CellWorld) -> Self {
        let mut acc = 0.0;
        let cumulative = world
            .cells
            .iter()
            .map(|c| {
                acc += c.mass;
                acc
            })
            .collect();
        let last_positive = world.cells.iter().rposition(|c| c.mass > 0.0).unwrap_or(0);
        WorldSampler {
            world,
            cumulative,
            last_positive,
        }
    }

    pub fn world(&self) -> &'w CellWorld {
        self.world
    }

    /// Draws a cell index with probability equal to its mass.
    pub fn draw_cell<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap_or(&0.0);
        let u = rng.gen::<f64>() * total;
        let k = self.cumulative.partition_point(|&c| c <= u);
        k.min(self.last_positive)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Sample {
        let k = self.draw_cell(rng);
        let c = &self.world.cells[k];
        let mut x = c.left + rng.gen::<f64>() * c.width();
        if x >= c.right {
            x = c.left;
        }
        Sample {
            x,
            y: c.expert_label,
        }
    }

    pub fn calibration_set<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> CalibrationSet {
        CalibrationSet::new((0..n).map(|_| self.draw(rng)).collect())
    }
}

/// `n` i.i.d. draws from `w`, deterministic in `seed`.
pub fn sample_calibration(w: &CellWorld, n: usize, seed: u64) -> Result<CalibrationSet> {
    if n == 0 {
        return Err(Error::Domain("calibration size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(WorldSampler::new(w).calibration_set(&mut rng, n))
}
