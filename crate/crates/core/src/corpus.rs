//! A small library of named worlds used by the examples, tests and audits.

use crate::world::{Cell, CellWorld};

/// Two cells: `[0, 0.8)` where both models agree (score 0.1) and
/// `[0.8, 1]` where they disagree (score 0.9).
pub fn w1() -> CellWorld {
    CellWorld::new(
        2,
        vec![
            Cell::new(0.0, 0.8, 0.8, 0, 0, 0.1),
            Cell::new(0.8, 1.0, 0.2, 1, 0, 0.9),
        ],
    )
    .expect("w1 is valid")
}

/// The fast model matches the expert everywhere.
pub fn agreement() -> CellWorld {
    CellWorld::new(
        3,
        vec![
            Cell::new(0.0, 0.25, 0.4, 0, 0, 0.2),
            Cell::new(0.25, 0.7, 0.35, 2, 2, 0.5),
            Cell::new(0.7, 1.0, 0.25, 1, 1, 0.8),
        ],
    )
    .expect("agreement is valid")
}

/// Disagreement mass grows with the score; no single threshold is free.
pub fn staircase() -> CellWorld {
    CellWorld::new(
        3,
        vec![
            Cell::new(0.0, 0.2, 0.3, 0, 0, 0.05),
            Cell::new(0.2, 0.4, 0.25, 1, 1, 0.2),
            Cell::new(0.4, 0.55, 0.05, 2, 0, 0.3),
            Cell::new(0.55, 0.7, 0.15, 1, 1, 0.45),
            Cell::new(0.7, 0.85, 0.1, 0, 2, 0.6),
            Cell::new(0.85, 1.0, 0.15, 2, 1, 0.95),
        ],
    )
    .expect("staircase is valid")
}

/// A massless band in the middle of the unit interval.
pub fn gapped() -> CellWorld {
    CellWorld::new(
        2,
        vec![
            Cell::new(0.0, 0.4, 0.5, 0, 0, 0.1),
            Cell::new(0.4, 0.6, 0.0, 0, 0, 0.1),
            Cell::new(0.6, 1.0, 0.5, 1, 0, 0.7),
        ],
    )
    .expect("gapped is valid")
}

/// Every corpus world with its name.
pub fn all() -> Vec<(&'static str, CellWorld)> {
    vec![
        ("w1", w1()),
        ("agreement", agreement()),
        ("staircase", staircase()),
        ("gapped", gapped()),
    ]
}
