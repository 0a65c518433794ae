//! Benchmark fixtures shared by the criterion targets.

use thinphase_core::grid::{positivity_of, sample};
use thinphase_core::{Grid, PositivitySet, ScalarField, TrivialCone};

/// Minimal-amplitude cone data on `[-1, 1]^{n+1}` with step `h`, and its
/// positivity set.
pub fn cone_problem(n: usize, h: f64) -> (Grid, ScalarField, PositivitySet) {
    let grid = Grid::new(n, 1.0, h).expect("valid grid");
    let g = sample(&TrivialCone::minimal(n), &grid).expect("cone is defined everywhere");
    let mask = positivity_of(&g, 0.0);
    (grid, g, mask)
}
