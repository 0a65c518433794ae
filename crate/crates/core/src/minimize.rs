//! Discrete minimization of the total energy over positivity sets.
//!
//! The field is always the slit solution for the current mask; only the mask
//! is searched. Frontier cells are swept in lexicographic order. A flip is
//! screened by its windowed gain (local re-solves of both states in a cube of
//! radius `window` cells); since the window restricts the harmonic response,
//! the windowed gain never exceeds the exact gain of a globally solved state,
//! so a screened gain above `tol` is accepted outright. Flips whose windowed
//! gain is close to the threshold are settled by a global warm-started
//! re-solve.

use std::collections::VecDeque;

use crate::energy::{positivity_measure, total_energy, Region};
use crate::error::{precondition, Result};
use crate::grid::{for_each_multi, positivity_of, Grid, PositivitySet, ScalarField, MAX_DIM};
use crate::harmonic::{apply_constraints, free_nodes, is_free, solve_nodes, solve_slit};

/// Order in which frontier cells are visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlipStrategy {
    /// One lexicographic sweep over the frontier per outer iteration.
    #[default]
    Lexicographic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeOptions {
    /// Acceptance threshold on energy gains; `None` means `1e-3 h^n`.
    pub tol: Option<f64>,
    /// Relative residual tolerance of the harmonic solves.
    pub solver_tol: f64,
    pub max_outer: usize,
    /// Half-width of the local re-solve window, in cells.
    pub window: usize,
    /// Flips with windowed gain above `tol - screen * h^n` get an exact check.
    pub screen: f64,
    pub strategy: FlipStrategy,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            tol: None,
            solver_tol: 1e-10,
            max_outer: 200,
            window: 6,
            screen: 0.5,
            strategy: FlipStrategy::Lexicographic,
        }
    }
}

impl MinimizeOptions {
    pub fn tol_for(&self, grid: &Grid) -> f64 {
        self.tol.unwrap_or(1e-3 * grid.h().powi(grid.n() as i32))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeReport {
    pub field: ScalarField,
    pub mask: PositivitySet,
    /// Total energy after each accepted flip (the first entry is the start).
    pub energy_history: Vec<f64>,
    /// Number of sweeps performed.
    pub iterations: usize,
    pub converged: bool,
    pub accepted: usize,
    /// Gains settled by a global re-solve.
    pub exact_checks: usize,
    /// Acceptance threshold used.
    pub tol: f64,
}

impl MinimizeReport {
    pub fn energy(&self) -> f64 {
        *self.energy_history.last().expect("history is never empty")
    }
}

/// Progress passed to observers after every sweep.
pub struct SweepState<'a> {
    pub sweep: usize,
    pub field: &'a ScalarField,
    pub mask: &'a PositivitySet,
    pub energy: f64,
    pub accepted: usize,
}

/// Windowed flip gain and whether the window was clipped by the box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlipGain {
    pub gain: f64,
    pub clipped: bool,
}

fn window_nodes(grid: &Grid, slit_id: usize, radius: usize) -> (Vec<usize>, bool) {
    let n = grid.n();
    let c = grid.multi_index(grid.slit_node(slit_id));
    let mut lo = [0usize; MAX_DIM];
    let mut hi = [0usize; MAX_DIM];
    let mut clipped = false;
    for a in 0..=n {
        let top = grid.shape()[a] - 1;
        let (l, h) = if a < n {
            (c[a] as isize - radius as isize, c[a] + radius)
        } else {
            (0, radius)
        };
        if l < 0 || h > top {
            clipped = true;
        }
        lo[a] = l.max(0) as usize;
        hi[a] = h.min(top);
    }
    let mut out = Vec::new();
    for_each_multi(&lo[..=n], &hi[..=n], |idx| out.push(grid.index(idx)));
    (out, clipped)
}

/// Edge form over edges touching `nodes` (sorted), each edge counted once.
fn local_form(grid: &Grid, values: &[f64], nodes: &[usize]) -> f64 {
    let mut q = 0.0;
    for &i in nodes {
        grid.for_each_neighbor(i, |j, w| {
            if j > i || nodes.binary_search(&j).is_err() {
                q += w * (values[i] - values[j]).powi(2);
            }
        });
    }
    q
}

struct Local {
    values: Vec<f64>,
    energy: f64,
}

/// Local re-solve in the window under `mask`, returning the window energy
/// (Dirichlet part on touched edges plus the slit measure of window nodes).
fn solve_window(
    grid: &Grid,
    base: &[f64],
    mask: &PositivitySet,
    nodes: &[usize],
    abs_tol: f64,
) -> Result<Local> {
    let mut values = base.to_vec();
    for &i in nodes {
        if let Some(s) = grid.slit_id(i) {
            if !mask.get(s) && !grid.is_boundary(i) {
                values[i] = 0.0;
            }
        }
    }
    let free: Vec<usize> = nodes
        .iter()
        .copied()
        .filter(|&i| is_free(grid, mask, i))
        .collect();
    solve_nodes(grid, &mut values, &free, abs_tol)?;
    let cell = grid.h().powi(grid.n() as i32);
    let count = nodes
        .iter()
        .filter(|&&i| grid.slit_id(i).is_some_and(|s| mask.get(s)))
        .count();
    let energy = 2.0 * grid.h().powi(grid.n() as i32 - 1) * local_form(grid, &values, nodes)
        + cell * count as f64;
    Ok(Local { values, energy })
}

fn windowed(
    grid: &Grid,
    values: &[f64],
    mask: &PositivitySet,
    slit_id: usize,
    radius: usize,
    abs_tol: f64,
) -> Result<(FlipGain, Vec<usize>, Local)> {
    let (nodes, clipped) = window_nodes(grid, slit_id, radius);
    let before = solve_window(grid, values, mask, &nodes, abs_tol)?;
    let mut flipped = mask.clone();
    flipped.set(slit_id, !mask.get(slit_id));
    let after = solve_window(grid, values, &flipped, &nodes, abs_tol)?;
    Ok((
        FlipGain {
            gain: before.energy - after.energy,
            clipped,
        },
        nodes,
        after,
    ))
}

/// Energy decrease from flipping the phase of `slit_id` and re-solving in a
/// window of `radius` cells around it; positive means the flip improves.
pub fn flip_gain(
    u: &ScalarField,
    mask: &PositivitySet,
    slit_id: usize,
    radius: usize,
) -> Result<FlipGain> {
    let grid = u.grid();
    if mask.grid() != grid {
        return precondition("field and mask must share the same lattice");
    }
    if grid.is_boundary(grid.slit_node(slit_id)) {
        return precondition("boundary cells are pinned by the data");
    }
    let abs_tol = 1e-12 * u.max_abs().max(1.0);
    Ok(windowed(grid, u.values(), mask, slit_id, radius, abs_tol)?.0)
}

fn boundary_is_zero(grid: &Grid, g: &ScalarField) -> bool {
    (0..grid.len()).all(|i| !grid.is_boundary(i) || g.value(i) == 0.0)
}

fn boundary_sup(grid: &Grid, g: &ScalarField) -> f64 {
    (0..grid.len())
        .filter(|&i| grid.is_boundary(i))
        .fold(0.0, |m, i| m.max(g.value(i)))
}

/// Default initial mask: positivity of the harmonic extension of the data
/// with the whole slit free.
pub fn default_initial_mask(
    grid: &Grid,
    g: &ScalarField,
    solver_tol: f64,
) -> Result<PositivitySet> {
    let ext = solve_slit(grid, &PositivitySet::filled(*grid, true), g, solver_tol)?;
    Ok(positivity_of(&ext, 0.0))
}

struct State<'a> {
    grid: Grid,
    g: &'a ScalarField,
    mask: PositivitySet,
    values: Vec<f64>,
    energy: f64,
    abs_tol: f64,
}

impl State<'_> {
    fn field(&self) -> ScalarField {
        ScalarField::new(self.grid, self.values.clone()).expect("solver output is finite")
    }

    fn solve_global(&mut self) -> Result<()> {
        apply_constraints(&self.grid, &self.mask, self.g, &mut self.values);
        let free = free_nodes(&self.grid, &self.mask);
        solve_nodes(&self.grid, &mut self.values, &free, self.abs_tol)?;
        self.energy = total_energy(&self.field(), &self.mask, &Region::Whole)?;
        Ok(())
    }

    /// Exact gain of a flip from a globally solved state; returns the solved
    /// flipped state's values and energy.
    fn exact_gain(&self, slit_id: usize) -> Result<(f64, Vec<f64>, PositivitySet, f64)> {
        let mut mask = self.mask.clone();
        mask.set(slit_id, !mask.get(slit_id));
        let mut values = self.values.clone();
        apply_constraints(&self.grid, &mask, self.g, &mut values);
        let free = free_nodes(&self.grid, &mask);
        solve_nodes(&self.grid, &mut values, &free, self.abs_tol)?;
        let field = ScalarField::new(self.grid, values)?;
        let e = total_energy(&field, &mask, &Region::Whole)?;
        Ok((self.energy - e, field.into_values(), mask, e))
    }
}

fn enqueue_neighbors(
    mask: &PositivitySet,
    s: usize,
    queue: &mut VecDeque<usize>,
    queued: &mut [bool],
) {
    for t in mask.slit_neighbors(s) {
        if !queued[t] {
            queued[t] = true;
            queue.push_back(t);
        }
    }
}

/// Minimizes the total energy with outer boundary data from the boundary
/// nodes of `g`, starting from `p0` (or [`default_initial_mask`]).
pub fn minimize(
    grid: &Grid,
    g: &ScalarField,
    p0: Option<&PositivitySet>,
    opts: &MinimizeOptions,
) -> Result<MinimizeReport> {
    minimize_with(grid, g, p0, opts, |_| {})
}

/// [`minimize`] with an observer called after every sweep.
pub fn minimize_with(
    grid: &Grid,
    g: &ScalarField,
    p0: Option<&PositivitySet>,
    opts: &MinimizeOptions,
    mut observer: impl FnMut(&SweepState),
) -> Result<MinimizeReport> {
    if g.grid() != grid {
        return precondition("data and grid must share the same lattice");
    }
    if let Some(node) = (0..grid.len()).find(|&i| grid.is_boundary(i) && g.value(i) < 0.0) {
        return Err(crate::error::Error::InvalidSample {
            node,
            value: g.value(node),
        });
    }
    let tol = opts.tol_for(grid);
    if boundary_is_zero(grid, g) {
        let field = ScalarField::zeros(*grid);
        let mask = PositivitySet::filled(*grid, false);
        return Ok(MinimizeReport {
            field,
            mask,
            energy_history: vec![0.0],
            iterations: 0,
            converged: true,
            accepted: 0,
            exact_checks: 0,
            tol,
        });
    }
    let mut mask = match p0 {
        Some(p) => {
            if p.grid() != grid {
                return precondition("initial mask and grid must share the same lattice");
            }
            p.clone()
        }
        None => default_initial_mask(grid, g, opts.solver_tol)?,
    };
    for s in 0..grid.slit_len() {
        let node = grid.slit_node(s);
        if grid.is_boundary(node) {
            let pinned = g.value(node) > 0.0;
            if p0.is_some() && mask.get(s) != pinned {
                return precondition(format!(
                    "initial mask disagrees with the data at boundary slit node {s}"
                ));
            }
            mask.set(s, pinned);
        }
    }
    let mut state = State {
        grid: *grid,
        g,
        mask,
        values: g.values().to_vec(),
        energy: 0.0,
        abs_tol: opts.solver_tol * boundary_sup(grid, g),
    };
    state.solve_global()?;
    let mut history = vec![state.energy];
    let cell = grid.h().powi(grid.n() as i32);
    let margin = opts.screen * cell;
    let mut accepted_total = 0;
    let mut exact_checks = 0;
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_outer {
        sweeps += 1;
        let mut accepted = 0;
        let mut dirty = false;
        // frontier cells in lexicographic order; neighbours of accepted
        // flips are appended so a moving boundary is followed within a sweep
        let mut queue: VecDeque<usize> = state.mask.frontier().into();
        let mut queued = vec![false; grid.slit_len()];
        for &s in &queue {
            queued[s] = true;
        }
        while let Some(s) = queue.pop_front() {
            queued[s] = false;
            if grid.is_boundary(grid.slit_node(s)) {
                continue;
            }
            let still = state
                .mask
                .slit_neighbors(s)
                .any(|t| state.mask.get(t) != state.mask.get(s));
            if !still {
                continue;
            }
            let (fg, nodes, after) = windowed(
                grid,
                &state.values,
                &state.mask,
                s,
                opts.window,
                state.abs_tol,
            )?;
            if fg.gain > tol {
                for &i in &nodes {
                    state.values[i] = after.values[i];
                }
                let flipped = !state.mask.get(s);
                state.mask.set(s, flipped);
                let e = total_energy(&state.field(), &state.mask, &Region::Whole)?;
                state.energy = e;
                history.push(e);
                accepted += 1;
                dirty = true;
                enqueue_neighbors(&state.mask, s, &mut queue, &mut queued);
                continue;
            }
            if fg.gain > tol - margin {
                if dirty {
                    state.solve_global()?;
                    dirty = false;
                }
                exact_checks += 1;
                let (gain, values, mask, e) = state.exact_gain(s)?;
                if gain > tol {
                    state.values = values;
                    state.mask = mask;
                    state.energy = e;
                    history.push(e);
                    accepted += 1;
                    enqueue_neighbors(&state.mask, s, &mut queue, &mut queued);
                }
            }
        }
        if dirty {
            state.solve_global()?;
        }
        accepted_total += accepted;
        let field = state.field();
        observer(&SweepState {
            sweep: sweeps,
            field: &field,
            mask: &state.mask,
            energy: state.energy,
            accepted,
        });
        if accepted == 0 {
            converged = true;
            break;
        }
    }
    let field = state.field();
    debug_assert!(positivity_measure(&state.mask, &Region::Whole).is_ok());
    Ok(MinimizeReport {
        field,
        mask: state.mask,
        energy_history: history,
        iterations: sweeps,
        converged,
        accepted: accepted_total,
        exact_checks,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::TrivialCone;
    use crate::grid::{sample, FnField};

    fn cone_data(grid: &Grid) -> ScalarField {
        sample(&TrivialCone::minimal(grid.n()), grid).unwrap()
    }

    #[test]
    fn zero_data_short_circuits() {
        let grid = Grid::new(1, 1.0, 0.125).unwrap();
        let p0 = PositivitySet::filled(grid, true);
        let r = minimize(
            &grid,
            &ScalarField::zeros(grid),
            Some(&p0),
            &MinimizeOptions::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert_eq!(r.mask.count(), 0);
        assert!(r.field.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn recovers_the_half_space_on_a_coarse_grid() {
        let grid = Grid::new(1, 1.0, 1.0 / 32.0).unwrap();
        let g = cone_data(&grid);
        let p0 = PositivitySet::from_fn(grid, |x| x[0] > 0.0);
        let r = minimize(&grid, &g, Some(&p0), &MinimizeOptions::default()).unwrap();
        assert!(r.converged);
        let h = grid.h();
        for s in r.mask.frontier() {
            assert!(grid.slit_point(s)[0].abs() <= 2.0 * h + 1e-12);
        }
        for w in r.energy_history.windows(2) {
            assert!(w[1] < w[0] - r.tol);
        }
    }

    #[test]
    fn default_start_converges_to_the_same_boundary() {
        let grid = Grid::new(1, 1.0, 1.0 / 32.0).unwrap();
        let g = cone_data(&grid);
        let r = minimize(&grid, &g, None, &MinimizeOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.accepted > 0);
        let fb: Vec<f64> = r
            .mask
            .frontier()
            .iter()
            .map(|&s| grid.slit_point(s)[0])
            .collect();
        assert!(
            fb.iter().all(|x| x.abs() <= 2.0 * grid.h() + 1e-12),
            "{fb:?}"
        );
    }

    #[test]
    fn large_constant_data_keeps_everything_positive() {
        let grid = Grid::new(1, 1.0, 0.125).unwrap();
        let g = sample(&FnField::new(1, |_: &[f64]| 5.0), &grid).unwrap();
        let p0 = PositivitySet::from_fn(grid, |x| x[0].abs() > 0.3);
        let r = minimize(&grid, &g, Some(&p0), &MinimizeOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.mask.count(), grid.slit_len());
        assert!(r.field.values().iter().all(|&v| (v - 5.0).abs() < 1e-6));
    }

    #[test]
    fn converged_state_has_no_improving_flip() {
        let grid = Grid::new(1, 1.0, 1.0 / 16.0).unwrap();
        let g = cone_data(&grid);
        let r = minimize(&grid, &g, None, &MinimizeOptions::default()).unwrap();
        let e0 = total_energy(&r.field, &r.mask, &Region::Whole).unwrap();
        for s in r.mask.frontier() {
            if grid.is_boundary(grid.slit_node(s)) {
                continue;
            }
            let mut m = r.mask.clone();
            m.set(s, !m.get(s));
            let u = solve_slit(&grid, &m, &g, 1e-12).unwrap();
            let e = total_energy(&u, &m, &Region::Whole).unwrap();
            assert!(e0 - e <= r.tol, "flip at {s} gains {}", e0 - e);
        }
    }

    #[test]
    fn isolated_cell_gain_is_its_measure() {
        let grid = Grid::new(1, 1.0, 1.0 / 16.0).unwrap();
        let mut mask = PositivitySet::filled(grid, false);
        let s = grid.slit_len() / 2;
        mask.set(s, true);
        let u = ScalarField::zeros(grid);
        let fg = flip_gain(&u, &mask, s, 6).unwrap();
        assert!((fg.gain - grid.h()).abs() < 1e-12);
        assert!(!fg.clipped);
    }

    #[test]
    fn flipping_back_is_reversible() {
        let grid = Grid::new(1, 1.0, 1.0 / 16.0).unwrap();
        let g = cone_data(&grid);
        let mask = PositivitySet::from_fn(grid, |x| x[0] > 0.0);
        let u = solve_slit(&grid, &mask, &g, 1e-12).unwrap();
        let s = grid.slit_len() / 2 + 1;
        let fwd = flip_gain(&u, &mask, s, 6).unwrap().gain;
        let mut m2 = mask.clone();
        m2.set(s, false);
        let u2 = solve_slit(&grid, &m2, &g, 1e-12).unwrap();
        let back = flip_gain(&u2, &m2, s, 6).unwrap().gain;
        let tol = MinimizeOptions::default().tol_for(&grid);
        assert!(fwd + back <= 2.0 * tol, "{fwd} {back}");
        // and they cancel up to the window truncation
        assert!((fwd + back).abs() <= 0.2 * grid.h(), "{fwd} {back}");
        let clipped = flip_gain(&u, &mask, 1, 6).unwrap();
        assert!(clipped.clipped);
    }
}
