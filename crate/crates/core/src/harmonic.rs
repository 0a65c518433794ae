//! Harmonic solves on the slit domain.
//!
//! The discrete problem is the minimization of the edge form
//! `Q(u) = sum_edges w_e (u_i - u_j)^2` over the upper half lattice, where
//! edges lying in the slit carry weight 1/2. Its Euler-Lagrange equation is
//! the standard `2(n+1)`-point Laplacian off the slit and the ghost-node
//! reflection stencil on it. Nodes on the outer boundary are pinned to the
//! data and slit nodes outside the positivity set are pinned to zero.

use crate::error::{precondition, Error, Result};
use crate::grid::{Grid, PositivitySet, ScalarField};

/// Default relative residual tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Compressed system over the free nodes of a region.
struct System {
    nodes: Vec<usize>,
    ptr: Vec<usize>,
    col: Vec<u32>,
    weight: Vec<f64>,
    diag: Vec<f64>,
    rhs: Vec<f64>,
}

impl System {
    fn assemble(grid: &Grid, values: &[f64], nodes: &[usize]) -> System {
        const NONE: u32 = u32::MAX;
        let mut local = vec![NONE; grid.len()];
        for (k, &node) in nodes.iter().enumerate() {
            local[node] = k as u32;
        }
        let mut ptr = Vec::with_capacity(nodes.len() + 1);
        let mut col = Vec::with_capacity(nodes.len() * 2 * grid.dim());
        let mut weight = Vec::with_capacity(nodes.len() * 2 * grid.dim());
        let mut diag = Vec::with_capacity(nodes.len());
        let mut rhs = Vec::with_capacity(nodes.len());
        ptr.push(0);
        for &node in nodes {
            let mut d = 0.0;
            let mut b = 0.0;
            grid.for_each_neighbor(node, |nbr, w| {
                d += w;
                match local[nbr] {
                    NONE => b += w * values[nbr],
                    k => {
                        col.push(k);
                        weight.push(w);
                    }
                }
            });
            diag.push(d);
            rhs.push(b);
            ptr.push(col.len());
        }
        System {
            nodes: nodes.to_vec(),
            ptr,
            col,
            weight,
            diag,
            rhs,
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.nodes.len() {
            let mut acc = self.diag[i] * x[i];
            for k in self.ptr[i]..self.ptr[i + 1] {
                acc -= self.weight[k] * x[self.col[k] as usize];
            }
            out[i] = acc;
        }
    }

    fn residual(&self, x: &[f64], r: &mut [f64]) {
        self.apply(x, r);
        for (ri, bi) in r.iter_mut().zip(&self.rhs) {
            *ri = bi - *ri;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Solves for the listed free nodes with every other node held at its
/// current value. Stops when the stencil residual is below `abs_tol` in the
/// max norm. `values` holds the initial iterate and receives the result.
pub(crate) fn solve_nodes(
    grid: &Grid,
    values: &mut [f64],
    free: &[usize],
    abs_tol: f64,
) -> Result<usize> {
    if free.is_empty() {
        return Ok(0);
    }
    let sys = System::assemble(grid, values, free);
    let n = free.len();
    let mut x: Vec<f64> = free.iter().map(|&i| values[i]).collect();
    let mut r = vec![0.0; n];
    sys.residual(&x, &mut r);
    let max_iter = 1000 + 400 * grid.m() * grid.dim();
    let mut z: Vec<f64> = r.iter().zip(&sys.diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut it = 0;
    loop {
        if max_abs(&r) <= abs_tol {
            // guard against drift of the recursive residual
            sys.residual(&x, &mut r);
            if max_abs(&r) <= abs_tol {
                break;
            }
            z.iter_mut()
                .zip(&r)
                .zip(&sys.diag)
                .for_each(|((zi, ri), d)| *zi = ri / d);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
        }
        if it >= max_iter {
            return Err(Error::NotConverged {
                iterations: it,
                residual: max_abs(&r),
            });
        }
        sys.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            break;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        for i in 0..n {
            z[i] = r[i] / sys.diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
    }
    for (k, &node) in sys.nodes.iter().enumerate() {
        values[node] = x[k];
    }
    Ok(it)
}

/// Nodes solved for under `mask`: off the outer boundary and not pinned to zero on the slit.
pub(crate) fn is_free(grid: &Grid, mask: &PositivitySet, node: usize) -> bool {
    if grid.is_boundary(node) {
        return false;
    }
    match grid.slit_id(node) {
        Some(s) => mask.get(s),
        None => true,
    }
}

pub(crate) fn free_nodes(grid: &Grid, mask: &PositivitySet) -> Vec<usize> {
    (0..grid.len())
        .filter(|&i| is_free(grid, mask, i))
        .collect()
}

/// Writes the pinned values implied by `mask` and `g` into `values`.
pub(crate) fn apply_constraints(
    grid: &Grid,
    mask: &PositivitySet,
    g: &ScalarField,
    values: &mut [f64],
) {
    for node in 0..grid.len() {
        if grid.is_boundary(node) {
            values[node] = g.value(node);
        } else if let Some(s) = grid.slit_id(node) {
            if !mask.get(s) {
                values[node] = 0.0;
            }
        }
    }
}

fn check_data(grid: &Grid, mask: &PositivitySet, g: &ScalarField, tol: f64) -> Result<()> {
    if mask.grid() != grid || g.grid() != grid {
        return precondition("mask, data and grid must share the same lattice");
    }
    if !(tol > 0.0) {
        return precondition("tolerance must be positive");
    }
    if let Some(node) = (0..grid.len()).find(|&i| grid.is_boundary(i) && g.value(i) < 0.0) {
        return Err(Error::InvalidSample {
            node,
            value: g.value(node),
        });
    }
    Ok(())
}

fn boundary_sup(grid: &Grid, g: &ScalarField) -> f64 {
    (0..grid.len())
        .filter(|&i| grid.is_boundary(i))
        .fold(0.0, |m, i| m.max(g.value(i).abs()))
}

/// Solves the slit problem with positivity set `mask` and outer boundary data
/// taken from the boundary nodes of `g`.
///
/// Interior values of `g` serve as the initial iterate. The stencil residual
/// is driven below `tol * sup|g|`, i.e. the discrete Laplacian is below
/// `tol * sup|g| / h^2`.
pub fn solve_slit(
    grid: &Grid,
    mask: &PositivitySet,
    g: &ScalarField,
    tol: f64,
) -> Result<ScalarField> {
    check_data(grid, mask, g, tol)?;
    let mut values = g.values().to_vec();
    apply_constraints(grid, mask, g, &mut values);
    let scale = boundary_sup(grid, g);
    if scale == 0.0 {
        return Ok(ScalarField::zeros(*grid));
    }
    let free = free_nodes(grid, mask);
    solve_nodes(grid, &mut values, &free, tol * scale)?;
    for v in values.iter_mut() {
        *v = v.max(0.0);
    }
    ScalarField::new(*grid, values)
}

/// Replaces `u` inside the ball `B_radius(center)` (center a point of
/// `R^{n+1}`) by the solution of the same stencil with `u` as Dirichlet data
/// outside the ball.
pub fn harmonic_replacement(
    u: &ScalarField,
    center: &[f64],
    radius: f64,
    mask: &PositivitySet,
    tol: f64,
) -> Result<ScalarField> {
    let grid = *u.grid();
    if mask.grid() != &grid {
        return precondition("mask and field must share the same lattice");
    }
    let e = grid.half_extent();
    let dim = grid.dim();
    if center.len() < dim || !(radius > 0.0) {
        return precondition("ball needs a center in R^{n+1} and a positive radius");
    }
    if (0..dim).any(|a| center[a].abs() + radius > e * (1.0 + 1e-12)) {
        return precondition(format!(
            "ball of radius {radius} at {:?} leaves the box",
            &center[..dim]
        ));
    }
    let mut values = u.values().to_vec();
    let free: Vec<usize> = grid
        .nodes_in_ball(center, radius)
        .into_iter()
        .filter(|&i| is_free(&grid, mask, i))
        .collect();
    for &i in &free {
        if let Some(s) = grid.slit_id(i) {
            debug_assert!(mask.get(s));
        }
    }
    solve_nodes(
        &grid,
        &mut values,
        &free,
        tol * u.max_abs().max(f64::MIN_POSITIVE),
    )?;
    ScalarField::new(grid, values)
}

/// Full even-reflected `2(n+1)`-point Laplacian at an interior node.
pub fn discrete_laplacian(u: &ScalarField, node: usize) -> f64 {
    let g = u.grid();
    let idx = g.multi_index(node);
    let h2 = g.h() * g.h();
    let v = u.values();
    let mut acc = 0.0;
    for a in 0..g.dim() {
        let s = g.strides()[a];
        let lo = if idx[a] > 0 {
            v[node - s]
        } else if a == g.n() {
            v[node + s]
        } else {
            return f64::NAN;
        };
        let hi = if idx[a] + 1 < g.shape()[a] {
            v[node + s]
        } else {
            return f64::NAN;
        };
        acc += lo + hi - 2.0 * v[node];
    }
    acc / h2
}
