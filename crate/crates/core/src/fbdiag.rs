//! Free-boundary geometry and pointwise diagnostics.
//!
//! Free-boundary points are the midpoints of slit faces joining a positive
//! node to a zero node. All thresholds used with these diagnostics are
//! calibrated on exact solutions; none of them is a universal constant.

use crate::closedform::{eval_u0, eval_v, VParams};
use crate::energy::{slit_measure, Region};
use crate::error::{precondition, Error, Result};
use crate::grid::{Field, Grid, PositivitySet, ScalarField};

/// A free-boundary vertex with its estimated unit normal (pointing into the
/// positive phase).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbVertex {
    pub point: [f64; 2],
    pub normal: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FBPolyline {
    /// Vertices ordered along the chart axis when the boundary is a graph,
    /// lexicographically otherwise.
    pub vertices: Vec<FbVertex>,
    /// Lipschitz constant of the graph representation (`inf` when not a graph).
    pub lipschitz: f64,
    /// Slit axis along which the boundary is a graph, if any.
    pub graph_axis: Option<usize>,
}

impl FBPolyline {
    pub fn is_graph(&self) -> bool {
        self.graph_axis.is_some()
    }
}

fn unit(v: [f64; 2]) -> [f64; 2] {
    let l = v[0].hypot(v[1]);
    if l == 0.0 {
        v
    } else {
        [v[0] / l, v[1] / l]
    }
}

/// Graph representation over the slit axis other than `axis`: every column
/// must be crossed exactly once along `axis`.
fn graph_lipschitz(mask: &PositivitySet, axis: usize) -> Option<f64> {
    let g = mask.grid();
    let side = 2 * g.m() + 1;
    let other = 1 - axis;
    let mut heights = Vec::with_capacity(side);
    for c in 0..side {
        let mut crossing = None;
        for k in 0..side - 1 {
            let mut a = [0usize; 3];
            a[other] = c;
            a[axis] = k;
            let mut b = a;
            b[axis] = k + 1;
            let sa = g.slit_id(g.index(&a)).expect("slit node");
            let sb = g.slit_id(g.index(&b)).expect("slit node");
            if mask.get(sa) != mask.get(sb) {
                if crossing.is_some() {
                    return None;
                }
                crossing = Some(k as f64 + 0.5);
            }
        }
        heights.push(crossing?);
    }
    Some(
        heights
            .windows(2)
            .fold(0.0, |m: f64, w| m.max((w[1] - w[0]).abs())),
    )
}

/// Free-boundary vertices, normals and graph structure of a mask.
pub fn extract_fb(mask: &PositivitySet) -> Result<FBPolyline> {
    if !mask.has_both_phases() {
        return precondition("mask has a single phase; the free boundary is empty");
    }
    let g = mask.grid();
    let n = g.n();
    let h = g.h();
    let faces = mask.fb_faces();
    let points: Vec<([f64; 2], [f64; 2])> = faces
        .iter()
        .map(|&(s, t)| {
            let a = g.slit_point(s);
            let b = g.slit_point(t);
            let mut p = [0.0; 2];
            let mut d = [0.0; 2];
            for k in 0..n {
                p[k] = 0.5 * (a[k] + b[k]);
                d[k] = (a[k] - b[k]) / h;
            }
            (p, d)
        })
        .collect();
    let mut vertices: Vec<FbVertex> = if n == 1 {
        points
            .iter()
            .map(|&(p, d)| FbVertex {
                point: p,
                normal: d,
            })
            .collect()
    } else {
        // least-squares line through the face midpoints within two cells
        points
            .iter()
            .map(|&(p, _)| {
                let near: Vec<&([f64; 2], [f64; 2])> = points
                    .iter()
                    .filter(|(q, _)| (q[0] - p[0]).hypot(q[1] - p[1]) <= 2.0 * h + 1e-12)
                    .collect();
                let k = near.len() as f64;
                let cx = near.iter().map(|(q, _)| q[0]).sum::<f64>() / k;
                let cy = near.iter().map(|(q, _)| q[1]).sum::<f64>() / k;
                let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
                for (q, _) in &near {
                    sxx += (q[0] - cx).powi(2);
                    sxy += (q[0] - cx) * (q[1] - cy);
                    syy += (q[1] - cy).powi(2);
                }
                // normal = eigenvector of the smaller eigenvalue of the scatter matrix
                let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
                let mut nrm = [-theta.sin(), theta.cos()];
                let orient: [f64; 2] = near
                    .iter()
                    .fold([0.0, 0.0], |acc, (_, d)| [acc[0] + d[0], acc[1] + d[1]]);
                if nrm[0] * orient[0] + nrm[1] * orient[1] < 0.0 {
                    nrm = [-nrm[0], -nrm[1]];
                }
                FbVertex {
                    point: p,
                    normal: unit(nrm),
                }
            })
            .collect()
    };
    let (lipschitz, graph_axis) = if n == 1 {
        (0.0, Some(0))
    } else {
        let mut best: Option<(f64, usize)> = None;
        for axis in [1usize, 0] {
            if let Some(l) = graph_lipschitz(mask, axis) {
                if best.is_none_or(|(b, _)| l < b) {
                    best = Some((l, axis));
                }
            }
        }
        match best {
            Some((l, a)) => (l, Some(a)),
            None => (f64::INFINITY, None),
        }
    };
    match graph_axis {
        Some(axis) if n == 2 => {
            let other = 1 - axis;
            vertices.sort_by(|a, b| {
                a.point[other]
                    .total_cmp(&b.point[other])
                    .then(a.point[axis].total_cmp(&b.point[axis]))
            });
        }
        _ => vertices.sort_by(|a, b| {
            a.point[0]
                .total_cmp(&b.point[0])
                .then(a.point[1].total_cmp(&b.point[1]))
        }),
    }
    Ok(FBPolyline {
        vertices,
        lipschitz,
        graph_axis,
    })
}

/// Least-squares fit of `u(x0 + t nu, 0) ~ alpha sqrt(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionFit {
    pub x0: [f64; 2],
    pub normal: [f64; 2],
    pub alpha: f64,
    pub residual: f64,
    pub window: [f64; 2],
}

/// Default fit window `[2h, 16h]`.
pub fn default_window(h: f64) -> [f64; 2] {
    [2.0 * h, 16.0 * h]
}

/// Fits the expansion coefficient along the ray `x0 + t nu` of the slit,
/// sampling `t` at steps `step` across `window`.
pub fn fit_alpha(
    u: &dyn Field,
    x0: &[f64],
    nu: &[f64],
    window: [f64; 2],
    step: f64,
) -> Result<ExpansionFit> {
    let n = u.n();
    if !(window[0] > 0.0 && window[1] > window[0] && step > 0.0) {
        return precondition("fit window must satisfy 0 < t_min < t_max");
    }
    let k = ((window[1] - window[0]) / step).round() as usize;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut samples = Vec::with_capacity(k + 1);
    for i in 0..=k {
        let t = window[0] + (window[1] - window[0]) * i as f64 / k.max(1) as f64;
        let mut x = [0.0; 3];
        for a in 0..n {
            x[a] = x0[a] + t * nu[a];
        }
        let v = u.eval(&x[..=n])?;
        if v <= 0.0 {
            return precondition(format!("fit window leaves the positive phase at t = {t}"));
        }
        num += v * t.sqrt();
        den += t;
        samples.push((t, v));
    }
    let alpha = num / den;
    let residual = (samples
        .iter()
        .map(|(t, v)| (v - alpha * t.sqrt()).powi(2))
        .sum::<f64>()
        / samples.len() as f64)
        .sqrt();
    let mut x = [0.0; 2];
    let mut d = [0.0; 2];
    x[..n].copy_from_slice(&x0[..n]);
    d[..n].copy_from_slice(&nu[..n]);
    Ok(ExpansionFit {
        x0: x,
        normal: d,
        alpha,
        residual,
        window,
    })
}

/// Hölder-1/2 quotient and the value at `e_{n+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderReport {
    pub ratio: f64,
    pub value_at_top: Option<f64>,
}

/// `max |u(X) - u(Y)| / |X - Y|^{1/2}` over node pairs in the region (upper
/// half; the lower half adds nothing by symmetry). Large regions are thinned
/// to at most about 3000 nodes, always keeping the slit.
pub fn holder_ratio(u: &ScalarField, region: &Region) -> Result<HolderReport> {
    let g = u.grid();
    let n = g.n();
    let nodes: Vec<usize> = match *region {
        Region::Whole => (0..g.len()).collect(),
        Region::Ball { center, radius } => {
            let mut c = [0.0; 3];
            c[..n].copy_from_slice(&center[..n]);
            g.nodes_in_ball(&c[..=n], radius)
        }
        Region::Box { lo, hi, height } => (0..g.len())
            .filter(|&i| {
                let p = g.point(i);
                (0..n).all(|a| p[a] >= lo[a] - 1e-12 && p[a] <= hi[a] + 1e-12)
                    && p[n] <= height + 1e-12
            })
            .collect(),
    };
    let off: Vec<usize> = nodes.iter().copied().filter(|&i| !g.is_slit(i)).collect();
    let stride = (off.len() / 2000).max(1);
    let mut pick: Vec<usize> = nodes.iter().copied().filter(|&i| g.is_slit(i)).collect();
    pick.extend(off.iter().copied().step_by(stride));
    let pts: Vec<([f64; 3], f64)> = pick.iter().map(|&i| (g.point(i), u.value(i))).collect();
    let mut ratio: f64 = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d2: f64 = (0..=n).map(|a| (pts[i].0[a] - pts[j].0[a]).powi(2)).sum();
            let q = (pts[i].1 - pts[j].1).abs() / d2.sqrt().sqrt();
            ratio = ratio.max(q);
        }
    }
    let mut top = [0.0; 3];
    top[n] = 1.0;
    let value_at_top = u.eval(&top[..=n]).ok();
    Ok(HolderReport {
        ratio,
        value_at_top,
    })
}

fn check_radii(g: &Grid, radii: &[f64]) -> Result<()> {
    if radii.is_empty() || radii.iter().any(|&r| r < 4.0 * g.h() * (1.0 - 1e-12)) {
        return precondition("radii must be nonempty and at least 4h");
    }
    Ok(())
}

fn ball_inside(g: &Grid, p: &[f64; 2], r: f64) -> bool {
    (0..g.n()).all(|a| p[a].abs() + r <= g.half_extent() * (1.0 + 1e-12))
}

/// `min over free-boundary points and radii of sup_{B_r} u / r^{1/2}`, over
/// balls inside the box.
pub fn nondegeneracy(u: &ScalarField, mask: &PositivitySet, radii: &[f64]) -> Result<f64> {
    let g = u.grid();
    check_radii(g, radii)?;
    if u.max_abs() == 0.0 {
        return precondition("the positive phase is empty");
    }
    let pts = mask.fb_points();
    if pts.is_empty() {
        return precondition("the free boundary is empty");
    }
    let n = g.n();
    let mut worst = f64::INFINITY;
    for p in &pts {
        let mut c = [0.0; 3];
        c[..n].copy_from_slice(&p[..n]);
        for &r in radii {
            if !ball_inside(g, p, r) {
                continue;
            }
            let sup = g
                .nodes_in_ball(&c[..=n], r)
                .iter()
                .fold(0.0, |m: f64, &i| m.max(u.value(i)));
            worst = worst.min(sup / r.sqrt());
        }
    }
    if !worst.is_finite() {
        return precondition("no free-boundary ball lies inside the box");
    }
    Ok(worst)
}

/// `(min, max)` over free-boundary points and radii of the zero-phase
/// fraction of slit balls. Free-boundary points whose ball leaves the box
/// are skipped.
pub fn density(mask: &PositivitySet, radii: &[f64]) -> Result<(f64, f64)> {
    let g = mask.grid();
    check_radii(g, radii)?;
    let pts = mask.fb_points();
    if pts.is_empty() {
        return precondition("the free boundary is empty");
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in &pts {
        for &r in radii {
            if !ball_inside(g, p, r) {
                continue;
            }
            let ball = Region::ball(&p[..g.n()], r);
            let zero = slit_measure(g, &ball, |s| !mask.get(s));
            let all = slit_measure(g, &ball, |_| true);
            let f = zero / all;
            lo = lo.min(f);
            hi = hi.max(f);
        }
    }
    if lo > hi {
        return precondition("no free-boundary ball lies inside the box");
    }
    Ok((lo, hi))
}

/// Log-log slope of `|d_tau u(x0 + r nu, 0)|` against `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentialDecay {
    /// `None` when the derivative is below the noise floor at every radius.
    pub exponent: Option<f64>,
    pub samples: Vec<(f64, f64)>,
}

impl TangentialDecay {
    pub fn is_degenerate(&self) -> bool {
        self.exponent.is_none()
    }
}

/// Tangential derivatives by central differences of step `r / 4` along `tau`.
pub fn tangential_decay(
    u: &dyn Field,
    x0: &[f64],
    nu: &[f64],
    tau: &[f64],
    radii: &[f64],
) -> Result<TangentialDecay> {
    let n = u.n();
    let dot: f64 = (0..n).map(|a| nu[a] * tau[a]).sum();
    if dot.abs() > 1e-9 {
        return precondition("tangent must be orthogonal to the normal");
    }
    if radii.len() < 2 || radii.iter().any(|&r| r <= 0.0) {
        return precondition("need at least two positive radii");
    }
    let mut samples = Vec::with_capacity(radii.len());
    let mut scale: f64 = 0.0;
    for &r in radii {
        let d = r / 4.0;
        let at = |s: f64| -> Result<f64> {
            let mut x = [0.0; 3];
            for a in 0..n {
                x[a] = x0[a] + r * nu[a] + s * tau[a];
            }
            u.eval(&x[..=n])
        };
        let centre = at(0.0)?;
        if centre <= 0.0 {
            return precondition(format!("point at radius {r} is outside the positive phase"));
        }
        scale = scale.max(centre / r);
        samples.push((r, ((at(d)? - at(-d)?) / (2.0 * d)).abs()));
    }
    let floor = 1e-9 * scale.max(1e-300);
    if samples.iter().all(|&(_, v)| v <= floor) {
        return Ok(TangentialDecay {
            exponent: None,
            samples,
        });
    }
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|&&(_, v)| v > floor)
        .map(|&(r, v)| (r.ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return Ok(TangentialDecay {
            exponent: None,
            samples,
        });
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(TangentialDecay {
        exponent: Some(sxy / sxx),
        samples,
    })
}

/// Local orthonormal slit frame at a free-boundary point: coordinates of
/// `x` are `(tangential, normal)` for `n = 2` and `(normal)` for `n = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub origin: [f64; 2],
    pub normal: [f64; 2],
}

impl Frame {
    pub fn new(origin: &[f64], normal: &[f64]) -> Frame {
        let mut o = [0.0; 2];
        let mut nu = [0.0; 2];
        let k = origin.len().min(2);
        o[..k].copy_from_slice(&origin[..k]);
        let k = normal.len().min(2);
        nu[..k].copy_from_slice(&normal[..k]);
        Frame {
            origin: o,
            normal: unit(nu),
        }
    }

    /// Frame coordinates of a point of `R^{n+1}` (length `n + 1`).
    pub fn local(&self, n: usize, x: &[f64]) -> [f64; 3] {
        if n == 1 {
            [(x[0] - self.origin[0]) * self.normal[0], x[1], 0.0]
        } else {
            let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
            let tau = [self.normal[1], -self.normal[0]];
            [
                d[0] * tau[0] + d[1] * tau[1],
                d[0] * self.normal[0] + d[1] * self.normal[1],
                x[2],
            ]
        }
    }
}

/// Outcome of a trapping check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapReport {
    pub holds: bool,
    /// `max (V(X - shift e_n) - u(X))` over the ball.
    pub below_excess: f64,
    /// `max (u(X) - V(X + shift e_n))` over the ball.
    pub above_excess: f64,
    pub shift: f64,
    pub tolerance: f64,
}

/// Checks `V(X - Lambda r^{2+a} e_n) <= u(X) <= V(X + Lambda r^{2+a} e_n)` at
/// the nodes of `B_r(x0)` in the frame at `x0`, to tolerance `2 h^{1/2}`.
pub fn trap_between_v(
    u: &ScalarField,
    frame: &Frame,
    r: f64,
    p: &VParams,
    holder: f64,
) -> Result<TrapReport> {
    let g = u.grid();
    let n = g.n();
    if p.n() != n {
        return precondition("comparison parameters have the wrong dimension");
    }
    if !p.in_class(1e-9) {
        return precondition("comparison parameters are outside the class");
    }
    let shift = p.lambda * r.powf(2.0 + holder);
    let tolerance = 2.0 * g.h().sqrt();
    let mut c = [0.0; 3];
    c[..n].copy_from_slice(&frame.origin[..n]);
    let mut below: f64 = f64::NEG_INFINITY;
    let mut above: f64 = f64::NEG_INFINITY;
    for i in g.nodes_in_ball(&c[..=n], r) {
        let x = g.point(i);
        let y = frame.local(n, &x[..=n]);
        let mut lo = y;
        let mut hi = y;
        lo[n - 1] -= shift;
        hi[n - 1] += shift;
        let v_lo = eval_v(p, &lo[..=n])?;
        let v_hi = eval_v(p, &hi[..=n])?;
        below = below.max(v_lo - u.value(i));
        above = above.max(u.value(i) - v_hi);
    }
    Ok(TrapReport {
        holds: below <= tolerance && above <= tolerance,
        below_excess: below,
        above_excess: above,
        shift,
        tolerance,
    })
}

/// Fits in-class parameters `(M, a, b)` by a grid search minimizing the sup
/// distance between `u` and `amplitude * V` on `B_r(x0)` in the frame.
pub fn fit_v_params(
    u: &ScalarField,
    frame: &Frame,
    r: f64,
    lambda: f64,
    amplitude: f64,
) -> Result<VParams> {
    let g = u.grid();
    let n = g.n();
    let mut c = [0.0; 3];
    c[..n].copy_from_slice(&frame.origin[..n]);
    let nodes = g.nodes_in_ball(&c[..=n], r);
    let steps = 20;
    let grid_vals: Vec<f64> = (0..=steps)
        .map(|k| -lambda + 2.0 * lambda * k as f64 / steps as f64)
        .collect();
    let mut best: Option<(f64, VParams)> = None;
    let ms: Vec<f64> = if n == 1 { vec![0.0] } else { grid_vals.clone() };
    for &m in &ms {
        for &a in &grid_vals {
            let b = m - a;
            if b.abs() > lambda + 1e-12 {
                continue;
            }
            let p = VParams::new(if n == 1 { vec![] } else { vec![m] }, a, b, lambda)?;
            let mut err: f64 = 0.0;
            let mut ok = true;
            for &i in &nodes {
                let x = g.point(i);
                let y = frame.local(n, &x[..=n]);
                match eval_v(&p, &y[..=n]) {
                    Ok(v) => err = err.max((u.value(i) - amplitude * v).abs()),
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok && best.as_ref().is_none_or(|(e, _)| err < *e) {
                best = Some((err, p));
            }
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| Error::Precondition("no admissible comparison parameters".into()))
}

/// A sliding comparison `alpha U0((x - x0) . nu - s, x_{n+1})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub alpha: f64,
    /// Touch from below (subsolution test) or from above.
    pub below: bool,
    pub normal: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TouchReport {
    pub comparison: Comparison,
    /// Extremal offset `s` keeping the comparison on its side of `u`
    /// (`None` when no offset works).
    pub offset: Option<f64>,
    /// Contact nodes (points of `R^{n+1}`, padded to 3).
    pub contact: Vec<[f64; 3]>,
    /// Whether some contact lies within `2h` of the free boundary near `x0`.
    pub touches_fb: bool,
    pub pass: bool,
}

/// Offset at which `alpha U0(t - s, z)` meets the level `w` at `(t, z)`:
/// `U0(tau, z) <= w` exactly for `tau <= w^2 - z^2 / (4 w^2)`.
fn critical_offset(t: f64, z: f64, w: f64) -> Option<f64> {
    if w > 0.0 {
        Some(t - (w * w - z * z / (4.0 * w * w)))
    } else if z == 0.0 {
        Some(t)
    } else {
        None
    }
}

/// Slides a comparison against `u` on the lattice nodes `nodes` (points in
/// `R^{n+1}`, with values) around `x0`, and reports its contact set.
///
/// `fb` lists free-boundary points of `u`; contact within `2h` of one of
/// them lying within `radius / 2` of `x0` counts as touching at the free
/// boundary.
pub fn viscosity_touch(
    nodes: &[([f64; 3], f64)],
    n: usize,
    x0: &[f64],
    fb: &[[f64; 2]],
    h: f64,
    radius: f64,
    cmp: Comparison,
) -> TouchReport {
    let mut offs = Vec::with_capacity(nodes.len());
    for &(x, val) in nodes {
        let t: f64 = (0..n).map(|a| (x[a] - x0[a]) * cmp.normal[a]).sum();
        let w = val / cmp.alpha;
        // a zero node never constrains a comparison from above
        if !cmp.below && w <= 0.0 {
            offs.push(Some(f64::INFINITY));
        } else {
            offs.push(critical_offset(t, x[n], w));
        }
    }
    // below: v_s <= u needs s >= s_i at every node; above: v_s >= u needs s <= s_i
    let offset = if cmp.below {
        if offs.iter().any(Option::is_none) {
            None
        } else {
            offs.iter()
                .flatten()
                .copied()
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
        }
    } else {
        offs.iter()
            .flatten()
            .copied()
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))))
    };
    let Some(s) = offset else {
        return TouchReport {
            comparison: cmp,
            offset: None,
            contact: Vec::new(),
            touches_fb: false,
            pass: true,
        };
    };
    let eps = 1e-9 * radius.max(h);
    let contact: Vec<[f64; 3]> = nodes
        .iter()
        .zip(&offs)
        .filter(|(_, o)| o.is_some_and(|v| v.is_finite() && (v - s).abs() <= eps))
        .map(|(&(x, _), _)| x)
        .collect();
    let near_fb: Vec<&[f64; 2]> = fb
        .iter()
        .filter(|p| (0..n).map(|a| (p[a] - x0[a]).powi(2)).sum::<f64>().sqrt() <= 0.5 * radius)
        .collect();
    let touches_fb = contact.iter().any(|c| {
        c[n].abs() <= 2.0 * h + 1e-12
            && near_fb.iter().any(|p| {
                (0..n).map(|a| (p[a] - c[a]).powi(2)).sum::<f64>().sqrt() <= 2.0 * h + 1e-12
            })
    });
    debug_assert!(contact.iter().all(|c| {
        let t: f64 = (0..n).map(|a| (c[a] - x0[a]) * cmp.normal[a]).sum();
        (cmp.alpha * eval_u0(t - s, c[n])).is_finite()
    }));
    TouchReport {
        comparison: cmp,
        offset: Some(s),
        contact,
        touches_fb,
        pass: !touches_fb,
    }
}

/// Amplitudes of the standard battery: strict subsolutions tested from
/// below and strict supersolutions tested from above.
pub const BATTERY_BELOW: [f64; 3] = [1.05, 1.1, 1.25];
pub const BATTERY_ABOVE: [f64; 3] = [0.75, 0.9, 0.95];

/// Lattice neighbourhood of a free-boundary point for the battery, with
/// values of `u` divided by `normalization`.
pub fn touch_nodes(
    u: &ScalarField,
    x0: &[f64],
    radius: f64,
    normalization: f64,
) -> Vec<([f64; 3], f64)> {
    let g = u.grid();
    let n = g.n();
    let mut c = [0.0; 3];
    c[..n].copy_from_slice(&x0[..n]);
    g.nodes_in_ball(&c[..=n], radius)
        .into_iter()
        .map(|i| (g.point(i), u.value(i) / normalization))
        .collect()
}

/// Lattice neighbourhood of the cylindrical lift `U(y1, y2, z) = u(y2, z)` of
/// a field with one slit dimension, around `(0, x0)`.
pub fn lifted_touch_nodes(
    u: &ScalarField,
    x0: f64,
    radius: f64,
    normalization: f64,
) -> Vec<([f64; 3], f64)> {
    let g = u.grid();
    let h = g.h();
    let k = (radius / h).floor() as isize;
    let mut out = Vec::new();
    for i in g.nodes_in_ball(&[x0, 0.0], radius) {
        let p = g.point(i);
        for j in -k..=k {
            let y1 = j as f64 * h;
            let d2 = y1 * y1 + (p[0] - x0).powi(2) + p[1] * p[1];
            if d2 <= radius * radius * (1.0 + 1e-12) {
                out.push(([y1, p[0], p[1]], u.value(i) / normalization));
            }
        }
    }
    out
}

/// Runs the six amplitudes against `directions` (unit slit vectors).
pub fn viscosity_battery(
    nodes: &[([f64; 3], f64)],
    n: usize,
    x0: &[f64],
    fb: &[[f64; 2]],
    h: f64,
    radius: f64,
    directions: &[[f64; 2]],
) -> Vec<TouchReport> {
    let mut out = Vec::new();
    for &nu in directions {
        for &alpha in &BATTERY_BELOW {
            out.push(viscosity_touch(
                nodes,
                n,
                x0,
                fb,
                h,
                radius,
                Comparison {
                    alpha,
                    below: true,
                    normal: nu,
                },
            ));
        }
        for &alpha in &BATTERY_ABOVE {
            out.push(viscosity_touch(
                nodes,
                n,
                x0,
                fb,
                h,
                radius,
                Comparison {
                    alpha,
                    below: false,
                    normal: nu,
                },
            ));
        }
    }
    out
}

/// Eight slit directions at 45 degree steps starting from `nu`.
pub fn eight_directions(nu: [f64; 2]) -> Vec<[f64; 2]> {
    let a0 = nu[1].atan2(nu[0]);
    (0..8)
        .map(|k| {
            let a = a0 + k as f64 * std::f64::consts::FRAC_PI_4;
            [a.cos(), a.sin()]
        })
        .collect()
}

/// Minimum forward difference `u(X + h d) - u(X)` over region nodes whose
/// shifted point stays in the box; monotone iff it is at least `-tol`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monotonicity {
    pub monotone: bool,
    pub min_increment: f64,
}

pub fn directional_monotonicity(
    u: &ScalarField,
    direction: &[f64],
    region: &Region,
    tol: f64,
) -> Result<Monotonicity> {
    let g = u.grid();
    let n = g.n();
    let h = g.h();
    let nodes: Vec<usize> = match *region {
        Region::Whole => (0..g.len()).collect(),
        Region::Ball { center, radius } => {
            let mut c = [0.0; 3];
            c[..n].copy_from_slice(&center[..n]);
            g.nodes_in_ball(&c[..=n], radius)
        }
        Region::Box { .. } => {
            return precondition("directional monotonicity takes a ball or the whole box")
        }
    };
    let mut min = f64::INFINITY;
    for i in nodes {
        let x = g.point(i);
        let mut y = x;
        for a in 0..n {
            y[a] += h * direction[a];
        }
        if !g.contains(&y[..=n]) {
            continue;
        }
        let d = u.eval(&y[..=n])? - u.value(i);
        min = min.min(d);
    }
    if !min.is_finite() {
        return precondition("no admissible node pairs in the region");
    }
    Ok(Monotonicity {
        monotone: min >= -tol,
        min_increment: min,
    })
}
