//! Energy quadrature and integral identities.
//!
//! The Dirichlet term is a cell quadrature: on every upper-half cell the
//! squared gradient is the average of squared forward differences over the
//! cell's parallel edges, the cell integral is weighted by the exact volume of
//! its overlap with the region, and the upper half is doubled. On the whole
//! box this equals `2 h^{n-1} Q(u)` for the edge form solved by
//! [`crate::harmonic`], so energy differences between discrete solutions are
//! consistent down to single-cell flips.

use std::f64::consts::PI;

use crate::error::{precondition, Result};
use crate::grid::{for_each_multi, Field, Grid, PositivitySet, ScalarField, MAX_DIM};

/// Integration region, symmetric across the slit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    /// The whole grid box.
    Whole,
    /// Ball of `radius` centred at a slit point (`center[..n]`).
    Ball { center: [f64; 2], radius: f64 },
    /// Slit rectangle `[lo, hi]` times `[-height, height]` in the normal direction.
    Box {
        lo: [f64; 2],
        hi: [f64; 2],
        height: f64,
    },
}

impl Region {
    pub fn ball(center: &[f64], radius: f64) -> Region {
        let mut c = [0.0; 2];
        let k = center.len().min(2);
        c[..k].copy_from_slice(&center[..k]);
        Region::Ball { center: c, radius }
    }

    /// Unit ball at the origin.
    pub fn unit_ball() -> Region {
        Region::Ball {
            center: [0.0; 2],
            radius: 1.0,
        }
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        let e = grid.half_extent() * (1.0 + 1e-12);
        let n = grid.n();
        match *self {
            Region::Whole => Ok(()),
            Region::Ball { center, radius } => {
                if !(radius > 0.0) {
                    return precondition("ball radius must be positive");
                }
                if radius > e || (0..n).any(|a| center[a].abs() + radius > e) {
                    return precondition(format!(
                        "ball of radius {radius} at {:?} leaves the box",
                        &center[..n]
                    ));
                }
                Ok(())
            }
            Region::Box { lo, hi, height } => {
                if height > e
                    || !(height > 0.0)
                    || (0..n).any(|a| lo[a] < -e || hi[a] > e || lo[a] >= hi[a])
                {
                    return precondition("box region must be nonempty and inside the grid box");
                }
                Ok(())
            }
        }
    }

    /// Exact volume fraction of the upper-half cell `[lo, hi]` inside the region.
    fn cell_fraction(&self, n: usize, lo: &[f64], hi: &[f64]) -> f64 {
        match *self {
            Region::Whole => 1.0,
            Region::Box {
                lo: blo,
                hi: bhi,
                height,
            } => {
                let mut f = 1.0;
                for a in 0..=n {
                    let (l, u) = if a < n {
                        (blo[a], bhi[a])
                    } else {
                        (-height, height)
                    };
                    f *= interval_overlap(lo[a], hi[a], l, u) / (hi[a] - lo[a]);
                }
                f
            }
            Region::Ball { center, radius } => {
                let mut near = 0.0;
                let mut far = 0.0;
                let mut rel_lo = [0.0; MAX_DIM];
                let mut rel_hi = [0.0; MAX_DIM];
                for a in 0..=n {
                    let c = if a < n { center[a] } else { 0.0 };
                    rel_lo[a] = lo[a] - c;
                    rel_hi[a] = hi[a] - c;
                    let d_near = if rel_lo[a] > 0.0 {
                        rel_lo[a]
                    } else if rel_hi[a] < 0.0 {
                        -rel_hi[a]
                    } else {
                        0.0
                    };
                    let d_far = rel_lo[a].abs().max(rel_hi[a].abs());
                    near += d_near * d_near;
                    far += d_far * d_far;
                }
                let r2 = radius * radius;
                if near >= r2 {
                    return 0.0;
                }
                if far <= r2 {
                    return 1.0;
                }
                let vol: f64 = (0..=n).map(|a| rel_hi[a] - rel_lo[a]).product();
                let inter = if n == 1 {
                    disk_rect_area(radius, rel_lo[0], rel_hi[0], rel_lo[1], rel_hi[1])
                } else {
                    ball_box_volume(radius, &rel_lo, &rel_hi)
                };
                (inter / vol).clamp(0.0, 1.0)
            }
        }
    }

    /// Exact measure fraction of the slit cell `[lo, hi]` (dimension n) inside
    /// the region's slit trace.
    fn slit_fraction(&self, n: usize, lo: &[f64], hi: &[f64]) -> f64 {
        match *self {
            Region::Whole => 1.0,
            Region::Box {
                lo: blo, hi: bhi, ..
            } => (0..n)
                .map(|a| interval_overlap(lo[a], hi[a], blo[a], bhi[a]) / (hi[a] - lo[a]))
                .product(),
            Region::Ball { center, radius } => {
                if n == 1 {
                    interval_overlap(lo[0], hi[0], center[0] - radius, center[0] + radius)
                        / (hi[0] - lo[0])
                } else {
                    let a = disk_rect_area(
                        radius,
                        lo[0] - center[0],
                        hi[0] - center[0],
                        lo[1] - center[1],
                        hi[1] - center[1],
                    );
                    (a / ((hi[0] - lo[0]) * (hi[1] - lo[1]))).clamp(0.0, 1.0)
                }
            }
        }
    }

    /// Index bounds of cells (or nodes) that can meet the region, per axis.
    fn index_bounds(&self, grid: &Grid) -> ([usize; MAX_DIM], [usize; MAX_DIM]) {
        let n = grid.n();
        let mut lo = [0usize; MAX_DIM];
        let mut hi = [0usize; MAX_DIM];
        for a in 0..=n {
            hi[a] = grid.shape()[a] - 1;
        }
        let (l, u) = match *self {
            Region::Whole => return (lo, hi),
            Region::Ball { center, radius } => {
                let mut l = [0.0; MAX_DIM];
                let mut u = [0.0; MAX_DIM];
                for a in 0..n {
                    l[a] = center[a] - radius;
                    u[a] = center[a] + radius;
                }
                u[n] = radius;
                (l, u)
            }
            Region::Box {
                lo: bl,
                hi: bh,
                height,
            } => {
                let mut l = [0.0; MAX_DIM];
                let mut u = [0.0; MAX_DIM];
                l[..n].copy_from_slice(&bl[..n]);
                u[..n].copy_from_slice(&bh[..n]);
                u[n] = height;
                (l, u)
            }
        };
        let h = grid.h();
        let m = grid.m() as f64;
        for a in 0..=n {
            let off = if a < n { m } else { 0.0 };
            lo[a] = ((l[a] / h + off).floor() - 1.0).max(0.0) as usize;
            hi[a] = ((u[a] / h + off).ceil() + 1.0).min(hi[a] as f64).max(0.0) as usize;
        }
        (lo, hi)
    }
}

fn interval_overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Antiderivative of `sqrt(r^2 - x^2)` on `[-r, r]`.
fn circle_primitive(r: f64, x: f64) -> f64 {
    let x = x.clamp(-r, r);
    0.5 * (x * (r * r - x * x).max(0.0).sqrt() + r * r * (x / r).asin())
}

/// `int_a^b min(y, sqrt(r^2 - x^2))_+ dx` for `y >= 0` (zero outside `|x| <= r`).
fn capped_chord_integral(r: f64, a: f64, b: f64, y: f64) -> f64 {
    let a = a.max(-r);
    let b = b.min(r);
    if a >= b || y <= 0.0 {
        return 0.0;
    }
    if y >= r {
        return circle_primitive(r, b) - circle_primitive(r, a);
    }
    let w = (r * r - y * y).sqrt();
    let flat = y * interval_overlap(a, b, -w, w);
    let left = circle_primitive(r, b.min(-w)) - circle_primitive(r, a.min(-w));
    let right = circle_primitive(r, b.max(w)) - circle_primitive(r, a.max(w));
    flat + left.max(0.0) + right.max(0.0)
}

/// Area of `{x in [a, b], y' in [-s(x), y]}` with `s(x) = sqrt(r^2 - x^2)`.
fn disk_area_below(r: f64, a: f64, b: f64, y: f64) -> f64 {
    let full = capped_chord_integral(r, a, b, r);
    if y >= 0.0 {
        full + capped_chord_integral(r, a, b, y)
    } else {
        full - capped_chord_integral(r, a, b, -y)
    }
}

/// Area of the disk of radius `r` at the origin intersected with `[x0,x1] x [y0,y1]`.
pub(crate) fn disk_rect_area(r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    (disk_area_below(r, x0, x1, y1) - disk_area_below(r, x0, x1, y0)).max(0.0)
}

pub(crate) const GAUSS_X: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
pub(crate) const GAUSS_W: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Volume of the ball of radius `r` at the origin intersected with a box:
/// Gauss-Legendre over the third axis of exact cross-section areas.
fn ball_box_volume(r: f64, lo: &[f64], hi: &[f64]) -> f64 {
    let z0 = lo[2].max(-r);
    let z1 = hi[2].min(r);
    if z0 >= z1 {
        return 0.0;
    }
    // split where the section disk passes a box edge or corner, where the
    // section area has kinks
    let mut cuts = vec![z0, z1];
    let xs = [lo[0], hi[0]];
    let ys = [lo[1], hi[1]];
    for &x in &xs {
        for &y in &ys {
            let d = r * r - x * x - y * y;
            if d > 0.0 {
                cuts.push(d.sqrt());
                cuts.push(-d.sqrt());
            }
        }
        let d = r * r - x * x;
        if d > 0.0 {
            cuts.push(d.sqrt());
            cuts.push(-d.sqrt());
        }
    }
    for &y in &ys {
        let d = r * r - y * y;
        if d > 0.0 {
            cuts.push(d.sqrt());
            cuts.push(-d.sqrt());
        }
    }
    cuts.retain(|&z| z >= z0 && z <= z1);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut vol = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for k in 0..8 {
            let z = mid + half * GAUSS_X[k];
            let rho = (r * r - z * z).max(0.0).sqrt();
            vol += half * GAUSS_W[k] * disk_rect_area(rho, lo[0], hi[0], lo[1], hi[1]);
        }
    }
    vol
}

/// Dirichlet energy `int |grad u|^2` over the symmetric region.
pub fn dirichlet_energy(u: &ScalarField, region: &Region) -> Result<f64> {
    let grid = u.grid();
    region.check(grid)?;
    let n = grid.n();
    let dim = n + 1;
    let h = grid.h();
    let v = u.values();
    let strides = grid.strides();
    let (lo, mut hi) = region.index_bounds(grid);
    for a in 0..dim {
        hi[a] = hi[a].min(grid.shape()[a] - 2);
    }
    let corners = 1usize << dim;
    let mut offs = [0usize; 8];
    for (c, off) in offs.iter_mut().enumerate().take(corners) {
        *off = (0..dim)
            .filter(|a| (c >> a) & 1 == 1)
            .map(|a| strides[a])
            .sum();
    }
    let edges_per_axis = (corners / 2) as f64;
    let cell_vol = h.powi(dim as i32);
    let mut total = 0.0;
    for_each_multi(&lo[..dim], &hi[..dim], |idx| {
        let base = grid.index(idx);
        let mut clo = [0.0; MAX_DIM];
        let mut chi = [0.0; MAX_DIM];
        for a in 0..dim {
            clo[a] = grid.coord(a, idx[a]);
            chi[a] = clo[a] + h;
        }
        let frac = region.cell_fraction(n, &clo, &chi);
        if frac == 0.0 {
            return;
        }
        let mut s = 0.0;
        for a in 0..dim {
            for c in 0..corners {
                if (c >> a) & 1 == 0 {
                    let d = v[base + offs[c | (1 << a)]] - v[base + offs[c]];
                    s += d * d;
                }
            }
        }
        total += frac * s / edges_per_axis;
    });
    Ok(2.0 * total * cell_vol / (h * h))
}

/// Slit measure of the nodes selected by `pick`, using dual cells clipped to
/// the grid box and to the region.
pub(crate) fn slit_measure(grid: &Grid, region: &Region, pick: impl Fn(usize) -> bool) -> f64 {
    let n = grid.n();
    let h = grid.h();
    let e = grid.half_extent();
    let (lo, hi) = region.index_bounds(grid);
    let mut total = 0.0;
    for_each_multi(&lo[..n], &hi[..n], |idx| {
        let mut full = [0usize; MAX_DIM];
        full[..n].copy_from_slice(idx);
        let node = grid.index(&full[..=n]);
        let s = grid.slit_id(node).expect("slit index");
        if !pick(s) {
            return;
        }
        let mut clo = [0.0; 2];
        let mut chi = [0.0; 2];
        let mut size = 1.0;
        for a in 0..n {
            let x = grid.coord(a, idx[a]);
            clo[a] = (x - 0.5 * h).max(-e);
            chi[a] = (x + 0.5 * h).min(e);
            size *= chi[a] - clo[a];
        }
        total += size * region.slit_fraction(n, &clo[..n], &chi[..n]);
    });
    total
}

/// `H^n` of the positive phase inside the region's slit trace.
pub fn positivity_measure(mask: &PositivitySet, region: &Region) -> Result<f64> {
    let grid = mask.grid();
    region.check(grid)?;
    Ok(slit_measure(grid, region, |s| mask.get(s)))
}

/// `E(u, region)`: Dirichlet term plus positivity measure.
pub fn total_energy(u: &ScalarField, mask: &PositivitySet, region: &Region) -> Result<f64> {
    if u.grid() != mask.grid() {
        return precondition("field and mask must share the same lattice");
    }
    Ok(dirichlet_energy(u, region)? + positivity_measure(mask, region)?)
}

/// Sums of sphere integrands over `dB_r(center)` (full sphere, evenness used).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SphereMoments {
    /// `int u^2`
    pub u2: f64,
    /// `int u u_nu`
    pub u_dn: f64,
    /// `int u_nu^2`
    pub dn2: f64,
    /// `int |grad u|^2`
    pub grad2: f64,
    /// `int (u_nu - u / (2r))^2`
    pub homogeneity: f64,
    /// Quadrature area (exact sphere area up to rounding).
    pub area: f64,
}

/// Sphere quadrature of a field around a slit point.
///
/// `spacing` sets the resolution: arc spacing of the quadrature nodes and the
/// step of the one-sided normal differences and angular tangential differences.
pub fn sphere_moments(
    u: &dyn Field,
    center: &[f64],
    r: f64,
    spacing: f64,
) -> Result<SphereMoments> {
    let n = u.n();
    if !(r > 0.0 && spacing > 0.0) {
        return precondition("sphere radius and spacing must be positive");
    }
    let delta = spacing.min(r / 4.0);
    let mut acc = SphereMoments::default();
    let mut point = |x: [f64; 3], nu: [f64; 3], w: f64, tan2: f64| -> Result<()> {
        let at = |s: f64| -> Result<f64> {
            let mut y = [0.0; 3];
            for a in 0..=n {
                y[a] = x[a] - s * nu[a];
            }
            u.eval(&y[..=n])
        };
        let u0 = at(0.0)?;
        let dn = (3.0 * u0 - 4.0 * at(delta)? + at(2.0 * delta)?) / (2.0 * delta);
        acc.u2 += w * u0 * u0;
        acc.u_dn += w * u0 * dn;
        acc.dn2 += w * dn * dn;
        acc.grad2 += w * (dn * dn + tan2);
        acc.homogeneity += w * (dn - 0.5 * u0 / r).powi(2);
        acc.area += w;
        Ok(())
    };
    match n {
        1 => {
            // periodic trapezoid on the full circle, folded onto theta in [0, pi]
            let k = ((PI * r / spacing).ceil() as usize).max(64);
            let dth = PI / k as f64;
            let pos = |th: f64| [center[0] + r * th.cos(), r * th.sin(), 0.0];
            let vals: Vec<f64> = (0..=k)
                .map(|i| {
                    let p = pos(i as f64 * dth);
                    u.eval(&p[..2])
                })
                .collect::<Result<_>>()?;
            for i in 0..=k {
                let th = i as f64 * dth;
                let w = if i == 0 || i == k {
                    r * dth
                } else {
                    2.0 * r * dth
                };
                // evenness: the neighbours of the end points are their mirrors
                let prev = if i == 0 { vals[1] } else { vals[i - 1] };
                let next = if i == k { vals[k - 1] } else { vals[i + 1] };
                let dt = (next - prev) / (2.0 * r * dth);
                let nu = [th.cos(), th.sin(), 0.0];
                point(pos(th), nu, w, dt * dt)?;
            }
        }
        2 => {
            // latitude-longitude midpoint rule on the upper hemisphere,
            // theta measured from the normal axis, doubled
            let kt = ((0.5 * PI * r / spacing).ceil() as usize).max(32);
            let kp = ((2.0 * PI * r / spacing).ceil() as usize).max(64);
            let dth = 0.5 * PI / kt as f64;
            let dph = 2.0 * PI / kp as f64;
            let eps = (spacing / r).min(dth);
            let pos = |th: f64, ph: f64| {
                [
                    center[0] + r * th.sin() * ph.cos(),
                    center[1] + r * th.sin() * ph.sin(),
                    r * th.cos(),
                ]
            };
            let ev = |th: f64, ph: f64| -> Result<f64> {
                // theta beyond pi/2 is the mirror of pi - theta
                let th = if th > 0.5 * PI { PI - th } else { th };
                u.eval(&pos(th, ph))
            };
            for i in 0..kt {
                let th = (i as f64 + 0.5) * dth;
                let w = 2.0 * r * r * ((i as f64 * dth).cos() - ((i + 1) as f64 * dth).cos()) * dph;
                let st = th.sin();
                for j in 0..kp {
                    let ph = j as f64 * dph;
                    let ephi = (eps / st).min(PI / 2.0);
                    // keep the polar stencil on one side of the equator kink
                    let et = eps.min(0.5 * PI - th);
                    let dth_u = (ev(th + et, ph)? - ev(th - et, ph)?) / (2.0 * r * et);
                    let dph_u = (ev(th, ph + ephi)? - ev(th, ph - ephi)?) / (2.0 * r * st * ephi);
                    let nu = [st * ph.cos(), st * ph.sin(), th.cos()];
                    point(pos(th, ph), nu, w, dth_u * dth_u + dph_u * dph_u)?;
                }
            }
        }
        _ => return precondition("slit dimension must be 1 or 2"),
    }
    Ok(acc)
}

fn check_sphere(grid: &Grid, center: &[f64], r: f64) -> Result<()> {
    Region::ball(center, r).check(grid)?;
    if r < 4.0 * grid.h() {
        return precondition(format!("radius {r} is below 4h = {}", 4.0 * grid.h()));
    }
    Ok(())
}

/// `|int_{B_r} |grad u|^2 - int_{dB_r} u u_nu|` for a ball centred at a slit point.
pub fn flux_identity_residual(u: &ScalarField, center: &[f64], r: f64) -> Result<f64> {
    let grid = u.grid();
    check_sphere(grid, center, r)?;
    let vol = dirichlet_energy(u, &Region::ball(center, r))?;
    let sph = sphere_moments(u, center, r, grid.h())?;
    Ok((vol - sph.u_dn).abs())
}

/// Terms of the Pohozaev-type identity
/// `(n-1) int_B |grad u|^2 = int_dB (|grad u|^2 - 2 u_nu^2) - n H^n({u>0} in B) + H^{n-1}({u>0} in dB)`,
/// each rescaled to the unit ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PohozaevTerms {
    pub volume: f64,
    pub boundary: f64,
    pub measure: f64,
    pub trace: f64,
}

impl PohozaevTerms {
    pub fn lhs(&self) -> f64 {
        self.volume
    }

    pub fn rhs(&self) -> f64 {
        self.boundary - self.measure + self.trace
    }

    pub fn residual(&self) -> f64 {
        (self.lhs() - self.rhs()).abs()
    }

    /// Largest term in absolute value.
    pub fn dominant(&self) -> f64 {
        [self.volume, self.boundary, self.measure, self.trace]
            .iter()
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

pub fn pohozaev_terms(
    u: &ScalarField,
    mask: &PositivitySet,
    center: &[f64],
    r: f64,
) -> Result<PohozaevTerms> {
    let grid = u.grid();
    check_sphere(grid, center, r)?;
    if mask.grid() != grid {
        return precondition("field and mask must share the same lattice");
    }
    let n = grid.n();
    let nf = n as f64;
    let ball = Region::ball(center, r);
    let vol = dirichlet_energy(u, &ball)?;
    let sph = sphere_moments(u, center, r, grid.h())?;
    let meas = positivity_measure(mask, &ball)?;
    let trace = match n {
        1 => [center[0] - r, center[0] + r]
            .iter()
            .filter(|&&x| mask.phase_at(&[x]) == Some(true))
            .count() as f64,
        _ => {
            let k = ((2.0 * PI * r / grid.h()).ceil() as usize * 4).max(256);
            let hits = (0..k)
                .filter(|&j| {
                    let ph = 2.0 * PI * (j as f64 + 0.5) / k as f64;
                    mask.phase_at(&[center[0] + r * ph.cos(), center[1] + r * ph.sin()])
                        == Some(true)
                })
                .count();
            2.0 * PI * r * hits as f64 / k as f64
        }
    };
    let s_vol = r.powf(-nf);
    let s_sph = r.powf(1.0 - nf);
    Ok(PohozaevTerms {
        volume: (nf - 1.0) * s_vol * vol,
        boundary: s_sph * (sph.grad2 - 2.0 * sph.dn2),
        measure: nf * s_vol * meas,
        trace: s_sph * trace,
    })
}

/// Absolute residual of the Pohozaev-type identity, rescaled to the unit ball.
pub fn pohozaev_residual(
    u: &ScalarField,
    mask: &PositivitySet,
    center: &[f64],
    r: f64,
) -> Result<f64> {
    Ok(pohozaev_terms(u, mask, center, r)?.residual())
}
