//! The Weiss functional
//! `Phi_u(r) = r^{-n} E(u, B_r) - (1/2) r^{-n-1} int_{dB_r} u^2`,
//! monotonicity profiles, the scaling identity and blow-up sequences.

use crate::closedform::{eval_u0, omega, rescale_field};
use crate::energy::{sphere_moments, total_energy, Region};
use crate::error::{precondition, Result};
use crate::grid::{sample, Field, Grid, PositivitySet, ScalarField};

/// Reference spacing of blow-up fields.
pub const BLOWUP_SPACING: f64 = 1.0 / 16.0;

fn check_radius(grid: &Grid, center: &[f64], r: f64) -> Result<()> {
    let e = grid.half_extent() * (1.0 + 1e-12);
    if r < 4.0 * grid.h() * (1.0 - 1e-12) {
        return precondition(format!("radius {r} is below 4h = {}", 4.0 * grid.h()));
    }
    if r > e || (0..grid.n()).any(|a| center[a].abs() + r > e) {
        return precondition(format!(
            "radius {r} exceeds the box clearance at {:?}",
            &center[..grid.n()]
        ));
    }
    Ok(())
}

/// `Phi_u(r)` for the ball centred at a slit point.
pub fn weiss_phi(u: &ScalarField, mask: &PositivitySet, center: &[f64], r: f64) -> Result<f64> {
    let grid = u.grid();
    check_radius(grid, center, r)?;
    let nf = grid.n() as f64;
    let e = total_energy(u, mask, &Region::ball(center, r))?;
    let sph = sphere_moments(u, center, r, grid.h())?;
    Ok(r.powf(-nf) * e - 0.5 * r.powf(-nf - 1.0) * sph.u2)
}

/// Sampled Weiss profile around a slit point.
#[derive(Debug, Clone, PartialEq)]
pub struct WeissProfile {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    pub phi: Vec<f64>,
    /// Volume of the unit ball of the slit dimension.
    pub omega_n: f64,
}

impl WeissProfile {
    /// `max(0, max_i (phi_i - phi_{i+1}))`.
    pub fn defect(&self) -> f64 {
        self.phi.windows(2).fold(0.0, |m, w| m.max(w[0] - w[1]))
    }

    /// Running defect: for each radius, the largest drop seen up to it.
    pub fn running_defect(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.phi.len());
        let mut m: f64 = 0.0;
        for i in 0..self.phi.len() {
            if i > 0 {
                m = m.max(self.phi[i - 1] - self.phi[i]);
            }
            out.push(m);
        }
        out
    }

    /// `max |phi|`, the scale defects are measured against.
    pub fn scale(&self) -> f64 {
        self.phi.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Spread `max phi - min phi`.
    pub fn spread(&self) -> f64 {
        let lo = self.phi.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if self.phi.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }
}

pub fn weiss_profile(
    u: &ScalarField,
    mask: &PositivitySet,
    center: &[f64],
    radii: &[f64],
) -> Result<WeissProfile> {
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return precondition("radii must be strictly increasing");
    }
    let phi = radii
        .iter()
        .map(|&r| weiss_phi(u, mask, center, r))
        .collect::<Result<Vec<f64>>>()?;
    let n = u.grid().n();
    Ok(WeissProfile {
        center: center[..n].to_vec(),
        radii: radii.to_vec(),
        phi,
        omega_n: omega(n),
    })
}

/// Samples `X -> lambda^{-1/2} u(center + lambda X)` on `[-extent, extent]^n x [0, extent]`
/// with spacing `spacing`, together with the correspondingly rescaled mask.
pub fn rescaled_sample(
    u: &ScalarField,
    mask: &PositivitySet,
    center: &[f64],
    lambda: f64,
    extent: f64,
    spacing: f64,
) -> Result<(ScalarField, PositivitySet)> {
    let grid = u.grid();
    let n = grid.n();
    let e = grid.half_extent() * (1.0 + 1e-12);
    if lambda * extent > e || (0..n).any(|a| center[a].abs() + lambda * extent > e) {
        return precondition(format!(
            "rescaled box of extent {extent} at scale {lambda} leaves the data box"
        ));
    }
    let target = Grid::new(n, extent, spacing)?;
    let field = sample(&rescale_field(u, lambda, center)?, &target)?;
    let resc = PositivitySet::from_fn(target, |x| {
        let mut y = [0.0; 2];
        for a in 0..n {
            y[a] = center[a] + lambda * x[a];
        }
        mask.phase_at(&y[..n]).unwrap_or(false)
    });
    Ok((field, resc))
}

/// `|Phi_{u_lambda}(r) - Phi_u(lambda r)|`, with `u_lambda` sampled at the
/// data spacing.
pub fn scaling_check(
    u: &ScalarField,
    mask: &PositivitySet,
    center: &[f64],
    lambda: f64,
    r: f64,
) -> Result<f64> {
    let h = u.grid().h();
    let direct = weiss_phi(u, mask, center, lambda * r)?;
    let extent = ((r / h).ceil().max(2.0)) * h;
    let (ul, ml) = rescaled_sample(u, mask, center, lambda, extent, h)?;
    let zero = [0.0; 2];
    let scaled = weiss_phi(&ul, &ml, &zero, r)?;
    Ok((scaled - direct).abs())
}

/// One member of a blow-up sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct BlowUp {
    pub lambda: f64,
    /// `u_lambda` on `[-1, 1]^n x [0, 1]` with spacing [`BLOWUP_SPACING`].
    pub field: ScalarField,
    pub mask: PositivitySet,
    /// `int_{dB_1} (d_nu u_lambda - u_lambda / 2)^2`.
    pub homogeneity: f64,
}

/// Blow-ups of `u` at a free-boundary point for decreasing `lambdas`.
pub fn blowup_sequence(
    u: &ScalarField,
    mask: &PositivitySet,
    center: &[f64],
    lambdas: &[f64],
) -> Result<Vec<BlowUp>> {
    let grid = u.grid();
    let h = grid.h();
    match mask.distance_to_fb(center) {
        Some(d) if d <= h * (1.0 + 1e-9) => {}
        _ => return precondition("blow-up center is not on the free boundary"),
    }
    if lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return precondition("blow-up scales must be decreasing");
    }
    if let Some(&lmin) = lambdas.last() {
        if lmin < 16.0 * h * (1.0 - 1e-12) {
            return precondition(format!(
                "scale {lmin} resolves fewer than 16 cells per unit"
            ));
        }
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let (field, m) = rescaled_sample(u, mask, center, lambda, 1.0, BLOWUP_SPACING)?;
            let resc = rescale_field(u, lambda, center)?;
            let zero = [0.0; 2];
            let homogeneity = sphere_moments(&resc, &zero, 1.0, h / lambda)?.homogeneity;
            Ok(BlowUp {
                lambda,
                field,
                mask: m,
                homogeneity,
            })
        })
        .collect()
}

/// Best fit of `amplitude U0(x . nu, x_{n+1})` over slit directions `nu`:
/// returns the sup-distance over all nodes and the direction.
pub fn best_fit_cone(field: &ScalarField, amplitude: f64) -> (f64, [f64; 2]) {
    let grid = field.grid();
    let n = grid.n();
    let dist = |nu: [f64; 2]| -> f64 {
        (0..grid.len()).fold(0.0, |m, i| {
            let p = grid.point(i);
            let t: f64 = (0..n).map(|a| p[a] * nu[a]).sum();
            m.max((field.value(i) - amplitude * eval_u0(t, p[n])).abs())
        })
    };
    let candidates: Vec<[f64; 2]> = if n == 1 {
        vec![[1.0, 0.0], [-1.0, 0.0]]
    } else {
        (0..360)
            .map(|k| {
                let a = k as f64 * std::f64::consts::PI / 180.0;
                [a.cos(), a.sin()]
            })
            .collect()
    };
    let mut best = (f64::INFINITY, [1.0, 0.0]);
    for nu in candidates {
        let d = dist(nu);
        if d < best.0 {
            best = (d, nu);
        }
    }
    if n == 2 {
        // golden-section refinement of the angle within one coarse step
        let a0 = best.1[1].atan2(best.1[0]);
        let step = std::f64::consts::PI / 180.0;
        let f = |a: f64| dist([a.cos(), a.sin()]);
        let (mut lo, mut hi) = (a0 - step, a0 + step);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..30 {
            let c = hi - g * (hi - lo);
            let d = lo + g * (hi - lo);
            if f(c) < f(d) {
                hi = d;
            } else {
                lo = c;
            }
        }
        let a = 0.5 * (lo + hi);
        let d = f(a);
        if d < best.0 {
            best = (d, [a.cos(), a.sin()]);
        }
    }
    best
}

/// `Phi` of a closed-form field sampled on a grid, with the mask from its slit trace.
pub fn weiss_phi_of(f: &dyn Field, grid: &Grid, center: &[f64], r: f64) -> Result<f64> {
    let u = sample(f, grid)?;
    let mask = crate::grid::positivity_of(&u, 0.0);
    weiss_phi(&u, &mask, center, r)
}
