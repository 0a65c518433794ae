//! Diagnostic batteries shared by `diagnose` and `verify-exact`.

use serde::Serialize;

use thinphase_core::closedform::{max_fd_laplacian, omega};
use thinphase_core::cones::logcutoff_decay;
use thinphase_core::energy::{dirichlet_energy, flux_identity_residual, pohozaev_terms};
use thinphase_core::fbdiag::{
    density, eight_directions, extract_fb, fit_alpha, holder_ratio, lifted_touch_nodes,
    nondegeneracy, tangential_decay, touch_nodes, trap_between_v, viscosity_battery, Frame,
};
use thinphase_core::grid::{positivity_of, sample};
use thinphase_core::weiss::{best_fit_cone, blowup_sequence, weiss_profile};
use thinphase_core::{
    Grid, PositivitySet, Region, Result, ScalarField, TrivialCone, VField, VParams,
    MINIMAL_CONE_AMPLITUDE,
};

/// One diagnostic: its value, the tolerance it is judged against and the
/// grid step it was computed at (0 for grid-free checks).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub check: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub h: f64,
}

impl Check {
    pub fn new(check: impl Into<String>, value: f64, tolerance: f64, pass: bool, h: f64) -> Check {
        Check {
            check: check.into(),
            value,
            tolerance,
            pass,
            h,
        }
    }

    /// Passes when `value <= tolerance`.
    pub fn at_most(check: impl Into<String>, value: f64, tolerance: f64, h: f64) -> Check {
        Check::new(check, value, tolerance, value <= tolerance, h)
    }

    /// Passes when `value >= tolerance`.
    pub fn at_least(check: impl Into<String>, value: f64, tolerance: f64, h: f64) -> Check {
        Check::new(check, value, tolerance, value >= tolerance, h)
    }
}

/// Radii `4h, 8h, ...` up to and including `max`.
pub fn dyadic_radii(h: f64, max: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = 4.0 * h;
    while r < max * (1.0 - 1e-12) {
        out.push(r);
        r *= 2.0;
    }
    out.push(max);
    out
}

/// Tolerances and scales of the solution diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnoseOptions {
    /// Expected expansion coefficient of the data normalization.
    pub normalization: f64,
    pub alpha_tol: f64,
    pub density_bounds: [f64; 2],
    pub nondegeneracy_min: f64,
    pub radius_max: f64,
    pub blowup_tol: f64,
    pub touch_radius: f64,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        DiagnoseOptions {
            normalization: MINIMAL_CONE_AMPLITUDE,
            alpha_tol: 0.05,
            density_bounds: [0.1, 0.9],
            nondegeneracy_min: 0.3,
            radius_max: 0.25,
            blowup_tol: 0.1,
            touch_radius: 0.25,
        }
    }
}

/// Results of the 48-test viscosity battery at one free-boundary point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryCount {
    pub total: usize,
    pub passed: usize,
}

/// Runs the battery at the free-boundary point nearest the origin, with the
/// field divided by `normalization`. Fields with one slit dimension are
/// tested through their cylindrical lift so that eight slit directions exist.
pub fn viscosity_count(
    u: &ScalarField,
    mask: &PositivitySet,
    normalization: f64,
    radius: f64,
) -> Result<BatteryCount> {
    let fb = extract_fb(mask)?;
    let grid = u.grid();
    let h = grid.h();
    let v = fb
        .vertices
        .iter()
        .min_by(|a, b| {
            a.point[0]
                .hypot(a.point[1])
                .total_cmp(&b.point[0].hypot(b.point[1]))
        })
        .expect("free boundary is nonempty");
    let reports = if grid.n() == 1 {
        let x0 = v.point[0];
        let nodes = lifted_touch_nodes(u, x0, radius, normalization);
        let k = ((radius / h).ceil() as i64) + 2;
        let lifted: Vec<[f64; 2]> = mask
            .fb_points()
            .iter()
            .flat_map(|p| (-k..=k).map(move |j| [j as f64 * h, p[0]]))
            .collect();
        let nu = [0.0, v.normal[0]];
        viscosity_battery(
            &nodes,
            2,
            &[0.0, x0],
            &lifted,
            h,
            radius,
            &eight_directions(nu),
        )
    } else {
        let nodes = touch_nodes(u, &v.point, radius, normalization);
        viscosity_battery(
            &nodes,
            2,
            &v.point,
            &mask.fb_points(),
            h,
            radius,
            &eight_directions(v.normal),
        )
    };
    Ok(BatteryCount {
        total: reports.len(),
        passed: reports.iter().filter(|r| r.pass).count(),
    })
}

/// Free-boundary diagnostics of a solution.
pub fn diagnose(
    u: &ScalarField,
    mask: &PositivitySet,
    opts: &DiagnoseOptions,
) -> Result<Vec<Check>> {
    let grid = *u.grid();
    let h = grid.h();
    let n = grid.n();
    let mut out = Vec::new();
    let fb = extract_fb(mask)?;
    out.push(Check::at_least(
        "fb_points",
        fb.vertices.len() as f64,
        1.0,
        h,
    ));
    out.push(Check::new(
        "fb_lipschitz",
        fb.lipschitz,
        f64::INFINITY,
        true,
        h,
    ));

    let mut worst: f64 = 0.0;
    let mut fitted = 0;
    for v in &fb.vertices {
        let far = 16.0 * h;
        let inside = (0..n).all(|a| (v.point[a] + far * v.normal[a]).abs() <= grid.half_extent());
        if !inside {
            continue;
        }
        if let Ok(fit) = fit_alpha(u, &v.point[..n], &v.normal[..n], [2.0 * h, 16.0 * h], h) {
            worst = worst.max((fit.alpha - opts.normalization).abs());
            fitted += 1;
        }
    }
    out.push(Check::at_least("alpha_fits", fitted as f64, 1.0, h));
    out.push(Check::at_most("alpha_deviation", worst, opts.alpha_tol, h));

    let radii = dyadic_radii(h, opts.radius_max);
    let (lo, hi) = density(mask, &radii)?;
    out.push(Check::at_least(
        "density_min",
        lo,
        opts.density_bounds[0],
        h,
    ));
    out.push(Check::at_most("density_max", hi, opts.density_bounds[1], h));
    out.push(Check::at_least(
        "nondegeneracy",
        nondegeneracy(u, mask, &radii)?,
        opts.nondegeneracy_min,
        h,
    ));

    let v = fb
        .vertices
        .iter()
        .min_by(|a, b| {
            a.point[0]
                .hypot(a.point[1])
                .total_cmp(&b.point[0].hypot(b.point[1]))
        })
        .expect("free boundary is nonempty");
    let clearance = (0..n)
        .map(|a| grid.half_extent() - v.point[a].abs())
        .fold(f64::INFINITY, f64::min);
    let mut lambdas = Vec::new();
    let mut l = 0.5f64.min(clearance);
    while l >= 16.0 * h * (1.0 - 1e-12) {
        lambdas.push(l);
        l *= 0.5;
    }
    if lambdas.is_empty() {
        out.push(Check::new(
            "blowup_distance",
            f64::INFINITY,
            opts.blowup_tol,
            false,
            h,
        ));
    } else {
        let seq = blowup_sequence(u, mask, &v.point[..n], &lambdas)?;
        let last = seq.last().expect("nonempty scales");
        let (d, _) = best_fit_cone(&last.field, opts.normalization);
        out.push(Check::at_most("blowup_distance", d, opts.blowup_tol, h));
    }

    let battery = viscosity_count(u, mask, opts.normalization, opts.touch_radius)?;
    out.push(Check::at_least(
        "viscosity_passed",
        battery.passed as f64,
        battery.total as f64,
        h,
    ));

    let holder = holder_ratio(u, &Region::Whole)?;
    out.push(Check::new(
        "holder_ratio",
        holder.ratio,
        f64::INFINITY,
        holder.ratio.is_finite(),
        h,
    ));
    Ok(out)
}

/// Grid steps of the closed-form battery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Step for one slit dimension.
    pub h1: f64,
    /// Step for two slit dimensions.
    pub h2: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            h1: 1.0 / 128.0,
            h2: 1.0 / 32.0,
        }
    }
}

fn cone_sample(n: usize, h: f64, amplitude: f64) -> Result<(ScalarField, PositivitySet)> {
    let grid = Grid::new(n, 1.0, h)?;
    let u = sample(&TrivialCone::unit(n).with_amplitude(amplitude), &grid)?;
    let m = positivity_of(&u, 0.0);
    Ok((u, m))
}

/// Weiss profile of the minimal-amplitude cone over `r in [0.2, 0.8]`:
/// `(relative spread, relative deviation of the mean from omega_n / 2)`.
pub fn cone_weiss_constancy(n: usize, h: f64) -> Result<(f64, f64)> {
    let (u, m) = cone_sample(n, h, MINIMAL_CONE_AMPLITUDE)?;
    let radii: Vec<f64> = (0..7).map(|k| 0.2 + 0.1 * k as f64).collect();
    let p = weiss_profile(&u, &m, &[0.0, 0.0], &radii)?;
    let target = 0.5 * omega(n);
    let mean = p.phi.iter().sum::<f64>() / p.phi.len() as f64;
    Ok((p.spread() / target, (mean - target).abs() / target))
}

/// Relative flux-identity residual of the unit cone on `B_{1/2}`.
pub fn flux_residual(h: f64) -> Result<f64> {
    let (u, _) = cone_sample(1, h, 1.0)?;
    let res = flux_identity_residual(&u, &[0.0], 0.5)?;
    Ok(res / dirichlet_energy(&u, &Region::ball(&[0.0], 0.5))?)
}

/// Pohozaev residual of the unit cone on `B_{1/2}` over its dominant term.
pub fn pohozaev_relative(n: usize, h: f64) -> Result<f64> {
    let (u, m) = cone_sample(n, h, 1.0)?;
    let t = pohozaev_terms(&u, &m, &[0.0, 0.0], 0.5)?;
    Ok(t.residual() / t.dominant())
}

/// `max |Delta V|` over `B_{1/2}(e_n)` for `M = Lambda, a = b = Lambda / 2`
/// in two slit dimensions.
pub fn v_laplacian_bound(lambda: f64) -> Result<f64> {
    let p = VParams::new(vec![lambda], 0.5 * lambda, 0.5 * lambda, lambda)?;
    max_fd_laplacian(&VField::new(p), &[0.0, 1.0, 0.0], 0.5, 1.0 / 16.0, 2e-3)
}

/// Tangential decay exponent of `V` with `M = 1, a = b = 1/2` at the
/// non-vertex point `(0.3, 0.045)` of its free boundary, in the true frame.
pub fn v_tangential_exponent() -> Result<Option<f64>> {
    let (m, s0) = (1.0, 0.3);
    let p = VParams::new(vec![m], 0.5, 0.5, 1.0)?;
    let l = (1.0f64 + m * m * s0 * s0).sqrt();
    let nu = [-m * s0 / l, 1.0 / l];
    let tau = [1.0 / l, m * s0 / l];
    let radii: Vec<f64> = (0..6).map(|k| 0.01 * 10f64.powf(k as f64 / 5.0)).collect();
    Ok(tangential_decay(&VField::new(p), &[s0, 0.5 * m * s0 * s0], &nu, &tau, &radii)?.exponent)
}

/// Largest factor between the log-cutoff values and the least-squares fit
/// `C / log R`.
pub fn logcutoff_fit(radii: &[f64]) -> Result<(f64, Vec<f64>)> {
    let v = logcutoff_decay(radii)?;
    // least squares in log space: log v = log C - log log R
    let c = (v
        .iter()
        .zip(radii)
        .map(|(val, r)| (val * r.ln()).ln())
        .sum::<f64>()
        / v.len() as f64)
        .exp();
    let factor = v.iter().zip(radii).map(|(val, r)| {
        let fit = c / r.ln();
        (val / fit).max(fit / val)
    });
    Ok((factor.fold(1.0, f64::max), v))
}

/// The closed-form battery.
pub fn verify_exact(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let (h1, h2) = (opts.h1, opts.h2);
    let mut out = Vec::new();

    for (n, h) in [(1, h1), (2, h2)] {
        let (spread, dev) = cone_weiss_constancy(n, h)?;
        out.push(Check::at_most(
            format!("weiss_cone_spread_n{n}"),
            spread,
            0.03,
            h,
        ));
        out.push(Check::at_most(
            format!("weiss_cone_value_n{n}"),
            dev,
            0.03,
            h,
        ));
    }

    let steps = [4.0 * h1, 2.0 * h1, h1];
    let res: Vec<f64> = steps
        .iter()
        .map(|&h| flux_residual(h))
        .collect::<Result<_>>()?;
    for (h, r) in steps.iter().zip(&res) {
        out.push(Check::at_most("flux_identity", *r, 0.03, *h));
    }
    let rate = res
        .windows(2)
        .map(|w| w[0] / w[1])
        .fold(f64::INFINITY, f64::min);
    out.push(Check::at_least("flux_identity_rate", rate, 2f64.sqrt(), h1));

    out.push(Check::at_most(
        "pohozaev_n1",
        pohozaev_relative(1, h1)?,
        0.05,
        h1,
    ));
    out.push(Check::at_most(
        "pohozaev_n2",
        pohozaev_relative(2, h2)?,
        0.05,
        h2,
    ));

    let bounds: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&l| v_laplacian_bound(l))
        .collect::<Result<_>>()?;
    for (k, w) in bounds.windows(2).enumerate() {
        let ratio = w[0] / w[1];
        let ok = (4.0 / 1.5..=4.0 * 1.5).contains(&ratio);
        out.push(Check::new(
            format!("v_laplacian_ratio_{k}"),
            ratio,
            4.0,
            ok,
            0.0,
        ));
    }

    let exponent = v_tangential_exponent()?;
    out.push(Check::new(
        "tangential_exponent_v",
        exponent.unwrap_or(0.0),
        0.55,
        exponent.is_some_and(|e| e >= 0.55),
        0.0,
    ));

    let (factor, values) = logcutoff_fit(&[4.0, 16.0, 256.0])?;
    out.push(Check::at_most("logcutoff_fit_factor", factor, 2.0, 0.0));
    out.push(Check::new(
        "logcutoff_monotone",
        values[2] / values[1],
        1.0,
        values[2] <= values[1],
        0.0,
    ));

    let (u, m) = cone_sample(1, h1, 1.0)?;
    let battery = viscosity_count(&u, &m, 1.0, 0.25)?;
    out.push(Check::at_least(
        "viscosity_u0",
        battery.passed as f64,
        battery.total as f64,
        h1,
    ));
    let half = u.clone().scaled(0.5);
    let control = viscosity_count(&half, &m, 1.0, 0.25)?;
    let failed = control.total - control.passed;
    out.push(Check::at_least(
        "viscosity_negative_control_failures",
        failed as f64,
        1.0,
        h1,
    ));

    let frame = Frame::new(&[0.0], &[1.0]);
    let trapped = [0.1, 0.5, 1.0]
        .iter()
        .map(|&r| trap_between_v(&u, &frame, r, &VParams::flat(1, 1.0), 0.5).map(|t| t.holds))
        .collect::<Result<Vec<bool>>>()?;
    let held = trapped.iter().filter(|&&t| t).count();
    out.push(Check::at_least(
        "trap_u0",
        held as f64,
        trapped.len() as f64,
        h1,
    ));

    let holder = holder_ratio(&u, &Region::unit_ball())?.ratio;
    out.push(Check::at_most("holder_u0", (holder - 1.0).abs(), 0.1, h1));

    let (uk, mk) = cone_sample(1, h1, MINIMAL_CONE_AMPLITUDE)?;
    let radii = dyadic_radii(h1, 0.25);
    let (lo, hi) = density(&mk, &radii)?;
    out.push(Check::at_most(
        "density_u0",
        (lo - 0.5).abs().max((hi - 0.5).abs()),
        2.0 * h1 / radii[0],
        h1,
    ));
    let nd = nondegeneracy(&uk, &mk, &radii)? / MINIMAL_CONE_AMPLITUDE;
    out.push(Check::at_most(
        "nondegeneracy_u0",
        (nd - 1.0).abs(),
        0.05,
        h1,
    ));
    let fit = fit_alpha(&uk, &[0.0], &[1.0], [2.0 * h1, 16.0 * h1], h1)?;
    out.push(Check::at_most(
        "alpha_u0",
        (fit.alpha - MINIMAL_CONE_AMPLITUDE).abs(),
        0.05,
        h1,
    ));
    Ok(out)
}
