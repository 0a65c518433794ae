//! Closed-form solutions and comparison functions.
//!
//! `U0(t, s) = rho^{1/2} cos(beta/2)` is the half-plane solution, written here
//! as `sqrt((rho + t) / 2)` so that the zero set `{t <= 0, s = 0}` is exact.
//! `v_{a,b}` perturbs it to second order and `V_{M,a,b}` composes `v_{a,b}`
//! with the signed distance to the quadratic surface `{x_n = x'^T M x' / 2}`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::grid::Field;

/// FB coefficient forced on minimizers: `sqrt(2 / pi)`.
pub const MINIMAL_CONE_AMPLITUDE: f64 = 0.797_884_560_802_865_4;

/// Volume of the n-dimensional unit ball.
pub fn omega(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => {
            let nf = n as f64;
            PI.powf(nf / 2.0) / gamma_half_integer(nf / 2.0 + 1.0)
        }
    }
}

fn gamma_half_integer(x: f64) -> f64 {
    // x is an integer or half-integer >= 1/2
    if (x - 0.5).abs() < 1e-12 {
        PI.sqrt()
    } else if (x - 1.0).abs() < 1e-12 {
        1.0
    } else {
        (x - 1.0) * gamma_half_integer(x - 1.0)
    }
}

/// `U0(t, s)`; nonnegative everywhere, zero exactly on `{t <= 0, s = 0}`.
#[inline]
pub fn eval_u0(t: f64, s: f64) -> f64 {
    let rho = t.hypot(s);
    if t >= 0.0 {
        (0.5 * (rho + t)).sqrt()
    } else if s == 0.0 {
        0.0
    } else {
        // rho + t cancels near the cut
        s.abs() / (2.0 * (rho - t)).sqrt()
    }
}

/// Gradient `(d/dt, d/ds)` of `U0`. On the cut `{t < 0, s = 0}` the upper-half
/// limit is returned. Undefined (infinite) at the origin.
pub fn grad_u0(t: f64, s: f64) -> (f64, f64) {
    let rho = t.hypot(s);
    let (c, sn) = if t >= 0.0 {
        let c = (0.5 * (rho + t) / rho).sqrt();
        (c, 0.5 * s.abs() / (rho * c))
    } else {
        let sn = (0.5 * (rho - t) / rho).sqrt();
        (0.5 * s.abs() / (rho * sn), sn)
    };
    let sign = if s < 0.0 { -1.0 } else { 1.0 };
    let k = 0.5 / rho.sqrt();
    (k * c, sign * k * sn)
}

/// `v_{a,b}(t, s) = (1 + a rho / 4 + b t / 2) U0(t, s)`, defined where the
/// prefactor is nonnegative.
pub fn eval_v_ab(a: f64, b: f64, t: f64, s: f64) -> Result<f64> {
    let rho = t.hypot(s);
    let pre = 1.0 + 0.25 * a * rho + 0.5 * b * t;
    if pre < -1e-14 {
        return precondition(format!(
            "v_ab prefactor {pre} is negative at (t, s) = ({t}, {s})"
        ));
    }
    Ok(pre.max(0.0) * eval_u0(t, s))
}

/// Parameters `(M, a, b, Lambda)` of the comparison function `V_{M,a,b}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VParams {
    /// Symmetric `(n-1) x (n-1)` matrix, row-major (empty for `n = 1`).
    pub m: Vec<f64>,
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
}

impl VParams {
    pub fn new(m: Vec<f64>, a: f64, b: f64, lambda: f64) -> Result<Self> {
        match m.len() {
            0 | 1 => {}
            k => {
                return precondition(format!(
                    "M must be empty (n=1) or 1x1 (n=2), got {k} entries"
                ))
            }
        }
        if lambda < 0.0 {
            return precondition("Lambda must be nonnegative");
        }
        Ok(VParams { m, a, b, lambda })
    }

    /// The flat case `M = 0, a = b = 0` in slit dimension `n`.
    pub fn flat(n: usize, lambda: f64) -> Self {
        VParams {
            m: vec![0.0; (n - 1) * (n - 1)],
            a: 0.0,
            b: 0.0,
            lambda,
        }
    }

    pub fn n(&self) -> usize {
        if self.m.is_empty() {
            1
        } else {
            2
        }
    }

    pub fn trace(&self) -> f64 {
        self.m.first().copied().unwrap_or(0.0)
    }

    /// Operator norm of `M`.
    pub fn norm(&self) -> f64 {
        self.m.first().map_or(0.0, |v| v.abs())
    }

    /// `a + b - tr M`.
    pub fn constraint_defect(&self) -> f64 {
        self.a + self.b - self.trace()
    }

    /// Membership in the class `V^0_Lambda`.
    pub fn in_class(&self, tol: f64) -> bool {
        self.constraint_defect().abs() <= tol
            && self.norm() <= self.lambda + tol
            && self.a.abs() <= self.lambda + tol
            && self.b.abs() <= self.lambda + tol
    }

    /// Parameters of `lambda^{-1/2} V(lambda X)`: `(lM, la, lb, lLambda)`.
    pub fn rescale(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return precondition("rescaling factor must be positive");
        }
        Ok(VParams {
            m: self.m.iter().map(|v| v * lambda).collect(),
            a: self.a * lambda,
            b: self.b * lambda,
            lambda: self.lambda * lambda,
        })
    }

    /// Flat key-value record: `v_m` (comma-separated, row-major), `v_a`, `v_b`, `v_lambda`.
    pub fn to_record(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        let m: Vec<String> = self.m.iter().map(|v| v.to_string()).collect();
        out.insert("v_m".into(), m.join(","));
        out.insert("v_a".into(), self.a.to_string());
        out.insert("v_b".into(), self.b.to_string());
        out.insert("v_lambda".into(), self.lambda.to_string());
        out
    }

    pub fn from_record(rec: &BTreeMap<String, String>) -> Result<Self> {
        let num = |k: &str| -> Result<f64> {
            let v = rec
                .get(k)
                .ok_or_else(|| Error::Format(format!("missing key '{k}'")))?;
            v.trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad number for '{k}': '{v}'")))
        };
        let m = match rec.get("v_m").map(|s| s.trim()) {
            None | Some("") => Vec::new(),
            Some(s) => s
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|_| Error::Format(format!("bad entry '{t}' in v_m")))
                })
                .collect::<Result<Vec<f64>>>()?,
        };
        VParams::new(m, num("v_a")?, num("v_b")?, num("v_lambda")?)
    }
}

/// Signed distance from the slit point `(x1, x2)` to the parabola
/// `{x2 = m x1^2 / 2}`, positive above. Damped Newton on the foot-point
/// equation, started from the vertical projection.
pub fn signed_distance_to_parabola(m: f64, x1: f64, x2: f64) -> Result<f64> {
    let above = x2 - 0.5 * m * x1 * x1;
    if m == 0.0 {
        return Ok(x2);
    }
    let f = |s: f64| {
        let q = x2 - 0.5 * m * s * s;
        0.5 * ((x1 - s).powi(2) + q * q)
    };
    let scale = 1.0 + x1.abs() + x2.abs();
    let mut s = x1;
    let mut converged = false;
    for _ in 0..50 {
        let q = x2 - 0.5 * m * s * s;
        let fp = -(x1 - s) - m * s * q;
        if fp.abs() <= 1e-15 * scale {
            converged = true;
            break;
        }
        let fpp = 1.0 - m * q + m * m * s * s;
        let mut step = if fpp > 1e-12 { -fp / fpp } else { -fp };
        let f0 = f(s);
        let mut tries = 0;
        while f(s + step) > f0 && tries < 60 {
            step *= 0.5;
            tries += 1;
        }
        s += step;
        if step.abs() <= 1e-16 * (1.0 + s.abs()) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::ProjectionFailed(vec![x1, x2]));
    }
    let d = (2.0 * f(s)).sqrt();
    Ok(if above >= 0.0 { d } else { -d })
}

/// `V_{M,a,b}(X) = v_{a,b}(t, x_{n+1})` with `t` the signed distance from `x`
/// to `S = {x_n = x'^T M x' / 2}`.
pub fn eval_v(p: &VParams, x: &[f64]) -> Result<f64> {
    let n = p.n();
    let t = signed_distance(p, x)?;
    eval_v_ab(p.a, p.b, t, x[n])
}

/// Signed distance from the slit part of `x` to the surface `S` of `p`.
pub fn signed_distance(p: &VParams, x: &[f64]) -> Result<f64> {
    match p.n() {
        1 => Ok(x[0]),
        _ => signed_distance_to_parabola(p.m[0], x[0], x[1]),
    }
}

/// `alpha U0((x - x0) . nu, x_{n+1})`: a rotated and translated half-plane solution.
#[derive(Debug, Clone, PartialEq)]
pub struct TrivialCone {
    n: usize,
    pub amplitude: f64,
    pub normal: [f64; 2],
    pub origin: [f64; 2],
}

impl TrivialCone {
    /// `U0(x_n, x_{n+1})` itself.
    pub fn unit(n: usize) -> Self {
        let mut normal = [0.0; 2];
        normal[n - 1] = 1.0;
        TrivialCone {
            n,
            amplitude: 1.0,
            normal,
            origin: [0.0; 2],
        }
    }

    /// `sqrt(2/pi) U0`, the amplitude carried by minimizers.
    pub fn minimal(n: usize) -> Self {
        Self::unit(n).with_amplitude(MINIMAL_CONE_AMPLITUDE)
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    /// Unit normal `nu` in the slit (normalized here).
    pub fn with_normal(mut self, nu: &[f64]) -> Self {
        let len = nu.iter().take(self.n).map(|v| v * v).sum::<f64>().sqrt();
        for a in 0..self.n {
            self.normal[a] = nu[a] / len;
        }
        self
    }

    pub fn with_origin(mut self, x0: &[f64]) -> Self {
        self.origin[..self.n].copy_from_slice(&x0[..self.n]);
        self
    }

    pub fn slit_coordinate(&self, x: &[f64]) -> f64 {
        (0..self.n)
            .map(|a| (x[a] - self.origin[a]) * self.normal[a])
            .sum()
    }
}

impl Field for TrivialCone {
    fn n(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.amplitude * eval_u0(self.slit_coordinate(x), x[self.n]))
    }
}

/// `V_{M,a,b}` as a field, scaled by `amplitude`.
#[derive(Debug, Clone, PartialEq)]
pub struct VField {
    pub params: VParams,
    pub amplitude: f64,
}

impl VField {
    pub fn new(params: VParams) -> Self {
        VField {
            params,
            amplitude: 1.0,
        }
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }
}

impl Field for VField {
    fn n(&self) -> usize {
        self.params.n()
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.amplitude * eval_v(&self.params, x)?)
    }
}

/// `X -> lambda^{-1/2} u(center + lambda X)` for a slit point `center`.
pub struct Rescaled<F> {
    inner: F,
    lambda: f64,
    center: [f64; 2],
}

impl<F: Field> Field for Rescaled<F> {
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        let n = self.inner.n();
        let mut y = [0.0; 3];
        for a in 0..n {
            y[a] = self.center[a] + self.lambda * x[a];
        }
        y[n] = self.lambda * x[n];
        Ok(self.inner.eval(&y[..=n])? / self.lambda.sqrt())
    }
}

/// The blow-up rescaling `u_lambda(X) = lambda^{-1/2} u(center + lambda X)`.
pub fn rescale_field<F: Field>(u: F, lambda: f64, center: &[f64]) -> Result<Rescaled<F>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return precondition("rescaling factor must be positive");
    }
    let mut c = [0.0; 2];
    c[..u.n()].copy_from_slice(&center[..u.n()]);
    Ok(Rescaled {
        inner: u,
        lambda,
        center: c,
    })
}

/// Central `2(n+1)`-point Laplacian of a field at `x` with step `step`.
pub fn fd_laplacian(f: &dyn Field, x: &[f64], step: f64) -> Result<f64> {
    let d = f.n() + 1;
    let centre = f.eval(x)?;
    let mut acc = -2.0 * d as f64 * centre;
    let mut y = x.to_vec();
    for a in 0..d {
        for sign in [-1.0, 1.0] {
            y[a] = x[a] + sign * step;
            acc += f.eval(&y)?;
        }
        y[a] = x[a];
    }
    Ok(acc / (step * step))
}

/// `max |fd_laplacian|` over the lattice points of spacing `spacing` in the
/// closed ball `B_radius(center)` (a point of `R^{n+1}`).
pub fn max_fd_laplacian(
    f: &dyn Field,
    center: &[f64],
    radius: f64,
    spacing: f64,
    step: f64,
) -> Result<f64> {
    let d = f.n() + 1;
    let k = (radius / spacing).floor() as i64;
    let mut idx = vec![-k; d];
    let mut best: f64 = 0.0;
    let mut x = vec![0.0; d];
    loop {
        let r2: f64 = idx.iter().map(|&i| (i as f64 * spacing).powi(2)).sum();
        if r2 <= radius * radius * (1.0 + 1e-12) {
            for a in 0..d {
                x[a] = center[a] + idx[a] as f64 * spacing;
            }
            best = best.max(fd_laplacian(f, &x, step)?.abs());
        }
        let mut a = 0;
        loop {
            if a == d {
                return Ok(best);
            }
            if idx[a] < k {
                idx[a] += 1;
                break;
            }
            idx[a] = -k;
            a += 1;
        }
    }
}
