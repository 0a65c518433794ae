//! Homogeneous degree-1/2 solutions `U = r^{1/2} g(sigma)` through their
//! angular profile on the upper hemisphere of the unit sphere.
//!
//! `g` lives at cell centres of a finite-volume latitude-longitude mesh. The
//! equator faces carry the positivity trace: a zero equator cell imposes
//! `g = 0` on its face, a positive one is a symmetry (no-flux) face.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::closedform::{grad_u0, omega, MINIMAL_CONE_AMPLITUDE};
use crate::energy::{GAUSS_W, GAUSS_X};
use crate::error::{precondition, Error, Result};
use crate::grid::Field;

/// Cells of the half circle (`n = 1`) or of the upper hemisphere (`n = 2`).
#[derive(Debug, Clone, PartialEq)]
pub struct AngularMesh {
    n: usize,
    rows: usize,
    cols: usize,
    mass: Vec<f64>,
    edges: Vec<(usize, usize, f64)>,
    /// Conductance of each equator face under a zero condition.
    face_weight: Vec<f64>,
    face_cell: Vec<usize>,
    face_length: Vec<f64>,
}

impl AngularMesh {
    /// Half circle `beta in (0, pi)` measured from `e_1`, in `cells` cells.
    /// The two equator points are `e_1` (index 0) and `-e_1` (index 1).
    pub fn half_circle(cells: usize) -> Result<Self> {
        if cells < 4 {
            return Err(Error::InvalidGrid(
                "the half circle needs at least 4 cells".into(),
            ));
        }
        let d = PI / cells as f64;
        let edges = (0..cells - 1).map(|k| (k, k + 1, 1.0 / d)).collect();
        Ok(AngularMesh {
            n: 1,
            rows: cells,
            cols: 1,
            mass: vec![d; cells],
            edges,
            face_weight: vec![2.0 / d; 2],
            face_cell: vec![0, cells - 1],
            face_length: vec![1.0; 2],
        })
    }

    /// Upper hemisphere with `rows` polar bands from the pole to the equator
    /// and `cols` longitudes.
    pub fn hemisphere(rows: usize, cols: usize) -> Result<Self> {
        if rows < 2 || cols < 8 {
            return Err(Error::InvalidGrid(
                "the hemisphere needs at least 2 rows and 8 columns".into(),
            ));
        }
        let dt = 0.5 * PI / rows as f64;
        let dp = 2.0 * PI / cols as f64;
        let id = |i: usize, j: usize| i * cols + j;
        let mut mass = Vec::with_capacity(rows * cols);
        let mut edges = Vec::new();
        for i in 0..rows {
            let lo = i as f64 * dt;
            let hi = lo + dt;
            let band = (lo.cos() - hi.cos()) * dp;
            let mid = lo + 0.5 * dt;
            for j in 0..cols {
                mass.push(band);
                edges.push((id(i, j), id(i, (j + 1) % cols), dt / (mid.sin() * dp)));
                if i + 1 < rows {
                    edges.push((id(i, j), id(i + 1, j), hi.sin() * dp / dt));
                }
            }
        }
        Ok(AngularMesh {
            n: 2,
            rows,
            cols,
            mass,
            edges,
            face_weight: vec![2.0 * dp / dt; cols],
            face_cell: (0..cols).map(|j| id(rows - 1, j)).collect(),
            face_length: vec![dp; cols],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cell_count(&self) -> usize {
        self.mass.len()
    }

    pub fn equator_len(&self) -> usize {
        self.face_cell.len()
    }

    /// Centre of a cell as a point of `R^{n+1}` (normal coordinate last).
    pub fn cell_point(&self, c: usize) -> [f64; 3] {
        if self.n == 1 {
            let b = (c as f64 + 0.5) * PI / self.rows as f64;
            [b.cos(), b.sin(), 0.0]
        } else {
            let (i, j) = (c / self.cols, c % self.cols);
            let t = (i as f64 + 0.5) * 0.5 * PI / self.rows as f64;
            let p = (j as f64 + 0.5) * 2.0 * PI / self.cols as f64;
            [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]
        }
    }

    /// Equator point of an equator cell.
    pub fn equator_point(&self, e: usize) -> [f64; 3] {
        if self.n == 1 {
            [if e == 0 { 1.0 } else { -1.0 }, 0.0, 0.0]
        } else {
            let p = (e as f64 + 0.5) * 2.0 * PI / self.cols as f64;
            [p.cos(), p.sin(), 0.0]
        }
    }

    /// `H^{n-1}` measure of the positive equator cells.
    pub fn equator_measure(&self, mask: &[bool]) -> f64 {
        mask.iter()
            .zip(&self.face_length)
            .filter(|(m, _)| **m)
            .map(|(_, l)| l)
            .sum()
    }

    /// Total equator measure (`2` points for `n = 1`, `2 pi` for `n = 2`).
    pub fn equator_total(&self) -> f64 {
        self.face_length.iter().sum()
    }

    fn stiffness(&self, mask: &[bool]) -> Stiffness {
        let nc = self.cell_count();
        let mut diag = vec![0.0; nc];
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nc];
        for &(a, b, w) in &self.edges {
            diag[a] += w;
            diag[b] += w;
            rows[a].push((b, w));
            rows[b].push((a, w));
        }
        for (e, &c) in self.face_cell.iter().enumerate() {
            if !mask[e] {
                diag[c] += self.face_weight[e];
            }
        }
        let mut ptr = vec![0];
        let mut col = Vec::new();
        let mut wt = Vec::new();
        for r in rows {
            for (c, w) in r {
                col.push(c);
                wt.push(w);
            }
            ptr.push(col.len());
        }
        Stiffness { diag, ptr, col, wt }
    }
}

struct Stiffness {
    diag: Vec<f64>,
    ptr: Vec<usize>,
    col: Vec<usize>,
    wt: Vec<f64>,
}

impl Stiffness {
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            let mut acc = self.diag[i] * x[i];
            for k in self.ptr[i]..self.ptr[i + 1] {
                acc -= self.wt[k] * x[self.col[k]];
            }
            out[i] = acc;
        }
    }

    fn form(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; x.len()];
        self.apply(x, &mut y);
        dot(x, &y)
    }

    /// Jacobi-preconditioned CG for `K x = b`, warm-started from `x`.
    fn solve(&self, b: &[f64], x: &mut [f64], rel_tol: f64) -> Result<()> {
        let n = b.len();
        let mut r = vec![0.0; n];
        self.apply(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let target = rel_tol * dot(b, b).sqrt();
        let mut z: Vec<f64> = r.iter().zip(&self.diag).map(|(a, d)| a / d).collect();
        let mut p = z.clone();
        let mut q = vec![0.0; n];
        let mut rz = dot(&r, &z);
        for it in 0..20 * n + 100 {
            if dot(&r, &r).sqrt() <= target {
                return Ok(());
            }
            self.apply(&p, &mut q);
            let pq = dot(&p, &q);
            if pq <= 0.0 {
                return Err(Error::NotConverged {
                    iterations: it,
                    residual: dot(&r, &r).sqrt(),
                });
            }
            let a = rz / pq;
            for i in 0..n {
                x[i] += a * p[i];
                r[i] -= a * q[i];
                z[i] = r[i] / self.diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::NotConverged {
            iterations: 20 * n + 100,
            residual: dot(&r, &r).sqrt(),
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mass_dot(mass: &[f64], a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).zip(mass).map(|((x, y), m)| x * y * m).sum()
}

/// Angular profile with its equator positivity trace.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularField {
    pub mesh: AngularMesh,
    pub g: Vec<f64>,
    pub mask: Vec<bool>,
}

impl AngularField {
    pub fn new(mesh: AngularMesh, g: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if g.len() != mesh.cell_count() || mask.len() != mesh.equator_len() {
            return precondition("profile or mask length does not match the mesh");
        }
        if let Some(c) = g.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidSample {
                node: c,
                value: g[c],
            });
        }
        Ok(AngularField { mesh, g, mask })
    }

    /// Trace of a homogeneous field on the mesh; the equator is positive
    /// where the field is.
    pub fn from_field(mesh: AngularMesh, f: &dyn Field) -> Result<Self> {
        let n = mesh.n();
        if f.n() != n {
            return precondition("field and mesh dimensions differ");
        }
        let g = (0..mesh.cell_count())
            .map(|c| f.eval(&mesh.cell_point(c)[..=n]).map(|v| v.max(0.0)))
            .collect::<Result<Vec<_>>>()?;
        let mask = (0..mesh.equator_len())
            .map(|e| f.eval(&mesh.equator_point(e)[..=n]).map(|v| v > 0.0))
            .collect::<Result<Vec<_>>>()?;
        AngularField::new(mesh, g, mask)
    }

    /// Zero profile with the given equator trace.
    pub fn with_mask(mesh: AngularMesh, mask: Vec<bool>) -> Result<Self> {
        let g = vec![0.0; mesh.cell_count()];
        AngularField::new(mesh, g, mask)
    }

    pub fn n(&self) -> usize {
        self.mesh.n()
    }

    pub fn is_degenerate(&self) -> bool {
        self.mask.iter().all(|&m| m) || self.mask.iter().all(|&m| !m)
    }

    /// `int_{S^n} g^2`.
    pub fn mass(&self) -> f64 {
        2.0 * mass_dot(&self.mesh.mass, &self.g, &self.g)
    }
}

/// `int_{S^n} g^2` of the trivial cone `sqrt(2/pi) U0`.
pub fn trivial_mass(n: usize) -> f64 {
    if n == 1 {
        2.0
    } else {
        PI
    }
}

/// Eigenvalue of the angular equation for degree-1/2 homogeneity.
pub fn cone_eigenvalue(n: usize) -> f64 {
    (2.0 * n as f64 - 1.0) / 4.0
}

/// `E(U, B_1)` of the cone `r^{1/2} g`:
/// `(1/n) [int_{S^n} (g^2/4 + |grad g|^2) + H^{n-1}(positive equator)]`.
pub fn angular_energy(af: &AngularField) -> f64 {
    let k = af.mesh.stiffness(&af.mask);
    let n = af.n() as f64;
    let bulk = 2.0 * (0.25 * mass_dot(&af.mesh.mass, &af.g, &af.g) + k.form(&af.g));
    (bulk + af.mesh.equator_measure(&af.mask)) / n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConePhi {
    pub phi: f64,
    /// Empty or full equator trace (no free boundary).
    pub degenerate: bool,
}

/// Weiss energy of a cone: `(1/n) H^{n-1}(positive equator)`.
pub fn cone_phi(af: &AngularField) -> ConePhi {
    ConePhi {
        phi: af.mesh.equator_measure(&af.mask) / af.n() as f64,
        degenerate: af.is_degenerate(),
    }
}

/// First eigenpair of the angular operator under a mask, `g` normalized to
/// `int_{S^n} g^2 = 1`.
struct Eigen {
    lambda: f64,
    g: Vec<f64>,
}

fn first_eigen(mesh: &AngularMesh, mask: &[bool], start: &[f64]) -> Result<Eigen> {
    let nc = mesh.cell_count();
    if mask.iter().all(|&m| m) {
        // pure symmetry faces: constants
        let c = (1.0 / (2.0 * mesh.mass.iter().sum::<f64>())).sqrt();
        return Ok(Eigen {
            lambda: 0.0,
            g: vec![c; nc],
        });
    }
    let k = mesh.stiffness(mask);
    let norm = |v: &mut Vec<f64>| {
        let s = (2.0 * mass_dot(&mesh.mass, v, v)).sqrt();
        v.iter_mut().for_each(|x| *x /= s);
    };
    let mut g: Vec<f64> = if start.iter().any(|&v| v > 0.0) {
        start.to_vec()
    } else {
        vec![1.0; nc]
    };
    norm(&mut g);
    let mut lambda = 2.0 * k.form(&g);
    let mut y: Vec<f64> = g.iter().map(|v| v / lambda.max(1e-3)).collect();
    for _ in 0..500 {
        let b: Vec<f64> = g.iter().zip(&mesh.mass).map(|(v, m)| v * m).collect();
        k.solve(&b, &mut y, 1e-12)?;
        let mut next = y.clone();
        norm(&mut next);
        let new_lambda = 2.0 * k.form(&next);
        let change = next
            .iter()
            .zip(&g)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        g = next;
        let done = (new_lambda - lambda).abs() <= 1e-13 * new_lambda && change <= 1e-9;
        lambda = new_lambda;
        // rescale the warm start to the next solve's expected size
        y.iter_mut().zip(&g).for_each(|(yi, gi)| *yi = gi / lambda);
        if done {
            if g.iter().sum::<f64>() < 0.0 {
                g.iter_mut().for_each(|v| *v = -*v);
            }
            g.iter_mut().for_each(|v| *v = v.max(0.0));
            return Ok(Eigen { lambda, g });
        }
    }
    Err(Error::NotConverged {
        iterations: 500,
        residual: lambda,
    })
}

/// Options for [`minimize_cone`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeOptions {
    /// `int_{S^n} g^2` of the profile; defaults to the trivial cone's.
    pub mass: Option<f64>,
    /// Acceptance threshold as a fraction of one equator cell's contribution.
    pub tol_cells: f64,
    pub max_flips: usize,
}

impl Default for ConeOptions {
    fn default() -> Self {
        ConeOptions {
            mass: None,
            tol_cells: 1e-2,
            max_flips: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeRun {
    pub field: AngularField,
    /// First eigenvalue of the terminal mask.
    pub lambda: f64,
    /// Search objective after the start and after each accepted flip.
    pub history: Vec<f64>,
    pub flips: usize,
    pub converged: bool,
    /// The search collapsed to an empty or full trace.
    pub degenerate: bool,
}

impl ConeRun {
    /// Terminal Weiss energy of the cone.
    pub fn phi(&self) -> f64 {
        cone_phi(&self.field).phi
    }

    /// Defect of the angular equation, `lambda_1 - (2n - 1)/4`.
    pub fn eigen_defect(&self) -> f64 {
        self.lambda - cone_eigenvalue(self.field.n())
    }
}

/// Weiss energy of `r^{1/2} g` with `g` the first eigenfunction scaled to
/// `int g^2 = mass`: `(1/n) [mass (lambda_1 - (2n-1)/4) + H^{n-1}(mask)]`.
fn objective(mesh: &AngularMesh, mask: &[bool], lambda: f64, mass: f64) -> f64 {
    (mass * (lambda - cone_eigenvalue(mesh.n())) + mesh.equator_measure(mask)) / mesh.n() as f64
}

fn frontier(mesh: &AngularMesh, mask: &[bool]) -> Vec<usize> {
    let len = mask.len();
    if mesh.n() == 1 {
        return (0..len).collect();
    }
    (0..len)
        .filter(|&e| mask[(e + 1) % len] != mask[e] || mask[(e + len - 1) % len] != mask[e])
        .collect()
}

/// Descends the cone Weiss energy over equator traces: each accepted flip of
/// a frontier equator cell lowers the objective by more than the threshold,
/// with the profile re-solved as the first eigenfunction.
pub fn minimize_cone(init: &AngularField, opts: &ConeOptions) -> Result<ConeRun> {
    if init.is_degenerate() {
        return precondition("initial equator trace is empty or full");
    }
    let mesh = &init.mesh;
    let n = mesh.n();
    let mass = opts.mass.unwrap_or(trivial_mass(n));
    let cell = mesh.equator_total() / mesh.equator_len() as f64;
    let tol = opts.tol_cells * cell / n as f64;
    let mut mask = init.mask.clone();
    let mut eig = first_eigen(mesh, &mask, &init.g)?;
    let mut phi = objective(mesh, &mask, eig.lambda, mass);
    let mut history = vec![phi];
    let mut flips = 0;
    let mut converged = false;
    let mut degenerate = false;
    'outer: while flips < opts.max_flips {
        let mut improved = false;
        for e in frontier(mesh, &mask) {
            let mut trial = mask.clone();
            trial[e] = !trial[e];
            let cand = first_eigen(mesh, &trial, &eig.g)?;
            let cand_phi = objective(mesh, &trial, cand.lambda, mass);
            if cand_phi < phi - tol {
                mask = trial;
                eig = cand;
                phi = cand_phi;
                history.push(phi);
                flips += 1;
                improved = true;
                if mask.iter().all(|&m| m) || mask.iter().all(|&m| !m) {
                    degenerate = true;
                    break 'outer;
                }
                break;
            }
        }
        if !improved {
            converged = true;
            break;
        }
    }
    let scale = mass.sqrt();
    let g = eig.g.iter().map(|v| v * scale).collect();
    Ok(ConeRun {
        field: AngularField::new(mesh.clone(), g, mask)?,
        lambda: eig.lambda,
        history,
        flips,
        converged,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeClass {
    Trivial,
    Nontrivial,
    Degenerate,
}

impl ConeClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConeClass::Trivial => "trivial",
            ConeClass::Nontrivial => "nontrivial",
            ConeClass::Degenerate => "degenerate",
        }
    }
}

/// Cells by which a trace misses the nearest rotated half-equator: the
/// largest distance from a mismatched cell to the half-equator's endpoints.
pub fn half_equator_distance(mask: &[bool]) -> usize {
    let len = mask.len();
    if len == 2 {
        return if mask[0] != mask[1] { 0 } else { 1 };
    }
    let half = len / 2;
    let circ = |a: usize, b: usize| {
        let d = a.abs_diff(b);
        d.min(len - d)
    };
    let mut best = usize::MAX;
    for start in 0..len {
        let mut worst = 0;
        for (e, &m) in mask.iter().enumerate() {
            let inside = (e + len - start) % len < half;
            if inside != m {
                // endpoints sit between cells start-1|start and start+half-1|start+half
                let d = circ(e, start)
                    .min(circ(e + 1, start))
                    .min(circ(e, (start + half) % len))
                    .min(circ(e + 1, (start + half) % len));
                worst = worst.max(d + 1);
            }
        }
        best = best.min(worst);
    }
    best
}

/// Trivial iff the trace is within 2 cells of a rotated half-equator and the
/// Weiss energy is within 3% of `omega_n / 2`.
pub fn classify(af: &AngularField) -> ConeClass {
    let p = cone_phi(af);
    if p.degenerate {
        return ConeClass::Degenerate;
    }
    let half = 0.5 * omega(af.n());
    if half_equator_distance(&af.mask) <= 2 && (p.phi - half).abs() <= 0.03 * half {
        ConeClass::Trivial
    } else {
        ConeClass::Nontrivial
    }
}

/// Random non-degenerate trace: one to three arcs covering between 30% and
/// 80% of the equator, at a random rotation.
pub fn random_trace(len: usize, rng: &mut impl Rng) -> Vec<bool> {
    if len == 2 {
        let e = rng.gen_range(0..2);
        return vec![e == 0, e == 1];
    }
    let arcs = rng.gen_range(1..=3usize);
    let coverage: f64 = rng.gen_range(0.3..0.8);
    let on = ((coverage * len as f64).round() as usize).clamp(arcs, len - arcs);
    let split = |total: usize, parts: usize, rng: &mut dyn rand::RngCore| -> Vec<usize> {
        // parts >= 1 each, summing to total
        let mut cuts: Vec<usize> = Vec::new();
        while cuts.len() < parts - 1 {
            let c = rng.gen_range(1..total);
            if !cuts.contains(&c) {
                cuts.push(c);
            }
        }
        cuts.sort_unstable();
        let mut out = Vec::with_capacity(parts);
        let mut prev = 0;
        for c in cuts.into_iter().chain(std::iter::once(total)) {
            out.push(c - prev);
            prev = c;
        }
        out
    };
    let ons = split(on, arcs, rng);
    let offs = split(len - on, arcs, rng);
    let mut mask = Vec::with_capacity(len);
    for k in 0..arcs {
        mask.extend(std::iter::repeat_n(true, ons[k]));
        mask.extend(std::iter::repeat_n(false, offs[k]));
    }
    mask.rotate_right(rng.gen_range(0..len));
    mask
}

/// One row of a gap scan.
#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub seed: u64,
    pub phi: f64,
    pub class: ConeClass,
    pub flips: usize,
    pub eigen_defect: f64,
}

/// Cone searches from random traces, one per seed `rng_seed + k`, in
/// parallel; rows come back in seed order.
pub fn gap_scan(
    mesh: &AngularMesh,
    seeds: usize,
    rng_seed: u64,
    opts: &ConeOptions,
) -> Result<Vec<GapRow>> {
    (0..seeds as u64)
        .into_par_iter()
        .map(|k| {
            let seed = rng_seed.wrapping_add(k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init =
                AngularField::with_mask(mesh.clone(), random_trace(mesh.equator_len(), &mut rng))?;
            let run = minimize_cone(&init, opts)?;
            let class = if run.degenerate {
                ConeClass::Degenerate
            } else {
                classify(&run.field)
            };
            Ok(GapRow {
                seed,
                phi: run.phi(),
                class,
                flips: run.flips,
                eigen_defect: run.eigen_defect(),
            })
        })
        .collect()
}

/// `psi_R'(t)^2 = 1 / (t log R)^2` on `(R, R^2)`, zero elsewhere.
pub fn logcutoff_weight(radius: f64, t: f64) -> f64 {
    if t > radius && t < radius * radius {
        (1.0 / (t * radius.ln())).powi(2)
    } else {
        0.0
    }
}

/// `int |grad U|^2 psi_R'(|X|)^2 dX` over `R^3` for the trivial cone
/// `U = sqrt(2/pi) U0(x_2, x_3)`, by composite Gauss-Legendre in `log r`
/// and in the polar angle from the `x_1` axis (the integrand does not
/// depend on the azimuth).
pub fn logcutoff_decay(radii: &[f64]) -> Result<Vec<f64>> {
    if radii.iter().any(|&r| r < 4.0) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return precondition("radii must be increasing and at least 4");
    }
    let amp2 = MINIMAL_CONE_AMPLITUDE * MINIMAL_CONE_AMPLITUDE;
    let panels = 16;
    let azimuths = 64;
    Ok(radii
        .iter()
        .map(|&big| {
            let (s0, s1) = (big.ln(), 2.0 * big.ln());
            let mut total = 0.0;
            for pr in 0..panels {
                let a = s0 + (s1 - s0) * pr as f64 / panels as f64;
                let b = a + (s1 - s0) / panels as f64;
                for (xr, wr) in GAUSS_X.iter().zip(GAUSS_W) {
                    let s = 0.5 * (a + b) + 0.5 * (b - a) * xr;
                    let r = s.exp();
                    let jr = 0.5 * (b - a) * wr * r;
                    for pt in 0..panels {
                        let c = PI * pt as f64 / panels as f64;
                        let d = c + PI / panels as f64;
                        for (xt, wt) in GAUSS_X.iter().zip(GAUSS_W) {
                            let th = 0.5 * (c + d) + 0.5 * (d - c) * xt;
                            let jt = 0.5 * (d - c) * wt;
                            let mut ring = 0.0;
                            for k in 0..azimuths {
                                let ph = 2.0 * PI * (k as f64 + 0.5) / azimuths as f64;
                                let (t, sv) = (r * th.sin() * ph.cos(), r * th.sin() * ph.sin());
                                let (gt, gs) = grad_u0(t, sv.abs());
                                ring += amp2 * (gt * gt + gs * gs);
                            }
                            ring *= 2.0 * PI / azimuths as f64;
                            total += jr * jt * r * r * th.sin() * ring * logcutoff_weight(big, r);
                        }
                    }
                }
            }
            total
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::TrivialCone;
    use crate::energy::{total_energy, Region};
    use crate::grid::{positivity_of, sample, Grid};

    fn half_mask(len: usize) -> Vec<bool> {
        (0..len).map(|e| e < len / 2).collect()
    }

    #[test]
    fn half_circle_energy_matches_the_cone() {
        let mesh = AngularMesh::half_circle(256).unwrap();
        let af = AngularField::from_field(mesh, &TrivialCone::unit(1)).unwrap();
        assert_eq!(af.mask, vec![true, false]);
        let e = angular_energy(&af);
        assert!(
            (e - (PI / 2.0 + 1.0)).abs() < 0.03 * (PI / 2.0 + 1.0),
            "{e}"
        );
        let grid = Grid::new(1, 1.0, 1.0 / 128.0).unwrap();
        let u = sample(&TrivialCone::unit(1), &grid).unwrap();
        let vol = total_energy(&u, &positivity_of(&u, 0.0), &Region::unit_ball()).unwrap();
        assert!((e - vol).abs() < 0.03 * vol, "{e} {vol}");
    }

    #[test]
    fn zero_profile_has_zero_energy() {
        let mesh = AngularMesh::hemisphere(8, 32).unwrap();
        let af = AngularField::with_mask(mesh, vec![false; 32]).unwrap();
        assert_eq!(angular_energy(&af), 0.0);
        assert_eq!(
            cone_phi(&af),
            ConePhi {
                phi: 0.0,
                degenerate: true
            }
        );
    }

    #[test]
    fn hemisphere_energy_matches_volumetric_quadrature() {
        let mesh = AngularMesh::hemisphere(32, 128).unwrap();
        let af = AngularField::from_field(mesh, &TrivialCone::minimal(2)).unwrap();
        let e = angular_energy(&af);
        assert!((af.mass() - PI).abs() < 0.01 * PI, "{}", af.mass());
        // Weiss energy pi/2 plus half the boundary mass pi/2
        assert!((e - PI).abs() < 0.03 * PI, "{e}");
        let grid = Grid::new(2, 1.0, 1.0 / 32.0).unwrap();
        let u = sample(&TrivialCone::minimal(2), &grid).unwrap();
        let vol = total_energy(&u, &positivity_of(&u, 0.0), &Region::unit_ball()).unwrap();
        assert!((e - vol).abs() < 0.03 * vol, "{e} {vol}");
    }

    #[test]
    fn cone_phi_of_half_and_full_traces() {
        let mesh = AngularMesh::hemisphere(4, 128).unwrap();
        let half = AngularField::with_mask(mesh.clone(), half_mask(128)).unwrap();
        let p = cone_phi(&half);
        assert!((p.phi - PI / 2.0).abs() < 0.02 * PI / 2.0 && !p.degenerate);
        let full = AngularField::with_mask(mesh.clone(), vec![true; 128]).unwrap();
        let p = cone_phi(&full);
        assert!((p.phi - PI).abs() < 1e-12 && p.degenerate);
        let mut rotated = half_mask(128);
        rotated.rotate_right(37);
        assert_eq!(
            cone_phi(&AngularField::with_mask(mesh, rotated).unwrap()).phi,
            cone_phi(&half).phi
        );
    }

    #[test]
    fn eigenvalue_of_the_half_trace() {
        let mesh = AngularMesh::half_circle(512).unwrap();
        let e = first_eigen(&mesh, &[true, false], &[]).unwrap();
        assert!((e.lambda - 0.25).abs() < 1e-4, "{}", e.lambda);
        for (c, v) in e.g.iter().enumerate() {
            let b = mesh.cell_point(c)[1].atan2(mesh.cell_point(c)[0]);
            assert!((v - (b / 2.0).cos() / PI.sqrt()).abs() < 1e-3);
        }
        let coarse = first_eigen(
            &AngularMesh::hemisphere(16, 64).unwrap(),
            &half_mask(64),
            &[],
        )
        .unwrap();
        let fine = first_eigen(
            &AngularMesh::hemisphere(32, 128).unwrap(),
            &half_mask(128),
            &[],
        )
        .unwrap();
        assert!(
            (fine.lambda - 0.75).abs() < (coarse.lambda - 0.75).abs(),
            "{} {}",
            coarse.lambda,
            fine.lambda
        );
        assert!((fine.lambda - 0.75).abs() < 0.02);
    }

    /// Five-point Laplacian of `r^{1/2} g(beta)` at a point off the slit,
    /// with `g` the discrete half-trace eigenfunction interpolated linearly.
    fn volumetric_residual(cells: usize) -> f64 {
        let mesh = AngularMesh::half_circle(cells).unwrap();
        let e = first_eigen(&mesh, &[true, false], &[]).unwrap();
        let d = PI / cells as f64;
        let g = |b: f64| {
            let b = b.abs();
            let x = (b / d - 0.5).clamp(0.0, cells as f64 - 1.0);
            let k = (x.floor() as usize).min(cells - 2);
            let f = x - k as f64;
            e.g[k] * (1.0 - f) + e.g[k + 1] * f
        };
        let u = |x: f64, y: f64| x.hypot(y).sqrt() * g(y.atan2(x));
        let (x, y, h) = (0.3, 0.4, 1e-2);
        let lap = (u(x + h, y) + u(x - h, y) + u(x, y + h) + u(x, y - h) - 4.0 * u(x, y)) / (h * h);
        lap.abs() / u(x, y)
    }

    #[test]
    fn volumetric_laplacian_vanishes_under_refinement() {
        let a = volumetric_residual(64);
        let b = volumetric_residual(256);
        assert!(b < 0.5 * a, "{a} {b}");
    }

    #[test]
    fn trivial_trace_is_a_fixed_point() {
        let mesh = AngularMesh::half_circle(256).unwrap();
        let init = AngularField::with_mask(mesh, vec![false, true]).unwrap();
        let run = minimize_cone(&init, &ConeOptions::default()).unwrap();
        assert!(run.converged && run.flips == 0);
        assert_eq!(classify(&run.field), ConeClass::Trivial);
        let mesh = AngularMesh::hemisphere(32, 128).unwrap();
        let init = AngularField::from_field(mesh, &TrivialCone::minimal(2)).unwrap();
        let run = minimize_cone(&init, &ConeOptions::default()).unwrap();
        assert!(run.converged && run.flips == 0, "{:?}", run.history);
        assert!(run.eigen_defect().abs() < 0.02);
    }

    #[test]
    fn three_quarter_trace_relaxes_to_a_half() {
        let mesh = AngularMesh::hemisphere(32, 128).unwrap();
        let init = AngularField::with_mask(mesh, (0..128).map(|e| e < 96).collect()).unwrap();
        let run = minimize_cone(&init, &ConeOptions::default()).unwrap();
        assert!(run.converged);
        assert!(run.history.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(classify(&run.field), ConeClass::Trivial, "{}", run.phi());
        assert!((run.phi() - PI / 2.0).abs() < 0.03 * PI / 2.0);
    }

    #[test]
    fn degenerate_start_is_rejected() {
        let mesh = AngularMesh::hemisphere(4, 16).unwrap();
        let init = AngularField::with_mask(mesh, vec![false; 16]).unwrap();
        assert!(minimize_cone(&init, &ConeOptions::default()).is_err());
    }

    #[test]
    fn half_equator_distance_counts_cells() {
        let mut m = half_mask(32);
        assert_eq!(half_equator_distance(&m), 0);
        m.rotate_right(5);
        assert_eq!(half_equator_distance(&m), 0);
        m[21] = true;
        assert_eq!(half_equator_distance(&m), 1);
        let quarter: Vec<bool> = (0..32).map(|e| e < 8).collect();
        assert!(half_equator_distance(&quarter) > 2);
    }

    #[test]
    fn random_traces_are_admissible() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let m = random_trace(128, &mut rng);
            let on = m.iter().filter(|&&b| b).count() as f64 / 128.0;
            assert!((0.29..=0.81).contains(&on), "{on}");
            let arcs = (0..128).filter(|&e| m[e] && !m[(e + 127) % 128]).count();
            assert!((1..=3).contains(&arcs));
        }
    }

    #[test]
    fn gap_scan_edge_cases() {
        let mesh = AngularMesh::hemisphere(8, 32).unwrap();
        assert!(gap_scan(&mesh, 0, 1, &ConeOptions::default())
            .unwrap()
            .is_empty());
        let a = gap_scan(&mesh, 2, 5, &ConeOptions::default()).unwrap();
        let b = gap_scan(&mesh, 2, 5, &ConeOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[1].seed, 6);
    }

    #[test]
    fn logcutoff_matches_the_closed_form() {
        let v = logcutoff_decay(&[4.0, 16.0, 256.0]).unwrap();
        for (val, r) in v.iter().zip([4.0f64, 16.0, 256.0]) {
            let exact = PI / r.ln();
            assert!((val - exact).abs() < 1e-6 * exact, "{val} {exact}");
        }
        assert!(v[2] <= v[1]);
        assert_eq!(logcutoff_weight(4.0, 3.9), 0.0);
        assert_eq!(logcutoff_weight(4.0, 16.0), 0.0);
        assert!(logcutoff_decay(&[3.0]).is_err());
    }
}
