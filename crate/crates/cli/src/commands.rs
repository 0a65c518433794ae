//! Subcommand pipelines.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::Serialize;

use thinphase_core::closedform::{eval_u0, eval_v};
use thinphase_core::cones::{gap_scan, AngularMesh, ConeOptions};
use thinphase_core::grid::{read_field, read_mask, sample, write_field, write_mask};
use thinphase_core::minimize::minimize;
use thinphase_core::weiss::weiss_profile;
use thinphase_core::{
    ConeClass, Field, Grid, MinimizeOptions, PositivitySet, ScalarField, VParams,
    MINIMAL_CONE_AMPLITUDE,
};

use crate::checks::{
    diagnose as run_diagnose, verify_exact, Check, DiagnoseOptions, VerifyOptions,
};
use crate::config::{parse_list, parse_range, usage, Config};
use crate::report::{ensure_dir, output_dir, write_csv, write_json};
use crate::{CheckpointArgs, Command, Common, Failure, Outcome, WeissArgs};

pub fn dispatch(cmd: &Command) -> Result<Outcome, Failure> {
    match cmd {
        Command::Solve(c) => solve(c),
        Command::Weiss(a) => weiss(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Cones(c) => cones(c),
        Command::VerifyExact(c) => verify(c),
    }
}

fn load(common: &Common, keys: &[&str]) -> Result<(Config, PathBuf), Failure> {
    let mut cfg = Config::load(&common.config)?;
    cfg.apply_overrides(&common.set)?;
    cfg.check_keys(keys)?;
    let dir = output_dir(common.out.as_deref(), &cfg);
    Ok((cfg, dir))
}

fn verdict(checks: &[Check]) -> Outcome {
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.check.clone())
        .collect();
    if failed.is_empty() {
        Outcome::Pass
    } else {
        Outcome::Fail(failed)
    }
}

/// Boundary data `amplitude * profile(x . nu - shift, x_{n+1}) * (1 + bend x_1)`
/// where the profile is `U0` or a comparison function `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub n: usize,
    pub amplitude: f64,
    pub normal: [f64; 2],
    pub shift: f64,
    pub bend: f64,
    pub profile: Option<VParams>,
}

impl BoundaryData {
    pub fn from_config(cfg: &Config, n: usize) -> Result<BoundaryData, Failure> {
        let angle = cfg.f64_or("normal_angle", 0.0)?;
        let normal = if n == 1 {
            if angle != 0.0 {
                return Err(Failure::Usage(
                    "normal_angle needs two slit dimensions".into(),
                ));
            }
            [1.0, 0.0]
        } else {
            [angle.sin(), angle.cos()]
        };
        let profile = match cfg.str_or("data", "cone") {
            "cone" | "bent" => None,
            "v" => {
                let m = match cfg.raw("v_m") {
                    Some(s) => parse_list(s).map_err(Failure::Usage)?,
                    None if n == 2 => vec![0.0],
                    None => vec![],
                };
                let p = VParams::new(
                    m,
                    cfg.f64_or("v_a", 0.0)?,
                    cfg.f64_or("v_b", 0.0)?,
                    cfg.f64_or("v_lambda", 1.0)?,
                )?;
                if p.n() != n {
                    return Err(Failure::Usage(
                        "v_m must have one entry exactly when n = 2".into(),
                    ));
                }
                Some(p)
            }
            other => {
                return Err(Failure::Usage(format!(
                    "unknown data `{other}` (cone, bent, v)"
                )))
            }
        };
        let bend = if cfg.str_or("data", "cone") == "bent" {
            cfg.f64_or("bend", 0.0)?
        } else {
            0.0
        };
        Ok(BoundaryData {
            n,
            amplitude: cfg.f64_or("amplitude", MINIMAL_CONE_AMPLITUDE)?,
            normal,
            shift: cfg.f64_or("shift", 0.0)?,
            bend,
            profile,
        })
    }
}

impl Field for BoundaryData {
    fn n(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64]) -> thinphase_core::Result<f64> {
        let n = self.n;
        let t: f64 = (0..n).map(|a| x[a] * self.normal[a]).sum::<f64>() - self.shift;
        let s = x[n];
        let base = match &self.profile {
            None => eval_u0(t, s),
            Some(p) if n == 1 => eval_v(p, &[t, s])?,
            Some(p) => {
                let y = x[0] * self.normal[1] - x[1] * self.normal[0];
                eval_v(p, &[y, t, s])?
            }
        };
        Ok(self.amplitude * base.max(0.0) * (1.0 + self.bend * x[0]))
    }
}

const SOLVE_KEYS: &[&str] = &[
    "out",
    "n",
    "h",
    "half_extent",
    "data",
    "amplitude",
    "shift",
    "bend",
    "normal_angle",
    "v_m",
    "v_a",
    "v_b",
    "v_lambda",
    "start",
    "tol",
    "solver_tol",
    "window",
    "max_outer",
];

#[derive(Serialize)]
struct HistoryRow {
    step: usize,
    energy: f64,
    h: f64,
    tol: f64,
}

#[derive(Serialize)]
struct SolveSummary {
    n: usize,
    h: f64,
    tol: f64,
    energy: f64,
    converged: bool,
    sweeps: usize,
    accepted: usize,
    exact_checks: usize,
    fb_points: usize,
}

/// Grid, data and minimizer options of a `solve` config.
pub fn solve_setup(
    cfg: &Config,
) -> Result<(Grid, ScalarField, Option<PositivitySet>, MinimizeOptions), Failure> {
    let n = cfg.usize_or("n", 1)?;
    if !(1..=2).contains(&n) {
        return Err(Failure::Usage("n must be 1 or 2".into()));
    }
    let grid = Grid::new(
        n,
        cfg.f64_or("half_extent", 1.0)?,
        cfg.f64_or("h", 1.0 / 128.0)?,
    )?;
    let data = BoundaryData::from_config(cfg, n)?;
    let g = sample(&data, &grid)?;
    let start = match cfg.str_or("start", "default") {
        "default" => None,
        "data" => Some(thinphase_core::grid::positivity_of(&g, 0.0)),
        other => {
            return Err(Failure::Usage(format!(
                "unknown start `{other}` (default, data)"
            )))
        }
    };
    let defaults = MinimizeOptions::default();
    let opts = MinimizeOptions {
        tol: cfg.opt_f64("tol")?,
        solver_tol: cfg.f64_or("solver_tol", defaults.solver_tol)?,
        window: cfg.usize_or("window", defaults.window)?,
        max_outer: cfg.usize_or("max_outer", defaults.max_outer)?,
        ..defaults
    };
    Ok((grid, g, start, opts))
}

fn solve(common: &Common) -> Result<Outcome, Failure> {
    let (cfg, dir) = load(common, SOLVE_KEYS)?;
    let (grid, g, start, opts) = solve_setup(&cfg)?;
    let report = minimize(&grid, &g, start.as_ref(), &opts)?;
    ensure_dir(&dir)?;
    let h = grid.h();
    let tol = report.tol;
    write_field(
        BufWriter::new(File::create(dir.join("field.chk"))?),
        &report.field,
    )?;
    write_mask(
        BufWriter::new(File::create(dir.join("mask.chk"))?),
        &report.mask,
    )?;
    let history: Vec<HistoryRow> = report
        .energy_history
        .iter()
        .enumerate()
        .map(|(step, &energy)| HistoryRow {
            step,
            energy,
            h,
            tol,
        })
        .collect();
    write_csv(&dir.join("solve_history.csv"), &history)?;
    let summary = SolveSummary {
        n: grid.n(),
        h,
        tol,
        energy: report.energy(),
        converged: report.converged,
        sweeps: report.iterations,
        accepted: report.accepted,
        exact_checks: report.exact_checks,
        fb_points: report.mask.fb_points().len(),
    };
    write_json(&dir.join("solve_summary.json"), &[summary])?;
    if report.converged {
        Ok(Outcome::Pass)
    } else {
        Ok(Outcome::Fail(vec!["converged".into()]))
    }
}

fn load_checkpoint(args: &CheckpointArgs) -> Result<(ScalarField, PositivitySet), Failure> {
    let open = |p: &Path| {
        File::open(p)
            .map(BufReader::new)
            .map_err(|e| Failure::Usage(format!("cannot open {}: {e}", p.display())))
    };
    let u = read_field(open(&args.field)?)?;
    let m = read_mask(open(&args.mask)?)?;
    if u.grid() != m.grid() {
        return usage("field and mask checkpoints have different grids").map_err(Failure::from);
    }
    Ok((u, m))
}

#[derive(Serialize)]
struct WeissRow {
    r: f64,
    phi: f64,
    running_defect: f64,
    h: f64,
    tol: f64,
}

fn weiss(args: &WeissArgs) -> Result<Outcome, Failure> {
    let (mut cfg, dir) = load(
        &args.checkpoint.common,
        &["out", "center", "radii", "weiss_tol"],
    )?;
    if let Some(c) = &args.center {
        cfg.set("center", c.clone());
    }
    if let Some(r) = &args.radii {
        cfg.set("radii", r.clone());
    }
    let (u, mask) = load_checkpoint(&args.checkpoint)?;
    let grid = *u.grid();
    let n = grid.n();
    let center = match cfg.raw("center") {
        Some(s) => {
            let c = parse_list(s).map_err(Failure::Usage)?;
            // a point of R^{n+1} must lie on the slit
            if c.len() == n + 1 && c[n] == 0.0 || c.len() == n {
                c[..n].to_vec()
            } else {
                return Err(Failure::Usage(format!("center needs {n} slit coordinates")));
            }
        }
        None => {
            let pts = mask.fb_points();
            let p = pts
                .iter()
                .min_by(|a, b| a[0].hypot(a[1]).total_cmp(&b[0].hypot(b[1])))
                .ok_or_else(|| Failure::Usage("no free boundary to center on".into()))?;
            p[..n].to_vec()
        }
    };
    let radii = match cfg.raw("radii") {
        Some(s) => parse_range(s).map_err(Failure::Usage)?,
        None => {
            let clear = center
                .iter()
                .map(|c| grid.half_extent() - c.abs())
                .fold(f64::INFINITY, f64::min);
            let (lo, hi) = (8.0 * grid.h(), 0.9 * clear);
            (0..16).map(|k| lo + (hi - lo) * k as f64 / 15.0).collect()
        }
    };
    let weiss_tol = cfg.f64_or("weiss_tol", 0.02)?;
    let profile = weiss_profile(&u, &mask, &center, &radii)?;
    let tol = weiss_tol * profile.scale();
    let rows: Vec<WeissRow> = profile
        .radii
        .iter()
        .zip(&profile.phi)
        .zip(profile.running_defect())
        .map(|((&r, &phi), running_defect)| WeissRow {
            r,
            phi,
            running_defect,
            h: grid.h(),
            tol,
        })
        .collect();
    ensure_dir(&dir)?;
    write_csv(&dir.join("weiss.csv"), &rows)?;
    if profile.defect() <= tol {
        Ok(Outcome::Pass)
    } else {
        Ok(Outcome::Fail(vec!["weiss_monotonicity".into()]))
    }
}

fn diagnose(args: &CheckpointArgs) -> Result<Outcome, Failure> {
    let keys = [
        "out",
        "normalization",
        "alpha_tol",
        "density_min",
        "density_max",
        "nondegeneracy_min",
        "radius_max",
        "blowup_tol",
        "touch_radius",
    ];
    let (cfg, dir) = load(&args.common, &keys)?;
    let d = DiagnoseOptions::default();
    let opts = DiagnoseOptions {
        normalization: cfg.f64_or("normalization", d.normalization)?,
        alpha_tol: cfg.f64_or("alpha_tol", d.alpha_tol)?,
        density_bounds: [
            cfg.f64_or("density_min", d.density_bounds[0])?,
            cfg.f64_or("density_max", d.density_bounds[1])?,
        ],
        nondegeneracy_min: cfg.f64_or("nondegeneracy_min", d.nondegeneracy_min)?,
        radius_max: cfg.f64_or("radius_max", d.radius_max)?,
        blowup_tol: cfg.f64_or("blowup_tol", d.blowup_tol)?,
        touch_radius: cfg.f64_or("touch_radius", d.touch_radius)?,
    };
    let (u, mask) = load_checkpoint(args)?;
    let checks = run_diagnose(&u, &mask, &opts)?;
    ensure_dir(&dir)?;
    write_json(&dir.join("diagnose.json"), &checks)?;
    Ok(verdict(&checks))
}

#[derive(Serialize)]
struct ConeRow {
    seed: u64,
    phi: f64,
    class: &'static str,
    flips: usize,
    eigen_defect: f64,
    rows: usize,
    cols: usize,
    tol: f64,
}

fn cones(common: &Common) -> Result<Outcome, Failure> {
    let (cfg, dir) = load(
        common,
        &[
            "out",
            "n",
            "rows",
            "cols",
            "seeds",
            "seed",
            "tol_cells",
            "mass",
        ],
    )?;
    let n = cfg.usize_or("n", 2)?;
    let (mesh, rows, cols) = match n {
        1 => {
            let rows = cfg.usize_or("rows", 256)?;
            (AngularMesh::half_circle(rows)?, rows, 1)
        }
        2 => {
            let (rows, cols) = (cfg.usize_or("rows", 32)?, cfg.usize_or("cols", 128)?);
            (AngularMesh::hemisphere(rows, cols)?, rows, cols)
        }
        _ => return Err(Failure::Usage("cone searches need n = 1 or 2".into())),
    };
    let d = ConeOptions::default();
    let opts = ConeOptions {
        mass: cfg.opt_f64("mass")?,
        tol_cells: cfg.f64_or("tol_cells", d.tol_cells)?,
        ..d
    };
    let table = gap_scan(
        &mesh,
        cfg.usize_or("seeds", 10)?,
        cfg.u64_or("seed", 2024)?,
        &opts,
    )?;
    let out: Vec<ConeRow> = table
        .iter()
        .map(|r| ConeRow {
            seed: r.seed,
            phi: r.phi,
            class: r.class.as_str(),
            flips: r.flips,
            eigen_defect: r.eigen_defect,
            rows,
            cols,
            tol: opts.tol_cells,
        })
        .collect();
    ensure_dir(&dir)?;
    write_csv(&dir.join("cones.csv"), &out)?;
    let bad: Vec<String> = table
        .iter()
        .filter(|r| r.class != ConeClass::Trivial)
        .map(|r| format!("seed {}", r.seed))
        .collect();
    Ok(if bad.is_empty() {
        Outcome::Pass
    } else {
        Outcome::Fail(bad)
    })
}

fn verify(common: &Common) -> Result<Outcome, Failure> {
    let (cfg, dir) = load(common, &["out", "h1", "h2"])?;
    let d = VerifyOptions::default();
    let opts = VerifyOptions {
        h1: cfg.f64_or("h1", d.h1)?,
        h2: cfg.f64_or("h2", d.h2)?,
    };
    let checks = verify_exact(&opts)?;
    ensure_dir(&dir)?;
    write_json(&dir.join("verify.json"), &checks)?;
    Ok(verdict(&checks))
}
