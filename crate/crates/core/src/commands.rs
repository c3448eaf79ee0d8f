//! Subcommand drivers. Each writes its files once, after all computation,
//! and returns the summary printed by the binary.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::carleman::{build_weights, empirical_constant_scan, smooth_test_family, verify_assumption1};
use crate::coefficients::{write_columns, AdmissiblePerturbation, CoefficientSet};
use crate::config::{ExperimentConfig, InitialState};
use crate::error::{Error, Result};
use crate::export;
use crate::forward::{assemble_hamiltonian, compatibility_boundary_data, observe, solve_ibvp, BoundaryData, TwoStateField};
use crate::geometry::{select_observation_boundary, SpatialGrid, TimeGrid};
use crate::inverse::{build_probes, linearized_reconstruct, snapshots, stability_scaling_study, StudySpec};

pub const OUTPUT_DIR_ENV: &str = "TWOSTATE_OUTPUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_COUNTEREXAMPLE: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 3;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Vec<(String, String)>,
    pub warnings: Vec<String>,
    pub counterexamples: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if !self.counterexamples.is_empty() {
            EXIT_COUNTEREXAMPLE
        } else if !self.warnings.is_empty() {
            EXIT_TOLERANCE
        } else {
            EXIT_OK
        }
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }
}

/// Exit code for a command that failed outright.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Counterexample { .. } => EXIT_COUNTEREXAMPLE,
        Error::CrossCheck { .. } => EXIT_TOLERANCE,
        _ => EXIT_CONFIG,
    }
}

/// The configured directory unless the environment overrides it.
pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => cfg.output.dir.clone(),
    }
}

fn num(v: f64) -> String {
    format!("{v:.12e}")
}

fn create(dir: &Path, name: &str, outcome: &mut Outcome) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    outcome.files.push(path.clone());
    Ok(BufWriter::new(File::create(path)?))
}

fn finish(dir: &Path, outcome: &mut Outcome) -> Result<()> {
    let mut lines = outcome.summary.clone();
    for w in &outcome.warnings {
        lines.push(("warning".into(), w.clone()));
    }
    for c in &outcome.counterexamples {
        lines.push(("counterexample".into(), c.clone()));
    }
    let mut f = create(dir, "summary.txt", outcome)?;
    export::write_summary(&lines, &mut f)?;
    f.flush()?;
    Ok(())
}

fn eigenmode(grid: &SpatialGrid) -> (TwoStateField, f64) {
    let d = grid.domain();
    let lam: f64 = (0..grid.dim()).map(|k| (PI / (d.hi[k] - d.lo[k])).powi(2)).sum();
    let u0 = TwoStateField::from_fn(grid, |x| {
        let v: f64 = (0..grid.dim()).map(|k| (PI * d.unit_coordinate(k, x[k])).sin()).product();
        (Complex64::new(v, 0.0), Complex64::default())
    });
    let mut u0 = u0;
    for b in grid.boundary() {
        u0.uplus[b.node] = Complex64::default();
    }
    (u0, lam)
}

fn is_zero(set: &CoefficientSet) -> bool {
    set.fields().flatten().all(|&v| v == 0.0)
}

fn boundary_is_zero(g: &BoundaryData) -> bool {
    match g.order() {
        Some(order) => (0..=order).all(|l| g.derivative_at_zero(l).map_or(false, |d| d.iter().all(|v| *v == Complex64::default()))),
        None => false,
    }
}

/// Max-norm error at `T` of the manufactured solution
/// `(e^{it} sin πξ, e^{2it} sin 2πξ)` under the configured 1D baseline.
pub fn manufactured_error(cfg: &ExperimentConfig, nodes: usize, steps: usize) -> Result<f64> {
    let mut c = cfg.clone();
    c.grid.nodes = vec![nodes];
    c.grid.dt = c.domain.t_final / steps as f64;
    let grid = c.build_grid()?;
    let set = c.baseline_set(&grid)?;
    let (lo, len) = (c.domain.lo[0], c.domain.hi[0] - c.domain.lo[0]);
    let b = c.baseline.clone();
    let a = b.a_const(0);
    let k = PI / len;
    let exact = move |x: f64, t: f64| {
        let xi = (x - lo) / len;
        (
            Complex64::from_polar(1.0, t) * (PI * xi).sin(),
            Complex64::from_polar(1.0, 2.0 * t) * (2.0 * PI * xi).sin(),
        )
    };
    let src = {
        let b = b.clone();
        move |x: f64, t: f64| {
            let xi = (x - lo) / len;
            let (up, um) = exact(x, t);
            let dup = Complex64::from_polar(1.0, t) * k * (PI * xi).cos();
            let dum = Complex64::from_polar(1.0, 2.0 * t) * 2.0 * k * (2.0 * PI * xi).cos();
            let (p, qp, qm) = (b.p_at(&[x]), b.qplus_at(&[x]), b.qminus_at(&[x]));
            let fp = up + k * k * up + qp * up + a * dum + p * um;
            let fm = 2.0 * um + 4.0 * k * k * um + qm * um - a * dup + p * up;
            (fp, fm)
        }
    };
    let pts: Vec<f64> = grid.points().map(|x| x[0]).collect();
    let f = move |node: usize, t: f64| src(pts[node], t);
    let u0 = TwoStateField::from_fn(&grid, |x| exact(x[0], 0.0));
    let g = BoundaryData::from_fn(&grid, move |x, t| exact(x[0], t));
    let traj = solve_ibvp(&grid, &set, &u0, &g, Some(&f), c.grid.dt)?;
    let t_final = c.domain.t_final;
    Ok(grid
        .points()
        .enumerate()
        .map(|(n, x)| {
            let (ep, em) = exact(x[0], t_final);
            (traj.last().uplus[n] - ep).norm().max((traj.last().uminus[n] - em).norm())
        })
        .fold(0.0, f64::max))
}

/// Runs the configured forward problem and writes `trajectory.csv`,
/// `observation.csv` and `summary.txt`.
pub fn cmd_forward(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome> {
    let grid = cfg.build_grid()?;
    let baseline = cfg.baseline_set(&grid)?;
    let mut out = Outcome::default();
    let (u0, lam) = match cfg.forward.initial {
        InitialState::Eigenmode => {
            let (u, l) = eigenmode(&grid);
            (u, Some(l))
        }
        InitialState::Probe => {
            let probes = build_probes(&grid, &baseline, cfg.probes.alpha, cfg.probes.order)?;
            (probes.probes[cfg.forward.probe].u0.clone(), None)
        }
    };
    let g = compatibility_boundary_data(&grid, &u0, &baseline, cfg.probes.order)?;
    let ham = assemble_hamiltonian(&grid, &baseline)?;
    let traj = solve_ibvp(&grid, &baseline, &u0, &g, None, cfg.grid.dt)?;
    let obs = select_observation_boundary(&grid, &cfg.x0())?;
    let trace = observe(&grid, &traj, &obs)?;

    let drift = traj.norm_drift(&grid);
    out.note("grid", grid.shape().iter().map(|n| n.to_string()).collect::<Vec<_>>().join("x"));
    out.note("dt", num(cfg.grid.dt));
    out.note("steps", cfg.steps());
    out.note("hermitian_defect", num(ham.hermitian_defect()));
    out.note("norm_drift", num(drift));
    if boundary_is_zero(&g) && drift > 1e-8 {
        out.warnings.push(format!("norm drift {drift:.3e} exceeds 1e-8 with homogeneous boundary data"));
    }
    if let (Some(lam), true) = (lam, is_zero(&baseline)) {
        let t = cfg.domain.t_final;
        let phase = Complex64::from_polar(1.0, -lam * t);
        let diff = traj.last().sub(&u0.map(|v| v * phase));
        out.note("eigenmode_l2_error", num(diff.norm(&grid)));
    }
    if cfg.forward.manufactured {
        let n = cfg.grid.nodes[0];
        let steps = cfg.steps();
        let errs = [
            manufactured_error(cfg, n, steps)?,
            manufactured_error(cfg, 2 * n - 1, 2 * steps)?,
            manufactured_error(cfg, 4 * n - 3, 4 * steps)?,
        ];
        let orders = [(errs[0] / errs[1]).log2(), (errs[1] / errs[2]).log2()];
        out.note("manufactured_errors", errs.map(num).join(" "));
        out.note("manufactured_order", num(orders[1]));
        if orders[1] < 1.9 {
            out.warnings.push(format!("manufactured convergence order {:.3} below 1.9", orders[1]));
        }
    }

    let mut f = create(dir, "trajectory.csv", &mut out)?;
    export::write_trajectory(&grid, &traj, cfg.forward.export_every, &mut f)?;
    f.flush()?;
    let mut f = create(dir, "observation.csv", &mut out)?;
    export::write_observation(&trace, &mut f)?;
    f.flush()?;
    finish(dir, &mut out)?;
    Ok(out)
}

/// Empirical constant scan over a seeded family; writes `carleman_scan.csv`.
pub fn cmd_carleman_scan(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome> {
    let grid = cfg.build_grid()?;
    let wcfg = cfg.weight_config();
    wcfg.validate(&grid)?;
    let obs = select_observation_boundary(&grid, &wcfg.x0)?;
    let time = TimeGrid::symmetric_cell_centered(cfg.domain.t_final, cfg.carleman.time_cells)?;
    let weights = build_weights(&grid, &wcfg, &time)?;
    let family: Vec<_> = smooth_test_family(&grid, cfg.carleman.family_size, cfg.carleman.seed)
        .into_iter()
        .map(|m| {
            let (z, lz) = m.sample(&grid, &time);
            (m.id, z, lz)
        })
        .collect();
    let mut out = Outcome::default();
    let rows = match empirical_constant_scan(&grid, &weights, &family, &cfg.carleman.s, &obs) {
        Ok(rows) => rows,
        Err(Error::Counterexample { member, s, lhs }) => {
            out.counterexamples.push(format!("member {member} at s = {s}: rhs vanishes while lhs = {lhs:.3e}"));
            Vec::new()
        }
        Err(e) => return Err(e),
    };
    let a1 = verify_assumption1(&grid, &wcfg, &obs, 1000, cfg.carleman.seed)?;
    out.note("members", family.len());
    out.note("convexity_margin", num(a1.convexity_margin));
    out.note("min_gradient", num(a1.min_gradient));
    if !a1.passed() {
        out.warnings.push("weight assumptions fail for this x0".into());
    }
    if let Some(worst) = rows.iter().map(|r| r.worst_ratio).reduce(f64::max) {
        out.note("max_worst_ratio", num(worst));
    }
    let mut f = create(dir, "carleman_scan.csv", &mut out)?;
    export::write_scan(&rows, &mut f)?;
    f.flush()?;
    finish(dir, &mut out)?;
    Ok(out)
}

/// Stability scaling study; writes `stability.csv` (and
/// `stability_weighted.csv` when `study.weighted_s` is set).
pub fn cmd_stability(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome> {
    let grid = cfg.build_grid()?;
    let baseline = cfg.baseline_set(&grid)?;
    let probes = build_probes(&grid, &baseline, cfg.probes.alpha, cfg.probes.order)?;
    let obs = select_observation_boundary(&grid, &cfg.x0())?;
    let wcfg = cfg.weight_config();
    let amplitudes: Vec<f64> = cfg.study.amplitudes.iter().map(|a| a * baseline.bound).collect();
    let spec = StudySpec {
        amplitudes: &amplitudes,
        seeds: &cfg.study.seeds,
        mask: cfg.study.mask.into(),
        dt: cfg.grid.dt,
        weighted: cfg.study.weighted_s.map(|s| (&wcfg, s)),
    };
    let rows = stability_scaling_study(&grid, &baseline, &probes, &obs, &spec)?;
    let mut out = Outcome::default();
    for r in &rows {
        if r.lhs > 0.0 && r.rhs_raw == 0.0 {
            out.counterexamples.push(format!("seed {:?} amplitude {}: zero measurement difference with lhs = {:.3e}", r.seed, r.amplitude, r.lhs));
        }
    }
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    out.note("rows", rows.len());
    if let Some(max) = ratios.iter().copied().reduce(f64::max) {
        out.note("max_ratio", num(max));
        out.note("min_ratio", num(ratios.iter().copied().fold(f64::INFINITY, f64::min)));
    }
    let mut f = create(dir, "stability.csv", &mut out)?;
    export::write_stability(&rows, &mut f)?;
    f.flush()?;
    if spec.weighted.is_some() {
        let mut f = create(dir, "stability_weighted.csv", &mut out)?;
        export::write_weighted(&rows, &mut f)?;
        f.flush()?;
    }
    finish(dir, &mut out)?;
    Ok(out)
}

/// Linearised reconstruction of a synthetic pair; writes `recovered.txt`,
/// `truth.txt` and `summary.txt`.
pub fn cmd_reconstruct(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome> {
    let grid = cfg.build_grid()?;
    let baseline = cfg.baseline_set(&grid)?;
    let probes = build_probes(&grid, &baseline, cfg.probes.alpha, cfg.probes.order)?;
    let rc = &cfg.reconstruct;
    let coeffs1 = if rc.identical {
        baseline.clone()
    } else {
        AdmissiblePerturbation::sample(&grid, &baseline, rc.amplitude * baseline.bound, rc.seed, rc.mask.into())?.perturbed()
    };
    let truth = coeffs1.minus(&baseline);
    let snaps = snapshots(&grid, &coeffs1, &baseline, &probes, cfg.grid.dt)?;
    let result = linearized_reconstruct(&grid, &snaps, &probes, Some(&truth))?;
    let mut out = Outcome::default();
    let names: Vec<String> = (1..=grid.dim()).map(|k| format!("A{k}")).chain(["p", "qplus", "qminus"].map(String::from)).collect();
    let errors = result.errors.clone().unwrap_or_default();
    out.note(
        "relative_errors",
        names.iter().zip(&errors).map(|(n, e)| format!("{n}={}", num(*e))).collect::<Vec<_>>().join(" "),
    );
    out.note("p_cross", num(result.p_cross));
    out.note("a_cross", result.a_cross.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" "));
    out.note("imag_residual", num(result.imag_residual));
    out.note("recovered_l2", num(result.recovered.squared_l2(&grid).sqrt()));
    if let Err(e) = result.check_cross(rc.cross_tol) {
        out.warnings.push(e.to_string());
    }
    if result.imag_residual > 1e-2 {
        out.warnings.push(format!("imaginary residual {:.3e} above 1e-2", result.imag_residual));
    }
    let mut f = create(dir, "recovered.txt", &mut out)?;
    write_columns(&grid, &result.recovered, &mut f)?;
    f.flush()?;
    let mut f = create(dir, "truth.txt", &mut out)?;
    write_columns(&grid, &truth, &mut f)?;
    f.flush()?;
    finish(dir, &mut out)?;
    Ok(out)
}

/// Full validation: parses, builds the grid, baseline, weights and probes.
/// Writes nothing.
pub fn cmd_validate(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let grid = cfg.build_grid()?;
    let baseline = cfg.baseline_set(&grid)?;
    cfg.weight_config().validate(&grid)?;
    select_observation_boundary(&grid, &cfg.x0())?;
    build_probes(&grid, &baseline, cfg.probes.alpha, cfg.probes.order)?;
    let mut out = Outcome::default();
    out.note("dim", grid.dim());
    out.note("nodes", grid.len());
    out.note("steps", cfg.steps());
    Ok(out)
}
