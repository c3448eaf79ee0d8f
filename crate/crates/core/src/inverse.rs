//! Probe suite, paired forward experiments for the stability inequality and
//! the linearised reconstruction of coefficient differences from
//! `v(·,0) = ∂t(u1 - u2)(·,0)`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::carleman::WeightConfig;
use crate::coefficients::{AdmissiblePerturbation, CoefficientSet, PerturbationMask};
use crate::error::{Error, Result};
use crate::forward::{assemble_hamiltonian, compatibility_boundary_data, BoundaryData, ObservationTrace, Stepper, TraceRecorder, TwoStateField};
use crate::geometry::{l2_norm, l2_norm_sq, ObservationBoundary, SpatialGrid};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Debug)]
pub struct Probe {
    pub u0: TwoStateField,
    pub g: BoundaryData,
}

/// `n + 2` initial states: `(0, α)`, `(α, 0)`, then `(x_k, x_k)` per axis.
#[derive(Clone, Debug)]
pub struct ProbeSuite {
    pub alpha: f64,
    pub order: usize,
    pub probes: Vec<Probe>,
}

pub fn build_probes(grid: &SpatialGrid, baseline: &CoefficientSet, alpha: f64, order: usize) -> Result<ProbeSuite> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    let a = Complex64::new(alpha, 0.0);
    let zero = Complex64::default();
    let mut states = vec![
        TwoStateField::from_fn(grid, |_| (zero, a)),
        TwoStateField::from_fn(grid, |_| (a, zero)),
    ];
    for k in 0..grid.dim() {
        states.push(TwoStateField::from_fn(grid, |x| (Complex64::new(x[k], 0.0), Complex64::new(x[k], 0.0))));
    }
    let probes = states
        .into_iter()
        .map(|u0| {
            let g = compatibility_boundary_data(grid, &u0, baseline, order)?;
            Ok(Probe { u0, g })
        })
        .collect::<Result<Vec<_>>>()?;
    let suite = ProbeSuite { alpha, order, probes };
    suite.check_constants(grid)?;
    Ok(suite)
}

impl ProbeSuite {
    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    fn check_constants(&self, grid: &SpatialGrid) -> Result<()> {
        for (probe, comp) in [(0usize, 1usize), (1, 0)] {
            let f = self.probes[probe].u0.component(comp);
            if let Some(node) = (0..grid.len()).find(|&n| f[n].norm() < self.alpha) {
                return Err(Error::ProbeBelowAlpha { alpha: self.alpha, node });
            }
        }
        Ok(())
    }

    /// Gradient matrices `U0±[k][l] = ∂_l u0^{±,k+2}` at every node.
    pub fn gradient_matrices(&self, grid: &SpatialGrid) -> [Vec<[[f64; 2]; 2]>; 2] {
        let dim = grid.dim();
        let mut out = [vec![[[0.0; 2]; 2]; grid.len()], vec![[[0.0; 2]; 2]; grid.len()]];
        for (c, mats) in out.iter_mut().enumerate() {
            for k in 0..dim {
                let field: Vec<f64> = self.probes[k + 2].u0.component(c).iter().map(|v| v.re).collect();
                for l in 0..dim {
                    for (m, d) in mats.iter_mut().zip(grid.partial(&field, l)) {
                        m[k][l] = d;
                    }
                }
            }
        }
        out
    }

    /// Smallest singular value of `U0±` over the nodes.
    pub fn min_singular_values(&self, grid: &SpatialGrid) -> [f64; 2] {
        let dim = grid.dim();
        self.gradient_matrices(grid).map(|mats| {
            mats.iter()
                .map(|m| {
                    if dim == 1 {
                        m[0][0].abs()
                    } else {
                        // singular values of a 2x2 matrix via its Gram matrix
                        let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
                        let tr = a * a + b * b + c * c + d * d;
                        let det = (a * d - b * c).abs();
                        let disc = (tr * tr - 4.0 * det * det).max(0.0).sqrt();
                        ((tr - disc) / 2.0).max(0.0).sqrt()
                    }
                })
                .fold(f64::INFINITY, f64::min)
        })
    }
}

/// Observation traces of every probe under one coefficient set. The step
/// matrix is factored once and shared by the probes.
pub fn probe_traces(grid: &SpatialGrid, coeffs: &CoefficientSet, probes: &ProbeSuite, dt: f64, obs: &ObservationBoundary) -> Result<Vec<ObservationTrace>> {
    let t_final = grid.domain().t_final;
    let steps = (t_final / dt).round();
    if !(dt > 0.0) || steps < 2.0 || (steps * dt - t_final).abs() > 1e-9 * t_final {
        return Err(Error::InvalidParameter(format!("time step {dt} does not divide T = {t_final} into at least two steps")));
    }
    let stepper = Stepper::new(assemble_hamiltonian(grid, coeffs)?, dt)?;
    probes
        .probes
        .par_iter()
        .map(|p| {
            let defect = crate::forward::compatibility_defect(&p.u0, &p.g);
            if defect > 1e-10 * (1.0 + p.u0.max_abs()) {
                return Err(Error::Incompatible(defect));
            }
            let mut rec = TraceRecorder::new(obs);
            stepper.run(&p.u0, 0.0, &p.g, None, steps as usize, |_, t, u| rec.push(grid, t, u));
            rec.finish()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub seed: Option<u64>,
    pub amplitude: f64,
    /// `Σ ‖coefficient differences‖²_{L²(Ω)}`.
    pub lhs: f64,
    /// `Σ_k Σ± ‖Δ ∂ν ∂t u^{±,k}‖²_{L²(Γ* × (0,T))}`.
    pub rhs_raw: f64,
    /// `lhs / rhs_raw`, `None` when `rhs_raw = 0`.
    pub ratio: Option<f64>,
    /// Carleman-weighted measurement norm over `(-T, T)`, when requested.
    pub rhs_weighted: Option<f64>,
    /// `(plus, minus)` contributions per probe.
    pub per_probe: Vec<(f64, f64)>,
    pub grid: String,
    pub dt: f64,
}

fn grid_label(grid: &SpatialGrid) -> String {
    grid.shape().iter().map(|n| n.to_string()).collect::<Vec<_>>().join("x")
}

/// Weighted trace norm `2 Σ_k Σ± ∫_0^T ∫_{Γ*} e^{-2sη} φ ∂νβ |Δ∂ν∂t u|²`;
/// the factor 2 accounts for the odd-conjugate half on `(-T, 0)`.
pub fn weighted_trace_norm(grid: &SpatialGrid, diffs: &[ObservationTrace], cfg: &WeightConfig, s: f64) -> f64 {
    let dim = grid.dim();
    let bt = |x: &[f64]| (0..dim).map(|k| (x[k] - cfg.x0[k]).powi(2)).sum::<f64>();
    let sup_bt = grid.points().map(bt).fold(0.0, f64::max);
    let beta = |x: &[f64]| bt(x) + cfg.r * sup_bt;
    let k = grid.points().map(beta).fold(f64::NEG_INFINITY, f64::max);
    let e2k = (2.0 * cfg.lambda * k).exp();
    let mut total = 0.0;
    for tr in diffs {
        let nt = tr.times.len();
        for (ti, &t) in tr.times.iter().enumerate() {
            let d = (cfg.t_final + t) * (cfg.t_final - t);
            if d <= 0.0 || nt < 2 {
                continue;
            }
            let dt = tr.times[1] - tr.times[0];
            let wt = if ti == 0 || ti + 1 == nt { 0.5 * dt } else { dt };
            for (j, &(node, face)) in tr.nodes.iter().enumerate() {
                let x = grid.point(node);
                let b = &grid.boundary()[grid.boundary_position(node).unwrap()];
                let flux: f64 = (0..dim).map(|a| 2.0 * (x[a] - cfg.x0[a]) * b.normal[a]).sum();
                let elb = (cfg.lambda * beta(x)).exp();
                let eta = (e2k - elb) / d;
                let phi = elb * elb / d;
                let w = (-2.0 * s * eta).exp() * phi * flux.max(0.0);
                total += wt * grid.boundary_measure(face) * w * (tr.plus[ti][j].norm_sqr() + tr.minus[ti][j].norm_sqr());
            }
        }
    }
    2.0 * total
}

fn report_from(grid: &SpatialGrid, lhs: f64, t1: &[ObservationTrace], t2: &[ObservationTrace], dt: f64, weighted: Option<(&WeightConfig, f64)>) -> StabilityReport {
    let diffs: Vec<ObservationTrace> = t1.iter().zip(t2).map(|(a, b)| a.sub(b)).collect();
    let per_probe: Vec<(f64, f64)> = diffs.iter().map(|d| d.l2_norm_sq(grid)).collect();
    let rhs_raw: f64 = per_probe.iter().map(|(p, m)| p + m).sum();
    StabilityReport {
        seed: None,
        amplitude: 0.0,
        lhs,
        rhs_raw,
        ratio: if rhs_raw > 0.0 { Some(lhs / rhs_raw) } else { None },
        rhs_weighted: weighted.map(|(cfg, s)| weighted_trace_norm(grid, &diffs, cfg, s)),
        per_probe,
        grid: grid_label(grid),
        dt,
    }
}

/// Runs every probe under both coefficient sets and evaluates both sides of
/// the stability inequality.
pub fn run_pair_experiment(
    grid: &SpatialGrid,
    coeffs1: &CoefficientSet,
    coeffs2: &CoefficientSet,
    probes: &ProbeSuite,
    dt: f64,
    obs: &ObservationBoundary,
) -> Result<StabilityReport> {
    let t1 = probe_traces(grid, coeffs1, probes, dt, obs)?;
    let t2 = probe_traces(grid, coeffs2, probes, dt, obs)?;
    Ok(report_from(grid, coeffs1.minus(coeffs2).squared_l2(grid), &t1, &t2, dt, None))
}

/// Study settings shared by all rows.
#[derive(Clone, Debug)]
pub struct StudySpec<'a> {
    pub amplitudes: &'a [f64],
    pub seeds: &'a [u64],
    pub mask: PerturbationMask,
    pub dt: f64,
    pub weighted: Option<(&'a WeightConfig, f64)>,
}

/// One report per `(amplitude, seed)`, amplitude-major. Each pair compares
/// `baseline + perturbation(seed, amplitude)` against the baseline, whose
/// traces are computed once.
pub fn stability_scaling_study(
    grid: &SpatialGrid,
    baseline: &CoefficientSet,
    probes: &ProbeSuite,
    obs: &ObservationBoundary,
    spec: &StudySpec<'_>,
) -> Result<Vec<StabilityReport>> {
    let base = probe_traces(grid, baseline, probes, spec.dt, obs)?;
    let jobs: Vec<(f64, u64)> = spec
        .amplitudes
        .iter()
        .flat_map(|&a| spec.seeds.iter().map(move |&s| (a, s)))
        .collect();
    jobs.par_iter()
        .map(|&(amplitude, seed)| {
            let pert = AdmissiblePerturbation::sample(grid, baseline, amplitude, seed, spec.mask)?;
            let set = pert.perturbed();
            let traces = probe_traces(grid, &set, probes, spec.dt, obs)?;
            let mut r = report_from(grid, set.minus(baseline).squared_l2(grid), &traces, &base, spec.dt, spec.weighted);
            r.seed = Some(seed);
            r.amplitude = amplitude;
            Ok(r)
        })
        .collect()
}

/// `v(·,0) = ∂t(u1 - u2)(·,0)` from two trapezoidal steps of each run and
/// the one-sided second-order difference.
pub fn snapshot_v0(grid: &SpatialGrid, coeffs1: &CoefficientSet, coeffs2: &CoefficientSet, probe: &Probe, dt: f64) -> Result<TwoStateField> {
    let run = |c: &CoefficientSet| -> Result<Vec<TwoStateField>> {
        let stepper = Stepper::new(assemble_hamiltonian(grid, c)?, dt)?;
        let mut out = Vec::with_capacity(3);
        stepper.run(&probe.u0, 0.0, &probe.g, None, 2, |_, _, u| out.push(u.clone()));
        Ok(out)
    };
    let (a, b) = (run(coeffs1)?, run(coeffs2)?);
    if a.len() < 3 {
        return Err(Error::TooFewTimeNodes { needed: 3, got: a.len() });
    }
    let d: Vec<TwoStateField> = a.iter().zip(&b).map(|(x, y)| x.sub(y)).collect();
    let comb = |c: usize| -> Vec<Complex64> {
        (0..grid.len())
            .map(|n| (d[0].component(c)[n] * -3.0 + d[1].component(c)[n] * 4.0 - d[2].component(c)[n]) / (2.0 * dt))
            .collect()
    };
    Ok(TwoStateField {
        uplus: comb(0),
        uminus: comb(1),
    })
}

/// Snapshots for every probe of the suite, in probe order.
pub fn snapshots(grid: &SpatialGrid, coeffs1: &CoefficientSet, coeffs2: &CoefficientSet, probes: &ProbeSuite, dt: f64) -> Result<Vec<TwoStateField>> {
    probes.probes.par_iter().map(|p| snapshot_v0(grid, coeffs1, coeffs2, p, dt)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionResult {
    /// Recovered differences; `bound` is unused.
    pub recovered: CoefficientSet,
    /// `p` from the second probe.
    pub p_alt: Vec<f64>,
    /// `A_k` from the minus component of probe `k + 2`.
    pub a_alt: Vec<Vec<f64>>,
    /// `‖p̂ - p̂'‖ / ‖p̂‖`.
    pub p_cross: f64,
    /// `‖Â_k - Â_k'‖` relative to the whole recovered set.
    pub a_cross: Vec<f64>,
    /// Largest `‖Im‖` over the recovered fields, relative to the whole set.
    pub imag_residual: f64,
    /// Relative L² errors `A_1.., p, q+, q-` against the truth, if given.
    pub errors: Option<Vec<f64>>,
}

impl ReconstructionResult {
    pub fn check_cross(&self, tol: f64) -> Result<()> {
        if self.p_cross > tol {
            return Err(Error::CrossCheck {
                what: "p".into(),
                value: self.p_cross,
                tol,
            });
        }
        for (k, &c) in self.a_cross.iter().enumerate() {
            if c > tol {
                return Err(Error::CrossCheck {
                    what: format!("A{}", k + 1),
                    value: c,
                    tol,
                });
            }
        }
        Ok(())
    }

    pub fn max_error(&self) -> Option<f64> {
        self.errors.as_ref().map(|e| e.iter().fold(0.0, |m: f64, &v| m.max(v)))
    }
}

/// Solves `(a_{j-1} + 2 a_j + a_{j+1}) / 4 = m_j` along every grid line of
/// `axis` with zero end values. Undoes the averaging that the skew
/// discretisation of `A·∇` applies to `A` when acting on a linear probe.
fn deaverage(grid: &SpatialGrid, axis: usize, m: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    let n = grid.shape()[axis];
    let inner = n - 2;
    for b in grid.boundary() {
        if b.face.map(|f| f.axis) != Some(axis) || b.face.unwrap().upper {
            continue;
        }
        let line: Vec<usize> = (1..n - 1).map(|j| grid.neighbor(b.node, axis, j as isize).unwrap()).collect();
        // Thomas algorithm for the constant tridiagonal system (1/4, 1/2, 1/4)
        let mut c = vec![0.0; inner];
        let mut d = vec![0.0; inner];
        for j in 0..inner {
            let denom = 0.5 - if j > 0 { 0.25 * c[j - 1] } else { 0.0 };
            c[j] = 0.25 / denom;
            d[j] = (m[line[j]] - if j > 0 { 0.25 * d[j - 1] } else { 0.0 }) / denom;
        }
        for j in (0..inner).rev() {
            let next = if j + 1 < inner { out[line[j + 1]] } else { 0.0 };
            out[line[j]] = d[j] - c[j] * next;
        }
    }
    out
}

fn rel(grid: &SpatialGrid, a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = l2_norm(grid, b);
    let d = l2_norm(grid, &diff);
    if scale > 0.0 {
        d / scale
    } else {
        d
    }
}

/// Pointwise algebraic inversion of `v(·,0) = -i (H1 - H2) u0` for the
/// probe design. With `truth` (the coefficient differences), relative L²
/// errors are filled in; a field whose truth vanishes is measured against
/// the norm of the whole perturbation.
pub fn linearized_reconstruct(
    grid: &SpatialGrid,
    snaps: &[TwoStateField],
    probes: &ProbeSuite,
    truth: Option<&CoefficientSet>,
) -> Result<ReconstructionResult> {
    let dim = grid.dim();
    if snaps.len() != probes.len() || probes.len() != dim + 2 {
        return Err(Error::ShapeMismatch {
            expected: dim + 2,
            got: snaps.len(),
        });
    }
    probes.check_constants(grid)?;
    let alpha = probes.alpha;
    let mut imag: f64 = 0.0;
    let mut real_part = |f: Vec<Complex64>| -> Vec<f64> {
        let im: Vec<f64> = f.iter().map(|v| v.im).collect();
        imag = imag.max(l2_norm(grid, &im));
        f.iter().map(|v| v.re).collect()
    };
    let scaled = |f: &[Complex64], c: Complex64| f.iter().map(|v| v * c).collect::<Vec<_>>();
    let ia = I / alpha;
    let p = real_part(scaled(&snaps[0].uplus, ia));
    let qminus = real_part(scaled(&snaps[0].uminus, ia));
    let qplus = real_part(scaled(&snaps[1].uplus, ia));
    let p_alt = real_part(scaled(&snaps[1].uminus, ia));
    let mut a = Vec::with_capacity(dim);
    let mut a_alt = Vec::with_capacity(dim);
    for k in 0..dim {
        let s = &snaps[k + 2];
        let mut plus = Vec::with_capacity(grid.len());
        let mut minus = Vec::with_capacity(grid.len());
        for (n, x) in grid.points().enumerate() {
            plus.push(I * s.uplus[n] - (p[n] + qplus[n]) * x[k]);
            minus.push(-(I * s.uminus[n] - (p[n] + qminus[n]) * x[k]));
        }
        a.push(deaverage(grid, k, &real_part(plus)));
        a_alt.push(deaverage(grid, k, &real_part(minus)));
    }
    let recovered = CoefficientSet {
        a,
        p,
        qplus,
        qminus,
        bound: f64::INFINITY,
    };
    // A may vanish identically (always in 1D), so its cross-check and the
    // imaginary residual are scaled by the whole recovered set
    let total = recovered.squared_l2(grid).sqrt();
    let scale = |d: f64| if total > 0.0 { d / total } else { d };
    let p_cross = rel(grid, &p_alt, &recovered.p);
    let a_cross = (0..dim)
        .map(|k| {
            let d: Vec<f64> = a_alt[k].iter().zip(&recovered.a[k]).map(|(x, y)| x - y).collect();
            scale(l2_norm(grid, &d))
        })
        .collect();
    let imag_residual = scale(imag);
    let errors = match truth {
        Some(t) => {
            t.check_shape(grid)?;
            let total = t.squared_l2(grid).sqrt();
            Some(
                recovered
                    .fields()
                    .zip(t.fields())
                    .map(|(r, tr)| {
                        if l2_norm_sq(grid, tr) > 0.0 {
                            rel(grid, r, tr)
                        } else if total > 0.0 {
                            l2_norm(grid, r) / total
                        } else {
                            l2_norm(grid, r)
                        }
                    })
                    .collect(),
            )
        }
        None => None,
    };
    Ok(ReconstructionResult {
        recovered,
        p_alt,
        a_alt,
        p_cross,
        a_cross,
        imag_residual,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, select_observation_boundary, Domain};

    fn line(n: usize, t: f64) -> SpatialGrid {
        build_grid(&Domain::interval(0.0, 1.0, t).unwrap(), &[n]).unwrap()
    }

    fn square(n: usize, t: f64) -> SpatialGrid {
        build_grid(&Domain::rectangle([0.0, 1.0], [0.0, 1.0], t).unwrap(), &[n, n]).unwrap()
    }

    fn baseline(grid: &SpatialGrid) -> CoefficientSet {
        let mut c = CoefficientSet::zero(grid, 2.0);
        c.a = vec![vec![0.3; grid.len()]; grid.dim()];
        c.p = grid.sample(|x| 0.5 + 0.2 * x[0]);
        c.qplus = vec![0.4; grid.len()];
        c.qminus = grid.sample(|x| -0.3 * x[0]);
        c
    }

    #[test]
    fn probe_layout() {
        let g = line(11, 0.1);
        let s = build_probes(&g, &baseline(&g), 0.5, 2).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.probes[0].u0.uplus.iter().all(|v| *v == Complex64::default()));
        assert!(s.probes[0].u0.uminus.iter().all(|v| v.re == 0.5));
        assert!(s.probes[1].u0.uminus.iter().all(|v| *v == Complex64::default()));
        for (n, x) in g.points().enumerate() {
            assert_eq!(s.probes[2].u0.uplus[n].re, x[0]);
            assert_eq!(s.probes[2].u0.uminus[n].re, x[0]);
        }
        let g2 = square(6, 0.1);
        let s2 = build_probes(&g2, &baseline(&g2), 0.5, 2).unwrap();
        assert_eq!(s2.len(), 4);
        for (n, x) in g2.points().enumerate() {
            assert_eq!(s2.probes[3].u0.uplus[n].re, x[1]);
        }
        for mats in s2.gradient_matrices(&g2) {
            for m in mats {
                for k in 0..2 {
                    for l in 0..2 {
                        let id = if k == l { 1.0 } else { 0.0 };
                        assert!((m[k][l] - id).abs() < 1e-12);
                    }
                }
            }
        }
        let c0 = s2.min_singular_values(&g2);
        assert!((c0[0] - 1.0).abs() < 1e-12 && (c0[1] - 1.0).abs() < 1e-12);
        assert!(build_probes(&g, &baseline(&g), 0.0, 2).is_err());
    }

    #[test]
    fn deaverage_inverts_the_average() {
        let g = square(9, 0.1);
        let a: Vec<f64> = g.sample(|x| (x[0] * (1.0 - x[0])) * (1.0 + x[1]) * x[1] * (1.0 - x[1]));
        let avg: Vec<f64> = (0..g.len())
            .map(|n| match (g.neighbor(n, 1, -1), g.neighbor(n, 1, 1)) {
                (Some(l), Some(r)) if !g.is_boundary(n) => (a[l] + 2.0 * a[n] + a[r]) / 4.0,
                _ => 0.0,
            })
            .collect();
        let back = deaverage(&g, 1, &avg);
        for n in 0..g.len() {
            assert!((back[n] - a[n]).abs() < 1e-14);
        }
    }

    #[test]
    fn identical_pair_is_exactly_zero() {
        let g = line(21, 0.05);
        let b = baseline(&g);
        let probes = build_probes(&g, &b, 1.0, 2).unwrap();
        let obs = select_observation_boundary(&g, &[-0.5]).unwrap();
        let r = run_pair_experiment(&g, &b, &b, &probes, 0.005, &obs).unwrap();
        assert_eq!((r.lhs, r.rhs_raw, r.ratio), (0.0, 0.0, None));
        let snaps = snapshots(&g, &b, &b, &probes, 0.005).unwrap();
        let rec = linearized_reconstruct(&g, &snaps, &probes, None).unwrap();
        assert!(rec.recovered.fields().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn p_difference_snapshot() {
        let g = line(41, 0.05);
        let b = baseline(&g);
        let pert = AdmissiblePerturbation::sample(&g, &b, 0.1, 4, PerturbationMask::P_ONLY).unwrap();
        let probes = build_probes(&g, &b, 1.0, 2).unwrap();
        let v = snapshot_v0(&g, &pert.perturbed(), &b, &probes.probes[0], 1e-4).unwrap();
        for n in 0..g.len() {
            let expect = -I * pert.delta.p[n] * 1.0;
            assert!((v.uplus[n] - expect).norm() < 1e-5, "{n}");
            assert!(v.uminus[n].norm() < 1e-5);
        }
    }

    #[test]
    fn weighted_norm_is_zero_for_zero_difference() {
        let g = line(21, 0.05);
        let b = baseline(&g);
        let probes = build_probes(&g, &b, 1.0, 2).unwrap();
        let obs = select_observation_boundary(&g, &[-0.5]).unwrap();
        let cfg = WeightConfig {
            x0: vec![-0.5],
            r: 1.1,
            lambda: 0.1,
            t_final: 0.05,
        };
        let t = probe_traces(&g, &b, &probes, 0.005, &obs).unwrap();
        let r = report_from(&g, 0.0, &t, &t, 0.005, Some((&cfg, 1.0)));
        assert_eq!(r.rhs_weighted, Some(0.0));
    }
}
