//! Coupling coefficients `A`, `p`, `q±`: construction, admissibility checks
//! and seeded perturbations that keep the boundary traces of a baseline.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::SpatialGrid;

/// Relative tolerance on the discrete divergence of `A`.
pub const TOL_DIV: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSet {
    /// One nodal field per spatial component.
    pub a: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    pub qplus: Vec<f64>,
    pub qminus: Vec<f64>,
    /// Admissibility bound `M` on the sup-norm of every field.
    pub bound: f64,
}

impl CoefficientSet {
    pub fn zero(grid: &SpatialGrid, bound: f64) -> Self {
        let n = grid.len();
        CoefficientSet {
            a: vec![vec![0.0; n]; grid.dim()],
            p: vec![0.0; n],
            qplus: vec![0.0; n],
            qminus: vec![0.0; n],
            bound,
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn check_shape(&self, grid: &SpatialGrid) -> Result<()> {
        let n = grid.len();
        let ok_a = self.a.len() == grid.dim() && self.a.iter().all(|c| c.len() == n);
        for len in [self.p.len(), self.qplus.len(), self.qminus.len()] {
            if len != n {
                return Err(Error::ShapeMismatch { expected: n, got: len });
            }
        }
        if !ok_a {
            return Err(Error::ShapeMismatch {
                expected: grid.dim(),
                got: self.a.len(),
            });
        }
        Ok(())
    }

    /// Scalar fields in the order `A_1, .., A_n, p, q+, q-`.
    pub fn fields(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.a.iter().chain([&self.p, &self.qplus, &self.qminus])
    }

    /// Field-wise `self - other`; the bound is carried over from `self`.
    pub fn minus(&self, other: &CoefficientSet) -> CoefficientSet {
        let sub = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>();
        CoefficientSet {
            a: self.a.iter().zip(&other.a).map(|(x, y)| sub(x, y)).collect(),
            p: sub(&self.p, &other.p),
            qplus: sub(&self.qplus, &other.qplus),
            qminus: sub(&self.qminus, &other.qminus),
            bound: self.bound,
        }
    }

    /// Largest Euclidean length of `A` over the nodes.
    pub fn sup_a(&self) -> f64 {
        (0..self.len())
            .map(|n| self.a.iter().map(|c| c[n] * c[n]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// `‖A‖² + ‖p‖² + ‖q+‖² + ‖q-‖²` in L²(Ω).
    pub fn squared_l2(&self, grid: &SpatialGrid) -> f64 {
        self.fields().map(|f| crate::geometry::l2_norm_sq(grid, f)).sum()
    }
}

fn sup(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Where a divergence-free `A` comes from.
pub enum VectorPotential<'a> {
    /// Spatially constant field (the only divergence-free choice in 1D).
    Constant(&'a [f64]),
    /// 2D stream function `ψ`; `A = (∂₂ψ, -∂₁ψ)` by centred differences.
    Stream(&'a dyn Fn(&[f64]) -> f64),
}

pub fn make_divergence_free(grid: &SpatialGrid, source: VectorPotential<'_>) -> Result<Vec<Vec<f64>>> {
    match source {
        VectorPotential::Constant(c) => {
            if c.len() != grid.dim() {
                return Err(Error::ShapeMismatch {
                    expected: grid.dim(),
                    got: c.len(),
                });
            }
            Ok(c.iter().map(|&v| vec![v; grid.len()]).collect())
        }
        VectorPotential::Stream(psi) => {
            if grid.dim() != 2 {
                return Err(Error::NonConstantDivergenceFree1d);
            }
            Ok(curl_of_stream(grid, psi))
        }
    }
}

/// Centred curl of `ψ` sampled on the grid lattice extended by one ghost
/// layer. The centred divergence of the result vanishes up to rounding
/// because centred differences along different axes commute.
fn curl_of_stream(grid: &SpatialGrid, psi: &dyn Fn(&[f64]) -> f64) -> Vec<Vec<f64>> {
    let d = grid.domain();
    let [nx, ny] = [grid.shape()[0], grid.shape()[1]];
    let coord = |k: usize, i: isize, n: usize| d.lo[k] + (d.hi[k] - d.lo[k]) * (i as f64) / ((n - 1) as f64);
    let ex = nx + 2;
    let mut lattice = vec![0.0; ex * (ny + 2)];
    for j in 0..ny + 2 {
        for i in 0..ex {
            let x = [coord(0, i as isize - 1, nx), coord(1, j as isize - 1, ny)];
            lattice[i + ex * j] = psi(&x);
        }
    }
    let [hx, hy] = [grid.spacing()[0], grid.spacing()[1]];
    let mut a1 = vec![0.0; grid.len()];
    let mut a2 = vec![0.0; grid.len()];
    for j in 0..ny {
        for i in 0..nx {
            let n = grid.node_at([i, j]);
            let up = lattice[(i + 1) + ex * (j + 2)];
            let down = lattice[(i + 1) + ex * j];
            let right = lattice[(i + 2) + ex * (j + 1)];
            let left = lattice[i + ex * (j + 1)];
            a1[n] = (up - down) / (2.0 * hy);
            a2[n] = -(right - left) / (2.0 * hx);
        }
    }
    vec![a1, a2]
}

/// Centred divergence at every interior node, in `grid.interior()` order.
pub fn discrete_divergence(grid: &SpatialGrid, a: &[Vec<f64>]) -> Vec<f64> {
    grid.interior()
        .iter()
        .map(|&n| {
            (0..grid.dim())
                .map(|k| {
                    let (l, r) = (grid.neighbor(n, k, -1).unwrap(), grid.neighbor(n, k, 1).unwrap());
                    (a[k][r] - a[k][l]) / (2.0 * grid.spacing()[k])
                })
                .sum()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibilityReport {
    /// Sup-norms of `A` (Euclidean), `p`, `q+`, `q-`.
    pub sup_norms: [f64; 4],
    pub bound: f64,
    pub bounds_ok: bool,
    /// `max |div A| / ‖A‖∞` over interior nodes.
    pub divergence_residual: f64,
    pub divergence_ok: bool,
    /// Largest deviation from the baseline at boundary nodes.
    pub trace_value_residual: f64,
    /// Largest deviation of the first inward difference along the normal.
    pub trace_normal_residual: f64,
    /// `M h²` for values.
    pub trace_tolerance: f64,
    /// `M h` for first normal differences.
    pub normal_tolerance: f64,
    pub trace_ok: bool,
}

impl AdmissibilityReport {
    pub fn passed(&self) -> bool {
        self.bounds_ok && self.divergence_ok && self.trace_ok
    }
}

/// Discrete admissibility of `set` relative to `baseline` on `grid`.
///
/// Boundary agreement is checked for values and for first differences
/// along the normal at face nodes, with tolerances `M h²` and `M h`
/// respectively (`h` the largest spacing).
pub fn check_admissible(grid: &SpatialGrid, set: &CoefficientSet, baseline: &CoefficientSet) -> Result<AdmissibilityReport> {
    set.check_shape(grid)?;
    baseline.check_shape(grid)?;
    let sup_norms = [set.sup_a(), sup(&set.p), sup(&set.qplus), sup(&set.qminus)];
    let bound = set.bound;
    let bounds_ok = sup_norms.iter().all(|&s| s <= bound);

    let div = sup(&discrete_divergence(grid, &set.a));
    let scale = set.sup_a();
    let divergence_residual = if scale > 0.0 { div / scale } else { div };

    let delta = set.minus(baseline);
    let mut value_res: f64 = 0.0;
    let mut normal_res: f64 = 0.0;
    for b in grid.boundary() {
        for f in delta.fields() {
            value_res = value_res.max(f[b.node].abs());
            if let Some(face) = b.face {
                let inward = grid.neighbor(b.node, face.axis, if face.upper { -1 } else { 1 }).unwrap();
                let diff = (f[inward] - f[b.node]) / grid.spacing()[face.axis];
                normal_res = normal_res.max(diff.abs());
            }
        }
    }
    let h = grid.spacing().iter().fold(0.0, |m: f64, &v| m.max(v));
    let trace_tolerance = bound * h * h;
    Ok(AdmissibilityReport {
        sup_norms,
        bound,
        bounds_ok,
        divergence_residual,
        divergence_ok: divergence_residual <= TOL_DIV,
        trace_value_residual: value_res,
        trace_normal_residual: normal_res,
        trace_tolerance,
        normal_tolerance: bound * h,
        trace_ok: value_res <= trace_tolerance && normal_res <= bound * h,
    })
}

/// Polynomial bump `Π (4ξ(1-ξ))^power` on the unit-normalised coordinates:
/// equal to 1 at the centre, vanishing to order `power` on the boundary.
pub fn cutoff(grid: &SpatialGrid, x: &[f64], power: i32) -> f64 {
    (0..grid.dim())
        .map(|k| {
            let xi = grid.domain().unit_coordinate(k, x[k]);
            (4.0 * xi * (1.0 - xi)).powi(power)
        })
        .product()
}

/// Order of vanishing of the perturbation cutoff for `p`, `q±`.
pub const CUTOFF_ORDER: i32 = 4;

/// Low-order trigonometric field with seeded coefficients whose absolute
/// values sum to one, so `|F| ≤ 1` everywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierField {
    // (mode per axis, sine flag per axis, coefficient)
    terms: Vec<([usize; 2], [bool; 2], f64)>,
}

impl FourierField {
    pub fn sample(rng: &mut impl Rng, dim: usize) -> Self {
        let max_mode = if dim == 1 { 3 } else { 2 };
        let axis_basis: Vec<(usize, bool)> = (0..=max_mode)
            .flat_map(|m| {
                let mut v = vec![(m, false)];
                if m > 0 {
                    v.push((m, true));
                }
                v
            })
            .collect();
        let mut terms: Vec<([usize; 2], [bool; 2], f64)> = Vec::new();
        if dim == 1 {
            for &(m, s) in &axis_basis {
                terms.push(([m, 0], [s, false], rng.gen_range(-1.0..1.0)));
            }
        } else {
            for &(m1, s1) in &axis_basis {
                for &(m2, s2) in &axis_basis {
                    terms.push(([m1, m2], [s1, s2], rng.gen_range(-1.0..1.0)));
                }
            }
        }
        let total: f64 = terms.iter().map(|t| t.2.abs()).sum();
        for t in &mut terms {
            t.2 /= total;
        }
        FourierField { terms }
    }

    pub fn eval(&self, grid: &SpatialGrid, x: &[f64]) -> f64 {
        let dim = grid.dim();
        self.terms
            .iter()
            .map(|(m, s, c)| {
                let mut v = *c;
                for k in 0..dim {
                    let arg = m[k] as f64 * PI * grid.domain().unit_coordinate(k, x[k]);
                    v *= if s[k] { arg.sin() } else { arg.cos() };
                }
                v
            })
            .sum()
    }
}

/// Which fields a perturbation touches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PerturbationMask {
    pub a: bool,
    pub p: bool,
    pub qplus: bool,
    pub qminus: bool,
}

impl PerturbationMask {
    pub const ALL: PerturbationMask = PerturbationMask {
        a: true,
        p: true,
        qplus: true,
        qminus: true,
    };

    pub const P_ONLY: PerturbationMask = PerturbationMask {
        a: false,
        p: true,
        qplus: false,
        qminus: false,
    };

    pub const A_ONLY: PerturbationMask = PerturbationMask {
        a: true,
        p: false,
        qplus: false,
        qminus: false,
    };
}

impl Default for PerturbationMask {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Clone, Debug)]
pub struct AdmissiblePerturbation {
    pub baseline: CoefficientSet,
    /// `amplitude * shape`, with every shape field bounded by one in sup-norm.
    pub delta: CoefficientSet,
    /// Cutoff used for `p`, `q±` (the stream function uses one order more).
    pub cutoff: Vec<f64>,
    pub amplitude: f64,
    pub seed: u64,
}

impl AdmissiblePerturbation {
    /// Seeded smooth perturbation of `baseline`. Pure function of the inputs;
    /// the delta fields are exactly linear in `amplitude`.
    pub fn sample(
        grid: &SpatialGrid,
        baseline: &CoefficientSet,
        amplitude: f64,
        seed: u64,
        mask: PerturbationMask,
    ) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(Error::InvalidParameter(format!("amplitude must be >= 0, got {amplitude}")));
        }
        baseline.check_shape(grid)?;
        let shape = Self::unit_shape(grid, seed, mask);
        let scale = |f: &[f64]| f.iter().map(|v| amplitude * v).collect::<Vec<_>>();
        let delta = CoefficientSet {
            a: shape.a.iter().map(|c| scale(c)).collect(),
            p: scale(&shape.p),
            qplus: scale(&shape.qplus),
            qminus: scale(&shape.qminus),
            bound: baseline.bound,
        };
        let pert = AdmissiblePerturbation {
            baseline: baseline.clone(),
            delta,
            cutoff: grid.sample(|x| cutoff(grid, x, CUTOFF_ORDER)),
            amplitude,
            seed,
        };
        let set = pert.perturbed();
        let checks = [
            ("A", set.sup_a()),
            ("p", sup(&set.p)),
            ("q+", sup(&set.qplus)),
            ("q-", sup(&set.qminus)),
        ];
        for (field, value) in checks {
            if value > baseline.bound {
                return Err(Error::BoundExceeded {
                    field,
                    value,
                    bound: baseline.bound,
                });
            }
        }
        Ok(pert)
    }

    /// Amplitude-one perturbation shape for `seed`.
    fn unit_shape(grid: &SpatialGrid, seed: u64, mask: PerturbationMask) -> CoefficientSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = grid.dim();
        // draw every field in a fixed order so the mask does not shift streams
        let stream = FourierField::sample(&mut rng, dim);
        let fp = FourierField::sample(&mut rng, dim);
        let fqp = FourierField::sample(&mut rng, dim);
        let fqm = FourierField::sample(&mut rng, dim);
        let n = grid.len();
        let masked = |f: &FourierField, on: bool| {
            if on {
                grid.sample(|x| cutoff(grid, x, CUTOFF_ORDER) * f.eval(grid, x))
            } else {
                vec![0.0; n]
            }
        };
        let a = if dim == 2 && mask.a {
            let psi = |x: &[f64]| cutoff(grid, x, CUTOFF_ORDER + 1) * stream.eval(grid, x);
            let curl = curl_of_stream(grid, &psi);
            let peak = (0..n)
                .map(|i| (curl[0][i].powi(2) + curl[1][i].powi(2)).sqrt())
                .fold(0.0, f64::max);
            curl.into_iter()
                .map(|c| c.into_iter().map(|v| if peak > 0.0 { v / peak } else { 0.0 }).collect())
                .collect()
        } else {
            vec![vec![0.0; n]; dim]
        };
        CoefficientSet {
            a,
            p: masked(&fp, mask.p),
            qplus: masked(&fqp, mask.qplus),
            qminus: masked(&fqm, mask.qminus),
            bound: f64::INFINITY,
        }
    }

    pub fn perturbed(&self) -> CoefficientSet {
        let add = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a + b).collect::<Vec<_>>();
        let b = &self.baseline;
        CoefficientSet {
            a: b.a.iter().zip(&self.delta.a).map(|(x, y)| add(x, y)).collect(),
            p: add(&b.p, &self.delta.p),
            qplus: add(&b.qplus, &self.delta.qplus),
            qminus: add(&b.qminus, &self.delta.qminus),
            bound: b.bound,
        }
    }
}

pub fn sample_admissible_perturbation(
    grid: &SpatialGrid,
    baseline: &CoefficientSet,
    amplitude: f64,
    seed: u64,
) -> Result<CoefficientSet> {
    Ok(AdmissiblePerturbation::sample(grid, baseline, amplitude, seed, PerturbationMask::ALL)?.perturbed())
}

/// Writes `node x [y] A1 [A2] p qplus qminus`, one row per node.
pub fn write_columns(grid: &SpatialGrid, set: &CoefficientSet, out: &mut impl Write) -> Result<()> {
    set.check_shape(grid)?;
    let dim = grid.dim();
    let mut header = String::from("# node x");
    if dim == 2 {
        header.push_str(" y");
    }
    for k in 0..dim {
        header.push_str(&format!(" A{}", k + 1));
    }
    header.push_str(" p qplus qminus");
    writeln!(out, "{header}")?;
    for n in 0..grid.len() {
        let mut row = n.to_string();
        for &c in grid.point(n) {
            row.push_str(&format!(" {c:.17e}"));
        }
        for f in set.fields() {
            row.push_str(&format!(" {:.17e}", f[n]));
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

/// Reads the format of [`write_columns`] back for a grid of the same shape.
pub fn read_columns(grid: &SpatialGrid, bound: f64, input: impl BufRead) -> Result<CoefficientSet> {
    let dim = grid.dim();
    let mut set = CoefficientSet::zero(grid, bound);
    let mut seen = vec![false; grid.len()];
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: lineno + 1,
            message,
        };
        let cols: Vec<&str> = t.split_whitespace().collect();
        if cols.len() != 1 + 2 * dim + 3 {
            return Err(parse_err(format!("expected {} columns, found {}", 1 + 2 * dim + 3, cols.len())));
        }
        let node: usize = cols[0].parse().map_err(|e| parse_err(format!("node index: {e}")))?;
        if node >= grid.len() {
            return Err(parse_err(format!("node {node} outside grid of {} nodes", grid.len())));
        }
        let vals: Vec<f64> = cols[1 + dim..]
            .iter()
            .map(|c| c.parse::<f64>().map_err(|e| parse_err(format!("{c}: {e}"))))
            .collect::<Result<_>>()?;
        for k in 0..dim {
            set.a[k][node] = vals[k];
        }
        set.p[node] = vals[dim];
        set.qplus[node] = vals[dim + 1];
        set.qminus[node] = vals[dim + 2];
        seen[node] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Parse {
            line: 0,
            message: format!("node {missing} missing"),
        });
    }
    Ok(set)
}
