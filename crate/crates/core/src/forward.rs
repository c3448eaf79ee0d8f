//! Discrete Hamiltonian, compatible boundary data and trapezoidal time
//! stepping for the coupled two-state system `-i ∂t u + H u = f`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coefficients::{discrete_divergence, CoefficientSet, TOL_DIV};
use crate::error::{Error, Result};
use crate::geometry::{l2_norm_sq, Face, ObservationBoundary, SpatialGrid, TimeGrid};
use crate::sparse::{BandedLu, CsrMatrix};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Pair of complex nodal fields `(u+, u-)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoStateField {
    pub uplus: Vec<Complex64>,
    pub uminus: Vec<Complex64>,
}

impl TwoStateField {
    pub fn zeros(n: usize) -> Self {
        TwoStateField {
            uplus: vec![Complex64::default(); n],
            uminus: vec![Complex64::default(); n],
        }
    }

    pub fn from_fn(grid: &SpatialGrid, f: impl Fn(&[f64]) -> (Complex64, Complex64)) -> Self {
        let (uplus, uminus) = grid.points().map(f).unzip();
        TwoStateField { uplus, uminus }
    }

    pub fn from_real(plus: &[f64], minus: &[f64]) -> Self {
        TwoStateField {
            uplus: plus.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            uminus: minus.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.uplus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uplus.is_empty()
    }

    /// Component 0 is `u+`, component 1 is `u-`.
    pub fn component(&self, c: usize) -> &[Complex64] {
        if c == 0 {
            &self.uplus
        } else {
            &self.uminus
        }
    }

    pub fn norm_sq(&self, grid: &SpatialGrid) -> f64 {
        l2_norm_sq(grid, &self.uplus) + l2_norm_sq(grid, &self.uminus)
    }

    /// Discrete `L²(Ω)²` norm.
    pub fn norm(&self, grid: &SpatialGrid) -> f64 {
        self.norm_sq(grid).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.uplus.iter().chain(&self.uminus).fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn sub(&self, other: &TwoStateField) -> TwoStateField {
        let d = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(x, y)| x - y).collect();
        TwoStateField {
            uplus: d(&self.uplus, &other.uplus),
            uminus: d(&self.uminus, &other.uminus),
        }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> TwoStateField {
        TwoStateField {
            uplus: self.uplus.iter().map(|&v| f(v)).collect(),
            uminus: self.uminus.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Interleaved values at `nodes`: entry `2k + c` is component `c` at `nodes[k]`.
    fn gather(&self, nodes: &[usize]) -> Vec<Complex64> {
        nodes.iter().flat_map(|&n| [self.uplus[n], self.uminus[n]]).collect()
    }

    fn scatter(&mut self, nodes: &[usize], values: &[Complex64]) {
        for (k, &n) in nodes.iter().enumerate() {
            self.uplus[n] = values[2 * k];
            self.uminus[n] = values[2 * k + 1];
        }
    }
}

/// Interleaved interior operator `H_II`, its coupling to boundary values
/// `H_IB`, and a full-grid version with one-sided stencils at boundary nodes
/// (used to differentiate initial data for compatible boundary data).
#[derive(Clone, Debug)]
pub struct DiscreteHamiltonian {
    interior: CsrMatrix,
    boundary: CsrMatrix,
    formal: CsrMatrix,
    interior_nodes: Vec<usize>,
    boundary_nodes: Vec<usize>,
    n_nodes: usize,
    divergence_residual: f64,
}

impl DiscreteHamiltonian {
    pub fn interior_matrix(&self) -> &CsrMatrix {
        &self.interior
    }

    pub fn boundary_matrix(&self) -> &CsrMatrix {
        &self.boundary
    }

    pub fn formal_matrix(&self) -> &CsrMatrix {
        &self.formal
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    /// `max |div A| / ‖A‖∞` of the coefficients used.
    pub fn divergence_residual(&self) -> f64 {
        self.divergence_residual
    }

    /// Relative deviation of `H_II` from its conjugate transpose.
    pub fn hermitian_defect(&self) -> f64 {
        self.interior.hermitian_defect()
    }

    /// `H u` at interior nodes (boundary values of `u` enter through
    /// `H_IB`); zero at boundary nodes.
    pub fn apply(&self, u: &TwoStateField) -> TwoStateField {
        let mut y = self.interior.mul_vec(&u.gather(&self.interior_nodes));
        let yb = self.boundary.mul_vec(&u.gather(&self.boundary_nodes));
        for (a, b) in y.iter_mut().zip(yb) {
            *a += b;
        }
        let mut out = TwoStateField::zeros(self.n_nodes);
        out.scatter(&self.interior_nodes, &y);
        out
    }

    /// Full-grid application with one-sided stencils on the boundary.
    pub fn apply_formal(&self, u: &TwoStateField) -> TwoStateField {
        let all: Vec<usize> = (0..self.n_nodes).collect();
        let y = self.formal.mul_vec(&u.gather(&all));
        let mut out = TwoStateField::zeros(self.n_nodes);
        out.scatter(&all, &y);
        out
    }
}

// (row component, column node, column component, value)
type Entry = (usize, usize, usize, f64);

fn interior_stencil(grid: &SpatialGrid, c: &CoefficientSet, div: &[f64], n: usize, laplacian: bool, out: &mut Vec<Entry>) {
    for k in 0..grid.dim() {
        let h = grid.spacing()[k];
        let l = grid.neighbor(n, k, -1).unwrap();
        let r = grid.neighbor(n, k, 1).unwrap();
        if laplacian {
            for comp in 0..2 {
                out.push((comp, n, comp, 2.0 / (h * h)));
                out.push((comp, l, comp, -1.0 / (h * h)));
                out.push((comp, r, comp, -1.0 / (h * h)));
            }
        }
        // skew part of A·∇: plus row sees +A·∇u-, minus row sees -A·∇u+
        let a = &c.a[k];
        let sr = (a[n] + a[r]) / (4.0 * h);
        let sl = -(a[n] + a[l]) / (4.0 * h);
        out.push((0, r, 1, sr));
        out.push((0, l, 1, sl));
        out.push((1, r, 0, -sr));
        out.push((1, l, 0, -sl));
    }
    out.push((0, n, 1, -0.5 * div[n]));
    out.push((1, n, 0, 0.5 * div[n]));
    push_zeroth_order(c, n, out);
}

fn push_zeroth_order(c: &CoefficientSet, n: usize, out: &mut Vec<Entry>) {
    out.push((0, n, 0, c.qplus[n]));
    out.push((1, n, 1, c.qminus[n]));
    out.push((0, n, 1, c.p[n]));
    out.push((1, n, 0, c.p[n]));
}

fn boundary_stencil(grid: &SpatialGrid, c: &CoefficientSet, n: usize, out: &mut Vec<Entry>) {
    for k in 0..grid.dim() {
        let h = grid.spacing()[k];
        let (second, first): (Vec<(usize, f64)>, Vec<(usize, f64)>) =
            match (grid.neighbor(n, k, -1), grid.neighbor(n, k, 1)) {
                (Some(l), Some(r)) => (
                    vec![(l, 1.0), (n, -2.0), (r, 1.0)],
                    vec![(l, -0.5), (r, 0.5)],
                ),
                (l, _) => {
                    let d: isize = if l.is_none() { 1 } else { -1 };
                    let at = |m: isize| grid.neighbor(n, k, d * m);
                    let second = match at(3) {
                        Some(n3) => vec![(n, 2.0), (at(1).unwrap(), -5.0), (at(2).unwrap(), 4.0), (n3, -1.0)],
                        None => vec![(n, 1.0), (at(1).unwrap(), -2.0), (at(2).unwrap(), 1.0)],
                    };
                    let s = d as f64;
                    let first = vec![(n, -1.5 * s), (at(1).unwrap(), 2.0 * s), (at(2).unwrap(), -0.5 * s)];
                    (second, first)
                }
            };
        for (m, w) in second {
            for comp in 0..2 {
                out.push((comp, m, comp, -w / (h * h)));
            }
        }
        for (m, w) in first {
            let v = c.a[k][n] * w / h;
            out.push((0, m, 1, v));
            out.push((1, m, 0, -v));
        }
    }
    push_zeroth_order(c, n, out);
}

fn assemble(grid: &SpatialGrid, coeffs: &CoefficientSet, laplacian: bool) -> Result<DiscreteHamiltonian> {
    coeffs.check_shape(grid)?;
    let interior_nodes = grid.interior().to_vec();
    let boundary_nodes: Vec<usize> = grid.boundary().iter().map(|b| b.node).collect();
    let div_interior = discrete_divergence(grid, &coeffs.a);
    let mut div = vec![0.0; grid.len()];
    for (&n, &d) in interior_nodes.iter().zip(&div_interior) {
        div[n] = d;
    }
    let sup_div = div_interior.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let scale = coeffs.sup_a();
    let divergence_residual = if scale > 0.0 { sup_div / scale } else { sup_div };

    let ni = interior_nodes.len();
    let nb = boundary_nodes.len();
    let mut ti = Vec::new();
    let mut tb = Vec::new();
    let mut tf = Vec::new();
    let mut entries = Vec::new();
    for (ip, &n) in interior_nodes.iter().enumerate() {
        entries.clear();
        interior_stencil(grid, coeffs, &div, n, laplacian, &mut entries);
        for &(rc, m, cc, v) in &entries {
            tf.push((2 * n + rc, 2 * m + cc, v));
            match grid.interior_position(m) {
                Some(jp) => ti.push((2 * ip + rc, 2 * jp + cc, v)),
                None => tb.push((2 * ip + rc, 2 * grid.boundary_position(m).unwrap() + cc, v)),
            }
        }
    }
    for &n in &boundary_nodes {
        entries.clear();
        boundary_stencil(grid, coeffs, n, &mut entries);
        for &(rc, m, cc, v) in &entries {
            tf.push((2 * n + rc, 2 * m + cc, v));
        }
    }
    Ok(DiscreteHamiltonian {
        interior: CsrMatrix::from_triplets(2 * ni, 2 * ni, ti),
        boundary: CsrMatrix::from_triplets(2 * ni, 2 * nb, tb),
        formal: CsrMatrix::from_triplets(2 * grid.len(), 2 * grid.len(), tf),
        interior_nodes,
        boundary_nodes,
        n_nodes: grid.len(),
        divergence_residual,
    })
}

/// Assembles `-Δ + q̃ + Ã·∇ + p̃`. A non-divergence-free `A` is accepted but
/// recorded in [`DiscreteHamiltonian::divergence_residual`]; the operator is
/// then not Hermitian.
pub fn assemble_hamiltonian(grid: &SpatialGrid, coeffs: &CoefficientSet) -> Result<DiscreteHamiltonian> {
    assemble(grid, coeffs, true)
}

/// True when the coefficients' `A` passes the divergence tolerance.
pub fn expect_hermitian(h: &DiscreteHamiltonian) -> bool {
    h.divergence_residual() <= TOL_DIV
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelativeBoundReport {
    pub epsilon: f64,
    pub c_eps: f64,
    pub samples: usize,
    /// Largest `lhs - rhs` over the family (non-positive when the bound holds).
    pub max_violation: f64,
    /// Largest `‖(Ã·∇ + p̃ + q̃) u‖ / ‖u‖` seen.
    pub max_lower_order_ratio: f64,
    pub passed: bool,
}

/// `C_ε = ‖A‖∞²/ε + √2 ‖p‖∞ + (‖q+‖∞² + ‖q-‖∞²)^½`.
pub fn relative_bound_constant(coeffs: &CoefficientSet, epsilon: f64) -> f64 {
    let sup = |f: &[f64]| f.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let a = coeffs.sup_a();
    a * a / epsilon + 2f64.sqrt() * sup(&coeffs.p) + (sup(&coeffs.qplus).powi(2) + sup(&coeffs.qminus).powi(2)).sqrt()
}

/// Checks `‖(Ã·∇ + p̃ + q̃) u‖ ≤ ε ‖Δu‖ + C_ε ‖u‖` over a seeded family of
/// fields vanishing on the boundary: half smooth sine combinations, half
/// nodal noise.
pub fn check_relative_bound(grid: &SpatialGrid, coeffs: &CoefficientSet, epsilon: f64, samples: usize, seed: u64) -> Result<RelativeBoundReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let lower = assemble(grid, coeffs, false)?;
    let lap = assemble(grid, &CoefficientSet::zero(grid, coeffs.bound), true)?;
    let c_eps = relative_bound_constant(coeffs, epsilon);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_violation = f64::NEG_INFINITY;
    let mut max_ratio: f64 = 0.0;
    for s in 0..samples {
        let u = if s % 2 == 0 {
            let modes: Vec<([f64; 2], Complex64, Complex64)> = (0..4)
                .map(|_| {
                    let m = [rng.gen_range(1..=4) as f64, rng.gen_range(1..=4) as f64];
                    let a = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    let b = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    (m, a, b)
                })
                .collect();
            TwoStateField::from_fn(grid, |x| {
                let mut v = (Complex64::default(), Complex64::default());
                for (m, a, b) in &modes {
                    let mut phase = 1.0;
                    for k in 0..grid.dim() {
                        phase *= (m[k] * std::f64::consts::PI * grid.domain().unit_coordinate(k, x[k])).sin();
                    }
                    v.0 += a * phase;
                    v.1 += b * phase;
                }
                v
            })
        } else {
            let mut u = TwoStateField::zeros(grid.len());
            for &n in grid.interior() {
                u.uplus[n] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                u.uminus[n] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            u
        };
        let lhs = lower.apply(&u).norm(grid);
        let lap_norm = lap.apply(&u).norm(grid);
        let un = u.norm(grid);
        let rhs = epsilon * lap_norm + c_eps * un;
        max_violation = max_violation.max(lhs - rhs);
        if un > 0.0 {
            max_ratio = max_ratio.max(lhs / un);
        }
    }
    if samples == 0 {
        max_violation = 0.0;
    }
    Ok(RelativeBoundReport {
        epsilon,
        c_eps,
        samples,
        max_violation,
        max_lower_order_ratio: max_ratio,
        passed: max_violation <= 1e-12 * (1.0 + c_eps),
    })
}

/// Source term of `-i ∂t u + H u = f`, called with a node index and a time.
pub type Source<'a> = &'a (dyn Fn(usize, f64) -> (Complex64, Complex64) + Sync);

type BoundaryFn = dyn Fn(&[f64], f64) -> (Complex64, Complex64) + Send + Sync;

#[derive(Clone)]
enum BoundaryKind {
    /// `g(t) = Σ_ℓ t^ℓ c_ℓ`, interleaved coefficients per boundary node.
    Polynomial(Vec<Vec<Complex64>>),
    Function(Arc<BoundaryFn>, Vec<Vec<f64>>),
}

/// Dirichlet data on every boundary node, evaluable at any time.
#[derive(Clone)]
pub struct BoundaryData {
    nodes: Vec<usize>,
    kind: BoundaryKind,
}

impl fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            BoundaryKind::Polynomial(c) => write!(f, "BoundaryData::Polynomial(order {}, {} nodes)", c.len() - 1, self.nodes.len()),
            BoundaryKind::Function(..) => write!(f, "BoundaryData::Function({} nodes)", self.nodes.len()),
        }
    }
}

impl BoundaryData {
    pub fn zero(grid: &SpatialGrid) -> Self {
        let nodes: Vec<usize> = grid.boundary().iter().map(|b| b.node).collect();
        let zeros = vec![Complex64::default(); 2 * nodes.len()];
        BoundaryData {
            nodes,
            kind: BoundaryKind::Polynomial(vec![zeros]),
        }
    }

    pub fn from_fn(grid: &SpatialGrid, f: impl Fn(&[f64], f64) -> (Complex64, Complex64) + Send + Sync + 'static) -> Self {
        let nodes: Vec<usize> = grid.boundary().iter().map(|b| b.node).collect();
        let points = nodes.iter().map(|&n| grid.point(n).to_vec()).collect();
        BoundaryData {
            nodes,
            kind: BoundaryKind::Function(Arc::new(f), points),
        }
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Polynomial order in time, if polynomial.
    pub fn order(&self) -> Option<usize> {
        match &self.kind {
            BoundaryKind::Polynomial(c) => Some(c.len() - 1),
            BoundaryKind::Function(..) => None,
        }
    }

    /// Interleaved values `(g+, g-)` per boundary node at time `t`.
    pub fn eval_interleaved(&self, t: f64) -> Vec<Complex64> {
        match &self.kind {
            BoundaryKind::Polynomial(coeffs) => {
                let mut out = coeffs.last().unwrap().clone();
                for c in coeffs.iter().rev().skip(1) {
                    for (o, ci) in out.iter_mut().zip(c) {
                        *o = *o * t + ci;
                    }
                }
                out
            }
            BoundaryKind::Function(f, pts) => pts
                .iter()
                .flat_map(|x| {
                    let (a, b) = f(x, t);
                    [a, b]
                })
                .collect(),
        }
    }

    /// `(g+, g-)` indexed by boundary position.
    pub fn eval(&self, t: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let v = self.eval_interleaved(t);
        (v.iter().step_by(2).copied().collect(), v.iter().skip(1).step_by(2).copied().collect())
    }

    /// `ℓ`-th time derivative at `t = 0`, interleaved (polynomial data only).
    pub fn derivative_at_zero(&self, l: usize) -> Option<Vec<Complex64>> {
        match &self.kind {
            BoundaryKind::Polynomial(c) => {
                let fact: f64 = (1..=l).map(|k| k as f64).product();
                Some(match c.get(l) {
                    Some(cl) => cl.iter().map(|v| v * fact).collect(),
                    None => vec![Complex64::default(); 2 * self.nodes.len()],
                })
            }
            BoundaryKind::Function(..) => None,
        }
    }

    /// Tabulated values, one interleaved vector per time node.
    pub fn sample(&self, time: &TimeGrid) -> Vec<Vec<Complex64>> {
        time.times().iter().map(|&t| self.eval_interleaved(t)).collect()
    }
}

/// `g(t) = Σ_{ℓ ≤ order} t^ℓ/ℓ! (-i)^ℓ (H^ℓ u0)|Γ` with `H` built from
/// `baseline` (full-grid stencils), so `∂t^ℓ g(0) = (-i)^ℓ H^ℓ u0` on Γ.
pub fn compatibility_boundary_data(grid: &SpatialGrid, u0: &TwoStateField, baseline: &CoefficientSet, order: usize) -> Result<BoundaryData> {
    if u0.len() != grid.len() {
        return Err(Error::ShapeMismatch {
            expected: grid.len(),
            got: u0.len(),
        });
    }
    let h = assemble_hamiltonian(grid, baseline)?;
    let nodes: Vec<usize> = grid.boundary().iter().map(|b| b.node).collect();
    let mut w = u0.clone();
    let mut coeffs = vec![w.gather(&nodes)];
    let mut factor = Complex64::new(1.0, 0.0);
    for l in 1..=order {
        w = h.apply_formal(&w);
        factor *= -I / l as f64;
        coeffs.push(w.gather(&nodes).into_iter().map(|v| v * factor).collect());
    }
    Ok(BoundaryData {
        nodes,
        kind: BoundaryKind::Polynomial(coeffs),
    })
}

/// Snapshots of a solution on a uniform time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoStateTrajectory {
    times: Vec<f64>,
    snapshots: Vec<TwoStateField>,
}

impl TwoStateTrajectory {
    pub fn new(times: Vec<f64>, snapshots: Vec<TwoStateField>) -> Result<Self> {
        if times.len() != snapshots.len() {
            return Err(Error::ShapeMismatch {
                expected: times.len(),
                got: snapshots.len(),
            });
        }
        Ok(TwoStateTrajectory { times, snapshots })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshots(&self) -> &[TwoStateField] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn last(&self) -> &TwoStateField {
        self.snapshots.last().expect("non-empty trajectory")
    }

    /// Largest relative change of the `L²` norm from the first snapshot.
    pub fn norm_drift(&self, grid: &SpatialGrid) -> f64 {
        let n0 = self.snapshots[0].norm(grid);
        self.snapshots
            .iter()
            .map(|s| (s.norm(grid) - n0).abs() / n0.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }
}

/// Trapezoidal (Crank–Nicolson) stepper with the step matrix factored once.
#[derive(Clone, Debug)]
pub struct Stepper {
    ham: DiscreteHamiltonian,
    lu: BandedLu,
    dt: f64,
}

impl Stepper {
    pub fn new(ham: DiscreteHamiltonian, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        let lu = BandedLu::factor_shifted(ham.interior_matrix(), 1.0, 0.5 * dt)?;
        Ok(Stepper { ham, lu, dt })
    }

    pub fn hamiltonian(&self) -> &DiscreteHamiltonian {
        &self.ham
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn source_vec(&self, f: Option<Source<'_>>, t: f64) -> Option<Vec<Complex64>> {
        f.map(|f| {
            self.ham
                .interior_nodes
                .iter()
                .flat_map(|&n| {
                    let (a, b) = f(n, t);
                    [a, b]
                })
                .collect()
        })
    }

    /// Explicit half of the step: `(I - iaH_II)u - iaH_IB(g0+g1) + ia(f0+f1)`.
    fn explicit_part(&self, x: &[Complex64], g0: &[Complex64], g1: &[Complex64], f0: Option<&[Complex64]>, f1: Option<&[Complex64]>) -> Vec<Complex64> {
        let ia = I * (0.5 * self.dt);
        let hx = self.ham.interior.mul_vec(x);
        let gsum: Vec<Complex64> = g0.iter().zip(g1).map(|(a, b)| a + b).collect();
        let hg = self.ham.boundary.mul_vec(&gsum);
        let mut rhs: Vec<Complex64> = x.iter().zip(&hx).zip(&hg).map(|((xi, hi), gi)| xi - ia * hi - ia * gi).collect();
        if let (Some(f0), Some(f1)) = (f0, f1) {
            for ((r, a), b) in rhs.iter_mut().zip(f0).zip(f1) {
                *r += ia * (a + b);
            }
        }
        rhs
    }

    /// Advances `u0` by `steps` steps from `t0`, calling `visit` on every
    /// state including the initial one.
    pub fn run(
        &self,
        u0: &TwoStateField,
        t0: f64,
        g: &BoundaryData,
        f: Option<Source<'_>>,
        steps: usize,
        mut visit: impl FnMut(usize, f64, &TwoStateField),
    ) {
        let mut u = u0.clone();
        visit(0, t0, &u);
        let mut g_prev = g.eval_interleaved(t0);
        let mut f_prev = self.source_vec(f, t0);
        let mut x = u.gather(&self.ham.interior_nodes);
        for k in 1..=steps {
            let t = t0 + k as f64 * self.dt;
            let g_next = g.eval_interleaved(t);
            let f_next = self.source_vec(f, t);
            let mut rhs = self.explicit_part(&x, &g_prev, &g_next, f_prev.as_deref(), f_next.as_deref());
            self.lu.solve_in_place(&mut rhs);
            x = rhs;
            u.scatter(&self.ham.interior_nodes, &x);
            u.scatter(&self.ham.boundary_nodes, &g_next);
            visit(k, t, &u);
            g_prev = g_next;
            f_prev = f_next;
        }
    }

    /// Largest interior residual of one trapezoidal step from `(t0, u0)` to
    /// `(t0 + dt, u1)`.
    pub fn step_residual(&self, u0: &TwoStateField, u1: &TwoStateField, t0: f64, f: Option<Source<'_>>) -> f64 {
        let nodes = &self.ham.interior_nodes;
        let (x0, x1) = (u0.gather(nodes), u1.gather(nodes));
        let (g0, g1) = (u0.gather(&self.ham.boundary_nodes), u1.gather(&self.ham.boundary_nodes));
        let f0 = self.source_vec(f, t0);
        let f1 = self.source_vec(f, t0 + self.dt);
        let rhs = self.explicit_part(&x0, &g0, &g1, f0.as_deref(), f1.as_deref());
        let ia = I * (0.5 * self.dt);
        let hx = self.ham.interior.mul_vec(&x1);
        x1.iter()
            .zip(&hx)
            .zip(&rhs)
            .map(|((a, h), r)| (a + ia * h - r).norm())
            .fold(0.0, f64::max)
    }
}

fn steps_for(t_final: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let steps = (t_final / dt).round();
    if steps < 1.0 || (steps * dt - t_final).abs() > 1e-9 * t_final {
        return Err(Error::InvalidParameter(format!("time step {dt} does not divide T = {t_final}")));
    }
    Ok(steps as usize)
}

/// Largest mismatch between `g(·, 0)` and the boundary values of `u0`.
pub fn compatibility_defect(u0: &TwoStateField, g: &BoundaryData) -> f64 {
    let g0 = g.eval_interleaved(0.0);
    u0.gather(g.nodes()).iter().zip(&g0).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

/// Solves on `[0, T]` (`T` from the grid's domain) with step `dt`.
pub fn solve_ibvp(grid: &SpatialGrid, coeffs: &CoefficientSet, u0: &TwoStateField, g: &BoundaryData, f: Option<Source<'_>>, dt: f64) -> Result<TwoStateTrajectory> {
    let steps = steps_for(grid.domain().t_final, dt)?;
    let stepper = Stepper::new(assemble_hamiltonian(grid, coeffs)?, dt)?;
    solve_with(grid, &stepper, u0, g, f, steps)
}

/// As [`solve_ibvp`] with a prepared stepper and an explicit step count.
pub fn solve_with(grid: &SpatialGrid, stepper: &Stepper, u0: &TwoStateField, g: &BoundaryData, f: Option<Source<'_>>, steps: usize) -> Result<TwoStateTrajectory> {
    if u0.len() != grid.len() {
        return Err(Error::ShapeMismatch {
            expected: grid.len(),
            got: u0.len(),
        });
    }
    let defect = compatibility_defect(u0, g);
    if defect > 1e-10 * (1.0 + u0.max_abs()) {
        return Err(Error::Incompatible(defect));
    }
    let mut times = Vec::with_capacity(steps + 1);
    let mut snaps = Vec::with_capacity(steps + 1);
    stepper.run(u0, 0.0, g, f, steps, |_, t, u| {
        times.push(t);
        snaps.push(u.clone());
    });
    TwoStateTrajectory::new(times, snaps)
}

/// Neumann traces of `∂t u±` on the observed faces, per time node.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationTrace {
    pub times: Vec<f64>,
    pub nodes: Vec<(usize, Face)>,
    /// `plus[t][k]` is `∂ν ∂t u+` at time index `t`, trace node `k`.
    pub plus: Vec<Vec<Complex64>>,
    pub minus: Vec<Vec<Complex64>>,
}

impl ObservationTrace {
    pub fn sub(&self, other: &ObservationTrace) -> ObservationTrace {
        let d = |a: &[Vec<Complex64>], b: &[Vec<Complex64>]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
                .collect()
        };
        ObservationTrace {
            times: self.times.clone(),
            nodes: self.nodes.clone(),
            plus: d(&self.plus, &other.plus),
            minus: d(&self.minus, &other.minus),
        }
    }

    /// Squared `L²(Γ* × (0,T))` norms of the plus and minus traces
    /// (trapezoid in time, face measure in space).
    pub fn l2_norm_sq(&self, grid: &SpatialGrid) -> (f64, f64) {
        let nt = self.times.len();
        let measure: Vec<f64> = self.nodes.iter().map(|&(_, f)| grid.boundary_measure(f)).collect();
        let mut out = (0.0, 0.0);
        for t in 0..nt {
            let w = if nt < 2 {
                0.0
            } else {
                let dt = if t + 1 < nt { self.times[t + 1] - self.times[t] } else { self.times[t] - self.times[t - 1] };
                if t == 0 || t + 1 == nt {
                    0.5 * dt
                } else {
                    dt
                }
            };
            let s = |v: &[Complex64]| v.iter().zip(&measure).map(|(z, m)| m * z.norm_sqr()).sum::<f64>();
            out.0 += w * s(&self.plus[t]);
            out.1 += w * s(&self.minus[t]);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.plus.iter().chain(&self.minus).flatten().fold(0.0, |m, v| m.max(v.norm()))
    }
}

/// Second-order time derivative of a sequence of equally spaced vectors:
/// centred inside, one-sided at both ends.
pub fn time_derivative(values: &[Vec<Complex64>], dt: f64) -> Result<Vec<Vec<Complex64>>> {
    let n = values.len();
    if n < 3 {
        return Err(Error::TooFewTimeNodes { needed: 3, got: n });
    }
    let comb = |a: &[Complex64], wa: f64, b: &[Complex64], wb: f64, c: &[Complex64], wc: f64| -> Vec<Complex64> {
        (0..a.len()).map(|k| (a[k] * wa + b[k] * wb + c[k] * wc) / dt).collect()
    };
    Ok((0..n)
        .map(|t| {
            if t == 0 {
                comb(&values[0], -1.5, &values[1], 2.0, &values[2], -0.5)
            } else if t + 1 == n {
                comb(&values[n - 3], 0.5, &values[n - 2], -2.0, &values[n - 1], 1.5)
            } else {
                comb(&values[t - 1], -0.5, &values[t], 0.0, &values[t + 1], 0.5)
            }
        })
        .collect())
}

/// Incremental version of [`observe`]: feed snapshots in time order.
#[derive(Clone, Debug)]
pub struct TraceRecorder {
    obs: ObservationBoundary,
    times: Vec<f64>,
    plus: Vec<Vec<Complex64>>,
    minus: Vec<Vec<Complex64>>,
}

impl TraceRecorder {
    pub fn new(obs: &ObservationBoundary) -> Self {
        TraceRecorder {
            obs: obs.clone(),
            times: Vec::new(),
            plus: Vec::new(),
            minus: Vec::new(),
        }
    }

    pub fn push(&mut self, grid: &SpatialGrid, t: f64, u: &TwoStateField) {
        let tr = |f: &[Complex64]| {
            self.obs
                .trace_nodes()
                .iter()
                .map(|&(n, face)| grid.normal_derivative(f, n, face))
                .collect::<Vec<_>>()
        };
        let (p, m) = (tr(&u.uplus), tr(&u.uminus));
        self.times.push(t);
        self.plus.push(p);
        self.minus.push(m);
    }

    pub fn finish(self) -> Result<ObservationTrace> {
        let dt = if self.times.len() >= 2 { self.times[1] - self.times[0] } else { 0.0 };
        Ok(ObservationTrace {
            plus: time_derivative(&self.plus, dt)?,
            minus: time_derivative(&self.minus, dt)?,
            times: self.times,
            nodes: self.obs.trace_nodes().to_vec(),
        })
    }
}

/// `∂ν ∂t u±` on the trace nodes of `obs` at every time node.
pub fn observe(grid: &SpatialGrid, traj: &TwoStateTrajectory, obs: &ObservationBoundary) -> Result<ObservationTrace> {
    if traj.len() < 3 {
        return Err(Error::TooFewTimeNodes { needed: 3, got: traj.len() });
    }
    let mut rec = TraceRecorder::new(obs);
    for (t, u) in traj.times().iter().zip(traj.snapshots()) {
        if u.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                got: u.len(),
            });
        }
        rec.push(grid, *t, u);
    }
    rec.finish()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    /// `w(-t) = conj(w(t))`
    EvenConjugate,
    /// `w(-t) = -conj(w(t))`
    OddConjugate,
}

/// Extends a trajectory on `[0, T]` to `[-T, T]`.
pub fn extend_time_symmetric(traj: &TwoStateTrajectory, parity: Parity) -> Result<TwoStateTrajectory> {
    if traj.is_empty() || traj.times()[0].abs() > 1e-12 {
        return Err(Error::InvalidParameter("trajectory must start at t = 0".into()));
    }
    let first = &traj.snapshots()[0];
    if parity == Parity::OddConjugate {
        let re = first.uplus.iter().chain(&first.uminus).fold(0.0, |m: f64, v| m.max(v.re.abs()));
        if re > 1e-10 * (1.0 + first.max_abs()) {
            return Err(Error::NotImaginaryAtZero(re));
        }
    }
    let sign = if parity == Parity::OddConjugate { -1.0 } else { 1.0 };
    let n = traj.len();
    let mut times = Vec::with_capacity(2 * n - 1);
    let mut snaps = Vec::with_capacity(2 * n - 1);
    for k in (1..n).rev() {
        times.push(-traj.times()[k]);
        snaps.push(traj.snapshots()[k].map(|v| v.conj() * sign));
    }
    times.extend_from_slice(traj.times());
    snaps.extend(traj.snapshots().iter().cloned());
    TwoStateTrajectory::new(times, snaps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{make_divergence_free, sample_admissible_perturbation, VectorPotential};
    use crate::geometry::{build_grid, Domain};
    use std::f64::consts::PI;

    fn line(n: usize, t: f64) -> SpatialGrid {
        build_grid(&Domain::interval(0.0, 1.0, t).unwrap(), &[n]).unwrap()
    }

    fn square(n: usize) -> SpatialGrid {
        build_grid(&Domain::rectangle([0.0, 1.0], [0.0, 1.0], 0.1).unwrap(), &[n, n]).unwrap()
    }

    fn coeffs(grid: &SpatialGrid) -> CoefficientSet {
        let mut c = CoefficientSet::zero(grid, 3.0);
        if grid.dim() == 1 {
            c.a = vec![vec![0.4; grid.len()]];
        } else {
            let psi = |x: &[f64]| 0.3 * (PI * x[0]).sin() * (2.0 * x[1]).cos();
            c.a = make_divergence_free(grid, VectorPotential::Stream(&psi)).unwrap();
        }
        c.p = grid.sample(|x| 0.5 + 0.3 * x[0]);
        c.qplus = grid.sample(|x| 1.0 + (3.0 * x[0]).sin());
        c.qminus = grid.sample(|x| -0.5 * x[0]);
        c
    }

    #[test]
    fn laplacian_ground_state() {
        let g = line(81, 1.0);
        let h = assemble_hamiltonian(&g, &CoefficientSet::zero(&g, 1.0)).unwrap();
        // inverse iteration through i H
        let lu = BandedLu::factor_shifted(h.interior_matrix(), 0.0, 1.0).unwrap();
        let mut x = vec![Complex64::new(1.0, 0.0); h.interior_matrix().rows()];
        let mut lambda = 0.0;
        for _ in 0..60 {
            let mut y = x.clone();
            lu.solve_in_place(&mut y);
            let y: Vec<Complex64> = y.iter().map(|v| v * I).collect();
            let ny = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            let nx = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            lambda = nx / ny;
            x = y.iter().map(|v| v / ny).collect();
        }
        assert!((lambda - PI * PI).abs() < 2.0 * PI.powi(4) / 12.0 / 80.0f64.powi(2));
    }

    #[test]
    fn hermitian_for_divergence_free() {
        for g in [line(30, 1.0), square(14)] {
            let h = assemble_hamiltonian(&g, &coeffs(&g)).unwrap();
            assert!(expect_hermitian(&h));
            assert!(h.hermitian_defect() <= 1e-12, "{}", h.hermitian_defect());
        }
    }

    #[test]
    fn non_divergence_free_breaks_symmetry() {
        let g = square(12);
        let mut c = coeffs(&g);
        c.a[0] = g.sample(|x| x[0]);
        let h = assemble_hamiltonian(&g, &c).unwrap();
        assert!(!expect_hermitian(&h));
        assert!(h.hermitian_defect() > 1e-3);
    }

    #[test]
    fn p_coupling_block() {
        let g = line(11, 1.0);
        let mut c = CoefficientSet::zero(&g, 1.0);
        c.p = g.sample(|x| 0.2 + x[0]);
        let lower = assemble(&g, &c, false).unwrap();
        let u = TwoStateField::from_fn(&g, |x| (Complex64::new(x[0].sin(), 0.3), Complex64::default()));
        let hu = lower.apply(&u);
        for &n in g.interior() {
            assert!((hu.uminus[n] - c.p[n] * u.uplus[n]).norm() < 1e-15);
            assert_eq!(hu.uplus[n], Complex64::default());
        }
    }

    #[test]
    fn relative_bound_cases() {
        let g = line(25, 1.0);
        let zero = CoefficientSet::zero(&g, 1.0);
        let r = check_relative_bound(&g, &zero, 0.5, 20, 1).unwrap();
        assert_eq!(r.c_eps, 0.0);
        assert_eq!(r.max_lower_order_ratio, 0.0);
        assert!(r.passed);
        let r = check_relative_bound(&g, &coeffs(&g), 0.5, 200, 2).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(check_relative_bound(&g, &zero, 1.0, 1, 1).is_err());
    }

    #[test]
    fn compatibility_orders() {
        let g = line(21, 1.0);
        let u0 = TwoStateField::from_fn(&g, |x| (Complex64::new(1.0 + x[0], 0.0), Complex64::new(x[0] * x[0], 0.0)));
        let zero = compatibility_boundary_data(&g, &u0, &coeffs(&g), 0).unwrap();
        assert_eq!(zero.eval_interleaved(0.7), zero.eval_interleaved(0.0));
        assert_eq!(compatibility_defect(&u0, &zero), 0.0);

        let c = TwoStateField::from_fn(&g, |_| (Complex64::new(2.0, 0.0), Complex64::new(-1.0, 0.0)));
        let gd = compatibility_boundary_data(&g, &c, &CoefficientSet::zero(&g, 1.0), 3).unwrap();
        // stencil rows sum to zero only up to rounding, amplified by h^-2 per power
        let drift = gd
            .eval_interleaved(0.9)
            .iter()
            .zip(gd.eval_interleaved(0.0))
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(drift < 1e-15 * 20f64.powi(6) * 10.0, "{drift}");

        let mut base = CoefficientSet::zero(&g, 1.0);
        base.p = vec![0.7; g.len()];
        let u = TwoStateField::from_fn(&g, |_| (Complex64::default(), Complex64::new(1.5, 0.0)));
        let gd = compatibility_boundary_data(&g, &u, &base, 2).unwrap();
        let d1 = gd.derivative_at_zero(1).unwrap();
        for k in 0..gd.nodes().len() {
            assert!((d1[2 * k] - (-I * 0.7 * 1.5)).norm() < 1e-14);
        }
    }

    #[test]
    fn eigenmode() {
        let g = line(101, 0.1);
        let u0 = TwoStateField::from_fn(&g, |x| (Complex64::new((PI * x[0]).sin(), 0.0), Complex64::default()));
        let traj = solve_ibvp(&g, &CoefficientSet::zero(&g, 1.0), &u0, &BoundaryData::zero(&g), None, 1e-3).unwrap();
        let t = 0.1;
        let exact = Complex64::from_polar(1.0, -PI * PI * t);
        let err = g
            .interior()
            .iter()
            .map(|&n| (traj.last().uplus[n] - exact * (PI * g.point(n)[0]).sin()).norm())
            .fold(0.0, f64::max);
        assert!(err < 5e-4, "{err}");
        assert!(traj.norm_drift(&g) < 1e-8);
    }

    #[test]
    fn conservation_2d() {
        let g = square(13);
        let c = sample_admissible_perturbation(&g, &coeffs(&g), 0.1, 3).unwrap();
        let u0 = TwoStateField::from_fn(&g, |x| {
            let b = (PI * x[0]).sin() * (PI * x[1]).sin();
            (Complex64::new(b, 0.0), Complex64::new(0.0, b * x[0]))
        });
        let traj = solve_ibvp(&g, &c, &u0, &BoundaryData::zero(&g), None, 0.01).unwrap();
        assert_eq!(traj.len(), 11);
        assert!(traj.norm_drift(&g) < 1e-8);
    }

    #[test]
    fn incompatible_data_rejected() {
        let g = line(11, 0.1);
        let u0 = TwoStateField::from_fn(&g, |_| (Complex64::new(1.0, 0.0), Complex64::default()));
        let r = solve_ibvp(&g, &CoefficientSet::zero(&g, 1.0), &u0, &BoundaryData::zero(&g), None, 0.01);
        assert!(matches!(r, Err(Error::Incompatible(_))));
        let r = solve_ibvp(&g, &CoefficientSet::zero(&g, 1.0), &TwoStateField::zeros(g.len()), &BoundaryData::zero(&g), None, 0.03);
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn observe_zero_and_short() {
        let g = line(11, 0.1);
        let obs = crate::geometry::select_observation_boundary(&g, &[-1.0]).unwrap();
        let z = TwoStateTrajectory::new(vec![0.0, 0.1, 0.2], vec![TwoStateField::zeros(g.len()); 3]).unwrap();
        let tr = observe(&g, &z, &obs).unwrap();
        assert_eq!(tr.max_abs(), 0.0);
        let short = TwoStateTrajectory::new(vec![0.0, 0.1], vec![TwoStateField::zeros(g.len()); 2]).unwrap();
        assert!(matches!(observe(&g, &short, &obs), Err(Error::TooFewTimeNodes { .. })));
    }

    #[test]
    fn time_extension() {
        let g = line(5, 1.0);
        let c = TwoStateField::from_fn(&g, |x| (Complex64::new(x[0], 0.0), Complex64::new(1.0, 0.0)));
        let traj = TwoStateTrajectory::new(vec![0.0, 0.5, 1.0], vec![c.clone(); 3]).unwrap();
        let ext = extend_time_symmetric(&traj, Parity::EvenConjugate).unwrap();
        assert_eq!(ext.times(), &[-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(ext.snapshots().iter().all(|s| *s == c));
        assert!(matches!(extend_time_symmetric(&traj, Parity::OddConjugate), Err(Error::NotImaginaryAtZero(_))));
        let ic = c.map(|v| v * I);
        let traj = TwoStateTrajectory::new(vec![0.0, 0.5, 1.0], vec![ic.clone(); 3]).unwrap();
        let ext = extend_time_symmetric(&traj, Parity::OddConjugate).unwrap();
        assert!(ext.snapshots().iter().all(|s| *s == ic));
    }
}
