//! Carleman weights `β`, `φ`, `η`, the conjugated operators `M1`, `M2` and
//! an empirical check of the weighted energy estimate.
//!
//! Weighted integrals are evaluated with `e^{-s(η - η_min)}` instead of
//! `e^{-sη}`: for realistic `λ`, `K` the raw weight underflows. Both sides of
//! the estimate carry the same factor `e^{2sη_min}`, which is reported as a
//! log offset.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ObservationBoundary, SpatialGrid, TimeGrid};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    pub x0: Vec<f64>,
    pub r: f64,
    pub lambda: f64,
    pub t_final: f64,
}

impl WeightConfig {
    pub fn validate(&self, grid: &SpatialGrid) -> Result<()> {
        if !(self.r > 1.0) {
            return Err(Error::InvalidParameter(format!("r must exceed 1, got {}", self.r)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::InvalidParameter(format!("T must be positive, got {}", self.t_final)));
        }
        if self.x0.len() != grid.dim() {
            return Err(Error::ShapeMismatch {
                expected: grid.dim(),
                got: self.x0.len(),
            });
        }
        if grid.domain().contains_closed(&self.x0) {
            return Err(Error::PointInsideDomain(self.x0.clone()));
        }
        Ok(())
    }
}

/// Weights on the grid nodes and a time grid strictly inside `(-T, T)`.
/// Space-time arrays are indexed `[time][node]`.
#[derive(Clone, Debug)]
pub struct CarlemanWeights {
    pub cfg: WeightConfig,
    pub time: TimeGrid,
    pub beta_tilde: Vec<f64>,
    pub beta: Vec<f64>,
    /// `sup β`.
    pub k: f64,
    pub phi: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    /// `∂t η`.
    pub eta_t: Vec<Vec<f64>>,
    /// `∇η[t][node][axis]`.
    pub grad_eta: Vec<Vec<[f64; 2]>>,
    pub lap_eta: Vec<Vec<f64>>,
    /// `min η` over all space-time nodes.
    pub eta_min: f64,
}

pub fn build_weights(grid: &SpatialGrid, cfg: &WeightConfig, time: &TimeGrid) -> Result<CarlemanWeights> {
    cfg.validate(grid)?;
    let t_final = cfg.t_final;
    if let Some(&t) = time.times().iter().find(|t| t.abs() >= t_final) {
        return Err(Error::SingularTimeNode(t));
    }
    let dim = grid.dim();
    let lambda = cfg.lambda;
    let beta_tilde: Vec<f64> = grid
        .points()
        .map(|x| (0..dim).map(|k| (x[k] - cfg.x0[k]).powi(2)).sum())
        .collect();
    let sup_bt = beta_tilde.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let beta: Vec<f64> = beta_tilde.iter().map(|b| b + cfg.r * sup_bt).collect();
    let k = beta.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let e2k = (2.0 * lambda * k).exp();
    let elb: Vec<f64> = beta.iter().map(|b| (lambda * b).exp()).collect();

    let nt = time.len();
    let mut phi = Vec::with_capacity(nt);
    let mut eta = Vec::with_capacity(nt);
    let mut eta_t = Vec::with_capacity(nt);
    let mut grad_eta = Vec::with_capacity(nt);
    let mut lap_eta = Vec::with_capacity(nt);
    for &t in time.times() {
        let d = (t_final + t) * (t_final - t);
        phi.push(elb.iter().map(|e| e * e / d).collect::<Vec<_>>());
        eta.push(elb.iter().map(|e| (e2k - e) / d).collect::<Vec<_>>());
        eta_t.push(elb.iter().map(|e| (e2k - e) * 2.0 * t / (d * d)).collect::<Vec<_>>());
        let mut g = Vec::with_capacity(grid.len());
        let mut l = Vec::with_capacity(grid.len());
        for (n, x) in grid.points().enumerate() {
            let mut gv = [0.0; 2];
            let mut grad_bt_sq = 0.0;
            for kk in 0..dim {
                let dbt = 2.0 * (x[kk] - cfg.x0[kk]);
                gv[kk] = -lambda * elb[n] * dbt / d;
                grad_bt_sq += dbt * dbt;
            }
            g.push(gv);
            // Δβ̃ = 2n
            l.push(-(lambda * lambda * elb[n] * grad_bt_sq + lambda * elb[n] * 2.0 * dim as f64) / d);
        }
        grad_eta.push(g);
        lap_eta.push(l);
    }
    let eta_min = eta.iter().flatten().fold(f64::INFINITY, |m, &v| m.min(v));
    Ok(CarlemanWeights {
        cfg: cfg.clone(),
        time: time.clone(),
        beta_tilde,
        beta,
        k,
        phi,
        eta,
        eta_t,
        grad_eta,
        lap_eta,
        eta_min,
    })
}

impl CarlemanWeights {
    /// `∂ν β = 2 (x - x0)·ν` at a boundary node with normal `normal`.
    pub fn normal_flux(&self, grid: &SpatialGrid, node: usize, normal: &[f64]) -> f64 {
        let x = grid.point(node);
        (0..grid.dim()).map(|k| 2.0 * (x[k] - self.cfg.x0[k]) * normal[k]).sum()
    }

    /// `e^{-s(η - η_min)}` at one space-time node.
    pub fn scaled_weight(&self, s: f64, t: usize, node: usize) -> f64 {
        (-s * (self.eta[t][node] - self.eta_min)).exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assumption1Report {
    /// `min |∇β̃|` over the nodes.
    pub min_gradient: f64,
    /// `2 dist(x0, Ω̄)`.
    pub gradient_bound: f64,
    pub gradient_ok: bool,
    /// Largest `∂ν β̃` over boundary nodes outside Γ* (must be negative).
    pub max_flux_outside: f64,
    pub flux_ok: bool,
    /// `min λ|∇β̃·ζ|² + D²β̃(ζ, ζ)` over nodes and sampled unit `ζ`.
    pub convexity_margin: f64,
    pub samples: usize,
}

impl Assumption1Report {
    pub fn passed(&self) -> bool {
        self.gradient_ok && self.flux_ok && self.convexity_margin > 0.0
    }
}

pub fn verify_assumption1(grid: &SpatialGrid, cfg: &WeightConfig, gammastar: &ObservationBoundary, samples: usize, seed: u64) -> Result<Assumption1Report> {
    cfg.validate(grid)?;
    let dim = grid.dim();
    let grads: Vec<[f64; 2]> = grid
        .points()
        .map(|x| {
            let mut g = [0.0; 2];
            for k in 0..dim {
                g[k] = 2.0 * (x[k] - cfg.x0[k]);
            }
            g
        })
        .collect();
    let min_gradient = grads.iter().map(|g| (g[0] * g[0] + g[1] * g[1]).sqrt()).fold(f64::INFINITY, f64::min);
    let gradient_bound = 2.0 * grid.domain().distance_to_closure(&cfg.x0);

    let mut max_flux_outside = f64::NEG_INFINITY;
    for b in grid.boundary() {
        if gammastar.contains(b.node) {
            continue;
        }
        let g = grads[b.node];
        let flux: f64 = (0..dim).map(|k| g[k] * b.normal[k]).sum();
        max_flux_outside = max_flux_outside.max(flux);
    }
    let flux_ok = max_flux_outside < 0.0 || max_flux_outside == f64::NEG_INFINITY;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut margin = f64::INFINITY;
    for _ in 0..samples {
        let zeta: [f64; 2] = if dim == 1 {
            [if rng.gen_bool(0.5) { 1.0 } else { -1.0 }, 0.0]
        } else {
            let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            [a.cos(), a.sin()]
        };
        for g in &grads {
            let dot = g[0] * zeta[0] + g[1] * zeta[1];
            // Hessian of |x - x0|² is 2I
            let v = cfg.lambda * dot * dot + 2.0 * (zeta[0] * zeta[0] + zeta[1] * zeta[1]);
            margin = margin.min(v);
        }
    }
    Ok(Assumption1Report {
        min_gradient,
        gradient_bound,
        gradient_ok: min_gradient >= gradient_bound * (1.0 - 1e-12) && gradient_bound > 0.0,
        max_flux_outside,
        flux_ok,
        convexity_margin: margin,
        samples,
    })
}

/// Complex scalar field on space-time nodes, `values[time][node]`.
pub type SpaceTimeField = Vec<Vec<Complex64>>;

fn check_field(grid: &SpatialGrid, w: &CarlemanWeights, f: &SpaceTimeField) -> Result<()> {
    if f.len() != w.time.len() {
        return Err(Error::ShapeMismatch {
            expected: w.time.len(),
            got: f.len(),
        });
    }
    if let Some(bad) = f.iter().find(|s| s.len() != grid.len()) {
        return Err(Error::ShapeMismatch {
            expected: grid.len(),
            got: bad.len(),
        });
    }
    Ok(())
}

/// Time derivative with centred differences inside, one-sided at the ends.
fn time_derivative(f: &SpaceTimeField, dt: f64) -> SpaceTimeField {
    let n = f.len();
    if n < 3 {
        return vec![vec![Complex64::default(); f.first().map_or(0, Vec::len)]; n];
    }
    crate::forward::time_derivative(f, dt).expect("at least three time nodes")
}

fn laplacian(grid: &SpatialGrid, f: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); grid.len()];
    for &n in grid.interior() {
        let mut acc = Complex64::default();
        for k in 0..grid.dim() {
            let h = grid.spacing()[k];
            let (l, r) = (grid.neighbor(n, k, -1).unwrap(), grid.neighbor(n, k, 1).unwrap());
            acc += (f[l] - f[n] * 2.0 + f[r]) / (h * h);
        }
        out[n] = acc;
    }
    out
}

fn centred_gradient(grid: &SpatialGrid, f: &[Complex64], n: usize, k: usize) -> Complex64 {
    let h = grid.spacing()[k];
    let (l, r) = (grid.neighbor(n, k, -1).unwrap(), grid.neighbor(n, k, 1).unwrap());
    (f[r] - f[l]) / (2.0 * h)
}

/// `M1 w = i ∂t w + Δw + s² |∇η|² w` at interior nodes (zero on Γ).
pub fn apply_m1(grid: &SpatialGrid, weights: &CarlemanWeights, s: f64, w: &SpaceTimeField) -> Result<SpaceTimeField> {
    check_field(grid, weights, w)?;
    let wt = time_derivative(w, weights.time.step());
    Ok((0..w.len())
        .map(|t| {
            let lap = laplacian(grid, &w[t]);
            let mut out = vec![Complex64::default(); grid.len()];
            for &n in grid.interior() {
                let g = weights.grad_eta[t][n];
                out[n] = I * wt[t][n] + lap[n] + w[t][n] * (s * s * (g[0] * g[0] + g[1] * g[1]));
            }
            out
        })
        .collect())
}

/// `M2 w = i s η' w + 2 s ∇η·∇w + s Δη w` at interior nodes (zero on Γ).
pub fn apply_m2(grid: &SpatialGrid, weights: &CarlemanWeights, s: f64, w: &SpaceTimeField) -> Result<SpaceTimeField> {
    check_field(grid, weights, w)?;
    Ok((0..w.len())
        .map(|t| {
            let mut out = vec![Complex64::default(); grid.len()];
            for &n in grid.interior() {
                let g = weights.grad_eta[t][n];
                let mut adv = Complex64::default();
                for k in 0..grid.dim() {
                    adv += centred_gradient(grid, &w[t], n, k) * g[k];
                }
                out[n] = I * (s * weights.eta_t[t][n]) * w[t][n] + adv * (2.0 * s) + w[t][n] * (s * weights.lap_eta[t][n]);
            }
            out
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorollaryValues {
    pub lhs: f64,
    pub rhs: f64,
    /// Both sides are scaled by `e^{2 s η_min}`; the true values are
    /// `lhs · e^{log_scale}` and `rhs · e^{log_scale}`.
    pub log_scale: f64,
}

/// Both sides of the weighted estimate
/// `s^{-1/2}(‖e^{-sη}z‖² + ‖e^{-sη}∇z‖²) + ‖e^{-sη(0)}z(0)‖²`
/// `≲ s^{-3/2}(s‖e^{-sη}φ^{1/2}(∂νβ)^{1/2}∂νz‖²_{Σ̃*} + ‖e^{-sη}Lz‖²)`.
pub fn corollary_check(
    grid: &SpatialGrid,
    weights: &CarlemanWeights,
    s: f64,
    z: &SpaceTimeField,
    lz: &SpaceTimeField,
    gammastar: &ObservationBoundary,
) -> Result<CorollaryValues> {
    check_field(grid, weights, z)?;
    check_field(grid, weights, lz)?;
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("s must be positive, got {s}")));
    }
    let zero = weights
        .time
        .zero_index()
        .ok_or_else(|| Error::InvalidParameter("time grid must contain t = 0".into()))?;
    let normals: Vec<(usize, crate::geometry::Face, f64)> = gammastar
        .trace_nodes()
        .iter()
        .map(|&(node, face)| {
            let b = &grid.boundary()[grid.boundary_position(node).unwrap()];
            (node, face, weights.normal_flux(grid, node, &b.normal))
        })
        .collect();
    if let Some(&(node, _, value)) = normals.iter().find(|n| n.2 < -1e-12) {
        return Err(Error::NegativeWeightFlux { node, value });
    }
    let qw = grid.quadrature_weights();
    let (mut mass, mut grad, mut bdry, mut source) = (0.0, 0.0, 0.0, 0.0);
    for (t, &tw) in weights.time.weights().iter().enumerate() {
        let ew: Vec<f64> = (0..grid.len()).map(|n| weights.scaled_weight(s, t, n).powi(2)).collect();
        let partials: Vec<Vec<Complex64>> = (0..grid.dim()).map(|k| grid.partial(&z[t], k)).collect();
        for n in 0..grid.len() {
            let w = tw * qw[n] * ew[n];
            mass += w * z[t][n].norm_sqr();
            grad += w * partials.iter().map(|p| p[n].norm_sqr()).sum::<f64>();
            source += w * lz[t][n].norm_sqr();
        }
        for &(node, face, flux) in &normals {
            let dz = grid.normal_derivative(&z[t], node, face);
            bdry += tw * grid.boundary_measure(face) * ew[node] * weights.phi[t][node] * flux.max(0.0) * dz.norm_sqr();
        }
    }
    let initial: f64 = (0..grid.len())
        .map(|n| qw[n] * weights.scaled_weight(s, zero, n).powi(2) * z[zero][n].norm_sqr())
        .sum();
    Ok(CorollaryValues {
        lhs: s.powf(-0.5) * (mass + grad) + initial,
        rhs: s.powf(-1.5) * (s * bdry + source),
        log_scale: -2.0 * s * weights.eta_min,
    })
}

/// Analytic test field `z(x,t) = Σ c_j e^{iω_j t} Π_k sin(m_jk π ξ_k)` with
/// `Lz = i∂t z + Δz` in closed form. Vanishes on Γ for all t.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothTestField {
    pub id: usize,
    terms: Vec<(Complex64, f64, [u32; 2])>,
}

impl SmoothTestField {
    fn eigen(grid: &SpatialGrid, m: [u32; 2], x: &[f64]) -> (f64, f64) {
        let d = grid.domain();
        let mut v = 1.0;
        let mut lam = 0.0;
        for k in 0..grid.dim() {
            let len = d.hi[k] - d.lo[k];
            let kk = m[k] as f64 * std::f64::consts::PI / len;
            v *= (kk * (x[k] - d.lo[k])).sin();
            lam += kk * kk;
        }
        (v, lam)
    }

    pub fn z(&self, grid: &SpatialGrid, x: &[f64], t: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|(c, w, m)| c * Complex64::from_polar(1.0, w * t) * Self::eigen(grid, *m, x).0)
            .sum()
    }

    /// `i ∂t z + Δz`.
    pub fn lz(&self, grid: &SpatialGrid, x: &[f64], t: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|(c, w, m)| {
                let (v, lam) = Self::eigen(grid, *m, x);
                c * Complex64::from_polar(1.0, w * t) * v * (-w - lam)
            })
            .sum()
    }

    pub fn sample(&self, grid: &SpatialGrid, time: &TimeGrid) -> (SpaceTimeField, SpaceTimeField) {
        let z = time.times().iter().map(|&t| grid.points().map(|x| self.z(grid, x, t)).collect()).collect();
        let lz = time.times().iter().map(|&t| grid.points().map(|x| self.lz(grid, x, t)).collect()).collect();
        (z, lz)
    }
}

/// Seeded family of smooth fields with homogeneous Dirichlet data.
pub fn smooth_test_family(grid: &SpatialGrid, size: usize, seed: u64) -> Vec<SmoothTestField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size)
        .map(|id| {
            let terms = (0..2)
                .map(|_| {
                    let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    let w = rng.gen_range(-3.0..3.0);
                    let m = [rng.gen_range(1..=3), if grid.dim() == 2 { rng.gen_range(1..=3) } else { 0 }];
                    (c, w, m)
                })
                .collect();
            SmoothTestField { id, terms }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanRow {
    pub s: f64,
    pub worst_ratio: f64,
    pub argmax_member_id: usize,
}

/// Worst `lhs/rhs` over the family for each `s`. Members are pairs
/// `(id, z, Lz)`.
pub fn empirical_constant_scan(
    grid: &SpatialGrid,
    weights: &CarlemanWeights,
    family: &[(usize, SpaceTimeField, SpaceTimeField)],
    s_grid: &[f64],
    gammastar: &ObservationBoundary,
) -> Result<Vec<ScanRow>> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    s_grid
        .iter()
        .map(|&s| {
            let values: Vec<Result<CorollaryValues>> = family
                .par_iter()
                .map(|(_, z, lz)| corollary_check(grid, weights, s, z, lz, gammastar))
                .collect();
            let mut row = ScanRow {
                s,
                worst_ratio: f64::NEG_INFINITY,
                argmax_member_id: family[0].0,
            };
            for ((id, _, _), v) in family.iter().zip(values) {
                let v = v?;
                if v.rhs == 0.0 {
                    if v.lhs > 0.0 {
                        return Err(Error::Counterexample { member: *id, s, lhs: v.lhs });
                    }
                    return Err(Error::EmptyFamily);
                }
                let ratio = v.lhs / v.rhs;
                if ratio > row.worst_ratio {
                    row.worst_ratio = ratio;
                    row.argmax_member_id = *id;
                }
            }
            Ok(row)
        })
        .collect()
}
