//! Uniform grids on an interval or a rectangle, boundary bookkeeping,
//! one-sided normal derivatives and trapezoidal quadrature.
//!
//! Nodes are numbered with the first axis running fastest. Boundary nodes
//! on a face carry the axis-aligned outward normal; the four corners of a
//! rectangle carry the normalised average of their two faces. Corner
//! normals are only used to decide membership of an observation boundary,
//! Neumann traces are never evaluated there.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinates padded to two components; the second is zero in 1D.
pub type Point = [f64; 2];

/// Scalar types a grid field can hold.
pub trait FieldValue:
    Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn abs_sq(self) -> f64;
}

impl FieldValue for f64 {
    fn abs_sq(self) -> f64 {
        self * self
    }
}

impl FieldValue for Complex64 {
    fn abs_sq(self) -> f64 {
        self.norm_sqr()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Time horizon T.
    pub t_final: f64,
}

impl Domain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, t_final: f64) -> Result<Self> {
        let d = Domain { lo, hi, t_final };
        d.validate()?;
        Ok(d)
    }

    pub fn interval(a: f64, b: f64, t_final: f64) -> Result<Self> {
        Self::new(vec![a], vec![b], t_final)
    }

    pub fn rectangle(x: [f64; 2], y: [f64; 2], t_final: f64) -> Result<Self> {
        Self::new(vec![x[0], y[0]], vec![x[1], y[1]], t_final)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.lo.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidDomain(format!("dimension {dim} not in {{1, 2}}")));
        }
        if self.hi.len() != dim {
            return Err(Error::InvalidDomain("lo and hi differ in length".into()));
        }
        for k in 0..dim {
            if !(self.lo[k].is_finite() && self.hi[k].is_finite() && self.lo[k] < self.hi[k]) {
                return Err(Error::InvalidDomain(format!(
                    "axis {k}: need lo < hi, got [{}, {}]",
                    self.lo[k], self.hi[k]
                )));
            }
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::InvalidDomain(format!("T must be positive, got {}", self.t_final)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains_closed(&self, x: &[f64]) -> bool {
        (0..self.dim()).all(|k| x[k] >= self.lo[k] && x[k] <= self.hi[k])
    }

    /// Euclidean distance from `x` to the closed box.
    pub fn distance_to_closure(&self, x: &[f64]) -> f64 {
        (0..self.dim())
            .map(|k| {
                let c = x[k].clamp(self.lo[k], self.hi[k]);
                (x[k] - c).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Coordinate normalised to [0, 1] along `axis`.
    pub fn unit_coordinate(&self, axis: usize, x: f64) -> f64 {
        (x - self.lo[axis]) / (self.hi[axis] - self.lo[axis])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Face {
    pub axis: usize,
    pub upper: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryNode {
    pub node: usize,
    pub normal: Point,
    /// `None` for rectangle corners.
    pub face: Option<Face>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Slot {
    Interior(usize),
    Boundary(usize),
}

#[derive(Clone, Debug)]
pub struct SpatialGrid {
    domain: Domain,
    shape: Vec<usize>,
    spacing: Vec<f64>,
    coords: Vec<Point>,
    interior: Vec<usize>,
    boundary: Vec<BoundaryNode>,
    slots: Vec<Slot>,
    weights: Vec<f64>,
}

pub fn build_grid(domain: &Domain, resolution: &[usize]) -> Result<SpatialGrid> {
    domain.validate()?;
    let dim = domain.dim();
    if resolution.len() != dim {
        return Err(Error::ShapeMismatch {
            expected: dim,
            got: resolution.len(),
        });
    }
    if let Some(&n) = resolution.iter().find(|&&n| n < 3) {
        return Err(Error::ResolutionTooSmall(n));
    }
    let shape = resolution.to_vec();
    let spacing: Vec<f64> = (0..dim)
        .map(|k| (domain.hi[k] - domain.lo[k]) / (shape[k] - 1) as f64)
        .collect();
    let total: usize = shape.iter().product();
    let axis_coord = |k: usize, i: usize| {
        domain.lo[k] + (domain.hi[k] - domain.lo[k]) * (i as f64) / ((shape[k] - 1) as f64)
    };

    let mut coords = Vec::with_capacity(total);
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    let mut slots = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let ny = if dim == 2 { shape[1] } else { 1 };
    for j in 0..ny {
        for i in 0..shape[0] {
            let node = i + shape[0] * j;
            let idx = [i, j];
            let mut p = [0.0; 2];
            let mut w = 1.0;
            let mut faces = Vec::with_capacity(2);
            for k in 0..dim {
                p[k] = axis_coord(k, idx[k]);
                let mut wk = spacing[k];
                if idx[k] == 0 {
                    faces.push(Face { axis: k, upper: false });
                    wk *= 0.5;
                } else if idx[k] == shape[k] - 1 {
                    faces.push(Face { axis: k, upper: true });
                    wk *= 0.5;
                }
                w *= wk;
            }
            coords.push(p);
            weights.push(w);
            match faces.len() {
                0 => {
                    slots.push(Slot::Interior(interior.len()));
                    interior.push(node);
                }
                n => {
                    let mut normal = [0.0; 2];
                    for f in &faces {
                        normal[f.axis] = if f.upper { 1.0 } else { -1.0 };
                    }
                    let norm = (n as f64).sqrt();
                    normal.iter_mut().for_each(|c| *c /= norm);
                    slots.push(Slot::Boundary(boundary.len()));
                    boundary.push(BoundaryNode {
                        node,
                        normal,
                        face: if n == 1 { Some(faces[0]) } else { None },
                    });
                }
            }
        }
    }
    Ok(SpatialGrid {
        domain: domain.clone(),
        shape,
        spacing,
        coords,
        interior,
        boundary,
        slots,
        weights,
    })
}

impl SpatialGrid {
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn point(&self, node: usize) -> &[f64] {
        &self.coords[node][..self.dim()]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len()).map(move |n| self.point(n))
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    pub fn interior_position(&self, node: usize) -> Option<usize> {
        match self.slots[node] {
            Slot::Interior(p) => Some(p),
            Slot::Boundary(_) => None,
        }
    }

    pub fn boundary_position(&self, node: usize) -> Option<usize> {
        match self.slots[node] {
            Slot::Boundary(p) => Some(p),
            Slot::Interior(_) => None,
        }
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        matches!(self.slots[node], Slot::Boundary(_))
    }

    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        [node % self.shape[0], node / self.shape[0]]
    }

    pub fn node_at(&self, idx: [usize; 2]) -> usize {
        idx[0] + self.shape[0] * idx[1]
    }

    /// Neighbour `step` nodes away along `axis`, if it exists.
    pub fn neighbor(&self, node: usize, axis: usize, step: isize) -> Option<usize> {
        let mut idx = self.multi_index(node);
        let moved = idx[axis] as isize + step;
        if moved < 0 || moved >= self.shape[axis] as isize {
            return None;
        }
        idx[axis] = moved as usize;
        Some(self.node_at(idx))
    }

    /// Tensor trapezoidal weights, one per node.
    pub fn quadrature_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Cell volume `h_1 ... h_n`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Measure attached to a face node when integrating over the boundary:
    /// 1 in 1D (point masses), the tangential spacing in 2D.
    pub fn boundary_measure(&self, face: Face) -> f64 {
        if self.dim() == 1 {
            1.0
        } else {
            self.spacing[1 - face.axis]
        }
    }

    /// Evaluates `f` at every node.
    pub fn sample<T>(&self, f: impl Fn(&[f64]) -> T) -> Vec<T> {
        self.points().map(f).collect()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.len() {
            return Err(Error::ShapeMismatch {
                expected: self.len(),
                got: n,
            });
        }
        Ok(())
    }

    /// Second-order one-sided derivative along the outward normal of `face`
    /// at boundary node `node`.
    pub fn normal_derivative<T: FieldValue>(&self, field: &[T], node: usize, face: Face) -> T {
        let inward: isize = if face.upper { -1 } else { 1 };
        let n1 = self.neighbor(node, face.axis, inward).expect("grid has >= 3 nodes per axis");
        let n2 = self.neighbor(node, face.axis, 2 * inward).expect("grid has >= 3 nodes per axis");
        let h = self.spacing[face.axis];
        (field[node] * 3.0 - field[n1] * 4.0 + field[n2]) * (0.5 / h)
    }

    /// Partial derivative along `axis` at every node: centred where both
    /// neighbours exist, one-sided second order otherwise.
    pub fn partial<T: FieldValue>(&self, field: &[T], axis: usize) -> Vec<T> {
        let h = self.spacing[axis];
        (0..self.len())
            .map(|n| match (self.neighbor(n, axis, -1), self.neighbor(n, axis, 1)) {
                (Some(a), Some(b)) => (field[b] - field[a]) * (0.5 / h),
                (None, Some(b)) => {
                    let c = self.neighbor(n, axis, 2).unwrap();
                    (field[b] * 4.0 - field[n] * 3.0 - field[c]) * (0.5 / h)
                }
                (Some(a), None) => {
                    let c = self.neighbor(n, axis, -2).unwrap();
                    (field[n] * 3.0 - field[a] * 4.0 + field[c]) * (0.5 / h)
                }
                (None, None) => unreachable!("grid has >= 3 nodes per axis"),
            })
            .collect()
    }
}

/// Boundary nodes seen from a point outside the domain.
#[derive(Clone, Debug)]
pub struct ObservationBoundary {
    x0: Vec<f64>,
    nodes: Vec<usize>,
    trace: Vec<(usize, Face)>,
}

impl ObservationBoundary {
    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    /// Selected boundary nodes, corners included.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Selected face nodes where Neumann traces are evaluated.
    pub fn trace_nodes(&self) -> &[(usize, Face)] {
        &self.trace
    }

    pub fn contains(&self, node: usize) -> bool {
        self.nodes.binary_search(&node).is_ok()
    }
}

pub fn select_observation_boundary(grid: &SpatialGrid, x0: &[f64]) -> Result<ObservationBoundary> {
    if x0.len() != grid.dim() {
        return Err(Error::ShapeMismatch {
            expected: grid.dim(),
            got: x0.len(),
        });
    }
    if grid.domain().contains_closed(x0) {
        return Err(Error::PointInsideDomain(x0.to_vec()));
    }
    let mut nodes = Vec::new();
    let mut trace = Vec::new();
    for b in grid.boundary() {
        let x = grid.point(b.node);
        let flux: f64 = (0..grid.dim()).map(|k| (x[k] - x0[k]) * b.normal[k]).sum();
        if flux >= 0.0 {
            nodes.push(b.node);
            if let Some(face) = b.face {
                trace.push((b.node, face));
            }
        }
    }
    Ok(ObservationBoundary {
        x0: x0.to_vec(),
        nodes,
        trace,
    })
}

/// `∂_ν u` at every trace node of `obs`.
pub fn neumann_trace<T: FieldValue>(
    grid: &SpatialGrid,
    field: &[T],
    obs: &ObservationBoundary,
) -> Result<Vec<T>> {
    grid.check_len(field.len())?;
    Ok(obs
        .trace_nodes()
        .iter()
        .map(|&(node, face)| grid.normal_derivative(field, node, face))
        .collect())
}

pub fn l2_norm_sq<T: FieldValue>(grid: &SpatialGrid, field: &[T]) -> f64 {
    debug_assert_eq!(field.len(), grid.len());
    field
        .iter()
        .zip(grid.quadrature_weights())
        .map(|(v, w)| w * v.abs_sq())
        .sum()
}

/// Trapezoidal approximation of the L²(Ω) norm.
pub fn l2_norm<T: FieldValue>(grid: &SpatialGrid, field: &[T]) -> f64 {
    l2_norm_sq(grid, field).sqrt()
}

/// L² norm over Ω × time, one spatial slice per time node.
pub fn space_time_l2_norm<T: FieldValue, S: AsRef<[T]>>(
    grid: &SpatialGrid,
    time: &TimeGrid,
    slices: &[S],
) -> f64 {
    debug_assert_eq!(slices.len(), time.len());
    slices
        .iter()
        .zip(time.weights())
        .map(|(s, w)| w * l2_norm_sq(grid, s.as_ref()))
        .sum::<f64>()
        .sqrt()
}

/// Time nodes with their quadrature weights.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    weights: Vec<f64>,
}

impl TimeGrid {
    /// `steps + 1` equispaced nodes on `[t0, t1]` with trapezoidal weights.
    pub fn uniform(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(t1 > t0) {
            return Err(Error::InvalidParameter(format!(
                "time grid needs t1 > t0 and at least one step (got [{t0}, {t1}], {steps})"
            )));
        }
        let dt = (t1 - t0) / steps as f64;
        let times = (0..=steps)
            .map(|k| t0 + (t1 - t0) * k as f64 / steps as f64)
            .collect();
        let mut weights = vec![dt; steps + 1];
        weights[0] *= 0.5;
        weights[steps] *= 0.5;
        Ok(TimeGrid { times, weights })
    }

    /// `2 * steps + 1` nodes `k Δt`, `k = -steps..=steps`, on `[-T, T]`.
    /// Node `k` and node `-k` are exact negatives of each other.
    pub fn symmetric_nodes(t_final: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(t_final > 0.0) {
            return Err(Error::InvalidParameter("symmetric time grid needs T > 0 and steps > 0".into()));
        }
        let dt = t_final / steps as f64;
        let s = steps as i64;
        let times = (-s..=s).map(|k| k as f64 * dt).collect();
        let mut weights = vec![dt; 2 * steps + 1];
        weights[0] *= 0.5;
        weights[2 * steps] *= 0.5;
        Ok(TimeGrid { times, weights })
    }

    /// Midpoints of `cells` equal cells of `(-T, T)`. `cells` must be odd so
    /// that `t = 0` is a node. Midpoint weights.
    pub fn symmetric_cell_centered(t_final: f64, cells: usize) -> Result<Self> {
        if cells % 2 == 0 || !(t_final > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cell-centred grid needs an odd cell count and T > 0 (got {cells})"
            )));
        }
        let dt = 2.0 * t_final / cells as f64;
        let half = (cells / 2) as i64;
        let times = (-half..=half).map(|k| k as f64 * dt).collect();
        Ok(TimeGrid {
            times,
            weights: vec![dt; cells],
        })
    }

    /// Drops the nodes with `|t| >= limit`, keeping the other weights.
    pub fn strictly_inside(&self, limit: f64) -> TimeGrid {
        let (times, weights) = self
            .times
            .iter()
            .zip(&self.weights)
            .filter(|(t, _)| t.abs() < limit)
            .map(|(&t, &w)| (t, w))
            .unzip();
        TimeGrid { times, weights }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Spacing between the first two nodes.
    pub fn step(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn zero_index(&self) -> Option<usize> {
        self.times.iter().position(|&t| t == 0.0)
    }
}
