//! Free evolution of the first Dirichlet eigenmode, compared with the exact
//! phase rotation, and norm conservation under coupling.

use std::f64::consts::PI;

use num_complex::Complex64;
use twostate::coefficients::{AdmissiblePerturbation, CoefficientSet, PerturbationMask};
use twostate::forward::{solve_ibvp, BoundaryData, TwoStateField};
use twostate::geometry::{build_grid, Domain};

fn main() {
    let t = 0.5;
    let g = build_grid(&Domain::interval(0.0, 1.0, t).unwrap(), &[101]).unwrap();
    let mut u0 = TwoStateField::from_fn(&g, |x| (Complex64::new((PI * x[0]).sin(), 0.0), Complex64::default()));
    for b in g.boundary() {
        u0.uplus[b.node] = Complex64::default();
    }
    let zero = CoefficientSet::zero(&g, 2.0);
    let traj = solve_ibvp(&g, &zero, &u0, &BoundaryData::zero(&g), None, t / 200.0).unwrap();
    let exact = u0.map(|v| v * Complex64::from_polar(1.0, -PI * PI * t));
    println!("eigenmode L2 error at T: {:.3e}", traj.last().sub(&exact).norm(&g));
    println!("norm drift: {:.3e}", traj.norm_drift(&g));

    // coupled coefficients still conserve the norm with zero boundary data
    let mut base = CoefficientSet::zero(&g, 2.0);
    base.a = vec![vec![0.5; g.len()]];
    base.p = vec![0.7; g.len()];
    let c = AdmissiblePerturbation::sample(&g, &base, 0.3, 5, PerturbationMask::ALL).unwrap().perturbed();
    let traj = solve_ibvp(&g, &c, &u0, &BoundaryData::zero(&g), None, t / 200.0).unwrap();
    let minus_mass: f64 = traj.last().uminus.iter().zip(g.quadrature_weights()).map(|(v, w)| w * v.norm_sqr()).sum();
    println!("coupled: norm drift {:.3e}, mass moved to u- {:.4}", traj.norm_drift(&g), minus_mass);
}
