//! Recover coefficient differences pointwise from ∂t(u1 - u2) at t = 0 for
//! the probe suite, in one and two dimensions.

use std::f64::consts::PI;

use twostate::coefficients::*;
use twostate::geometry::{build_grid, Domain, SpatialGrid};
use twostate::inverse::*;

fn run(g: &SpatialGrid, base: &CoefficientSet, seed: u64) {
    let t = g.domain().t_final;
    let probes = build_probes(g, base, 1.0, 3).unwrap();
    let pert = AdmissiblePerturbation::sample(g, base, 0.1, seed, PerturbationMask::ALL).unwrap();
    let snaps = snapshots(g, &pert.perturbed(), base, &probes, t / 400.0).unwrap();
    let r = linearized_reconstruct(g, &snaps, &probes, Some(&pert.delta)).unwrap();
    let names: Vec<String> = (1..=g.dim()).map(|k| format!("A{k}")).chain(["p", "q+", "q-"].map(String::from)).collect();
    for (n, e) in names.iter().zip(r.errors.as_ref().unwrap()) {
        println!("  {n:>3}: relative error {e:.3e}");
    }
    println!("  p cross-check {:.2e}, A cross-check {:?}, imaginary residual {:.2e}", r.p_cross, r.a_cross, r.imag_residual);
}

fn main() {
    let line = build_grid(&Domain::interval(0.0, 1.0, 0.05).unwrap(), &[201]).unwrap();
    let mut base = CoefficientSet::zero(&line, 2.0);
    base.a = vec![vec![0.3; line.len()]];
    base.p = line.sample(|x| 0.5 + 0.2 * x[0]);
    base.qplus = vec![0.4; line.len()];
    println!("1D, 201 nodes:");
    run(&line, &base, 9);

    let sq = build_grid(&Domain::rectangle([0.0, 1.0], [0.0, 1.0], 0.05).unwrap(), &[41, 41]).unwrap();
    let mut base = CoefficientSet::zero(&sq, 2.0);
    let psi = |x: &[f64]| 0.05 * (PI * x[0]).sin() * (PI * x[1]).cos();
    base.a = make_divergence_free(&sq, VectorPotential::Stream(&psi)).unwrap();
    base.qminus = sq.sample(|x| 0.2 * x[1]);
    println!("2D, 41x41 nodes:");
    run(&sq, &base, 4);
}
