//! Assemble the coupled Hamiltonian, check that it is Hermitian exactly
//! when A is divergence-free, and evaluate the relative bound of the
//! lower-order part against the Laplacian.

use std::f64::consts::PI;

use twostate::coefficients::*;
use twostate::forward::{assemble_hamiltonian, check_relative_bound, expect_hermitian, relative_bound_constant};
use twostate::geometry::{build_grid, Domain};

fn main() {
    let g = build_grid(&Domain::rectangle([0.0, 1.0], [0.0, 1.0], 1.0).unwrap(), &[21, 21]).unwrap();
    let mut c = CoefficientSet::zero(&g, 3.0);
    let psi = |x: &[f64]| 0.2 * (PI * x[0]).sin() * (PI * x[1]).sin();
    c.a = make_divergence_free(&g, VectorPotential::Stream(&psi)).unwrap();
    c.p = g.sample(|x| 0.3 * x[1]);
    c.qplus = vec![1.0; g.len()];
    c.qminus = g.sample(|x| x[0] - 0.5);

    let h = assemble_hamiltonian(&g, &c).unwrap();
    println!("divergence-free A: defect {:.2e}, expected Hermitian {}", h.hermitian_defect(), expect_hermitian(&h));

    let mut bad = c.clone();
    bad.a[0] = g.sample(|x| x[0]);
    let hb = assemble_hamiltonian(&g, &bad).unwrap();
    println!("A = (x, ·):        defect {:.2e}, expected Hermitian {}", hb.hermitian_defect(), expect_hermitian(&hb));

    for eps in [0.5, 0.1] {
        let r = check_relative_bound(&g, &c, eps, 200, 1).unwrap();
        println!(
            "eps = {eps}: C_eps = {:.3}, max violation {:.3e}, passed {}",
            relative_bound_constant(&c, eps),
            r.max_violation,
            r.passed
        );
    }
}
