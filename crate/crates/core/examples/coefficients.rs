//! Divergence-free vector potentials from a stream function, admissibility
//! checks and seeded perturbations that vanish to fourth order on the
//! boundary.

use std::f64::consts::PI;

use twostate::coefficients::*;
use twostate::geometry::{build_grid, Domain};

fn main() {
    let g = build_grid(&Domain::rectangle([0.0, 1.0], [0.0, 1.0], 1.0).unwrap(), &[31, 31]).unwrap();
    let psi = |x: &[f64]| 0.1 * (PI * x[0]).sin() * (2.0 * PI * x[1]).cos();
    let mut baseline = CoefficientSet::zero(&g, 2.0);
    baseline.a = make_divergence_free(&g, VectorPotential::Stream(&psi)).unwrap();
    baseline.p = g.sample(|x| 0.5 + 0.2 * x[0]);
    baseline.qplus = vec![0.4; g.len()];
    let div = discrete_divergence(&g, &baseline.a);
    println!("max |div A| = {:.2e}", div.iter().fold(0.0f64, |m, v| m.max(v.abs())));

    let pert = AdmissiblePerturbation::sample(&g, &baseline, 0.2, 42, PerturbationMask::ALL).unwrap();
    let rep = check_admissible(&g, &pert.perturbed(), &baseline).unwrap();
    println!("sup norms A, p, q+, q-: {:?}", rep.sup_norms);
    println!("divergence residual {:.2e}, trace residual {:.2e} (tol {:.2e})", rep.divergence_residual, rep.trace_value_residual, rep.trace_tolerance);
    println!("admissible: {}", rep.passed());

    // a plain bump without the cutoff fails the boundary agreement
    let mut bad = baseline.clone();
    bad.p.iter_mut().for_each(|v| *v += 0.1);
    println!("shifted p admissible: {}", check_admissible(&g, &bad, &baseline).unwrap().passed());

    // 1D has no non-constant divergence-free fields
    let line = build_grid(&Domain::interval(0.0, 1.0, 1.0).unwrap(), &[11]).unwrap();
    println!("1D stream: {}", make_divergence_free(&line, VectorPotential::Stream(&|x: &[f64]| x[0])).unwrap_err());

    let mut buf = Vec::new();
    write_columns(&g, &pert.delta, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    println!("column file header: {}", text.lines().next().unwrap());
}
