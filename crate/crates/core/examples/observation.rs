//! Neumann traces of the time derivative on the observed boundary, the
//! trace difference between two coefficient sets, and the time-symmetric
//! extensions used by the stability argument.

use num_complex::Complex64;
use twostate::coefficients::{AdmissiblePerturbation, CoefficientSet, PerturbationMask};
use twostate::forward::*;
use twostate::geometry::{build_grid, select_observation_boundary, Domain};

fn main() {
    let g = build_grid(&Domain::interval(0.0, 1.0, 0.2).unwrap(), &[51]).unwrap();
    let mut base = CoefficientSet::zero(&g, 2.0);
    base.p = vec![0.5; g.len()];
    base.qplus = vec![0.3; g.len()];
    let other = AdmissiblePerturbation::sample(&g, &base, 0.1, 3, PerturbationMask::ALL).unwrap().perturbed();
    let u0 = TwoStateField::from_fn(&g, |x| (Complex64::new(x[0], 0.0), Complex64::new(1.0, 0.0)));
    let gd = compatibility_boundary_data(&g, &u0, &base, 3).unwrap();
    let obs = select_observation_boundary(&g, &[-0.5]).unwrap();

    let t1 = solve_ibvp(&g, &base, &u0, &gd, None, 0.002).unwrap();
    let t2 = solve_ibvp(&g, &other, &u0, &gd, None, 0.002).unwrap();
    let (o1, o2) = (observe(&g, &t1, &obs).unwrap(), observe(&g, &t2, &obs).unwrap());
    println!("observed {} node(s), {} times", o1.nodes.len(), o1.times.len());
    let (dp, dm) = o1.sub(&o2).l2_norm_sq(&g);
    println!("squared trace differences: plus {dp:.4e}, minus {dm:.4e}");
    println!("same coefficients twice: {:?}", o1.sub(&observe(&g, &t1, &obs).unwrap()).max_abs());

    let even = extend_time_symmetric(&t1, Parity::EvenConjugate).unwrap();
    let k = even.len() / 2;
    println!(
        "even-conjugate extension: {} times from {} to {}; u+(x=0.5) at ±t: {:.5} / {:.5}",
        even.len(),
        even.times()[0],
        even.times()[even.len() - 1],
        even.snapshots()[k - 10].uplus[25],
        even.snapshots()[k + 10].uplus[25]
    );
    // an odd-conjugate extension needs a purely imaginary t = 0 slice
    println!("odd extension of u: {}", extend_time_symmetric(&t1, Parity::OddConjugate).unwrap_err());
}
