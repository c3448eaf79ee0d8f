//! Boundary data compatible with an initial state up to a chosen order:
//! the t = 0 derivatives reproduce (-i)^l H^l u0 on the boundary.

use num_complex::Complex64;
use twostate::coefficients::CoefficientSet;
use twostate::forward::{assemble_hamiltonian, compatibility_boundary_data, compatibility_defect, TwoStateField};
use twostate::geometry::{build_grid, Domain};

fn main() {
    let g = build_grid(&Domain::interval(0.0, 1.0, 0.5).unwrap(), &[21]).unwrap();
    let mut c = CoefficientSet::zero(&g, 2.0);
    c.p = vec![0.8; g.len()];
    c.qminus = g.sample(|x| 0.5 * x[0]);
    let u0 = TwoStateField::from_fn(&g, |_| (Complex64::default(), Complex64::new(1.0, 0.0)));
    let gd = compatibility_boundary_data(&g, &u0, &c, 2).unwrap();
    println!("defect at t = 0: {:.1e}", compatibility_defect(&u0, &gd));

    let h = assemble_hamiltonian(&g, &c).unwrap();
    let mut hu = u0.clone();
    for l in 0..=2 {
        let d = gd.derivative_at_zero(l).unwrap();
        let want = Complex64::new(0.0, -1.0).powi(l as i32);
        for (j, &node) in gd.nodes().iter().enumerate() {
            println!(
                "l = {l}, node {node:2}: g+ {:>+.6}, expected {:>+.6}",
                d[2 * j],
                want * hu.uplus[node]
            );
        }
        hu = h.apply_formal(&hu);
    }
    let (plus, _) = gd.eval(0.1);
    println!("g+(x=0, t=0.1) = {:.6}  (-i p t = {:.6})", plus[0], Complex64::new(0.0, -0.08));
}
