//! Both sides of the Lipschitz stability inequality for seeded coefficient
//! pairs: coefficient differences against boundary trace differences of
//! the probe solutions.

use twostate::coefficients::{CoefficientSet, PerturbationMask};
use twostate::geometry::{build_grid, select_observation_boundary, Domain};
use twostate::inverse::*;

fn main() {
    let t = 0.5;
    let g = build_grid(&Domain::interval(0.0, 1.0, t).unwrap(), &[101]).unwrap();
    let mut base = CoefficientSet::zero(&g, 2.0);
    base.a = vec![vec![0.3; g.len()]];
    base.p = g.sample(|x| 0.5 + 0.2 * x[0]);
    base.qplus = vec![0.4; g.len()];
    let probes = build_probes(&g, &base, 1.0, 3).unwrap();
    println!("{} probes, min singular values of the gradient matrices {:?}", probes.len(), probes.min_singular_values(&g));

    let obs = select_observation_boundary(&g, &[-0.5]).unwrap();
    let amps = [0.2, 0.1, 0.05];
    let seeds: Vec<u64> = (0..5).collect();
    let spec = StudySpec {
        amplitudes: &amps,
        seeds: &seeds,
        mask: PerturbationMask::ALL,
        dt: t / 200.0,
        weighted: None,
    };
    let rows = stability_scaling_study(&g, &base, &probes, &obs, &spec).unwrap();
    println!("{:>4} {:>9} {:>12} {:>12} {:>10}", "seed", "amplitude", "lhs", "rhs_raw", "ratio");
    for r in &rows {
        println!("{:>4} {:>9} {:>12.4e} {:>12.4e} {:>10.4e}", r.seed.unwrap(), r.amplitude, r.lhs, r.rhs_raw, r.ratio.unwrap());
    }
    let same = run_pair_experiment(&g, &base, &base, &probes, t / 200.0, &obs).unwrap();
    println!("identical pair: lhs {}, rhs {}, ratio {:?}", same.lhs, same.rhs_raw, same.ratio);
}
