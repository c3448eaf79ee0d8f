//! Weights of the Carleman estimate: assumptions on the convex weight,
//! symmetry in time, and the conjugated operator M1 + M2 checked against
//! e^{-sη} L w under refinement.

use twostate::carleman::*;
use twostate::geometry::{build_grid, select_observation_boundary, Domain, TimeGrid};

fn residual(n: usize, s: f64, cfg: &WeightConfig) -> f64 {
    let g = build_grid(&Domain::interval(0.0, 1.0, 1.0).unwrap(), &[n]).unwrap();
    let time = TimeGrid::symmetric_cell_centered(1.0, n).unwrap();
    let w = build_weights(&g, cfg, &time).unwrap();
    let (z, lz) = smooth_test_family(&g, 1, 5)[0].sample(&g, &time);
    let f: SpaceTimeField = (0..time.len()).map(|t| (0..g.len()).map(|k| z[t][k] * w.scaled_weight(s, t, k)).collect()).collect();
    let (m1, m2) = (apply_m1(&g, &w, s, &f).unwrap(), apply_m2(&g, &w, s, &f).unwrap());
    let mut acc = 0.0;
    for t in 1..time.len() - 1 {
        for &k in g.interior() {
            let r = m1[t][k] + m2[t][k] - lz[t][k] * w.scaled_weight(s, t, k);
            acc += time.weights()[t] * g.quadrature_weights()[k] * r.norm_sqr();
        }
    }
    acc.sqrt()
}

fn main() {
    let sq = build_grid(&Domain::rectangle([0.0, 1.0], [0.0, 1.0], 1.0).unwrap(), &[21, 21]).unwrap();
    let cfg2 = WeightConfig {
        x0: vec![-1.0, 0.5],
        r: 1.5,
        lambda: 1.0,
        t_final: 1.0,
    };
    let obs = select_observation_boundary(&sq, &cfg2.x0).unwrap();
    let a = verify_assumption1(&sq, &cfg2, &obs, 10_000, 1).unwrap();
    println!("min |grad beta| {:.3} (bound {:.3}), convexity margin {:.6}, passed {}", a.min_gradient, a.gradient_bound, a.convexity_margin, a.passed());

    let cfg = WeightConfig {
        x0: vec![-0.5],
        r: 1.1,
        lambda: 0.1,
        t_final: 1.0,
    };
    let g = build_grid(&Domain::interval(0.0, 1.0, 1.0).unwrap(), &[21]).unwrap();
    let time = TimeGrid::symmetric_cell_centered(1.0, 21).unwrap();
    let w = build_weights(&g, &cfg, &time).unwrap();
    let last = time.len() - 1;
    println!("eta(x=0.5) at t = ±{:.3}: {:.6} {:.6}", time.times()[last], w.eta[0][10], w.eta[last][10]);

    let mut prev = None;
    for n in [41, 81, 161] {
        let r = residual(n, 2.0, &cfg);
        let order = prev.map(|p: f64| format!("order {:.3}", (p / r).log2())).unwrap_or_default();
        println!("n = {n:3}: conjugation residual {r:.3e} {order}");
        prev = Some(r);
    }
}
