//! Empirical constant of the weighted estimate: worst lhs/rhs over a seeded
//! family of smooth fields for growing s.

use twostate::carleman::*;
use twostate::geometry::{build_grid, select_observation_boundary, Domain, TimeGrid};

fn main() {
    let g = build_grid(&Domain::interval(0.0, 1.0, 1.0).unwrap(), &[101]).unwrap();
    let cfg = WeightConfig {
        x0: vec![-0.5],
        r: 1.1,
        lambda: 0.1,
        t_final: 1.0,
    };
    let time = TimeGrid::symmetric_cell_centered(1.0, 201).unwrap();
    let w = build_weights(&g, &cfg, &time).unwrap();
    let obs = select_observation_boundary(&g, &cfg.x0).unwrap();
    let family: Vec<_> = smooth_test_family(&g, 20, 7)
        .iter()
        .map(|m| {
            let (z, lz) = m.sample(&g, &time);
            (m.id, z, lz)
        })
        .collect();
    let rows = empirical_constant_scan(&g, &w, &family, &[2.0, 4.0, 8.0, 16.0, 32.0], &obs).unwrap();
    println!("{:>5} {:>12} {:>7}", "s", "worst ratio", "member");
    for r in &rows {
        println!("{:>5} {:>12.4e} {:>7}", r.s, r.worst_ratio, r.argmax_member_id);
    }

    // both sides are quadratic in z
    let (_, z, lz) = &family[0];
    let double = |f: &SpaceTimeField| f.iter().map(|row| row.iter().map(|v| v * 2.0).collect()).collect::<SpaceTimeField>();
    let a = corollary_check(&g, &w, 8.0, z, lz, &obs).unwrap();
    let b = corollary_check(&g, &w, 8.0, &double(z), &double(lz), &obs).unwrap();
    println!("doubling z scales lhs by {:.12} and rhs by {:.12}", b.lhs / a.lhs, b.rhs / a.rhs);
}
