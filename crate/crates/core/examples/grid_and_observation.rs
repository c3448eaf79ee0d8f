//! Build 1D and 2D grids, pick the observed part of the boundary for a
//! point `x0` outside the domain, and take a Neumann trace.

use twostate::geometry::{build_grid, neumann_trace, select_observation_boundary, Domain};

fn main() {
    let line = build_grid(&Domain::interval(0.0, 1.0, 0.5).unwrap(), &[11]).unwrap();
    println!("1D: {} nodes, h = {}", line.len(), line.spacing()[0]);
    let obs = select_observation_boundary(&line, &[-0.5]).unwrap();
    println!("  observed nodes for x0 = -0.5: {:?}", obs.nodes());

    let sq = build_grid(&Domain::rectangle([0.0, 1.0], [0.0, 2.0], 0.5).unwrap(), &[11, 21]).unwrap();
    let obs = select_observation_boundary(&sq, &[-1.0, 1.0]).unwrap();
    println!("2D: {} nodes, {} boundary, {} observed", sq.len(), sq.boundary().len(), obs.nodes().len());

    // x² + y² has normal derivative 2x on x = 1 and 2y on y = 0, 2
    let f = sq.sample(|x| x[0] * x[0] + x[1] * x[1]);
    let trace = neumann_trace(&sq, &f, &obs).unwrap();
    for ((node, face), v) in obs.trace_nodes().iter().zip(&trace).step_by(8) {
        println!("  node {node:4} at {:?} axis {} upper {}: {v:.6}", sq.point(*node), face.axis, face.upper);
    }

    // points inside the closed domain are rejected
    println!("x0 inside: {}", select_observation_boundary(&sq, &[0.5, 0.5]).unwrap_err());
}
