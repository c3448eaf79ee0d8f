//! Plain-text CSV writers. Every number is written with `{:.12e}` so reruns
//! are byte-identical.

use std::io::Write;

use crate::carleman::ScanRow;
use crate::error::Result;
use crate::forward::{ObservationTrace, TwoStateTrajectory};
use crate::geometry::SpatialGrid;
use crate::inverse::StabilityReport;

fn num(v: f64) -> String {
    format!("{v:.12e}")
}

fn coord_header(grid: &SpatialGrid) -> &'static str {
    if grid.dim() == 1 {
        "x"
    } else {
        "x,y"
    }
}

/// `t,node,x[,y],re_plus,im_plus,re_minus,im_minus`; every `every`-th
/// snapshot plus the last one.
pub fn write_trajectory(grid: &SpatialGrid, traj: &TwoStateTrajectory, every: usize, out: &mut impl Write) -> Result<()> {
    writeln!(out, "t,node,{},re_plus,im_plus,re_minus,im_minus", coord_header(grid))?;
    let last = traj.len() - 1;
    for (k, (t, u)) in traj.times().iter().zip(traj.snapshots()).enumerate() {
        if k % every.max(1) != 0 && k != last {
            continue;
        }
        for (n, x) in grid.points().enumerate() {
            let xs: Vec<String> = x.iter().map(|&v| num(v)).collect();
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                num(*t),
                n,
                xs.join(","),
                num(u.uplus[n].re),
                num(u.uplus[n].im),
                num(u.uminus[n].re),
                num(u.uminus[n].im)
            )?;
        }
    }
    Ok(())
}

/// `t,node,axis,upper,re_plus,im_plus,re_minus,im_minus` for `∂ν ∂t u±`.
pub fn write_observation(trace: &ObservationTrace, out: &mut impl Write) -> Result<()> {
    writeln!(out, "t,node,axis,upper,re_plus,im_plus,re_minus,im_minus")?;
    for (k, t) in trace.times.iter().enumerate() {
        for (j, (node, face)) in trace.nodes.iter().enumerate() {
            let (p, m) = (trace.plus[k][j], trace.minus[k][j]);
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                num(*t),
                node,
                face.axis,
                u8::from(face.upper),
                num(p.re),
                num(p.im),
                num(m.re),
                num(m.im)
            )?;
        }
    }
    Ok(())
}

/// `seed,amplitude,lhs,rhs_raw,ratio,grid,dt`; an undefined ratio is `null`.
pub fn write_stability(rows: &[StabilityReport], out: &mut impl Write) -> Result<()> {
    writeln!(out, "seed,amplitude,lhs,rhs_raw,ratio,grid,dt")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            num(r.amplitude),
            num(r.lhs),
            num(r.rhs_raw),
            r.ratio.map(num).unwrap_or_else(|| "null".into()),
            r.grid,
            num(r.dt)
        )?;
    }
    Ok(())
}

/// `seed,amplitude,rhs_weighted`.
pub fn write_weighted(rows: &[StabilityReport], out: &mut impl Write) -> Result<()> {
    writeln!(out, "seed,amplitude,rhs_weighted")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{}",
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            num(r.amplitude),
            r.rhs_weighted.map(num).unwrap_or_else(|| "null".into())
        )?;
    }
    Ok(())
}

/// `s,worst_ratio,argmax_member_id`.
pub fn write_scan(rows: &[ScanRow], out: &mut impl Write) -> Result<()> {
    writeln!(out, "s,worst_ratio,argmax_member_id")?;
    for r in rows {
        writeln!(out, "{},{},{}", num(r.s), num(r.worst_ratio), r.argmax_member_id)?;
    }
    Ok(())
}

/// `key = value` lines.
pub fn write_summary(lines: &[(String, String)], out: &mut impl Write) -> Result<()> {
    for (k, v) in lines {
        writeln!(out, "{k} = {v}")?;
    }
    Ok(())
}
