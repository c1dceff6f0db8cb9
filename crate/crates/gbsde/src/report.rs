//! Artifact writers: CSV tables and JSON summaries over any `io::Write`.
//!
//! Every float is written with Rust's shortest round-trip decimal
//! formatting, so identical in-memory results produce byte-identical
//! files — the determinism contract of the batch front end. Absent
//! optional values become empty cells. Large space-time fields are
//! written with a uniform time stride (first and last levels always
//! included); the stride is part of the run manifest via the caller.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::gexp::ControlStat;
use crate::grid::{Grid, ValueField};
use crate::obstacle::{StudyRow, TraceEntry};
use crate::paths::PathSolution;
use crate::picard::SlabEntry;
use crate::problem::ProblemSpec;
use crate::sde::{MomentReport, PathEnsemble};

/// Default time stride for space-time CSVs: about a hundred levels.
pub fn field_time_stride(nt: usize) -> usize {
    (nt / 100).max(1)
}

fn strided_levels(nt: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let mut levels: Vec<usize> = (0..=nt).step_by(stride).collect();
    if *levels.last().unwrap() != nt {
        levels.push(nt);
    }
    levels
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `component,t,x,u,l,residual` rows of a solved field, strided in time.
/// Components are 1-based in the file. The residual column is empty when
/// no residual field is supplied.
pub fn write_field_csv<W: Write>(
    w: &mut W,
    spec: &ProblemSpec,
    grid: &Grid,
    field: &ValueField,
    residual: Option<&ValueField>,
    time_stride: usize,
) -> Result<()> {
    writeln!(w, "component,t,x,u,l,residual")?;
    let levels = strided_levels(grid.nt(), time_stride);
    for i in 0..field.k() {
        for &j in &levels {
            let t = grid.t(j);
            for s in 0..grid.nx() {
                let x = grid.x(s);
                let l = spec.l[i].eval(t, x);
                let r = residual.map(|r| r.at(i, j, s));
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    i + 1,
                    t,
                    x,
                    field.at(i, j, s),
                    l,
                    opt(r)
                )?;
            }
        }
    }
    Ok(())
}

/// `component,t,x,residual` rows, strided in time.
pub fn write_residual_csv<W: Write>(
    w: &mut W,
    grid: &Grid,
    residual: &ValueField,
    time_stride: usize,
) -> Result<()> {
    writeln!(w, "component,t,x,residual")?;
    let levels = strided_levels(grid.nt(), time_stride);
    for i in 0..residual.k() {
        for &j in &levels {
            let t = grid.t(j);
            for s in 0..grid.nx() {
                writeln!(w, "{},{},{},{}", i + 1, t, grid.x(s), residual.at(i, j, s))?;
            }
        }
    }
    Ok(())
}

/// `m,sup_delta,sup_neg_part` rows of a penalty schedule trace.
pub fn write_trace_csv<W: Write>(w: &mut W, trace: &[TraceEntry]) -> Result<()> {
    writeln!(w, "m,sup_delta,sup_neg_part")?;
    for e in trace {
        writeln!(w, "{},{},{}", e.m, e.sup_delta, e.sup_neg_part)?;
    }
    Ok(())
}

/// `control_id,mean,stderr` rows of a scenario bound table.
pub fn write_scenario_csv<W: Write>(w: &mut W, table: &[ControlStat]) -> Result<()> {
    writeln!(w, "control_id,mean,stderr")?;
    for s in table {
        writeln!(w, "{},{},{}", s.control_id, s.mean, s.stderr)?;
    }
    Ok(())
}

/// `path,t,x` rows of a simulated ensemble, strided in time.
pub fn write_ensemble_csv<W: Write>(
    w: &mut W,
    ensemble: &PathEnsemble,
    time_stride: usize,
) -> Result<()> {
    writeln!(w, "path,t,x")?;
    let n = ensemble.n_steps();
    let levels = strided_levels(n, time_stride);
    for (p, states) in ensemble.states.iter().enumerate() {
        for &j in &levels {
            writeln!(w, "{},{},{}", p, ensemble.times[j], states[j])?;
        }
    }
    Ok(())
}

/// `slab,t_lo,t_hi,h,iterations,factor,sup_delta` rows of a stitched run.
pub fn write_slab_csv<W: Write>(w: &mut W, slabs: &[SlabEntry]) -> Result<()> {
    writeln!(w, "slab,t_lo,t_hi,h,iterations,factor,sup_delta")?;
    for s in slabs {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.index, s.t_lo, s.t_hi, s.h, s.iterations, s.factor, s.sup_delta
        )?;
    }
    Ok(())
}

/// Refinement study rows.
pub fn write_study_csv<W: Write>(w: &mut W, rows: &[StudyRow]) -> Result<()> {
    writeln!(
        w,
        "level,nx,nt,dx,dt,value,residual_smooth,residual_sup,delta_value,ratio"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.level,
            r.nx,
            r.nt,
            r.dx,
            r.dt,
            r.value,
            r.residual_smooth,
            r.residual_sup,
            opt(r.delta_value),
            opt(r.ratio)
        )?;
    }
    Ok(())
}

/// `control_id,x0,delta,moment,ratio` rows of moment diagnostics.
pub fn write_moments_csv<W: Write>(w: &mut W, reports: &[MomentReport]) -> Result<()> {
    writeln!(w, "control_id,x0,delta,moment,ratio")?;
    for r in reports {
        for ((d, m), ratio) in r.deltas.iter().zip(&r.moments).zip(&r.ratios) {
            writeln!(w, "{},{},{},{},{}", r.control_id, r.x0, d, m, ratio)?;
        }
    }
    Ok(())
}

/// `path,component,min_gap,min_da,total_da,skorohod` extrema rows of a
/// reconstruction.
pub fn write_path_extrema_csv<W: Write>(w: &mut W, solution: &PathSolution) -> Result<()> {
    writeln!(w, "path,component,min_gap,min_da,total_da,skorohod")?;
    for (p, rec) in solution.records.iter().enumerate() {
        for (i, e) in rec.extrema.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                p,
                i + 1,
                e.min_gap,
                e.min_da,
                e.total_da,
                e.skorohod
            )?;
        }
    }
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<W: Write, T: Serialize + ?Sized>(w: &mut W, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| crate::error::Error::Config(format!("serialization: {e}")))?;
    writeln!(w, "{text}")?;
    Ok(())
}
