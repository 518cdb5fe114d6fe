//! Trajectory CSV: `t,re_x,im_x,phase,sheet,re_p,im_p,event`.
//!
//! One row per accepted step plus one interpolated row per crossing event,
//! merged in time order. Reals carry 17 significant digits, which is
//! enough to reproduce every `f64` exactly.

use std::io::{BufRead, Write};

use num_complex::Complex64;

use super::{CrossingKind, State, Trajectory};
use crate::error::{OrbitError, Result};
use crate::surface::{sheet_of, SurfacePoint};

pub const TRAJECTORY_HEADER: &str = "t,re_x,im_x,phase,sheet,re_p,im_p,event";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventTag {
    None,
    Axis,
    Cut,
}

impl EventTag {
    fn as_str(self) -> &'static str {
        match self {
            EventTag::None => "",
            EventTag::Axis => "axis",
            EventTag::Cut => "cut",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub t: f64,
    pub x: Complex64,
    pub phase: f64,
    pub sheet: i64,
    pub p: Complex64,
    pub event: EventTag,
}

impl CsvRow {
    pub fn state(&self) -> State {
        State { t: self.t, point: SurfacePoint::from_parts(self.x, self.phase), p: self.p }
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(e: std::io::Error) -> OrbitError {
    OrbitError::InvalidArgument(format!("i/o error: {e}"))
}

/// Rows in output order.
pub fn trajectory_rows(traj: &Trajectory) -> Vec<CsvRow> {
    let mut rows: Vec<CsvRow> = traj
        .samples
        .iter()
        .map(|s| CsvRow {
            t: s.t,
            x: s.point.value,
            phase: s.point.phi,
            sheet: s.point.sheet(),
            p: s.p,
            event: EventTag::None,
        })
        .collect();
    for e in &traj.events {
        let p = traj.state_at(e.t).map(|s| s.p).unwrap_or(Complex64::new(f64::NAN, f64::NAN));
        let tag = match e.kind {
            CrossingKind::ImaginaryAxis => EventTag::Axis,
            CrossingKind::BranchCut => EventTag::Cut,
        };
        rows.push(CsvRow { t: e.t, x: e.location.value, phase: e.location.phi, sheet: e.sheet_after, p, event: tag });
    }
    // stable: an event at a sample time follows the sample
    rows.sort_by(|a, b| a.t.total_cmp(&b.t));
    rows
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut out: W) -> Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}").map_err(io_err)?;
    for r in trajectory_rows(traj) {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            num(r.t),
            num(r.x.re),
            num(r.x.im),
            num(r.phase),
            r.sheet,
            num(r.p.re),
            num(r.p.im),
            r.event.as_str()
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn read_trajectory_csv<R: BufRead>(input: R) -> Result<Vec<CsvRow>> {
    let mut lines = input.lines();
    let header = lines.next().transpose().map_err(io_err)?.unwrap_or_default();
    if header.trim() != TRAJECTORY_HEADER {
        return Err(OrbitError::InvalidArgument(format!("unexpected trajectory header {header:?}")));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || OrbitError::InvalidArgument(format!("malformed trajectory row {}: {line:?}", lineno + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad());
        }
        let r = |i: usize| f[i].trim().parse::<f64>().map_err(|_| bad());
        let sheet: i64 = f[4].trim().parse().map_err(|_| bad())?;
        let event = match f[7].trim() {
            "" => EventTag::None,
            "axis" => EventTag::Axis,
            "cut" => EventTag::Cut,
            _ => return Err(bad()),
        };
        let phase = r(3)?;
        if event == EventTag::None && sheet != sheet_of(phase) {
            return Err(bad());
        }
        rows.push(CsvRow {
            t: r(0)?,
            x: Complex64::new(r(1)?, r(2)?),
            phase,
            sheet,
            p: Complex64::new(r(5)?, r(6)?),
            event,
        });
    }
    Ok(rows)
}
