//! Tidy CSV output.

use std::io::{self, Write};

use crate::experiment::{CellStatus, ConvergenceReport, ModesRow};

pub const CONVERGENCE_HEADER: &str = "method,N,trial,K,error_linf,error_rel,offline_sec,online_sec,status";

/// 17 significant digits, round-trip exact.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.16e}")
    }
}

fn status_field(s: &CellStatus) -> String {
    match s {
        CellStatus::Ok => "ok".into(),
        CellStatus::Failed(msg) => format!("failed: {}", msg.replace([',', '\n', '"'], " ")),
    }
}

pub fn write_convergence_csv<W: Write>(out: &mut W, report: &ConvergenceReport) -> io::Result<()> {
    writeln!(out, "{CONVERGENCE_HEADER}")?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.method,
            r.n,
            r.trial,
            r.modes.map(|k| k.to_string()).unwrap_or_default(),
            fmt_float(r.error_linf),
            fmt_float(r.error_rel),
            fmt_float(r.offline_sec),
            fmt_float(r.online_sec),
            status_field(&r.status)
        )?;
    }
    Ok(())
}

pub fn write_modes_csv<W: Write>(out: &mut W, rows: &[ModesRow]) -> io::Result<()> {
    writeln!(out, "method,N,trial,K,error_linf,status")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.method,
            r.n,
            r.trial,
            r.modes,
            fmt_float(r.error_linf),
            status_field(&r.status)
        )?;
    }
    Ok(())
}

/// Human-readable per-method means and slopes.
pub fn write_summary<W: Write>(out: &mut W, report: &ConvergenceReport) -> io::Result<()> {
    for s in &report.summary {
        writeln!(
            out,
            "{:<16} N={:<6} mean={:.4e} min={:.4e} max={:.4e} failed={}",
            s.method.name(),
            s.n,
            s.mean,
            s.min,
            s.max,
            s.failed
        )?;
    }
    for (m, slope) in &report.slopes {
        match slope {
            Some(v) => writeln!(out, "{:<16} slope={v:.3}", m.name())?,
            None => writeln!(out, "{:<16} slope=n/a", m.name())?,
        }
    }
    Ok(())
}
