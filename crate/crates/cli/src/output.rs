//! CSV and JSON writers. Numbers are written with 17 significant digits.

use std::io::{self, Write};

use serde_json::{json, Value};
use timefilter::integrators::{Status, Trajectory};

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// `t, <components>, k, est, nu`.
pub fn trajectory_header(components: &[String]) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend(components.iter().cloned());
    cols.extend(["k", "est", "nu"].map(String::from));
    cols.join(",")
}

/// One row per accepted step; a failed run ends with a `# failed` footer line.
pub fn write_trajectory_csv<W: Write + ?Sized>(w: &mut W, components: &[String], tr: &Trajectory) -> io::Result<()> {
    writeln!(w, "{}", trajectory_header(components))?;
    for r in &tr.records {
        let mut row = Vec::with_capacity(r.y.len() + 4);
        row.push(num(r.t));
        row.extend(r.y.iter().map(|&v| num(v)));
        row.push(num(r.k));
        row.push(opt(r.est));
        row.push(opt(r.nu_used));
        writeln!(w, "{}", row.join(","))?;
    }
    if let Status::Failed { t, reason } = &tr.status {
        writeln!(w, "# failed at t={}: {}", num(*t), reason.replace(['\n', '\r'], " "))?;
    }
    Ok(())
}

fn status_json(status: &Status) -> Value {
    match status {
        Status::Completed => json!({"state": "completed"}),
        Status::Failed { t, reason } => json!({"state": "failed", "t": t, "reason": reason}),
    }
}

pub fn trajectory_json(components: &[String], tr: &Trajectory) -> Value {
    let records: Vec<Value> = tr
        .records
        .iter()
        .map(|r| {
            json!({
                "t": r.t,
                "y": r.y.as_slice(),
                "k": r.k,
                "est": r.est,
                "nu": r.nu_used,
            })
        })
        .collect();
    json!({
        "problem": tr.problem,
        "method": tr.method,
        "columns": trajectory_header(components).split(',').collect::<Vec<_>>(),
        "records": records,
        "status": status_json(&tr.status),
    })
}

pub fn write_json<W: Write + ?Sized>(w: &mut W, v: &Value) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *w, v)?;
    writeln!(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub k: f64,
    pub max_error: f64,
    /// `log2(e[i-1] / e[i])`; absent on the first level.
    pub order: Option<f64>,
}

pub fn write_convergence_csv<W: Write + ?Sized>(w: &mut W, rows: &[ConvergenceRow]) -> io::Result<()> {
    writeln!(w, "k,max_error,order")?;
    for r in rows {
        writeln!(w, "{},{},{}", num(r.k), num(r.max_error), opt(r.order))?;
    }
    Ok(())
}

pub fn convergence_json(problem: &str, method: &str, rows: &[ConvergenceRow]) -> Value {
    json!({
        "problem": problem,
        "method": method,
        "rows": rows
            .iter()
            .map(|r| json!({"k": r.k, "max_error": r.max_error, "order": r.order}))
            .collect::<Vec<_>>(),
    })
}
