//! CSV tables. Numbers use the shortest decimal form that reads back to the
//! same `f64`; rows end in `\n`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::NetworkState;
use crate::sweep::SweepTable;

/// Outcome written for both engines in rows whose computation failed.
pub const FAILED: &str = "Failed";

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn writer() -> ::csv::Writer<Vec<u8>> {
    ::csv::WriterBuilder::new()
        .terminator(::csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: ::csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn csv_err(e: ::csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Header of a sweep table for the given species names.
pub fn sweep_header(species: &[String]) -> Vec<String> {
    let mut h = vec!["param".to_string(), "cell".to_string(), "S_ode".to_string()];
    h.extend(species.iter().map(|n| format!("B_{n}_ode")));
    h.push("S_rtm".into());
    h.extend(species.iter().map(|n| format!("B_{n}_rtm")));
    for c in ["delta", "outcome_ode", "outcome_rtm", "converged_ode", "converged_rtm"] {
        h.push(c.into());
    }
    h
}

/// One line per (parameter value, tracked cell); cells are 1-based.
/// Failed rows carry `NaN` values and the outcome `Failed`.
pub fn sweep_csv(table: &SweepTable) -> Result<String> {
    let m = table.species_names.len();
    let mut w = writer();
    w.write_record(sweep_header(&table.species_names)).map_err(csv_err)?;
    for row in &table.rows {
        let param = num(row.param);
        if row.error.is_some() {
            for &cell in &row.tracked {
                let mut rec = vec![param.clone(), (cell + 1).to_string()];
                rec.extend(std::iter::repeat(num(f64::NAN)).take(2 * (m + 1) + 1));
                rec.extend([FAILED.into(), FAILED.into(), "false".into(), "false".into()]);
                w.write_record(&rec).map_err(csv_err)?;
            }
            continue;
        }
        for c in &row.cells {
            let mut rec = vec![param.clone(), (c.cell + 1).to_string(), num(c.ode.s)];
            rec.extend(c.ode.b.iter().map(|&b| num(b)));
            rec.push(num(c.rtm.s));
            rec.extend(c.rtm.b.iter().map(|&b| num(b)));
            rec.push(num(c.delta));
            rec.push(c.outcome_ode.to_string());
            rec.push(c.outcome_rtm.to_string());
            rec.push(row.converged_ode.to_string());
            rec.push(row.converged_rtm.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    finish(w)
}

/// Columns `time, cell, S, B_<name>...`, one line per state and cell.
pub fn trajectory_csv(states: &[NetworkState], species: &[String]) -> Result<String> {
    let mut w = writer();
    let mut h = vec!["time".to_string(), "cell".to_string(), "S".to_string()];
    h.extend(species.iter().map(|n| format!("B_{n}")));
    w.write_record(&h).map_err(csv_err)?;
    for st in states {
        for (i, c) in st.cells.iter().enumerate() {
            if c.b.len() != species.len() {
                return Err(Error::Dimension {
                    expected: species.len(),
                    found: c.b.len(),
                });
            }
            let mut rec = vec![num(st.time), (i + 1).to_string(), num(c.s)];
            rec.extend(c.b.iter().map(|&b| num(b)));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    finish(w)
}

pub fn write_sweep_csv(table: &SweepTable, path: &Path) -> Result<()> {
    std::fs::write(path, sweep_csv(table)?)?;
    Ok(())
}

pub fn write_trajectory_csv(states: &[NetworkState], species: &[String], path: &Path) -> Result<()> {
    std::fs::write(path, trajectory_csv(states, species)?)?;
    Ok(())
}
