//! File formats.
//!
//! * Distribution CSV: `cell_index,bitmask,prob`, one row per cell, bitmask
//!   written with symptom `J - 1` leftmost.
//! * Counts CSV: `cell_index,count`.
//! * Constraint JSON: see [`ConstraintSet`].
//!
//! Probabilities are written with 17 significant digits so that a read-back
//! reproduces the same `f64` bit pattern.

use std::io::{Read, Write};
use std::sync::Arc;

use super::{ConstraintSet, Distribution, EmpiricalCounts, OutcomeSpace};
use crate::error::{Error, Result};

pub fn format_prob(value: f64) -> String {
    if value.is_finite() {
        format!("{value:.16e}")
    } else if value.is_nan() {
        "nan".to_string()
    } else if value > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub fn write_distribution_csv<W: Write>(dist: &Distribution, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let space = dist.space();
    w.write_record(["cell_index", "bitmask", "prob"])
        .map_err(csv_io)?;
    for (cell, &p) in dist.probs().iter().enumerate() {
        w.write_record([cell.to_string(), space.bitmask(cell), format_prob(p)])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a distribution; `name` identifies the source in error messages.
pub fn read_distribution_csv<R: Read>(input: R, name: &str) -> Result<Distribution> {
    let rows = read_rows(input, name, &["cell_index", "bitmask", "prob"])?;
    let space = Arc::new(
        OutcomeSpace::from_cell_count(rows.len())
            .map_err(|e| Error::format(name, format!("row count: {e}")))?,
    );
    let mut probs = vec![f64::NAN; rows.len()];
    for (line, row) in rows {
        let cell = parse_cell(name, line, &row[0], probs.len())?;
        if row[1] != space.bitmask(cell) {
            return Err(Error::format(
                name,
                format!(
                    "line {line}: bitmask `{}` does not match cell {cell} (expected `{}`)",
                    row[1],
                    space.bitmask(cell)
                ),
            ));
        }
        let p: f64 = row[2]
            .parse()
            .map_err(|_| Error::format(name, format!("line {line}: bad prob `{}`", row[2])))?;
        if !probs[cell].is_nan() {
            return Err(Error::format(
                name,
                format!("line {line}: duplicate cell {cell}"),
            ));
        }
        probs[cell] = p;
    }
    Distribution::new(space, probs).map_err(|e| Error::format(name, e.to_string()))
}

pub fn write_counts_csv<W: Write>(counts: &EmpiricalCounts, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cell_index", "count"]).map_err(csv_io)?;
    for (cell, c) in counts.counts().iter().enumerate() {
        w.write_record([cell.to_string(), c.to_string()])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_counts_csv<R: Read>(input: R, name: &str) -> Result<EmpiricalCounts> {
    let rows = read_rows(input, name, &["cell_index", "count"])?;
    OutcomeSpace::from_cell_count(rows.len())
        .map_err(|e| Error::format(name, format!("row count: {e}")))?;
    let mut counts: Vec<Option<u64>> = vec![None; rows.len()];
    for (line, row) in rows {
        let cell = parse_cell(name, line, &row[0], counts.len())?;
        let c: u64 = row[1]
            .parse()
            .map_err(|_| Error::format(name, format!("line {line}: bad count `{}`", row[1])))?;
        if counts[cell].replace(c).is_some() {
            return Err(Error::format(
                name,
                format!("line {line}: duplicate cell {cell}"),
            ));
        }
    }
    Ok(EmpiricalCounts::new(
        counts.into_iter().map(|c| c.unwrap_or(0)).collect(),
    ))
}

pub fn read_constraints_json<R: Read>(input: R, name: &str) -> Result<ConstraintSet> {
    serde_json::from_reader(input).map_err(|e| Error::format(name, e.to_string()))
}

fn parse_cell(name: &str, line: u64, field: &str, cell_count: usize) -> Result<usize> {
    let cell: usize = field
        .parse()
        .map_err(|_| Error::format(name, format!("line {line}: bad cell_index `{field}`")))?;
    if cell >= cell_count {
        return Err(Error::format(
            name,
            format!("line {line}: cell_index {cell} out of range for {cell_count} rows"),
        ));
    }
    Ok(cell)
}

fn read_rows<R: Read>(input: R, name: &str, header: &[&str]) -> Result<Vec<(u64, Vec<String>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let found = reader
        .headers()
        .map_err(|e| Error::format(name, e.to_string()))?
        .clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(Error::format(
            name,
            format!(
                "expected header `{}`, got `{}`",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::format(name, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        rows.push((line, record.iter().map(str::to_owned).collect()));
    }
    Ok(rows)
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
