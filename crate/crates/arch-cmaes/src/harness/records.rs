//! Per-iteration log records and their CSV form. Floats are written in
//! shortest round-trip decimal; fields that a handler does not produce are
//! zero.

use super::HarnessError;
use std::io::{BufRead, Write};

pub const CSV_HEADER: &str = "t,evals,d_crit,sigma,eig_min,eig_max,alpha,d_m,eps,r_feas,c_act";

/// One optimizer iteration as logged by a trial. `eig_min`/`eig_max` are the
/// extreme eigenvalues of the square root of the covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLogRecord {
    pub t: u64,
    pub evals: u64,
    pub d_crit: f64,
    pub sigma: f64,
    pub eig_min: f64,
    pub eig_max: f64,
    pub alpha: f64,
    pub d_m: f64,
    pub eps: f64,
    pub r_feas: f64,
    pub c_act: u64,
}

pub fn write_records(
    out: &mut impl Write,
    records: &[RunLogRecord],
) -> Result<(), HarnessError> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.evals,
            r.d_crit,
            r.sigma,
            r.eig_min,
            r.eig_max,
            r.alpha,
            r.d_m,
            r.eps,
            r.r_feas,
            r.c_act
        )?;
    }
    Ok(())
}

fn parse_error(line: usize, message: impl Into<String>) -> HarnessError {
    HarnessError::LogParse { line, message: message.into() }
}

pub fn read_records(input: &mut impl BufRead) -> Result<Vec<RunLogRecord>, HarnessError> {
    let mut lines = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        lines.push((idx + 1, line?));
    }
    let mut iter = lines.into_iter().filter(|(_, l)| !l.trim().is_empty());
    let (line_no, header) =
        iter.next().ok_or_else(|| parse_error(1, "empty log: missing header"))?;
    if header.trim() != CSV_HEADER {
        return Err(parse_error(line_no, format!("unexpected header {header:?}")));
    }
    let mut records = Vec::new();
    for (line_no, line) in iter {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 11 {
            return Err(parse_error(line_no, format!("expected 11 fields, got {}", fields.len())));
        }
        let int = |s: &str, name: &str| {
            s.parse::<u64>().map_err(|e| parse_error(line_no, format!("{name}: {e}")))
        };
        let float = |s: &str, name: &str| {
            s.parse::<f64>().map_err(|e| parse_error(line_no, format!("{name}: {e}")))
        };
        records.push(RunLogRecord {
            t: int(fields[0], "t")?,
            evals: int(fields[1], "evals")?,
            d_crit: float(fields[2], "d_crit")?,
            sigma: float(fields[3], "sigma")?,
            eig_min: float(fields[4], "eig_min")?,
            eig_max: float(fields[5], "eig_max")?,
            alpha: float(fields[6], "alpha")?,
            d_m: float(fields[7], "d_m")?,
            eps: float(fields[8], "eps")?,
            r_feas: float(fields[9], "r_feas")?,
            c_act: int(fields[10], "c_act")?,
        });
    }
    Ok(records)
}

pub const AGGREGATE_HEADER: &str = "t,trials,q25,median,q75";

/// Criterion-distance quantiles across trials at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRecord {
    pub t: u64,
    pub trials: usize,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

pub fn write_aggregate(
    out: &mut impl Write,
    records: &[AggregateRecord],
) -> Result<(), HarnessError> {
    writeln!(out, "{AGGREGATE_HEADER}")?;
    for r in records {
        writeln!(out, "{},{},{},{},{}", r.t, r.trials, r.q25, r.median, r.q75)?;
    }
    Ok(())
}
