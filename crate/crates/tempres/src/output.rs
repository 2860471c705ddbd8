//! CSV and JSON-lines rendering of sweep records.

use std::io::{BufRead, Read, Write};

use crate::config::Format;
use crate::error::{CliError, Result};
use crate::sweep::SweepRecord;

pub const CSV_HEADER: [&str; 22] = [
    "mode",
    "n",
    "a_or_eigs",
    "sigma",
    "gamma",
    "T",
    "h",
    "N",
    "B",
    "M",
    "seed",
    "replicates",
    "V_target",
    "mse_closed",
    "mse_oracle",
    "mse_emp_mean",
    "mse_emp_se",
    "bias_sq",
    "variance_over_M",
    "truncation_sq",
    "cross_term",
    "error",
];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_float(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn opt_int(x: Option<u64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_row(r: &SweepRecord) -> [String; 22] {
    [
        r.mode.clone(),
        r.n.to_string(),
        r.a_or_eigs.clone(),
        fmt_float(r.sigma),
        fmt_float(r.gamma),
        fmt_float(r.T),
        fmt_float(r.h),
        opt_int(r.N),
        r.B.to_string(),
        opt_int(r.M),
        r.seed.to_string(),
        r.replicates.to_string(),
        opt_float(r.V_target),
        opt_float(r.mse_closed),
        opt_float(r.mse_oracle),
        opt_float(r.mse_emp_mean),
        opt_float(r.mse_emp_se),
        opt_float(r.bias_sq),
        opt_float(r.variance_over_M),
        opt_float(r.truncation_sq),
        opt_float(r.cross_term),
        r.error.clone().unwrap_or_default(),
    ]
}

pub fn write_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(csv_row(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl<W: Write>(records: &[SweepRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn emit<W: Write>(records: &[SweepRecord], format: Format, out: W) -> Result<()> {
    match format {
        Format::Csv => write_csv(records, out),
        Format::Jsonl => write_jsonl(records, out),
    }
}

fn field<T: std::str::FromStr>(s: &str, name: &str) -> Result<T> {
    s.parse().map_err(|_| CliError::config(format!("bad value {s:?} in column {name}")))
}

fn opt_field<T: std::str::FromStr>(s: &str, name: &str) -> Result<Option<T>> {
    if s.is_empty() {
        Ok(None)
    } else {
        field(s, name).map(Some)
    }
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(CliError::config("unexpected CSV header"));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let c = |i: usize| &row[i];
        out.push(SweepRecord {
            mode: c(0).to_string(),
            n: field(c(1), "n")?,
            a_or_eigs: c(2).to_string(),
            sigma: field(c(3), "sigma")?,
            gamma: field(c(4), "gamma")?,
            T: field(c(5), "T")?,
            h: field(c(6), "h")?,
            N: opt_field(c(7), "N")?,
            B: field(c(8), "B")?,
            M: opt_field(c(9), "M")?,
            seed: field(c(10), "seed")?,
            replicates: field(c(11), "replicates")?,
            V_target: opt_field(c(12), "V_target")?,
            mse_closed: opt_field(c(13), "mse_closed")?,
            mse_oracle: opt_field(c(14), "mse_oracle")?,
            mse_emp_mean: opt_field(c(15), "mse_emp_mean")?,
            mse_emp_se: opt_field(c(16), "mse_emp_se")?,
            bias_sq: opt_field(c(17), "bias_sq")?,
            variance_over_M: opt_field(c(18), "variance_over_M")?,
            truncation_sq: opt_field(c(19), "truncation_sq")?,
            cross_term: opt_field(c(20), "cross_term")?,
            error: Some(c(21).to_string()).filter(|s| !s.is_empty()),
        });
    }
    Ok(out)
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<SweepRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
