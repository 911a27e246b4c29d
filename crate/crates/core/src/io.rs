//! CSV and JSON formats.
//!
//! Landscape CSV: `assumption,M,a,p,loss`. Simulation CSV:
//! `assumption,M,a,p,theory_loss,emp_loss_mean,emp_loss_std,emp_acc_mean,seeds`.
//! Numbers carry 9 significant digits, `+inf` is written `inf`, and
//! non-convergent cells have `nan` in the empirical columns. Output is
//! sorted by `(a, p)` and byte-stable.
//!
//! Matrices are JSON objects `{"M": m, "columns": [[...], ...]}`, one inner
//! array per true class.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::ExperimentRow;
use crate::stochastic::{LossValue, StochasticMatrix, TransitionMatrix};
use crate::theory::{Assumption, LandscapeGrid};

pub const LANDSCAPE_HEADER: &str = "assumption,M,a,p,loss";
pub const ROWS_HEADER: &str =
    "assumption,M,a,p,theory_loss,emp_loss_mean,emp_loss_std,emp_acc_mean,seeds";

/// `printf("%.9g")`-style formatting: 9 significant digits, trailing zeros
/// dropped, exponent form outside `[1e-5, 1e9)`.
pub fn format_sig9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        return format!("{}e{}", strip_zeros(mantissa), exp);
    }
    let decimals = (8 - exp) as usize;
    strip_zeros(&format!("{x:.decimals$}")).to_string()
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn sorted_by_a_p<T>(items: &mut [T], key: impl Fn(&T) -> (f64, f64)) {
    items.sort_by(|x, y| {
        let (xa, xp) = key(x);
        let (ya, yp) = key(y);
        xa.total_cmp(&ya).then(xp.total_cmp(&yp))
    });
}

pub fn write_landscape_csv<W: Write>(grid: &LandscapeGrid, mut sink: W) -> Result<()> {
    let mut cells: Vec<(f64, f64, LossValue)> = grid.cells().collect();
    sorted_by_a_p(&mut cells, |c| (c.0, c.1));
    writeln!(sink, "{LANDSCAPE_HEADER}")?;
    for (a, p, loss) in cells {
        writeln!(
            sink,
            "{},{},{},{},{}",
            grid.assumption,
            grid.classes,
            format_sig9(a),
            format_sig9(p),
            format_sig9(loss.nats())
        )?;
    }
    sink.flush()?;
    Ok(())
}

pub fn write_rows_csv<W: Write>(rows: &[ExperimentRow], mut sink: W) -> Result<()> {
    let mut rows: Vec<&ExperimentRow> = rows.iter().collect();
    sorted_by_a_p(&mut rows, |r| (r.a, r.p));
    writeln!(sink, "{ROWS_HEADER}")?;
    for r in rows {
        writeln!(
            sink,
            "{},{},{},{},{},{},{},{},{}",
            r.assumption,
            r.classes,
            format_sig9(r.a),
            format_sig9(r.p),
            format_sig9(r.theory_loss.nats()),
            format_sig9(r.emp_loss_mean),
            format_sig9(r.emp_loss_std),
            format_sig9(r.emp_accuracy_mean),
            r.seeds
        )?;
    }
    sink.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    let raw = record
        .get(i)
        .ok_or_else(|| Error::Parse(format!("line {line}: missing field {i}")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: cannot parse field {i} ({raw:?})")))
}

/// Reads rows written by [`write_rows_csv`].
pub fn read_rows_csv<R: Read>(source: R) -> Result<Vec<ExperimentRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != ROWS_HEADER {
        return Err(Error::Parse(format!(
            "unexpected header {:?}, expected {ROWS_HEADER:?}",
            header.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let line = k as u64 + 2;
        let assumption: Assumption = record
            .get(0)
            .unwrap_or_default()
            .parse()
            .map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        let theory: f64 = parse_field(&record, 4, line)?;
        let emp_loss_mean: f64 = parse_field(&record, 5, line)?;
        rows.push(ExperimentRow {
            assumption,
            classes: parse_field(&record, 1, line)?,
            a: parse_field(&record, 2, line)?,
            p: parse_field(&record, 3, line)?,
            theory_loss: LossValue::from_nats(theory),
            emp_loss_mean,
            emp_loss_std: parse_field(&record, 6, line)?,
            emp_accuracy_mean: parse_field(&record, 7, line)?,
            seeds: parse_field(&record, 8, line)?,
            converged: !emp_loss_mean.is_nan(),
        });
    }
    Ok(rows)
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    #[serde(rename = "M")]
    classes: usize,
    columns: Vec<Vec<f64>>,
}

/// Parses and validates a column-stochastic matrix.
pub fn read_matrix_json<K, R: Read>(source: R) -> Result<StochasticMatrix<K>> {
    let raw: MatrixJson = serde_json::from_reader(source)?;
    if raw.columns.len() != raw.classes {
        return Err(Error::DimensionMismatch {
            expected: raw.classes,
            actual: raw.columns.len(),
        });
    }
    StochasticMatrix::from_columns(raw.columns)
}

pub fn read_transition_json<R: Read>(source: R) -> Result<TransitionMatrix> {
    read_matrix_json(source)
}

pub fn write_matrix_json<K, W: Write>(matrix: &StochasticMatrix<K>, mut sink: W) -> Result<()> {
    let raw = MatrixJson {
        classes: matrix.classes(),
        columns: matrix.to_columns(),
    };
    serde_json::to_writer_pretty(&mut sink, &raw)?;
    writeln!(sink)?;
    sink.flush()?;
    Ok(())
}
