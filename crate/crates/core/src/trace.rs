//! Trace files: one row per iterate `t = 0..=T`.
//!
//! CSV traces have the header `iter,loss,grad_norm,moment_gap,randomized`
//! and print floats with 17 significant digits, so a written trace parses
//! back bit-identically. JSON traces hold the same rows as an array of
//! objects under `"rows"`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::RunRecord;

pub const CSV_HEADER: &str = "iter,loss,grad_norm,moment_gap,randomized";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Csv { line: u64, msg: String },
    #[error("json: {0}")]
    Json(String),
    #[error("row {row}: expected iteration {row}, found {found}")]
    Sequence { row: usize, found: u64 },
    #[error("row {row}: {what} is {value}, JSON traces need finite values")]
    NonFinite {
        row: usize,
        what: &'static str,
        value: f64,
    },
    #[error("column lengths differ: {losses} losses, {grad_norms} grad norms, {moment_gaps} moment gaps")]
    Ragged {
        losses: usize,
        grad_norms: usize,
        moment_gaps: usize,
    },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRow {
    pub iter: u64,
    pub loss: f64,
    pub grad_norm: f64,
    pub moment_gap: f64,
    pub randomized: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonTrace {
    rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    Csv,
    Json,
}

impl TraceFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

impl std::str::FromStr for TraceFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(format!("unknown trace format {s:?} (expected csv or json)")),
        }
    }
}

pub fn rows(rec: &RunRecord) -> Result<Vec<TraceRow>, TraceError> {
    let n = rec.losses.len();
    if rec.grad_norms.len() != n || rec.moment_gaps.len() != n {
        return Err(TraceError::Ragged {
            losses: n,
            grad_norms: rec.grad_norms.len(),
            moment_gaps: rec.moment_gaps.len(),
        });
    }
    Ok((0..n)
        .map(|t| TraceRow {
            iter: t as u64,
            loss: rec.losses[t],
            grad_norm: rec.grad_norms[t],
            moment_gap: rec.moment_gaps[t],
            randomized: rec.randomized_at(t),
        })
        .collect())
}

fn from_rows(rows: Vec<TraceRow>) -> Result<RunRecord, TraceError> {
    let mut rec = RunRecord::default();
    for (i, row) in rows.into_iter().enumerate() {
        if row.iter != i as u64 {
            return Err(TraceError::Sequence {
                row: i,
                found: row.iter,
            });
        }
        rec.losses.push(row.loss);
        rec.grad_norms.push(row.grad_norm);
        rec.moment_gaps.push(row.moment_gap);
        if row.randomized {
            rec.randomization_events.push(i);
        }
    }
    Ok(rec)
}

pub fn write_trace_csv(rec: &RunRecord) -> Result<String, TraceError> {
    let mut out = String::with_capacity(64 * (rec.losses.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows(rec)? {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{}",
            r.iter, r.loss, r.grad_norm, r.moment_gap, r.randomized as u8
        )
        .expect("writing to a String");
    }
    Ok(out)
}

pub fn parse_trace_csv(text: &str) -> Result<RunRecord, TraceError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_error(&e))?;
    let expected: Vec<&str> = CSV_HEADER.split(',').collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(TraceError::Csv {
            line: 1,
            msg: format!("expected header {CSV_HEADER:?}"),
        });
    }
    let mut parsed = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or_default();
        let float = |i: usize| {
            field(i).parse::<f64>().map_err(|e| TraceError::Csv {
                line,
                msg: format!("column {}: {e}", expected[i]),
            })
        };
        let iter = field(0).parse::<u64>().map_err(|e| TraceError::Csv {
            line,
            msg: format!("column iter: {e}"),
        })?;
        let randomized = match field(4) {
            "0" => false,
            "1" => true,
            other => {
                return Err(TraceError::Csv {
                    line,
                    msg: format!("randomized must be 0 or 1, found {other:?}"),
                })
            }
        };
        parsed.push(TraceRow {
            iter,
            loss: float(1)?,
            grad_norm: float(2)?,
            moment_gap: float(3)?,
            randomized,
        });
    }
    from_rows(parsed)
}

fn csv_error(e: &csv::Error) -> TraceError {
    TraceError::Csv {
        line: e.position().map_or(0, |p| p.line()),
        msg: e.to_string(),
    }
}

pub fn write_trace_json(rec: &RunRecord) -> Result<String, TraceError> {
    let rows = rows(rec)?;
    for (i, r) in rows.iter().enumerate() {
        for (what, value) in [
            ("loss", r.loss),
            ("grad_norm", r.grad_norm),
            ("moment_gap", r.moment_gap),
        ] {
            if !value.is_finite() {
                return Err(TraceError::NonFinite {
                    row: i,
                    what,
                    value,
                });
            }
        }
    }
    let mut out = serde_json::to_string_pretty(&JsonTrace { rows })
        .map_err(|e| TraceError::Json(e.to_string()))?;
    out.push('\n');
    Ok(out)
}

pub fn parse_trace_json(text: &str) -> Result<RunRecord, TraceError> {
    let trace: JsonTrace =
        serde_json::from_str(text).map_err(|e| TraceError::Json(e.to_string()))?;
    from_rows(trace.rows)
}

pub fn write_trace(rec: &RunRecord, format: TraceFormat) -> Result<String, TraceError> {
    match format {
        TraceFormat::Csv => write_trace_csv(rec),
        TraceFormat::Json => write_trace_json(rec),
    }
}

pub fn parse_trace(text: &str, format: TraceFormat) -> Result<RunRecord, TraceError> {
    match format {
        TraceFormat::Csv => parse_trace_csv(text),
        TraceFormat::Json => parse_trace_json(text),
    }
}

/// Reads a trace, picking the format from the file extension.
pub fn load_trace(path: &Path) -> Result<RunRecord, TraceError> {
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => TraceFormat::Json,
        _ => TraceFormat::Csv,
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| TraceError::Io(format!("{}: {e}", path.display())))?;
    parse_trace(&text, format)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> RunRecord {
        RunRecord {
            losses: vec![1.0, 0.5, 0.1 + 0.2],
            grad_norms: vec![2.0, 1.0, 1e-300],
            moment_gaps: vec![0.0, 0.25, 5e-324],
            randomization_events: vec![2],
            wall_time: 0.0,
        }
    }

    #[test]
    fn csv_layout() {
        let text = write_trace_csv(&sample()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert_eq!(
            lines[1],
            "0,1.0000000000000000e0,2.0000000000000000e0,0.0000000000000000e0,0"
        );
        assert!(lines[3].ends_with(",1"));
    }

    #[test]
    fn round_trips() {
        let rec = sample();
        assert_eq!(
            parse_trace_csv(&write_trace_csv(&rec).unwrap()).unwrap(),
            rec
        );
        assert_eq!(
            parse_trace_json(&write_trace_json(&rec).unwrap()).unwrap(),
            rec
        );
    }

    #[test]
    fn empty_trace_is_header_only() {
        let text = write_trace_csv(&RunRecord::default()).unwrap();
        assert_eq!(text, format!("{CSV_HEADER}\n"));
        assert_eq!(parse_trace_csv(&text).unwrap(), RunRecord::default());
    }

    #[test]
    fn rejects_malformed_csv() {
        assert!(matches!(
            parse_trace_csv("iter,loss\n0,1\n"),
            Err(TraceError::Csv { line: 1, .. })
        ));
        let bad_flag = format!("{CSV_HEADER}\n0,1,1,0,2\n");
        assert!(matches!(
            parse_trace_csv(&bad_flag),
            Err(TraceError::Csv { line: 2, .. })
        ));
        let gap = format!("{CSV_HEADER}\n0,1,1,0,0\n2,1,1,0,0\n");
        assert_eq!(
            parse_trace_csv(&gap),
            Err(TraceError::Sequence { row: 1, found: 2 })
        );
        let short = format!("{CSV_HEADER}\n0,1,1\n");
        assert!(parse_trace_csv(&short).is_err());
        let text = format!("{CSV_HEADER}\n0,abc,1,0,0\n");
        assert!(matches!(
            parse_trace_csv(&text),
            Err(TraceError::Csv { line: 2, .. })
        ));
    }

    #[test]
    fn json_refuses_non_finite_and_unknown_fields() {
        let mut rec = sample();
        rec.grad_norms[1] = f64::INFINITY;
        assert!(matches!(
            write_trace_json(&rec),
            Err(TraceError::NonFinite { row: 1, .. })
        ));
        assert!(parse_trace_json(r#"{"rows":[],"extra":1}"#).is_err());
        assert_eq!(
            parse_trace_json(r#"{"rows":[]}"#).unwrap(),
            RunRecord::default()
        );
    }

    #[test]
    fn ragged_record_is_rejected() {
        let mut rec = sample();
        rec.grad_norms.pop();
        assert!(matches!(
            write_trace_csv(&rec),
            Err(TraceError::Ragged { .. })
        ));
    }

    #[test]
    fn files_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        for format in [TraceFormat::Csv, TraceFormat::Json] {
            let path = dir.path().join(format!("t.{}", format.extension()));
            std::fs::write(&path, write_trace(&sample(), format).unwrap()).unwrap();
            assert_eq!(load_trace(&path).unwrap(), sample());
        }
    }

    fn record() -> impl Strategy<Value = RunRecord> {
        (1usize..30).prop_flat_map(|n| {
            let col = || {
                prop::collection::vec(
                    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
                    n,
                )
            };
            (col(), col(), col(), prop::collection::vec(any::<bool>(), n)).prop_map(
                |(l, g, m, flags)| RunRecord {
                    losses: l,
                    grad_norms: g,
                    moment_gaps: m,
                    randomization_events: flags
                        .iter()
                        .enumerate()
                        .skip(1)
                        .filter(|(_, &f)| f)
                        .map(|(i, _)| i)
                        .collect(),
                    wall_time: 0.0,
                },
            )
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(rec in record()) {
            prop_assert_eq!(parse_trace_csv(&write_trace_csv(&rec).unwrap()).unwrap(), rec);
        }

        #[test]
        fn json_round_trip_is_exact(rec in record()) {
            prop_assert_eq!(parse_trace_json(&write_trace_json(&rec).unwrap()).unwrap(), rec);
        }
    }
}
