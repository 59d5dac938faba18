use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::SolverTrace;

pub const TRACE_CSV_HEADER: &str = "n,D_n,lambda_n,elapsed_seconds,prox_calls,f_evals";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub n: usize,
    pub d_n: f64,
    pub lambda_n: f64,
    pub elapsed_seconds: f64,
    /// Cumulative non-diagnostic QP subproblems.
    pub prox_calls: usize,
    /// Cumulative bifunction evaluations spent by the method itself.
    pub f_evals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Converged,
    MaxIter,
    Stalled,
}

impl TerminalStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminalStatus::Converged => "converged",
            TerminalStatus::MaxIter => "max_iter",
            TerminalStatus::Stalled => "stalled",
        }
    }
}

impl std::fmt::Display for TerminalStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl SolverTrace {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(TRACE_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.n,
                fmt_f64(r.d_n),
                fmt_f64(r.lambda_n),
                fmt_f64(r.elapsed_seconds),
                r.prox_calls,
                r.f_evals
            );
        }
        out
    }
}

/// Parses a trace CSV written by [`SolverTrace::write_csv`].
pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRecord>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == TRACE_CSV_HEADER => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(format!(
                    "line {}: expected 6 fields, found {}",
                    i + 2,
                    fields.len()
                ));
            }
            let int = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| format!("line {}: {e}", i + 2))
            };
            let float = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("line {}: {e}", i + 2))
            };
            Ok(TraceRecord {
                n: int(fields[0])?,
                d_n: float(fields[1])?,
                lambda_n: float(fields[2])?,
                elapsed_seconds: float(fields[3])?,
                prox_calls: int(fields[4])?,
                f_evals: int(fields[5])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::Method;
    use crate::Vector;
    use proptest::prelude::*;

    fn trace_of(records: Vec<TraceRecord>) -> SolverTrace {
        SolverTrace {
            method: Method::Egra,
            records,
            terminal_status: TerminalStatus::MaxIter,
            final_point: Vector::zeros(1),
            diagnostic_prox_calls: 0,
            start_projected: false,
            iterates: Vec::new(),
            averages: Vec::new(),
        }
    }

    proptest! {
        #[test]
        fn csv_round_trips_exactly(values in proptest::collection::vec((any::<f64>(), any::<f64>(), 0.0f64..1e6), 1..20)) {
            let records: Vec<TraceRecord> = values
                .iter()
                .enumerate()
                .filter(|(_, (d, l, _))| d.is_finite() && l.is_finite())
                .map(|(n, (d, l, t))| TraceRecord { n, d_n: d.abs(), lambda_n: *l, elapsed_seconds: *t, prox_calls: n, f_evals: 3 * n })
                .collect();
            let trace = trace_of(records.clone());
            let parsed = parse_trace_csv(&trace.to_csv()).unwrap();
            prop_assert_eq!(parsed, records);
        }
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(parse_trace_csv("a,b\n").is_err());
        assert!(parse_trace_csv(&format!("{TRACE_CSV_HEADER}\n1,2\n")).is_err());
    }
}
