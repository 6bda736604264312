//! CSV traces.
//!
//! ODE traces have columns `t, omega_<i>..., delta_<l>...`; AFM traces have
//! `t, omega_<i>..., beta_<from>_<to>...`. AFM events go to a separate table
//! with columns `time, node, kind, value`.

use std::fs::File;
use std::path::Path;

use crate::afm::{AfmEvent, AfmTrace};
use crate::error::{Error, Result};
use crate::ode::OdeTrace;

/// A numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TraceTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn ode_table(trace: &OdeTrace) -> TraceTable {
    let n = trace.omega.first().map_or(0, |v| v.len());
    let m = trace.delta.first().map_or(0, |v| v.len());
    let mut columns = vec!["t".to_string()];
    columns.extend((0..n).map(|i| format!("omega_{i}")));
    columns.extend((0..m).map(|l| format!("delta_{l}")));
    let rows = (0..trace.len())
        .map(|k| {
            let mut row = Vec::with_capacity(1 + n + m);
            row.push(trace.times[k]);
            row.extend(trace.omega[k].iter());
            row.extend(trace.delta[k].iter());
            row
        })
        .collect();
    TraceTable { columns, rows }
}

pub fn afm_table(trace: &AfmTrace) -> TraceTable {
    let n = trace.omega.first().map_or(0, |v| v.len());
    let mut columns = vec!["t".to_string()];
    columns.extend((0..n).map(|i| format!("omega_{i}")));
    columns.extend(trace.links.iter().map(|l| format!("beta_{}", l.label())));
    let rows = trace
        .times
        .iter()
        .zip(trace.omega.iter().zip(&trace.beta))
        .map(|(&t, (w, b))| {
            let mut row = Vec::with_capacity(1 + w.len() + b.len());
            row.push(t);
            row.extend(w.iter());
            row.extend(b.iter().map(|&x| x as f64));
            row
        })
        .collect();
    TraceTable { columns, rows }
}

pub fn write_table(table: &TraceTable, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        if row.len() != table.columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "row has {} values for {} columns",
                row.len(),
                table.columns.len()
            )));
        }
        w.write_record(row.iter().map(|&x| format_float(x)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_table(path: &Path) -> Result<TraceTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    message: format!("row {}: `{s}` is not a number", line + 1),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(TraceTable { columns, rows })
}

pub fn write_ode_trace(trace: &OdeTrace, path: &Path) -> Result<()> {
    write_table(&ode_table(trace), path)
}

pub fn write_afm_trace(trace: &AfmTrace, path: &Path) -> Result<()> {
    write_table(&afm_table(trace), path)
}

pub fn write_events(events: &[AfmEvent], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["time", "node", "kind", "value"])?;
    for e in events {
        w.write_record([
            format_float(e.time),
            e.node.to_string(),
            e.kind.as_str().to_string(),
            format_float(e.value),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::DenseVector;

    #[test]
    fn format_round_trips() {
        for x in [
            0.0,
            1.0,
            -2.5,
            0.1,
            1e-300,
            3.0e20,
            1.0 + 1e-15,
            -7e-5,
            f64::MIN_POSITIVE,
        ] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x, "{x}");
        }
        assert_eq!(format_float(0.25), "0.25");
    }

    #[test]
    fn ode_columns_and_round_trip() {
        let v = |xs: &[f64]| DenseVector::from_vec(xs.to_vec());
        let trace = OdeTrace {
            times: vec![0.0, 0.5],
            theta_bar: vec![v(&[0.0; 3]); 2],
            integral: vec![v(&[0.0; 3]); 2],
            omega: vec![v(&[1.0, 1.1, 0.9]), v(&[1.0 + 1e-12, 1.0, 1.0 / 3.0])],
            delta: vec![v(&[0.0, 0.0]), v(&[1e-9, -2.0])],
        };
        let t = ode_table(&trace);
        assert_eq!(
            t.columns,
            ["t", "omega_0", "omega_1", "omega_2", "delta_0", "delta_1"]
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ode.csv");
        write_table(&t, &path).unwrap();
        assert_eq!(read_table(&path).unwrap(), t);
    }

    #[test]
    fn empty_trace_is_header_only() {
        let t = TraceTable {
            columns: vec!["t".into(), "omega_0".into()],
            rows: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        write_table(&t, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "t,omega_0\n");
        assert_eq!(read_table(&path).unwrap(), t);
    }

    #[test]
    fn bad_number_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t,x\n0,abc\n").unwrap();
        assert!(matches!(read_table(&path), Err(Error::Parse { .. })));
        assert!(read_table(&dir.path().join("missing.csv"))
            .unwrap_err()
            .is_io());
    }
}
