//! Trace tables and their CSV form.
//!
//! Floats are written as `{:.16e}`, seventeen significant digits, which
//! round-trips every `f64` exactly; a table read back from disk is
//! bit-identical to the one that was written.

use std::io::{Read, Write};

use ptc_core::formation::{FormationTrace, Point};
use ptc_core::sim::SimulationTrace;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected header: {0}")]
    Header(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(field: &str, row: usize) -> Result<f64, TableError> {
    field.parse().map_err(|_| TableError::Row {
        row,
        message: format!("not a number: {field:?}"),
    })
}

/// Consensus trace: `t,sigma,x_0,...,x_{n-1},V_maxmin,V_delta,mean`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusTable {
    pub times: Vec<f64>,
    pub sigma: Vec<usize>,
    pub states: Vec<Vec<f64>>,
    pub v_maxmin: Vec<f64>,
    pub v_delta: Vec<f64>,
    pub mean: Vec<f64>,
}

impl ConsensusTable {
    pub fn from_trace(trace: &SimulationTrace) -> Self {
        Self {
            times: trace.times.clone(),
            sigma: trace.sigma.clone(),
            states: trace.states.clone(),
            v_maxmin: trace.diagnostics.iter().map(|d| d.v_maxmin).collect(),
            v_delta: trace.diagnostics.iter().map(|d| d.v_delta).collect(),
            mean: trace.diagnostics.iter().map(|d| d.mean).collect(),
        }
    }

    pub fn agents(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn header(n: usize) -> Vec<String> {
        let mut h = vec!["t".to_string(), "sigma".to_string()];
        h.extend((0..n).map(|i| format!("x_{i}")));
        h.extend(["V_maxmin", "V_delta", "mean"].map(String::from));
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TableError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header(self.agents()))?;
        for k in 0..self.times.len() {
            let mut row = vec![num(self.times[k]), self.sigma[k].to_string()];
            row.extend(self.states[k].iter().map(|&x| num(x)));
            row.extend([num(self.v_maxmin[k]), num(self.v_delta[k]), num(self.mean[k])]);
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, TableError> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        if header.len() < 5 {
            return Err(TableError::Header(header.join(",")));
        }
        let n = header.len() - 5;
        if header != Self::header(n) {
            return Err(TableError::Header(header.join(",")));
        }
        let mut t = Self {
            times: Vec::new(),
            sigma: Vec::new(),
            states: Vec::new(),
            v_maxmin: Vec::new(),
            v_delta: Vec::new(),
            mean: Vec::new(),
        };
        for (row, record) in r.records().enumerate() {
            let record = record?;
            t.times.push(parse_f64(&record[0], row)?);
            t.sigma.push(record[1].parse().map_err(|_| TableError::Row {
                row,
                message: format!("bad topology index {:?}", &record[1]),
            })?);
            t.states.push(
                (0..n)
                    .map(|i| parse_f64(&record[2 + i], row))
                    .collect::<Result<_, _>>()?,
            );
            t.v_maxmin.push(parse_f64(&record[2 + n], row)?);
            t.v_delta.push(parse_f64(&record[3 + n], row)?);
            t.mean.push(parse_f64(&record[4 + n], row)?);
        }
        if t.times.is_empty() {
            return Err(TableError::Row {
                row: 0,
                message: "no samples".into(),
            });
        }
        Ok(t)
    }
}

/// Formation trace: `t,x_0,y_0,...,x_{n-1},y_{n-1},formation_error,connected`,
/// with `connected` written as 1 or 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationTable {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<Point>>,
    pub formation_error: Vec<f64>,
    pub connected: Vec<bool>,
}

impl FormationTable {
    pub fn from_trace(trace: &FormationTrace) -> Self {
        Self {
            times: trace.times.clone(),
            positions: trace.positions.clone(),
            formation_error: trace.formation_error.clone(),
            connected: trace.connected.clone(),
        }
    }

    pub fn agents(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    pub fn header(n: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for i in 0..n {
            h.push(format!("x_{i}"));
            h.push(format!("y_{i}"));
        }
        h.extend(["formation_error", "connected"].map(String::from));
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TableError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header(self.agents()))?;
        for k in 0..self.times.len() {
            let mut row = vec![num(self.times[k])];
            for p in &self.positions[k] {
                row.push(num(p[0]));
                row.push(num(p[1]));
            }
            row.push(num(self.formation_error[k]));
            row.push(if self.connected[k] { "1" } else { "0" }.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, TableError> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        if header.len() < 5 || (header.len() - 3) % 2 != 0 {
            return Err(TableError::Header(header.join(",")));
        }
        let n = (header.len() - 3) / 2;
        if header != Self::header(n) {
            return Err(TableError::Header(header.join(",")));
        }
        let mut t = Self {
            times: Vec::new(),
            positions: Vec::new(),
            formation_error: Vec::new(),
            connected: Vec::new(),
        };
        for (row, record) in r.records().enumerate() {
            let record = record?;
            t.times.push(parse_f64(&record[0], row)?);
            t.positions.push(
                (0..n)
                    .map(|i| Ok([parse_f64(&record[1 + 2 * i], row)?, parse_f64(&record[2 + 2 * i], row)?]))
                    .collect::<Result<_, TableError>>()?,
            );
            t.formation_error.push(parse_f64(&record[1 + 2 * n], row)?);
            t.connected.push(match &record[2 + 2 * n] {
                "1" => true,
                "0" => false,
                other => {
                    return Err(TableError::Row {
                        row,
                        message: format!("connected must be 0 or 1, got {other:?}"),
                    })
                }
            });
        }
        if t.times.is_empty() {
            return Err(TableError::Row {
                row: 0,
                message: "no samples".into(),
            });
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consensus_round_trip_is_exact() {
        let t = ConsensusTable {
            times: vec![0.0, 1e-4, 0.1 + 0.2],
            sigma: vec![0, 0, 3],
            states: vec![vec![1.0 / 3.0, -2.5e-300], vec![f64::MAX, -0.0], vec![5e-324, 7.0]],
            v_maxmin: vec![1.0, 2.0, 3.0],
            v_delta: vec![std::f64::consts::PI, 0.0, 1e300],
            mean: vec![6.926, 6.926, 6.926000000000001],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,sigma,x_0,x_1,V_maxmin,V_delta,mean\n"));
        let back = ConsensusTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        // bit patterns too, including the sign of zero
        assert_eq!(back.states[1][1].to_bits(), (-0.0f64).to_bits());
    }

    #[test]
    fn formation_round_trip_is_exact() {
        let t = FormationTable {
            times: vec![0.0, 0.5],
            positions: vec![vec![[1.0, 2.0], [0.1, 0.7]], vec![[1.0 / 7.0, 2.0], [3.0, -4.0]]],
            formation_error: vec![0.25, 1e-17],
            connected: vec![true, false],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x_0,y_0,x_1,y_1,formation_error,connected\n"));
        assert!(text.lines().nth(2).unwrap().ends_with(",0"));
        assert_eq!(FormationTable::read_csv(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(ConsensusTable::read_csv("t,sigma,x_0,V_maxmin,V_delta,mean\n".as_bytes()).is_err());
        assert!(ConsensusTable::read_csv("t,x_0,V_maxmin,V_delta,mean\n0,1,0,0,1\n".as_bytes()).is_err());
        assert!(ConsensusTable::read_csv("t,sigma,x_0,V_maxmin,V_delta,mean\n0,0,abc,0,0,0\n".as_bytes()).is_err());
        assert!(FormationTable::read_csv("t,x_0,y_0,formation_error,connected\n0,0,0,0,2\n".as_bytes()).is_err());
    }
}
