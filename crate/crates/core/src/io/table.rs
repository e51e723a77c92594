use serde_json::json;

use crate::error::{validation, Error, Result};
use crate::evolution::Trajectory;

/// 17 significant digits: enough for an exact f64 round trip.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Named numeric columns. Trajectory tables have `t` first with strictly
/// increasing values.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(format!("csv: {e}"))
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(validation(format!("row has {} values for {} columns", row.len(), self.columns.len())));
        }
        if let Some(k) = row.iter().position(|v| !v.is_finite()) {
            return Err(validation(format!("non-finite value in column `{}`", self.columns[k])));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Columns: t, Re/Im of the upper triangle of ρ (row-major), x y z for
    /// two-level states, w = Tr ρ for unnormalized trajectories, populations,
    /// purity, then one overlap column per registered reference.
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        let n = traj.dim();
        let mut cols = vec!["t".to_string()];
        for i in 0..n {
            for j in i..n {
                cols.push(format!("re_rho_{i}_{j}"));
                cols.push(format!("im_rho_{i}_{j}"));
            }
        }
        if n == 2 {
            cols.extend(["x", "y", "z"].map(String::from));
        }
        if !traj.is_normalized() {
            cols.push("w".into());
        }
        cols.extend((0..n).map(|k| format!("p{k}")));
        cols.push("purity".into());
        cols.extend(traj.references().iter().map(|r| format!("overlap_{}", r.name)));
        let mut table = Table::new(cols);
        for (i, (&t, s)) in traj.times().iter().zip(traj.states()).enumerate() {
            let obs = traj.observables(i);
            let mut row = vec![t];
            for a in 0..n {
                for b in a..n {
                    row.push(s[(a, b)].re);
                    row.push(s[(a, b)].im);
                }
            }
            if let Some(b) = obs.bloch {
                row.extend(b);
            }
            if !traj.is_normalized() {
                row.push(obs.trace);
            }
            row.extend(&obs.populations);
            row.push(obs.purity);
            row.extend(&obs.overlaps);
            table.push_row(row)?;
        }
        Ok(table)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// Checks the trajectory-file invariants.
    pub fn check_trajectory(&self) -> Result<()> {
        if self.columns.first().map(String::as_str) != Some("t") {
            return Err(validation("first column must be `t`"));
        }
        if self.rows.iter().any(|r| r.len() != self.columns.len()) {
            return Err(validation("column count differs between rows"));
        }
        if self.rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(validation("non-finite value"));
        }
        if self.rows.windows(2).any(|w| !(w[0][0] < w[1][0])) {
            return Err(validation("times must be strictly increasing"));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|&v| format_value(v))).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let columns: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
        let mut table = Table::new(columns);
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let row = rec
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Io(format!("row {}: `{f}`: {e}", line + 1))))
                .collect::<Result<Vec<_>>>()?;
            table.push_row(row)?;
        }
        Ok(table)
    }

    /// `{"columns": [...], "rows": [[...], ...]}`
    pub fn to_json(&self) -> serde_json::Value {
        json!({ "columns": self.columns, "rows": self.rows })
    }
}
