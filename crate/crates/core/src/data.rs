//! Row-oriented dataset of `(S, M, Y, X)` tuples and its CSV form.
//!
//! CSV schema: a header row naming `S`, `M`, `Y`, `X1`..`Xp` (any order),
//! where `X1` is the intercept column of ones.

use rand::Rng;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{QmedError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    s: Vec<f64>,
    m: Vec<f64>,
    y: Vec<f64>,
    x: Vec<Vec<f64>>,
}

impl Dataset {
    /// Validates and assembles a dataset. Every `x` row must start with the
    /// intercept 1 and `n > p` must hold.
    pub fn new(s: Vec<f64>, m: Vec<f64>, y: Vec<f64>, x: Vec<Vec<f64>>) -> Result<Self> {
        let n = s.len();
        if m.len() != n || y.len() != n || x.len() != n {
            return Err(QmedError::InvalidArgument("S, M, Y and X must have equal length".into()));
        }
        let p = x.first().map(Vec::len).unwrap_or(0);
        if p == 0 {
            return Err(QmedError::InvalidArgument("at least one covariate (the intercept) is required".into()));
        }
        if n <= p {
            return Err(QmedError::InvalidArgument(format!("need n > p, got n = {n}, p = {p}")));
        }
        for (i, row) in x.iter().enumerate() {
            if row.len() != p {
                return Err(QmedError::Data { row: i + 1, column: "X".into(), message: "ragged covariate row".into() });
            }
            if row[0] != 1.0 {
                return Err(QmedError::Data { row: i + 1, column: "X1".into(), message: "intercept column must be 1".into() });
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(QmedError::Data { row: i + 1, column: format!("X{}", j + 1), message: "non-finite value".into() });
            }
        }
        for (name, col) in [("S", &s), ("M", &m), ("Y", &y)] {
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(QmedError::Data { row: i + 1, column: name.into(), message: "non-finite value".into() });
            }
        }
        Ok(Self { s, m, y, x })
    }

    pub fn n(&self) -> usize {
        self.s.len()
    }

    pub fn p(&self) -> usize {
        self.x[0].len()
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn row(&self, i: usize) -> (f64, f64, f64, &[f64]) {
        (self.s[i], self.m[i], self.y[i], &self.x[i])
    }

    /// Column by role.
    pub fn column(&self, role: Role) -> &[f64] {
        match role {
            Role::S => &self.s,
            Role::M => &self.m,
            Role::Y => &self.y,
        }
    }

    /// Dataset made of the given row indices (repeats allowed).
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            s: idx.iter().map(|&i| self.s[i]).collect(),
            m: idx.iter().map(|&i| self.m[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
        }
    }

    /// Nonparametric bootstrap resample of whole rows.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let n = self.n();
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        self.select(&idx)
    }

    /// Copy with the mediator column replaced.
    pub fn with_mediator(&self, m: Vec<f64>) -> Result<Self> {
        Self::new(self.s.clone(), m, self.y.clone(), self.x.clone())
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let table = NumericTable::from_reader(reader)?;
        let s = table.column("S")?;
        let m = table.column("M")?;
        let y = table.column("Y")?;
        let x = table.covariates()?;
        Self::new(s, m, y, x)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["S".to_string(), "M".to_string(), "Y".to_string()];
        header.extend((1..=self.p()).map(|j| format!("X{j}")));
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![fmt_num(self.s[i]), fmt_num(self.m[i]), fmt_num(self.y[i])];
            rec.extend(self.x[i].iter().map(|&v| fmt_num(v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip decimal representation.
pub(crate) fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Role {
    S,
    M,
    Y,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::S => "S",
            Role::M => "M",
            Role::Y => "Y",
        }
    }
}

/// A fully numeric CSV table with a header, used for both the dataset
/// schema and the multi-mediator screening schema.
#[derive(Debug, Clone)]
pub struct NumericTable {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl NumericTable {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if headers.is_empty() {
            return Err(QmedError::Data { row: 0, column: String::new(), message: "empty header".into() });
        }
        let mut columns = vec![Vec::new(); headers.len()];
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            // data rows are reported 1-based after the header
            let row = i + 1;
            if rec.len() != headers.len() {
                return Err(QmedError::Data {
                    row,
                    column: String::new(),
                    message: format!("expected {} fields, found {}", headers.len(), rec.len()),
                });
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| QmedError::Data {
                    row,
                    column: headers[j].clone(),
                    message: format!("cannot parse '{field}' as a number"),
                })?;
                columns[j].push(v);
            }
        }
        Ok(Self { headers, columns })
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        self.index_of(name)
            .map(|j| self.columns[j].clone())
            .ok_or_else(|| QmedError::Data { row: 0, column: name.into(), message: "missing column".into() })
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map(Vec::len).unwrap_or(0)
    }

    /// `X1..Xp` assembled row-wise; the sequence must be contiguous from `X1`.
    pub fn covariates(&self) -> Result<Vec<Vec<f64>>> {
        let mut cols = Vec::new();
        for j in 1.. {
            match self.index_of(&format!("X{j}")) {
                Some(k) => cols.push(k),
                None => break,
            }
        }
        if cols.is_empty() {
            return Err(QmedError::Data { row: 0, column: "X1".into(), message: "missing intercept column".into() });
        }
        Ok((0..self.n_rows()).map(|i| cols.iter().map(|&k| self.columns[k][i]).collect()).collect())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.headers)?;
        for i in 0..self.n_rows() {
            w.write_record(self.columns.iter().map(|c| fmt_num(c[i])))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn is_covariate(name: &str) -> bool {
        name.strip_prefix('X').is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "S,M,Y,X1,X2\n0.1,0.2,1.5,1,0.3\n-0.4,0.0,0.2,1,-0.1\n1.0,2.0,0.7,1,0.0\n";

    #[test]
    fn parses_schema() {
        let d = Dataset::from_csv_reader(CSV.as_bytes()).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.p(), 2);
        assert_eq!(d.row(1), (-0.4, 0.0, 0.2, &[1.0, -0.1][..]));
    }

    #[test]
    fn csv_round_trip() {
        let d = Dataset::from_csv_reader(CSV.as_bytes()).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(Dataset::from_csv_reader(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn reports_bad_cell() {
        let bad = "S,M,Y,X1\n0.1,0.2,1.5,1\n0.3,abc,1,1\n1,1,1,1\n";
        match Dataset::from_csv_reader(bad.as_bytes()) {
            Err(QmedError::Data { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "M");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_intercept() {
        let bad = "S,M,Y,X1\n0.1,0.2,1.5,2\n0.3,1,1,1\n1,1,1,1\n";
        assert!(matches!(Dataset::from_csv_reader(bad.as_bytes()), Err(QmedError::Data { .. })));
        let missing = "S,M,Y\n1,2,3\n";
        assert!(Dataset::from_csv_reader(missing.as_bytes()).is_err());
    }

    #[test]
    fn requires_more_rows_than_covariates() {
        let x = vec![vec![1.0, 0.0]; 2];
        assert!(Dataset::new(vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], x).is_err());
    }
}
