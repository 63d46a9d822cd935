//! Date-indexed frame of named numeric columns.
//!
//! Cells are `Option<f64>`: indicator warm-up positions stay explicitly
//! missing rather than silently zero, and CSV export writes them as empty
//! cells.

use std::io::Write;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Named columns aligned to a shared date index.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    dates: Vec<NaiveDate>,
    names: Vec<String>,
    columns: Vec<Vec<Option<f64>>>,
}

impl FeatureFrame {
    pub fn new(dates: Vec<NaiveDate>) -> FeatureFrame {
        FeatureFrame {
            dates,
            names: Vec::new(),
            columns: Vec::new(),
        }
    }

    /// Appends a column; its length must match the date index.
    pub fn push_column(&mut self, name: &str, values: Vec<Option<f64>>) -> Result<()> {
        if values.len() != self.dates.len() {
            return Err(Error::Alignment(format!(
                "column '{}' has {} values for {} dates",
                name,
                values.len(),
                self.dates.len()
            )));
        }
        if self.names.iter().any(|n| n == name) {
            return Err(Error::Input(format!("duplicate column '{name}'")));
        }
        self.names.push(name.to_string());
        self.columns.push(values);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_columns(&self) -> usize {
        self.names.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&[Option<f64>]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        self.columns[col][row]
    }

    /// True when every column is populated at `row`.
    pub fn row_complete(&self, row: usize) -> bool {
        self.columns.iter().all(|c| c[row].is_some())
    }

    /// Index of the first row from which every column is populated through
    /// the end of the frame, or `None` if no such suffix exists.
    pub fn complete_from(&self) -> Option<usize> {
        let n = self.len();
        let mut start = 0;
        for row in 0..n {
            if !self.row_complete(row) {
                start = row + 1;
            }
        }
        if start < n {
            Some(start)
        } else {
            None
        }
    }

    /// New frame holding rows `[from, to)`.
    pub fn slice(&self, from: usize, to: usize) -> FeatureFrame {
        FeatureFrame {
            dates: self.dates[from..to].to_vec(),
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c[from..to].to_vec()).collect(),
        }
    }

    /// New frame keeping only the rows at `keep` (indices must be ascending).
    pub fn select_rows(&self, keep: &[usize]) -> FeatureFrame {
        FeatureFrame {
            dates: keep.iter().map(|&i| self.dates[i]).collect(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| keep.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }

    /// Dense matrix of all cells; fails if any cell is missing.
    pub fn to_matrix(&self) -> Result<Mat> {
        let mut data = Vec::with_capacity(self.len() * self.n_columns());
        for row in 0..self.len() {
            for col in &self.columns {
                match col[row] {
                    Some(v) => data.push(v),
                    None => {
                        return Err(Error::Input(format!(
                            "missing value at row {} ({})",
                            row, self.dates[row]
                        )))
                    }
                }
            }
        }
        Mat::from_vec(self.len(), self.n_columns(), data)
    }

    /// Writes a date-indexed CSV with empty cells for missing values.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "Date")?;
        for name in &self.names {
            write!(w, ",{name}")?;
        }
        writeln!(w)?;
        for row in 0..self.len() {
            write!(w, "{}", self.dates[row])?;
            for col in &self.columns {
                match col[row] {
                    Some(v) => write!(w, ",{v}")?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn sample() -> FeatureFrame {
        let mut f = FeatureFrame::new(vec![d("2014-01-02"), d("2014-01-03"), d("2014-01-06")]);
        f.push_column("a", vec![None, Some(1.0), Some(2.0)])
            .unwrap();
        f.push_column("b", vec![Some(0.5), Some(1.5), Some(2.5)])
            .unwrap();
        f
    }

    #[test]
    fn complete_suffix() {
        let f = sample();
        assert_eq!(f.complete_from(), Some(1));
        let g = f.slice(1, 3);
        assert_eq!(g.len(), 2);
        assert!(g.row_complete(0));
    }

    #[test]
    fn length_mismatch_rejected() {
        let mut f = FeatureFrame::new(vec![d("2014-01-02")]);
        assert!(f.push_column("a", vec![Some(1.0), Some(2.0)]).is_err());
    }

    #[test]
    fn csv_has_empty_cell_for_missing() {
        let f = sample();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("Date,a,b\n"));
        assert!(text.contains("2014-01-02,,0.5"));
    }

    #[test]
    fn matrix_fails_on_missing() {
        let f = sample();
        assert!(f.to_matrix().is_err());
        assert!(f.slice(1, 3).to_matrix().is_ok());
    }
}
