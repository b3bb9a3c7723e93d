//! Plot-ready tab-separated tables.
//!
//! Rate columns never contain zeros, so logarithmic axes work directly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fitter::ResidualRow;
use crate::io::{sci, write_file};
use crate::rate_model::RateCurve;

/// Columns of equal length under a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Column>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numbers(Vec<f64>),
    Text(Vec<String>),
}

impl Column {
    fn len(&self) -> usize {
        match self {
            Column::Numbers(v) => v.len(),
            Column::Text(v) => v.len(),
        }
    }
}

impl Table {
    pub fn new() -> Self {
        Table { headers: Vec::new(), columns: Vec::new() }
    }

    pub fn push(&mut self, header: &str, column: Column) -> Result<()> {
        if let Some(first) = self.columns.first() {
            if first.len() != column.len() {
                return Err(Error::Contract(format!(
                    "column '{header}' has {} rows, table has {}",
                    column.len(),
                    first.len()
                )));
            }
        }
        self.headers.push(header.to_string());
        self.columns.push(column);
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn column(&self, header: &str) -> Option<&[f64]> {
        let i = self.headers.iter().position(|h| h == header)?;
        match &self.columns[i] {
            Column::Numbers(v) => Some(v),
            Column::Text(_) => None,
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut s = self.headers.join("\t");
        s.push('\n');
        for r in 0..self.rows() {
            let cells: Vec<String> = self
                .columns
                .iter()
                .map(|c| match c {
                    Column::Numbers(v) => sci(v[r]),
                    Column::Text(v) => v[r].clone(),
                })
                .collect();
            let _ = writeln!(s, "{}", cells.join("\t"));
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_tsv())
    }
}

impl Default for Table {
    fn default() -> Self {
        Self::new()
    }
}

/// Replace non-positive entries by the smallest positive entry.
pub fn clamp_positive(values: &mut [f64]) {
    let floor = values.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { f64::MIN_POSITIVE };
    for v in values.iter_mut() {
        if !(*v > 0.0) {
            *v = floor;
        }
    }
}

/// `phi_x_uPhi0, rate_per_us` and optionally the two peak contributions.
pub fn model_table(curve: &RateCurve, decompose: bool) -> Table {
    let mut t = Table::new();
    let col = |f: &dyn Fn(&crate::rate_model::CurvePoint) -> f64| {
        let mut v: Vec<f64> = curve.points.iter().map(f).collect();
        clamp_positive(&mut v);
        Column::Numbers(v)
    };
    let phi = Column::Numbers(curve.points.iter().map(|p| p.phi_x.micro_phi0()).collect());
    let rate = col(&|p| p.rate.per_us());
    let zeroth = col(&|p| p.zeroth.per_us());
    let first = col(&|p| p.first.per_us());
    t.push("phi_x_uPhi0", phi).expect("fresh table");
    t.push("rate_per_us", rate).expect("equal length");
    if decompose {
        t.push("zeroth_per_us", zeroth).expect("equal length");
        t.push("first_per_us", first).expect("equal length");
    }
    t
}

/// Data against model, with `log10(data/model)`.
pub fn residual_table(rows: &[ResidualRow]) -> Table {
    let mut t = Table::new();
    let mut model: Vec<f64> = rows.iter().map(|r| r.model.per_us()).collect();
    clamp_positive(&mut model);
    let data: Vec<f64> = rows.iter().map(|r| r.data.per_us()).collect();
    let ratio: Vec<f64> = data.iter().zip(&model).map(|(d, m)| (d / m).log10()).collect();
    let pushes = [
        ("phi_x_uPhi0", Column::Numbers(rows.iter().map(|r| r.phi_x.micro_phi0()).collect())),
        ("well", Column::Text(rows.iter().map(|r| r.well.tag().to_string()).collect())),
        ("data_per_us", Column::Numbers(data)),
        ("model_per_us", Column::Numbers(model)),
        ("log10_ratio", Column::Numbers(ratio)),
        ("weighted_residual", Column::Numbers(rows.iter().map(|r| r.residual).collect())),
    ];
    for (h, c) in pushes {
        t.push(h, c).expect("equal length");
    }
    t
}

/// Several curves on a shared bias grid, one rate column per label.
pub fn family_table(curves: &[(String, RateCurve)]) -> Result<Table> {
    let mut t = Table::new();
    let Some((_, first)) = curves.first() else { return Ok(t) };
    let grid: Vec<f64> = first.points.iter().map(|p| p.phi_x.micro_phi0()).collect();
    t.push("phi_x_uPhi0", Column::Numbers(grid.clone()))?;
    for (label, c) in curves {
        if c.points.iter().map(|p| p.phi_x.micro_phi0()).ne(grid.iter().copied()) {
            return Err(Error::Contract(format!("curve '{label}' is on a different bias grid")));
        }
        let mut v = c.rates();
        clamp_positive(&mut v);
        t.push(label, Column::Numbers(v))?;
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamping_uses_smallest_positive() {
        let mut v = vec![0.0, 3.0, 1e-5, -1.0];
        clamp_positive(&mut v);
        assert_eq!(v, vec![1e-5, 3.0, 1e-5, 1e-5]);
    }

    #[test]
    fn mismatched_column_is_rejected() {
        let mut t = Table::new();
        t.push("a", Column::Numbers(vec![1.0])).unwrap();
        assert!(t.push("b", Column::Numbers(vec![])).is_err());
    }
}
