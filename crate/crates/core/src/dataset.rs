//! Tabular datasets: named input columns paired with 32 target temperatures.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::N_POINTS;

/// Where a row's targets came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowSource {
    Simulated,
    Predicted,
}

impl RowSource {
    pub fn as_str(self) -> &'static str {
        match self {
            RowSource::Simulated => "simulated",
            RowSource::Predicted => "predicted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "simulated" => Some(RowSource::Simulated),
            "predicted" => Some(RowSource::Predicted),
            _ => None,
        }
    }
}

/// Column name of target point `i` (`t00`..`t31`).
pub fn target_name(i: usize) -> String {
    format!("t{i:02}")
}

/// True for slab-position design columns (`s1`, `s2`, ...).
pub fn is_design_column(name: &str) -> bool {
    name.len() > 1 && name.starts_with('s') && name[1..].bytes().all(|b| b.is_ascii_digit())
}

/// Row-major inputs (`n × p`) and targets (`n × 32`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    input_names: Vec<String>,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    sources: Vec<RowSource>,
}

impl Dataset {
    pub fn new(
        input_names: Vec<String>,
        inputs: Vec<Vec<f64>>,
        targets: Vec<[f64; N_POINTS]>,
        sources: Vec<RowSource>,
    ) -> Result<Self> {
        let p = input_names.len();
        let mut flat = Vec::with_capacity(inputs.len() * p);
        for (i, row) in inputs.iter().enumerate() {
            if row.len() != p {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} inputs, expected {p}",
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        Self::from_flat(input_names, flat, targets.concat(), sources)
    }

    pub fn from_flat(input_names: Vec<String>, inputs: Vec<f64>, targets: Vec<f64>, sources: Vec<RowSource>) -> Result<Self> {
        let n = sources.len();
        let p = input_names.len();
        if p == 0 {
            return Err(Error::InvalidArgument("dataset needs at least one input column".into()));
        }
        let mut seen = HashSet::new();
        for name in &input_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate input column `{name}`")));
            }
        }
        if inputs.len() != n * p || targets.len() != n * N_POINTS {
            return Err(Error::InvalidArgument(format!(
                "row counts disagree: {} sources, {} input values for {p} columns, {} target values",
                n,
                inputs.len(),
                targets.len()
            )));
        }
        if let Some(k) = inputs.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite input at row {}", k / p)));
        }
        if let Some(k) = targets.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite target at row {}", k / N_POINTS)));
        }
        Ok(Self {
            input_names,
            inputs,
            targets,
            sources,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn n_inputs(&self) -> usize {
        self.input_names.len()
    }

    pub fn input_names(&self) -> &[String] {
        &self.input_names
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn sources(&self) -> &[RowSource] {
        &self.sources
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        let p = self.n_inputs();
        &self.inputs[i * p..(i + 1) * p]
    }

    pub fn target_row(&self, i: usize) -> &[f64] {
        &self.targets[i * N_POINTS..(i + 1) * N_POINTS]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.input_names.iter().position(|n| n == name)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.inputs.chunks_exact(self.n_inputs()).map(move |r| r[j])
    }

    /// Names of the slab-position columns, in dataset order.
    pub fn design_columns(&self) -> Vec<String> {
        self.input_names.iter().filter(|n| is_design_column(n)).cloned().collect()
    }

    /// Projects onto the named input columns (in the given order).
    pub fn select_inputs(&self, names: &[String]) -> Result<Dataset> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.column_index(n).ok_or_else(|| Error::MissingColumn(n.clone())))
            .collect::<Result<_>>()?;
        let inputs = self
            .inputs
            .chunks_exact(self.n_inputs())
            .flat_map(|row| idx.iter().map(move |&j| row[j]))
            .collect();
        Dataset::from_flat(names.to_vec(), inputs, self.targets.clone(), self.sources.clone())
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut inputs = Vec::with_capacity(indices.len() * self.n_inputs());
        let mut targets = Vec::with_capacity(indices.len() * N_POINTS);
        let mut sources = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(self.input_row(i));
            targets.extend_from_slice(self.target_row(i));
            sources.push(self.sources[i]);
        }
        Dataset {
            input_names: self.input_names.clone(),
            inputs,
            targets,
            sources,
        }
    }

    /// Appends the rows of `other`; column names must match exactly.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.input_names != other.input_names {
            return Err(Error::InvalidArgument(format!(
                "cannot concatenate datasets with columns {:?} and {:?}",
                self.input_names, other.input_names
            )));
        }
        let mut out = self.clone();
        out.inputs.extend_from_slice(&other.inputs);
        out.targets.extend_from_slice(&other.targets);
        out.sources.extend_from_slice(&other.sources);
        Ok(out)
    }

    /// Appends constant-valued columns (e.g. variant descriptor features).
    pub fn with_constant_columns(&self, names: &[String], values: &[f64]) -> Result<Dataset> {
        if names.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                found: values.len(),
            });
        }
        let mut all_names = self.input_names.clone();
        all_names.extend(names.iter().cloned());
        let inputs = self
            .inputs
            .chunks_exact(self.n_inputs())
            .flat_map(|row| row.iter().chain(values).copied())
            .collect();
        Dataset::from_flat(all_names, inputs, self.targets.clone(), self.sources.clone())
    }

    /// Value of every column that is constant over all rows, or `None` for
    /// varying columns. Empty datasets report `None` everywhere.
    pub fn constant_value(&self, j: usize) -> Option<f64> {
        let mut col = self.column(j);
        let first = col.next()?;
        col.all(|v| v == first).then_some(first)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        Dataset::new(
            vec!["s1".into(), "s2".into(), "cp1".into()],
            vec![vec![1.0, 2.0, 9.0], vec![3.0, 4.0, 9.0]],
            vec![[10.0; N_POINTS], [20.0; N_POINTS]],
            vec![RowSource::Simulated; 2],
        )
        .unwrap()
    }

    #[test]
    fn design_columns_and_selection() {
        let d = tiny();
        assert_eq!(d.design_columns(), vec!["s1".to_string(), "s2".to_string()]);
        let s = d.select_inputs(&["s2".into(), "s1".into()]).unwrap();
        assert_eq!(s.input_row(1), &[4.0, 3.0]);
        assert!(matches!(d.select_inputs(&["s9".into()]), Err(Error::MissingColumn(_))));
        assert_eq!(d.constant_value(2), Some(9.0));
        assert_eq!(d.constant_value(0), None);
    }

    #[test]
    fn rejects_malformed() {
        assert!(Dataset::new(vec!["a".into(), "a".into()], vec![], vec![], vec![]).is_err());
        assert!(Dataset::new(vec!["a".into()], vec![vec![f64::NAN]], vec![[0.0; N_POINTS]], vec![RowSource::Simulated]).is_err());
        assert!(Dataset::new(vec!["a".into()], vec![vec![1.0]], vec![], vec![RowSource::Simulated]).is_err());
    }

    #[test]
    fn concat_and_append() {
        let d = tiny();
        let both = d.concat(&d).unwrap();
        assert_eq!(both.n_rows(), 4);
        let wider = d.with_constant_columns(&["x".into()], &[7.0]).unwrap();
        assert_eq!(wider.input_row(0), &[1.0, 2.0, 9.0, 7.0]);
        assert!(d.concat(&wider).is_err());
    }

    #[test]
    fn design_column_names() {
        assert!(is_design_column("s1"));
        assert!(is_design_column("s12"));
        assert!(!is_design_column("s"));
        assert!(!is_design_column("scale"));
        assert_eq!(target_name(3), "t03");
    }
}
