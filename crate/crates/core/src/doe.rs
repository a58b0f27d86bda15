//! Latin Hypercube sampling over bounded parameter spaces.

use std::collections::HashSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Keeps within-stratum draws away from stratum edges so that recomputing the
/// stratum index from a stored value never lands in a neighbour.
const EDGE_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl Dimension {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// An ordered, named box of continuous parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Dimension>", into = "Vec<Dimension>")]
pub struct ParameterSpace {
    dims: Vec<Dimension>,
}

impl ParameterSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidSpace("at least one dimension required".into()));
        }
        let mut seen = HashSet::new();
        for d in &dims {
            if !(d.lower.is_finite() && d.upper.is_finite()) {
                return Err(Error::InvalidSpace(format!("dimension `{}` has non-finite bounds", d.name)));
            }
            if d.lower >= d.upper {
                return Err(Error::InvalidSpace(format!(
                    "dimension `{}` has lower {} >= upper {}",
                    d.name, d.lower, d.upper
                )));
            }
            if !seen.insert(d.name.as_str()) {
                return Err(Error::InvalidSpace(format!("duplicate dimension name `{}`", d.name)));
            }
        }
        Ok(Self { dims })
    }

    /// `count` slab-position dimensions named `s1..sN`, all on `[lower, upper]`.
    pub fn slab_positions(count: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(
            (1..=count)
                .map(|i| Dimension::new(format!("s{i}"), lower, upper))
                .collect(),
        )
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.dims.iter().map(|d| d.name.clone()).collect()
    }
}

impl TryFrom<Vec<Dimension>> for ParameterSpace {
    type Error = Error;

    fn try_from(dims: Vec<Dimension>) -> Result<Self> {
        Self::new(dims)
    }
}

impl From<ParameterSpace> for Vec<Dimension> {
    fn from(space: ParameterSpace) -> Self {
        space.dims
    }
}

/// `n × d` design, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    space: ParameterSpace,
    points: Vec<f64>,
    n: usize,
    seed: u64,
}

impl DesignMatrix {
    /// Wraps externally produced points. Checks shape and bounds only; use
    /// [`verify_stratification`] to test the Latin property.
    pub fn from_points(space: ParameterSpace, rows: &[Vec<f64>], seed: u64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("design matrix needs at least one point".into()));
        }
        let d = space.len();
        let mut points = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
            for (v, dim) in row.iter().zip(space.dims()) {
                if !(dim.lower..=dim.upper).contains(v) {
                    return Err(Error::InvalidArgument(format!(
                        "row {i}: value {v} outside [{}, {}] of `{}`",
                        dim.lower, dim.upper, dim.name
                    )));
                }
            }
            points.extend_from_slice(row);
        }
        Ok(Self {
            space,
            points,
            n: rows.len(),
            seed,
        })
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn n_dims(&self) -> usize {
        self.space.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_dims();
        &self.points[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.n_dims())
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }

    /// CSV with a header of dimension names and one row per point.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::InvalidArgument(format!("csv write failed: {e}"));
        w.write_record(self.space.dims().iter().map(|d| d.name.as_str()))
            .map_err(to_err)?;
        for row in self.rows() {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Index of the equal-width stratum containing `value`, clamped to `[0, n)`.
pub fn stratum_index(value: f64, dim: &Dimension, n: usize) -> usize {
    let t = (value - dim.lower) / dim.width() * n as f64;
    (t.floor().max(0.0) as usize).min(n - 1)
}

/// Draws an `n`-point Latin Hypercube design. Each dimension gets an
/// independent random permutation of the strata and a uniform offset inside
/// each stratum. Deterministic for fixed `(space, n, seed)`.
pub fn lhs_sample(space: &ParameterSpace, n: usize, seed: u64) -> Result<DesignMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("LHS sample size must be at least 1".into()));
    }
    let d = space.len();
    let mut rng = seed::rng(seed);
    let mut points = vec![0.0; n * d];
    let mut perm: Vec<usize> = (0..n).collect();
    for (j, dim) in space.dims().iter().enumerate() {
        perm.shuffle(&mut rng);
        for (i, &stratum) in perm.iter().enumerate() {
            let u = EDGE_MARGIN + (1.0 - 2.0 * EDGE_MARGIN) * rng.gen::<f64>();
            points[i * d + j] = dim.lower + (stratum as f64 + u) / n as f64 * dim.width();
        }
    }
    Ok(DesignMatrix {
        space: space.clone(),
        points,
        n,
        seed,
    })
}

/// True iff every column has exactly one point in each of the `n` strata.
pub fn verify_stratification(matrix: &DesignMatrix) -> bool {
    let n = matrix.n_points();
    let mut hit = vec![false; n];
    for (j, dim) in matrix.space().dims().iter().enumerate() {
        hit.iter_mut().for_each(|h| *h = false);
        for v in matrix.column(j) {
            let k = stratum_index(v, dim, n);
            if hit[k] {
                return false;
            }
            hit[k] = true;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(d: usize) -> ParameterSpace {
        ParameterSpace::new((0..d).map(|i| Dimension::new(format!("x{i}"), 0.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn one_value_per_quarter() {
        let m = lhs_sample(&unit(1), 4, 7).unwrap();
        let mut strata: Vec<usize> = m.column(0).map(|v| (v * 4.0).floor() as usize).collect();
        strata.sort_unstable();
        assert_eq!(strata, vec![0, 1, 2, 3]);
    }

    #[test]
    fn single_point_strictly_inside() {
        let m = lhs_sample(&unit(2), 1, 99).unwrap();
        assert!(m.row(0).iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn slab_design_of_2000() {
        let space = ParameterSpace::slab_positions(2, 10.0, 110.0).unwrap();
        let m = lhs_sample(&space, 2000, 5).unwrap();
        assert_eq!((m.n_points(), m.n_dims()), (2000, 2));
        assert!(verify_stratification(&m));
    }

    #[test]
    fn detects_collision() {
        let m = DesignMatrix::from_points(unit(2), &[vec![0.1, 0.2], vec![0.3, 0.7]], 0).unwrap();
        assert!(!verify_stratification(&m));
        let ok = DesignMatrix::from_points(unit(2), &[vec![0.1, 0.2], vec![0.6, 0.7]], 0).unwrap();
        assert!(verify_stratification(&ok));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(lhs_sample(&unit(1), 0, 1).is_err());
        assert!(DesignMatrix::from_points(unit(1), &[], 0).is_err());
        assert!(ParameterSpace::new(vec![Dimension::new("a", 1.0, 1.0)]).is_err());
        assert!(ParameterSpace::new(vec![Dimension::new("a", 0.0, 1.0), Dimension::new("a", 0.0, 2.0)]).is_err());
        assert!(ParameterSpace::new(vec![]).is_err());
    }

    #[test]
    fn csv_export_has_header_and_exact_values() {
        let space = ParameterSpace::slab_positions(2, 10.0, 110.0).unwrap();
        let m = lhs_sample(&space, 3, 11).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("s1,s2"));
        for (line, row) in lines.zip(m.rows()) {
            let parsed: Vec<f64> = line.split(',').map(|t| t.parse().unwrap()).collect();
            assert_eq!(parsed, row);
        }
    }

    proptest! {
        #[test]
        fn stratified_and_deterministic(d in 1usize..5, n in 1usize..300, seed in any::<u64>(), lo in -100.0f64..100.0, w in 0.001f64..500.0) {
            let space = ParameterSpace::new((0..d).map(|i| Dimension::new(format!("p{i}"), lo, lo + w)).collect()).unwrap();
            let a = lhs_sample(&space, n, seed).unwrap();
            prop_assert!(verify_stratification(&a));
            prop_assert!(a.rows().flatten().all(|&v| v >= lo && v <= lo + w));
            let b = lhs_sample(&space, n, seed).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn column_means_near_midpoint(n in 100usize..600, seed in any::<u64>()) {
            let space = ParameterSpace::slab_positions(3, 10.0, 110.0).unwrap();
            let m = lhs_sample(&space, n, seed).unwrap();
            for (j, dim) in space.dims().iter().enumerate() {
                let mean = m.column(j).sum::<f64>() / n as f64;
                prop_assert!((mean - dim.midpoint()).abs() <= 0.05 * dim.width());
            }
        }
    }
}
