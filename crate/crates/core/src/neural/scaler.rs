use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalerKind {
    /// Maps the fitted range onto `[0, 1]`.
    MinMax,
    /// Zero mean, unit (population) standard deviation.
    ZScore,
}

/// Per-feature affine map `x -> (x - shift) / scale`.
///
/// Features with zero spread get `scale = 1` so that constant columns map to
/// zero instead of dividing by zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub kind: ScalerKind,
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    /// Fits on row-major `data` with `width` features per row.
    pub fn fit(kind: ScalerKind, data: &[f64], width: usize) -> Result<Self> {
        if width == 0 || data.is_empty() || !data.len().is_multiple_of(width) {
            return Err(Error::InvalidArgument(format!(
                "cannot fit scaler on {} values with width {width}",
                data.len()
            )));
        }
        let n = (data.len() / width) as f64;
        let mut shift = vec![0.0; width];
        let mut scale = vec![0.0; width];
        match kind {
            ScalerKind::MinMax => {
                let mut lo = vec![f64::INFINITY; width];
                let mut hi = vec![f64::NEG_INFINITY; width];
                for row in data.chunks_exact(width) {
                    for j in 0..width {
                        lo[j] = lo[j].min(row[j]);
                        hi[j] = hi[j].max(row[j]);
                    }
                }
                for j in 0..width {
                    shift[j] = lo[j];
                    scale[j] = hi[j] - lo[j];
                }
            }
            ScalerKind::ZScore => {
                for row in data.chunks_exact(width) {
                    for j in 0..width {
                        shift[j] += row[j];
                    }
                }
                shift.iter_mut().for_each(|m| *m /= n);
                for row in data.chunks_exact(width) {
                    for j in 0..width {
                        let d = row[j] - shift[j];
                        scale[j] += d * d;
                    }
                }
                scale.iter_mut().for_each(|s| *s = (*s / n).sqrt());
            }
        }
        for s in &mut scale {
            if !(s.is_finite() && *s > 0.0) {
                *s = 1.0;
            }
        }
        Ok(Self { kind, shift, scale })
    }

    pub fn width(&self) -> usize {
        self.shift.len()
    }

    pub fn transform_in_place(&self, data: &mut [f64]) {
        let w = self.width();
        for row in data.chunks_exact_mut(w) {
            for ((v, s), c) in row.iter_mut().zip(&self.shift).zip(&self.scale) {
                *v = (*v - s) / c;
            }
        }
    }

    pub fn inverse_in_place(&self, data: &mut [f64]) {
        let w = self.width();
        for row in data.chunks_exact_mut(w) {
            for ((v, s), c) in row.iter_mut().zip(&self.shift).zip(&self.scale) {
                *v = *v * c + s;
            }
        }
    }

    pub fn transform(&self, data: &[f64]) -> Vec<f64> {
        let mut out = data.to_vec();
        self.transform_in_place(&mut out);
        out
    }

    pub fn inverse(&self, data: &[f64]) -> Vec<f64> {
        let mut out = data.to_vec();
        self.inverse_in_place(&mut out);
        out
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.shift.len() != self.scale.len() {
            return Err(Error::InvalidArgument("scaler shift/scale lengths differ".into()));
        }
        if self.scale.iter().any(|s| !(s.is_finite() && *s != 0.0)) || self.shift.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("scaler has zero or non-finite entries".into()));
        }
        Ok(())
    }
}
