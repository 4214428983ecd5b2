//! Min-max rescaling onto the crossbar's `[0, 1]` input range.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One global range shared by every component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(data: &[Vec<f64>]) -> Result<Self> {
        let (min, max) = data
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if !min.is_finite() || !max.is_finite() || max <= min {
            return Err(Error::DegenerateData(format!("min-max range is empty ({min}, {max})")));
        }
        Ok(Self { min, max })
    }

    /// Maps into `[0, 1]`, clipping values outside the fitted range.
    pub fn apply(&self, v: f64) -> f64 {
        ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }

    pub fn transform(&self, data: &[Vec<f64>]) -> Vec<Vec<f64>> {
        data.iter().map(|r| r.iter().map(|&v| self.apply(v)).collect()).collect()
    }
}

/// Fits on `data` and rescales it.
pub fn min_max_rescale(data: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, MinMax)> {
    let s = MinMax::fit(data)?;
    Ok((s.transform(data), s))
}

/// Independent range per column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMinMax {
    pub columns: Vec<MinMax>,
}

impl ColumnMinMax {
    pub fn fit(data: &[Vec<f64>]) -> Result<Self> {
        let d = data.first().map_or(0, Vec::len);
        let columns = (0..d)
            .map(|j| {
                let col: Vec<Vec<f64>> = data.iter().map(|r| vec![r[j]]).collect();
                MinMax::fit(&col).map_err(|_| Error::DegenerateData(format!("column {j} is constant")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { columns })
    }

    pub fn transform(&self, data: &[Vec<f64>]) -> Vec<Vec<f64>> {
        data.iter()
            .map(|r| r.iter().zip(&self.columns).map(|(&v, s)| s.apply(v)).collect())
            .collect()
    }
}
