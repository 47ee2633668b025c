//! Sampled observables over time, and the correlation used as a
//! synchronization witness.

use crate::error::{Error, Result};
use crate::qcore::DensityMatrix;

#[derive(Debug, Clone)]
pub struct TimeSeries {
    names: Vec<String>,
    times: Vec<f64>,
    rows: Vec<Vec<f64>>,
    final_state: Option<DensityMatrix>,
}

impl TimeSeries {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Self {
        Self {
            names: names.iter().map(|s| s.as_ref().to_string()).collect(),
            times: Vec::new(),
            rows: Vec::new(),
            final_state: None,
        }
    }

    pub fn push(&mut self, t: f64, values: Vec<f64>) -> Result<()> {
        if values.len() != self.names.len() {
            return Err(Error::DimensionMismatch { expected: self.names.len(), found: values.len() });
        }
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(Error::InvalidParameter(format!("sample time {t} does not follow {last}")));
            }
        }
        self.times.push(t);
        self.rows.push(values);
        Ok(())
    }

    pub fn set_final_state(&mut self, rho: DensityMatrix) {
        self.final_state = Some(rho);
    }

    /// State after the last recorded sample.
    pub fn final_state(&self) -> Option<&DensityMatrix> {
        self.final_state.as_ref()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn value(&self, index: usize, name: &str) -> Option<f64> {
        let k = self.names.iter().position(|n| n == name)?;
        self.rows.get(index).map(|r| r[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyncOutcome {
    /// Pearson correlation in `[-1, 1]`.
    Correlation(f64),
    /// At least one trace has no variance in the window.
    ConstantTrace,
}

impl SyncOutcome {
    pub fn value(self) -> Option<f64> {
        match self {
            SyncOutcome::Correlation(r) => Some(r),
            SyncOutcome::ConstantTrace => None,
        }
    }
}

/// Fewest samples a window must hold for [`sync_metric`].
pub const MIN_WINDOW_SAMPLES: usize = 16;

/// Pearson correlation of two observables over samples with `t` in
/// `[window.0, window.1]`.
pub fn sync_metric(ts: &TimeSeries, obs_a: &str, obs_b: &str, window: (f64, f64)) -> Result<SyncOutcome> {
    let a = ts.column(obs_a).ok_or_else(|| Error::UnknownLabel(obs_a.to_string()))?;
    let b = ts.column(obs_b).ok_or_else(|| Error::UnknownLabel(obs_b.to_string()))?;
    let idx: Vec<usize> =
        ts.times().iter().enumerate().filter(|(_, &t)| t >= window.0 && t <= window.1).map(|(i, _)| i).collect();
    pearson(&idx.iter().map(|&i| a[i]).collect::<Vec<_>>(), &idx.iter().map(|&i| b[i]).collect::<Vec<_>>())
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<SyncOutcome> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    if a.len() < MIN_WINDOW_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "window holds {} samples, need at least {MIN_WINDOW_SAMPLES}",
            a.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    let floor = 1e-24 * n;
    if saa <= floor || sbb <= floor {
        return Ok(SyncOutcome::ConstantTrace);
    }
    Ok(SyncOutcome::Correlation((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)))
}
