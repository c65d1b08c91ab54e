//! Time series and small statistics helpers shared across modules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values sampled at monotone timestamps (seconds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub timestamps: Vec<f64>,
    pub values: Vec<f64>,
}

/// SpO2 labels in percent.
pub type LabelSeries = TimeSeries;

impl TimeSeries {
    pub fn new(timestamps: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::LengthMismatch(timestamps.len(), values.len()));
        }
        if timestamps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("timestamps must be strictly increasing".into()));
        }
        Ok(Self { timestamps, values })
    }

    /// Uniformly sampled series starting at t = 0.
    pub fn uniform(values: Vec<f64>, rate_hz: f64) -> Self {
        let timestamps = (0..values.len()).map(|i| i as f64 / rate_hz).collect();
        Self { timestamps, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Mean sampling rate inferred from the timestamps.
    pub fn rate_hz(&self) -> Option<f64> {
        let n = self.timestamps.len();
        if n < 2 {
            return None;
        }
        let span = self.timestamps[n - 1] - self.timestamps[0];
        (span > 0.0).then(|| (n - 1) as f64 / span)
    }

    /// Linear interpolation at `t`, holding the boundary values outside the span.
    pub fn sample_at(&self, t: f64) -> f64 {
        let ts = &self.timestamps;
        let n = ts.len();
        assert!(n > 0, "sample_at on empty series");
        if t <= ts[0] {
            return self.values[0];
        }
        if t >= ts[n - 1] {
            return self.values[n - 1];
        }
        let hi = ts.partition_point(|&x| x <= t);
        let lo = hi - 1;
        let f = (t - ts[lo]) / (ts[hi] - ts[lo]);
        self.values[lo] + f * (self.values[hi] - self.values[lo])
    }
}

/// Fills missing entries: linear interpolation between the nearest present
/// neighbours in the interior, hold of the nearest present value at the ends.
/// Returns `None` if every entry is missing.
pub fn fill_missing(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let present: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    let (&first, &last) = (present.first()?, present.last()?);
    let mut out = Vec::with_capacity(values.len());
    let mut next = 0;
    for i in 0..values.len() {
        if let Some(v) = values[i] {
            out.push(v);
            next += 1;
            continue;
        }
        if i < first {
            out.push(values[first].unwrap());
        } else if i > last {
            out.push(values[last].unwrap());
        } else {
            let lo = present[next - 1];
            let hi = present[next];
            let (a, b) = (values[lo].unwrap(), values[hi].unwrap());
            let f = (i - lo) as f64 / (hi - lo) as f64;
            out.push(a + f * (b - a));
        }
    }
    Some(out)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard error of the mean; zero for fewer than two values.
pub fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    if a.len() < 2 {
        return None;
    }
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_gaps_are_interpolated_and_edges_held() {
        let v = [None, Some(1.0), None, None, Some(4.0), None];
        assert_eq!(fill_missing(&v).unwrap(), vec![1.0, 1.0, 2.0, 3.0, 4.0, 4.0]);
        assert!(fill_missing(&[None, None]).is_none());
    }

    #[test]
    fn sample_at_interpolates() {
        let s = TimeSeries::new(vec![0.0, 1.0, 3.0], vec![0.0, 10.0, 30.0]).unwrap();
        assert_eq!(s.sample_at(2.0), 20.0);
        assert_eq!(s.sample_at(-1.0), 0.0);
        assert_eq!(s.sample_at(9.0), 30.0);
        assert_eq!(s.rate_hz(), Some(2.0 / 3.0));
    }

    #[test]
    fn pearson_of_constant_is_none() {
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_none());
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]), Some(1.0));
    }
}
