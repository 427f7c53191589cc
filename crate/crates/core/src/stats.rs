//! One-minute returns and the volatility scale used to set thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PriceSeries;

/// Fractional one-minute returns on the exchange-minute axis.
///
/// `values[k]` is the return from minute `start + k` to the next recorded
/// minute.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    start: i64,
    values: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(start: i64, values: Vec<f64>) -> Self {
        Self { start, values }
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    /// One past the last minute index.
    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, t: i64) -> Option<f64> {
        let k = t - self.start;
        (k >= 0)
            .then(|| self.values.get(k as usize).copied())
            .flatten()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let start = self.start;
        self.values
            .iter()
            .enumerate()
            .map(move |(k, &r)| (start + k as i64, r))
    }

    /// Sub-series covering minutes `[from, to)`, clipped to the data.
    pub fn restrict(&self, from: i64, to: i64) -> ReturnSeries {
        let lo = from.clamp(self.start, self.end());
        let hi = to.clamp(lo, self.end());
        let a = (lo - self.start) as usize;
        let b = (hi - self.start) as usize;
        ReturnSeries {
            start: lo,
            values: self.values[a..b].to_vec(),
        }
    }
}

/// Mean, population variance and standard deviation over a window of
/// returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub mean: f64,
    pub variance: f64,
    pub sigma: f64,
    pub window_start: i64,
    /// Number of return samples in the window.
    pub window_len: usize,
}

/// `r(t) = (x(t+1) - x(t)) / x(t)` on the compacted axis.
///
/// Consecutive records are one exchange minute apart by construction, so the
/// return across a removed gap is treated like any other.
pub fn compute_returns(series: &PriceSeries) -> Result<ReturnSeries> {
    let x = series.prices();
    if x.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: x.len(),
        });
    }
    let values = x.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect();
    Ok(ReturnSeries {
        start: series.first_index(),
        values,
    })
}

/// Statistics over the returns at minutes `t0 .. t0 + len`.
///
/// Divides by the number of samples (population statistics).
pub fn window_stats(returns: &ReturnSeries, t0: i64, len: usize) -> Result<WindowStats> {
    let end = t0 + len as i64;
    if len == 0 || t0 < returns.start() || end > returns.end() {
        return Err(Error::BadWindow { start: t0, end });
    }
    let k0 = (t0 - returns.start()) as usize;
    let window = &returns.values()[k0..k0 + len];
    let n = len as f64;
    // Shifted by the first sample: exact for constant windows.
    let pivot = window[0];
    let mean = pivot + window.iter().map(|r| r - pivot).sum::<f64>() / n;
    let variance = window.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok(WindowStats {
        mean,
        variance,
        sigma: variance.sqrt(),
        window_start: t0,
        window_len: len,
    })
}

/// Number of post-crash minutes spanned by the first `days` calendar dates
/// present in the data, starting with the crash date.
///
/// Only recorded minutes count, so the result is a length on the compacted
/// axis. Errors when the data holds fewer than `days` dates after the crash.
pub fn exchange_day_minutes(series: &PriceSeries, days: usize) -> Result<usize> {
    let origin = series
        .origin()
        .ok_or_else(|| Error::InvalidParameter("series has no crash origin".into()))?;
    if days == 0 {
        return Err(Error::InvalidParameter(
            "window must span at least one day".into(),
        ));
    }
    let after = &series.wall_clock()[origin.position..];
    let mut seen = 0usize;
    let mut current = None;
    for (k, w) in after.iter().enumerate() {
        let d = w.date();
        if current != Some(d) {
            if seen == days {
                return Ok(k);
            }
            seen += 1;
            current = Some(d);
        }
    }
    if seen == days {
        Ok(after.len())
    } else {
        Err(Error::InsufficientData(format!(
            "data covers {seen} exchange days after the crash, {days} requested"
        )))
    }
}
