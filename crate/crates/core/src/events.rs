//! Threshold exceedances ("aftershocks") and the waiting times between them.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::ReturnSeries;

/// The cut-off an event sequence was detected with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    /// Absolute return level `R_th`.
    pub value: f64,
    /// `R_th` expressed in units of the window standard deviation, when known.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma_multiple: Option<f64>,
}

/// Occurrence times in minutes since the crash, strictly increasing and
/// nonnegative.
///
/// Detected sequences hold whole exchange minutes; synthetic ones may hold
/// continuous times.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    times: Vec<f64>,
    threshold: Option<Threshold>,
    source_window: Option<(i64, i64)>,
}

impl EventSequence {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if let Some(i) = first_violation(&times) {
            return Err(Error::UnsortedEvents(i));
        }
        Ok(Self {
            times,
            threshold: None,
            source_window: None,
        })
    }

    pub fn with_threshold(mut self, threshold: Threshold) -> Self {
        self.threshold = Some(threshold);
        self
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn threshold(&self) -> Option<Threshold> {
        self.threshold
    }

    /// Minutes `[start, end)` the events were searched in.
    pub fn source_window(&self) -> Option<(i64, i64)> {
        self.source_window
    }

    /// Rebuilds a sequence starting at `first` from consecutive gaps.
    pub fn from_gaps(first: f64, gaps: &[f64]) -> Result<Self> {
        let mut times = Vec::with_capacity(gaps.len() + 1);
        let mut t = first;
        times.push(t);
        for g in gaps {
            t += g;
            times.push(t);
        }
        Self::new(times)
    }

    /// Single-column CSV with header `t`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t"])?;
        for t in &self.times {
            w.write_record([t.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format written by [`EventSequence::write_csv`].
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let mut times = Vec::new();
        for (i, row) in r.records().enumerate() {
            let row = row?;
            let cell = row.get(0).unwrap_or("");
            let t: f64 = cell.parse().map_err(|_| Error::MalformedRow {
                row: i + 1,
                reason: format!("bad event time `{cell}`"),
            })?;
            times.push(t);
        }
        Self::new(times)
    }
}

fn first_violation(times: &[f64]) -> Option<usize> {
    if let Some(i) = times.iter().position(|t| !(t.is_finite() && *t >= 0.0)) {
        return Some(i);
    }
    times.windows(2).position(|w| w[1] <= w[0]).map(|i| i + 1)
}

/// Gaps between successive events, in minutes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WaitingTimes {
    taus: Vec<f64>,
}

impl WaitingTimes {
    /// Wraps gaps produced elsewhere (e.g. a generator). Gaps must be
    /// positive and finite.
    pub fn new(taus: Vec<f64>) -> Result<Self> {
        if let Some(i) = taus.iter().position(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "waiting time {i} is not positive: {}",
                taus[i]
            )));
        }
        Ok(Self { taus })
    }

    /// Gaps of a raw list of times, which must be strictly increasing.
    pub fn from_times(times: &[f64]) -> Result<Self> {
        if let Some(i) = first_violation(times) {
            return Err(Error::UnsortedEvents(i));
        }
        Ok(Self {
            taus: times.windows(2).map(|w| w[1] - w[0]).collect(),
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.taus
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    /// True when every gap is a whole number of minutes.
    pub fn on_minute_grid(&self) -> bool {
        self.taus.iter().all(|t| t.fract() == 0.0)
    }
}

/// Every minute `t >= 0` with `|r(t)| > r_th` becomes one event.
///
/// Consecutive exceedances stay separate events and ties with the threshold
/// are not events.
pub fn detect_events(returns: &ReturnSeries, r_th: f64) -> Result<EventSequence> {
    if !(r_th > 0.0) {
        return Err(Error::NonPositiveThreshold(r_th));
    }
    let times = returns
        .iter()
        .filter(|&(t, r)| t >= 0 && r.abs() > r_th)
        .map(|(t, _)| t as f64)
        .collect();
    Ok(EventSequence {
        times,
        threshold: Some(Threshold {
            value: r_th,
            sigma_multiple: None,
        }),
        source_window: Some((returns.start().max(0), returns.end().max(0))),
    })
}

pub fn waiting_times(events: &EventSequence) -> WaitingTimes {
    WaitingTimes {
        taus: events.times.windows(2).map(|w| w[1] - w[0]).collect(),
    }
}
