//! Markovianity scaling-relation check, percentile bootstrap, and the JSON
//! analysis report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::correlation::CollapseResult;
use crate::error::{Error, Result};
use crate::events::{waiting_times, EventSequence, Threshold, WaitingTimes};
use crate::omori::{fit_omori, OmoriFit, OmoriMleFit};
use crate::rng;
use crate::stats::WindowStats;
use crate::synth::OmoriGenSpec;
use crate::waiting::{fit_mu, FitMethod, FitRange, WaitingFit};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const MIN_RESAMPLES: usize = 100;
/// Largest tolerated share of resamples on which the estimator fails.
pub const MAX_FAILURE_SHARE: f64 = 0.10;
pub const DEFAULT_NEIGHBOURHOOD: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn centered(mid: f64, half_width: f64) -> Self {
        Self::new(mid - half_width, mid + half_width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Satisfied,
    Violated,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovCheck {
    pub p: f64,
    pub mu: f64,
    pub sum: f64,
    /// Interval for `p + mu`.
    pub ci: Interval,
    /// Both exponents in `(0, 1)`.
    pub applicable: bool,
    pub verdict: Verdict,
}

/// `p + mu = 1` check: violated when 1 falls outside `ci`, not applicable
/// unless both exponents lie in `(0, 1)`.
pub fn markov_check(p: f64, mu: f64, ci: Interval) -> MarkovCheck {
    let in_unit = |x: f64| x > 0.0 && x < 1.0;
    let applicable = in_unit(p) && in_unit(mu);
    let verdict = if !applicable {
        Verdict::NotApplicable
    } else if ci.contains(1.0) {
        Verdict::Satisfied
    } else {
        Verdict::Violated
    };
    MarkovCheck {
        p,
        mu,
        sum: p + mu,
        ci,
        applicable,
        verdict,
    }
}

pub fn markov_relation(omori: &OmoriFit, waiting: &WaitingFit, ci: Interval) -> MarkovCheck {
    markov_check(omori.p, waiting.mu, ci)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapTarget {
    OmoriP,
    Mu,
    /// `p + mu` from the same resample.
    Sum,
}

/// Estimator settings reused on every resample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapSettings {
    pub resamples: usize,
    pub seed: u64,
    /// Gap `i` is redrawn from gaps `i - h ..= i + h`.
    pub neighbourhood: usize,
    pub grid_step: f64,
    /// Omori horizon; each resample's last event time when `None`.
    pub horizon: Option<f64>,
    pub c_search: bool,
    pub bin_size: f64,
    pub method: FitMethod,
    pub fit_range: Option<FitRange>,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        Self {
            resamples: 200,
            seed: 0,
            neighbourhood: DEFAULT_NEIGHBOURHOOD,
            grid_step: 1.0,
            horizon: None,
            c_search: true,
            bin_size: 1.0,
            method: FitMethod::LogLogLsq,
            fit_range: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub target: BootstrapTarget,
    pub estimate: f64,
    pub interval: Interval,
    pub resamples: usize,
    pub failed: usize,
}

fn estimate(
    first: f64,
    taus: &[f64],
    target: BootstrapTarget,
    s: &BootstrapSettings,
) -> Result<f64> {
    let p = || -> Result<f64> {
        let events = EventSequence::from_gaps(first, taus)?;
        let last = *events
            .times()
            .last()
            .expect("from_gaps yields at least one event");
        let horizon = s.horizon.unwrap_or(last);
        Ok(fit_omori(&events, s.grid_step, horizon, s.c_search)?.p)
    };
    let mu = || -> Result<f64> {
        let w = WaitingTimes::new(taus.to_vec())?;
        Ok(fit_mu(&w, s.bin_size, s.fit_range, s.method)?.mu)
    };
    match target {
        BootstrapTarget::OmoriP => p(),
        BootstrapTarget::Mu => mu(),
        BootstrapTarget::Sum => Ok(p()? + mu()?),
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    match sorted.get(i + 1) {
        Some(&next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}

/// Percentile (2.5%, 97.5%) bootstrap over the waiting times.
///
/// Each resample redraws every gap, with replacement, from the gaps within
/// `neighbourhood` positions of it and rebuilds a sequence from the first
/// event time. Drawing locally keeps short gaps near the crash and long ones
/// late; a global shuffle would flatten the decay the Omori fit measures.
/// Resample `i` uses its own derived stream, so the result does not depend
/// on evaluation order.
pub fn bootstrap_ci(
    events: &EventSequence,
    target: BootstrapTarget,
    settings: &BootstrapSettings,
) -> Result<BootstrapResult> {
    if settings.resamples < MIN_RESAMPLES {
        return Err(Error::InvalidParameter(format!(
            "bootstrap needs at least {MIN_RESAMPLES} resamples, got {}",
            settings.resamples
        )));
    }
    let gaps = waiting_times(events);
    if gaps.is_empty() {
        return Err(Error::InsufficientData(
            "bootstrap needs at least two events".into(),
        ));
    }
    let first = events.times()[0];
    let taus = gaps.as_slice();
    let point = estimate(first, taus, target, settings)?;

    let mut values = Vec::with_capacity(settings.resamples);
    let mut failed = 0usize;
    let mut draw = vec![0.0; taus.len()];
    for i in 0..settings.resamples {
        let mut rng = rng::derived(settings.seed, i as u64);
        for (j, slot) in draw.iter_mut().enumerate() {
            let lo = j.saturating_sub(settings.neighbourhood);
            let hi = (j + settings.neighbourhood).min(taus.len() - 1);
            let width = hi - lo + 1;
            let k = lo + ((rng::unit(&mut rng) * width as f64) as usize).min(width - 1);
            *slot = taus[k];
        }
        match estimate(first, &draw, target, settings) {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(_) | Err(_) => failed += 1,
        }
    }
    if failed as f64 > MAX_FAILURE_SHARE * settings.resamples as f64 {
        return Err(Error::BootstrapFailure {
            failed,
            total: settings.resamples,
        });
    }
    values.sort_by(f64::total_cmp);
    Ok(BootstrapResult {
        target,
        estimate: point,
        interval: Interval::new(quantile(&values, 0.025), quantile(&values, 0.975)),
        resamples: settings.resamples,
        failed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngInfo {
    pub algorithm: String,
    /// Named seeds, e.g. the generator's and the bootstrap's.
    pub seeds: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSection {
    pub records: usize,
    /// No-trading stretches removed from the minute axis.
    pub gaps_removed: usize,
    pub first: String,
    pub last: String,
    pub crash_requested: String,
    pub crash_used: String,
    pub window_days: usize,
    pub window_minutes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSection {
    pub generator: OmoriGenSpec,
    pub expected_count: f64,
    pub events: usize,
    pub collapsed_ties: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

/// Everything computed for one event sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSection {
    /// Short name used in artifact file names, e.g. `2sigma`.
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub threshold: Option<Threshold>,
    pub event_count: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub omori: Option<OmoriFit>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub omori_mle: Option<OmoriMleFit>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub waiting_lsq: Option<WaitingFit>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub waiting_mle: Option<WaitingFit>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub bootstrap: Vec<BootstrapResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub markov: Option<MarkovCheck>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub collapse: Option<CollapseResult>,
    /// Stages that could not run on this sequence; the rest still report.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub failures: Vec<StageFailure>,
}

impl ThresholdSection {
    pub fn new(label: impl Into<String>, threshold: Option<Threshold>, event_count: usize) -> Self {
        Self {
            label: label.into(),
            threshold,
            event_count,
            omori: None,
            omori_mle: None,
            waiting_lsq: None,
            waiting_mle: None,
            bootstrap: Vec::new(),
            markov: None,
            collapse: None,
            failures: Vec::new(),
        }
    }

    pub fn fail(&mut self, stage: &str, err: &Error) {
        log::warn!("{}: {stage} failed: {err}", self.label);
        self.failures.push(StageFailure {
            stage: stage.to_string(),
            message: err.to_string(),
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub config: BTreeMap<String, String>,
    pub rng: RngInfo,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub series: Option<SeriesSection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma: Option<WindowStats>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub synthetic: Option<SyntheticSection>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub thresholds: Vec<ThresholdSection>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub manifest: Vec<ManifestEntry>,
}

/// Pieces assembled by [`build_report`].
#[derive(Debug, Clone, Default)]
pub struct ReportParts {
    pub config: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub series: Option<SeriesSection>,
    pub sigma: Option<WindowStats>,
    pub synthetic: Option<SyntheticSection>,
    pub thresholds: Vec<ThresholdSection>,
    pub notes: Vec<String>,
}

pub fn build_report(parts: ReportParts) -> Report {
    Report {
        schema_version: REPORT_SCHEMA_VERSION,
        config: parts.config,
        rng: RngInfo {
            algorithm: rng::RNG_ALGORITHM.to_string(),
            seeds: parts.seeds,
        },
        series: parts.series,
        sigma: parts.sigma,
        synthetic: parts.synthetic,
        thresholds: parts.thresholds,
        notes: parts.notes,
        manifest: Vec::new(),
    }
}

impl Report {
    pub fn record_artifact(&mut self, path: impl Into<String>, kind: impl Into<String>) {
        self.manifest.push(ManifestEntry {
            path: path.into(),
            kind: kind.into(),
        });
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Report = serde_json::from_str(text)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::InvalidParameter(format!(
                "report schema version {} is not supported (expected {REPORT_SCHEMA_VERSION})",
                report.schema_version
            )));
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_pareto_waits, ParetoGenSpec};
    use proptest::prelude::*;

    #[test]
    fn markov_examples() {
        let hw = 0.39;
        let m = markov_check(0.4642, 0.9413, Interval::centered(1.4055, hw));
        assert!((m.sum - 1.4055).abs() < 1e-12);
        assert!(m.applicable);
        assert_eq!(m.verdict, Verdict::Violated);

        let ok = markov_check(0.5, 0.5, Interval::centered(1.0, 0.01));
        assert_eq!(ok.verdict, Verdict::Satisfied);

        let na = markov_check(1.2, 0.5, Interval::centered(1.7, 0.01));
        assert!(!na.applicable);
        assert_eq!(na.verdict, Verdict::NotApplicable);
        assert_eq!(
            markov_check(0.5, 1.0, Interval::centered(1.5, 1.0)).verdict,
            Verdict::NotApplicable
        );
        assert_eq!(
            markov_check(0.0, 0.5, Interval::centered(0.5, 1.0)).verdict,
            Verdict::NotApplicable
        );
    }

    #[test]
    fn verdict_serializes_kebab() {
        assert_eq!(
            serde_json::to_string(&Verdict::NotApplicable).unwrap(),
            "\"not-applicable\""
        );
    }

    proptest! {
        #[test]
        fn markov_depends_on_sum_only(p in 0.01f64..0.99, mu in 0.01f64..0.99, lo in 0.0f64..2.0, w in 0.0f64..1.0) {
            let ci = Interval::new(lo, lo + w);
            let a = markov_check(p, mu, ci);
            let b = markov_check(mu, p, ci);
            prop_assert_eq!(a.sum, b.sum);
            prop_assert_eq!(a.verdict, b.verdict);
            prop_assert_eq!(a.verdict == Verdict::Violated, !ci.contains(1.0));
        }
    }

    fn pareto_events(mu: f64, n: usize, seed: u64) -> EventSequence {
        let w = gen_pareto_waits(&ParetoGenSpec {
            mu,
            tau_min: 1.0,
            count: n,
            seed,
        })
        .unwrap();
        EventSequence::from_gaps(0.0, w.as_slice()).unwrap()
    }

    fn mle_settings(seed: u64) -> BootstrapSettings {
        BootstrapSettings {
            resamples: 200,
            seed,
            method: FitMethod::Mle,
            fit_range: Some(FitRange {
                tau_min: 1.0,
                tau_max: f64::INFINITY,
            }),
            ..Default::default()
        }
    }

    #[test]
    fn bootstrap_deterministic_and_brackets_estimate() {
        let ev = pareto_events(0.95, 2000, 4);
        let a = bootstrap_ci(&ev, BootstrapTarget::Mu, &mle_settings(9)).unwrap();
        let b = bootstrap_ci(&ev, BootstrapTarget::Mu, &mle_settings(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.interval.contains(a.estimate), "{a:?}");
        assert_eq!(a.failed, 0);
        let c = bootstrap_ci(&ev, BootstrapTarget::Mu, &mle_settings(10)).unwrap();
        assert_ne!(a.interval, c.interval);
    }

    #[test]
    fn bootstrap_rejects_few_resamples() {
        let ev = pareto_events(0.95, 200, 4);
        let s = BootstrapSettings {
            resamples: 99,
            ..mle_settings(0)
        };
        assert!(matches!(
            bootstrap_ci(&ev, BootstrapTarget::Mu, &s),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn bootstrap_reports_estimator_failure() {
        // Exactly the MLE minimum of 50 gaps sits above tau_min, so the full
        // sample fits but roughly half the resamples fall short.
        let mut gaps = vec![1.0; 10];
        gaps.extend((0..50).map(|k| 2.0 + k as f64));
        let ev = EventSequence::from_gaps(0.0, &gaps).unwrap();
        let s = BootstrapSettings {
            fit_range: Some(FitRange {
                tau_min: 2.0,
                tau_max: f64::INFINITY,
            }),
            ..mle_settings(1)
        };
        match bootstrap_ci(&ev, BootstrapTarget::Mu, &s) {
            Err(Error::BootstrapFailure { failed, total }) => {
                assert_eq!(total, 200);
                assert!(failed > 20);
            }
            other => panic!("expected bootstrap failure, got {other:?}"),
        }
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert!((quantile(&v, 0.025) - 1.1).abs() < 1e-12);
    }

    #[test]
    fn report_round_trip_and_sections() {
        let mut section = ThresholdSection::new(
            "2sigma",
            Some(Threshold {
                value: 0.008,
                sigma_multiple: Some(2.0),
            }),
            12,
        );
        section.markov = Some(markov_check(
            0.4642,
            0.9413,
            Interval::centered(1.4055, 0.1),
        ));
        section.fail("waiting", &Error::InsufficientData("few".into()));
        let mut report = build_report(ReportParts {
            config: BTreeMap::from([("seed".to_string(), "7".to_string())]),
            seeds: BTreeMap::from([("bootstrap".to_string(), 7)]),
            thresholds: vec![section],
            ..Default::default()
        });
        report.record_artifact("events_2sigma.csv", "events");
        let text = report.to_json().unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["schema_version"], 1);
        assert_eq!(value["rng"]["algorithm"], "chacha8");
        assert!(value.get("sigma").is_none());
        assert!(value.get("series").is_none());
        assert!(value["thresholds"][0].get("omori").is_none());
        assert_eq!(value["thresholds"][0]["markov"]["verdict"], "violated");
        assert_eq!(Report::from_json(&text).unwrap(), report);

        let bumped = text.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(Report::from_json(&bumped).is_err());
    }
}
