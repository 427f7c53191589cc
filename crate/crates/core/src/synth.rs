//! Seeded generators for the point processes the estimators target.
//!
//! All draws come from [`crate::rng`], so a generator config (seed included)
//! always maps to the same output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EventSequence, WaitingTimes};
use crate::omori::{inverse_count, omori_model};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmoriGenSpec {
    pub p: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub c: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Floor event times to whole minutes (ties are merged).
    #[serde(default)]
    pub round_to_minutes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoGenSpec {
    pub mu: f64,
    pub tau_min: f64,
    pub count: usize,
    pub seed: u64,
}

/// A generated sequence plus bookkeeping from the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub events: EventSequence,
    /// Integrated rate over the horizon, i.e. the expected event count.
    pub expected_count: f64,
    /// Events merged because minute rounding put them on the same minute.
    pub collapsed_ties: usize,
}

/// Unit-rate Poisson arrival times mapped through the inverse of the
/// integrated Omori-Utsu rate (time rescaling), truncated at the horizon.
pub fn gen_omori(spec: &OmoriGenSpec) -> Result<Catalog> {
    if !(spec.horizon > 0.0 && spec.horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive, got {}",
            spec.horizon
        )));
    }
    let expected_count = omori_model(spec.horizon, spec.p, spec.a, spec.c)?;
    let mut rng = rng::seeded(spec.seed);

    let mut times = Vec::new();
    let mut s = 0.0;
    loop {
        s += -(1.0 - rng::unit(&mut rng)).ln();
        if s > expected_count {
            break;
        }
        match inverse_count(s, spec.p, spec.a, spec.c) {
            Some(t) if t <= spec.horizon => times.push(t),
            _ => break,
        }
    }

    if spec.round_to_minutes {
        for t in &mut times {
            *t = t.floor();
        }
    }
    let before = times.len();
    times.dedup();
    let collapsed_ties = before - times.len();
    if collapsed_ties > 0 {
        log::info!("merged {collapsed_ties} events sharing a minute");
    }

    Ok(Catalog {
        events: EventSequence::new(times)?,
        expected_count,
        collapsed_ties,
    })
}

/// Inverse-CDF Pareto draws `tau_min (1 - U)^(-1/mu)`, giving a density
/// falling off as `tau^-(1 + mu)`.
pub fn gen_pareto_waits(spec: &ParetoGenSpec) -> Result<WaitingTimes> {
    if !(spec.mu > 0.0 && spec.mu.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "mu must be > 0, got {}",
            spec.mu
        )));
    }
    if !(spec.tau_min > 0.0 && spec.tau_min.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "tau_min must be > 0, got {}",
            spec.tau_min
        )));
    }
    let mut rng = rng::seeded(spec.seed);
    let exponent = -1.0 / spec.mu;
    let taus = (0..spec.count)
        .map(|_| spec.tau_min * (1.0 - rng::unit(&mut rng)).powf(exponent))
        .collect();
    WaitingTimes::new(taus)
}

/// Homogeneous Poisson events at `rate` per minute on `(0, horizon]`.
pub fn gen_stationary(rate: f64, horizon: f64, seed: u64) -> Result<EventSequence> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "rate must be > 0, got {rate}"
        )));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be > 0, got {horizon}"
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut times = Vec::new();
    let mut t = 0.0;
    loop {
        t += -(1.0 - rng::unit(&mut rng)).ln() / rate;
        if t > horizon {
            break;
        }
        times.push(t);
    }
    EventSequence::new(times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::waiting_times;
    use crate::omori::cumulative_count;

    fn omori(p: f64, a: f64, c: f64, horizon: f64, seed: u64) -> OmoriGenSpec {
        OmoriGenSpec {
            p,
            a,
            c,
            horizon,
            seed,
            round_to_minutes: false,
        }
    }

    #[test]
    fn omori_deterministic() {
        let spec = omori(0.5, 5.0, 0.0, 5000.0, 11);
        assert_eq!(gen_omori(&spec).unwrap(), gen_omori(&spec).unwrap());
        let other = gen_omori(&OmoriGenSpec { seed: 12, ..spec }).unwrap();
        assert_ne!(gen_omori(&spec).unwrap().events, other.events);
    }

    #[test]
    fn constant_rate_counts() {
        let (a, h) = (0.3, 20000.0);
        for seed in 0..5 {
            let cat = gen_omori(&omori(0.0, a, 0.0, h, seed)).unwrap();
            let n = cat.events.len() as f64;
            assert!((n - a * h).abs() < 3.0 * (a * h).sqrt(), "seed {seed}: {n}");
            assert!((cat.expected_count - a * h).abs() < 1e-9);
        }
    }

    #[test]
    fn empirical_count_tracks_integrated_rate() {
        let (p, a, c, h) = (0.7, 8.0, 2.0, 50000.0);
        let cat = gen_omori(&omori(p, a, c, h, 3)).unwrap();
        let grid: Vec<f64> = (1..=10).map(|k| h * k as f64 / 10.0).collect();
        for (t, n) in cumulative_count(&cat.events, &grid).unwrap() {
            let lambda = omori_model(t, p, a, c).unwrap();
            assert!(
                (n - lambda).abs() < 3.0 * lambda.sqrt(),
                "t {t}: {n} vs {lambda}"
            );
        }
    }

    #[test]
    fn saturating_rate_stops() {
        // p > 1 has a finite total count A c^(1-p) / (p - 1) ~ 4.47.
        let cat = gen_omori(&omori(1.5, 5.0, 5.0, 1e9, 1)).unwrap();
        assert!(cat.events.len() < 20);
        assert!((cat.expected_count - 5.0 * 5f64.powf(-0.5) / 0.5).abs() < 1e-3);
    }

    #[test]
    fn minute_rounding_merges_ties() {
        let spec = OmoriGenSpec {
            round_to_minutes: true,
            ..omori(0.5, 20.0, 0.0, 2000.0, 5)
        };
        let cat = gen_omori(&spec).unwrap();
        assert!(cat.collapsed_ties > 0);
        assert!(cat.events.times().iter().all(|t| t.fract() == 0.0));
        let raw = gen_omori(&OmoriGenSpec {
            round_to_minutes: false,
            ..spec
        })
        .unwrap();
        assert_eq!(raw.events.len(), cat.events.len() + cat.collapsed_ties);
    }

    #[test]
    fn omori_rejects_bad_params() {
        assert!(gen_omori(&omori(1.2, 1.0, 0.0, 10.0, 0)).is_err());
        assert!(gen_omori(&omori(0.5, -1.0, 0.0, 10.0, 0)).is_err());
        assert!(gen_omori(&omori(0.5, 1.0, 0.0, 0.0, 0)).is_err());
    }

    #[test]
    fn pareto_support_and_determinism() {
        let spec = ParetoGenSpec {
            mu: 0.95,
            tau_min: 2.0,
            count: 5000,
            seed: 9,
        };
        let w = gen_pareto_waits(&spec).unwrap();
        assert_eq!(w.len(), 5000);
        assert!(w.as_slice().iter().all(|&t| t >= 2.0));
        assert_eq!(w, gen_pareto_waits(&spec).unwrap());
        assert!(gen_pareto_waits(&ParetoGenSpec { mu: 0.0, ..spec }).is_err());
        assert!(gen_pareto_waits(&ParetoGenSpec {
            tau_min: 0.0,
            ..spec
        })
        .is_err());
    }

    #[test]
    fn pareto_ccdf_slope() {
        // Regression of log CCDF on log tau over the well-populated part of
        // the tail (CCDF >= 100/n).
        for &mu in &[0.94, 0.96, 1.5] {
            let w = gen_pareto_waits(&ParetoGenSpec {
                mu,
                tau_min: 1.0,
                count: 10_000,
                seed: 21,
            })
            .unwrap();
            let mut s = w.as_slice().to_vec();
            s.sort_by(f64::total_cmp);
            let n = s.len() as f64;
            let (x, y): (Vec<f64>, Vec<f64>) = s
                .iter()
                .enumerate()
                .map(|(i, &t)| (t.ln(), ((n - i as f64) / n).ln()))
                .filter(|&(_, lc)| lc >= (100.0 / n).ln())
                .unzip();
            let (slope, _, _) = crate::optimize::fit_line(&x, &y, None).unwrap();
            assert!((slope + mu).abs() < 0.05, "mu {mu}: slope {slope}");
        }
    }

    #[test]
    fn stationary_statistics() {
        let rate = 0.2;
        let h = 50_000.0;
        let ev = gen_stationary(rate, h, 4).unwrap();
        let n = ev.len() as f64;
        assert!((n - rate * h).abs() < 3.0 * (rate * h).sqrt());
        let gaps = waiting_times(&ev);
        let mean = gaps.as_slice().iter().sum::<f64>() / gaps.len() as f64;
        // Exponential gaps: standard deviation equals the mean.
        let se = (1.0 / rate) / (gaps.len() as f64).sqrt();
        assert!((mean - 1.0 / rate).abs() < 3.0 * se);
        assert_eq!(ev, gen_stationary(rate, h, 4).unwrap());
        assert!(gen_stationary(0.0, h, 4).is_err());
    }
}
