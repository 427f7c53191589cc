//! Waiting-time histogram and the power-law exponent `mu` in
//! `P(tau) ~ tau^-(1 + mu)`.
//!
//! Bins start at one minute: bin `j` covers `[1 + j b, 1 + (j + 1) b)`. When
//! every gap is a whole number of minutes (and `b` is too) the histogram is on
//! the minute lattice and bin `j` holds the integers `1 + j b ..= (j + 1) b`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::WaitingTimes;
use crate::optimize::fit_line;

/// Lower end of the default LSQ range, in minutes.
pub const DEFAULT_TAU_MIN: f64 = 1.0;
pub const MIN_LSQ_BINS: usize = 5;
pub const MIN_MLE_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinSupport {
    /// Whole-minute gaps; a bin stands for the integers it contains.
    Lattice,
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaitingHistogram {
    bin_size: f64,
    support: BinSupport,
    counts: BTreeMap<i64, u64>,
    total: u64,
    /// Report densities instead of raw counts.
    pub normalized: bool,
}

/// One nonempty bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    /// Inclusive lower edge.
    pub lo: f64,
    /// Upper edge: inclusive on the lattice, exclusive otherwise.
    pub hi: f64,
    /// Representative abscissa used for plotting and fitting.
    pub center: f64,
    pub count: u64,
}

impl WaitingHistogram {
    pub fn bin_size(&self) -> f64 {
        self.bin_size
    }

    pub fn support(&self) -> BinSupport {
        self.support
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Raw counts keyed by bin number.
    pub fn counts(&self) -> &BTreeMap<i64, u64> {
        &self.counts
    }

    fn bin(&self, j: i64, count: u64) -> Bin {
        let b = self.bin_size;
        let lo = 1.0 + j as f64 * b;
        match self.support {
            BinSupport::Lattice => Bin {
                lo,
                hi: lo + b - 1.0,
                center: lo + (b - 1.0) / 2.0,
                count,
            },
            BinSupport::Continuous => {
                let hi = lo + b;
                let center = if lo > 0.0 { (lo * hi).sqrt() } else { hi / 2.0 };
                Bin {
                    lo,
                    hi,
                    center,
                    count,
                }
            }
        }
    }

    /// Nonempty bins in increasing order.
    pub fn bins(&self) -> Vec<Bin> {
        self.counts.iter().map(|(&j, &n)| self.bin(j, n)).collect()
    }

    /// Bin height as reported: the raw count, or count / (total * width)
    /// when `normalized` is set.
    pub fn height(&self, bin: &Bin) -> f64 {
        if self.normalized && self.total > 0 {
            bin.count as f64 / (self.total as f64 * self.bin_size)
        } else {
            bin.count as f64
        }
    }

    /// Two-column CSV `(tau, count)` with `tau` the bin center.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tau", "count"])?;
        for bin in self.bins() {
            w.write_record([bin.center.to_string(), self.height(&bin).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn build_histogram(taus: &WaitingTimes, bin_size: f64) -> Result<WaitingHistogram> {
    if !(bin_size > 0.0 && bin_size.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "bin size must be positive, got {bin_size}"
        )));
    }
    let support = if taus.on_minute_grid() && bin_size.fract() == 0.0 {
        BinSupport::Lattice
    } else {
        BinSupport::Continuous
    };
    let mut counts = BTreeMap::new();
    for &tau in taus.as_slice() {
        let j = ((tau - 1.0) / bin_size).floor() as i64;
        *counts.entry(j).or_insert(0) += 1;
    }
    Ok(WaitingHistogram {
        bin_size,
        support,
        counts,
        total: taus.len() as u64,
        normalized: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// Count-weighted least squares of `ln count` on `ln tau`.
    LogLogLsq,
    /// Continuous power-law maximum likelihood above `tau_min`.
    Mle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitRange {
    pub tau_min: f64,
    pub tau_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaitingFit {
    pub mu: f64,
    pub fit_range: FitRange,
    pub method: FitMethod,
    pub stderr: f64,
    /// Fitted height is `prefactor * tau^-(1 + mu)`: bin counts for LSQ,
    /// counts per minute for MLE.
    pub prefactor: f64,
    /// Bins (LSQ) or gaps (MLE) that entered the fit.
    pub used: usize,
}

/// Default LSQ range: `[1, center of the largest bin holding two or more
/// gaps]`. Single-gap tail bins are mostly noise.
pub fn default_fit_range(hist: &WaitingHistogram) -> Option<FitRange> {
    let tau_max = hist.bins().into_iter().rev().find(|b| b.count >= 2)?.center;
    (tau_max >= DEFAULT_TAU_MIN).then_some(FitRange {
        tau_min: DEFAULT_TAU_MIN,
        tau_max,
    })
}

/// Slope of `ln count` against `ln tau` over nonempty bins whose center lies
/// in `range`; `mu = -slope - 1`.
///
/// Each bin is weighted by its count, the inverse variance of a Poisson
/// log-count. Empty bins are skipped.
pub fn fit_mu_lsq(hist: &WaitingHistogram, range: FitRange) -> Result<WaitingFit> {
    let used: Vec<Bin> = hist
        .bins()
        .into_iter()
        .filter(|b| b.center >= range.tau_min && b.center <= range.tau_max && b.center > 0.0)
        .collect();
    if used.len() < MIN_LSQ_BINS {
        return Err(Error::InsufficientData(format!(
            "{} nonempty bins in [{}, {}], need {MIN_LSQ_BINS}",
            used.len(),
            range.tau_min,
            range.tau_max
        )));
    }
    let x: Vec<f64> = used.iter().map(|b| b.center.ln()).collect();
    let y: Vec<f64> = used.iter().map(|b| hist.height(b).ln()).collect();
    let w: Vec<f64> = used.iter().map(|b| b.count as f64).collect();
    let (slope, intercept, stderr) = fit_line(&x, &y, Some(&w))
        .ok_or_else(|| Error::Degenerate("all waiting times fall in one bin".into()))?;
    let mu = -slope - 1.0;
    if !(mu > 0.0) {
        return Err(Error::Degenerate(format!(
            "histogram decays too slowly for a positive exponent (mu = {mu})"
        )));
    }
    Ok(WaitingFit {
        mu,
        fit_range: range,
        method: FitMethod::LogLogLsq,
        stderr,
        prefactor: intercept.exp(),
        used: used.len(),
    })
}

/// Continuous power-law MLE `mu = n / sum ln(tau_i / tau_min)` over the gaps
/// with `tau >= tau_min`.
pub fn fit_mu_mle(taus: &WaitingTimes, tau_min: f64) -> Result<WaitingFit> {
    if !(tau_min > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tau_min must be > 0, got {tau_min}"
        )));
    }
    let tail: Vec<f64> = taus
        .as_slice()
        .iter()
        .copied()
        .filter(|&t| t >= tau_min)
        .collect();
    if tail.len() < MIN_MLE_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} waiting times >= {tau_min}, need {MIN_MLE_SAMPLES}",
            tail.len()
        )));
    }
    let log_sum: f64 = tail.iter().map(|t| (t / tau_min).ln()).sum();
    if !(log_sum > 0.0) {
        return Err(Error::Degenerate("all waiting times equal tau_min".into()));
    }
    let n = tail.len() as f64;
    let mu = n / log_sum;
    let tau_max = tail.iter().cloned().fold(tau_min, f64::max);
    Ok(WaitingFit {
        mu,
        fit_range: FitRange { tau_min, tau_max },
        method: FitMethod::Mle,
        stderr: mu / n.sqrt(),
        prefactor: n * mu * tau_min.powf(mu),
        used: tail.len(),
    })
}

/// Builds the histogram and fits with `method`.
///
/// Without an explicit range, LSQ uses [`default_fit_range`] and MLE starts at
/// the smallest gap.
pub fn fit_mu(
    taus: &WaitingTimes,
    bin_size: f64,
    range: Option<FitRange>,
    method: FitMethod,
) -> Result<WaitingFit> {
    match method {
        FitMethod::LogLogLsq => {
            let hist = build_histogram(taus, bin_size)?;
            let range = match range {
                Some(r) => r,
                None => default_fit_range(&hist)
                    .ok_or_else(|| Error::InsufficientData("no waiting times to fit".into()))?,
            };
            fit_mu_lsq(&hist, range)
        }
        FitMethod::Mle => {
            let tau_min = match range {
                Some(r) => r.tau_min,
                None => taus
                    .as_slice()
                    .iter()
                    .cloned()
                    .reduce(f64::min)
                    .ok_or_else(|| Error::InsufficientData("no waiting times to fit".into()))?,
            };
            fit_mu_mle(taus, tau_min)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_pareto_waits, ParetoGenSpec};
    use proptest::prelude::*;

    fn w(v: &[f64]) -> WaitingTimes {
        WaitingTimes::new(v.to_vec()).unwrap()
    }

    #[test]
    fn unit_bins() {
        let h = build_histogram(&w(&[1.0, 1.0, 2.0]), 1.0).unwrap();
        assert_eq!(h.support(), BinSupport::Lattice);
        let got: Vec<(f64, u64)> = h.bins().iter().map(|b| (b.center, b.count)).collect();
        assert_eq!(got, vec![(1.0, 2), (2.0, 1)]);
        assert_eq!(h.total(), 3);
    }

    #[test]
    fn empty_histogram() {
        let h = build_histogram(&WaitingTimes::default(), 1.0).unwrap();
        assert!(h.is_empty());
        assert!(default_fit_range(&h).is_none());
    }

    #[test]
    fn wide_bins() {
        let h = build_histogram(&w(&[1.0, 2.0, 3.0]), 2.0).unwrap();
        let got: Vec<(f64, f64, u64)> = h.bins().iter().map(|b| (b.lo, b.hi, b.count)).collect();
        assert_eq!(got, vec![(1.0, 2.0, 2), (3.0, 4.0, 1)]);
        assert!(build_histogram(&w(&[1.0]), 0.0).is_err());
        assert!(build_histogram(&w(&[1.0]), -2.0).is_err());
    }

    #[test]
    fn csv_two_columns() {
        let h = build_histogram(&w(&[1.0, 1.0, 4.0]), 1.0).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "tau,count\n1,2\n4,1\n");
    }

    fn exact_power_law(mu: f64, bins: usize, scale: f64) -> WaitingHistogram {
        let mut counts = BTreeMap::new();
        for j in 0..bins as i64 {
            let tau = 1.0 + j as f64;
            counts.insert(j, (scale * tau.powf(-(1.0 + mu))).round() as u64);
        }
        let total = counts.values().sum();
        WaitingHistogram {
            bin_size: 1.0,
            support: BinSupport::Lattice,
            counts,
            total,
            normalized: false,
        }
    }

    #[test]
    fn lsq_exact_power_law() {
        // Counts large enough that rounding to integers is far below 1e-12
        // relative.
        let h = exact_power_law(0.9413, 30, 1e18);
        let fit = fit_mu_lsq(
            &h,
            FitRange {
                tau_min: 1.0,
                tau_max: 30.0,
            },
        )
        .unwrap();
        assert!((fit.mu - 0.9413).abs() < 1e-9, "{fit:?}");
        assert_eq!(fit.used, 30);
    }

    #[test]
    fn lsq_scale_invariant() {
        let taus = gen_pareto_waits(&ParetoGenSpec {
            mu: 0.95,
            tau_min: 1.0,
            count: 3000,
            seed: 2,
        })
        .unwrap();
        let mut h = build_histogram(&taus, 1.0).unwrap();
        let range = default_fit_range(&h).unwrap();
        let raw = fit_mu_lsq(&h, range).unwrap();
        h.normalized = true;
        let norm = fit_mu_lsq(&h, range).unwrap();
        assert!((raw.mu - norm.mu).abs() < 1e-10);
    }

    #[test]
    fn lsq_needs_bins() {
        let h = build_histogram(&w(&[1.0, 2.0, 2.0, 3.0]), 1.0).unwrap();
        assert!(matches!(
            fit_mu_lsq(
                &h,
                FitRange {
                    tau_min: 1.0,
                    tau_max: 10.0
                }
            ),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn default_range_ends_at_last_repeated_bin() {
        let mut v = Vec::new();
        for (tau, n) in [
            (0.5, 9),
            (1.0, 40),
            (2.0, 20),
            (3.0, 12),
            (7.0, 5),
            (9.0, 2),
            (30.0, 1),
        ] {
            v.extend(std::iter::repeat_n(tau, n));
        }
        let h = build_histogram(&w(&v), 1.0).unwrap();
        let r = default_fit_range(&h).unwrap();
        assert_eq!(r.tau_min, 1.0);
        assert!((9.0..10.0).contains(&r.tau_max), "{r:?}");
        let h = build_histogram(&w(&[0.2, 0.3, 4.0]), 1.0).unwrap();
        assert!(default_fit_range(&h).is_none());
    }

    #[test]
    fn mle_recovers_pareto() {
        let taus = gen_pareto_waits(&ParetoGenSpec {
            mu: 0.95,
            tau_min: 1.0,
            count: 10_000,
            seed: 17,
        })
        .unwrap();
        let fit = fit_mu_mle(&taus, 1.0).unwrap();
        assert!((fit.mu - 0.95).abs() < 0.05, "{fit:?}");
        assert!((fit.stderr - fit.mu / 100.0).abs() < 1e-12);
    }

    #[test]
    fn mle_errors() {
        assert!(matches!(
            fit_mu_mle(&w(&[2.0; 10]), 1.0),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            fit_mu_mle(&w(&[3.0; 60]), 3.0),
            Err(Error::Degenerate(_))
        ));
        assert!(fit_mu_mle(&w(&[3.0; 60]), 0.0).is_err());
    }

    #[test]
    fn dispatcher_defaults() {
        let taus = gen_pareto_waits(&ParetoGenSpec {
            mu: 1.5,
            tau_min: 1.0,
            count: 10_000,
            seed: 5,
        })
        .unwrap();
        let lsq = fit_mu(&taus, 1.0, None, FitMethod::LogLogLsq).unwrap();
        let mle = fit_mu(&taus, 1.0, None, FitMethod::Mle).unwrap();
        assert!((lsq.mu - 1.5).abs() < 0.1, "{lsq:?}");
        assert!((mle.mu - 1.5).abs() < 0.05, "{mle:?}");
        assert_eq!(mle.method, FitMethod::Mle);
    }

    proptest! {
        #[test]
        fn mle_scale_invariant(seed in 0u64..1000, factor in 0.01f64..100.0) {
            let taus = gen_pareto_waits(&ParetoGenSpec { mu: 1.2, tau_min: 1.0, count: 200, seed }).unwrap();
            let scaled = WaitingTimes::new(taus.as_slice().iter().map(|t| t * factor).collect()).unwrap();
            let a = fit_mu_mle(&taus, 1.0).unwrap();
            let b = fit_mu_mle(&scaled, factor).unwrap();
            prop_assert!((a.mu - b.mu).abs() < 1e-9 * a.mu);
        }

        #[test]
        fn histogram_conserves_count(v in prop::collection::vec(1u32..500, 0..300), b in 1u32..10) {
            let taus = WaitingTimes::new(v.iter().map(|&x| x as f64).collect()).unwrap();
            let h = build_histogram(&taus, b as f64).unwrap();
            prop_assert_eq!(h.counts().values().sum::<u64>(), v.len() as u64);
        }
    }
}
