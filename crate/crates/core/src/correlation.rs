//! Event-event correlation `C(m, n)`, aging curves `C(n + n_w, n_w)` and their
//! collapse onto a master curve under `n -> n / f(n_w)`.
//!
//! `C(m, n)` is the Pearson correlation between the shifted occurrence-time
//! windows `{t_{m+k}}` and `{t_{n+k}}`, `k = 0..M-1`, with
//! `M = L - max(m, n)` so both windows stay inside a sequence of length `L`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventSequence;
use crate::optimize::{fit_line, golden_section, log_space};

pub const DEFAULT_N_MAX: usize = 60;
pub const F_MIN: f64 = 0.2;
pub const F_MAX: f64 = 50.0;
const F_GRID_POINTS: usize = 241;
/// Fewest overlapping points a rescaled curve needs to be scored.
const MIN_OVERLAP: usize = 3;

/// `(C, M)` for two event indices of a raw time list.
pub fn correlation_of_times(times: &[f64], m: usize, n: usize) -> Result<(f64, usize)> {
    let len = times.len();
    let m_used = len.saturating_sub(m.max(n));
    if m_used < 2 {
        return Err(Error::InsufficientData(format!(
            "C({m}, {n}) needs at least 2 shared samples, sequence has {len} events"
        )));
    }
    let x = &times[m..m + m_used];
    let y = &times[n..n + m_used];
    let mean = |v: &[f64]| {
        let pivot = v[0];
        pivot + v.iter().map(|t| t - pivot).sum::<f64>() / v.len() as f64
    };
    let (mx, my) = (mean(x), mean(y));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::Degenerate(format!(
            "C({m}, {n}): zero variance window"
        )));
    }
    let c = sxy / (sxx.sqrt() * syy.sqrt());
    Ok((c.clamp(-1.0, 1.0), m_used))
}

pub fn event_corr(events: &EventSequence, m: usize, n: usize) -> Result<f64> {
    correlation_of_times(events.times(), m, n).map(|(c, _)| c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub c: f64,
    /// Samples `M` behind this value.
    pub m_used: usize,
}

/// `C(n + n_w, n_w)` for `n = 0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub n_w: usize,
    pub points: Vec<CurvePoint>,
}

impl CorrelationCurve {
    /// Linear interpolation on the sampled `n`; `None` outside the samples.
    fn interpolate(&self, x: f64) -> Option<f64> {
        let pts = &self.points;
        let first = pts.first()?.n as f64;
        let last = pts.last()?.n as f64;
        if !(x >= first && x <= last) {
            return None;
        }
        let i = pts.partition_point(|p| (p.n as f64) <= x);
        if i == 0 {
            return Some(pts[0].c);
        }
        if i == pts.len() {
            return Some(pts[pts.len() - 1].c);
        }
        let (a, b) = (&pts[i - 1], &pts[i]);
        let w = (x - a.n as f64) / (b.n - a.n) as f64;
        Some(a.c + w * (b.c - a.c))
    }
}

pub fn aging_curves(
    events: &EventSequence,
    n_w_list: &[usize],
    n_max: usize,
) -> Result<Vec<CorrelationCurve>> {
    let len = events.len();
    if let Some(&worst) = n_w_list.iter().max() {
        if len < worst + n_max + 2 {
            return Err(Error::InsufficientData(format!(
                "n_max = {n_max} with n_w = {worst} needs {} events, have {len}",
                worst + n_max + 2
            )));
        }
    }
    let mut order: Vec<usize> = n_w_list.to_vec();
    order.sort_unstable();
    order.dedup();
    order
        .into_iter()
        .map(|n_w| {
            let points = (0..=n_max)
                .map(|n| {
                    correlation_of_times(events.times(), n + n_w, n_w)
                        .map(|(c, m_used)| CurvePoint { n, c, m_used })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CorrelationCurve { n_w, points })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactor {
    pub n_w: usize,
    pub f: f64,
    /// Mean squared gap to the reference at `f = 1`.
    pub residual_before: f64,
    /// Mean squared gap to the reference at the fitted `f`.
    pub residual_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseResult {
    pub reference_n_w: usize,
    pub n_max: usize,
    pub scale_factors: Vec<ScaleFactor>,
    /// `a` of `f(n_w) = a n_w^gamma + 1`, once fitted.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gamma: Option<f64>,
    /// Mean of `residual_after` over the non-reference curves.
    pub collapse_residual: f64,
}

impl CollapseResult {
    pub fn factors(&self) -> Vec<(usize, f64)> {
        self.scale_factors.iter().map(|s| (s.n_w, s.f)).collect()
    }

    /// Fits the `f(n_w)` law and stores `(a, gamma)`.
    pub fn fit_law(&mut self) -> Result<(f64, f64)> {
        let (a, gamma) = fit_f(&self.factors())?;
        self.a = Some(a);
        self.gamma = Some(gamma);
        Ok((a, gamma))
    }

    pub fn write_scale_factors_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n_w", "f"])?;
        for s in &self.scale_factors {
            w.write_record([s.n_w.to_string(), s.f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean squared difference between `curve(n)` and `reference(n / f)` over the
/// points whose rescaled abscissa falls inside the reference samples.
fn collapse_residual(curve: &CorrelationCurve, reference: &CorrelationCurve, f: f64) -> f64 {
    let mut sum = 0.0;
    let mut used = 0usize;
    for p in &curve.points {
        if let Some(r) = reference.interpolate(p.n as f64 / f) {
            sum += (p.c - r).powi(2);
            used += 1;
        }
    }
    if used < MIN_OVERLAP {
        f64::INFINITY
    } else {
        sum / used as f64
    }
}

fn truncated(curve: &CorrelationCurve, n_max: usize) -> CorrelationCurve {
    CorrelationCurve {
        n_w: curve.n_w,
        points: curve
            .points
            .iter()
            .copied()
            .filter(|p| p.n <= n_max)
            .collect(),
    }
}

/// Per-curve scale factor `f(n_w)` that best maps `C_{n_w}(n)` onto the
/// reference `C_ref(n / f)`.
///
/// Search: log-grid over `[0.2, 50]`, then golden-section between the
/// neighbours of the best node. `f = 1` is always a candidate, so collapsing
/// never increases a curve's residual. The reference keeps `f = 1`.
pub fn collapse(
    curves: &[CorrelationCurve],
    reference_n_w: usize,
    n_max: usize,
) -> Result<CollapseResult> {
    let reference = curves
        .iter()
        .find(|c| c.n_w == reference_n_w)
        .map(|c| truncated(c, n_max))
        .ok_or_else(|| {
            Error::InvalidParameter(format!("no curve with reference n_w = {reference_n_w}"))
        })?;
    if reference.points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "reference curve has {} points, need 3",
            reference.points.len()
        )));
    }

    let grid = log_space(F_MIN, F_MAX, F_GRID_POINTS);
    let mut scale_factors = Vec::with_capacity(curves.len());
    for curve in curves {
        let curve = truncated(curve, n_max);
        if curve.n_w == reference_n_w {
            scale_factors.push(ScaleFactor {
                n_w: curve.n_w,
                f: 1.0,
                residual_before: 0.0,
                residual_after: 0.0,
            });
            continue;
        }
        let objective = |f: f64| collapse_residual(&curve, &reference, f);
        let before = objective(1.0);

        let (mut best_i, mut best_v) = (0usize, f64::INFINITY);
        for (i, &f) in grid.iter().enumerate() {
            let v = objective(f);
            if v < best_v {
                best_i = i;
                best_v = v;
            }
        }
        if !best_v.is_finite() && !before.is_finite() {
            return Err(Error::Degenerate(format!(
                "curve n_w = {} never overlaps the reference after rescaling",
                curve.n_w
            )));
        }

        let lo = grid[best_i.saturating_sub(1)].ln();
        let hi = grid[(best_i + 1).min(grid.len() - 1)].ln();
        let (u, gv) = golden_section(|u| objective(u.exp()), lo, hi, 1e-10, 120);
        let (mut f, mut v) = (grid[best_i], best_v);
        if gv < v {
            f = u.exp();
            v = gv;
        }
        if before <= v {
            f = 1.0;
            v = before;
        }
        scale_factors.push(ScaleFactor {
            n_w: curve.n_w,
            f,
            residual_before: before,
            residual_after: v,
        });
    }
    scale_factors.sort_by_key(|s| s.n_w);

    let others: Vec<f64> = scale_factors
        .iter()
        .filter(|s| s.n_w != reference_n_w)
        .map(|s| s.residual_after)
        .collect();
    let collapse_residual = if others.is_empty() {
        0.0
    } else {
        others.iter().sum::<f64>() / others.len() as f64
    };

    Ok(CollapseResult {
        reference_n_w,
        n_max,
        scale_factors,
        a: None,
        gamma: None,
        collapse_residual,
    })
}

/// Least squares of `ln(f - 1)` on `ln n_w`: slope `gamma`, intercept `ln a`.
///
/// Entries with `n_w = 0` or `f <= 1` carry no information about the law and
/// are skipped.
pub fn fit_f(scale_factors: &[(usize, f64)]) -> Result<(f64, f64)> {
    let (x, y): (Vec<f64>, Vec<f64>) = scale_factors
        .iter()
        .filter(|&&(n_w, f)| n_w > 0 && f > 1.0)
        .map(|&(n_w, f)| ((n_w as f64).ln(), (f - 1.0).ln()))
        .unzip();
    if x.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} usable scale factors (n_w > 0, f > 1), need 2",
            x.len()
        )));
    }
    let (gamma, intercept, _) =
        fit_line(&x, &y, None).ok_or_else(|| Error::Degenerate("all n_w equal".into()))?;
    Ok((intercept.exp(), gamma))
}

/// `(n_w, n, C)` rows.
pub fn write_curves_csv<W: Write>(curves: &[CorrelationCurve], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n_w", "n", "C"])?;
    for curve in curves {
        for p in &curve.points {
            w.write_record([curve.n_w.to_string(), p.n.to_string(), p.c.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `(n_w, n / f, C)` rows using the collapse's scale factors.
pub fn write_collapsed_csv<W: Write>(
    curves: &[CorrelationCurve],
    result: &CollapseResult,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n_w", "n_over_f", "C"])?;
    for curve in curves {
        let Some(sf) = result.scale_factors.iter().find(|s| s.n_w == curve.n_w) else {
            continue;
        };
        for p in curve.points.iter().filter(|p| p.n <= result.n_max) {
            w.write_record([
                curve.n_w.to_string(),
                (p.n as f64 / sf.f).to_string(),
                p.c.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gen_stationary;
    use proptest::prelude::*;

    fn seq(times: Vec<f64>) -> EventSequence {
        EventSequence::new(times).unwrap()
    }

    #[test]
    fn diagonal_is_one() {
        let ev = seq(vec![0.0, 3.0, 4.0, 10.0, 11.0, 30.0]);
        for n in 0..5 {
            assert!((event_corr(&ev, n, n).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn arithmetic_sequence_is_one() {
        let ev = seq((0..50).map(|k| k as f64).collect());
        for &(m, n) in &[(0, 1), (5, 30), (47, 3), (10, 10)] {
            assert!((event_corr(&ev, m, n).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_samples() {
        let ev = seq(vec![0.0, 1.0, 2.0]);
        assert!(event_corr(&ev, 1, 0).is_ok());
        assert!(matches!(
            event_corr(&ev, 2, 0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn stationary_catalog_does_not_age() {
        let ev = gen_stationary(0.5, 20_000.0, 8).unwrap();
        let a = event_corr(&ev, 20, 10).unwrap();
        let b = event_corr(&ev, 30, 20).unwrap();
        assert!((a - b).abs() < 1e-3, "{a} {b}");
    }

    #[test]
    fn aging_curve_shape_and_errors() {
        let ev = gen_stationary(0.5, 2_000.0, 1).unwrap();
        let curves = aging_curves(&ev, &[20, 0, 10], 30).unwrap();
        assert_eq!(
            curves.iter().map(|c| c.n_w).collect::<Vec<_>>(),
            vec![0, 10, 20]
        );
        for c in &curves {
            assert_eq!(c.points.len(), 31);
            assert!((c.points[0].c - 1.0).abs() < 1e-12);
            assert_eq!(c.points[0].m_used, ev.len() - c.n_w);
        }
        assert!(aging_curves(&ev, &[0], ev.len()).is_err());
    }

    fn family(f_of: impl Fn(usize) -> f64, n_ws: &[usize], n_max: usize) -> Vec<CorrelationCurve> {
        let master = |x: f64| (-x / 15.0).exp() * 0.7 + 0.3;
        n_ws.iter()
            .map(|&n_w| CorrelationCurve {
                n_w,
                points: (0..=n_max)
                    .map(|n| CurvePoint {
                        n,
                        c: master(n as f64 / f_of(n_w)),
                        m_used: 100,
                    })
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn identical_curve_scale_one() {
        let curves = family(|_| 1.0, &[0, 10], 60);
        let res = collapse(&curves, 0, 60).unwrap();
        assert_eq!(res.factors(), vec![(0, 1.0), (10, 1.0)]);
        assert_eq!(res.collapse_residual, 0.0);
        let single = collapse(&curves[..1], 0, 60).unwrap();
        assert_eq!(single.factors(), vec![(0, 1.0)]);
    }

    #[test]
    fn planted_scales_recovered() {
        let planted = |n_w: usize| 1.0 + 0.08 * n_w as f64;
        let n_ws = [0, 5, 10, 20, 40];
        let curves = family(planted, &n_ws, 60);
        let mut res = collapse(&curves, 0, 60).unwrap();
        for s in &res.scale_factors {
            assert!(
                (s.f - planted(s.n_w)).abs() / planted(s.n_w) < 0.05,
                "{s:?}"
            );
            assert!(s.residual_after <= s.residual_before);
        }
        let (a, gamma) = res.fit_law().unwrap();
        assert!((a - 0.08).abs() / 0.08 < 0.05, "a {a}");
        assert!((gamma - 1.0).abs() < 0.05, "gamma {gamma}");
    }

    #[test]
    fn collapse_errors() {
        let curves = family(|_| 1.0, &[0, 10], 60);
        assert!(matches!(
            collapse(&curves, 5, 60),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            collapse(&curves, 0, 1),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn fit_f_examples() {
        let exact: Vec<(usize, f64)> = (1..=5)
            .map(|k| (10 * k, 0.005 * (10.0 * k as f64).powf(0.984) + 1.0))
            .collect();
        let (a, g) = fit_f(&exact).unwrap();
        assert!(
            (a - 0.005).abs() < 1e-12 && (g - 0.984).abs() < 1e-12,
            "{a} {g}"
        );

        let linear: Vec<(usize, f64)> = [0usize, 3, 7, 20]
            .iter()
            .map(|&n| (n, n as f64 + 1.0))
            .collect();
        let (a, g) = fit_f(&linear).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && (g - 1.0).abs() < 1e-12);

        assert!(fit_f(&[(0, 1.0), (10, 0.9), (20, 1.5)]).is_err());
    }

    #[test]
    fn csv_exports() {
        let curves = family(|n_w| 1.0 + n_w as f64 / 10.0, &[0, 10], 2);
        let res = collapse(&curves, 0, 2).unwrap();
        let mut buf = Vec::new();
        write_curves_csv(&curves, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n_w,n,C\n0,0,1\n"));
        assert_eq!(text.lines().count(), 7);
        let mut buf = Vec::new();
        write_collapsed_csv(&curves, &res, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 7);
        let mut buf = Vec::new();
        res.write_scale_factors_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("n_w,f\n0,1\n"));
    }

    proptest! {
        #[test]
        fn symmetric_and_affine_invariant(
            gaps in prop::collection::vec(0.5f64..100.0, 12..80),
            m in 0usize..10,
            n in 0usize..10,
            alpha in 0.01f64..100.0,
            beta in 0.0f64..1e4,
        ) {
            let ev = EventSequence::from_gaps(0.0, &gaps).unwrap();
            let c_mn = event_corr(&ev, m, n).unwrap();
            let c_nm = event_corr(&ev, n, m).unwrap();
            prop_assert_eq!(c_mn, c_nm);
            prop_assert!(c_mn.abs() <= 1.0);
            let moved = EventSequence::new(ev.times().iter().map(|t| alpha * t + beta).collect()).unwrap();
            let c2 = event_corr(&moved, m, n).unwrap();
            prop_assert!((c2 - c_mn).abs() < 1e-9);
            prop_assert!((event_corr(&ev, m, m).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
