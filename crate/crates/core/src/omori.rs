//! Omori-Utsu aftershock decay.
//!
//! The rate `A (t + c)^-p` integrates to the cumulative count
//!
//! ```text
//! N(t) = A [(t + c)^(1-p) - c^(1-p)] / (1 - p)    p != 1
//! N(t) = A ln(t / c + 1)                          p == 1
//! ```
//!
//! [`fit_omori`] fits that curve to the empirical count on a uniform minute
//! grid by least squares. `A` enters linearly, so for each candidate `(p, c)`
//! it is solved in closed form and only `(p, c)` is searched: a coarse grid
//! with a profiled `p` per `c` column, a nested golden-section search around
//! the best column, and a final polish on the full grid.
//!
//! [`fit_omori_mle`] is a point-process likelihood cross-check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventSequence;
use crate::optimize::{golden_section, log_space};

/// Within this distance of 1 the logarithmic branch is used.
pub const LOG_BRANCH_EPS: f64 = 1e-6;

pub const P_MIN: f64 = 0.05;
pub const P_MAX: f64 = 2.5;
const P_STEP_HUNDREDTHS: usize = 5;
const C_MIN: f64 = 0.1;
const C_MAX: f64 = 1e4;
const C_GRID_POINTS: usize = 26;
/// Largest number of grid points the coarse pass looks at.
const COARSE_POINTS: usize = 2048;
const REFINE_ROUNDS: usize = 4;
pub const MIN_EVENTS: usize = 10;

/// `N(t)` with `A = 1`; NaN outside the parameter domain.
pub(crate) fn unit_count(t: f64, p: f64, c: f64) -> f64 {
    if (p - 1.0).abs() < LOG_BRANCH_EPS {
        if c > 0.0 {
            (t / c).ln_1p()
        } else {
            f64::NAN
        }
    } else {
        let q = 1.0 - p;
        if c == 0.0 {
            if q > 0.0 {
                t.powf(q) / q
            } else {
                f64::NAN
            }
        } else {
            // c^q [(1 + t/c)^q - 1] / q, written to stay accurate near p = 1
            c.powf(q) * (q * (t / c).ln_1p()).exp_m1() / q
        }
    }
}

fn check_params(p: f64, a: f64, c: f64) -> Result<()> {
    if !(p >= 0.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p must be >= 0, got {p}")));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!("A must be > 0, got {a}")));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("c must be >= 0, got {c}")));
    }
    if c == 0.0 && p > 1.0 - LOG_BRANCH_EPS {
        return Err(Error::InvalidParameter(format!(
            "c = 0 requires p < 1, got p = {p}"
        )));
    }
    Ok(())
}

/// Cumulative Omori-Utsu count at `t` minutes.
///
/// `p = 0` (a constant rate) is accepted alongside the usual `p > 0`.
pub fn omori_model(t: f64, p: f64, a: f64, c: f64) -> Result<f64> {
    check_params(p, a, c)?;
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("t must be >= 0, got {t}")));
    }
    Ok(a * unit_count(t, p, c))
}

/// Inverse of the cumulative count: the time at which `N` reaches `n`, or
/// `None` when the count never gets there (`p > 1` saturates).
pub(crate) fn inverse_count(n: f64, p: f64, a: f64, c: f64) -> Option<f64> {
    let s = n / a;
    if (p - 1.0).abs() < LOG_BRANCH_EPS {
        return Some(c * s.exp_m1());
    }
    let q = 1.0 - p;
    if c == 0.0 {
        return Some((s * q).powf(1.0 / q));
    }
    let z = s * q / c.powf(q);
    if z <= -1.0 {
        return None;
    }
    Some(c * (z.ln_1p() / q).exp_m1())
}

/// `(t, N(t))` where `N(t)` counts events at or before `t`.
pub fn cumulative_count(events: &EventSequence, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if let Some(i) = grid.iter().position(|t| !(*t >= 0.0)) {
        return Err(Error::UnsortedGrid(i));
    }
    if let Some(i) = grid.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::UnsortedGrid(i + 1));
    }
    let times = events.times();
    Ok(grid
        .iter()
        .map(|&t| (t, times.partition_point(|&e| e <= t) as f64))
        .collect())
}

/// Least-squares Omori-Utsu fit to a cumulative curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmoriFit {
    pub p: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub c: f64,
    pub rss: f64,
    pub grid_step: f64,
    pub horizon: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub threshold: Option<f64>,
}

impl OmoriFit {
    pub fn model(&self, t: f64) -> f64 {
        self.a * unit_count(t, self.p, self.c)
    }
}

/// Maximum-likelihood fit of the Omori-Utsu rate, used as a cross-check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmoriMleFit {
    pub p: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub c: f64,
    pub log_likelihood: f64,
    pub horizon: f64,
}

/// Result of fitting arbitrary `(t, N)` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveFit {
    pub p: f64,
    pub a: f64,
    pub c: f64,
    pub rss: f64,
}

/// Closed-form amplitude and residual for fixed `(p, c)`.
fn amplitude_and_rss(t: &[f64], y: &[f64], syy: f64, p: f64, c: f64) -> Option<(f64, f64)> {
    let (mut sgg, mut syg) = (0.0, 0.0);
    for (&ti, &yi) in t.iter().zip(y) {
        let g = unit_count(ti, p, c);
        sgg += g * g;
        syg += yi * g;
    }
    if !(sgg > 0.0 && sgg.is_finite()) {
        return None;
    }
    let a = syg / sgg;
    if !(a > 0.0 && a.is_finite()) {
        return None;
    }
    Some((a, (syy - syg * syg / sgg).max(0.0)))
}

/// Residual sum of squares of the model at `(p, a, c)` against the points.
pub fn rss_at(points: &[(f64, f64)], p: f64, a: f64, c: f64) -> f64 {
    points
        .iter()
        .map(|&(t, y)| (y - a * unit_count(t, p, c)).powi(2))
        .sum()
}

fn p_grid() -> Vec<f64> {
    let lo = (P_MIN * 100.0).round() as usize;
    let hi = (P_MAX * 100.0).round() as usize;
    (lo..=hi)
        .step_by(P_STEP_HUNDREDTHS)
        .map(|k| k as f64 / 100.0)
        .collect()
}

fn c_grid(c_search: bool) -> Vec<f64> {
    let mut g = vec![0.0];
    if c_search {
        g.extend(log_space(C_MIN, C_MAX, C_GRID_POINTS));
    }
    g
}

/// Minimizes an objective over `(p, c)`.
///
/// 1. Coarse grid over `p` and `c` with the cheap `coarse` objective; each
///    `c` column is then profiled with a continuous golden-section search in
///    `p` so columns compare fairly.
/// 2. Nested golden-section (outer `c`, inner `p`) between the neighbours of
///    the best column, still on `coarse`.
/// 3. A few alternating golden-section rounds on `fine` in a narrow bracket.
///
/// Coarse ties go to the smallest `p`, then the smallest `c`.
fn search_pc(
    coarse: impl Fn(f64, f64) -> f64,
    fine: impl Fn(f64, f64) -> f64,
    c_search: bool,
) -> Option<(f64, f64, f64)> {
    let ps = p_grid();
    let cs = c_grid(c_search);
    let p_in = |lo: f64, hi: f64| (lo.max(P_MIN), hi.min(P_MAX));
    let min_p_tol = |obj: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64| -> (f64, f64) {
        let (lo, hi) = p_in(lo, hi);
        golden_section(obj, lo, hi, tol, 80)
    };
    let min_p = |obj: &dyn Fn(f64) -> f64, lo: f64, hi: f64| min_p_tol(obj, lo, hi, 1e-7);
    let step = P_STEP_HUNDREDTHS as f64 / 100.0;

    // Best grid p per column, then a continuous profile around it.
    let mut columns: Vec<Option<(f64, f64)>> = Vec::with_capacity(cs.len());
    for &c in &cs {
        let mut best: Option<(f64, f64)> = None;
        for &p in &ps {
            let v = coarse(p, c);
            if v.is_finite() && best.is_none_or(|(_, bv)| v < bv) {
                best = Some((p, v));
            }
        }
        columns.push(best.map(|(p0, v0)| {
            let (p1, v1) = min_p_tol(&|x| coarse(x, c), p0 - step, p0 + step, 1e-5);
            if v1 < v0 {
                (p1, v1)
            } else {
                (p0, v0)
            }
        }));
    }
    let (ci, (mut p, mut value)) = columns
        .iter()
        .enumerate()
        .filter_map(|(i, col)| col.map(|v| (i, v)))
        .fold(None, |acc: Option<(usize, (f64, f64))>, cur| match acc {
            Some(a) if a.1 .1 <= cur.1 .1 => Some(a),
            _ => Some(cur),
        })?;
    let mut c = cs[ci];

    if c_search {
        let lo_i = ci.saturating_sub(1);
        let hi_i = (ci + 1).min(cs.len() - 1);
        let near: Vec<f64> = (lo_i..=hi_i)
            .filter_map(|i| columns[i].map(|(p, _)| p))
            .collect();
        let p_lo = near.iter().cloned().fold(f64::INFINITY, f64::min) - 0.02;
        let p_hi = near.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.02;
        let profile = |c: f64| min_p_tol(&|x| coarse(x, c), p_lo, p_hi, 1e-6);
        let (c_lo, c_hi) = (cs[lo_i], cs[hi_i]);
        let (cc, _) = if c_lo == 0.0 {
            golden_section(|x| profile(x).1, 0.0, c_hi, 1e-6 * c_hi, 80)
        } else {
            let (u, v) = golden_section(|u| profile(u.exp()).1, c_lo.ln(), c_hi.ln(), 1e-5, 80);
            (u.exp(), v)
        };
        let (pp, vv) = profile(cc);
        if vv < value {
            p = pp;
            c = cc;
            value = vv;
        }
    }

    // Polish on the full objective.
    let mut value_f = fine(p, c);
    if !value_f.is_finite() {
        return None;
    }
    for _ in 0..REFINE_ROUNDS {
        let start = value_f;
        let (pp, fp) = min_p(&|x| fine(x, c), p - 0.005, p + 0.005);
        if fp < value_f {
            p = pp;
            value_f = fp;
        }
        if c_search && c > 0.0 {
            let (u, fu) =
                golden_section(|u| fine(p, u.exp()), c.ln() - 0.1, c.ln() + 0.1, 1e-7, 60);
            if fu < value_f {
                c = u.exp();
                value_f = fu;
            }
        }
        if start - value_f <= 1e-10 * start.abs() {
            break;
        }
    }
    if c_search && c > 0.0 && c < C_MIN {
        // Golden-section never lands exactly on the c = 0 edge.
        let (p0, f0) = min_p(&|x| fine(x, 0.0), p - 0.01, p + 0.01);
        if f0 <= value_f {
            p = p0;
            c = 0.0;
            value_f = f0;
        }
    }
    let _ = value;
    Some((p, c, value_f))
}

/// Fits the cumulative model to arbitrary `(t, N)` points.
pub fn fit_curve(points: &[(f64, f64)], c_search: bool) -> Result<CurveFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} curve points, need at least 3",
            points.len()
        )));
    }
    let (t, y): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::Degenerate(
            "cumulative count is flat on the grid".into(),
        ));
    }
    let syy: f64 = y.iter().map(|v| v * v).sum();

    // Thin by distinct abscissa so repeated points stay together.
    let mut distinct = t.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let stride = distinct.len().div_ceil(COARSE_POINTS).max(1);
    let mut keep: Vec<f64> = distinct.iter().step_by(stride).copied().collect();
    if (distinct.len() - 1) % stride != 0 {
        keep.push(distinct[distinct.len() - 1]);
    }
    let (ct, cy): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|(ti, _)| keep.binary_search_by(|k| k.total_cmp(ti)).is_ok())
        .copied()
        .unzip();
    let csyy: f64 = cy.iter().map(|v| v * v).sum();

    let coarse =
        |p: f64, c: f64| amplitude_and_rss(&ct, &cy, csyy, p, c).map_or(f64::INFINITY, |(_, r)| r);
    let fine =
        |p: f64, c: f64| amplitude_and_rss(&t, &y, syy, p, c).map_or(f64::INFINITY, |(_, r)| r);

    let (p, c, _) = search_pc(coarse, fine, c_search)
        .ok_or_else(|| Error::Degenerate("no admissible (p, c) in the search range".into()))?;
    let (a, _) = amplitude_and_rss(&t, &y, syy, p, c).expect("minimizer is admissible");
    Ok(CurveFit {
        p,
        a,
        c,
        rss: rss_at(points, p, a, c),
    })
}

/// Uniform grid `0, step, 2 step, ...` up to `horizon`.
pub fn uniform_grid(step: f64, horizon: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "grid step and horizon must be positive, got {step} and {horizon}"
        )));
    }
    let n = (horizon / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| k as f64 * step).collect())
}

/// Least-squares fit of the cumulative Omori-Utsu law to the event count on
/// a uniform grid of `grid_step` minutes up to `horizon`.
///
/// With `c_search == false`, `c` is held at 0 (which admits only `p < 1`).
pub fn fit_omori(
    events: &EventSequence,
    grid_step: f64,
    horizon: f64,
    c_search: bool,
) -> Result<OmoriFit> {
    let grid = uniform_grid(grid_step, horizon)?;
    let inside = events.times().partition_point(|&t| t <= horizon);
    if inside < MIN_EVENTS {
        return Err(Error::InsufficientData(format!(
            "{inside} events within the horizon, need at least {MIN_EVENTS}"
        )));
    }
    let points = cumulative_count(events, &grid)?;
    let fit = fit_curve(&points, c_search)?;
    Ok(OmoriFit {
        p: fit.p,
        a: fit.a,
        c: fit.c,
        rss: fit.rss,
        grid_step,
        horizon,
        threshold: events.threshold().map(|t| t.value),
    })
}

/// Profile log-likelihood of the inhomogeneous Poisson rate over
/// `[0, horizon]` with `A` at its optimum `n / N_unit(horizon)`.
fn profile_log_likelihood(times: &[f64], horizon: f64, p: f64, c: f64) -> Option<(f64, f64)> {
    let n = times.len() as f64;
    let g = unit_count(horizon, p, c);
    if !(g > 0.0 && g.is_finite()) {
        return None;
    }
    let mut slog = 0.0;
    for &t in times {
        let u = t + c;
        if u <= 0.0 {
            return None;
        }
        slog += u.ln();
    }
    let a = n / g;
    Some((a, n * a.ln() - n - p * slog))
}

/// Maximum-likelihood Omori-Utsu rate fit over `[0, horizon]`.
pub fn fit_omori_mle(events: &EventSequence, horizon: f64, c_search: bool) -> Result<OmoriMleFit> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let inside = events.times().partition_point(|&t| t <= horizon);
    if inside < MIN_EVENTS {
        return Err(Error::InsufficientData(format!(
            "{inside} events within the horizon, need at least {MIN_EVENTS}"
        )));
    }
    let times = &events.times()[..inside];
    let nll = |p: f64, c: f64| {
        profile_log_likelihood(times, horizon, p, c).map_or(f64::INFINITY, |(_, l)| -l)
    };
    let (p, c, _) = search_pc(nll, nll, c_search)
        .ok_or_else(|| Error::Degenerate("likelihood is unbounded or undefined".into()))?;
    let (a, log_likelihood) =
        profile_log_likelihood(times, horizon, p, c).expect("minimizer is admissible");
    Ok(OmoriMleFit {
        p,
        a,
        c,
        log_likelihood,
        horizon,
    })
}
