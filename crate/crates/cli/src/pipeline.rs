//! Stage wiring for the sub-commands and the artifact files they write.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use aftershock::correlation::{
    aging_curves, collapse, write_collapsed_csv, write_curves_csv, CollapseResult,
};
use aftershock::diagnostics::{
    bootstrap_ci, build_report, markov_relation, BootstrapSettings, BootstrapTarget, Report,
    ReportParts, SeriesSection, SyntheticSection, ThresholdSection, DEFAULT_NEIGHBOURHOOD,
};
use aftershock::events::{detect_events, waiting_times, EventSequence, Threshold};
use aftershock::ingest::{align_origin, compact_gaps, load_records, ColumnMap, PriceSeries};
use aftershock::omori::{cumulative_count, fit_omori, fit_omori_mle, uniform_grid};
use aftershock::stats::{compute_returns, exchange_day_minutes, window_stats};
use aftershock::synth::gen_omori;
use aftershock::waiting::{
    build_histogram, default_fit_range, fit_mu, fit_mu_lsq, FitMethod, WaitingFit,
};
use chrono::NaiveDateTime;

use crate::config::RunConfig;
use crate::error::{CliError, StageExt};
use crate::plot::{Chart, Mark, Series};

pub const REPORT_FILE: &str = "report.json";
/// Rows kept in the sampled `N(t)` curve files.
const CURVE_ROWS: usize = 2000;
/// Grid points per bootstrap Omori refit.
const BOOTSTRAP_GRID_POINTS: f64 = 1000.0;
const WALL_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// Writes files into one directory and keeps the manifest.
struct Sink {
    dir: PathBuf,
    manifest: Vec<(String, String)>,
}

impl Sink {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, kind: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(CliError::io(&path))?;
        self.manifest.push((name.to_string(), kind.to_string()));
        Ok(())
    }

    fn csv(
        &mut self,
        name: &str,
        kind: &str,
        fill: impl FnOnce(&mut Vec<u8>) -> aftershock::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        fill(&mut buf).stage("write")?;
        self.put(name, kind, &buf)
    }
}

fn csv_rows(
    rows: impl IntoIterator<Item = Vec<String>>,
    header: &[&str],
) -> aftershock::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner()
        .map_err(|e| aftershock::Error::Io(e.into_error()))
}

fn threshold_label(k: f64) -> String {
    format!("{k}sigma")
}

pub fn load_series(
    input: &Path,
    columns: &ColumnMap,
    crash: Option<NaiveDateTime>,
) -> Result<PriceSeries, CliError> {
    let file = fs::File::open(input).map_err(CliError::io(input))?;
    let records = load_records(BufReader::new(file), columns).stage("ingest")?;
    let series = compact_gaps(records).stage("ingest")?;
    match crash {
        Some(c) => align_origin(series, c).stage("ingest"),
        None => Ok(series),
    }
}

/// `ingest`: validate, compact and (optionally) align; writes `series.csv`.
pub fn run_ingest(
    input: &Path,
    columns: &ColumnMap,
    crash: Option<NaiveDateTime>,
    out_dir: &Path,
) -> Result<PriceSeries, CliError> {
    let series = load_series(input, columns, crash)?;
    let mut sink = Sink::new(out_dir)?;
    let rows = series.iter().map(|(t, w, x)| {
        vec![
            t.to_string(),
            w.format(WALL_FORMAT).to_string(),
            x.to_string(),
        ]
    });
    let bytes = csv_rows(rows, &["t", "wall_clock", "price"]).stage("write")?;
    sink.put("series.csv", "series", &bytes)?;
    Ok(series)
}

struct Sequence {
    label: String,
    events: EventSequence,
    horizon: f64,
}

/// `analyze` (with an input file) or `simulate` (without): every stage,
/// then `report.json`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Report, CliError> {
    if cfg.resamples != 0 && cfg.resamples < aftershock::diagnostics::MIN_RESAMPLES {
        return Err(CliError::Usage(format!(
            "resamples must be 0 or at least {}",
            aftershock::diagnostics::MIN_RESAMPLES
        )));
    }
    let mut sink = Sink::new(&cfg.out_dir)?;
    let mut parts = ReportParts {
        config: cfg.echo(),
        ..Default::default()
    };
    parts.seeds.insert("bootstrap".into(), cfg.bootstrap_seed);
    parts.notes.push(
        "Omori fit: least squares on the cumulative count over a uniform grid; the likelihood fit is a cross-check"
            .into(),
    );
    parts
        .notes
        .push("waiting-time MLE: mu = n / sum ln(tau / tau_min) over gaps >= tau_min".into());

    let sequences = match &cfg.input {
        Some(input) => data_sequences(cfg, input, &mut parts)?,
        None => {
            let spec = cfg.synthetic;
            let cat = gen_omori(&spec).stage("simulate")?;
            parts.seeds.insert("generator".into(), spec.seed);
            parts.synthetic = Some(SyntheticSection {
                generator: spec,
                expected_count: cat.expected_count,
                events: cat.events.len(),
                collapsed_ties: cat.collapsed_ties,
            });
            vec![Sequence {
                label: "synthetic".into(),
                events: cat.events,
                horizon: cfg.horizon.unwrap_or(spec.horizon),
            }]
        }
    };

    if cfg.resamples > 0 {
        let steps: Vec<String> = sequences
            .iter()
            .map(|s| format!("{} {}", s.label, bootstrap_grid_step(cfg, s.horizon)))
            .collect();
        parts.notes.push(format!(
            "bootstrap resamples waiting times; Omori refits use a coarser grid (minutes: {})",
            steps.join(", ")
        ));
    }

    for seq in &sequences {
        let section = analyze_sequence(cfg, seq, &mut sink)?;
        parts.thresholds.push(section);
    }
    let any_fit = parts
        .thresholds
        .iter()
        .any(|s| s.omori.is_some() || s.waiting_lsq.is_some() || s.waiting_mle.is_some());
    if !any_fit {
        return Err(CliError::Stage {
            stage: "analysis",
            source: aftershock::Error::InsufficientData(
                "no estimator succeeded on any event sequence".into(),
            ),
        });
    }

    let mut report = build_report(parts);
    for (path, kind) in sink.manifest.drain(..) {
        report.record_artifact(path, kind);
    }
    if cfg.svg {
        render_svgs(&cfg.out_dir, &cfg.out_dir, &mut report)?;
    }
    write_report(&cfg.out_dir, &report)?;
    Ok(report)
}

fn write_report(dir: &Path, report: &Report) -> Result<(), CliError> {
    let path = dir.join(REPORT_FILE);
    let text = report.to_json().stage("report")?;
    fs::write(&path, text).map_err(CliError::io(&path))
}

fn data_sequences(
    cfg: &RunConfig,
    input: &Path,
    parts: &mut ReportParts,
) -> Result<Vec<Sequence>, CliError> {
    let series = load_series(input, &cfg.columns, Some(cfg.crash))?;
    let origin = *series.origin().expect("aligned above");
    let returns = compute_returns(&series).stage("returns")?;
    let minutes = exchange_day_minutes(&series, cfg.window_days).stage("window")?;
    let available = returns.end().max(0) as usize;
    let len = minutes.min(available);
    if len < minutes {
        parts.notes.push(format!(
            "window cut from {minutes} to {len} minutes: the last recorded minute has no following price"
        ));
    }
    let sigma = window_stats(&returns, 0, len).stage("window")?;
    let window = returns.restrict(0, len as i64);

    let wall = series.wall_clock();
    let used = series.origin_wall_clock().expect("aligned above");
    if origin.snapped {
        parts.notes.push(format!(
            "crash instant {} is not a recorded minute; t = 0 is {}",
            origin.requested.format(WALL_FORMAT),
            used.format(WALL_FORMAT)
        ));
    }
    parts
        .notes
        .push("window statistics divide by the number of returns in the window".into());
    parts
        .notes
        .push("the crash minute t = 0 counts as an event when it exceeds the threshold".into());
    parts.series = Some(SeriesSection {
        records: series.len(),
        gaps_removed: series.gap_count(),
        first: wall[0].format(WALL_FORMAT).to_string(),
        last: wall[wall.len() - 1].format(WALL_FORMAT).to_string(),
        crash_requested: origin.requested.format(WALL_FORMAT).to_string(),
        crash_used: used.format(WALL_FORMAT).to_string(),
        window_days: cfg.window_days,
        window_minutes: len,
    });
    parts.sigma = Some(sigma);

    let horizon = cfg.horizon.unwrap_or((len.max(2) - 1) as f64);
    cfg.thresholds
        .iter()
        .map(|&k| {
            let value = k * sigma.sigma;
            let events = detect_events(&window, value)
                .stage("events")?
                .with_threshold(Threshold {
                    value,
                    sigma_multiple: Some(k),
                });
            Ok(Sequence {
                label: threshold_label(k),
                events,
                horizon,
            })
        })
        .collect()
}

fn bootstrap_grid_step(cfg: &RunConfig, horizon: f64) -> f64 {
    cfg.grid_step.max((horizon / BOOTSTRAP_GRID_POINTS).ceil())
}

fn analyze_sequence(
    cfg: &RunConfig,
    seq: &Sequence,
    sink: &mut Sink,
) -> Result<ThresholdSection, CliError> {
    let Sequence {
        label,
        events,
        horizon,
    } = seq;
    let horizon = *horizon;
    log::info!("{label}: {} events", events.len());
    let mut section = ThresholdSection::new(label.clone(), events.threshold(), events.len());
    sink.csv(&format!("events_{label}.csv"), "events", |w| {
        events.write_csv(w)
    })?;

    match fit_omori(events, cfg.grid_step, horizon, cfg.c_search) {
        Ok(fit) => section.omori = Some(fit),
        Err(e) => section.fail("omori", &e),
    }
    match fit_omori_mle(events, horizon, cfg.c_search) {
        Ok(fit) => section.omori_mle = Some(fit),
        Err(e) => section.fail("omori_mle", &e),
    }
    write_omori_curve(cfg, label, events, horizon, &section, sink)?;

    let taus = waiting_times(events);
    let hist = build_histogram(&taus, cfg.bin_size).stage("waiting")?;
    let range = cfg.fit_range().or_else(|| default_fit_range(&hist));
    match range {
        Some(r) => match fit_mu_lsq(&hist, r) {
            Ok(fit) => section.waiting_lsq = Some(fit),
            Err(e) => section.fail("waiting_lsq", &e),
        },
        None => section.fail(
            "waiting_lsq",
            &aftershock::Error::InsufficientData("no waiting times".into()),
        ),
    }
    match fit_mu(&taus, cfg.bin_size, cfg.fit_range(), FitMethod::Mle) {
        Ok(fit) => section.waiting_mle = Some(fit),
        Err(e) => section.fail("waiting_mle", &e),
    }
    let lsq = section.waiting_lsq;
    let rows = hist.bins().into_iter().map(|b| {
        vec![
            b.center.to_string(),
            b.count.to_string(),
            lsq.map_or(String::new(), |f: WaitingFit| {
                (f.prefactor * b.center.powf(-(1.0 + f.mu))).to_string()
            }),
        ]
    });
    let bytes = csv_rows(rows, &["tau", "count", "fit"]).stage("write")?;
    sink.put(&format!("waiting_{label}.csv"), "waiting_histogram", &bytes)?;

    if cfg.resamples > 0 {
        if let (Some(omori), Some(waiting)) = (section.omori, section.waiting_lsq) {
            let settings = BootstrapSettings {
                resamples: cfg.resamples,
                seed: cfg.bootstrap_seed,
                neighbourhood: DEFAULT_NEIGHBOURHOOD,
                grid_step: bootstrap_grid_step(cfg, horizon),
                horizon: Some(horizon),
                c_search: cfg.c_search,
                bin_size: cfg.bin_size,
                method: FitMethod::LogLogLsq,
                fit_range: range,
            };
            match bootstrap_ci(events, BootstrapTarget::Sum, &settings) {
                Ok(res) => {
                    section.markov = Some(markov_relation(&omori, &waiting, res.interval));
                    section.bootstrap.push(res);
                }
                Err(e) => section.fail("bootstrap", &e),
            }
        }
    }

    match correlation_study(events, &cfg.n_w, cfg.n_max, label, sink) {
        Ok(result) => {
            if result.a.is_none() {
                section.fail(
                    "f_law",
                    &aftershock::Error::InsufficientData(
                        "scale factors do not support the f(n_w) law".into(),
                    ),
                );
            }
            section.collapse = Some(result);
        }
        Err(CliError::Stage { stage, source }) => section.fail(stage, &source),
        Err(other) => return Err(other),
    }
    Ok(section)
}

fn write_omori_curve(
    cfg: &RunConfig,
    label: &str,
    events: &EventSequence,
    horizon: f64,
    section: &ThresholdSection,
    sink: &mut Sink,
) -> Result<(), CliError> {
    let full = uniform_grid(cfg.grid_step, horizon).stage("omori")?;
    let stride = full.len().div_ceil(CURVE_ROWS).max(1);
    let mut grid: Vec<f64> = full.iter().copied().step_by(stride).collect();
    if grid.last() != full.last() {
        grid.push(*full.last().expect("grid is never empty"));
    }
    let counts = cumulative_count(events, &grid).stage("omori")?;
    let rows = counts.into_iter().map(|(t, n)| {
        vec![
            t.to_string(),
            n.to_string(),
            section
                .omori
                .map_or(String::new(), |f| f.model(t).to_string()),
        ]
    });
    let bytes = csv_rows(rows, &["t", "N", "model"]).stage("write")?;
    sink.put(&format!("omori_{label}.csv"), "omori_curve", &bytes)
}

/// Aging curves, collapse and the `f(n_w)` law. A failed law fit leaves
/// `a` and `gamma` unset rather than failing the study.
fn correlation_study(
    events: &EventSequence,
    n_w: &[usize],
    n_max: usize,
    label: &str,
    sink: &mut Sink,
) -> Result<CollapseResult, CliError> {
    let curves = aging_curves(events, n_w, n_max).stage("correlation")?;
    sink.csv(&format!("correlation_{label}.csv"), "correlation", |w| {
        write_curves_csv(&curves, w)
    })?;
    let reference = *n_w.iter().min().expect("n_w is never empty");
    let mut result = collapse(&curves, reference, n_max).stage("collapse")?;
    if let Err(e) = result.fit_law() {
        log::warn!("{label}: f(n_w) law: {e}");
    }
    sink.csv(&format!("collapsed_{label}.csv"), "collapsed", |w| {
        write_collapsed_csv(&curves, &result, w)
    })?;
    sink.csv(
        &format!("scale_factors_{label}.csv"),
        "scale_factors",
        |w| result.write_scale_factors_csv(w),
    )?;
    Ok(result)
}

/// `collapse`: the correlation study alone on an event CSV.
pub fn run_collapse(
    events_path: &Path,
    n_w: &[usize],
    n_max: usize,
    out_dir: &Path,
    svg: bool,
) -> Result<CollapseResult, CliError> {
    if n_w.is_empty() {
        return Err(CliError::Usage("n_w needs at least one value".into()));
    }
    let file = fs::File::open(events_path).map_err(CliError::io(events_path))?;
    let events = EventSequence::read_csv(BufReader::new(file)).stage("events")?;
    let mut sink = Sink::new(out_dir)?;
    let result = correlation_study(&events, n_w, n_max, "events", &mut sink)?;
    let json =
        serde_json::to_string_pretty(&result).map_err(|e| CliError::Internal(e.to_string()))?;
    sink.put("collapse.json", "collapse", format!("{json}\n").as_bytes())?;
    if svg {
        for (name, kind) in sink.manifest.clone() {
            render_one(out_dir, out_dir, &name, &kind)?;
        }
    }
    Ok(result)
}

/// Numeric table from one of our CSV files; empty cells become NaN.
fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Stage {
        stage: "render",
        source: e.into(),
    })?;
    let headers = r
        .headers()
        .map_err(|e| CliError::Stage {
            stage: "render",
            source: e.into(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::Stage {
            stage: "render",
            source: e.into(),
        })?;
        rows.push(rec.iter().map(|c| c.parse().unwrap_or(f64::NAN)).collect());
    }
    Ok((headers, rows))
}

/// One line per distinct value of column 0, plotting column 2 on column 1.
fn grouped(rows: &[Vec<f64>]) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for row in rows {
        let key = format!("n_w = {}", row[0]);
        match out.last_mut() {
            Some(s) if s.name == key => s.points.push((row[1], row[2])),
            _ => out.push(Series::new(key, vec![(row[1], row[2])], Mark::Line)),
        }
    }
    out
}

/// Renders the SVG for one manifest entry; returns its file name.
fn render_one(from: &Path, to: &Path, name: &str, kind: &str) -> Result<Option<String>, CliError> {
    let col = |rows: &[Vec<f64>], x: usize, y: usize| -> Vec<(f64, f64)> {
        rows.iter().map(|r| (r[x], r[y])).collect()
    };
    let stem = name.trim_end_matches(".csv");
    let chart = match kind {
        "omori_curve" => {
            let (_, rows) = read_table(&from.join(name))?;
            Chart {
                title: format!("Cumulative events, {stem}"),
                x_label: "t (exchange minutes)".into(),
                y_label: "N(t)".into(),
                series: vec![
                    Series::new("data", col(&rows, 0, 1), Mark::Line),
                    Series::new("model", col(&rows, 0, 2), Mark::Line),
                ],
                ..Default::default()
            }
        }
        "waiting_histogram" => {
            let (_, rows) = read_table(&from.join(name))?;
            Chart {
                title: format!("Waiting times, {stem}"),
                x_label: "tau (minutes)".into(),
                y_label: "count".into(),
                log_x: true,
                log_y: true,
                series: vec![
                    Series::new("histogram", col(&rows, 0, 1), Mark::Dots),
                    Series::new("fit", col(&rows, 0, 2), Mark::Line),
                ],
            }
        }
        "correlation" | "collapsed" => {
            let (headers, rows) = read_table(&from.join(name))?;
            Chart {
                title: format!("Event correlation, {stem}"),
                x_label: headers.get(1).cloned().unwrap_or_default(),
                y_label: "C".into(),
                series: grouped(&rows),
                ..Default::default()
            }
        }
        "scale_factors" => {
            let (_, rows) = read_table(&from.join(name))?;
            Chart {
                title: format!("Scale factors, {stem}"),
                x_label: "n_w".into(),
                y_label: "f".into(),
                series: vec![Series::new("f(n_w)", col(&rows, 0, 1), Mark::Dots)],
                ..Default::default()
            }
        }
        _ => return Ok(None),
    };
    let out = format!("{stem}.svg");
    let path = to.join(&out);
    fs::write(&path, chart.to_svg()).map_err(CliError::io(&path))?;
    Ok(Some(out))
}

/// Draws every plottable manifest entry found in `from` into `to` and adds
/// the charts to the manifest.
pub fn render_svgs(from: &Path, to: &Path, report: &mut Report) -> Result<(), CliError> {
    fs::create_dir_all(to).map_err(CliError::io(to))?;
    let entries: Vec<(String, String)> = report
        .manifest
        .iter()
        .map(|m| (m.path.clone(), m.kind.clone()))
        .collect();
    for (name, kind) in entries {
        if let Some(svg) = render_one(from, to, &name, &kind)? {
            if !report.manifest.iter().any(|m| m.path == svg) {
                report.record_artifact(svg, "svg");
            }
        }
    }
    Ok(())
}

/// `report`: reloads `report.json` from `from`, checks the manifest, and
/// writes charts plus `summary.txt` into `to`. Nothing in `from` is
/// modified unless `to` is the same directory, in which case only new files
/// are added.
pub fn rerender(from: &Path, to: &Path) -> Result<Report, CliError> {
    let path = from.join(REPORT_FILE);
    let text = fs::read_to_string(&path).map_err(CliError::io(&path))?;
    let mut report = Report::from_json(&text).stage("report")?;
    for m in &report.manifest {
        let p = from.join(&m.path);
        if !p.is_file() {
            return Err(CliError::Io {
                path: p,
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "listed in manifest"),
            });
        }
    }
    render_svgs(from, to, &mut report)?;
    let summary_path = to.join("summary.txt");
    fs::write(&summary_path, summary(&report)).map_err(CliError::io(&summary_path))?;
    Ok(report)
}

/// Plain-text digest of a report.
pub fn summary(report: &Report) -> String {
    let mut out = String::new();
    if let Some(s) = &report.series {
        out.push_str(&format!(
            "series: {} minutes ({} gaps removed), {} .. {}; t = 0 at {}\n",
            s.records, s.gaps_removed, s.first, s.last, s.crash_used
        ));
    }
    if let Some(sig) = &report.sigma {
        out.push_str(&format!(
            "sigma = {:.6} over {} minutes\n",
            sig.sigma, sig.window_len
        ));
    }
    if let Some(syn) = &report.synthetic {
        let g = &syn.generator;
        out.push_str(&format!(
            "synthetic Omori catalog: p = {}, A = {}, c = {}, horizon = {}, seed = {}: {} events (expected {:.1})\n",
            g.p, g.a, g.c, g.horizon, g.seed, syn.events, syn.expected_count
        ));
    }
    for s in &report.thresholds {
        out.push_str(&format!("\n[{}] {} events\n", s.label, s.event_count));
        if let Some(t) = &s.threshold {
            out.push_str(&format!("  R_th = {:.6}\n", t.value));
        }
        if let Some(f) = &s.omori {
            out.push_str(&format!(
                "  Omori LSQ: p = {:.4}, A = {:.4}, c = {:.4}\n",
                f.p, f.a, f.c
            ));
        }
        if let Some(f) = &s.omori_mle {
            out.push_str(&format!(
                "  Omori MLE: p = {:.4}, A = {:.4}, c = {:.4}\n",
                f.p, f.a, f.c
            ));
        }
        for (name, fit) in [("LSQ", &s.waiting_lsq), ("MLE", &s.waiting_mle)] {
            if let Some(f) = fit {
                out.push_str(&format!(
                    "  waiting {name}: mu = {:.4} +- {:.4} on [{}, {}]\n",
                    f.mu, f.stderr, f.fit_range.tau_min, f.fit_range.tau_max
                ));
            }
        }
        if let Some(m) = &s.markov {
            out.push_str(&format!(
                "  p + mu = {:.4}, 95% interval [{:.4}, {:.4}]: {}\n",
                m.sum,
                m.ci.lo,
                m.ci.hi,
                serde_json::to_value(m.verdict)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default()
            ));
        }
        if let Some(c) = &s.collapse {
            let f: Vec<String> = c
                .scale_factors
                .iter()
                .map(|sf| format!("{}:{:.4}", sf.n_w, sf.f))
                .collect();
            out.push_str(&format!("  scale factors {}\n", f.join(" ")));
            if let (Some(a), Some(g)) = (c.a, c.gamma) {
                out.push_str(&format!("  f(n_w) = {a:.5} n_w^{g:.4} + 1\n"));
            }
        }
        for fail in &s.failures {
            out.push_str(&format!("  {} skipped: {}\n", fail.stage, fail.message));
        }
    }
    if !report.notes.is_empty() {
        out.push_str("\nnotes:\n");
        for n in &report.notes {
            out.push_str(&format!("  - {n}\n"));
        }
    }
    out
}
