//! Synthetic minute-bar files for the integration tests.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use aftershock::rng;
use aftershock::synth::{gen_omori, OmoriGenSpec};
use aftershock_cli::config::parse_instant;
use aftershock_cli::RunConfig;
use chrono::{Datelike, NaiveDateTime};

pub const CRASH: &str = "2014-12-15 12:00";
const OPEN_MINUTE: u32 = 10 * 60;
const CLOSE_MINUTE: u32 = 18 * 60 + 50;
/// Lunch break with no quotes, so the files exercise gap removal.
const BREAK: (u32, u32) = (14 * 60, 14 * 60 + 10);
const CALENDAR_DAYS: usize = 40;
const NOISE: f64 = 2e-4;

fn session_minutes() -> Vec<NaiveDateTime> {
    let start = parse_instant("2014-12-08 00:00").unwrap().date();
    let mut out = Vec::new();
    for day in start.iter_days().take(CALENDAR_DAYS) {
        if day.weekday().number_from_monday() > 5 {
            continue;
        }
        for minute in OPEN_MINUTE..CLOSE_MINUTE {
            if !(BREAK.0..BREAK.1).contains(&minute) {
                out.push(day.and_hms_opt(minute / 60, minute % 60, 0).unwrap());
            }
        }
    }
    out
}

/// Weekday sessions over forty calendar days from 2014-12-08. Small
/// Gaussian returns everywhere, a 10% drop at the crash minute, and after it
/// large moves on the minutes of an Omori-Utsu catalog (p = 0.5, A = 5).
pub fn write_price_file(path: &Path, seed: u64) {
    let minutes = session_minutes();
    let crash = parse_instant(CRASH).unwrap();
    let origin = minutes.iter().position(|m| *m >= crash).unwrap();
    let catalog = gen_omori(&OmoriGenSpec {
        p: 0.5,
        a: 5.0,
        c: 0.0,
        horizon: (minutes.len() - origin - 2) as f64,
        seed,
        round_to_minutes: true,
    })
    .unwrap();
    let shocks: BTreeSet<usize> = catalog
        .events
        .times()
        .iter()
        .map(|&t| origin + t as usize)
        .collect();

    let mut rng = rng::seeded(seed);
    let mut gauss = move || {
        let u1 = 1.0 - rng::unit(&mut rng);
        let u2 = rng::unit(&mut rng);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let mut text = String::from("<DATE>,<TIME>,<CLOSE>\n");
    let mut price: f64 = 60.0;
    for (i, at) in minutes.iter().enumerate() {
        writeln!(
            text,
            "{},{},{:.5}",
            at.format("%Y%m%d"),
            at.format("%H%M%S"),
            price
        )
        .unwrap();
        // The return r(i) moves the price written at minute i + 1.
        let step = if i == origin {
            -0.1
        } else if shocks.contains(&i) {
            let size = NOISE * (12.0 + 8.0 * gauss().abs());
            if gauss() < 0.0 {
                -size
            } else {
                size
            }
        } else {
            NOISE * gauss()
        };
        price *= 1.0 + step;
    }
    fs::write(path, text).unwrap();
}

/// Data-mode run over `input`: twenty exchange days after the crash. The
/// waiting-time range skips the flat head of the histogram.
pub fn data_config(input: &Path, out_dir: &Path) -> RunConfig {
    RunConfig {
        input: Some(input.to_path_buf()),
        crash: parse_instant(CRASH).unwrap(),
        window_days: 20,
        tau_min: Some(20.0),
        tau_max: Some(400.0),
        resamples: 100,
        n_w: vec![0, 10, 20, 30, 40, 50],
        out_dir: out_dir.to_path_buf(),
        ..RunConfig::default()
    }
}

/// Relative path and bytes of every file under `root`, sorted.
pub fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}
