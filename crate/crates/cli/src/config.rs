//! Run configuration: built-in defaults, then a `key = value` file, then
//! command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use aftershock::ingest::ColumnMap;
use aftershock::synth::OmoriGenSpec;
use aftershock::waiting::FitRange;
use chrono::NaiveDateTime;

use crate::error::CliError;

pub const OUT_DIR_ENV: &str = "AFTERSHOCK_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "aftershock-out";
pub const DEFAULT_CRASH: &str = "2014-12-15 20:17";

const CRASH_FORMATS: [&str; 2] = ["%Y-%m-%d %H:%M", "%Y-%m-%d %H:%M:%S"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Minute-bar file; `None` runs on a generated catalog.
    pub input: Option<PathBuf>,
    pub columns: ColumnMap,
    pub crash: NaiveDateTime,
    pub window_days: usize,
    /// Thresholds in units of the window standard deviation.
    pub thresholds: Vec<f64>,
    pub grid_step: f64,
    /// Omori fit horizon in minutes; the window length (or the generator
    /// horizon) when unset.
    pub horizon: Option<f64>,
    pub c_search: bool,
    pub bin_size: f64,
    pub tau_min: Option<f64>,
    pub tau_max: Option<f64>,
    pub n_w: Vec<usize>,
    pub n_max: usize,
    pub bootstrap_seed: u64,
    /// 0 disables the bootstrap and with it the Markov check.
    pub resamples: usize,
    pub synthetic: OmoriGenSpec,
    pub out_dir: PathBuf,
    pub svg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            columns: ColumnMap::default(),
            crash: parse_instant(DEFAULT_CRASH).expect("default crash parses"),
            window_days: 100,
            thresholds: vec![2.0, 3.0],
            grid_step: 1.0,
            horizon: None,
            c_search: true,
            bin_size: 1.0,
            tau_min: None,
            tau_max: None,
            n_w: vec![0, 10, 20, 30, 40, 50],
            n_max: 60,
            bootstrap_seed: 1,
            resamples: 200,
            synthetic: OmoriGenSpec {
                p: 0.5,
                a: 5.0,
                c: 0.0,
                horizon: 1e5,
                seed: 0,
                round_to_minutes: false,
            },
            out_dir: PathBuf::from(DEFAULT_OUT_DIR),
            svg: false,
        }
    }
}

pub fn parse_instant(s: &str) -> Option<NaiveDateTime> {
    CRASH_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s.trim(), f).ok())
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .trim()
        .parse()
        .map_err(|_| format!("`{key}`: cannot parse `{value}`"))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("`{key}`: expected true or false, got `{value}`")),
    }
}

fn positive(key: &str, x: f64) -> Result<f64, String> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{key}` must be positive, got {x}"))
    }
}

fn fmt_list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Sets one field from its textual form. Keys match the long flag names
    /// with `-` replaced by `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key {
            "input" => self.input = Some(PathBuf::from(v)),
            "date_column" => self.columns.date = v.to_string(),
            "time_column" => self.columns.time = v.to_string(),
            "price_column" => self.columns.price = v.to_string(),
            "delimiter" => {
                let d = match v {
                    "tab" | "\\t" => b'\t',
                    _ if v.len() == 1 => v.as_bytes()[0],
                    _ => return Err(format!("`delimiter` must be one character, got `{v}`")),
                };
                self.columns.delimiter = d;
            }
            "date_format" => self.columns.date_format = v.to_string(),
            "time_format" => self.columns.time_format = v.to_string(),
            "crash" => {
                self.crash = parse_instant(v)
                    .ok_or_else(|| format!("`crash`: expected YYYY-MM-DD HH:MM, got `{v}`"))?
            }
            "window_days" => {
                let d: usize = parse(key, v)?;
                if d == 0 {
                    return Err("`window_days` must be positive".into());
                }
                self.window_days = d;
            }
            "thresholds" => {
                let t: Vec<f64> = parse_list(key, v)?;
                if t.is_empty() {
                    return Err("`thresholds` needs at least one value".into());
                }
                for &x in &t {
                    positive(key, x)?;
                }
                self.thresholds = t;
            }
            "grid_step" => self.grid_step = positive(key, parse(key, v)?)?,
            "horizon" => self.horizon = Some(positive(key, parse(key, v)?)?),
            "c_search" => self.c_search = parse_bool(key, v)?,
            "bin_size" => self.bin_size = positive(key, parse(key, v)?)?,
            "tau_min" => self.tau_min = Some(positive(key, parse(key, v)?)?),
            "tau_max" => self.tau_max = Some(positive(key, parse(key, v)?)?),
            "n_w" => {
                let n: Vec<usize> = parse_list(key, v)?;
                if n.is_empty() {
                    return Err("`n_w` needs at least one value".into());
                }
                self.n_w = n;
            }
            "n_max" => self.n_max = parse(key, v)?,
            "bootstrap_seed" => self.bootstrap_seed = parse(key, v)?,
            "resamples" => self.resamples = parse(key, v)?,
            "seed" => self.synthetic.seed = parse(key, v)?,
            "sim_p" => self.synthetic.p = parse(key, v)?,
            "sim_a" => self.synthetic.a = positive(key, parse(key, v)?)?,
            "sim_c" => self.synthetic.c = parse(key, v)?,
            "sim_horizon" => self.synthetic.horizon = positive(key, parse(key, v)?)?,
            "sim_round" => self.synthetic.round_to_minutes = parse_bool(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "svg" => self.svg = parse_bool(key, v)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| CliError::Config {
                line: i + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim().replace('-', "_");
            self.set(&key, value).map_err(|reason| CliError::Config {
                line: i + 1,
                reason,
            })?;
        }
        Ok(())
    }

    /// Defaults, then `env_out_dir`, then the file at `path`, then
    /// `overrides` in order.
    pub fn load(
        path: Option<&Path>,
        env_out_dir: Option<&str>,
        overrides: &[(&str, String)],
    ) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(dir) = env_out_dir.filter(|d| !d.is_empty()) {
            cfg.out_dir = PathBuf::from(dir);
        }
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
            cfg.apply_text(&text)?;
        }
        for (key, value) in overrides {
            cfg.set(key, value).map_err(CliError::Usage)?;
        }
        Ok(cfg)
    }

    pub fn fit_range(&self) -> Option<FitRange> {
        match (self.tau_min, self.tau_max) {
            (None, None) => None,
            (lo, hi) => Some(FitRange {
                tau_min: lo.unwrap_or(1.0),
                tau_max: hi.unwrap_or(f64::INFINITY),
            }),
        }
    }

    /// Every setting that affects results, as text. The output directory
    /// is left out so relocated runs compare equal.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        if let Some(input) = &self.input {
            put("input", input.display().to_string());
            put("date_column", self.columns.date.clone());
            put("time_column", self.columns.time.clone());
            put("price_column", self.columns.price.clone());
            put("delimiter", (self.columns.delimiter as char).to_string());
            put("date_format", self.columns.date_format.clone());
            put("time_format", self.columns.time_format.clone());
            put("crash", self.crash.format("%Y-%m-%d %H:%M:%S").to_string());
            put("window_days", self.window_days.to_string());
            put("thresholds", fmt_list(&self.thresholds));
        } else {
            let s = &self.synthetic;
            put("seed", s.seed.to_string());
            put("sim_p", s.p.to_string());
            put("sim_a", s.a.to_string());
            put("sim_c", s.c.to_string());
            put("sim_horizon", s.horizon.to_string());
            put("sim_round", s.round_to_minutes.to_string());
        }
        put("grid_step", self.grid_step.to_string());
        if let Some(h) = self.horizon {
            put("horizon", h.to_string());
        }
        put("c_search", self.c_search.to_string());
        put("bin_size", self.bin_size.to_string());
        if let Some(t) = self.tau_min {
            put("tau_min", t.to_string());
        }
        if let Some(t) = self.tau_max {
            put("tau_max", t.to_string());
        }
        put("n_w", fmt_list(&self.n_w));
        put("n_max", self.n_max.to_string());
        put("bootstrap_seed", self.bootstrap_seed.to_string());
        put("resamples", self.resamples.to_string());
        put("svg", self.svg.to_string());
        m
    }
}
