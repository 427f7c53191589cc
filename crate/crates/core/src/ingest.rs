//! Minute-bar loading, gap compaction and crash alignment.
//!
//! Input is delimiter-separated text with a header row. Periods without
//! trading are simply absent from the file; [`compact_gaps`] numbers the
//! recorded minutes consecutively, which yields the exchange-time axis every
//! later stage works on. [`align_origin`] then re-bases that axis so the crash
//! minute is `t = 0`.

use std::io::Read;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which header fields hold the date, time and price, and how to parse them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub date: String,
    pub time: String,
    pub price: String,
    pub delimiter: u8,
    /// `chrono` format string, e.g. `%Y%m%d`.
    pub date_format: String,
    /// `chrono` format string, e.g. `%H%M%S`.
    pub time_format: String,
}

impl Default for ColumnMap {
    /// finam-style export: `<DATE>,<TIME>,<CLOSE>` with `YYYYMMDD` / `HHMMSS`.
    fn default() -> Self {
        Self {
            date: "DATE".into(),
            time: "TIME".into(),
            price: "CLOSE".into(),
            delimiter: b',',
            date_format: "%Y%m%d".into(),
            time_format: "%H%M%S".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRecord {
    pub wall_clock: NaiveDateTime,
    pub price: f64,
}

/// Where `t = 0` sits on the compacted axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Origin {
    /// Position (0-based record number) mapped to `t = 0`.
    pub position: usize,
    /// The instant the caller asked for.
    pub requested: NaiveDateTime,
    /// True when `requested` fell between recorded minutes and was moved
    /// forward to the next one.
    pub snapped: bool,
}

/// Positive prices on a contiguous exchange-minute axis.
///
/// Record `k` sits at index `k` until an origin is set, after which it sits at
/// `k - origin.position`; pre-crash records therefore carry negative indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    wall_clock: Vec<NaiveDateTime>,
    prices: Vec<f64>,
    origin: Option<Origin>,
}

impl PriceSeries {
    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn wall_clock(&self) -> &[NaiveDateTime] {
        &self.wall_clock
    }

    pub fn origin(&self) -> Option<&Origin> {
        self.origin.as_ref()
    }

    pub fn origin_wall_clock(&self) -> Option<NaiveDateTime> {
        self.origin.map(|o| self.wall_clock[o.position])
    }

    /// Exchange-minute index of the first record.
    pub fn first_index(&self) -> i64 {
        -(self.origin.map_or(0, |o| o.position) as i64)
    }

    /// Exchange-minute index of the record at `position`.
    pub fn index_at(&self, position: usize) -> i64 {
        position as i64 + self.first_index()
    }

    /// Record position holding exchange-minute `t`, if any.
    pub fn position_of(&self, t: i64) -> Option<usize> {
        let pos = t - self.first_index();
        (0..self.len() as i64)
            .contains(&pos)
            .then_some(pos as usize)
    }

    /// `(t, wall_clock, price)` triples in order.
    pub fn iter(&self) -> impl Iterator<Item = (i64, NaiveDateTime, f64)> + '_ {
        let first = self.first_index();
        self.wall_clock
            .iter()
            .zip(&self.prices)
            .enumerate()
            .map(move |(k, (w, x))| (k as i64 + first, *w, *x))
    }

    pub fn to_records(&self) -> Vec<RawRecord> {
        self.wall_clock
            .iter()
            .zip(&self.prices)
            .map(|(&wall_clock, &price)| RawRecord { wall_clock, price })
            .collect()
    }

    /// Number of wall-clock jumps longer than one minute (removed gaps).
    pub fn gap_count(&self) -> usize {
        self.wall_clock
            .windows(2)
            .filter(|w| (w[1] - w[0]).num_seconds() > 60)
            .count()
    }
}

fn normalize_header(h: &str) -> String {
    h.trim()
        .trim_start_matches('<')
        .trim_end_matches('>')
        .to_ascii_uppercase()
}

/// Parses minute bars in file order.
///
/// Header names are matched case-insensitively and finam's angle brackets
/// (`<CLOSE>`) are ignored. Row numbers in errors count data rows from 1.
pub fn load_records<R: Read>(source: R, columns: &ColumnMap) -> Result<Vec<RawRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(columns.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers: Vec<String> = reader.headers()?.iter().map(normalize_header).collect();
    let find = |name: &str| {
        let wanted = normalize_header(name);
        headers
            .iter()
            .position(|h| *h == wanted)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let date_col = find(&columns.date)?;
    let time_col = find(&columns.time)?;
    let price_col = find(&columns.price)?;

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::MalformedRow {
            row: row_no,
            reason: e.to_string(),
        })?;
        let field = |col: usize, what: &str| {
            row.get(col).ok_or_else(|| Error::MalformedRow {
                row: row_no,
                reason: format!("missing {what} field"),
            })
        };

        let date_s = field(date_col, "date")?;
        let time_s = field(time_col, "time")?;
        let date = NaiveDate::parse_from_str(date_s, &columns.date_format).map_err(|e| {
            Error::MalformedRow {
                row: row_no,
                reason: format!("bad date `{date_s}`: {e}"),
            }
        })?;
        let time = NaiveTime::parse_from_str(time_s, &columns.time_format).map_err(|e| {
            Error::MalformedRow {
                row: row_no,
                reason: format!("bad time `{time_s}`: {e}"),
            }
        })?;

        let price_s = field(price_col, "price")?;
        let price: f64 = price_s.parse().map_err(|_| Error::MalformedRow {
            row: row_no,
            reason: format!("bad price `{price_s}`"),
        })?;
        if !(price > 0.0 && price.is_finite()) {
            return Err(Error::NonPositivePrice { row: row_no, price });
        }

        records.push(RawRecord {
            wall_clock: date.and_time(time),
            price,
        });
    }
    Ok(records)
}

/// Numbers the recorded minutes `0, 1, 2, ...`, dropping the wall-clock gaps.
///
/// Records must already be strictly increasing in time; duplicates are an
/// error rather than being merged.
pub fn compact_gaps(records: Vec<RawRecord>) -> Result<PriceSeries> {
    if records.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    for (i, w) in records.windows(2).enumerate() {
        if w[1].wall_clock <= w[0].wall_clock {
            return Err(Error::UnsortedTimestamps {
                index: i + 1,
                stamp: w[1].wall_clock.to_string(),
            });
        }
    }
    if let Some((row, r)) = records
        .iter()
        .enumerate()
        .find(|(_, r)| !(r.price > 0.0 && r.price.is_finite()))
    {
        return Err(Error::NonPositivePrice {
            row: row + 1,
            price: r.price,
        });
    }
    let (wall_clock, prices) = records.into_iter().map(|r| (r.wall_clock, r.price)).unzip();
    Ok(PriceSeries {
        wall_clock,
        prices,
        origin: None,
    })
}

/// Re-bases the axis so the crash minute is `t = 0`.
///
/// A crash instant that falls between recorded minutes (e.g. inside a
/// no-trading gap) moves forward to the next recorded minute; the returned
/// [`Origin`] records that it was snapped.
pub fn align_origin(mut series: PriceSeries, crash: NaiveDateTime) -> Result<PriceSeries> {
    let first = series.wall_clock[0];
    let last = *series.wall_clock.last().expect("series is never empty");
    if crash < first || crash > last {
        return Err(Error::CrashOutOfRange {
            crash: crash.to_string(),
            first: first.to_string(),
            last: last.to_string(),
        });
    }
    let position = series.wall_clock.partition_point(|w| *w < crash);
    let snapped = series.wall_clock[position] != crash;
    if snapped {
        log::info!(
            "crash instant {crash} is not a recorded minute; using {}",
            series.wall_clock[position]
        );
    }
    series.origin = Some(Origin {
        position,
        requested: crash,
        snapped,
    });
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M").unwrap()
    }

    fn rec(s: &str, price: f64) -> RawRecord {
        RawRecord {
            wall_clock: at(s),
            price,
        }
    }

    #[test]
    fn loads_header_and_rows() {
        let csv = "<TICKER>,<PER>,<DATE>,<TIME>,<CLOSE>\nUSD,1,20141215,201700,64.5\nUSD,1,20141215,201800,65.1\n";
        let recs = load_records(csv.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].wall_clock, at("2014-12-15 20:17"));
        assert_eq!(recs[1].price, 65.1);
    }

    #[test]
    fn zero_price_names_row() {
        let csv = "DATE,TIME,CLOSE\n20141215,201700,64.5\n20141215,201800,0\n";
        match load_records(csv.as_bytes(), &ColumnMap::default()) {
            Err(Error::NonPositivePrice { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_named() {
        let csv = "DATE,TIME,OPEN\n20141215,201700,64.5\n";
        match load_records(csv.as_bytes(), &ColumnMap::default()) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "CLOSE"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_date_and_short_row() {
        let csv = "DATE,TIME,CLOSE\n2014-12-15,201700,64.5\n";
        assert!(matches!(
            load_records(csv.as_bytes(), &ColumnMap::default()),
            Err(Error::MalformedRow { row: 1, .. })
        ));
        let csv = "DATE,TIME,CLOSE\n20141215,201700,64.5\n20141215,201800\n";
        assert!(matches!(
            load_records(csv.as_bytes(), &ColumnMap::default()),
            Err(Error::MalformedRow { row: 2, .. })
        ));
    }

    #[test]
    fn custom_delimiter_and_formats() {
        let map = ColumnMap {
            date: "day".into(),
            time: "clock".into(),
            price: "bid".into(),
            delimiter: b';',
            date_format: "%d.%m.%Y".into(),
            time_format: "%H:%M".into(),
        };
        let csv = "day;clock;bid\n15.12.2014;20:17;64.5\n";
        let recs = load_records(csv.as_bytes(), &map).unwrap();
        assert_eq!(recs[0].wall_clock, at("2014-12-15 20:17"));
    }

    #[test]
    fn gaps_are_removed() {
        let s = compact_gaps(vec![
            rec("2014-12-15 09:00", 1.0),
            rec("2014-12-15 09:01", 1.1),
            rec("2014-12-16 10:00", 1.2),
        ])
        .unwrap();
        let idx: Vec<i64> = s.iter().map(|(t, _, _)| t).collect();
        assert_eq!(idx, vec![0, 1, 2]);
        assert_eq!(s.gap_count(), 1);
    }

    #[test]
    fn single_record() {
        let s = compact_gaps(vec![rec("2014-12-15 09:00", 1.0)]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.first_index(), 0);
    }

    #[test]
    fn duplicate_timestamp_rejected() {
        let err = compact_gaps(vec![
            rec("2014-12-15 09:00", 1.0),
            rec("2014-12-15 09:00", 1.1),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::UnsortedTimestamps { index: 1, .. }));
    }

    #[test]
    fn crash_alignment() {
        let s = compact_gaps(vec![
            rec("2014-12-15 20:15", 1.0),
            rec("2014-12-15 20:16", 1.0),
            rec("2014-12-15 20:17", 1.0),
            rec("2014-12-15 20:18", 1.0),
        ])
        .unwrap();
        let a = align_origin(s.clone(), at("2014-12-15 20:17")).unwrap();
        assert_eq!(a.position_of(0), Some(2));
        assert_eq!(a.first_index(), -2);
        assert!(!a.origin().unwrap().snapped);

        assert!(matches!(
            align_origin(s, at("2014-12-15 20:00")),
            Err(Error::CrashOutOfRange { .. })
        ));
    }

    #[test]
    fn crash_in_gap_snaps_forward() {
        let s = compact_gaps(vec![
            rec("2014-12-15 23:49", 1.0),
            rec("2014-12-16 10:00", 1.0),
            rec("2014-12-16 10:01", 1.0),
        ])
        .unwrap();
        let a = align_origin(s, at("2014-12-16 03:00")).unwrap();
        let o = a.origin().unwrap();
        assert!(o.snapped);
        assert_eq!(a.origin_wall_clock(), Some(at("2014-12-16 10:00")));
        assert_eq!(a.position_of(0), Some(1));
    }

    fn arb_records() -> impl Strategy<Value = Vec<RawRecord>> {
        prop::collection::vec((1i64..5000, 0.01f64..1000.0), 1..60).prop_map(|steps| {
            let mut w = at("2014-12-01 10:00");
            steps
                .into_iter()
                .map(|(dm, price)| {
                    w += chrono::Duration::minutes(dm);
                    RawRecord {
                        wall_clock: w,
                        price,
                    }
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn compaction_idempotent_and_lossless(records in arb_records()) {
            let s = compact_gaps(records.clone()).unwrap();
            prop_assert_eq!(s.len(), records.len());
            prop_assert_eq!(s.to_records(), records);
            let again = compact_gaps(s.to_records()).unwrap();
            prop_assert_eq!(again, s);
        }
    }
}
