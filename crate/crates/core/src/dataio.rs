//! CSV ingestion of dated series, timestamp alignment, and window selection.
//!
//! Input files need a header row. Dates are ISO `YYYY-MM-DD`; a longer field
//! such as `1990-01-02 00:00:00` is accepted when it starts with a date.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

pub use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::PairedSeries;

/// A named, dated, strictly increasing series.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    name: String,
    rows: Vec<(NaiveDate, f64)>,
}

impl RawSeries {
    /// Validates finiteness and strictly increasing dates.
    pub fn new(name: impl Into<String>, rows: Vec<(NaiveDate, f64)>) -> Result<Self> {
        let name = name.into();
        check_duplicates(&rows)?;
        if let Some(w) = rows.windows(2).find(|w| w[0].0 >= w[1].0) {
            return Err(Error::invalid(format!("series `{name}` is not sorted: {} precedes {}", w[0].0, w[1].0)));
        }
        if let Some((d, v)) = rows.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("series `{name}` has non-finite value {v} at {d}")));
        }
        Ok(RawSeries { name, rows })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rows(&self) -> &[(NaiveDate, f64)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn check_duplicates(rows: &[(NaiveDate, f64)]) -> Result<()> {
    let mut seen: HashMap<NaiveDate, usize> = HashMap::new();
    let mut dups = Vec::new();
    for (d, _) in rows {
        let c = seen.entry(*d).or_insert(0);
        *c += 1;
        if *c == 2 {
            dups.push(d.to_string());
        }
    }
    if dups.is_empty() {
        Ok(())
    } else {
        dups.sort();
        Err(Error::DuplicateDates(dups))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    pub date_column: String,
    pub value_column: String,
    /// Sort ascending by date; otherwise the file must already be increasing.
    pub sort: bool,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions { date_column: "Date".into(), value_column: "Close".into(), sort: true, delimiter: b',' }
    }
}

impl CsvOptions {
    pub fn columns(date: &str, value: &str) -> Self {
        CsvOptions { date_column: date.into(), value_column: value.into(), ..Default::default() }
    }
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    NaiveDate::parse_from_str(s.get(..10).unwrap_or(s), "%Y-%m-%d").ok()
}

/// Reads one value column of a CSV file; the series is named after the file stem.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<RawSeries> {
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_csv(std::fs::File::open(path)?, name, opts)
}

/// Like [`load_csv`] on any reader. Row numbers in errors are file line numbers.
pub fn read_csv<R: Read>(r: R, name: impl Into<String>, opts: &CsvOptions) -> Result<RawSeries> {
    let mut rdr = csv::ReaderBuilder::new().delimiter(opts.delimiter).trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    let col = |c: &str| headers.iter().position(|h| h == c).ok_or_else(|| Error::MissingColumn(c.to_string()));
    let (di, vi) = (col(&opts.date_column)?, col(&opts.value_column)?);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let date_s = rec.get(di).unwrap_or("");
        let date =
            parse_date(date_s).ok_or_else(|| Error::Parse { row, message: format!("unparseable date `{date_s}`") })?;
        let val_s = rec.get(vi).unwrap_or("");
        let value = val_s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
            row,
            message: format!("invalid value `{val_s}` in column `{}`", opts.value_column),
        })?;
        rows.push((date, value));
    }
    check_duplicates(&rows)?;
    if opts.sort {
        rows.sort_by_key(|r| r.0);
    }
    RawSeries::new(name, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignPolicy {
    /// Keep dates present in both series; nothing is filled in.
    #[default]
    InnerJoin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub series: PairedSeries,
    /// Rows of the first input without a partner.
    pub dropped_x: usize,
    pub dropped_y: usize,
}

/// Joins two series on their dates; `a` becomes `X`, `b` becomes `Y`.
pub fn align(a: &RawSeries, b: &RawSeries, policy: AlignPolicy) -> Result<Aligned> {
    match policy {
        AlignPolicy::InnerJoin => {}
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("cannot align an empty series"));
    }
    let (mut i, mut j) = (0, 0);
    let (mut x, mut y, mut ts) = (Vec::new(), Vec::new(), Vec::new());
    while i < a.rows.len() && j < b.rows.len() {
        let (da, va) = a.rows[i];
        let (db, vb) = b.rows[j];
        match da.cmp(&db) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                x.push(va);
                y.push(vb);
                ts.push(da.to_string());
                i += 1;
                j += 1;
            }
        }
    }
    if x.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let k = x.len();
    Ok(Aligned { series: PairedSeries::with_timestamps(x, y, ts)?, dropped_x: a.len() - k, dropped_y: b.len() - k })
}

fn dates_of(s: &PairedSeries) -> Result<Vec<NaiveDate>> {
    let ts = s.timestamps().ok_or_else(|| Error::invalid("date selection needs a series with timestamps"))?;
    ts.iter()
        .map(|t| parse_date(t).ok_or_else(|| Error::invalid(format!("timestamp `{t}` is not an ISO date"))))
        .collect()
}

/// Observations dated within `[from, to]` (either bound optional).
pub fn select_range(s: &PairedSeries, from: Option<NaiveDate>, to: Option<NaiveDate>) -> Result<PairedSeries> {
    let dates = dates_of(s)?;
    let start = from.map_or(0, |f| dates.partition_point(|d| *d < f));
    let end = to.map_or(dates.len(), |t| dates.partition_point(|d| *d <= t));
    if start >= end {
        return Err(Error::invalid("no observations in the selected date range"));
    }
    s.slice(start, end - start)
}

/// `count` observations starting at the first date on or after `start`.
pub fn select_from(s: &PairedSeries, start: NaiveDate, count: usize) -> Result<PairedSeries> {
    let dates = dates_of(s)?;
    let first = dates.partition_point(|d| *d < start);
    if first + count > dates.len() {
        return Err(Error::invalid(format!(
            "only {} observations on or after {start}, {count} requested",
            dates.len() - first
        )));
    }
    s.slice(first, count)
}

/// Writes `date,x,y` (or `x,y` without timestamps) with round-trip precision.
pub fn write_pair_csv<W: Write>(s: &PairedSeries, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    match s.timestamps() {
        Some(ts) => {
            wtr.write_record(["date", "x", "y"])?;
            for ((t, x), y) in ts.iter().zip(s.x()).zip(s.y()) {
                wtr.write_record([t.clone(), x.to_string(), y.to_string()])?;
            }
        }
        None => {
            wtr.write_record(["x", "y"])?;
            for (x, y) in s.x().iter().zip(s.y()) {
                wtr.write_record([x.to_string(), y.to_string()])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a paired CSV with columns `x`, `y` and an optional `date` column.
pub fn read_pair_csv<R: Read>(r: R) -> Result<PairedSeries> {
    read_pair_csv_columns(r, "x", "y", "date", b',')
}

/// Reads two named value columns of one CSV file as a pair; `date_col` is used
/// for timestamps when present.
pub fn read_pair_csv_columns<R: Read>(
    r: R,
    x_col: &str,
    y_col: &str,
    date_col: &str,
    delimiter: u8,
) -> Result<PairedSeries> {
    let mut rdr = csv::ReaderBuilder::new().delimiter(delimiter).trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    let col = |c: &str| headers.iter().position(|h| h == c);
    let xi = col(x_col).ok_or_else(|| Error::MissingColumn(x_col.to_string()))?;
    let yi = col(y_col).ok_or_else(|| Error::MissingColumn(y_col.to_string()))?;
    let di = col(date_col);
    let (mut x, mut y, mut ts) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let num = |i: usize| {
            let f = rec.get(i).unwrap_or("");
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse { row, message: format!("invalid value `{f}`") })
        };
        x.push(num(xi)?);
        y.push(num(yi)?);
        if let Some(di) = di {
            ts.push(rec.get(di).unwrap_or("").to_string());
        }
    }
    if di.is_some() {
        PairedSeries::with_timestamps(x, y, ts)
    } else {
        PairedSeries::new(x, y)
    }
}

pub fn load_pair_csv(path: &Path) -> Result<PairedSeries> {
    read_pair_csv(std::fs::File::open(path)?)
}

pub fn save_pair_csv(s: &PairedSeries, path: &Path) -> Result<()> {
    write_pair_csv(s, std::fs::File::create(path)?)
}

pub fn write_pair_json<W: Write>(s: &PairedSeries, w: W) -> Result<()> {
    Ok(serde_json::to_writer(w, s)?)
}

pub fn read_pair_json<R: Read>(r: R) -> Result<PairedSeries> {
    let s: PairedSeries = serde_json::from_reader(r)?;
    // re-validate: deserialization bypasses the constructor
    match s.timestamps() {
        Some(ts) => PairedSeries::with_timestamps(s.x().to_vec(), s.y().to_vec(), ts.to_vec()),
        None => PairedSeries::new(s.x().to_vec(), s.y().to_vec()),
    }
}
