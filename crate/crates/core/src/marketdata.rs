//! OHLCV ingestion, validation, date splits, and supervised windowing.

use std::io::{Read, Write};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::frame::FeatureFrame;
use crate::mat::Mat;

/// Validated daily OHLCV history, sorted by date.
///
/// "Day" always means trading row: calendar gaps carry no meaning and all
/// window arithmetic is row-indexed. Parsing rejects empty files, but an
/// empty series can legitimately come out of [`split_by_date`] when the
/// cutoff is the last date.
#[derive(Debug, Clone, PartialEq)]
pub struct OhlcvSeries {
    dates: Vec<NaiveDate>,
    open: Vec<f64>,
    high: Vec<f64>,
    low: Vec<f64>,
    close: Vec<f64>,
    adj_close: Vec<f64>,
    volume: Vec<f64>,
}

impl OhlcvSeries {
    /// Builds a series from parallel columns, enforcing the row invariants:
    /// strictly increasing dates, positive prices, `high >= max(open, close)`,
    /// `low <= min(open, close)`, non-negative volume.
    pub fn new(
        dates: Vec<NaiveDate>,
        open: Vec<f64>,
        high: Vec<f64>,
        low: Vec<f64>,
        close: Vec<f64>,
        adj_close: Vec<f64>,
        volume: Vec<f64>,
    ) -> Result<OhlcvSeries> {
        let n = dates.len();
        for (name, col) in [
            ("open", &open),
            ("high", &high),
            ("low", &low),
            ("close", &close),
            ("adj_close", &adj_close),
            ("volume", &volume),
        ] {
            if col.len() != n {
                return Err(Error::Integrity(format!(
                    "column '{}' has {} rows, dates have {}",
                    name,
                    col.len(),
                    n
                )));
            }
        }
        for i in 0..n {
            if i > 0 && dates[i] <= dates[i - 1] {
                return Err(Error::Integrity(format!(
                    "dates not strictly increasing at {} (after {})",
                    dates[i],
                    dates[i - 1]
                )));
            }
            for (name, v) in [
                ("open", open[i]),
                ("high", high[i]),
                ("low", low[i]),
                ("close", close[i]),
                ("adj_close", adj_close[i]),
            ] {
                if !v.is_finite() || v <= 0.0 {
                    return Err(Error::Integrity(format!(
                        "{} price {} on {} must be finite and positive",
                        name, v, dates[i]
                    )));
                }
            }
            if !volume[i].is_finite() || volume[i] < 0.0 {
                return Err(Error::Integrity(format!(
                    "volume {} on {} must be finite and non-negative",
                    volume[i], dates[i]
                )));
            }
            if high[i] < open[i].max(close[i]) {
                return Err(Error::Integrity(format!(
                    "high {} below open/close on {}",
                    high[i], dates[i]
                )));
            }
            if low[i] > open[i].min(close[i]) {
                return Err(Error::Integrity(format!(
                    "low {} above open/close on {}",
                    low[i], dates[i]
                )));
            }
        }
        Ok(OhlcvSeries {
            dates,
            open,
            high,
            low,
            close,
            adj_close,
            volume,
        })
    }

    /// Flat series where open/high/low/adj-close mirror the close column.
    /// Used to re-export simulated paths in the standard CSV layout.
    pub fn from_close(dates: Vec<NaiveDate>, close: Vec<f64>) -> Result<OhlcvSeries> {
        let n = close.len();
        OhlcvSeries::new(
            dates,
            close.clone(),
            close.clone(),
            close.clone(),
            close.clone(),
            close,
            vec![0.0; n],
        )
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn open(&self) -> &[f64] {
        &self.open
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn close(&self) -> &[f64] {
        &self.close
    }

    pub fn adj_close(&self) -> &[f64] {
        &self.adj_close
    }

    pub fn volume(&self) -> &[f64] {
        &self.volume
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.dates.first().copied()
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.dates.last().copied()
    }

    /// Back-adjusted view: each row's prices are scaled by its
    /// adj-close/close factor, so the close column becomes the adjusted
    /// close while the OHLC ordering invariants survive (the factor is
    /// positive and shared within the row).
    pub fn adjusted(&self) -> OhlcvSeries {
        let factor: Vec<f64> = self
            .adj_close
            .iter()
            .zip(&self.close)
            .map(|(a, c)| a / c)
            .collect();
        let scale = |col: &[f64]| -> Vec<f64> {
            col.iter().zip(&factor).map(|(v, f)| v * f).collect()
        };
        OhlcvSeries {
            dates: self.dates.clone(),
            open: scale(&self.open),
            high: scale(&self.high),
            low: scale(&self.low),
            close: self.adj_close.clone(),
            adj_close: self.adj_close.clone(),
            volume: self.volume.clone(),
        }
    }

    /// Rows `[from, to)` as a new series.
    pub fn slice(&self, from: usize, to: usize) -> OhlcvSeries {
        OhlcvSeries {
            dates: self.dates[from..to].to_vec(),
            open: self.open[from..to].to_vec(),
            high: self.high[from..to].to_vec(),
            low: self.low[from..to].to_vec(),
            close: self.close[from..to].to_vec(),
            adj_close: self.adj_close[from..to].to_vec(),
            volume: self.volume[from..to].to_vec(),
        }
    }

    /// Re-exports the series in the same CSV layout accepted by
    /// [`parse_ohlcv_csv`]. Prices print in shortest round-trip form, so
    /// parse(write(s)) == s.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "Date,Open,High,Low,Close,Adj Close,Volume")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                self.dates[i],
                self.open[i],
                self.high[i],
                self.low[i],
                self.close[i],
                self.adj_close[i],
                self.volume[i]
            )?;
        }
        Ok(())
    }
}

const REQUIRED_COLUMNS: [&str; 7] = [
    "date",
    "open",
    "high",
    "low",
    "close",
    "adj close",
    "volume",
];

/// Parses a standard OHLCV CSV export: header required, columns matched
/// case-insensitively in any order, rows sorted by date afterwards.
///
/// Missing columns are schema errors; unparsable cells are row errors with
/// their line number; duplicate dates are integrity errors.
pub fn parse_ohlcv_csv<R: Read>(raw: R) -> Result<OhlcvSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(raw);

    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
        .clone();
    let lower: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();

    let mut index = [0usize; 7];
    for (slot, want) in REQUIRED_COLUMNS.iter().enumerate() {
        // "Adj Close" sometimes ships with an underscore or extra spaces.
        let found = lower.iter().position(|h| {
            h == want || (*want == "adj close" && h.replace(['_', '.'], " ").trim() == "adj close")
        });
        match found {
            Some(i) => index[slot] = i,
            None => return Err(Error::Schema(format!("missing column '{want}'"))),
        }
    }

    let mut rows: Vec<(NaiveDate, [f64; 6])> = Vec::new();
    for (rec_no, record) in reader.records().enumerate() {
        let line = rec_no + 2; // header is line 1
        let record = record.map_err(|e| Error::Row {
            line,
            message: e.to_string(),
        })?;
        let field = |i: usize| -> Result<&str> {
            record.get(index[i]).ok_or(Error::Row {
                line,
                message: format!("missing field {}", index[i]),
            })
        };
        let date = NaiveDate::parse_from_str(field(0)?, "%Y-%m-%d").map_err(|e| Error::Row {
            line,
            message: format!("bad date '{}': {}", record.get(index[0]).unwrap_or(""), e),
        })?;
        let mut nums = [0f64; 6];
        for (k, num) in nums.iter_mut().enumerate() {
            let text = field(k + 1)?;
            *num = text.parse().map_err(|_| Error::Row {
                line,
                message: format!("bad number '{text}'"),
            })?;
        }
        rows.push((date, nums));
    }

    if rows.is_empty() {
        return Err(Error::InsufficientData("no data rows in CSV".into()));
    }

    rows.sort_by_key(|(date, _)| *date);
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::Integrity(format!("duplicate date {}", pair[0].0)));
        }
    }

    let n = rows.len();
    let mut dates = Vec::with_capacity(n);
    let mut cols: [Vec<f64>; 6] = Default::default();
    for c in cols.iter_mut() {
        c.reserve(n);
    }
    for (date, nums) in rows {
        dates.push(date);
        for (c, v) in cols.iter_mut().zip(nums) {
            c.push(v);
        }
    }
    let [open, high, low, close, adj_close, volume] = cols;
    OhlcvSeries::new(dates, open, high, low, close, adj_close, volume)
}

/// One supervised example: an input block of feature rows and the close
/// prices over the following horizon.
#[derive(Debug, Clone)]
pub struct WindowSample {
    /// `[input_len x n_features]` feature block ending at `anchor_date`.
    pub inputs: Mat,
    /// Close prices for the `horizon` rows after the anchor.
    pub targets: Vec<f64>,
    /// Date of the last input row.
    pub anchor_date: NaiveDate,
    /// Row index of the anchor within the source series.
    pub anchor_index: usize,
}

/// Cuts `(input_len, horizon)` windows out of an aligned series/feature pair.
///
/// The feature frame must share the series' date index and be fully
/// populated; trim indicator warm-ups before windowing. Returns one sample
/// per anchor at the given stride, `max(0, (n - input_len - horizon)/stride + 1)`
/// in total, which is empty (not an error) when the series is too short.
pub fn sliding_windows(
    series: &OhlcvSeries,
    features: &FeatureFrame,
    input_len: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<WindowSample>> {
    if input_len == 0 || horizon == 0 || stride == 0 {
        return Err(Error::Input(
            "input_len, horizon, and stride must all be at least 1".into(),
        ));
    }
    if features.dates() != series.dates() {
        return Err(Error::Alignment(
            "feature frame dates do not match series dates".into(),
        ));
    }
    let n = series.len();
    if n < input_len + horizon {
        return Ok(Vec::new());
    }
    for row in 0..n {
        if !features.row_complete(row) {
            return Err(Error::Alignment(format!(
                "feature frame has missing values at row {} ({}); drop warm-up rows first",
                row,
                series.dates()[row]
            )));
        }
    }

    let n_features = features.n_columns();
    let mut samples = Vec::new();
    let mut start = 0;
    while start + input_len + horizon <= n {
        let anchor = start + input_len - 1;
        let mut data = Vec::with_capacity(input_len * n_features);
        for row in start..=anchor {
            for col in 0..n_features {
                data.push(features.value(row, col).expect("checked complete"));
            }
        }
        samples.push(WindowSample {
            inputs: Mat::from_vec(input_len, n_features, data)?,
            targets: series.close()[anchor + 1..anchor + 1 + horizon].to_vec(),
            anchor_date: series.dates()[anchor],
            anchor_index: anchor,
        });
        start += stride;
    }
    Ok(samples)
}

/// Splits at a calendar cutoff: dates `<= cutoff` on the left, the rest on
/// the right. The cutoff must lie within the series' date range.
pub fn split_by_date(
    series: &OhlcvSeries,
    cutoff: NaiveDate,
) -> Result<(OhlcvSeries, OhlcvSeries)> {
    let (first, last) = match (series.first_date(), series.last_date()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Range("cannot split an empty series".into())),
    };
    if cutoff < first || cutoff > last {
        return Err(Error::Range(format!(
            "cutoff {} outside series range [{}, {}]",
            cutoff, first, last
        )));
    }
    let split = series.dates().partition_point(|d| *d <= cutoff);
    Ok((series.slice(0, split), series.slice(split, series.len())))
}
