//! Close-price technical indicators: SMA, EMA, MACD with signal line, RSI,
//! TRIX, Bollinger bands, momentum, and rolling volatility.
//!
//! Every indicator preserves the input length and reports how many leading
//! positions are warm-up. Warm-up values are flagged, never silently zero:
//! [`IndicatorSeries::get`] returns `None` there, while [`IndicatorSeries::raw`]
//! exposes the underlying recursion values (EMA chains need them to seed
//! dependent indicators from position zero).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FeatureFrame;
use crate::marketdata::OhlcvSeries;

/// One indicator evaluated over a price series, aligned index-for-index.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSeries {
    values: Vec<f64>,
    warmup_len: usize,
}

impl IndicatorSeries {
    pub fn new(values: Vec<f64>, warmup_len: usize) -> IndicatorSeries {
        IndicatorSeries { values, warmup_len }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Leading positions that have not stabilized yet.
    pub fn warmup_len(&self) -> usize {
        self.warmup_len
    }

    /// Value at `t`, or `None` inside the warm-up region.
    pub fn get(&self, t: usize) -> Option<f64> {
        if t < self.warmup_len {
            None
        } else {
            self.values.get(t).copied()
        }
    }

    /// Underlying value at `t` regardless of warm-up (NaN where undefined).
    pub fn raw(&self, t: usize) -> f64 {
        self.values[t]
    }

    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    /// Values as optional cells, ready for a feature-frame column.
    pub fn to_cells(&self) -> Vec<Option<f64>> {
        (0..self.len()).map(|t| self.get(t)).collect()
    }
}

/// Periods and widths for the indicator set.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct IndicatorConfig {
    pub macd_fast: usize,
    pub macd_slow: usize,
    pub macd_signal: usize,
    pub rsi_period: usize,
    pub trix_period: usize,
    pub bb_period: usize,
    pub bb_width: f64,
    pub momentum_lag: usize,
    pub vol_window: usize,
}

impl Default for IndicatorConfig {
    fn default() -> IndicatorConfig {
        IndicatorConfig {
            macd_fast: 12,
            macd_slow: 26,
            macd_signal: 9,
            rsi_period: 14,
            trix_period: 15,
            bb_period: 20,
            bb_width: 2.0,
            momentum_lag: 10,
            vol_window: 10,
        }
    }
}

impl IndicatorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("macd_fast", self.macd_fast),
            ("macd_slow", self.macd_slow),
            ("macd_signal", self.macd_signal),
            ("rsi_period", self.rsi_period),
            ("trix_period", self.trix_period),
            ("bb_period", self.bb_period),
            ("momentum_lag", self.momentum_lag),
            ("vol_window", self.vol_window),
        ] {
            if p < 1 {
                return Err(Error::Parameter(format!("{name} must be at least 1")));
            }
        }
        if !(self.bb_width > 0.0) {
            return Err(Error::Parameter("bb_width must be positive".into()));
        }
        Ok(())
    }
}

fn population_std(window: &[f64]) -> f64 {
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let var = window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt()
}

/// Simple moving average over a trailing window.
pub fn sma(prices: &[f64], period: usize) -> Result<IndicatorSeries> {
    if period == 0 {
        return Err(Error::Parameter("sma period must be at least 1".into()));
    }
    if prices.len() < period {
        return Err(Error::InsufficientData(format!(
            "sma period {} exceeds series length {}",
            period,
            prices.len()
        )));
    }
    let mut values = vec![f64::NAN; prices.len()];
    let mut running: f64 = prices[..period - 1].iter().sum();
    for t in period - 1..prices.len() {
        running += prices[t];
        values[t] = running / period as f64;
        running -= prices[t + 1 - period];
    }
    Ok(IndicatorSeries::new(values, period - 1))
}

/// Exponential moving average with smoothing 2/(period+1), seeded at the
/// first observation. The first `period - 1` positions are flagged as
/// warm-up but their recursion values stay accessible through `raw`.
pub fn ema(prices: &[f64], period: usize) -> Result<IndicatorSeries> {
    if period == 0 {
        return Err(Error::Parameter("ema period must be at least 1".into()));
    }
    if prices.is_empty() {
        return Err(Error::InsufficientData("ema over an empty series".into()));
    }
    let alpha = 2.0 / (period as f64 + 1.0);
    let mut values = Vec::with_capacity(prices.len());
    let mut e = prices[0];
    values.push(e);
    for &p in &prices[1..] {
        e += alpha * (p - e);
        values.push(e);
    }
    Ok(IndicatorSeries::new(values, period - 1))
}

/// MACD line (fast EMA minus slow EMA) and its signal line (EMA of the MACD).
///
/// The signal-line recursion runs over the raw MACD values from position
/// zero, so its warm-up is `macd_slow + macd_signal - 2`.
pub fn macd(prices: &[f64], cfg: &IndicatorConfig) -> Result<(IndicatorSeries, IndicatorSeries)> {
    cfg.validate()?;
    let needed = cfg.macd_slow + cfg.macd_signal;
    if prices.len() < needed {
        return Err(Error::InsufficientData(format!(
            "macd needs at least {} observations, got {}",
            needed,
            prices.len()
        )));
    }
    let fast = ema(prices, cfg.macd_fast)?;
    let slow = ema(prices, cfg.macd_slow)?;
    let line: Vec<f64> = fast
        .raw_values()
        .iter()
        .zip(slow.raw_values())
        .map(|(f, s)| f - s)
        .collect();
    let signal_raw = ema(&line, cfg.macd_signal)?;
    let macd_line = IndicatorSeries::new(line, cfg.macd_slow - 1);
    let signal_line = IndicatorSeries::new(
        signal_raw.raw_values().to_vec(),
        cfg.macd_slow + cfg.macd_signal - 2,
    );
    Ok((macd_line, signal_line))
}

/// Relative strength index over trailing-window average gain and loss.
///
/// Conventions: zero loss with positive gain gives 100, zero gain and zero
/// loss gives 50.
pub fn rsi(prices: &[f64], period: usize) -> Result<IndicatorSeries> {
    let (series, _, _) = rsi_components(prices, period)?;
    Ok(series)
}

/// RSI together with its average-gain ("up") and negated average-loss
/// ("down") components, as tabulated in exploratory summaries.
pub fn rsi_components(
    prices: &[f64],
    period: usize,
) -> Result<(IndicatorSeries, IndicatorSeries, IndicatorSeries)> {
    if period == 0 {
        return Err(Error::Parameter("rsi period must be at least 1".into()));
    }
    if prices.len() < period + 1 {
        return Err(Error::InsufficientData(format!(
            "rsi needs at least {} observations, got {}",
            period + 1,
            prices.len()
        )));
    }
    let n = prices.len();
    let mut rsi_values = vec![f64::NAN; n];
    let mut up_values = vec![f64::NAN; n];
    let mut down_values = vec![f64::NAN; n];
    let changes: Vec<f64> = prices.windows(2).map(|w| w[1] - w[0]).collect();
    for t in period..n {
        // Changes ending at t: indices t-period .. t-1 in `changes`.
        let window = &changes[t - period..t];
        let gain: f64 = window.iter().filter(|c| **c > 0.0).sum::<f64>() / period as f64;
        let loss: f64 = -window.iter().filter(|c| **c < 0.0).sum::<f64>() / period as f64;
        up_values[t] = gain;
        down_values[t] = -loss;
        rsi_values[t] = if loss == 0.0 && gain == 0.0 {
            50.0
        } else if loss == 0.0 {
            100.0
        } else {
            let rs = gain / loss;
            100.0 - 100.0 / (1.0 + rs)
        };
    }
    Ok((
        IndicatorSeries::new(rsi_values, period),
        IndicatorSeries::new(up_values, period),
        IndicatorSeries::new(down_values, period),
    ))
}

/// One-step relative change of the triple-smoothed EMA; oscillates around
/// zero. Left as a raw ratio, not scaled to percent.
pub fn trix(prices: &[f64], period: usize) -> Result<IndicatorSeries> {
    if period == 0 {
        return Err(Error::Parameter("trix period must be at least 1".into()));
    }
    if prices.len() < 2 {
        return Err(Error::InsufficientData(
            "trix needs at least 2 observations".into(),
        ));
    }
    let e1 = ema(prices, period)?;
    let e2 = ema(e1.raw_values(), period)?;
    let e3 = ema(e2.raw_values(), period)?;
    let t3 = e3.raw_values();
    let mut values = vec![f64::NAN; prices.len()];
    for t in 1..t3.len() {
        if t3[t - 1].abs() < 1e-12 {
            return Err(Error::DegenerateDenominator(format!(
                "triple EMA within 1e-12 of zero at position {}",
                t - 1
            )));
        }
        values[t] = (t3[t] - t3[t - 1]) / t3[t - 1];
    }
    Ok(IndicatorSeries::new(values, 3 * (period - 1) + 1))
}

/// Bollinger bands: SMA midline +/- `k` population standard deviations over
/// the same window. Returns `(upper, lower, mid)`.
pub fn bollinger(
    prices: &[f64],
    period: usize,
    k: f64,
) -> Result<(IndicatorSeries, IndicatorSeries, IndicatorSeries)> {
    if !(k >= 0.0) {
        return Err(Error::Parameter(
            "bollinger width must be non-negative".into(),
        ));
    }
    let mid = sma(prices, period)?;
    let n = prices.len();
    let mut upper = vec![f64::NAN; n];
    let mut lower = vec![f64::NAN; n];
    for t in period - 1..n {
        let std = population_std(&prices[t + 1 - period..=t]);
        upper[t] = mid.raw(t) + k * std;
        lower[t] = mid.raw(t) - k * std;
    }
    Ok((
        IndicatorSeries::new(upper, period - 1),
        IndicatorSeries::new(lower, period - 1),
        mid,
    ))
}

/// Price momentum (`p(t) - p(t-lag)`) and rolling volatility (population
/// standard deviation of one-day simple returns over the trailing window).
pub fn momentum_and_volatility(
    prices: &[f64],
    momentum_lag: usize,
    vol_window: usize,
) -> Result<(IndicatorSeries, IndicatorSeries)> {
    if momentum_lag == 0 || vol_window == 0 {
        return Err(Error::Parameter(
            "momentum lag and volatility window must be at least 1".into(),
        ));
    }
    let n = prices.len();
    if n <= momentum_lag.max(vol_window) {
        return Err(Error::InsufficientData(format!(
            "momentum/volatility need more than {} observations, got {}",
            momentum_lag.max(vol_window),
            n
        )));
    }
    let mut momentum = vec![f64::NAN; n];
    for t in momentum_lag..n {
        momentum[t] = prices[t] - prices[t - momentum_lag];
    }
    let returns: Vec<f64> = prices.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    let mut volatility = vec![f64::NAN; n];
    for t in vol_window..n {
        volatility[t] = population_std(&returns[t - vol_window..t]);
    }
    Ok((
        IndicatorSeries::new(momentum, momentum_lag),
        IndicatorSeries::new(volatility, vol_window),
    ))
}

/// Every indicator over the series' closes as one date-indexed frame, with
/// explicit empty cells in the warm-up regions. This is the export layout
/// for inspection and plotting.
pub fn indicator_frame(series: &OhlcvSeries, cfg: &IndicatorConfig) -> Result<FeatureFrame> {
    cfg.validate()?;
    let close = series.close();
    let sma_s = sma(close, cfg.bb_period)?;
    let ema_s = ema(close, cfg.bb_period)?;
    let (macd_line, macd_sig) = macd(close, cfg)?;
    let rsi_s = rsi(close, cfg.rsi_period)?;
    let trix_s = trix(close, cfg.trix_period)?;
    let (bb_upper, bb_lower, bb_mid) = bollinger(close, cfg.bb_period, cfg.bb_width)?;
    let (momentum, volatility) = momentum_and_volatility(close, cfg.momentum_lag, cfg.vol_window)?;

    let mut frame = FeatureFrame::new(series.dates().to_vec());
    frame.push_column("close", close.iter().map(|&c| Some(c)).collect())?;
    frame.push_column("sma", sma_s.to_cells())?;
    frame.push_column("ema", ema_s.to_cells())?;
    frame.push_column("macd_line", macd_line.to_cells())?;
    frame.push_column("macd_signal_line", macd_sig.to_cells())?;
    frame.push_column("rsi", rsi_s.to_cells())?;
    frame.push_column("trix", trix_s.to_cells())?;
    frame.push_column("bb_upper", bb_upper.to_cells())?;
    frame.push_column("bb_mid", bb_mid.to_cells())?;
    frame.push_column("bb_lower", bb_lower.to_cells())?;
    frame.push_column("momentum", momentum.to_cells())?;
    frame.push_column("volatility", volatility.to_cells())?;
    Ok(frame)
}
