//! Trade-signal rules, the 13-column classification feature matrix, and the
//! trailing-change target labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FeatureFrame;
use crate::indicators::{self, IndicatorConfig, IndicatorSeries};
use crate::marketdata::OhlcvSeries;

/// Three-state trend label: +1 expected up, 0 stable, -1 expected down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Theta {
    Down,
    Flat,
    Up,
}

impl Theta {
    pub fn value(self) -> i8 {
        match self {
            Theta::Down => -1,
            Theta::Flat => 0,
            Theta::Up => 1,
        }
    }

    pub fn from_value(v: i8) -> Result<Theta> {
        match v {
            -1 => Ok(Theta::Down),
            0 => Ok(Theta::Flat),
            1 => Ok(Theta::Up),
            other => Err(Error::Input(format!(
                "theta must be -1, 0, or +1, got {other}"
            ))),
        }
    }

    /// All labels in ascending order.
    pub const ALL: [Theta; 3] = [Theta::Down, Theta::Flat, Theta::Up];

    /// Swaps +1 and -1, used by the convention-inversion flags.
    pub fn inverted(self) -> Theta {
        match self {
            Theta::Down => Theta::Up,
            Theta::Flat => Theta::Flat,
            Theta::Up => Theta::Down,
        }
    }
}

impl std::fmt::Display for Theta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Which rule produced a signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalSource {
    Macd,
    Rsi,
    Trix,
    Bbands,
    Target,
}

/// A per-date label together with its provenance. Positions where the rule's
/// inputs were still warming up carry `theta = 0` with `warmup` set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Signal {
    pub theta: Theta,
    pub source: SignalSource,
    pub warmup: bool,
}

impl Signal {
    fn live(theta: Theta, source: SignalSource) -> Signal {
        Signal {
            theta,
            source,
            warmup: false,
        }
    }

    fn warm(source: SignalSource) -> Signal {
        Signal {
            theta: Theta::Flat,
            source,
            warmup: true,
        }
    }
}

/// Signal rule selector for [`indicator_signal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalRule {
    Macd,
    Rsi,
    Trix,
    Bbands,
}

/// The indicator series a signal rule may draw on.
#[derive(Debug, Clone, Default)]
pub struct SignalInputs<'a> {
    pub macd_line: Option<&'a IndicatorSeries>,
    pub macd_signal_line: Option<&'a IndicatorSeries>,
    pub rsi: Option<&'a IndicatorSeries>,
    pub trix: Option<&'a IndicatorSeries>,
    pub close: Option<&'a [f64]>,
    pub bb_upper: Option<&'a IndicatorSeries>,
    pub bb_lower: Option<&'a IndicatorSeries>,
}

/// Applies one labeling rule to its indicator inputs.
pub fn indicator_signal(rule: SignalRule, inputs: &SignalInputs<'_>) -> Result<Vec<Signal>> {
    let missing = |what: &str| Error::Input(format!("{rule:?} rule requires {what}"));
    match rule {
        SignalRule::Macd => {
            let line = inputs.macd_line.ok_or_else(|| missing("macd_line"))?;
            let signal = inputs
                .macd_signal_line
                .ok_or_else(|| missing("macd_signal_line"))?;
            macd_signal(line, signal, false)
        }
        SignalRule::Trix => {
            let line = inputs.trix.ok_or_else(|| missing("trix"))?;
            Ok(trix_signal(line, false))
        }
        SignalRule::Rsi => {
            let line = inputs.rsi.ok_or_else(|| missing("rsi"))?;
            Ok(rsi_signal(line))
        }
        SignalRule::Bbands => {
            let close = inputs.close.ok_or_else(|| missing("close"))?;
            let upper = inputs.bb_upper.ok_or_else(|| missing("bb_upper"))?;
            let lower = inputs.bb_lower.ok_or_else(|| missing("bb_lower"))?;
            bollinger_signal(close, upper, lower)
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Above,
    Below,
}

/// First-crossing state machine shared by the MACD and TRIX rules.
///
/// A first cross above the reference emits a sell (-1) and a first cross
/// below emits a buy (+1) — the convention is deliberately contrarian and
/// can be flipped with `invert`. The first defined position has no prior
/// side and is flagged as warm-up; exact touches of the reference keep the
/// previous side.
fn crossing_signal(
    diff: impl Iterator<Item = Option<f64>>,
    source: SignalSource,
    invert: bool,
) -> Vec<Signal> {
    let mut out = Vec::new();
    let mut side: Option<Side> = None;
    let mut seen_defined = false;
    for d in diff {
        let Some(d) = d else {
            // Gap: reset the crossing state.
            side = None;
            seen_defined = false;
            out.push(Signal::warm(source));
            continue;
        };
        let new_side = if d > 0.0 {
            Some(Side::Above)
        } else if d < 0.0 {
            Some(Side::Below)
        } else {
            side // on the line: keep the previous side
        };
        let theta = match (side, new_side) {
            (Some(Side::Below), Some(Side::Above)) => Theta::Down,
            (Some(Side::Above), Some(Side::Below)) => Theta::Up,
            _ => Theta::Flat,
        };
        let theta = if invert { theta.inverted() } else { theta };
        if seen_defined {
            out.push(Signal::live(theta, source));
        } else {
            // No prior side yet: emit a flagged hold.
            out.push(Signal::warm(source));
            seen_defined = true;
        }
        side = new_side;
    }
    out
}

/// MACD-vs-signal-line crossings.
pub fn macd_signal(
    line: &IndicatorSeries,
    signal_line: &IndicatorSeries,
    invert: bool,
) -> Result<Vec<Signal>> {
    if line.len() != signal_line.len() {
        return Err(Error::Alignment(format!(
            "macd line has {} positions, signal line {}",
            line.len(),
            signal_line.len()
        )));
    }
    let diff = (0..line.len()).map(|t| match (line.get(t), signal_line.get(t)) {
        (Some(a), Some(b)) => Some(a - b),
        _ => None,
    });
    Ok(crossing_signal(diff, SignalSource::Macd, invert))
}

/// TRIX zero-line crossings.
pub fn trix_signal(trix: &IndicatorSeries, invert: bool) -> Vec<Signal> {
    let diff = (0..trix.len()).map(|t| trix.get(t));
    crossing_signal(diff, SignalSource::Trix, invert)
}

/// RSI thresholds: above 70 sell, below 30 buy, else hold. Strict
/// inequalities; no crossing memory.
pub fn rsi_signal(rsi: &IndicatorSeries) -> Vec<Signal> {
    (0..rsi.len())
        .map(|t| match rsi.get(t) {
            None => Signal::warm(SignalSource::Rsi),
            Some(v) if v > 70.0 => Signal::live(Theta::Down, SignalSource::Rsi),
            Some(v) if v < 30.0 => Signal::live(Theta::Up, SignalSource::Rsi),
            Some(_) => Signal::live(Theta::Flat, SignalSource::Rsi),
        })
        .collect()
}

/// Bollinger band breakouts: close above the upper band sells, below the
/// lower band buys.
pub fn bollinger_signal(
    close: &[f64],
    upper: &IndicatorSeries,
    lower: &IndicatorSeries,
) -> Result<Vec<Signal>> {
    if close.len() != upper.len() || close.len() != lower.len() {
        return Err(Error::Alignment(
            "close and band series must have equal length".into(),
        ));
    }
    Ok((0..close.len())
        .map(|t| match (upper.get(t), lower.get(t)) {
            (Some(u), Some(l)) => {
                let theta = if close[t] > u {
                    Theta::Down
                } else if close[t] < l {
                    Theta::Up
                } else {
                    Theta::Flat
                };
                Signal::live(theta, SignalSource::Bbands)
            }
            _ => Signal::warm(SignalSource::Bbands),
        })
        .collect())
}

/// Target-rule configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LabelConfig {
    /// Trailing comparison distance in trading rows.
    pub horizon: usize,
    /// Relative-change band treated as "hold".
    pub margin: f64,
    /// Flip the target so a large rise sells instead of buys.
    pub prose_polarity: bool,
    /// Flip the MACD/TRIX crossing convention to buy-on-upward-cross.
    pub invert_crossings: bool,
}

impl Default for LabelConfig {
    fn default() -> LabelConfig {
        LabelConfig {
            horizon: 15,
            margin: 0.1,
            prose_polarity: false,
            invert_crossings: false,
        }
    }
}

impl LabelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Parameter("target horizon must be at least 1".into()));
        }
        if !(self.margin >= 0.0) {
            return Err(Error::Parameter(
                "target margin must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Trailing-change target: +1 when the close rose more than `margin`
/// relative to `horizon` rows earlier, -1 when it fell more, 0 inside the
/// band (boundaries inclusive). The first `horizon` positions are flagged.
pub fn target_theta(close: &[f64], horizon: usize, margin: f64) -> Result<Vec<Signal>> {
    target_theta_with(close, horizon, margin, false)
}

/// [`target_theta`] with the optional polarity flip (sell on a large rise).
pub fn target_theta_with(
    close: &[f64],
    horizon: usize,
    margin: f64,
    prose_polarity: bool,
) -> Result<Vec<Signal>> {
    if horizon == 0 {
        return Err(Error::Parameter("target horizon must be at least 1".into()));
    }
    if close.len() <= horizon {
        return Err(Error::InsufficientData(format!(
            "target rule needs more than {} observations, got {}",
            horizon,
            close.len()
        )));
    }
    let mut out = Vec::with_capacity(close.len());
    for t in 0..close.len() {
        if t < horizon {
            out.push(Signal::warm(SignalSource::Target));
            continue;
        }
        let base = close[t - horizon];
        let diff = close[t] - base;
        let theta = if diff > margin * base {
            Theta::Up
        } else if diff < -margin * base {
            Theta::Down
        } else {
            Theta::Flat
        };
        let theta = if prose_polarity {
            theta.inverted()
        } else {
            theta
        };
        out.push(Signal::live(theta, SignalSource::Target));
    }
    Ok(out)
}

/// Names of the 13 classification features, in matrix column order.
pub const FEATURE_NAMES: [&str; 13] = [
    "close",
    "sma20",
    "macd_sign",
    "macd_signal_line",
    "macd_line",
    "macd_diff",
    "bb_sign",
    "bb_upper",
    "bb_lower",
    "rsi_sign",
    "rsi_close",
    "trix_sign",
    "trix_line",
];

const SMA_FEATURE_PERIOD: usize = 20;

fn signal_cells(signals: &[Signal]) -> Vec<Option<f64>> {
    signals
        .iter()
        .map(|s| {
            if s.warmup {
                None
            } else {
                Some(s.theta.value() as f64)
            }
        })
        .collect()
}

/// Builds the 13-column classification matrix over the series, dropping
/// every row where any indicator is still warming up or the target rule is
/// undefined. Fails when no rows survive.
pub fn build_feature_matrix(
    series: &OhlcvSeries,
    cfg: &IndicatorConfig,
    label_cfg: &LabelConfig,
) -> Result<FeatureFrame> {
    cfg.validate()?;
    label_cfg.validate()?;
    let close = series.close();
    let (macd_line, macd_sig) = indicators::macd(close, cfg)?;
    let sma20 = indicators::sma(close, SMA_FEATURE_PERIOD)?;
    let (bb_upper, bb_lower, _) = indicators::bollinger(close, cfg.bb_period, cfg.bb_width)?;
    let rsi = indicators::rsi(close, cfg.rsi_period)?;
    let trix = indicators::trix(close, cfg.trix_period)?;

    let macd_signs = macd_signal(&macd_line, &macd_sig, label_cfg.invert_crossings)?;
    let trix_signs = trix_signal(&trix, label_cfg.invert_crossings);
    let rsi_signs = rsi_signal(&rsi);
    let bb_signs = bollinger_signal(close, &bb_upper, &bb_lower)?;
    let target = target_theta_with(
        close,
        label_cfg.horizon,
        label_cfg.margin,
        label_cfg.prose_polarity,
    )?;

    let macd_diff: Vec<Option<f64>> = (0..close.len())
        .map(|t| match (macd_sig.get(t), macd_line.get(t)) {
            (Some(s), Some(l)) => Some(s - l),
            _ => None,
        })
        .collect();

    let mut frame = FeatureFrame::new(series.dates().to_vec());
    frame.push_column("close", close.iter().map(|&c| Some(c)).collect())?;
    frame.push_column("sma20", sma20.to_cells())?;
    frame.push_column("macd_sign", signal_cells(&macd_signs))?;
    frame.push_column("macd_signal_line", macd_sig.to_cells())?;
    frame.push_column("macd_line", macd_line.to_cells())?;
    frame.push_column("macd_diff", macd_diff)?;
    frame.push_column("bb_sign", signal_cells(&bb_signs))?;
    frame.push_column("bb_upper", bb_upper.to_cells())?;
    frame.push_column("bb_lower", bb_lower.to_cells())?;
    frame.push_column("rsi_sign", signal_cells(&rsi_signs))?;
    frame.push_column("rsi_close", rsi.to_cells())?;
    frame.push_column("trix_sign", signal_cells(&trix_signs))?;
    frame.push_column("trix_line", trix.to_cells())?;

    let keep: Vec<usize> = (0..frame.len())
        .filter(|&row| frame.row_complete(row) && !target[row].warmup)
        .collect();
    if keep.is_empty() {
        return Err(Error::InsufficientData(
            "no rows survive indicator warm-up and the target horizon".into(),
        ));
    }
    Ok(frame.select_rows(&keep))
}

/// Target labels aligned to a feature matrix produced by
/// [`build_feature_matrix`] over the same series.
pub fn targets_for_frame(
    series: &OhlcvSeries,
    frame: &FeatureFrame,
    label_cfg: &LabelConfig,
) -> Result<Vec<Theta>> {
    let target = target_theta_with(
        series.close(),
        label_cfg.horizon,
        label_cfg.margin,
        label_cfg.prose_polarity,
    )?;
    let dates = series.dates();
    let mut out = Vec::with_capacity(frame.len());
    for date in frame.dates() {
        let row = dates
            .binary_search(date)
            .map_err(|_| Error::Alignment(format!("frame date {date} not in series")))?;
        if target[row].warmup {
            return Err(Error::Alignment(format!(
                "target undefined at frame date {date}"
            )));
        }
        out.push(target[row].theta);
    }
    Ok(out)
}

/// Exports signals as a date-indexed CSV with theta spelled -1/0/+1 and
/// warm-up rows left empty.
pub fn signals_to_cells(signals: &[Signal]) -> Vec<Option<f64>> {
    signal_cells(signals)
}
