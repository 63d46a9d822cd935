//! Goodness-of-fit tests, classification metrics, and exploratory
//! statistics: two-sample KS, histogram KL divergence, accuracy and weighted
//! F1, autocorrelation, PCA with per-class cosine similarity, and summary
//! tables.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators;
use crate::labeling::Theta;
use crate::marketdata::OhlcvSeries;
use crate::mat::Mat;

/// Normalized histogram over strictly increasing bin edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    bin_edges: Vec<f64>,
    masses: Vec<f64>,
}

impl Histogram {
    pub fn new(bin_edges: Vec<f64>, masses: Vec<f64>) -> Result<Histogram> {
        if bin_edges.len() < 2 {
            return Err(Error::Input("histogram needs at least two edges".into()));
        }
        if masses.len() != bin_edges.len() - 1 {
            return Err(Error::Input(format!(
                "{} masses for {} edges",
                masses.len(),
                bin_edges.len()
            )));
        }
        if bin_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Input("bin edges must be strictly increasing".into()));
        }
        if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::Input(
                "masses must be finite and non-negative".into(),
            ));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Input(format!(
                "masses sum to {total}, expected 1 within 1e-12"
            )));
        }
        Ok(Histogram { bin_edges, masses })
    }

    /// Builds an equal-width histogram of the samples over `[lo, hi]`.
    /// Values at the top edge fall into the last bin.
    pub fn from_samples(samples: &[f64], n_bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
        if samples.is_empty() {
            return Err(Error::Input("cannot build a histogram of nothing".into()));
        }
        if n_bins == 0 {
            return Err(Error::Input("histogram needs at least one bin".into()));
        }
        if !(hi > lo) {
            return Err(Error::Input(format!("bad histogram range [{lo}, {hi}]")));
        }
        let width = (hi - lo) / n_bins as f64;
        let mut counts = vec![0usize; n_bins];
        for &v in samples {
            if v < lo || v > hi {
                continue;
            }
            let mut bin = ((v - lo) / width) as usize;
            if bin >= n_bins {
                bin = n_bins - 1;
            }
            counts[bin] += 1;
        }
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::Input("no samples fell inside the range".into()));
        }
        let masses: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        let bin_edges: Vec<f64> = (0..=n_bins).map(|i| lo + width * i as f64).collect();
        Histogram::new(bin_edges, masses)
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
}

/// Per-class precision/recall/F1 with supports.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClassMetrics {
    pub class: i8,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Accuracy and support-weighted F1 over three-valued labels; per-class F1
/// is zero when precision and recall are both zero.
pub fn accuracy_and_f1(
    y_true: &[Theta],
    y_pred: &[Theta],
) -> Result<(f64, f64, Vec<ClassMetrics>)> {
    if y_true.is_empty() {
        return Err(Error::Input("empty label vectors".into()));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::Input(format!(
            "{} true labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let n = y_true.len();
    let correct = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    let accuracy = correct as f64 / n as f64;

    let mut per_class = Vec::with_capacity(3);
    let mut weighted_f1 = 0.0;
    for class in Theta::ALL {
        let tp = y_true
            .iter()
            .zip(y_pred)
            .filter(|(t, p)| **t == class && **p == class)
            .count() as f64;
        let pred_pos = y_pred.iter().filter(|p| **p == class).count() as f64;
        let support = y_true.iter().filter(|t| **t == class).count();
        let precision = if pred_pos > 0.0 { tp / pred_pos } else { 0.0 };
        let recall = if support > 0 {
            tp / support as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        weighted_f1 += support as f64 / n as f64 * f1;
        per_class.push(ClassMetrics {
            class: class.value(),
            precision,
            recall,
            f1,
            support,
        });
    }
    Ok((accuracy, weighted_f1, per_class))
}

/// Asymptotic Kolmogorov CDF complement: `Q(x) = P(K > x)`.
/// Series truncate when terms drop below 1e-12.
fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 1e-8 {
        return 1.0;
    }
    if x < 1.0 {
        // Small-x theta-function form of the CDF converges fast here.
        let mut sum = 0.0;
        let factor = (2.0 * std::f64::consts::PI).sqrt() / x;
        for k in 1..=100 {
            let odd = (2 * k - 1) as f64;
            let term =
                (-odd * odd * std::f64::consts::PI * std::f64::consts::PI / (8.0 * x * x)).exp();
            sum += term;
            if term < 1e-12 {
                break;
            }
        }
        (1.0 - factor * sum).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * x * x).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-12 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Two-sample Kolmogorov-Smirnov test: the supremum distance between the
/// empirical CDFs with the asymptotic p-value at sqrt(nm/(n+m)) D.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Input("KS test requires non-empty samples".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    if sa.iter().chain(sb.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Input("KS test requires finite samples".into()));
    }
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (n, m) = (sa.len(), sb.len());
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d = 0.0f64;
    while i < n && j < m {
        let v = sa[i].min(sb[j]);
        while i < n && sa[i] <= v {
            i += 1;
        }
        while j < m && sb[j] <= v {
            j += 1;
        }
        let fa = i as f64 / n as f64;
        let fb = j as f64 / m as f64;
        d = d.max((fa - fb).abs());
    }
    let effective = ((n * m) as f64 / (n + m) as f64).sqrt();
    let p = kolmogorov_sf(effective * d);
    Ok((d, p))
}

/// Smoothing policy for [`kl_divergence_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KlSmoothing {
    /// Add epsilon to every bin of both histograms and renormalize.
    Additive(f64),
    /// No smoothing: a zero q-bin under positive p-mass is an error.
    None,
}

pub const KL_EPSILON: f64 = 1e-10;

/// Relative entropy from q to p in nats with the default 1e-10 additive
/// smoothing.
pub fn kl_divergence(p: &Histogram, q: &Histogram) -> Result<f64> {
    kl_divergence_with(p, q, KlSmoothing::Additive(KL_EPSILON))
}

pub fn kl_divergence_with(p: &Histogram, q: &Histogram, smoothing: KlSmoothing) -> Result<f64> {
    if p.bin_edges != q.bin_edges {
        return Err(Error::Input("histograms must share bin edges".into()));
    }
    let (p_mass, q_mass): (Vec<f64>, Vec<f64>) = match smoothing {
        KlSmoothing::Additive(eps) => {
            let smooth = |m: &[f64]| -> Vec<f64> {
                let total: f64 = m.iter().map(|v| v + eps).sum();
                m.iter().map(|v| (v + eps) / total).collect()
            };
            (smooth(&p.masses), smooth(&q.masses))
        }
        KlSmoothing::None => (p.masses.clone(), q.masses.clone()),
    };
    let mut sum = 0.0;
    for (pi, qi) in p_mass.iter().zip(&q_mass) {
        if *pi <= 0.0 {
            continue;
        }
        if *qi <= 0.0 {
            return Err(Error::DegenerateDenominator(
                "q has zero mass where p is positive; divergence is infinite".into(),
            ));
        }
        sum += pi * (pi / qi).ln();
    }
    // Tiny negative rounding from smoothing is clamped to the definition.
    Ok(sum.max(0.0))
}

/// Sample autocorrelation up to `max_lag`, normalized by the lag-0 term.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if x.len() <= max_lag {
        return Err(Error::Input(format!(
            "series of length {} cannot support lag {}",
            x.len(),
            max_lag
        )));
    }
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let denom: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    if denom <= 0.0 {
        return Err(Error::DegenerateData(
            "zero-variance series has no autocorrelation".into(),
        ));
    }
    let mut acf = Vec::with_capacity(max_lag + 1);
    for k in 0..=max_lag {
        let num: f64 = (0..n - k).map(|t| (x[t] - mean) * (x[t + k] - mean)).sum();
        acf.push(num / denom);
    }
    Ok(acf)
}

/// PCA projection with explained-variance fractions and mean pairwise cosine
/// similarity of the projected vectors within each label class.
#[derive(Debug, Clone)]
pub struct PcaReport {
    pub projection: Mat,
    pub explained: Vec<f64>,
    /// `(class, mean cosine, pair count)` per class with at least 2 members.
    pub class_cosine: Vec<(Theta, f64, usize)>,
}

fn power_iteration(cov: &mut [Vec<f64>], dim: usize) -> (f64, Vec<f64>) {
    // Deterministic start with mild asymmetry so no eigenvector is missed by
    // symmetry.
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + 0.01 * i as f64).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);

    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let mut next = vec![0.0; dim];
        for i in 0..dim {
            for j in 0..dim {
                next[i] += cov[i][j] * v[j];
            }
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return (0.0, v);
        }
        next.iter_mut().for_each(|x| *x /= norm);
        let delta: f64 = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = next;
        lambda = norm;
        if delta < 1e-10 {
            break;
        }
    }
    // Sign convention: largest-magnitude component positive.
    let lead = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if v[lead] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    // Deflate.
    for i in 0..dim {
        for j in 0..dim {
            cov[i][j] -= lambda * v[i] * v[j];
        }
    }
    (lambda, v)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < 1e-300 || nb < 1e-300 {
        return 0.0;
    }
    dot / (na * nb)
}

pub fn pca_cosine_eda(x: &Mat, dims: usize, labels: Option<&[Theta]>) -> Result<PcaReport> {
    let n = x.rows();
    let d = x.cols();
    if n < 2 {
        return Err(Error::Input("PCA needs at least two rows".into()));
    }
    if dims == 0 || dims > d {
        return Err(Error::Input(format!(
            "cannot project {d}-column data onto {dims} dimensions"
        )));
    }
    if let Some(l) = labels {
        if l.len() != n {
            return Err(Error::Input(format!("{} labels for {} rows", l.len(), n)));
        }
    }

    let mut centered = x.clone();
    for j in 0..d {
        let mean = (0..n).map(|i| x.at(i, j)).sum::<f64>() / n as f64;
        for i in 0..n {
            *centered.at_mut(i, j) -= mean;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for r in 0..n {
                acc += centered.at(r, i) * centered.at(r, j);
            }
            cov[i][j] = acc / (n as f64 - 1.0);
        }
    }
    let total_variance: f64 = (0..d).map(|i| cov[i][i]).sum();
    if total_variance <= 1e-300 {
        return Err(Error::DegenerateData("matrix has no variance".into()));
    }

    let mut axes = Vec::with_capacity(dims);
    let mut explained = Vec::with_capacity(dims);
    for _ in 0..dims {
        let (lambda, v) = power_iteration(&mut cov, d);
        explained.push((lambda / total_variance).max(0.0));
        axes.push(v);
    }

    let mut projection = Mat::zeros(n, dims);
    for i in 0..n {
        for (k, axis) in axes.iter().enumerate() {
            let mut acc = 0.0;
            for j in 0..d {
                acc += centered.at(i, j) * axis[j];
            }
            *projection.at_mut(i, k) = acc;
        }
    }

    let mut class_cosine = Vec::new();
    if let Some(labels) = labels {
        for class in Theta::ALL {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
            if members.len() < 2 {
                continue;
            }
            let mut sum = 0.0;
            let mut pairs = 0usize;
            for (a_pos, &a) in members.iter().enumerate() {
                for &b in &members[a_pos + 1..] {
                    sum += cosine_similarity(projection.row(a), projection.row(b));
                    pairs += 1;
                }
            }
            class_cosine.push((class, sum / pairs as f64, pairs));
        }
    }

    Ok(PcaReport {
        projection,
        explained,
        class_cosine,
    })
}

/// Summary rows, in tabulation order.
pub const SUMMARY_ROWS: [&str; 7] = ["mean", "std", "min", "25%", "50%", "75%", "max"];

/// Per-column mean/std/min/quartiles/max with the sample (n-1) deviation and
/// linearly interpolated quantiles.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub columns: Vec<String>,
    /// `values[row][col]` with rows ordered per [`SUMMARY_ROWS`].
    pub values: Vec<Vec<f64>>,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn summary_stats(columns: &[(String, Vec<f64>)]) -> Result<SummaryTable> {
    if columns.is_empty() {
        return Err(Error::Input("no columns to summarize".into()));
    }
    let mut values = vec![Vec::with_capacity(columns.len()); SUMMARY_ROWS.len()];
    for (name, data) in columns {
        if data.is_empty() {
            return Err(Error::Input(format!("column '{name}' is empty")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "column '{name}' has non-finite values"
            )));
        }
        let n = data.len();
        let mean = data.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = data.clone();
        sorted.sort_by(f64::total_cmp);
        values[0].push(mean);
        values[1].push(std);
        values[2].push(sorted[0]);
        values[3].push(quantile_sorted(&sorted, 0.25));
        values[4].push(quantile_sorted(&sorted, 0.50));
        values[5].push(quantile_sorted(&sorted, 0.75));
        values[6].push(sorted[n - 1]);
    }
    Ok(SummaryTable {
        columns: columns.iter().map(|(n, _)| n.clone()).collect(),
        values,
    })
}

impl SummaryTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "stat")?;
        for c in &self.columns {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
        for (row, name) in SUMMARY_ROWS.iter().enumerate() {
            write!(w, "{name}")?;
            for v in &self.values[row] {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Exploratory summary of an OHLCV series using the standard attribute
/// column order: Open, High, Low, Close, Adj Close, Volume, SMA close,
/// EMA close, up, down, RSI close. Warm-up positions are excluded per
/// column; up and down are the trailing average gain and negated average
/// loss feeding the RSI.
pub fn ohlcv_summary(series: &OhlcvSeries, rsi_period: usize) -> Result<SummaryTable> {
    const EDA_MA_PERIOD: usize = 20;
    let close = series.close();
    let sma = indicators::sma(close, EDA_MA_PERIOD)?;
    let ema = indicators::ema(close, EDA_MA_PERIOD)?;
    let (rsi, up, down) = indicators::rsi_components(close, rsi_period)?;

    let defined = |s: &indicators::IndicatorSeries| -> Vec<f64> {
        (0..s.len()).filter_map(|t| s.get(t)).collect()
    };
    let columns = vec![
        ("Open".to_string(), series.open().to_vec()),
        ("High".to_string(), series.high().to_vec()),
        ("Low".to_string(), series.low().to_vec()),
        ("Close".to_string(), close.to_vec()),
        ("Adj Close".to_string(), series.adj_close().to_vec()),
        ("Volume".to_string(), series.volume().to_vec()),
        ("SMA close".to_string(), defined(&sma)),
        ("EMA close".to_string(), defined(&ema)),
        ("up".to_string(), defined(&up)),
        ("down".to_string(), defined(&down)),
        ("RSI close".to_string(), defined(&rsi)),
    ];
    summary_stats(&columns)
}

/// Full evaluation record for one run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvaluationReport {
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub kl_entropy: f64,
    pub per_class: Vec<ClassMetrics>,
}

impl EvaluationReport {
    /// Machine-parsable key-value rendering, deterministically ordered.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "accuracy: {}", self.accuracy)?;
        writeln!(w, "weighted_f1: {}", self.weighted_f1)?;
        writeln!(w, "ks_statistic: {}", self.ks_statistic)?;
        writeln!(w, "ks_p_value: {}", self.ks_p_value)?;
        writeln!(w, "kl_entropy: {}", self.kl_entropy)?;
        for c in &self.per_class {
            writeln!(
                w,
                "class_{}: precision={} recall={} f1={} support={}",
                c.class, c.precision, c.recall, c.f1, c.support
            )?;
        }
        Ok(())
    }
}
