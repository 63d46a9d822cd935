//! End-to-end orchestration: ingest -> indicators -> labels -> forecaster ->
//! classifier -> evaluation -> simulation, driven by one declarative TOML
//! config with a single global seed. Reruns with the same config and seed
//! reproduce every artifact byte for byte.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::bns::{self, BnsParams, LambdaEstimate, RegimePath};
use crate::classifier::{
    predict_labels, train_classifier, ClassifierConfig, ClassifierKind, ClassifierModel,
    LabeledDataset,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    accuracy_and_f1, kl_divergence, ks_two_sample, EvaluationReport, Histogram,
};
use crate::forecaster::{train_forecaster, FeatureKind, TrainConfig};
use crate::frame::FeatureFrame;
use crate::indicators::{self, IndicatorConfig};
use crate::labeling::{self, LabelConfig, Theta};
use crate::marketdata::{parse_ohlcv_csv, sliding_windows, split_by_date, OhlcvSeries};
use crate::mat::Mat;
use crate::seed;

/// One input data set.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StockConfig {
    pub name: String,
    pub csv: PathBuf,
}

/// Train/test cutoff.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    /// Last date (inclusive) of the training span.
    pub train_end: NaiveDate,
}

/// Data-preparation options.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Drive indicators and labels from the back-adjusted close instead of
    /// the raw close.
    pub use_adjusted: bool,
}

/// Test-window selection. Named presets pin the two benchmark date ranges.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    pub windows: usize,
    pub window_len: usize,
    /// "test-set-1" (2021-02-22 to 2021-04-26) or "test-set-2"
    /// (2021-04-27 to 2021-06-25).
    pub preset: Option<String>,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
}

impl Default for TestConfig {
    fn default() -> TestConfig {
        TestConfig {
            windows: 4,
            window_len: 7,
            preset: None,
            start: None,
            end: None,
        }
    }
}

impl TestConfig {
    /// Date range after preset resolution.
    pub fn resolved_range(&self) -> Result<(Option<NaiveDate>, Option<NaiveDate>)> {
        let date = |y: i32, m: u32, d: u32| NaiveDate::from_ymd_opt(y, m, d).expect("valid date");
        match self.preset.as_deref() {
            None => Ok((self.start, self.end)),
            Some("test-set-1") => Ok((Some(date(2021, 2, 22)), Some(date(2021, 4, 26)))),
            Some("test-set-2") => Ok((Some(date(2021, 4, 27)), Some(date(2021, 6, 25)))),
            Some(other) => Err(Error::Config(format!("unknown test preset '{other}'"))),
        }
    }
}

/// Supervised windowing geometry.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub input_len: usize,
    pub horizon: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> WindowConfig {
        WindowConfig {
            input_len: 30,
            horizon: 7,
            stride: 1,
        }
    }
}

/// Classifier families to train plus their hyper-parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub kinds: Vec<ClassifierKind>,
    pub config: ClassifierConfig,
    /// Retrain on a rolling window of recent rows instead of once on the
    /// full training split.
    pub rolling_retrain: Option<usize>,
}

impl Default for ClassifierSection {
    fn default() -> ClassifierSection {
        ClassifierSection {
            kinds: ClassifierKind::ALL.to_vec(),
            config: ClassifierConfig::default(),
            rolling_retrain: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub kl_bins: usize,
}

impl Default for EvalConfig {
    fn default() -> EvalConfig {
        EvalConfig { kl_bins: 50 }
    }
}

/// The whole declarative run description. The seed is mandatory: runs never
/// fall back to wall-clock entropy.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub stocks: Vec<StockConfig>,
    pub split: SplitConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub test: TestConfig,
    #[serde(default)]
    pub windows: WindowConfig,
    #[serde(default)]
    pub indicators: IndicatorConfig,
    #[serde(default)]
    pub labeling: LabelConfig,
    #[serde(default)]
    pub forecaster: TrainConfig,
    #[serde(default)]
    pub classifier: ClassifierSection,
    #[serde(default)]
    pub evaluation: EvalConfig,
    #[serde(default)]
    pub bns: BnsParams,
}

impl PipelineConfig {
    /// Parses a TOML config; relative paths resolve against the config
    /// file's directory.
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for stock in &mut cfg.stocks {
            if stock.csv.is_relative() {
                stock.csv = base.join(&stock.csv);
            }
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stocks.is_empty() {
            return Err(Error::Config("no stocks configured".into()));
        }
        let mut names = BTreeSet::new();
        for stock in &self.stocks {
            if !names.insert(&stock.name) {
                return Err(Error::Config(format!("duplicate stock '{}'", stock.name)));
            }
            if !stock.csv.exists() {
                return Err(Error::Config(format!(
                    "data file {} for '{}' does not exist",
                    stock.csv.display(),
                    stock.name
                )));
            }
        }
        if self.test.windows == 0 || self.test.window_len == 0 {
            return Err(Error::Config(
                "test windows and window_len must be positive".into(),
            ));
        }
        let (start, end) = self.test.resolved_range()?;
        if let (Some(s), Some(e)) = (start, end) {
            if s > e {
                return Err(Error::Config(format!("test range {s}..{e} is reversed")));
            }
            if s <= self.split.train_end {
                return Err(Error::Config(format!(
                    "test range starts {s}, not after the training cutoff {}",
                    self.split.train_end
                )));
            }
        }
        if self.windows.input_len == 0 || self.windows.horizon == 0 || self.windows.stride == 0 {
            return Err(Error::Config("window geometry must be positive".into()));
        }
        if self.classifier.kinds.is_empty() {
            return Err(Error::Config("no classifier kinds configured".into()));
        }
        let mut seen = BTreeSet::new();
        for kind in &self.classifier.kinds {
            if !seen.insert(kind) {
                return Err(Error::Config(format!(
                    "duplicate classifier kind {}",
                    kind.name()
                )));
            }
        }
        if self.evaluation.kl_bins == 0 {
            return Err(Error::Config("kl_bins must be positive".into()));
        }
        self.indicators.validate()?;
        self.labeling.validate()?;
        self.forecaster.validate()?;
        self.bns.validate()?;
        Ok(())
    }
}

/// Per-test-window scores.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WindowReport {
    pub index: usize,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub accuracy: f64,
    pub weighted_f1: f64,
}

/// Everything measured for one (stock, classifier) pair.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunReport {
    pub stock: String,
    pub kind: ClassifierKind,
    pub evaluation: EvaluationReport,
    pub windows: Vec<WindowReport>,
    pub lambda: LambdaEstimate,
    pub predicted: Vec<i8>,
    pub target: Vec<i8>,
}

/// Builds the forecaster's input columns (a subset of close, momentum,
/// volatility) aligned to the series.
pub fn forecaster_frame(
    series: &OhlcvSeries,
    features: &[FeatureKind],
    cfg: &IndicatorConfig,
) -> Result<FeatureFrame> {
    let mut frame = FeatureFrame::new(series.dates().to_vec());
    let close = series.close();
    let need_mv = features
        .iter()
        .any(|f| matches!(f, FeatureKind::Momentum | FeatureKind::Volatility));
    let mv = if need_mv {
        Some(indicators::momentum_and_volatility(
            close,
            cfg.momentum_lag,
            cfg.vol_window,
        )?)
    } else {
        None
    };
    for feature in features {
        match feature {
            FeatureKind::Close => {
                frame.push_column("close", close.iter().map(|&c| Some(c)).collect())?
            }
            FeatureKind::Momentum => {
                let (m, _) = mv.as_ref().expect("computed above");
                frame.push_column("momentum", m.to_cells())?;
            }
            FeatureKind::Volatility => {
                let (_, v) = mv.as_ref().expect("computed above");
                frame.push_column("volatility", v.to_cells())?;
            }
        }
    }
    Ok(frame)
}

/// Series/frame pair trimmed to the rows where every feature is defined.
fn trimmed_for_windows(
    series: &OhlcvSeries,
    frame: &FeatureFrame,
) -> Result<(OhlcvSeries, FeatureFrame)> {
    let start = frame
        .complete_from()
        .ok_or_else(|| Error::InsufficientData("no fully populated feature rows".into()))?;
    Ok((
        series.slice(start, series.len()),
        frame.slice(start, frame.len()),
    ))
}

/// Last `input_len` fully populated feature rows of the series, as the
/// forecaster input block.
pub fn latest_input_block(
    series: &OhlcvSeries,
    features: &[FeatureKind],
    cfg: &IndicatorConfig,
    input_len: usize,
) -> Result<Mat> {
    let frame = forecaster_frame(series, features, cfg)?;
    let start = frame
        .complete_from()
        .ok_or_else(|| Error::InsufficientData("no fully populated feature rows".into()))?;
    let usable = frame.len() - start;
    if usable < input_len {
        return Err(Error::InsufficientData(format!(
            "history has {usable} usable rows, the forecaster needs {input_len}"
        )));
    }
    frame
        .slice(frame.len() - input_len, frame.len())
        .to_matrix()
}

/// Row range `[start, end)` of one test window within the full series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestWindow {
    pub start: usize,
    pub end: usize,
}

/// Resolves the configured test windows to consecutive row ranges after the
/// cutoff (and inside the preset range, when one is set).
pub fn select_test_windows(
    series: &OhlcvSeries,
    cutoff: NaiveDate,
    test_cfg: &TestConfig,
) -> Result<Vec<TestWindow>> {
    let (range_start, range_end) = test_cfg.resolved_range()?;
    let dates = series.dates();
    let first_test = dates.partition_point(|d| *d <= cutoff);
    let mut start = match range_start {
        Some(s) => dates.partition_point(|d| *d < s).max(first_test),
        None => first_test,
    };
    let end_limit = match range_end {
        Some(e) => dates.partition_point(|d| *d <= e),
        None => series.len(),
    };
    let mut windows = Vec::with_capacity(test_cfg.windows);
    for _ in 0..test_cfg.windows {
        let end = start + test_cfg.window_len;
        if end > end_limit {
            return Err(Error::InsufficientData(format!(
                "test span supports only {} of {} requested windows",
                windows.len(),
                test_cfg.windows
            )));
        }
        windows.push(TestWindow { start, end });
        start = end;
    }
    Ok(windows)
}

struct StockArtifacts {
    forecast_csv: String,
    loss_curve_csv: String,
    simulated_csv: String,
    /// Per-kind report text and signal timeline, in config kind order.
    per_kind: Vec<(ClassifierKind, String, String)>,
    reports: Vec<RunReport>,
}

fn theta_row(frame: &FeatureFrame, date: NaiveDate) -> Result<usize> {
    frame
        .dates()
        .binary_search(&date)
        .map_err(|_| Error::Alignment(format!("no feature row for {date}")))
}

/// Labeled dataset from the feature matrix of a series, optionally keeping
/// only the most recent `recent` rows.
fn labeled_dataset(
    series: &OhlcvSeries,
    cfg: &PipelineConfig,
    recent: Option<usize>,
) -> Result<LabeledDataset> {
    let frame = labeling::build_feature_matrix(series, &cfg.indicators, &cfg.labeling)?;
    let targets = labeling::targets_for_frame(series, &frame, &cfg.labeling)?;
    let from = match recent {
        Some(rows) if frame.len() > rows => frame.len() - rows,
        _ => 0,
    };
    let frame = frame.slice(from, frame.len());
    LabeledDataset::new(
        frame.to_matrix()?,
        targets[from..].to_vec(),
        frame.names().to_vec(),
    )
}

fn run_stock(cfg: &PipelineConfig, stock: &StockConfig) -> Result<StockArtifacts> {
    // ingest
    let file = fs::File::open(&stock.csv).map_err(Error::from);
    let series = file
        .and_then(|f| parse_ohlcv_csv(std::io::BufReader::new(f)))
        .map_err(|e| e.in_stage("ingest"))?;
    let series = if cfg.data.use_adjusted {
        series.adjusted()
    } else {
        series
    };

    // split
    let (train, _test) =
        split_by_date(&series, cfg.split.train_end).map_err(|e| e.in_stage("split"))?;
    let test_windows = select_test_windows(&series, cfg.split.train_end, &cfg.test)
        .map_err(|e| e.in_stage("split"))?;

    // features + labels on the training span
    let dataset = labeled_dataset(&train, cfg, None).map_err(|e| e.in_stage("features"))?;

    // forecaster training
    let fc_frame = forecaster_frame(&train, &cfg.forecaster.features, &cfg.indicators)
        .map_err(|e| e.in_stage("train-forecaster"))?;
    let (fc_series, fc_frame) =
        trimmed_for_windows(&train, &fc_frame).map_err(|e| e.in_stage("train-forecaster"))?;
    let samples = sliding_windows(
        &fc_series,
        &fc_frame,
        cfg.windows.input_len,
        cfg.windows.horizon,
        cfg.windows.stride,
    )
    .map_err(|e| e.in_stage("train-forecaster"))?;
    let mut train_cfg: TrainConfig = cfg.forecaster.clone();
    train_cfg.seed = seed::derive(cfg.seed, &["forecaster", &stock.name]);
    let model =
        train_forecaster(&samples, &train_cfg).map_err(|e| e.in_stage("train-forecaster"))?;

    // classifiers, trained once on the training split; rolling mode retrains
    // them per test window on the most recent rows instead
    let mut classifiers: Vec<(ClassifierKind, ClassifierModel)> = Vec::new();
    if cfg.classifier.rolling_retrain.is_none() {
        for kind in &cfg.classifier.kinds {
            let model_seed = seed::derive(cfg.seed, &["classifier", &stock.name, kind.name()]);
            let model = train_classifier(&dataset, *kind, &cfg.classifier.config, model_seed)
                .map_err(|e| e.in_stage("train-classifier"))?;
            classifiers.push((*kind, model));
        }
    }

    // forecast + classify each test window
    let full_targets = labeling::target_theta_with(
        series.close(),
        cfg.labeling.horizon,
        cfg.labeling.margin,
        cfg.labeling.prose_polarity,
    )
    .map_err(|e| e.in_stage("label"))?;

    let mut forecast_csv = String::from("window,date,actual_close,predicted_close\n");
    let mut all_actual = Vec::new();
    let mut all_predicted = Vec::new();
    let mut targets_by_window: Vec<Vec<Theta>> = Vec::new();
    let mut preds_by_window: Vec<Vec<Vec<Theta>>> =
        vec![Vec::new(); cfg.classifier.kinds.len()]; // [kind][window][position]
    let mut window_spans = Vec::new();

    for (w_idx, window) in test_windows.iter().enumerate() {
        let history = series.slice(0, window.start);

        if let Some(rows) = cfg.classifier.rolling_retrain {
            // Retrain on the freshest labeled rows available at this window.
            let recent = labeled_dataset(&history, cfg, Some(rows))
                .map_err(|e| e.in_stage("train-classifier"))?;
            classifiers.clear();
            for kind in &cfg.classifier.kinds {
                let model_seed = seed::derive(
                    cfg.seed,
                    &[
                        "classifier",
                        &stock.name,
                        kind.name(),
                        &format!("window{w_idx}"),
                    ],
                );
                let model = train_classifier(&recent, *kind, &cfg.classifier.config, model_seed)
                    .map_err(|e| e.in_stage("train-classifier"))?;
                classifiers.push((*kind, model));
            }
        }
        let inputs = latest_input_block(
            &history,
            &cfg.forecaster.features,
            &cfg.indicators,
            cfg.windows.input_len,
        )
        .map_err(|e| e.in_stage("forecast"))?;
        let predicted_n = model
            .forecast_matrix(&inputs)
            .map_err(|e| e.in_stage("forecast"))?;
        let predicted = &predicted_n[..cfg.test.window_len.min(predicted_n.len())];
        if predicted.len() < cfg.test.window_len {
            return Err(Error::InsufficientData(format!(
                "forecast horizon {} shorter than the test window {}",
                predicted.len(),
                cfg.test.window_len
            ))
            .in_stage("forecast"));
        }

        // Forecast-extended close series for feature recomputation.
        let mut extended_close = history.close().to_vec();
        extended_close.extend_from_slice(predicted);
        let extended_dates = series.dates()[..window.end].to_vec();
        let extended = OhlcvSeries::from_close(extended_dates, extended_close.clone())
            .map_err(|e| e.in_stage("classify"))?;
        let ext_frame = labeling::build_feature_matrix(&extended, &cfg.indicators, &cfg.labeling)
            .map_err(|e| e.in_stage("classify"))?;

        let window_dates = &series.dates()[window.start..window.end];
        let mut rows = Vec::with_capacity(window_dates.len());
        for date in window_dates {
            rows.push(theta_row(&ext_frame, *date).map_err(|e| e.in_stage("classify"))?);
        }
        let x = ext_frame
            .select_rows(&rows)
            .to_matrix()
            .map_err(|e| e.in_stage("classify"))?;

        for (k_idx, (_, clf)) in classifiers.iter().enumerate() {
            let pred = predict_labels(clf, &x).map_err(|e| e.in_stage("classify"))?;
            preds_by_window[k_idx].push(pred);
        }

        let mut window_targets = Vec::with_capacity(window_dates.len());
        for (offset, date) in window_dates.iter().enumerate() {
            let row = window.start + offset;
            let signal = &full_targets[row];
            if signal.warmup {
                return Err(
                    Error::InsufficientData(format!("target label undefined at {date}"))
                        .in_stage("evaluate"),
                );
            }
            window_targets.push(signal.theta);
            let actual = series.close()[row];
            forecast_csv.push_str(&format!(
                "{},{},{},{}\n",
                w_idx + 1,
                date,
                actual,
                predicted[offset]
            ));
            all_actual.push(actual);
            all_predicted.push(predicted[offset]);
        }
        targets_by_window.push(window_targets);
        window_spans.push((window_dates[0], *window_dates.last().expect("non-empty")));
    }

    // evaluation
    let (ks_stat, ks_p) =
        ks_two_sample(&all_actual, &all_predicted).map_err(|e| e.in_stage("evaluate"))?;
    let lo = all_actual
        .iter()
        .chain(&all_predicted)
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let hi = all_actual
        .iter()
        .chain(&all_predicted)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    };
    let p_hist = Histogram::from_samples(&all_actual, cfg.evaluation.kl_bins, lo, hi)
        .map_err(|e| e.in_stage("evaluate"))?;
    let q_hist = Histogram::from_samples(&all_predicted, cfg.evaluation.kl_bins, lo, hi)
        .map_err(|e| e.in_stage("evaluate"))?;
    let kl = kl_divergence(&p_hist, &q_hist).map_err(|e| e.in_stage("evaluate"))?;

    // BN-S calibration on the training span, simulation over the test span
    // driven by the first classifier's predictions.
    let train_theta = labeling::target_theta_with(
        train.close(),
        cfg.labeling.horizon,
        cfg.labeling.margin,
        cfg.labeling.prose_polarity,
    )
    .map_err(|e| e.in_stage("simulate"))?;
    let lambda = bns::estimate_big_lambda(&train, &train_theta, &cfg.bns)
        .map_err(|e| e.in_stage("simulate"))?;

    let flat_targets: Vec<Theta> = targets_by_window.iter().flatten().copied().collect();
    let sim_regimes = RegimePath {
        theta: preds_by_window[0].iter().flatten().copied().collect(),
    };
    let mut sim_params = cfg.bns.clone();
    sim_params.big_lambda = lambda.value;
    sim_params.s0 = series.close()[test_windows[0].start - 1];
    let sim_seed = seed::derive(cfg.seed, &["bns", &stock.name]);
    let sim_path = bns::simulate_bns_path(&sim_params, &sim_regimes, sim_regimes.len(), sim_seed)
        .map_err(|e| e.in_stage("simulate"))?;
    let sim_series = bns::path_to_series(&sim_path, series.dates()[test_windows[0].start])
        .map_err(|e| e.in_stage("simulate"))?;
    let mut sim_csv = Vec::new();
    sim_series
        .write_csv(&mut sim_csv)
        .map_err(|e| e.in_stage("simulate"))?;

    let mut loss_curve_csv = Vec::new();
    model
        .write_loss_curve_csv(&mut loss_curve_csv)
        .map_err(|e| e.in_stage("train-forecaster"))?;

    // per-kind reports
    let mut per_kind = Vec::new();
    let mut reports = Vec::new();
    for (k_idx, kind) in cfg.classifier.kinds.iter().enumerate() {
        let flat_preds: Vec<Theta> = preds_by_window[k_idx].iter().flatten().copied().collect();
        let (accuracy, weighted_f1, per_class) =
            accuracy_and_f1(&flat_targets, &flat_preds).map_err(|e| e.in_stage("evaluate"))?;
        let evaluation = EvaluationReport {
            accuracy,
            weighted_f1,
            ks_statistic: ks_stat,
            ks_p_value: ks_p,
            kl_entropy: kl,
            per_class,
        };

        let mut windows = Vec::new();
        for (w_idx, (window_targets, span)) in
            targets_by_window.iter().zip(&window_spans).enumerate()
        {
            let (w_acc, w_f1, _) = accuracy_and_f1(window_targets, &preds_by_window[k_idx][w_idx])
                .map_err(|e| e.in_stage("evaluate"))?;
            windows.push(WindowReport {
                index: w_idx + 1,
                start_date: span.0,
                end_date: span.1,
                accuracy: w_acc,
                weighted_f1: w_f1,
            });
        }

        let mut report_text = String::new();
        report_text.push_str(&format!("stock: {}\n", stock.name));
        report_text.push_str(&format!("classifier: {}\n", kind.name()));
        report_text.push_str(&format!("seed: {}\n", cfg.seed));
        report_text.push_str(&format!("train_end: {}\n", cfg.split.train_end));
        report_text.push_str(&format!(
            "lambda: {}\nlambda_fallback: {}\nlambda_up_count: {}\n",
            lambda.value, lambda.fallback, lambda.up_count
        ));
        {
            let mut eval_buf = Vec::new();
            evaluation
                .write_text(&mut eval_buf)
                .map_err(|e| e.in_stage("evaluate"))?;
            report_text.push_str(&String::from_utf8(eval_buf).expect("utf8"));
        }
        for w in &windows {
            report_text.push_str(&format!(
                "window_{}: start={} end={} accuracy={} weighted_f1={}\n",
                w.index, w.start_date, w.end_date, w.accuracy, w.weighted_f1
            ));
        }

        let mut signals_csv = String::from("date,theta_predicted,theta_target\n");
        let mut pos = 0usize;
        for window in &test_windows {
            for row in window.start..window.end {
                signals_csv.push_str(&format!(
                    "{},{},{}\n",
                    series.dates()[row],
                    flat_preds[pos].value(),
                    flat_targets[pos].value()
                ));
                pos += 1;
            }
        }

        reports.push(RunReport {
            stock: stock.name.clone(),
            kind: *kind,
            evaluation,
            windows,
            lambda: lambda.clone(),
            predicted: flat_preds.iter().map(|t| t.value()).collect(),
            target: flat_targets.iter().map(|t| t.value()).collect(),
        });
        per_kind.push((*kind, report_text, signals_csv));
    }

    Ok(StockArtifacts {
        forecast_csv,
        loss_curve_csv: String::from_utf8(loss_curve_csv).expect("utf8"),
        simulated_csv: String::from_utf8(sim_csv).expect("utf8"),
        per_kind,
        reports,
    })
}

/// Outcome of a full pipeline run.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub reports: Vec<RunReport>,
    pub out_dir: PathBuf,
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

/// Marker file flagging a run directory that holds partial output from an
/// aborted run. It exists for the whole run and is removed only after every
/// artifact landed.
pub const STALE_MARKER: &str = "STALE";

/// Runs every configured stock through the full architecture and writes all
/// artifacts under the output directory.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    write_atomic(
        &cfg.out_dir.join(STALE_MARKER),
        "run in progress or aborted; artifacts may be partial\n",
    )?;

    // Resolved config echo makes the run self-describing.
    let echo = toml::to_string_pretty(cfg)
        .map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
    write_atomic(&cfg.out_dir.join("config.toml"), &echo)?;

    let mut reports = Vec::new();
    for stock in &cfg.stocks {
        let artifacts = run_stock(cfg, stock)?;
        let dir = cfg.out_dir.join(&stock.name);
        write_atomic(&dir.join("forecast.csv"), &artifacts.forecast_csv)?;
        write_atomic(&dir.join("loss_curve.csv"), &artifacts.loss_curve_csv)?;
        write_atomic(&dir.join("simulated.csv"), &artifacts.simulated_csv)?;
        for (kind, report_text, signals_csv) in &artifacts.per_kind {
            write_atomic(
                &dir.join(format!("report_{}.txt", kind.name())),
                report_text,
            )?;
            write_atomic(
                &dir.join(format!("signals_{}.csv", kind.name())),
                signals_csv,
            )?;
        }
        reports.extend(artifacts.reports);
    }

    let runs_json = serde_json::to_string_pretty(&reports)
        .map_err(|e| Error::Config(format!("cannot serialize reports: {e}")))?;
    write_atomic(&cfg.out_dir.join("runs.json"), &format!("{runs_json}\n"))?;

    emit_tables(&reports, &cfg.out_dir.join("tables"))?;

    fs::remove_file(cfg.out_dir.join(STALE_MARKER))?;
    Ok(PipelineOutcome {
        reports,
        out_dir: cfg.out_dir.clone(),
    })
}

/// Writes the benchmark-style tables: per metric, rows are stocks and
/// columns are classifier kinds, one file per test window plus the overall
/// pair, and the per-stock goodness-of-fit table.
pub fn emit_tables(reports: &[RunReport], dir: &Path) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::Aggregation("no reports to tabulate".into()));
    }

    // Group by kind, preserving first-seen order.
    let mut kinds: Vec<ClassifierKind> = Vec::new();
    for r in reports {
        if !kinds.contains(&r.kind) {
            kinds.push(r.kind);
        }
    }
    let mut stocks: Vec<String> = Vec::new();
    for r in reports {
        if !stocks.contains(&r.stock) {
            stocks.push(r.stock.clone());
        }
    }
    for kind in &kinds {
        let kind_stocks: BTreeSet<&str> = reports
            .iter()
            .filter(|r| r.kind == *kind)
            .map(|r| r.stock.as_str())
            .collect();
        let all: BTreeSet<&str> = stocks.iter().map(String::as_str).collect();
        if kind_stocks != all {
            return Err(Error::Aggregation(format!(
                "classifier {} covers {:?}, expected {:?}",
                kind.name(),
                kind_stocks,
                all
            )));
        }
    }
    let find = |stock: &str, kind: ClassifierKind| -> Result<&RunReport> {
        reports
            .iter()
            .find(|r| r.stock == stock && r.kind == kind)
            .ok_or_else(|| {
                Error::Aggregation(format!("missing report for {stock}/{}", kind.name()))
            })
    };

    let n_windows = reports[0].windows.len();
    if reports.iter().any(|r| r.windows.len() != n_windows) {
        return Err(Error::Aggregation(
            "reports disagree on the number of test windows".into(),
        ));
    }

    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let header = {
        let mut h = String::from("stock");
        for kind in &kinds {
            h.push_str(&format!(",{}", kind.name()));
        }
        h.push('\n');
        h
    };
    let table = |name: String, cell: &dyn Fn(&RunReport) -> f64| -> Result<PathBuf> {
        let mut text = header.clone();
        for stock in &stocks {
            text.push_str(stock);
            for kind in &kinds {
                let r = find(stock, *kind)?;
                text.push_str(&format!(",{}", cell(r)));
            }
            text.push('\n');
        }
        let path = dir.join(name);
        write_atomic(&path, &text)?;
        Ok(path)
    };

    written.push(table("accuracy_overall.csv".into(), &|r| {
        r.evaluation.accuracy
    })?);
    written.push(table("f1_overall.csv".into(), &|r| {
        r.evaluation.weighted_f1
    })?);
    for w in 0..n_windows {
        written.push(table(
            format!("accuracy_window_{}.csv", w + 1),
            &move |r| r.windows[w].accuracy,
        )?);
        written.push(table(format!("f1_window_{}.csv", w + 1), &move |r| {
            r.windows[w].weighted_f1
        })?);
    }

    // Goodness of fit is a property of the shared forecast, one row per stock.
    let mut gof = String::from("stock,ks_p_value,kl_entropy\n");
    for stock in &stocks {
        let r = find(stock, kinds[0])?;
        gof.push_str(&format!(
            "{},{},{}\n",
            stock, r.evaluation.ks_p_value, r.evaluation.kl_entropy
        ));
    }
    let gof_path = dir.join("goodness_of_fit.csv");
    write_atomic(&gof_path, &gof)?;
    written.push(gof_path);

    // Long-format evaluation rows keyed by (stock, window, classifier).
    // KS/KL describe the whole forecast, so they appear on the overall rows.
    let mut metrics = String::from(
        "stock,window,classifier,accuracy,weighted_f1,ks_statistic,ks_p_value,kl_entropy\n",
    );
    for stock in &stocks {
        for kind in &kinds {
            let r = find(stock, *kind)?;
            metrics.push_str(&format!(
                "{},overall,{},{},{},{},{},{}\n",
                stock,
                kind.name(),
                r.evaluation.accuracy,
                r.evaluation.weighted_f1,
                r.evaluation.ks_statistic,
                r.evaluation.ks_p_value,
                r.evaluation.kl_entropy
            ));
            for w in &r.windows {
                metrics.push_str(&format!(
                    "{},{},{},{},{},,,\n",
                    stock,
                    w.index,
                    kind.name(),
                    w.accuracy,
                    w.weighted_f1
                ));
            }
        }
    }
    let metrics_path = dir.join("metrics.csv");
    write_atomic(&metrics_path, &metrics)?;
    written.push(metrics_path);

    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emit_tables_shapes() {
        let report = |stock: &str, kind: ClassifierKind| RunReport {
            stock: stock.into(),
            kind,
            evaluation: EvaluationReport {
                accuracy: 0.9,
                weighted_f1: 0.8,
                ks_statistic: 0.1,
                ks_p_value: 0.5,
                kl_entropy: 1e-4,
                per_class: vec![],
            },
            windows: vec![WindowReport {
                index: 1,
                start_date: NaiveDate::from_ymd_opt(2021, 2, 22).unwrap(),
                end_date: NaiveDate::from_ymd_opt(2021, 3, 2).unwrap(),
                accuracy: 0.9,
                weighted_f1: 0.8,
            }],
            lambda: LambdaEstimate {
                value: 0.1,
                up_count: 10,
                fallback: false,
            },
            predicted: vec![0; 7],
            target: vec![0; 7],
        };

        let dir = tempfile::tempdir().unwrap();
        let reports: Vec<RunReport> = ["a", "b", "c", "d"]
            .iter()
            .flat_map(|s| ClassifierKind::ALL.map(|k| report(s, k)))
            .collect();
        let written = emit_tables(&reports, dir.path()).unwrap();
        assert!(written.iter().any(|p| p.ends_with("accuracy_overall.csv")));

        let accuracy = fs::read_to_string(dir.path().join("accuracy_overall.csv")).unwrap();
        let lines: Vec<&str> = accuracy.trim().lines().collect();
        assert_eq!(lines[0], "stock,forest,svm,gbt");
        assert_eq!(lines.len(), 5); // header + 4 stocks
        assert!(lines[1].starts_with("a,"));
        assert_eq!(lines[1].matches(',').count(), 3);

        let gof = fs::read_to_string(dir.path().join("goodness_of_fit.csv")).unwrap();
        assert!(gof.starts_with("stock,ks_p_value,kl_entropy\n"));
        assert_eq!(gof.trim().lines().count(), 5);
    }

    #[test]
    fn emit_tables_single_cell() {
        let reports = vec![RunReport {
            stock: "solo".into(),
            kind: ClassifierKind::Forest,
            evaluation: EvaluationReport {
                accuracy: 1.0,
                weighted_f1: 1.0,
                ks_statistic: 0.0,
                ks_p_value: 1.0,
                kl_entropy: 0.0,
                per_class: vec![],
            },
            windows: vec![],
            lambda: LambdaEstimate {
                value: 0.0,
                up_count: 0,
                fallback: true,
            },
            predicted: vec![],
            target: vec![],
        }];
        let dir = tempfile::tempdir().unwrap();
        emit_tables(&reports, dir.path()).unwrap();
        let accuracy = fs::read_to_string(dir.path().join("accuracy_overall.csv")).unwrap();
        assert_eq!(accuracy, "stock,forest\nsolo,1\n");
    }

    #[test]
    fn emit_tables_disjoint_stocks_rejected() {
        let mk = |stock: &str, kind: ClassifierKind| RunReport {
            stock: stock.into(),
            kind,
            evaluation: EvaluationReport {
                accuracy: 0.5,
                weighted_f1: 0.5,
                ks_statistic: 0.5,
                ks_p_value: 0.5,
                kl_entropy: 0.5,
                per_class: vec![],
            },
            windows: vec![],
            lambda: LambdaEstimate {
                value: 0.0,
                up_count: 0,
                fallback: true,
            },
            predicted: vec![],
            target: vec![],
        };
        let reports = vec![
            mk("a", ClassifierKind::Forest),
            mk("b", ClassifierKind::Svm),
        ];
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            emit_tables(&reports, dir.path()),
            Err(Error::Aggregation(_))
        ));
    }

    #[test]
    fn unknown_preset_rejected() {
        let cfg = TestConfig {
            preset: Some("test-set-9".into()),
            ..TestConfig::default()
        };
        assert!(matches!(cfg.resolved_range(), Err(Error::Config(_))));
    }

    #[test]
    fn presets_resolve_to_benchmark_ranges() {
        let cfg = TestConfig {
            preset: Some("test-set-1".into()),
            ..TestConfig::default()
        };
        let (s, e) = cfg.resolved_range().unwrap();
        assert_eq!(s, NaiveDate::from_ymd_opt(2021, 2, 22));
        assert_eq!(e, NaiveDate::from_ymd_opt(2021, 4, 26));
    }
}
