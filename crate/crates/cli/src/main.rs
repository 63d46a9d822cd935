//! Command-line front end: each verb runs one pipeline stage against the
//! declarative config, and `run` executes the full architecture.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use trendlab_core::bns;
use trendlab_core::classifier::{predict_labels, train_classifier, ClassifierModel};
use trendlab_core::evaluation::{
    accuracy_and_f1, kl_divergence, ks_two_sample, ohlcv_summary, EvaluationReport, Histogram,
};
use trendlab_core::forecaster::{train_forecaster, LstmModel};
use trendlab_core::frame::FeatureFrame;
use trendlab_core::indicators::indicator_frame;
use trendlab_core::labeling::{self, Theta};
use trendlab_core::marketdata::{parse_ohlcv_csv, sliding_windows, split_by_date, OhlcvSeries};
use trendlab_core::pipeline::{
    emit_tables, forecaster_frame, latest_input_block, run_pipeline, select_test_windows,
    PipelineConfig, RunReport, StockConfig,
};
use trendlab_core::seed;

#[derive(Parser)]
#[command(
    name = "trendlab",
    about = "OHLCV trend labeling, LSTM forecasting, classification, and BN-S simulation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict the command to one configured stock.
    #[arg(long)]
    stock: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, validate, and re-export the configured OHLCV files.
    Ingest(Common),
    /// Compute indicator columns and the 13-feature classification matrix.
    Features(Common),
    /// Emit per-rule trade signals and the trailing-change target labels.
    Label(Common),
    /// Train the LSTM forecaster on the training split and save it.
    TrainForecaster(Common),
    /// Forecast the configured test windows with the saved forecaster.
    Forecast(Common),
    /// Train the configured classifier families and save them.
    TrainClassifier(Common),
    /// Predict trend labels over the test windows with saved classifiers.
    Classify(Common),
    /// Score saved predictions and forecasts against the actual data.
    Evaluate(Common),
    /// Simulate the calibrated price model along the labeled regimes.
    Simulate(Common),
    /// Run the full pipeline end to end.
    Run(Common),
    /// Re-emit the benchmark tables from a finished run.
    Tables(Common),
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&common.config)
        .with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(stock) = &common.stock {
        cfg.stocks.retain(|s| &s.name == stock);
        if cfg.stocks.is_empty() {
            bail!("stock '{stock}' is not in the config");
        }
    }
    Ok(cfg)
}

fn load_series(cfg: &PipelineConfig, stock: &StockConfig) -> Result<OhlcvSeries> {
    let file =
        fs::File::open(&stock.csv).with_context(|| format!("opening {}", stock.csv.display()))?;
    let series = parse_ohlcv_csv(std::io::BufReader::new(file))
        .with_context(|| format!("parsing {}", stock.csv.display()))?;
    Ok(if cfg.data.use_adjusted {
        series.adjusted()
    } else {
        series
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_frame(path: &Path, frame: &FeatureFrame) -> Result<()> {
    let mut buf = Vec::new();
    frame.write_csv(&mut buf)?;
    write_file(path, &buf)
}

fn cmd_ingest(cfg: &PipelineConfig) -> Result<()> {
    for stock in &cfg.stocks {
        let series = load_series(cfg, stock)?;
        let dir = cfg.out_dir.join(&stock.name);
        let mut buf = Vec::new();
        series.write_csv(&mut buf)?;
        write_file(&dir.join("ohlcv.csv"), &buf)?;
        let summary = ohlcv_summary(&series, cfg.indicators.rsi_period)?;
        let mut buf = Vec::new();
        summary.write_csv(&mut buf)?;
        write_file(&dir.join("summary.csv"), &buf)?;
        println!(
            "ingest {}: {} rows, {} to {}",
            stock.name,
            series.len(),
            series.first_date().expect("non-empty"),
            series.last_date().expect("non-empty")
        );
    }
    Ok(())
}

fn cmd_features(cfg: &PipelineConfig) -> Result<()> {
    for stock in &cfg.stocks {
        let series = load_series(cfg, stock)?;
        let dir = cfg.out_dir.join(&stock.name);
        let indicators = indicator_frame(&series, &cfg.indicators)?;
        write_frame(&dir.join("indicators.csv"), &indicators)?;
        let matrix = labeling::build_feature_matrix(&series, &cfg.indicators, &cfg.labeling)?;
        write_frame(&dir.join("features.csv"), &matrix)?;
        println!(
            "features {}: {} matrix rows x {} columns",
            stock.name,
            matrix.len(),
            matrix.n_columns()
        );
    }
    Ok(())
}

fn cmd_label(cfg: &PipelineConfig) -> Result<()> {
    for stock in &cfg.stocks {
        let series = load_series(cfg, stock)?;
        let close = series.close();
        let ind = &cfg.indicators;
        let (macd_line, macd_sig) = trendlab_core::indicators::macd(close, ind)?;
        let rsi = trendlab_core::indicators::rsi(close, ind.rsi_period)?;
        let trix = trendlab_core::indicators::trix(close, ind.trix_period)?;
        let (bb_upper, bb_lower, _) =
            trendlab_core::indicators::bollinger(close, ind.bb_period, ind.bb_width)?;

        let invert = cfg.labeling.invert_crossings;
        let mut frame = FeatureFrame::new(series.dates().to_vec());
        frame.push_column(
            "macd",
            labeling::signals_to_cells(&labeling::macd_signal(&macd_line, &macd_sig, invert)?),
        )?;
        frame.push_column(
            "rsi",
            labeling::signals_to_cells(&labeling::rsi_signal(&rsi)),
        )?;
        frame.push_column(
            "trix",
            labeling::signals_to_cells(&labeling::trix_signal(&trix, invert)),
        )?;
        frame.push_column(
            "bbands",
            labeling::signals_to_cells(&labeling::bollinger_signal(close, &bb_upper, &bb_lower)?),
        )?;
        let target = labeling::target_theta_with(
            close,
            cfg.labeling.horizon,
            cfg.labeling.margin,
            cfg.labeling.prose_polarity,
        )?;
        frame.push_column("target", labeling::signals_to_cells(&target))?;

        let dir = cfg.out_dir.join(&stock.name);
        write_frame(&dir.join("labels.csv"), &frame)?;
        let live = target.iter().filter(|s| !s.warmup).count();
        println!(
            "label {}: {} dated rows, {} live targets",
            stock.name,
            frame.len(),
            live
        );
    }
    Ok(())
}

fn train_split(cfg: &PipelineConfig, series: &OhlcvSeries) -> Result<OhlcvSeries> {
    let (train, _) = split_by_date(series, cfg.split.train_end)?;
    Ok(train)
}

fn cmd_train_forecaster(cfg: &PipelineConfig) -> Result<()> {
    for stock in &cfg.stocks {
        let series = load_series(cfg, stock)?;
        let train = train_split(cfg, &series)?;
        let frame = forecaster_frame(&train, &cfg.forecaster.features, &cfg.indicators)?;
        let start = frame
            .complete_from()
            .ok_or_else(|| anyhow!("no fully populated feature rows for {}", stock.name))?;
        let samples = sliding_windows(
            &train.slice(start, train.len()),
            &frame.slice(start, frame.len()),
            cfg.windows.input_len,
            cfg.windows.horizon,
            cfg.windows.stride,
        )?;
        let mut train_cfg = cfg.forecaster.clone();
        train_cfg.seed = seed::derive(cfg.seed, &["forecaster", &stock.name]);
        let model = train_forecaster(&samples, &train_cfg)?;

        let dir = cfg.out_dir.join(&stock.name);
        let mut buf = Vec::new();
        model.save(&mut buf)?;
        write_file(&dir.join("forecaster.json"), &buf)?;
        let mut buf = Vec::new();
        model.write_loss_curve_csv(&mut buf)?;
        write_file(&dir.join("loss_curve.csv"), &buf)?;
        println!(
            "train-forecaster {}: {} windows, final loss {}",
            stock.name,
            samples.len(),
            model.loss_curve.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

fn cmd_forecast(cfg: &PipelineConfig) -> Result<()> {
    for stock in &cfg.stocks {
        let series = load_series(cfg, stock)?;
        let dir = cfg.out_dir.join(&stock.name);
        let model_path = dir.join("forecaster.json");
        let file = fs::File::open(&model_path).with_context(|| {
            format!(
                "{} not found; run train-forecaster first",
                model_path.display()
            )
        })?;
        let model = LstmModel::load(std::io::BufReader::new(file))?;

        let windows = select_test_windows(&series, cfg.split.train_end, &cfg.test)?;
        let mut csv = String::from("window,date,actual_close,predicted_close\n");
        for (w_idx, window) in windows.iter().enumerate() {
            let history = series.slice(0, window.start);
            let inputs = latest_input_block(
                &history,
                &cfg.forecaster.features,
                &cfg.indicators,
                cfg.windows.input_len,
            )?;
            let predicted = model.forecast_matrix(&inputs)?;
            if predicted.len() < cfg.test.window_len {
                bail!(
                    "forecast horizon {} is shorter than the test window {}",
                    predicted.len(),
                    cfg.test.window_len
                );
            }
            for (offset, value) in predicted.iter().take(cfg.test.window_len).enumerate() {
                let row = window.start + offset;
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    w_idx + 1,
                    series.dates()[row],
                    series.close()[row],
                    value
                ));
            }
        }
        write_file(&dir.join("forecast.csv"), csv.as_bytes())?;
        println!("forecast {}: {} windows", stock.name, windows.len());
    }
    Ok(())
}

fn cmd_train_classifier(cfg: &PipelineConfig) -> Result<()> {
    for stock in &cfg.stocks {
        let series = load_series(cfg, stock)?;
        let train = train_split(cfg, &series)?;
        let frame = labeling::build_feature_matrix(&train, &cfg.indicators, &cfg.labeling)?;
        let targets = labeling::targets_for_frame(&train, &frame, &cfg.labeling)?;
        let dataset = trendlab_core::classifier::LabeledDataset::new(
            frame.to_matrix()?,
            targets,
            frame.names().to_vec(),
        )?;
        let dir = cfg.out_dir.join(&stock.name);
        for kind in &cfg.classifier.kinds {
            let model_seed = seed::derive(cfg.seed, &["classifier", &stock.name, kind.name()]);
            let model = train_classifier(&dataset, *kind, &cfg.classifier.config, model_seed)?;
            let mut buf = Vec::new();
            model.save(&mut buf)?;
            write_file(&dir.join(format!("classifier_{}.json", kind.name())), &buf)?;
        }
        println!(
            "train-classifier {}: {} rows x {} features, kinds {:?}",
            stock.name,
            dataset.len(),
            dataset.feature_names.len(),
            cfg.classifier
                .kinds
                .iter()
                .map(|k| k.name())
                .collect::<Vec<_>>()
        );
    }
    Ok(())
}

fn cmd_classify(cfg: &PipelineConfig) -> Result<()> {
    for stock in &cfg.stocks {
        let series = load_series(cfg, stock)?;
        let frame = labeling::build_feature_matrix(&series, &cfg.indicators, &cfg.labeling)?;
        let windows = select_test_windows(&series, cfg.split.train_end, &cfg.test)?;
        let mut rows = Vec::new();
        let mut dates = Vec::new();
        for window in &windows {
            for row in window.start..window.end {
                let date = series.dates()[row];
                let idx = frame
                    .dates()
                    .binary_search(&date)
                    .map_err(|_| anyhow!("no feature row for {date}"))?;
                rows.push(idx);
                dates.push(date);
            }
        }
        let x = frame.select_rows(&rows).to_matrix()?;

        let dir = cfg.out_dir.join(&stock.name);
        for kind in &cfg.classifier.kinds {
            let path = dir.join(format!("classifier_{}.json", kind.name()));
            let file = fs::File::open(&path).with_context(|| {
                format!("{} not found; run train-classifier first", path.display())
            })?;
            let model = ClassifierModel::load(std::io::BufReader::new(file))?;
            let preds = predict_labels(&model, &x)?;
            let mut csv = String::from("date,theta\n");
            for (date, theta) in dates.iter().zip(&preds) {
                csv.push_str(&format!("{},{}\n", date, theta.value()));
            }
            write_file(
                &dir.join(format!("predictions_{}.csv", kind.name())),
                csv.as_bytes(),
            )?;
        }
        println!("classify {}: {} test rows", stock.name, dates.len());
    }
    Ok(())
}

fn parse_predictions(path: &Path) -> Result<Vec<(chrono::NaiveDate, Theta)>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("{} not found; run classify first", path.display()))?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let (date, theta) = line
            .split_once(',')
            .ok_or_else(|| anyhow!("malformed line '{line}' in {}", path.display()))?;
        out.push((date.parse()?, Theta::from_value(theta.parse::<i8>()?)?));
    }
    Ok(out)
}

fn parse_forecast(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("{} not found; run forecast first", path.display()))?;
    let mut actual = Vec::new();
    let mut predicted = Vec::new();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            bail!("malformed line '{line}' in {}", path.display());
        }
        actual.push(fields[2].parse()?);
        predicted.push(fields[3].parse()?);
    }
    Ok((actual, predicted))
}

fn cmd_evaluate(cfg: &PipelineConfig) -> Result<()> {
    for stock in &cfg.stocks {
        let series = load_series(cfg, stock)?;
        let target_signals = labeling::target_theta_with(
            series.close(),
            cfg.labeling.horizon,
            cfg.labeling.margin,
            cfg.labeling.prose_polarity,
        )?;
        let dir = cfg.out_dir.join(&stock.name);
        let (actual, predicted) = parse_forecast(&dir.join("forecast.csv"))?;
        let (ks_statistic, ks_p_value) = ks_two_sample(&actual, &predicted)?;
        let lo = actual
            .iter()
            .chain(&predicted)
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let hi = actual
            .iter()
            .chain(&predicted)
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        };
        let p = Histogram::from_samples(&actual, cfg.evaluation.kl_bins, lo, hi)?;
        let q = Histogram::from_samples(&predicted, cfg.evaluation.kl_bins, lo, hi)?;
        let kl_entropy = kl_divergence(&p, &q)?;

        for kind in &cfg.classifier.kinds {
            let preds = parse_predictions(&dir.join(format!("predictions_{}.csv", kind.name())))?;
            let mut y_true = Vec::with_capacity(preds.len());
            let mut y_pred = Vec::with_capacity(preds.len());
            for (date, theta) in &preds {
                let row = series
                    .dates()
                    .binary_search(date)
                    .map_err(|_| anyhow!("prediction date {date} not in series"))?;
                let signal = &target_signals[row];
                if signal.warmup {
                    bail!("target label undefined at {date}");
                }
                y_true.push(signal.theta);
                y_pred.push(*theta);
            }
            let (accuracy, weighted_f1, per_class) = accuracy_and_f1(&y_true, &y_pred)?;
            let report = EvaluationReport {
                accuracy,
                weighted_f1,
                ks_statistic,
                ks_p_value,
                kl_entropy,
                per_class,
            };
            let mut buf = Vec::new();
            report.write_text(&mut buf)?;
            write_file(&dir.join(format!("evaluation_{}.txt", kind.name())), &buf)?;
            println!(
                "evaluate {}/{}: accuracy {accuracy:.4}, weighted F1 {weighted_f1:.4}",
                stock.name,
                kind.name()
            );
        }
    }
    Ok(())
}

fn cmd_simulate(cfg: &PipelineConfig) -> Result<()> {
    for stock in &cfg.stocks {
        let series = load_series(cfg, stock)?;
        let train = train_split(cfg, &series)?;
        let target = labeling::target_theta_with(
            series.close(),
            cfg.labeling.horizon,
            cfg.labeling.margin,
            cfg.labeling.prose_polarity,
        )?;
        let train_target = labeling::target_theta_with(
            train.close(),
            cfg.labeling.horizon,
            cfg.labeling.margin,
            cfg.labeling.prose_polarity,
        )?;
        let lambda = bns::estimate_big_lambda(&train, &train_target, &cfg.bns)?;

        // Study mode: replay the labeled regimes over the whole series.
        let live: Vec<_> = target.iter().filter(|s| !s.warmup).copied().collect();
        let regimes = bns::RegimePath::from_signals(&live);
        let mut params = cfg.bns.clone();
        if !lambda.fallback {
            params.big_lambda = lambda.value;
        }
        params.s0 = series.close()[cfg.labeling.horizon - 1];
        let sim_seed = seed::derive(cfg.seed, &["simulate", &stock.name]);
        let path = bns::simulate_bns_path(&params, &regimes, regimes.len(), sim_seed)?;
        let sim_series = bns::path_to_series(&path, series.dates()[cfg.labeling.horizon])?;

        let dir = cfg.out_dir.join(&stock.name);
        let mut buf = Vec::new();
        sim_series.write_csv(&mut buf)?;
        write_file(&dir.join("simulated_study.csv"), &buf)?;
        println!(
            "simulate {}: {} steps, Lambda {}{}",
            stock.name,
            regimes.len(),
            lambda.value,
            if lambda.fallback { " (fallback)" } else { "" }
        );
    }
    Ok(())
}

fn cmd_run(cfg: &PipelineConfig) -> Result<()> {
    let outcome = run_pipeline(cfg)?;
    for report in &outcome.reports {
        println!(
            "run {}/{}: accuracy {:.4}, weighted F1 {:.4}, KS p {:.4}, KL {:.3e}",
            report.stock,
            report.kind.name(),
            report.evaluation.accuracy,
            report.evaluation.weighted_f1,
            report.evaluation.ks_p_value,
            report.evaluation.kl_entropy
        );
    }
    println!("artifacts under {}", outcome.out_dir.display());
    Ok(())
}

fn cmd_tables(cfg: &PipelineConfig) -> Result<()> {
    let runs_path = cfg.out_dir.join("runs.json");
    let text = fs::read_to_string(&runs_path)
        .with_context(|| format!("{} not found; run the pipeline first", runs_path.display()))?;
    let reports: Vec<RunReport> =
        serde_json::from_str(&text).with_context(|| format!("decoding {}", runs_path.display()))?;
    let written = emit_tables(&reports, &cfg.out_dir.join("tables"))?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&Common, fn(&PipelineConfig) -> Result<()>) = match &cli.command {
        Command::Ingest(c) => (c, cmd_ingest),
        Command::Features(c) => (c, cmd_features),
        Command::Label(c) => (c, cmd_label),
        Command::TrainForecaster(c) => (c, cmd_train_forecaster),
        Command::Forecast(c) => (c, cmd_forecast),
        Command::TrainClassifier(c) => (c, cmd_train_classifier),
        Command::Classify(c) => (c, cmd_classify),
        Command::Evaluate(c) => (c, cmd_evaluate),
        Command::Simulate(c) => (c, cmd_simulate),
        Command::Run(c) => (c, cmd_run),
        Command::Tables(c) => (c, cmd_tables),
    };
    let result = load_config(common).and_then(|cfg| run(&cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
