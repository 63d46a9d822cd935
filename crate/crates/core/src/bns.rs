//! Regime-switching BN-S price simulation and drift-boost calibration.
//!
//! The log price follows
//!   dX = (B(theta) - sigma^2/2) dt + sigma dW + rho(theta) dZ,
//!   dsigma^2 = -lambda sigma^2 dt + dZ,
//! where Z is a compound-Poisson subordinator (exponential jump sizes) on
//! the lambda-scaled clock. The trend label modulates the dynamics: theta
//! = +1 adds Lambda^2 to the drift, theta = -1 switches the jump leverage
//! rho on, and theta = 0 leaves the base dynamics. The same Z increments
//! always feed the variance; they feed the log price only in the down
//! regime.

use chrono::{Datelike, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{Signal, Theta};
use crate::marketdata::OhlcvSeries;
use crate::seed;

/// Trading rows per year, used for all annualization.
pub const TRADING_DAYS: f64 = 252.0;

/// Model parameters in yearly units.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BnsParams {
    /// Initial price.
    pub s0: f64,
    /// Base drift B per year.
    pub drift: f64,
    /// Regime drift boost Lambda (per sqrt-year); theta = +1 adds Lambda^2.
    pub big_lambda: f64,
    /// Jump loading rho <= 0, active only when theta = -1.
    pub rho: f64,
    /// Variance mean-reversion rate lambda >= 0 (also the subordinator
    /// clock scale). Zero freezes the variance between jumps.
    pub lambda_rate: f64,
    /// Initial variance sigma_0^2 >= 0.
    pub sigma0_sq: f64,
    /// Subordinator jump intensity per unit subordinator time.
    pub jump_rate: f64,
    /// Mean exponential jump size (1/b).
    pub jump_mean: f64,
    /// Step size in years.
    pub dt: f64,
}

impl Default for BnsParams {
    fn default() -> BnsParams {
        BnsParams {
            s0: 100.0,
            drift: 0.1,
            big_lambda: 0.0,
            rho: -0.5,
            lambda_rate: 2.0,
            sigma0_sq: 0.04,
            jump_rate: 5.0,
            jump_mean: 0.02,
            dt: 1.0 / TRADING_DAYS,
        }
    }
}

impl BnsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.s0 > 0.0) {
            return Err(Error::Parameter("initial price must be positive".into()));
        }
        if !self.drift.is_finite() || !self.big_lambda.is_finite() {
            return Err(Error::Parameter("drift parameters must be finite".into()));
        }
        if self.big_lambda < 0.0 {
            return Err(Error::Parameter("Lambda must be non-negative".into()));
        }
        if self.rho > 0.0 {
            return Err(Error::Parameter("rho must be non-positive".into()));
        }
        if self.lambda_rate < 0.0 {
            return Err(Error::Parameter("lambda must be non-negative".into()));
        }
        if self.sigma0_sq < 0.0 {
            return Err(Error::Parameter(
                "initial variance must be non-negative".into(),
            ));
        }
        if self.jump_rate < 0.0 {
            return Err(Error::Parameter("jump rate must be non-negative".into()));
        }
        if !(self.jump_mean > 0.0) {
            return Err(Error::Parameter("mean jump size must be positive".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Parameter("step size must be positive".into()));
        }
        Ok(())
    }

    fn drift_for(&self, theta: Theta) -> f64 {
        match theta {
            Theta::Up => self.drift + self.big_lambda * self.big_lambda,
            _ => self.drift,
        }
    }

    fn rho_for(&self, theta: Theta) -> f64 {
        match theta {
            Theta::Down => self.rho,
            _ => 0.0,
        }
    }
}

/// Per-step trend labels driving the simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimePath {
    pub theta: Vec<Theta>,
}

impl RegimePath {
    pub fn constant(theta: Theta, n_steps: usize) -> RegimePath {
        RegimePath {
            theta: vec![theta; n_steps],
        }
    }

    /// Repeating blocks: each `(theta, len)` entry in turn until `n_steps`
    /// labels exist.
    pub fn blocks(pattern: &[(Theta, usize)], n_steps: usize) -> RegimePath {
        let mut theta = Vec::with_capacity(n_steps);
        'outer: loop {
            for &(t, len) in pattern {
                for _ in 0..len {
                    if theta.len() == n_steps {
                        break 'outer;
                    }
                    theta.push(t);
                }
            }
        }
        RegimePath { theta }
    }

    pub fn from_signals(signals: &[Signal]) -> RegimePath {
        RegimePath {
            theta: signals.iter().map(|s| s.theta).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// One subordinator jump: arrival time in years and the jump size added to
/// the variance (and, scaled by rho, to the log price in the down regime).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub size: f64,
}

/// A simulated path. Arrays hold `n_steps + 1` points including t = 0;
/// `x_jump` records the per-step log-price jump contribution.
#[derive(Debug, Clone, PartialEq)]
pub struct BnsPath {
    pub prices: Vec<f64>,
    pub log_path: Vec<f64>,
    pub variance: Vec<f64>,
    pub jumps: Vec<JumpEvent>,
    pub x_jump: Vec<f64>,
}

/// Simulates one path. The variance decays exactly between jump arrivals
/// (rate lambda * a on the year clock, exponential sizes of mean 1/b); the
/// log price takes Euler steps with the left-endpoint variance plus the
/// regime-gated jump term. Deterministic for a fixed seed.
pub fn simulate_bns_path(
    params: &BnsParams,
    regimes: &RegimePath,
    n_steps: usize,
    seed_value: u64,
) -> Result<BnsPath> {
    params.validate()?;
    if regimes.len() != n_steps {
        return Err(Error::Parameter(format!(
            "regime path has {} labels for {} steps",
            regimes.len(),
            n_steps
        )));
    }

    let mut rng = seed::rng(seed_value, &["bns", "path"]);
    let horizon = params.dt * n_steps as f64;

    // Draw every jump event up front so the normal stream is independent of
    // the jump count.
    let arrival_rate = params.lambda_rate * params.jump_rate;
    let mut jumps: Vec<JumpEvent> = Vec::new();
    if arrival_rate > 0.0 {
        let inter = Exp::new(arrival_rate).expect("positive rate");
        let size_dist = Exp::new(1.0 / params.jump_mean).expect("positive rate");
        let mut t = inter.sample(&mut rng);
        while t < horizon {
            jumps.push(JumpEvent {
                time: t,
                size: size_dist.sample(&mut rng),
            });
            t += inter.sample(&mut rng);
        }
    }

    let mut x = 0.0f64;
    let mut sigma_sq = params.sigma0_sq;
    let mut log_path = Vec::with_capacity(n_steps + 1);
    let mut variance = Vec::with_capacity(n_steps + 1);
    let mut x_jump = Vec::with_capacity(n_steps + 1);
    log_path.push(x);
    variance.push(sigma_sq);
    x_jump.push(0.0);

    let mut next_jump = 0usize;
    for step in 0..n_steps {
        let theta = regimes.theta[step];
        let t0 = params.dt * step as f64;
        let t1 = t0 + params.dt;

        let sigma_left = sigma_sq.max(0.0).sqrt();
        let drift = (params.drift_for(theta) - 0.5 * sigma_sq) * params.dt;
        let noise: f64 = rng.sample(StandardNormal);
        let diffusion = sigma_left * params.dt.sqrt() * noise;

        // Variance: exact decay between the jumps inside this step.
        let mut clock = t0;
        let mut jump_mass = 0.0;
        while next_jump < jumps.len() && jumps[next_jump].time < t1 {
            let jump = jumps[next_jump];
            sigma_sq *= (-params.lambda_rate * (jump.time - clock)).exp();
            sigma_sq += jump.size;
            clock = jump.time;
            jump_mass += jump.size;
            next_jump += 1;
        }
        sigma_sq *= (-params.lambda_rate * (t1 - clock)).exp();

        let jump_term = params.rho_for(theta) * jump_mass;
        x += drift + diffusion + jump_term;

        log_path.push(x);
        variance.push(sigma_sq);
        x_jump.push(jump_term);
    }

    let prices = log_path.iter().map(|&x| params.s0 * x.exp()).collect();
    Ok(BnsPath {
        prices,
        log_path,
        variance,
        jumps,
        x_jump,
    })
}

/// Exports a path as an OHLCV CSV (open/high/low/adj-close mirror close,
/// zero volume) so the rest of the pipeline can consume simulated data.
/// Dates are consecutive weekdays from `start`.
pub fn path_to_series(path: &BnsPath, start: NaiveDate) -> Result<OhlcvSeries> {
    let mut dates = Vec::with_capacity(path.prices.len());
    let mut d = start;
    while dates.len() < path.prices.len() {
        if matches!(d.weekday(), chrono::Weekday::Sat | chrono::Weekday::Sun) {
            d += chrono::Duration::days(1);
            continue;
        }
        dates.push(d);
        d += chrono::Duration::days(1);
    }
    OhlcvSeries::from_close(dates, path.prices.clone())
}

/// Lambda estimate together with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    pub value: f64,
    /// Up-labeled positions that contributed a forward return.
    pub up_count: usize,
    /// Set when no up-labeled positions existed and the estimate fell back
    /// to zero.
    pub fallback: bool,
}

/// Calibrates the drift boost: Lambda^2 = max(0, mu_up - B) where mu_up is
/// the annualized mean one-day forward log-return over positions labeled
/// theta = +1. With no up labels the estimate is zero and flagged.
pub fn estimate_big_lambda(
    series: &OhlcvSeries,
    theta: &[Signal],
    params: &BnsParams,
) -> Result<LambdaEstimate> {
    if theta.len() != series.len() {
        return Err(Error::Alignment(format!(
            "{} labels for {} rows",
            theta.len(),
            series.len()
        )));
    }
    let close = series.close();
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in 0..series.len().saturating_sub(1) {
        if theta[t].warmup || theta[t].theta != Theta::Up {
            continue;
        }
        sum += (close[t + 1] / close[t]).ln();
        count += 1;
    }
    if count == 0 {
        return Ok(LambdaEstimate {
            value: 0.0,
            up_count: 0,
            fallback: true,
        });
    }
    let annualized = sum / count as f64 * TRADING_DAYS;
    let lambda_sq = (annualized - params.drift).max(0.0);
    Ok(LambdaEstimate {
        value: lambda_sq.sqrt(),
        up_count: count,
        fallback: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn flat_params() -> BnsParams {
        // Frozen variance: no decay, no jumps.
        BnsParams {
            drift: 0.1,
            lambda_rate: 0.0,
            jump_rate: 0.0,
            sigma0_sq: 0.04,
            ..BnsParams::default()
        }
    }

    #[test]
    fn deterministic_degenerate_case() {
        // No jumps, no initial variance: X accumulates the drift exactly.
        let params = BnsParams {
            sigma0_sq: 0.0,
            jump_rate: 0.0,
            big_lambda: 0.3,
            ..BnsParams::default()
        };
        let n = 504;
        let regimes = RegimePath::blocks(&[(Theta::Up, 252), (Theta::Flat, 252)], n);
        let path = simulate_bns_path(&params, &regimes, n, 1).unwrap();
        assert!(path.variance.iter().all(|&v| v == 0.0));
        let expect = (params.drift + 0.09) * 1.0 + params.drift * 1.0;
        assert_abs_diff_eq!(path.log_path[n], expect, epsilon = 1e-10);
        assert!(path.jumps.is_empty());
    }

    #[test]
    fn up_and_flat_regimes_have_no_price_jumps() {
        let params = BnsParams::default(); // jumps active
        for theta in [Theta::Flat, Theta::Up] {
            let regimes = RegimePath::constant(theta, 504);
            let path = simulate_bns_path(&params, &regimes, 504, 7).unwrap();
            assert!(!path.jumps.is_empty(), "variance jumps should fire");
            assert!(
                path.x_jump.iter().all(|&j| j == 0.0),
                "price must not jump when theta is {theta:?}"
            );
        }
    }

    #[test]
    fn down_regime_jumps_are_non_positive() {
        let params = BnsParams::default();
        let regimes = RegimePath::constant(Theta::Down, 504);
        let path = simulate_bns_path(&params, &regimes, 504, 11).unwrap();
        assert!(!path.jumps.is_empty());
        assert!(path.x_jump.iter().any(|&j| j < 0.0));
        assert!(path.x_jump.iter().all(|&j| j <= 0.0));
    }

    #[test]
    fn variance_stays_positive() {
        let params = BnsParams::default();
        let regimes = RegimePath::constant(Theta::Flat, 2520);
        let path = simulate_bns_path(&params, &regimes, 2520, 3).unwrap();
        assert!(path.variance.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn monte_carlo_drift_mean() {
        // theta = 0, frozen sigma^2 = 0.04, B = 0.1, T = 1:
        // E[X_1] = B - sigma^2/2 = 0.08.
        let params = flat_params();
        let n_steps = 252;
        let regimes = RegimePath::constant(Theta::Flat, n_steps);
        let n_paths = 20_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for p in 0..n_paths {
            let path = simulate_bns_path(&params, &regimes, n_steps, 1000 + p as u64).unwrap();
            let x = path.log_path[n_steps];
            sum += x;
            sum_sq += x * x;
        }
        let mean = sum / n_paths as f64;
        let var = sum_sq / n_paths as f64 - mean * mean;
        let se = (var / n_paths as f64).sqrt();
        assert!(
            (mean - 0.08).abs() <= 3.0 * se,
            "mean {mean} outside 3 SE ({se}) of 0.08"
        );
    }

    #[test]
    fn stationary_variance_time_average() {
        // OU driven by the subordinator has stationary mean a/b regardless
        // of lambda.
        let params = BnsParams {
            lambda_rate: 2.0,
            jump_rate: 5.0,
            jump_mean: 0.02,
            sigma0_sq: 0.1,
            ..BnsParams::default()
        };
        let years = 200;
        let n_steps = years * 252;
        let regimes = RegimePath::constant(Theta::Flat, n_steps);
        let path = simulate_bns_path(&params, &regimes, n_steps, 5).unwrap();
        let avg: f64 = path.variance.iter().sum::<f64>() / path.variance.len() as f64;
        let target = params.jump_rate * params.jump_mean;
        assert!(
            (avg - target).abs() < 0.1 * target,
            "time-average variance {avg} vs stationary mean {target}"
        );
    }

    #[test]
    fn sqrt_n_monte_carlo_convergence() {
        let params = flat_params();
        let n_steps = 64;
        let regimes = RegimePath::constant(Theta::Flat, n_steps);
        let terminal = |seed0: u64, n: usize| -> Vec<f64> {
            (0..n)
                .map(|p| {
                    simulate_bns_path(&params, &regimes, n_steps, seed0 + p as u64)
                        .unwrap()
                        .log_path[n_steps]
                })
                .collect()
        };
        let se = |xs: &[f64]| -> f64 {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        let small = se(&terminal(1, 2000));
        let big = se(&terminal(50_000, 8000));
        let ratio = small / big;
        assert!(
            (ratio - 2.0).abs() < 0.5,
            "quadrupling paths should halve the SE; ratio {ratio}"
        );
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = BnsParams {
            rho: 0.2,
            ..BnsParams::default()
        };
        let regimes = RegimePath::constant(Theta::Flat, 4);
        assert!(matches!(
            simulate_bns_path(&bad, &regimes, 4, 1),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn regime_length_mismatch_rejected() {
        let regimes = RegimePath::constant(Theta::Flat, 3);
        assert!(matches!(
            simulate_bns_path(&BnsParams::default(), &regimes, 4, 1),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn lambda_estimate_recovers_planted_boost() {
        // Constant per-day log return (B + 0.09)/252 on up-labeled rows.
        let n = 1001;
        let daily = (0.1 + 0.09) / TRADING_DAYS;
        let close: Vec<f64> = (0..n).map(|t| 100.0 * (daily * t as f64).exp()).collect();
        let dates: Vec<NaiveDate> = (0..n as i64)
            .map(|i| NaiveDate::from_ymd_opt(2014, 1, 1).unwrap() + chrono::Duration::days(i))
            .collect();
        let series = OhlcvSeries::from_close(dates, close).unwrap();
        let theta = crate::labeling::target_theta(series.close(), 15, 0.0).unwrap();
        // Zero margin and steady growth: every defined label is +1.
        let params = BnsParams::default(); // drift 0.1
        let estimate = estimate_big_lambda(&series, &theta, &params).unwrap();
        assert!(!estimate.fallback);
        assert!(
            estimate.value > 0.25 && estimate.value < 0.35,
            "Lambda {} should be near 0.3",
            estimate.value
        );
    }

    #[test]
    fn lambda_estimate_zero_excess() {
        let n = 300;
        let daily = 0.1 / TRADING_DAYS;
        let close: Vec<f64> = (0..n).map(|t| 50.0 * (daily * t as f64).exp()).collect();
        let dates: Vec<NaiveDate> = (0..n as i64)
            .map(|i| NaiveDate::from_ymd_opt(2014, 1, 1).unwrap() + chrono::Duration::days(i))
            .collect();
        let series = OhlcvSeries::from_close(dates, close).unwrap();
        let theta = crate::labeling::target_theta(series.close(), 15, 0.0).unwrap();
        let estimate = estimate_big_lambda(&series, &theta, &BnsParams::default()).unwrap();
        // Compounded float error in the mean makes Lambda^2 a few 1e-17 at
        // worst, so Lambda itself can reach a few 1e-9.
        assert_abs_diff_eq!(estimate.value, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn lambda_estimate_without_up_labels_falls_back() {
        let series = crate::marketdata::tests::ramp_series(40);
        let theta: Vec<Signal> = crate::labeling::target_theta(series.close(), 15, 10.0).unwrap();
        // Margin 1000%: nothing qualifies as up.
        let estimate = estimate_big_lambda(&series, &theta, &BnsParams::default()).unwrap();
        assert_eq!(estimate.value, 0.0);
        assert!(estimate.fallback);
        assert_eq!(estimate.up_count, 0);
    }

    #[test]
    fn path_csv_round_trip() {
        let params = BnsParams::default();
        let regimes = RegimePath::constant(Theta::Flat, 30);
        let path = simulate_bns_path(&params, &regimes, 30, 2).unwrap();
        let series = path_to_series(&path, NaiveDate::from_ymd_opt(2014, 1, 2).unwrap()).unwrap();
        let mut buf = Vec::new();
        series.write_csv(&mut buf).unwrap();
        let parsed = crate::marketdata::parse_ohlcv_csv(buf.as_slice()).unwrap();
        assert_eq!(parsed, series);
        assert_eq!(parsed.close().len(), 31);
    }
}
