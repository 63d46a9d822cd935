//! Autoregressive baseline on a d-times-differenced series, fitted by
//! conditional least squares. Stands in for a full ARIMA: no moving-average
//! terms, no likelihood maximization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitted AR(p) model on the d-differenced scale, carrying the series tail
/// it needs to roll forecasts back to levels.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ArModel {
    pub p: usize,
    pub d: usize,
    pub intercept: f64,
    /// Coefficients for lags 1..p.
    pub coefficients: Vec<f64>,
    /// Last p values of the differenced series, most recent last.
    tail: Vec<f64>,
    /// Last value of each differencing stage 0..d, stage 0 = levels.
    stage_last: Vec<f64>,
}

impl ArModel {
    /// Forecasts `horizon` future levels by iterating the AR recursion on
    /// the differenced scale and integrating back.
    pub fn forecast(&self, horizon: usize) -> Vec<f64> {
        let mut tail = self.tail.clone();
        let mut stage_last = self.stage_last.clone();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let mut z = self.intercept;
            for (lag, phi) in self.coefficients.iter().enumerate() {
                z += phi * tail[tail.len() - 1 - lag];
            }
            tail.remove(0);
            tail.push(z);
            // Integrate d times: stage k accumulates stage k+1, stage d = z.
            let mut increment = z;
            for k in (0..self.d).rev() {
                stage_last[k] += increment;
                increment = stage_last[k];
            }
            out.push(if self.d == 0 { z } else { stage_last[0] });
        }
        out
    }
}

fn difference(series: &[f64]) -> Vec<f64> {
    series.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Numerically free columns get zero coefficients; the solution is then
/// checked against the original system, and an inconsistent singular system
/// is a conditioning error.
fn solve_normal_equations(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-300);
    let tol = 1e-12 * scale;

    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut rhs = b.to_vec();
    let mut pivot_cols: Vec<Option<usize>> = vec![None; n]; // row -> column
    let mut row = 0usize;
    for col in 0..n {
        let (best_row, best_val) = (row..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap_or((row, 0.0));
        if best_val <= tol {
            continue; // free column
        }
        m.swap(row, best_row);
        rhs.swap(row, best_row);
        for r in 0..n {
            if r != row {
                let factor = m[r][col] / m[row][col];
                if factor != 0.0 {
                    for c in col..n {
                        m[r][c] -= factor * m[row][c];
                    }
                    rhs[r] -= factor * rhs[row];
                }
            }
        }
        pivot_cols[row] = Some(col);
        row += 1;
        if row == n {
            break;
        }
    }

    let mut x = vec![0.0; n];
    for (r, col) in pivot_cols.iter().enumerate() {
        if let Some(c) = col {
            x[*c] = rhs[r] / m[r][*c];
        }
    }

    // Consistency of the original system.
    let b_scale = b.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    for r in 0..n {
        let mut lhs = 0.0;
        for c in 0..n {
            lhs += a[r][c] * x[c];
        }
        if (lhs - b[r]).abs() > 1e-8 * b_scale.max(scale) {
            return Err(Error::Conditioning(
                "normal equations are singular and inconsistent".into(),
            ));
        }
    }
    Ok(x)
}

/// Fits an AR(p) model to the d-times-differenced series by conditional
/// least squares with an intercept.
pub fn fit_ar_baseline(series: &[f64], p: usize, d: usize) -> Result<ArModel> {
    if p == 0 {
        return Err(Error::Parameter("lag order p must be at least 1".into()));
    }
    if series.len() <= p + d + 7 {
        return Err(Error::InsufficientData(format!(
            "AR baseline needs more than {} observations, got {}",
            p + d + 7,
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite observation".into()));
    }

    let mut stage_last = Vec::with_capacity(d);
    let mut z = series.to_vec();
    for _ in 0..d {
        stage_last.push(*z.last().expect("non-empty"));
        z = difference(&z);
    }

    let rows = z.len() - p;
    let dim = p + 1;
    // Accumulate X'X and X'y directly; row t has predictors [1, z[t-1..t-p]].
    let mut xtx = vec![vec![0.0; dim]; dim];
    let mut xty = vec![0.0; dim];
    for t in p..z.len() {
        let mut x_row = Vec::with_capacity(dim);
        x_row.push(1.0);
        for lag in 1..=p {
            x_row.push(z[t - lag]);
        }
        for i in 0..dim {
            xty[i] += x_row[i] * z[t];
            for j in 0..dim {
                xtx[i][j] += x_row[i] * x_row[j];
            }
        }
    }
    debug_assert!(rows >= 1);

    let beta = solve_normal_equations(&xtx, &xty)?;
    let intercept = beta[0];
    let coefficients = beta[1..].to_vec();
    let tail = z[z.len() - p..].to_vec();

    Ok(ArModel {
        p,
        d,
        intercept,
        coefficients,
        tail,
        stage_last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn ar1_coefficient_recovered() {
        let mut rng = crate::seed::rng(17, &["ar1"]);
        let mut series = vec![0.0f64];
        for _ in 1..2000 {
            let prev = *series.last().unwrap();
            let noise: f64 = rng.sample(rand_distr::StandardNormal);
            series.push(0.5 * prev + noise);
        }
        let model = fit_ar_baseline(&series, 1, 0).unwrap();
        assert!(
            model.coefficients[0] > 0.4 && model.coefficients[0] < 0.6,
            "estimated {}",
            model.coefficients[0]
        );
    }

    #[test]
    fn constant_series_forecasts_constant() {
        let series = vec![42.0; 50];
        let model = fit_ar_baseline(&series, 1, 1).unwrap();
        for v in model.forecast(7) {
            assert_abs_diff_eq!(v, 42.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn linear_trend_continues_under_differencing() {
        let series: Vec<f64> = (0..60).map(|t| 5.0 + 2.0 * t as f64).collect();
        let model = fit_ar_baseline(&series, 2, 1).unwrap();
        let forecast = model.forecast(3);
        assert_abs_diff_eq!(forecast[0], 5.0 + 2.0 * 60.0, epsilon = 1e-6);
        assert_abs_diff_eq!(forecast[2], 5.0 + 2.0 * 62.0, epsilon = 1e-6);
    }

    #[test]
    fn p_equal_n_is_insufficient() {
        let series = vec![1.0; 30];
        assert!(matches!(
            fit_ar_baseline(&series, 30, 0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn collinear_with_signal_is_conditioning_error() {
        // Two identical lag columns with a nonzero response cannot be fit:
        // synthesize the degenerate normal equations directly.
        let xtx = vec![
            vec![2.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0],
        ];
        // Inconsistent: rows 2 and 3 identical on the left, different rhs.
        let xty = vec![1.0, 1.0, 2.0];
        assert!(matches!(
            solve_normal_equations(&xtx, &xty),
            Err(Error::Conditioning(_))
        ));
    }
}
