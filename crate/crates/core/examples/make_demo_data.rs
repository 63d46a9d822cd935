//! Regenerates the bundled demo market (data/synthetic.csv): a
//! planted-regime price path cycling through up, flat, down, flat blocks.
//! The file is deterministic, so rerunning this reproduces it exactly.

use chrono::NaiveDate;

use trendlab_core::bns::{path_to_series, simulate_bns_path, BnsParams, RegimePath};
use trendlab_core::labeling::Theta;

fn main() {
    let params = BnsParams {
        s0: 100.0,
        drift: 0.0,
        big_lambda: 0.4,
        rho: -0.5,
        lambda_rate: 2.0,
        sigma0_sq: 0.05,
        jump_rate: 5.0,
        jump_mean: 0.01,
        dt: 1.0 / 252.0,
    };
    let n_steps = 1340;
    let regimes = RegimePath::blocks(
        &[
            (Theta::Up, 80),
            (Theta::Flat, 60),
            (Theta::Down, 80),
            (Theta::Flat, 60),
        ],
        n_steps,
    );
    let path = simulate_bns_path(&params, &regimes, n_steps, 22).expect("valid parameters");
    let series =
        path_to_series(&path, NaiveDate::from_ymd_opt(2014, 1, 2).unwrap()).expect("valid path");

    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "data/synthetic.csv".into());
    if let Some(parent) = std::path::Path::new(&out).parent() {
        std::fs::create_dir_all(parent).expect("create data dir");
    }
    let mut buf = Vec::new();
    series.write_csv(&mut buf).expect("serialize");
    std::fs::write(&out, buf).expect("write csv");
    println!(
        "wrote {} ({} rows, {} to {}, train cutoff suggestion: {})",
        out,
        series.len(),
        series.first_date().unwrap(),
        series.last_date().unwrap(),
        series.dates()[1280],
    );
}
