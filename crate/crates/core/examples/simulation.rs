//! A small Monte-Carlo campaign: estimator variance, error quantiles and
//! interval coverage, written as a long-format CSV table on stdout.
//!
//! Run with `cargo run --release --example simulation`.

use dp_theilsen::bounds::{suggest_theta, BoundParams};
use dp_theilsen::estimators::{PrivateParams, Variant};
use dp_theilsen::intervals::{CiParams, CiVariant};
use dp_theilsen::sim::{run_trials, write_delimited, EstimatorSpec, IntervalSpec, SimConfig};

fn main() -> dp_theilsen::Result<()> {
    let mut config = SimConfig::new(101, 2.0, 1.0, 500, 2024);
    let sigma_x = config.sigma_x()?;
    let theta = suggest_theta(&BoundParams::new(1.0, sigma_x, config.n, 0.1).with_privacy(2.0, 10.0, 1.0))?.theta;
    let private = PrivateParams::new(2.0, 10.0, theta)?;

    config.estimators = vec![
        EstimatorSpec::non_private(Variant::Ols),
        EstimatorSpec::non_private(Variant::TheilSen),
        EstimatorSpec::non_private(Variant::TheilSenHalf),
        EstimatorSpec::private(Variant::DpTheilSen, private, None),
        EstimatorSpec::private(Variant::DpTheilSenKHalf, private, Some(10)),
    ];
    config.intervals = vec![IntervalSpec {
        variant: CiVariant::Half,
        params: CiParams::new(2.0, 0.1, 10.0, theta)?,
    }];

    let report = run_trials(&config)?;
    eprintln!("{} trials in {:.2?}", config.trials, report.wall_time);
    eprintln!(
        "asymptotic Theil-Sen variance pi / (3 sigma_x^2) = {:.3}",
        std::f64::consts::PI / (3.0 * sigma_x * sigma_x)
    );
    for e in &report.estimators {
        eprintln!(
            "{:<50} var(sqrt(n) err) = {:>8.3}  90% |err| = {:.4}",
            e.label,
            e.scaled_variance.unwrap_or(f64::NAN),
            e.convergence(0.1)?
        );
    }
    for i in &report.intervals {
        eprintln!("{:<50} coverage = {:?}", i.label, i.coverage);
    }
    write_delimited(&report.rows(), b',', std::io::stdout().lock())
}
