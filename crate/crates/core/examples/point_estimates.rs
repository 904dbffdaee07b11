//! Every slope estimator on one simulated dataset.
//!
//! Run with `cargo run --example point_estimates`.

use dp_theilsen::estimators::{self, PrivateParams};
use dp_theilsen::sim::{generate_dataset, substream, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dp_theilsen::Result<()> {
    let mut config = SimConfig::new(200, 2.0, 1.0, 1, 7);
    config.alpha = 1.0;
    let data = generate_dataset(&config, &mut substream(config.seed, 0, 0))?;

    println!("true slope: {}", config.beta);
    for fit in [
        estimators::ols_fit(&data)?,
        estimators::theil_sen(&data)?,
        estimators::theil_sen_half(&data)?,
    ] {
        println!("{:<22} {:>8.4}  ({} slopes)", fit.variant.name(), fit.beta, fit.meta.n_slopes);
    }

    let params = PrivateParams::new(1.0, 10.0, 0.02)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dp = estimators::dp_theil_sen(&data, &params, &mut rng)?;
    println!(
        "{:<22} {:>8.4}  (eps_mech = {:.5})",
        "dp-theil-sen",
        dp.beta,
        dp.meta.eps_mech.unwrap_or_default()
    );
    for k in [1, 5, 20] {
        let fit = estimators::dp_theil_sen_k_half(&data, &params, k, &mut rng)?;
        println!(
            "{:<22} {:>8.4}  (eps_mech = {:.5})",
            format!("dp-theil-sen-k-half k={k}"),
            fit.beta,
            fit.meta.eps_mech.unwrap_or_default()
        );
    }
    Ok(())
}
