//! Private confidence intervals for the slope, with their plans.
//!
//! Run with `cargo run --example confidence_intervals`.

use dp_theilsen::intervals::{dp_theil_sen_ci, CiParams, CiPlan, CiVariant};
use dp_theilsen::sim::{generate_dataset, substream, SimConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dp_theilsen::Result<()> {
    let config = SimConfig::new(400, 2.0, 1.0, 1, 3);
    let data = generate_dataset(&config, &mut substream(config.seed, 0, 0))?;
    let params = CiParams::new(2.0, 0.1, 10.0, 0.01)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    for variant in [CiVariant::Full, CiVariant::Half, CiVariant::KHalf { k: 5 }] {
        match CiPlan::new(data.len(), &params, variant) {
            Ok(plan) => println!(
                "{:<6} targets ({:.3}, {:.3}), b = {:.3}, t = {:.4}, eps per draw = {:.5}",
                variant.name(),
                plan.lower_q,
                plan.upper_q,
                plan.b,
                plan.t,
                plan.eps_call
            ),
            Err(e) => {
                println!("{:<6} infeasible: {e}", variant.name());
                continue;
            }
        }
        let ci = dp_theil_sen_ci(&data, &params, variant, &mut rng)?;
        println!(
            "       [{:.3}, {:.3}]  width {:.3}  contains beta: {}",
            ci.lower,
            ci.upper,
            ci.width(),
            ci.contains(config.beta)
        );
    }
    Ok(())
}
