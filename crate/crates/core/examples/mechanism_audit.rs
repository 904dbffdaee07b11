//! The widened exponential mechanism: its exact density, the sampler
//! against that density, and the privacy ratio on a neighbouring input.
//!
//! Run with `cargo run --example mechanism_audit`.

use dp_theilsen::dpwide::{exact_density, QuantileQuery};
use dp_theilsen::slopes::SlopeMultiset;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dp_theilsen::Result<()> {
    let slopes = SlopeMultiset::from_values(&[0.8, 1.0, 1.0, 1.1, 1.3, 2.5])?;
    let query = QuantileQuery::median(5.0, 0.1, 2.0)?;
    let density = exact_density(&slopes, &query)?;

    println!("pieces of the output density on [-5, 5]:");
    for (i, p) in density.pieces().iter().enumerate() {
        println!(
            "  [{:>6.2}, {:>6.2}]  utility {:>5.1}  mass {:.4}",
            p.lo,
            p.hi,
            p.utility,
            density.mass(i)
        );
    }

    // empirical piece frequencies vs exact masses
    let draws = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bounds = density.breakpoints();
    let mut counts = vec![0usize; density.pieces().len()];
    for _ in 0..draws {
        let y = density.sample(&mut rng);
        let i = bounds.partition_point(|&b| b <= y).clamp(1, counts.len()) - 1;
        counts[i] += 1;
    }
    let tv: f64 = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (c as f64 / draws as f64 - density.mass(i)).abs())
        .sum::<f64>()
        / 2.0;
    println!("total variation, {draws} draws vs exact: {tv:.4}");

    // replace one slope and compare the densities everywhere
    let neighbour = SlopeMultiset::from_values(&[0.8, 1.0, 1.0, 1.1, 1.3, -4.0])?;
    let other = exact_density(&neighbour, &query)?;
    let worst = density.max_abs_log_ratio(&other);
    println!(
        "max |log density ratio| = {worst:.4} <= eps_mech = {}",
        query.eps_mech
    );
    Ok(())
}
