//! Closed-form convergence bounds and the widening parameter rule.
//!
//! Run with `cargo run --example bounds_and_theta`.

use dp_theilsen::bounds::{convergence_bound, suggest_theta, BoundEstimator, BoundParams};

fn main() -> dp_theilsen::Result<()> {
    let (sigma_e, sigma_x, n, p) = (1.0, 0.29, 500, 0.1);

    for epsilon in [0.5, 2.0, 10.0] {
        let mut params = BoundParams::new(sigma_e, sigma_x, n, p).with_privacy(epsilon, 10.0, 1.0);
        let theta = suggest_theta(&params)?;
        params.theta = Some(theta.theta);
        params.k = Some(10);
        params.abs_beta = Some(2.0);
        params.r_u = Some(3.0);
        println!(
            "eps = {epsilon}: theta = {:.2e} ({:?} term dominates)",
            theta.theta, theta.dominant
        );
        for e in BoundEstimator::ALL {
            let b = convergence_bound(e, &params)?;
            let failed: Vec<_> = b
                .constraints
                .iter()
                .filter(|c| !c.satisfied)
                .map(|c| c.name.as_str())
                .collect();
            println!(
                "  {:<22} {:>8.4}{}{}",
                e.name(),
                b.value,
                if b.asymptotic { "  (asymptotic)" } else { "" },
                if failed.is_empty() { String::new() } else { format!("  violated: {}", failed.join(", ")) }
            );
        }
    }
    Ok(())
}
