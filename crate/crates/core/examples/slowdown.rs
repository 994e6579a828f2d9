//! Slowdown: polynomial annealed decay with exponent 1 - s, the quenched
//! stretched-exponential diagnostic, and the hitting-time tail.
//!
//! ```bash
//! cargo run --release --example slowdown
//! ```

use std::sync::Arc;

use rwre::stats::{
    annealed_tau_samples, slowdown_exponent_annealed, slowdown_quenched_diagnostic, tail_index,
};
use rwre::{Environment, EnvironmentSpec};

fn main() -> rwre::Result<()> {
    let spec = Arc::new(EnvironmentSpec::two_point(0.9, 0.4, 0.5)?);
    let fit = slowdown_exponent_annealed(&spec, 0.0, 0.025, &[250, 500, 1000, 2000], 50_000, 1)?;
    for p in &fit.points {
        println!("n = {:>5}: P(X_n/n near 0) = {}", p.n, p.probability);
    }
    println!(
        "annealed slope {:.3} (1 - s = {:.3}); warnings {:?}",
        fit.fit.slope, fit.target, fit.warnings
    );

    let env = Environment::new(Arc::clone(&spec), 100);
    let q = slowdown_quenched_diagnostic(&env, 0.0, 0.025, &[500, 1000, 2000, 4000], 0.3)?;
    println!(
        "quenched stretched exponent {:.3}, corridor ({:.3}, {:.3}), nonincreasing {}",
        q.stretched.slope, q.bracket.0, q.bracket.1, q.nonincreasing
    );

    let (taus, censored) = annealed_tau_samples(&spec, 20_000, 10_000_000, 2);
    let tail = tail_index(&taus, 0.05)?;
    println!(
        "Hill tail index of tau_1: {} ({censored} censored)",
        tail.estimate
    );
    for (k, e) in &tail.sweep {
        println!("  top {:>4.0}%: {:.3}", k * 100.0, e.point);
    }
    Ok(())
}
