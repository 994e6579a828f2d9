//! Recurrent (Sinai) regime: the valley of the potential, localization of
//! X_n/(log n)^2 near its bottom, and the aging correlator.
//!
//! ```bash
//! cargo run --release --example sinai_aging
//! ```

use std::sync::Arc;

use rwre::exact1d::{sinai_valley, PotentialProfile};
use rwre::stats::{aging_correlator, aging_formula, quenched_localization, sinai_localization};
use rwre::{Environment, EnvironmentSpec};

fn main() -> rwre::Result<()> {
    let spec = Arc::new(EnvironmentSpec::two_point(0.75, 0.25, 0.5)?);
    let env = Environment::new(Arc::clone(&spec), 11);
    let profile = PotentialProfile::build(&env, -20, 20);
    println!(
        "potential near 0: {:?}",
        (-3..=3)
            .map(|x| (profile.at(x) * 100.0).round() / 100.0)
            .collect::<Vec<_>>()
    );

    let valley = sinai_valley(&env, 10_000)?;
    println!(
        "valley for n = 1e4: [{}, {}], bottom {}, rescaled {:.3}",
        valley.left, valley.right, valley.bottom, valley.rescaled_bottom
    );
    println!(
        "exact quenched localization at n = 2000: {:.3}",
        quenched_localization(&env, 2000, 0.5)?
    );

    for p in sinai_localization(&spec, &[100, 1000, 10_000], 0.5, 1000, 3)? {
        println!("n = {:>6}: fraction near B_n {}", p.n, p.fraction);
    }
    let a = aging_correlator(&spec, 1000, 2.0, 0.5, 300, 4)?;
    println!(
        "aging h = 2 at n = 1000: {} (limit {:.4})",
        a.estimate,
        aging_formula(2.0)
    );
    Ok(())
}
