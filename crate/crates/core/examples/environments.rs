//! Environment laws: construction, site values, classification and the
//! quantities that drive the one-dimensional theory.
//!
//! ```bash
//! cargo run --example environments
//! ```

use rwre::env::{drift_support, is_nestling, log_moment, moments};
use rwre::exact1d::{classify, s_parameter, speed};
use rwre::{Environment, EnvironmentSpec};

fn main() -> rwre::Result<()> {
    let laws = [
        EnvironmentSpec::two_point(0.9, 0.4, 0.5)?,
        EnvironmentSpec::two_point(0.8, 0.3, 0.5)?,
        EnvironmentSpec::two_point(0.75, 0.25, 0.5)?,
        EnvironmentSpec::constant(0.6)?,
    ];
    println!(
        "{:<34} {:>10} {:>8} {:>8} {:>8}  class",
        "law", "E log rho", "E rho", "s", "v"
    );
    for spec in &laws {
        let s = s_parameter(spec).map_or("-".into(), |s| format!("{s:.4}"));
        println!(
            "{:<34} {:>10.4} {:>8.4} {:>8} {:>8.4}  {:?}",
            spec.label(),
            log_moment(spec)?,
            moments(spec, 1.0)?,
            s,
            speed(spec)?,
            classify(spec)?
        );
    }

    // site values are a pure function of (seed, site)
    let env = Environment::new(laws[0].clone(), 42);
    let omegas: Vec<f64> = (-5..=5).map(|x| env.omega(x)).collect();
    println!("\nomega on [-5, 5] for seed 42: {omegas:?}");
    println!("rho at 0: {:.4}", env.rho(0).value());

    let periodic = Environment::new(EnvironmentSpec::periodic(&[0.8, 0.4])?, 0);
    println!(
        "periodic [0.8, 0.4]: omega_0..3 = {:?}",
        (0..4).map(|x| periodic.omega(x)).collect::<Vec<_>>()
    );

    let markov = EnvironmentSpec::markov(&[0.8, 0.3], vec![vec![0.9, 0.1], vec![0.2, 0.8]])?;
    println!(
        "Markov chain law stationary distribution: {:?}",
        markov.stationary()
    );

    let plane = EnvironmentSpec::lattice_product(
        2,
        vec![
            (vec![0.35, 0.15, 0.25, 0.25], 0.5),
            (vec![0.15, 0.35, 0.25, 0.25], 0.5),
        ],
    )?;
    println!(
        "\n2D law drifts {:?}, nestling = {}",
        drift_support(&plane),
        is_nestling(&plane)
    );
    Ok(())
}
