//! The ε-coin coupling: a walk driven by fair coins plus a residual kernel
//! has the same law as the direct walk.
//!
//! ```bash
//! cargo run --release --example coupling
//! ```

use rwre::stats::distribution_equality_test;
use rwre::walk::{run_coupled, run_quenched, CouplingParams};
use rwre::{Environment, EnvironmentSpec};

fn main() -> rwre::Result<()> {
    let env = Environment::new(EnvironmentSpec::two_point(0.9, 0.4, 0.5)?, 3);
    let params = CouplingParams::new(0.2, 1)?;
    params.check_law(env.spec())?;

    let t = run_coupled(&env, params, 20, 9)?;
    t.check_invariants()?;
    println!("coupled path: {:?}", t.projection(&[1]));
    println!("coins:        {:?}", t.coins.as_deref().unwrap_or_default());

    let runs = 20_000u64;
    let direct: Vec<i64> = (0..runs)
        .map(|s| run_quenched(&env, &[0], 20, s).endpoint()[0])
        .collect();
    let coupled = (0..runs)
        .map(|s| run_coupled(&env, params, 20, runs + s).map(|t| t.endpoint()[0]))
        .collect::<rwre::Result<Vec<_>>>()?;
    let r = distribution_equality_test(&coupled, &direct)?;
    println!(
        "chi-square on X_20: statistic {:.2}, df {}, p = {:.3}",
        r.statistic, r.df, r.p_value
    );
    Ok(())
}
