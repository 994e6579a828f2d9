//! Regeneration times, slab independence and the renewal velocity estimate;
//! modified regenerations through a prescribed coin pattern.
//!
//! ```bash
//! cargo run --release --example regeneration
//! ```

use rwre::regen::{
    lln_via_regeneration, modified_regeneration_times, regeneration_times, slabs_iid_check,
};
use rwre::walk::{run_coupled, run_quenched, CouplingParams};
use rwre::{Environment, EnvironmentSpec};

fn main() -> rwre::Result<()> {
    let env = Environment::new(EnvironmentSpec::two_point(0.9, 0.4, 0.5)?, 5);
    let n = 200_000;
    let t = run_quenched(&env, &[0], n, 1);
    let d = regeneration_times(&t, &[1], n)?;
    println!(
        "{} regeneration times, first few: {:?}",
        d.times.len(),
        &d.times[..d.times.len().min(8)]
    );
    let report = slabs_iid_check(&d, 1)?;
    println!(
        "lag-1 correlations {:?}, p-values {:?}, passed {}",
        report.autocorrelations, report.p_values, report.passed
    );
    println!(
        "velocity from slabs: {}",
        lln_via_regeneration(std::slice::from_ref(&d), 1)?
    );

    let mut csv = Vec::new();
    d.write_csv(&mut csv)?;
    let text = String::from_utf8_lossy(&csv);
    println!("\n{}", text.lines().take(4).collect::<Vec<_>>().join("\n"));

    let params = CouplingParams::new(0.2, 1)?;
    let c = run_coupled(&env, params, 50_000, 2)?;
    let m = modified_regeneration_times(&c, &[1], &[1, 1], 50_000)?;
    println!(
        "\nmodified regenerations through two right coins: {}",
        m.times.len()
    );
    Ok(())
}
