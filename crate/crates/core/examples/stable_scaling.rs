//! Fluctuations of the hitting time T_n: spread grows like n^(1/s) when
//! s < 2 and like n^(1/2) otherwise.
//!
//! ```bash
//! cargo run --release --example stable_scaling
//! ```

use std::sync::Arc;

use rwre::stats::stable_scaling;
use rwre::EnvironmentSpec;

fn main() -> rwre::Result<()> {
    let grid = [500, 1000, 2000, 4000];
    for spec in [
        EnvironmentSpec::two_point(0.9, 0.4, 0.5)?,
        EnvironmentSpec::constant(0.6)?,
    ] {
        let spec = Arc::new(spec);
        let fit = stable_scaling(&spec, &grid, 1000, 1)?;
        println!(
            "{}: slope {:.3} target {:.3}",
            spec.label(),
            fit.fit.slope,
            fit.target
        );
        for (n, s) in &fit.spreads {
            println!("  n = {n:>5}: q0.9 - q0.1 = {s:.0}");
        }
    }
    Ok(())
}
