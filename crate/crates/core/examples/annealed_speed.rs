//! Annealed Monte Carlo: velocity estimates against the explicit speed, and
//! the zero-speed transient regime.
//!
//! ```bash
//! cargo run --release --example annealed_speed
//! ```

use std::sync::Arc;

use rwre::exact1d::speed;
use rwre::stats::velocity_from_displacements;
use rwre::walk::annealed_endpoints_1d;
use rwre::EnvironmentSpec;

fn main() -> rwre::Result<()> {
    let steps = 20_000;
    for spec in [
        EnvironmentSpec::two_point(0.9, 0.4, 0.5)?,
        EnvironmentSpec::constant(0.6)?,
        EnvironmentSpec::two_point(0.8, 0.3, 0.5)?,
    ] {
        let spec = Arc::new(spec);
        let ends = annealed_endpoints_1d(&spec, steps, 200, 1);
        let d: Vec<f64> = ends.iter().map(|&x| x as f64).collect();
        let v = velocity_from_displacements(&d, steps, 1)?;
        let positive = ends.iter().filter(|&&x| x > 0).count();
        println!(
            "{:<32} v = {:.4}  estimate {v}  positive {positive}/200",
            spec.label(),
            speed(&spec)?
        );
    }
    Ok(())
}
