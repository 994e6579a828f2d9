//! Product-structure walks: the leading five coordinates follow a symmetric
//! walk R at the times U_n; cut times of R split the residual path into
//! increments that estimate its velocity.
//!
//! ```bash
//! cargo run --release --example cut_points
//! ```

use std::sync::Arc;

use rwre::regen::{cut_times_of_trajectory, lln_via_cutpoints};
use rwre::walk::{map_annealed, product_structure_spec, run_theorem2, LeadingSplit};
use rwre::Environment;

fn main() -> rwre::Result<()> {
    let eta = 0.08;
    let rest = 1.0 - 10.0 * eta;
    let spec = Arc::new(product_structure_spec(
        [eta; 10],
        vec![
            (vec![0.75 * rest, 0.25 * rest], 0.5),
            (vec![0.35 * rest, 0.65 * rest], 0.5),
        ],
    )?);
    let split = LeadingSplit::from_spec(&spec)?;
    println!(
        "leading mass {:.2} in dimension {}",
        split.total,
        spec.dimension()
    );

    let env = Environment::new(Arc::clone(&spec), 1);
    let t = run_theorem2(&env, 20_000, 1)?;
    t.check_invariants()?;
    let cuts = cut_times_of_trajectory(&t, 200)?;
    println!(
        "one path: {} cut times of R, density {:.4}",
        cuts.times.len(),
        cuts.density()
    );

    let paths = map_annealed(&spec, 8, 2, |_, env, ws| run_theorem2(env, 20_000, ws))
        .into_iter()
        .collect::<rwre::Result<Vec<_>>>()?;
    let cut_sets = paths
        .iter()
        .map(|p| cut_times_of_trajectory(p, 200))
        .collect::<rwre::Result<Vec<_>>>()?;
    let pairs: Vec<_> = paths.iter().zip(&cut_sets).collect();
    let mut e6 = vec![0; 6];
    e6[5] = 1;
    let v = lln_via_cutpoints(&pairs, &e6, 2)?;
    println!(
        "residual velocity from {} cut increments: {}",
        v.increments, v.estimate
    );
    Ok(())
}
