//! Trajectory export: projection CSV and the binary format with its
//! config-style header, plus a round trip.
//!
//! ```bash
//! cargo run --example trajectory_export
//! ```

use rwre::walk::{run_quenched, Trajectory};
use rwre::{Environment, EnvironmentSpec};

fn main() -> rwre::Result<()> {
    let spec = EnvironmentSpec::lattice_product(
        2,
        vec![
            (vec![0.4, 0.1, 0.3, 0.2], 0.5),
            (vec![0.2, 0.3, 0.15, 0.35], 0.5),
        ],
    )?;
    let label = spec.label();
    let env = Environment::new(spec, 8);
    let t = run_quenched(&env, &[0, 0], 1000, 8);

    let dir = std::env::temp_dir().join("rwre-trajectory-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("walk.bin");
    t.write_binary(&path, &label)?;
    let back = Trajectory::read_binary(&path)?;
    assert_eq!(back, t);
    println!(
        "wrote {} and {}",
        path.display(),
        path.with_extension("bin.header").display()
    );
    print!("{}", std::fs::read_to_string(dir.join("walk.bin.header"))?);

    let mut csv = Vec::new();
    t.write_csv(&[1, 1], &mut csv)?;
    let text = String::from_utf8_lossy(&csv);
    println!(
        "projection on (1, 1):\n{}",
        text.lines().take(5).collect::<Vec<_>>().join("\n")
    );
    Ok(())
}
