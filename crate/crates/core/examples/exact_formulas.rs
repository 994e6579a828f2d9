//! Exact one-dimensional quantities: exit probabilities, mean crossing
//! times, the s-parameter and Cramér rate, and the exact CSV export.
//!
//! ```bash
//! cargo run --example exact_formulas
//! ```

use rwre::exact1d::{
    annealed_expected_tau, cramer_rate, exit_probability, expected_tau, quenched_rate, s_from_rate,
    s_parameter, speed_ergodic, write_exact_csv, ExactRow, Window,
};
use rwre::{Environment, EnvironmentSpec};

fn main() -> rwre::Result<()> {
    let spec = EnvironmentSpec::two_point(0.9, 0.4, 0.5)?;
    let env = Environment::new(spec.clone(), 7);

    let w = Window::new(5, 5, 0)?;
    println!(
        "P(exit left of [-5, 5] from 0) = {:.6}",
        exit_probability(&env, w)?
    );

    let periodic = Environment::new(EnvironmentSpec::periodic(&[0.8, 0.4])?, 0);
    for site in 0..2 {
        println!(
            "periodic E tau_{site} = {:?}",
            expected_tau(&periodic, site, 1e-14)
        );
    }
    println!("annealed E tau = {:?}", annealed_expected_tau(&spec)?);
    println!(
        "ergodic speed of the periodic law: {:?}",
        speed_ergodic(periodic.spec(), 1e-12)?
    );

    println!("s by root finding  = {:.9}", s_parameter(&spec)?);
    println!("s by min J(y)/y    = {:.9}", s_from_rate(&spec)?);
    for y in [-1.0, -0.5, 0.0, 0.5] {
        println!("J({y:+.1}) = {:.6}", cramer_rate(&spec, y)?);
    }
    for w in [0.02, 0.05, 0.1] {
        println!(
            "quenched rate I({w}) ~ {:.6}",
            quenched_rate(&env, w, 20_000)?
        );
    }

    let rows = vec![
        ExactRow::from_result("s_parameter", &spec, "", s_parameter(&spec)),
        ExactRow::from_result(
            "exit_probability",
            &spec,
            "m=5;z=0",
            exit_probability(&env, w),
        ),
        ExactRow::from_result(
            "s_parameter",
            &EnvironmentSpec::constant(0.4)?,
            "",
            s_parameter(&EnvironmentSpec::constant(0.4)?),
        ),
    ];
    println!();
    write_exact_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}
