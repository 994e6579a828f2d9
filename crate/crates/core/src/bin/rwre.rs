use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rwre::experiment::{list_presets, report, run_many, write_report, ExperimentConfig};
use rwre::Result;

#[derive(Parser)]
#[command(
    name = "rwre",
    about = "Random walks in random environment: experiment runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the preset catalog.
    List,
    /// Run presets or a config file.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Preset id; repeat to run several presets.
        #[arg(long)]
        preset: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; with several presets each gets a subdirectory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Presets run concurrently on this many threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Merge result manifests into report.csv and summary.txt.
    Report {
        /// Manifest files or directories containing them.
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn configs(
    config: Option<PathBuf>,
    presets: Vec<String>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<Vec<ExperimentConfig>> {
    let many = presets.len() > 1;
    let place = |mut c: ExperimentConfig| {
        if let Some(o) = &out {
            c.out = if many { o.join(c.name()) } else { o.clone() };
        }
        c
    };
    match config {
        Some(path) => {
            let text = std::fs::read_to_string(&path)?;
            if presets.is_empty() {
                return Ok(vec![place(ExperimentConfig::parse(&text, seed, None)?)]);
            }
            presets
                .iter()
                .map(|p| ExperimentConfig::parse(&text, seed, Some(p)).map(place))
                .collect()
        }
        None => {
            if presets.is_empty() {
                return Err(rwre::RwreError::InvalidParameter(
                    "give --config or --preset".into(),
                ));
            }
            let seed =
                seed.ok_or_else(|| rwre::RwreError::InvalidParameter("--seed is required".into()))?;
            presets
                .iter()
                .map(|p| {
                    ExperimentConfig::preset(p, seed, PathBuf::from("results").join(p)).map(place)
                })
                .collect()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::List => {
            print!("{}", list_presets());
            0
        }
        Command::Run {
            config,
            preset,
            seed,
            out,
            jobs,
        } => match configs(config, preset, seed, out).and_then(|cs| run_many(&cs, jobs)) {
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
            Ok(results) => {
                let (mut code, mut failed) = (0, false);
                for r in results {
                    match r {
                        Ok(r) => {
                            println!(
                                "{} {} (seed {}, {:.1} s): {}",
                                if r.passed { "PASS" } else { "FAIL" },
                                r.name,
                                r.seed,
                                r.wall_time.as_secs_f64(),
                                r.criterion
                            );
                            code = code.max(r.exit_code());
                        }
                        Err(e) => {
                            eprintln!("error: {e}");
                            failed = true;
                        }
                    }
                }
                if failed {
                    1
                } else {
                    code
                }
            }
        },
        Command::Report { inputs, out } => {
            match report(&inputs).and_then(|r| write_report(&r, &out).map(|_| r)) {
                Ok(r) => {
                    print!("{}", r.summary());
                    if r.all_passed() {
                        0
                    } else {
                        2
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    1
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
