//! Experiment runner: a catalog of presets, config parsing, result
//! persistence (CSV, SVG, manifest) and report merging.
//!
//! Config files use the plain-text format of [`crate::config`]:
//!
//! ```text
//! [experiment]
//! preset = solomon-speed
//! seed = 7
//! samples = 500          # optional override of the preset default
//! out = results/speed    # optional
//!
//! [environment]          # optional override of the preset law
//! kind = finite_support
//! support = 0.9:0.5, 0.4:0.5
//!
//! [parameters]           # optional preset-specific knobs
//! steps = 100000
//! ```
//!
//! Instead of `preset`, `operation` selects a single exact computation on the
//! `[environment]` law with arguments from `[parameters]`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::config::{Config, Section};
use crate::env::{drift_support, is_nestling, Environment, EnvironmentSpec};
use crate::error::{Result, RwreError};
use crate::exact1d::{
    annealed_expected_tau, annealed_rate_upper, classify, cramer_rate, exit_probability,
    expected_tau, quenched_rate_slowdown, s_from_rate, s_parameter, speed, Window,
};
use crate::regen::{
    cut_increments, cut_times_of_trajectory, cut_velocity, lln_via_regeneration,
    regeneration_times, slabs_iid_check,
};
use crate::rng::split_walker;
use crate::stats::{
    aging_correlator, annealed_tau_samples, bootstrap_mean, distribution_equality_test, proportion,
    sinai_localization, slowdown_exponent_annealed, slowdown_quenched_diagnostic, stable_scaling,
    tail_index, velocity_from_displacements, CiMethod, EstimateWithCI, Z95,
};
use crate::walk::{
    annealed_endpoints_1d, count_left_exits, hitting_times, map_annealed, product_structure_spec,
    run_coupled, run_quenched, run_theorem2, CouplingParams,
};

/// One named estimate with its interval and the module that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub name: String,
    /// Grid size for per-point rows, `None` for summary rows.
    pub n: Option<u64>,
    pub value: EstimateWithCI,
    pub target: Option<f64>,
    pub module: &'static str,
}

impl Estimate {
    fn new(
        name: &str,
        n: Option<u64>,
        value: EstimateWithCI,
        target: Option<f64>,
        module: &'static str,
    ) -> Self {
        Estimate {
            name: name.to_string(),
            n,
            value,
            target,
            module,
        }
    }
}

/// A statistic against `n`, drawn on log-log axes.
#[derive(Clone, Debug)]
pub struct Plot {
    pub name: String,
    pub y_label: String,
    /// `(n, value, ci_low, ci_high)`.
    pub points: Vec<(f64, f64, f64, f64)>,
}

impl Plot {
    fn from_estimates(name: &str, y_label: &str, estimates: &[Estimate]) -> Self {
        Plot {
            name: name.to_string(),
            y_label: y_label.to_string(),
            points: estimates
                .iter()
                .filter_map(|e| {
                    e.n.map(|n| (n as f64, e.value.point, e.value.ci_low, e.value.ci_high))
                })
                .collect(),
        }
    }
}

struct Outcome {
    estimates: Vec<Estimate>,
    passed: bool,
    criterion: String,
    plots: Vec<Plot>,
}

/// Inputs handed to a preset.
pub struct RunContext<'a> {
    pub spec: Arc<EnvironmentSpec>,
    pub samples: usize,
    pub seed: u64,
    parameters: &'a Section,
}

impl RunContext<'_> {
    fn param<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        self.parameters.parse_or(key, default)
    }

    fn list<T: FromStr + Clone>(&self, key: &str, default: &[T]) -> Result<Vec<T>> {
        match self.parameters.get(key) {
            Some(e) => e.parse_list(),
            None => Ok(default.to_vec()),
        }
    }
}

/// A catalog entry.
pub struct Preset {
    pub id: &'static str,
    pub description: &'static str,
    /// The result the preset reproduces.
    pub anchor: &'static str,
    pub budget: Duration,
    pub default_samples: usize,
    default_spec: fn() -> EnvironmentSpec,
    runner: fn(&RunContext) -> Result<Outcome>,
}

impl Preset {
    pub fn default_spec(&self) -> EnvironmentSpec {
        (self.default_spec)()
    }
}

fn two_point_09_04() -> EnvironmentSpec {
    EnvironmentSpec::two_point(0.9, 0.4, 0.5).unwrap()
}

fn two_point_08_03() -> EnvironmentSpec {
    EnvironmentSpec::two_point(0.8, 0.3, 0.5).unwrap()
}

fn sinai_law() -> EnvironmentSpec {
    EnvironmentSpec::two_point(0.75, 0.25, 0.5).unwrap()
}

fn constant_06() -> EnvironmentSpec {
    EnvironmentSpec::constant(0.6).unwrap()
}

fn periodic_08_04() -> EnvironmentSpec {
    EnvironmentSpec::periodic(&[0.8, 0.4]).unwrap()
}

fn product_structure() -> EnvironmentSpec {
    let eta = 0.08;
    let rest = 1.0 - 10.0 * eta;
    product_structure_spec(
        [eta; 10],
        vec![
            (vec![0.75 * rest, 0.25 * rest], 0.5),
            (vec![0.35 * rest, 0.65 * rest], 0.5),
        ],
    )
    .unwrap()
}

fn nestling_2d() -> EnvironmentSpec {
    EnvironmentSpec::lattice_product(
        2,
        vec![
            (vec![0.35, 0.15, 0.25, 0.25], 0.5),
            (vec![0.15, 0.35, 0.25, 0.25], 0.5),
        ],
    )
    .unwrap()
}

const fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

/// The shipped preset catalog.
pub fn presets() -> &'static [Preset] {
    static PRESETS: &[Preset] = &[
        Preset {
            id: "solomon-speed",
            description: "annealed velocity of a two-point law against the explicit speed",
            anchor: "Solomon speed formula v = (1 - E rho)/(1 + E rho)",
            budget: minutes(2),
            default_samples: 500,
            default_spec: two_point_09_04,
            runner: run_speed,
        },
        Preset {
            id: "constant-speed",
            description: "velocity of the homogeneous walk with omega = 0.6",
            anchor: "Solomon speed formula v = (1 - E rho)/(1 + E rho)",
            budget: minutes(2),
            default_samples: 500,
            default_spec: constant_06,
            runner: run_speed,
        },
        Preset {
            id: "zero-speed-transience",
            description: "transient walk with zero speed: tiny velocity, endpoints to the right",
            anchor: "transience with zero speed when E log rho < 0 <= log E rho",
            budget: minutes(10),
            default_samples: 200,
            default_spec: two_point_08_03,
            runner: run_zero_speed,
        },
        Preset {
            id: "exit-probability",
            description: "left-exit probability of a window: explicit sum against Monte Carlo",
            anchor: "gambler's ruin exit probability from an interval",
            budget: minutes(5),
            default_samples: 20_000,
            default_spec: two_point_09_04,
            runner: run_exit_probability,
        },
        Preset {
            id: "periodic-hitting-time",
            description: "quenched mean crossing times in the periodic environment 0.8, 0.4",
            anchor: "hitting-time recursion for E tau",
            budget: minutes(2),
            default_samples: 1_000_000,
            default_spec: periodic_08_04,
            runner: run_periodic_hitting,
        },
        Preset {
            id: "s-parameter",
            description: "root of E rho^s = 1 against min J(y)/y",
            anchor: "s-parameter and the Cramer rate of log rho",
            budget: minutes(1),
            default_samples: 1,
            default_spec: two_point_09_04,
            runner: run_s_parameter,
        },
        Preset {
            id: "annealed-slowdown",
            description: "polynomial decay of the annealed slowdown probability",
            anchor: "annealed slowdown exponent 1 - s",
            budget: minutes(30),
            default_samples: 200_000,
            default_spec: two_point_09_04,
            runner: run_annealed_slowdown,
        },
        Preset {
            id: "quenched-slowdown",
            description: "stretched-exponential quenched slowdown inside the eta-corridor",
            anchor: "quenched slowdown exponent 1 - 1/s",
            budget: minutes(10),
            default_samples: 32,
            default_spec: two_point_09_04,
            runner: run_quenched_slowdown,
        },
        Preset {
            id: "sinai-aging",
            description: "aging correlator at h = 2 against its closed form",
            anchor: "Sinai walk aging formula",
            budget: minutes(20),
            default_samples: 2000,
            default_spec: sinai_law,
            runner: run_aging,
        },
        Preset {
            id: "sinai-localization",
            description: "concentration of X_n/(log n)^2 near the valley bottom",
            anchor: "Sinai localization at the valley bottom B_n",
            budget: minutes(15),
            default_samples: 4000,
            default_spec: sinai_law,
            runner: run_localization,
        },
        Preset {
            id: "regeneration-lln",
            description: "i.i.d. regeneration slabs and the renewal velocity estimate",
            anchor: "regeneration structure and law of large numbers",
            budget: minutes(5),
            default_samples: 100_000,
            default_spec: constant_06,
            runner: run_regeneration,
        },
        Preset {
            id: "velocity-cross-check",
            description: "velocity from endpoints, regeneration slabs and 1/mean(tau)",
            anchor: "regeneration structure and law of large numbers",
            budget: minutes(5),
            default_samples: 200,
            default_spec: two_point_09_04,
            runner: run_velocity_cross_check,
        },
        Preset {
            id: "coupling-law",
            description: "coupled and direct walks have the same X_20 law",
            anchor: "epsilon-coin coupling construction",
            budget: minutes(5),
            default_samples: 100_000,
            default_spec: two_point_09_04,
            runner: run_coupling,
        },
        Preset {
            id: "product-structure-cuts",
            description: "X^1 = R_U identity and cut-point velocity of the residual coordinates",
            anchor: "law of large numbers under a product structure",
            budget: minutes(20),
            default_samples: 100,
            default_spec: product_structure,
            runner: run_product_structure,
        },
        Preset {
            id: "stable-scaling",
            description: "interquantile spread of T_n grows like n^(1/s)",
            anchor: "Kesten-Kozlov-Spitzer stable limit",
            budget: minutes(20),
            default_samples: 4000,
            default_spec: two_point_09_04,
            runner: run_stable_scaling,
        },
        Preset {
            id: "rate-ordering",
            description: "product-tilt annealed rate upper bound never exceeds the quenched rate",
            anchor: "quenched and annealed rate functions Lambda(y, lambda)",
            budget: minutes(5),
            default_samples: 20_000,
            default_spec: two_point_09_04,
            runner: run_rate_ordering,
        },
        Preset {
            id: "hitting-time-tail",
            description: "Hill estimate of the tail index of tau_1 against s",
            anchor: "power tail of hitting times with index s",
            budget: minutes(10),
            default_samples: 10_000,
            default_spec: two_point_09_04,
            runner: run_hitting_tail,
        },
        Preset {
            id: "nestling",
            description: "whether zero lies in the convex hull of the local drifts",
            anchor: "nestling and non-nestling environments",
            budget: minutes(1),
            default_samples: 1,
            default_spec: nestling_2d,
            runner: run_nestling,
        },
    ];
    PRESETS
}

pub fn find_preset(id: &str) -> Option<&'static Preset> {
    presets().iter().find(|p| p.id == id)
}

/// One line per preset: id, budget, anchor, description.
pub fn list_presets() -> String {
    let mut out = String::new();
    for p in presets() {
        let _ = writeln!(
            out,
            "{:<24} {:>4} min  {}\n{:<24}            {}",
            p.id,
            p.budget.as_secs().div_ceil(60),
            p.anchor,
            "",
            p.description
        );
    }
    out
}

/// What a config asks to run.
#[derive(Clone, Debug)]
pub enum Target {
    Preset(String),
    Operation(String),
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub target: Target,
    pub seed: u64,
    pub samples: Option<usize>,
    pub out: PathBuf,
    pub spec: Option<EnvironmentSpec>,
    pub parameters: Section,
    /// Canonical text of the inputs, echoed into the manifest.
    echo: String,
}

impl ExperimentConfig {
    /// A preset with its default law and knobs.
    pub fn preset(id: &str, seed: u64, out: impl Into<PathBuf>) -> Result<Self> {
        if find_preset(id).is_none() {
            return Err(RwreError::InvalidParameter(format!(
                "unknown preset `{id}`"
            )));
        }
        Ok(ExperimentConfig {
            target: Target::Preset(id.to_string()),
            seed,
            samples: None,
            out: out.into(),
            spec: None,
            parameters: Section::new("parameters"),
            echo: String::new(),
        }
        .with_echo())
    }

    /// Parses a config file. `seed_override` and `preset_override` take
    /// precedence over the file, so a file may omit them when the flags are set.
    pub fn parse(
        text: &str,
        seed_override: Option<u64>,
        preset_override: Option<&str>,
    ) -> Result<Self> {
        let cfg = Config::parse(text)?;
        let exp = cfg.require_section("experiment")?;
        let target = match (preset_override, exp.get("preset"), exp.get("operation")) {
            (Some(p), _, _) => Target::Preset(p.to_string()),
            (None, Some(p), None) => {
                if find_preset(&p.value).is_none() {
                    return Err(p.error(format!("unknown preset `{}`", p.value)));
                }
                Target::Preset(p.value.clone())
            }
            (None, None, Some(op)) => Target::Operation(op.value.clone()),
            (None, Some(p), Some(_)) => {
                return Err(p.error("give either `preset` or `operation`, not both".into()))
            }
            (None, None, None) => {
                return Err(RwreError::Config {
                    line: exp.line,
                    column: 1,
                    message: "section [experiment] needs `preset` or `operation`".into(),
                })
            }
        };
        if let Target::Preset(p) = &target {
            if find_preset(p).is_none() {
                return Err(RwreError::InvalidParameter(format!("unknown preset `{p}`")));
            }
        }
        let seed = match seed_override {
            Some(s) => s,
            None => exp.require("seed")?.parse()?,
        };
        let samples = match exp.get("samples") {
            Some(e) => {
                let s: usize = e.parse()?;
                if s == 0 {
                    return Err(e.error("samples must be positive".into()));
                }
                Some(s)
            }
            None => None,
        };
        let spec = cfg
            .section("environment")
            .map(EnvironmentSpec::from_section)
            .transpose()?;
        if matches!(target, Target::Operation(_)) && spec.is_none() {
            return Err(RwreError::Config {
                line: exp.line,
                column: 1,
                message: "an `operation` needs an [environment] section".into(),
            });
        }
        let out = match exp.get("out") {
            Some(e) => PathBuf::from(&e.value),
            None => PathBuf::from("results").join(match &target {
                Target::Preset(p) | Target::Operation(p) => p,
            }),
        };
        let parameters = cfg
            .section("parameters")
            .cloned()
            .unwrap_or_else(|| Section::new("parameters"));
        Ok(ExperimentConfig {
            target,
            seed,
            samples,
            out,
            spec,
            parameters,
            echo: String::new(),
        }
        .with_echo())
    }

    pub fn name(&self) -> &str {
        match &self.target {
            Target::Preset(p) | Target::Operation(p) => p,
        }
    }

    fn with_echo(mut self) -> Self {
        let mut s = String::from("[experiment]\n");
        match &self.target {
            Target::Preset(p) => s += &format!("preset = {p}\n"),
            Target::Operation(op) => s += &format!("operation = {op}\n"),
        }
        s += &format!("seed = {}\n", self.seed);
        if let Some(n) = self.samples {
            s += &format!("samples = {n}\n");
        }
        if let Some(spec) = &self.spec {
            s += &format!("environment = {}\n", spec.label());
        }
        if !self.parameters.entries.is_empty() {
            s += "\n[parameters]\n";
            for e in &self.parameters.entries {
                s += &format!("{} = {}\n", e.key, e.value);
            }
        }
        self.echo = s;
        self
    }
}

/// What a run produced.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub name: String,
    pub seed: u64,
    pub config_echo: String,
    pub estimates: Vec<Estimate>,
    pub passed: bool,
    pub criterion: String,
    pub wall_time: Duration,
    pub files: Vec<PathBuf>,
}

impl ExperimentResult {
    /// Process exit code: 0 on pass, 2 on acceptance failure.
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            2
        }
    }
}

/// Runs one experiment and writes `results.csv`, one SVG per plot,
/// `manifest.txt` and `timing.txt` into the output directory.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let start = Instant::now();
    let (outcome, anchor) = match &config.target {
        Target::Preset(id) => {
            let preset = find_preset(id)
                .ok_or_else(|| RwreError::InvalidParameter(format!("unknown preset `{id}`")))?;
            let spec = Arc::new(config.spec.clone().unwrap_or_else(|| preset.default_spec()));
            let ctx = RunContext {
                spec,
                samples: config.samples.unwrap_or(preset.default_samples),
                seed: config.seed,
                parameters: &config.parameters,
            };
            ((preset.runner)(&ctx)?, preset.anchor)
        }
        Target::Operation(op) => {
            let spec = config
                .spec
                .as_ref()
                .expect("operation configs carry a spec");
            (
                run_operation(op, spec, &config.parameters)?,
                "explicit operation",
            )
        }
    };
    let wall_time = start.elapsed();
    fs::create_dir_all(&config.out)?;
    let name = config.name().to_string();
    let mut files = Vec::new();

    let csv = results_csv(&name, config.seed, &outcome.estimates);
    files.push(write_atomic(&config.out.join("results.csv"), &csv)?);
    let mut plot_files = Vec::new();
    for plot in &outcome.plots {
        let file = format!("{}.svg", plot.name);
        files.push(write_atomic(
            &config.out.join(&file),
            &render_svg(plot, &name),
        )?);
        plot_files.push(file);
    }
    let manifest = manifest_text(
        &name,
        config.seed,
        anchor,
        &outcome,
        &plot_files,
        &config.echo,
    );
    files.push(write_atomic(&config.out.join("manifest.txt"), &manifest)?);
    write_atomic(
        &config.out.join("timing.txt"),
        &format!("wall_seconds = {:.3}\n", wall_time.as_secs_f64()),
    )?;

    Ok(ExperimentResult {
        name,
        seed: config.seed,
        config_echo: config.echo.clone(),
        estimates: outcome.estimates,
        passed: outcome.passed,
        criterion: outcome.criterion,
        wall_time,
        files,
    })
}

/// Runs independent experiments on a pool of `jobs` threads; results keep
/// the input order.
pub fn run_many(
    configs: &[ExperimentConfig],
    jobs: usize,
) -> Result<Vec<Result<ExperimentResult>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| RwreError::InvalidParameter(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(|| configs.par_iter().map(run).collect()))
}

fn write_atomic(path: &Path, contents: &str) -> Result<PathBuf> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(path.to_path_buf())
}

pub const RESULTS_HEADER: &str =
    "experiment,seed,module,estimate,n,point,ci_low,ci_high,samples,method,target";

fn results_csv(name: &str, seed: u64, estimates: &[Estimate]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for e in estimates {
        let _ = writeln!(
            out,
            "{name},{seed},{},{},{},{},{},{},{},{},{}",
            e.module,
            e.name,
            e.n.map_or(String::new(), |n| n.to_string()),
            e.value.point,
            e.value.ci_low,
            e.value.ci_high,
            e.value.n_samples,
            e.value.method,
            e.target.map_or(String::new(), |t| t.to_string())
        );
    }
    out
}

fn manifest_text(
    name: &str,
    seed: u64,
    anchor: &str,
    outcome: &Outcome,
    plots: &[String],
    echo: &str,
) -> String {
    let headline = outcome.estimates.last();
    let mut s = String::from("[manifest]\n");
    let _ = writeln!(s, "experiment = {name}");
    let _ = writeln!(s, "seed = {seed}");
    let _ = writeln!(s, "anchor = {anchor}");
    let _ = writeln!(
        s,
        "status = {}",
        if outcome.passed { "pass" } else { "fail" }
    );
    let _ = writeln!(s, "criterion = {}", outcome.criterion.replace('#', "no."));
    if let Some(h) = headline {
        let _ = writeln!(s, "headline = {}", h.name);
        let _ = writeln!(s, "point = {}", h.value.point);
        let _ = writeln!(s, "ci_low = {}", h.value.ci_low);
        let _ = writeln!(s, "ci_high = {}", h.value.ci_high);
    }
    let _ = writeln!(s, "results = results.csv");
    let _ = writeln!(s, "plots = {}", plots.join(", "));
    s += "\n";
    s += echo;
    s
}

/// Hand-written log-log SVG with 95% interval bars.
pub fn render_svg(plot: &Plot, title: &str) -> String {
    let (w, h, left, right, top, bottom) = (560.0, 380.0, 70.0, 20.0, 40.0, 50.0);
    let pts: Vec<(f64, f64, f64, f64)> = plot
        .points
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|&(x, y, lo, hi)| {
            (
                x.log10(),
                y.log10(),
                lo.max(y * 1e-6).log10(),
                hi.max(y).log10(),
            )
        })
        .collect();
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{} : {}</text>\n",
        w / 2.0,
        escape(title),
        escape(&plot.name)
    );
    if pts.is_empty() {
        s += "</svg>\n";
        return s;
    }
    let fold = |f: fn(f64, f64) -> f64, init: f64, g: fn(&(f64, f64, f64, f64)) -> f64| {
        pts.iter().map(g).fold(init, f)
    };
    let (mut x0, mut x1) = (
        fold(f64::min, f64::INFINITY, |p| p.0).floor(),
        fold(f64::max, f64::NEG_INFINITY, |p| p.0).ceil(),
    );
    let (mut y0, mut y1) = (
        fold(f64::min, f64::INFINITY, |p| p.2).floor(),
        fold(f64::max, f64::NEG_INFINITY, |p| p.3).ceil(),
    );
    if x1 <= x0 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    if y1 <= y0 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);
    let _ = writeln!(
        s,
        "<path d=\"M{:.1} {:.1} L{:.1} {:.1} L{:.1} {:.1}\" stroke=\"black\" fill=\"none\"/>",
        px(x0),
        py(y1),
        px(x0),
        py(y0),
        px(x1),
        py(y0)
    );
    for d in (x0 as i64)..=(x1 as i64) {
        let x = px(d as f64);
        let _ = writeln!(
            s,
            "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">1e{d}</text>",
            h - bottom + 16.0
        );
    }
    for d in (y0 as i64)..=(y1 as i64) {
        let y = py(d as f64);
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">1e{d}</text>",
            left - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">n</text>",
        (left + w - right) / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{:.1}\" transform=\"rotate(-90 16 {:.1})\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
        (top + h - bottom) / 2.0,
        (top + h - bottom) / 2.0,
        escape(&plot.y_label)
    );
    let line: Vec<String> = pts
        .iter()
        .map(|p| format!("{:.1},{:.1}", px(p.0), py(p.1)))
        .collect();
    let _ = writeln!(
        s,
        "<polyline points=\"{}\" stroke=\"steelblue\" fill=\"none\"/>",
        line.join(" ")
    );
    for p in &pts {
        let _ = writeln!(
            s,
            "<line x1=\"{0:.1}\" y1=\"{1:.1}\" x2=\"{0:.1}\" y2=\"{2:.1}\" stroke=\"gray\"/>\n<circle cx=\"{0:.1}\" cy=\"{3:.1}\" r=\"3\" fill=\"steelblue\"/>",
            px(p.0),
            py(p.2),
            py(p.3),
            py(p.1)
        );
    }
    s += "</svg>\n";
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// A row of the merged report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub experiment: String,
    pub seed: u64,
    pub status: String,
    pub headline: String,
    pub point: String,
    pub ci_low: String,
    pub ci_high: String,
    pub source: PathBuf,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn csv(&self) -> String {
        let mut out = String::from("experiment,seed,status,headline,point,ci_low,ci_high\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.experiment, r.seed, r.status, r.headline, r.point, r.ci_low, r.ci_high
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        let passed = self.rows.iter().filter(|r| r.status == "pass").count();
        let mut out = format!("{passed} of {} experiments passed\n", self.rows.len());
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<4} {:<24} seed {:<12} {} = {}",
                r.status.to_uppercase(),
                r.experiment,
                r.seed,
                r.headline,
                r.point
            );
        }
        out
    }

    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.status == "pass")
    }
}

/// Collects manifests from files or directories (searched recursively for
/// `manifest.txt`) into one table sorted by experiment and seed.
pub fn report(inputs: &[PathBuf]) -> Result<Report> {
    let mut manifests = Vec::new();
    for p in inputs {
        collect_manifests(p, &mut manifests)?;
    }
    if manifests.is_empty() {
        return Err(RwreError::InvalidParameter(
            "no result manifests found".into(),
        ));
    }
    manifests.sort();
    manifests.dedup();
    let mut rows = Vec::new();
    for path in manifests {
        let text = fs::read_to_string(&path)?;
        let cfg = Config::parse(&text)?;
        let m = cfg.require_section("manifest")?;
        let get = |k: &str| m.get(k).map_or(String::new(), |e| e.value.clone());
        rows.push(ReportRow {
            experiment: m.require("experiment")?.value.clone(),
            seed: m.require("seed")?.parse()?,
            status: m.require("status")?.value.clone(),
            headline: get("headline"),
            point: get("point"),
            ci_low: get("ci_low"),
            ci_high: get("ci_high"),
            source: path,
        });
    }
    rows.sort_by(|a, b| {
        (&a.experiment, a.seed, &a.source).cmp(&(&b.experiment, b.seed, &b.source))
    });
    Ok(Report { rows })
}

fn collect_manifests(path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        entries.sort();
        for e in entries {
            if e.is_dir() {
                collect_manifests(&e, out)?;
            } else if e.file_name().is_some_and(|n| n == "manifest.txt") {
                out.push(e);
            }
        }
        Ok(())
    } else if path.is_file() {
        out.push(path.to_path_buf());
        Ok(())
    } else {
        Err(RwreError::InvalidParameter(format!(
            "no such file or directory: {}",
            path.display()
        )))
    }
}

/// Writes `report.csv` and `summary.txt` into `out`.
pub fn write_report(report: &Report, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    write_atomic(&out.join("report.csv"), &report.csv())?;
    write_atomic(&out.join("summary.txt"), &report.summary())?;
    Ok(())
}

fn normal_ci(point: f64, se: f64, n: usize) -> EstimateWithCI {
    EstimateWithCI::new(
        point,
        point - Z95 * se,
        point + Z95 * se,
        n,
        CiMethod::Normal,
    )
}

fn run_operation(op: &str, spec: &EnvironmentSpec, params: &Section) -> Result<Outcome> {
    let env_seed: u64 = params.parse_or("env_seed", 0)?;
    let env = || Environment::new(spec.clone(), env_seed);
    let value = match op {
        "speed" => speed(spec)?,
        "s_parameter" => s_parameter(spec)?,
        "cramer_rate" => cramer_rate(spec, params.require("y")?.parse()?)?,
        "annealed_expected_tau" => annealed_expected_tau(spec)?
            .finite()
            .unwrap_or(f64::INFINITY),
        "expected_tau" => expected_tau(
            &env(),
            params.parse_or("site", 0)?,
            params.parse_or("tol", 1e-12)?,
        )
        .finite()
        .unwrap_or(f64::INFINITY),
        "exit_probability" => {
            let w = Window::new(
                params.require("m_minus")?.parse()?,
                params.require("m_plus")?.parse()?,
                params.parse_or("z", 0)?,
            )?;
            exit_probability(&env(), w)?
        }
        "classify" => match classify(spec)? {
            crate::exact1d::Classification::TransientRight => 1.0,
            crate::exact1d::Classification::Recurrent => 0.0,
            crate::exact1d::Classification::TransientLeft => -1.0,
        },
        other => {
            return Err(RwreError::InvalidParameter(format!(
                "unknown operation `{other}`"
            )))
        }
    };
    Ok(Outcome {
        estimates: vec![Estimate::new(
            op,
            None,
            EstimateWithCI::exact(value),
            None,
            "exact1d",
        )],
        passed: true,
        criterion: "exact computation completed".into(),
        plots: Vec::new(),
    })
}

fn run_speed(ctx: &RunContext) -> Result<Outcome> {
    let steps: u64 = ctx.param("steps", 100_000)?;
    let tol: f64 = ctx.param("tolerance", 0.01)?;
    let target = speed(&ctx.spec)?;
    let ends = annealed_endpoints_1d(&ctx.spec, steps, ctx.samples, ctx.seed);
    let d: Vec<f64> = ends.iter().map(|&x| x as f64).collect();
    let v = velocity_from_displacements(&d, steps, ctx.seed)?;
    Ok(Outcome {
        passed: (v.point - target).abs() < tol,
        criterion: format!("|velocity - {target:.6}| < {tol}"),
        estimates: vec![
            Estimate::new(
                "exact_speed",
                None,
                EstimateWithCI::exact(target),
                None,
                "exact1d",
            ),
            Estimate::new("velocity", Some(steps), v, Some(target), "stats"),
        ],
        plots: Vec::new(),
    })
}

fn run_zero_speed(ctx: &RunContext) -> Result<Outcome> {
    let steps: u64 = ctx.param("steps", 1_000_000)?;
    let ends = annealed_endpoints_1d(&ctx.spec, steps, ctx.samples, ctx.seed);
    let d: Vec<f64> = ends.iter().map(|&x| x as f64).collect();
    let v = velocity_from_displacements(&d, steps, ctx.seed)?;
    let positive = proportion(ends.iter().filter(|&&x| x > 0).count(), ends.len());
    Ok(Outcome {
        passed: v.point.abs() < 0.005 && positive.point >= 0.95,
        criterion: "|velocity| < 0.005 and at least 95% of endpoints positive".into(),
        estimates: vec![
            Estimate::new("positive_fraction", Some(steps), positive, None, "stats"),
            Estimate::new("velocity", Some(steps), v, Some(0.0), "stats"),
        ],
        plots: Vec::new(),
    })
}

fn run_exit_probability(ctx: &RunContext) -> Result<Outcome> {
    let instances: u64 = ctx.param("instances", 20)?;
    let m_minus: i64 = ctx.param("m_minus", 5)?;
    let m_plus: i64 = ctx.param("m_plus", 5)?;
    let w = Window::new(m_minus, m_plus, ctx.param("z", 0)?)?;
    let mut estimates = Vec::new();
    let mut worst: f64 = 0.0;
    for k in 0..instances {
        let (env_seed, walk_seed) = split_walker(ctx.seed, k);
        let env = Environment::new(Arc::clone(&ctx.spec), env_seed);
        let p = exit_probability(&env, w)?;
        let hits = count_left_exits(&env, w, ctx.samples, walk_seed);
        let se = (p * (1.0 - p) / ctx.samples as f64).sqrt().max(1e-12);
        worst = worst.max((hits as f64 / ctx.samples as f64 - p).abs() / se);
        estimates.push(Estimate::new(
            "left_exit",
            Some(k),
            proportion(hits, ctx.samples),
            Some(p),
            "walk",
        ));
    }
    estimates.push(Estimate::new(
        "max_standard_errors",
        None,
        EstimateWithCI::exact(worst),
        None,
        "stats",
    ));
    Ok(Outcome {
        passed: worst < 4.0,
        criterion: "Monte Carlo within 4 binomial standard errors on every instance".into(),
        estimates,
        plots: Vec::new(),
    })
}

fn run_periodic_hitting(ctx: &RunContext) -> Result<Outcome> {
    let env = Environment::new(Arc::clone(&ctx.spec), ctx.seed);
    let period: usize = ctx.param("period", 2)?;
    let t = run_quenched(&env, &[0], ctx.samples, ctx.seed);
    let h = hitting_times(&t, &[1]);
    let mut estimates = Vec::new();
    let mut passed = true;
    for phase in 0..period {
        let exact = expected_tau(&env, phase as i64, 1e-14)
            .finite()
            .ok_or_else(|| RwreError::Precondition("mean crossing time is infinite".into()))?;
        let xs: Vec<f64> = h
            .tau
            .iter()
            .skip(phase)
            .step_by(period)
            .map(|&v| v as f64)
            .collect();
        let m = crate::numeric::mean(&xs);
        let se = (crate::numeric::variance(&xs) / xs.len() as f64).sqrt();
        passed &= (m - exact).abs() < 3.0 * se;
        estimates.push(Estimate::new(
            "exact_tau",
            Some(phase as u64),
            EstimateWithCI::exact(exact),
            None,
            "exact1d",
        ));
        estimates.push(Estimate::new(
            "mc_tau",
            Some(phase as u64),
            normal_ci(m, se, xs.len()),
            Some(exact),
            "walk",
        ));
    }
    Ok(Outcome {
        passed,
        criterion: "Monte Carlo mean crossing time within 3 sigma of the series at every phase"
            .into(),
        estimates,
        plots: Vec::new(),
    })
}

fn run_s_parameter(ctx: &RunContext) -> Result<Outcome> {
    let root = s_parameter(&ctx.spec)?;
    let rate = s_from_rate(&ctx.spec)?;
    Ok(Outcome {
        passed: (root - rate).abs() < 1e-6,
        criterion: "root and rate minimum agree to 1e-6".into(),
        estimates: vec![
            Estimate::new(
                "s_from_rate",
                None,
                EstimateWithCI::exact(rate),
                Some(root),
                "exact1d",
            ),
            Estimate::new("s_root", None, EstimateWithCI::exact(root), None, "exact1d"),
        ],
        plots: Vec::new(),
    })
}

fn run_annealed_slowdown(ctx: &RunContext) -> Result<Outcome> {
    let grid: Vec<u64> = ctx.list("grid", &[250, 500, 1000, 2000])?;
    let fit = slowdown_exponent_annealed(
        &ctx.spec,
        ctx.param("w", 0.0)?,
        ctx.param("delta", 0.025)?,
        &grid,
        ctx.samples,
        ctx.seed,
    )?;
    let mut estimates: Vec<Estimate> = fit
        .points
        .iter()
        .map(|p| {
            Estimate::new(
                "slowdown_probability",
                Some(p.n),
                p.probability,
                None,
                "stats",
            )
        })
        .collect();
    let plot = Plot::from_estimates("slowdown_probability", "P(X_n/n near w)", &estimates);
    estimates.push(Estimate::new(
        "slope",
        None,
        normal_ci(fit.fit.slope, fit.fit.slope_se, grid.len()),
        Some(fit.target),
        "stats",
    ));
    Ok(Outcome {
        passed: (fit.fit.slope - fit.target).abs() < 0.25,
        criterion: format!("slope within 0.25 of 1 - s = {:.4}", fit.target),
        estimates,
        plots: vec![plot],
    })
}

fn run_quenched_slowdown(ctx: &RunContext) -> Result<Outcome> {
    let grid: Vec<u64> = ctx.list("grid", &[1000, 2000, 4000, 8000])?;
    let (w, delta, eta) = (
        ctx.param("w", 0.0)?,
        ctx.param("delta", 0.025)?,
        ctx.param("eta", 0.3)?,
    );
    // single environments fluctuate strongly; summarize by the median exponent
    let per_env = (0..ctx.samples as u64)
        .map(|k| {
            let env = Environment::new(Arc::clone(&ctx.spec), split_walker(ctx.seed, k).0);
            slowdown_quenched_diagnostic(&env, w, delta, &grid, eta)
        })
        .collect::<Result<Vec<_>>>()?;
    let bracket = per_env[0].bracket;
    let quartiles = |mut xs: Vec<f64>| {
        xs.sort_by(f64::total_cmp);
        let q = |p| crate::numeric::quantile_sorted(&xs, p);
        EstimateWithCI::new(q(0.5), q(0.25), q(0.75), xs.len(), CiMethod::Quartiles)
    };
    let mut estimates: Vec<Estimate> = grid
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let p = quartiles(per_env.iter().map(|q| q.probabilities[i].1).collect());
            Estimate::new("slowdown_probability", Some(n), p, None, "walk")
        })
        .collect();
    let plot = Plot::from_estimates(
        "quenched_slowdown_probability",
        "P_omega(X_n/n near w), median over environments",
        &estimates,
    );
    let monotone = per_env.iter().filter(|q| q.nonincreasing).count();
    estimates.push(Estimate::new(
        "nonincreasing_fraction",
        None,
        proportion(monotone, per_env.len()),
        None,
        "stats",
    ));
    let exponent = quartiles(per_env.iter().map(|q| q.stretched.slope).collect());
    let mid = (bracket.0 + bracket.1) / 2.0;
    estimates.push(Estimate::new(
        "stretched_exponent",
        None,
        exponent,
        Some(mid),
        "stats",
    ));
    Ok(Outcome {
        passed: exponent.point >= bracket.0 && exponent.point <= bracket.1,
        criterion: format!(
            "median stretched exponent inside ({:.4}, {:.4})",
            bracket.0, bracket.1
        ),
        estimates,
        plots: vec![plot],
    })
}

fn run_aging(ctx: &RunContext) -> Result<Outcome> {
    let h: f64 = ctx.param("h", 2.0)?;
    let eta: f64 = ctx.param("eta", 0.5)?;
    let n_big: u64 = ctx.param("n", 10_000)?;
    let n_small: u64 = ctx.param("n_small", 100)?;
    let small = aging_correlator(&ctx.spec, n_small, h, eta, ctx.samples, ctx.seed)?;
    let big = aging_correlator(
        &ctx.spec,
        n_big,
        h,
        eta,
        ctx.samples,
        ctx.seed.wrapping_add(1),
    )?;
    let target = big.formula;
    let (d_big, d_small) = (
        (big.estimate.point - target).abs(),
        (small.estimate.point - target).abs(),
    );
    Ok(Outcome {
        passed: d_big < 0.1 && d_big < d_small,
        criterion: format!(
            "within 0.1 of {target:.6} at n = {n_big} and closer than at n = {n_small}"
        ),
        estimates: vec![
            Estimate::new(
                "aging",
                Some(n_small),
                small.estimate,
                Some(target),
                "stats",
            ),
            Estimate::new("aging", Some(n_big), big.estimate, Some(target), "stats"),
        ],
        plots: Vec::new(),
    })
}

fn run_localization(ctx: &RunContext) -> Result<Outcome> {
    let grid: Vec<u64> = ctx.list("grid", &[100, 1000, 10_000])?;
    let pts = sinai_localization(
        &ctx.spec,
        &grid,
        ctx.param("eta", 0.5)?,
        ctx.samples,
        ctx.seed,
    )?;
    let estimates: Vec<Estimate> = pts
        .iter()
        .map(|p| Estimate::new("localized_fraction", Some(p.n), p.fraction, None, "stats"))
        .collect();
    let (a, b) = (pts[0].fraction, pts[pts.len() - 1].fraction);
    let sep = (b.point - a.point) / (a.std_error().powi(2) + b.std_error().powi(2)).sqrt();
    let plot = Plot::from_estimates("localized_fraction", "fraction near B_n", &estimates);
    Ok(Outcome {
        passed: sep > 3.0,
        criterion: "fraction at the largest n exceeds the smallest by 3 sigma".into(),
        estimates,
        plots: vec![plot],
    })
}

fn run_regeneration(ctx: &RunContext) -> Result<Outcome> {
    let env = Environment::new(Arc::clone(&ctx.spec), ctx.seed);
    let n = ctx.samples;
    let t = run_quenched(&env, &[0], n, ctx.seed);
    let d = regeneration_times(&t, &[1], n)?;
    let report = slabs_iid_check(&d, ctx.seed)?;
    let v = lln_via_regeneration(std::slice::from_ref(&d), ctx.seed)?;
    let target = speed(&ctx.spec).ok();
    Ok(Outcome {
        passed: report.passed && target.is_none_or(|t| v.contains(t)),
        criterion: "slabs pass the lag-1 independence test and the CI contains the speed".into(),
        estimates: vec![
            Estimate::new(
                "slab_count",
                None,
                EstimateWithCI::exact(d.usable_slabs().count() as f64),
                None,
                "regen",
            ),
            Estimate::new(
                "independence_p_duration",
                None,
                EstimateWithCI::exact(report.p_values[0]),
                None,
                "stats",
            ),
            Estimate::new(
                "independence_p_displacement",
                None,
                EstimateWithCI::exact(report.p_values[1]),
                None,
                "stats",
            ),
            Estimate::new("regeneration_velocity", Some(n as u64), v, target, "regen"),
        ],
        plots: Vec::new(),
    })
}

fn run_velocity_cross_check(ctx: &RunContext) -> Result<Outcome> {
    let steps: usize = ctx.param("steps", 20_000)?;
    let runs = map_annealed(&ctx.spec, ctx.samples, ctx.seed, |_, env, ws| {
        let t = run_quenched(env, &[0], steps, ws);
        let end = t.endpoint()[0] as f64;
        regeneration_times(&t, &[1], steps).map(|d| (end, d))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let ends: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let decomps: Vec<_> = runs.into_iter().map(|r| r.1).collect();
    let direct = velocity_from_displacements(&ends, steps as u64, ctx.seed)?;
    let regen = lln_via_regeneration(&decomps, ctx.seed)?;
    let exact = annealed_expected_tau(&ctx.spec)?.finite().map(|t| 1.0 / t);
    let tau_samples: usize = ctx.param("tau_samples", 20_000)?;
    let (taus, censored) = annealed_tau_samples(
        &ctx.spec,
        tau_samples,
        ctx.param("cap", 10_000_000)?,
        ctx.seed,
    );
    if censored > 0 {
        return Err(RwreError::Precondition(format!(
            "{censored} crossing times censored"
        )));
    }
    let m = bootstrap_mean(&taus, ctx.seed);
    let inverse = EstimateWithCI::new(
        1.0 / m.point,
        1.0 / m.ci_high,
        1.0 / m.ci_low,
        m.n_samples,
        m.method,
    );
    Ok(Outcome {
        passed: direct.overlaps(&regen) && direct.overlaps(&inverse) && regen.overlaps(&inverse),
        criterion: "direct, regeneration and 1/mean(tau) intervals overlap pairwise".into(),
        estimates: vec![
            Estimate::new("inverse_mean_tau", None, inverse, exact, "stats"),
            Estimate::new(
                "regeneration_velocity",
                Some(steps as u64),
                regen,
                exact,
                "regen",
            ),
            Estimate::new(
                "direct_velocity",
                Some(steps as u64),
                direct,
                exact,
                "stats",
            ),
        ],
        plots: Vec::new(),
    })
}

fn run_coupling(ctx: &RunContext) -> Result<Outcome> {
    let steps: usize = ctx.param("steps", 20)?;
    let eps: f64 = ctx.param("epsilon", 0.2)?;
    let dim = ctx.spec.dimension();
    let env = Environment::new(Arc::clone(&ctx.spec), ctx.seed);
    let params = CouplingParams::new(eps, dim)?;
    let origin = vec![0; dim];
    let runs = ctx.samples as u64;
    let direct: Vec<Vec<i64>> = (0..runs)
        .map(|s| run_quenched(&env, &origin, steps, s).endpoint().to_vec())
        .collect();
    let coupled = (0..runs)
        .map(|s| run_coupled(&env, params, steps, runs + s).map(|t| t.endpoint().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let r = distribution_equality_test(&coupled, &direct)?;
    Ok(Outcome {
        passed: r.p_value > 0.01,
        criterion: "chi-square p-value above 0.01".into(),
        estimates: vec![
            Estimate::new(
                "chi_square",
                Some(steps as u64),
                EstimateWithCI::exact(r.statistic),
                None,
                "stats",
            ),
            Estimate::new(
                "p_value",
                Some(steps as u64),
                EstimateWithCI::exact(r.p_value),
                None,
                "stats",
            ),
        ],
        plots: Vec::new(),
    })
}

fn run_product_structure(ctx: &RunContext) -> Result<Outcome> {
    let n: usize = ctx.param("steps", 100_000)?;
    let margin: usize = ctx.param("margin", 1000)?;
    let dim = ctx.spec.dimension();
    let mut dir = vec![0i64; dim];
    dir[dim - 1] = 1;
    let per_walker = map_annealed(
        &ctx.spec,
        ctx.samples,
        ctx.seed,
        |_, env, ws| -> Result<_> {
            let t = run_theorem2(env, n, ws)?;
            let identity = t.check_invariants().is_ok();
            let cuts = cut_times_of_trajectory(&t, margin)?;
            let (num, den) = cut_increments(&t, &cuts, &dir)?;
            Ok((identity, t.endpoint()[dim - 1] as f64, num, den))
        },
    )
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let identity = per_walker.iter().all(|w| w.0);
    let ends: Vec<f64> = per_walker.iter().map(|w| w.1).collect();
    let direct = velocity_from_displacements(&ends, n as u64, ctx.seed)?;
    let num: Vec<f64> = per_walker
        .iter()
        .flat_map(|w| w.2.iter().copied())
        .collect();
    let den: Vec<f64> = per_walker
        .iter()
        .flat_map(|w| w.3.iter().copied())
        .collect();
    let cut = cut_velocity(&num, &den, ctx.seed)?;
    Ok(Outcome {
        passed: identity && direct.overlaps(&cut.estimate),
        criterion: "identity X^1 = R_U on every path and overlapping velocity CIs".into(),
        estimates: vec![
            Estimate::new(
                "identity_holds",
                None,
                EstimateWithCI::exact(identity as u8 as f64),
                None,
                "walk",
            ),
            Estimate::new("direct_velocity", Some(n as u64), direct, None, "stats"),
            Estimate::new(
                "cut_velocity",
                Some(n as u64),
                cut.estimate,
                Some(direct.point),
                "regen",
            ),
        ],
        plots: Vec::new(),
    })
}

fn run_stable_scaling(ctx: &RunContext) -> Result<Outcome> {
    let grid: Vec<u64> = ctx.list("grid", &[1000, 1778, 3162, 5623, 10_000])?;
    let fit = stable_scaling(&ctx.spec, &grid, ctx.samples, ctx.seed)?;
    let mut estimates: Vec<Estimate> = fit
        .spreads
        .iter()
        .map(|&(n, s)| {
            Estimate::new(
                "interquantile_spread",
                Some(n),
                EstimateWithCI::exact(s),
                None,
                "stats",
            )
        })
        .collect();
    let plot = Plot::from_estimates("interquantile_spread", "q0.9 - q0.1 of T_n", &estimates);
    estimates.push(Estimate::new(
        "slope",
        None,
        normal_ci(fit.fit.slope, fit.fit.slope_se, grid.len()),
        Some(fit.target),
        "stats",
    ));
    Ok(Outcome {
        passed: (fit.fit.slope - fit.target).abs() < 0.1,
        criterion: format!("slope within 0.1 of {:.4}", fit.target),
        estimates,
        plots: vec![plot],
    })
}

fn run_rate_ordering(ctx: &RunContext) -> Result<Outcome> {
    let ws: Vec<f64> = ctx.list("w", &[0.02, 0.05, 0.08])?;
    let tilts: Vec<f64> = ctx.list("tilts", &[0.3, 0.4, 0.45, 0.55])?;
    let env = Environment::new(Arc::clone(&ctx.spec), ctx.seed);
    let mut estimates = Vec::new();
    let mut passed = true;
    for w in ws {
        let q = quenched_rate_slowdown(&env, w, ctx.samples)?.value;
        let a = annealed_rate_upper(&ctx.spec, w, &tilts, ctx.seed, ctx.samples)?
            .sample
            .value;
        passed &= a <= q + 1e-9;
        estimates.push(Estimate::new(
            &format!("quenched_rate_w{w}"),
            None,
            EstimateWithCI::exact(q),
            None,
            "exact1d",
        ));
        estimates.push(Estimate::new(
            &format!("annealed_upper_w{w}"),
            None,
            EstimateWithCI::exact(a),
            Some(q),
            "exact1d",
        ));
    }
    Ok(Outcome {
        passed,
        criterion: "annealed upper bound <= quenched rate at every w".into(),
        estimates,
        plots: Vec::new(),
    })
}

fn run_hitting_tail(ctx: &RunContext) -> Result<Outcome> {
    let cap: u64 = ctx.param("cap", 10_000_000)?;
    let tol: f64 = ctx.param("tolerance", 0.3)?;
    let s = s_parameter(&ctx.spec)?;
    let (samples, censored) = annealed_tau_samples(&ctx.spec, ctx.samples, cap, ctx.seed);
    let tail = tail_index(&samples, ctx.param("k_fraction", 0.05)?)?;
    let mut estimates: Vec<Estimate> = tail
        .sweep
        .iter()
        .map(|(k, e)| Estimate::new(&format!("hill_top_{k}"), None, *e, Some(s), "stats"))
        .collect();
    estimates.push(Estimate::new(
        "censored",
        None,
        EstimateWithCI::exact(censored as f64),
        None,
        "walk",
    ));
    estimates.push(Estimate::new(
        "light_tail_flag",
        None,
        EstimateWithCI::exact(tail.light_tail_suspected as u8 as f64),
        None,
        "stats",
    ));
    estimates.push(Estimate::new(
        "tail_index",
        None,
        tail.estimate,
        Some(s),
        "stats",
    ));
    Ok(Outcome {
        passed: (tail.estimate.point - s).abs() < tol,
        criterion: format!("Hill estimate within {tol} of s = {s:.4}"),
        estimates,
        plots: Vec::new(),
    })
}

fn run_nestling(ctx: &RunContext) -> Result<Outcome> {
    let expect: bool = ctx.param("expect", true)?;
    let nestling = is_nestling(&ctx.spec);
    let drifts = drift_support(&ctx.spec);
    Ok(Outcome {
        passed: nestling == expect,
        criterion: format!("nestling classification equals {expect}"),
        estimates: vec![
            Estimate::new(
                "drift_support_size",
                None,
                EstimateWithCI::exact(drifts.len() as f64),
                None,
                "env",
            ),
            Estimate::new(
                "nestling",
                None,
                EstimateWithCI::exact(nestling as u8 as f64),
                None,
                "env",
            ),
        ],
        plots: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn catalog_shape() {
        let ps = presets();
        assert!(ps.len() >= 12);
        let ids: HashSet<_> = ps.iter().map(|p| p.id).collect();
        assert_eq!(ids.len(), ps.len());
        for p in ps {
            assert!(!p.anchor.is_empty());
            assert!(p.budget <= minutes(30));
            assert!(p.default_samples > 0);
            p.default_spec();
        }
        assert!(list_presets().contains("solomon-speed"));
    }

    #[test]
    fn seed_is_required() {
        let err = ExperimentConfig::parse("[experiment]\npreset = solomon-speed\n", None, None)
            .unwrap_err();
        assert!(matches!(err, RwreError::Config { line: 1, .. }));
        assert!(
            ExperimentConfig::parse("[experiment]\npreset = solomon-speed\n", Some(3), None)
                .is_ok()
        );
    }

    #[test]
    fn missing_spec_key_points_at_section() {
        let text =
            "[experiment]\npreset = solomon-speed\nseed = 1\n\n[environment]\nkind = constant\n";
        match ExperimentConfig::parse(text, None, None).unwrap_err() {
            RwreError::Config {
                line,
                column,
                message,
            } => {
                assert_eq!((line, column), (5, 1));
                assert!(message.contains("value"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_preset_and_zero_samples_rejected() {
        let err = ExperimentConfig::parse("[experiment]\npreset = nope\nseed = 1\n", None, None)
            .unwrap_err();
        assert!(matches!(
            err,
            RwreError::Config {
                line: 2,
                column: 10,
                ..
            }
        ));
        let err = ExperimentConfig::parse(
            "[experiment]\npreset = s-parameter\nseed = 1\nsamples = 0\n",
            None,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, RwreError::Config { line: 4, .. }));
    }

    #[test]
    fn svg_is_well_formed() {
        let plot = Plot {
            name: "p".into(),
            y_label: "y<1".into(),
            points: vec![(10.0, 0.5, 0.4, 0.6), (100.0, 0.1, 0.05, 0.2)],
        };
        let s = render_svg(&plot, "t");
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("y&lt;1"));
        assert_eq!(s.matches("<circle").count(), 2);
    }
}
