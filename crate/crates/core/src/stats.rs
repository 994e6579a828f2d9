//! Estimators confronting simulations with limit theorems.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::env::{Environment, EnvironmentSpec};
use crate::error::{Result, RwreError};
use crate::exact1d::{classify, s_parameter, sinai_valley, speed, Classification};
use crate::numeric::{lag1_autocorrelation, linear_fit, mean, quantile_sorted, variance};
use crate::regen::RegenerationDecomposition;
use crate::rng::{keyed_hash, tag, WalkRng};
use crate::walk::{map_annealed, quenched_distribution, BlockWalker1d, Trajectory, Walker1d};

/// Bootstrap resamples behind every percentile interval.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
/// Two-sided normal quantile of the 95% intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CiMethod {
    Bootstrap,
    Normal,
    Wilson,
    Exact,
    /// Interquartile range of a sample of estimates.
    Quartiles,
}

impl fmt::Display for CiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CiMethod::Bootstrap => "bootstrap",
            CiMethod::Normal => "normal",
            CiMethod::Wilson => "wilson",
            CiMethod::Exact => "exact",
            CiMethod::Quartiles => "quartiles",
        })
    }
}

/// A point estimate with a 95% interval, `ci_low ≤ point ≤ ci_high`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateWithCI {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_samples: usize,
    pub method: CiMethod,
}

impl EstimateWithCI {
    pub fn new(point: f64, low: f64, high: f64, n_samples: usize, method: CiMethod) -> Self {
        EstimateWithCI {
            point,
            ci_low: low.min(point),
            ci_high: high.max(point),
            n_samples,
            method,
        }
    }

    pub fn exact(value: f64) -> Self {
        Self::new(value, value, value, 0, CiMethod::Exact)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }

    pub fn overlaps(&self, other: &EstimateWithCI) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }

    /// Half-width of the interval read as a normal one.
    pub fn std_error(&self) -> f64 {
        (self.ci_high - self.ci_low) / (2.0 * Z95)
    }
}

impl fmt::Display for EstimateWithCI {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.6} [{:.6}, {:.6}] (n={}, {})",
            self.point, self.ci_low, self.ci_high, self.n_samples, self.method
        )
    }
}

fn resample_rng(seed: u64) -> WalkRng {
    WalkRng::seed_from_u64(keyed_hash(seed, &[tag::RESAMPLE]))
}

fn percentile_interval(mut values: Vec<f64>) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    (
        quantile_sorted(&values, 0.025),
        quantile_sorted(&values, 0.975),
    )
}

/// Mean with a percentile bootstrap interval.
pub fn bootstrap_mean(samples: &[f64], seed: u64) -> EstimateWithCI {
    let n = samples.len();
    let point = mean(samples);
    let mut rng = resample_rng(seed);
    let reps: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    let (lo, hi) = percentile_interval(reps);
    EstimateWithCI::new(point, lo, hi, n, CiMethod::Bootstrap)
}

/// `Σ num / Σ den` with a bootstrap interval resampling pairs.
pub fn ratio_estimate(num: &[f64], den: &[f64], seed: u64) -> EstimateWithCI {
    assert_eq!(num.len(), den.len());
    let n = num.len();
    let point = num.iter().sum::<f64>() / den.iter().sum::<f64>();
    let mut rng = resample_rng(seed);
    let reps: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let (a, b) = (0..n).fold((0.0, 0.0), |(a, b), _| {
                let i = rng.random_range(0..n);
                (a + num[i], b + den[i])
            });
            a / b
        })
        .collect();
    let (lo, hi) = percentile_interval(reps);
    EstimateWithCI::new(point, lo, hi, n, CiMethod::Bootstrap)
}

/// Wilson score interval for a binomial proportion.
pub fn proportion(successes: usize, trials: usize) -> EstimateWithCI {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z95 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    EstimateWithCI::new(
        p,
        (centre - half).max(0.0),
        (centre + half).min(1.0),
        trials,
        CiMethod::Wilson,
    )
}

fn require_samples(what: &'static str, needed: usize, got: usize) -> Result<()> {
    if got < needed {
        return Err(RwreError::InsufficientData { what, needed, got });
    }
    Ok(())
}

/// Lag-1 autocorrelation of each series with a permutation p-value.
#[derive(Clone, Debug, PartialEq)]
pub struct IndependenceReport {
    pub autocorrelations: Vec<f64>,
    pub p_values: Vec<f64>,
    /// Per-series level after the Bonferroni split of `level`.
    pub series_level: f64,
    pub level: f64,
    pub passed: bool,
}

/// Number of permutations behind each independence p-value.
pub const PERMUTATIONS: usize = 999;

/// Tests every series for lag-1 dependence; the overall level is split
/// evenly across the series.
pub fn independence_test(series: &[&[f64]], level: f64, seed: u64) -> IndependenceReport {
    let series_level = level / series.len() as f64;
    let mut autocorrelations = Vec::new();
    let mut p_values = Vec::new();
    for (k, xs) in series.iter().enumerate() {
        let observed = lag1_autocorrelation(xs);
        let mut rng = WalkRng::seed_from_u64(keyed_hash(seed, &[tag::PERMUTE, k as u64]));
        let mut buf = xs.to_vec();
        let mut exceed = 0;
        for _ in 0..PERMUTATIONS {
            for i in (1..buf.len()).rev() {
                buf.swap(i, rng.random_range(0..=i));
            }
            if lag1_autocorrelation(&buf).abs() >= observed.abs() {
                exceed += 1;
            }
        }
        autocorrelations.push(observed);
        p_values.push((1 + exceed) as f64 / (1 + PERMUTATIONS) as f64);
    }
    let passed = p_values.iter().all(|&p| p > series_level);
    IndependenceReport {
        autocorrelations,
        p_values,
        series_level,
        level,
        passed,
    }
}

/// Velocity `X_N · ℓ / N` averaged over at least 30 trajectories.
pub fn velocity(
    trajectories: &[Trajectory],
    direction: &[i64],
    seed: u64,
) -> Result<EstimateWithCI> {
    let displacements: Vec<f64> = trajectories
        .iter()
        .map(|t| {
            let z: i64 = t
                .endpoint()
                .iter()
                .zip(t.position(0))
                .zip(direction)
                .map(|((a, b), l)| (a - b) * l)
                .sum();
            z as f64
        })
        .collect();
    let n = trajectories.first().map(|t| t.steps()).unwrap_or(0);
    velocity_from_displacements(&displacements, n as u64, seed)
}

/// Velocity from endpoint displacements after `n` steps.
pub fn velocity_from_displacements(
    displacements: &[f64],
    n: u64,
    seed: u64,
) -> Result<EstimateWithCI> {
    require_samples("velocity", 30, displacements.len())?;
    let v: Vec<f64> = displacements.iter().map(|d| d / n as f64).collect();
    Ok(bootstrap_mean(&v, seed))
}

/// A least-squares slope over a grid of `(log n, statistic)` points.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentFit {
    /// `(x, y)` pairs actually fitted.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub residual_norm: f64,
    /// Standard error of the slope from the residuals.
    pub slope_se: f64,
}

impl ExponentFit {
    pub fn fit(points: Vec<(f64, f64)>) -> Result<Self> {
        require_samples("exponent fit", 4, points.len())?;
        let x: Vec<f64> = points.iter().map(|p| p.0).collect();
        let y: Vec<f64> = points.iter().map(|p| p.1).collect();
        let (slope, intercept, residual_norm) = linear_fit(&x, &y);
        if !slope.is_finite() {
            return Err(RwreError::Precondition("fitted slope is not finite".into()));
        }
        let mx = mean(&x);
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        let slope_se = (residual_norm.powi(2) / (x.len() as f64 - 2.0) / sxx).sqrt();
        Ok(ExponentFit {
            points,
            slope,
            intercept,
            residual_norm,
            slope_se,
        })
    }
}

/// Hill estimate of a tail index with its sensitivity sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct TailIndex {
    pub estimate: EstimateWithCI,
    pub k_fraction: f64,
    /// Estimates at the top 10%, 5% and 2% order statistics.
    pub sweep: Vec<(f64, EstimateWithCI)>,
    /// Estimates grow markedly as fewer order statistics are used, which
    /// indicates a tail lighter than any power law.
    pub light_tail_suspected: bool,
}

/// Sensitivity fractions of the Hill sweep.
pub const HILL_SWEEP: [f64; 3] = [0.10, 0.05, 0.02];

fn hill(sorted_desc: &[f64], k: usize) -> EstimateWithCI {
    let threshold = sorted_desc[k];
    let s: f64 = sorted_desc[..k].iter().map(|x| (x / threshold).ln()).sum();
    let alpha = k as f64 / s;
    let half = Z95 * alpha / (k as f64).sqrt();
    EstimateWithCI::new(alpha, alpha - half, alpha + half, k, CiMethod::Normal)
}

/// Hill estimator on the top `k_fraction` of at least 1000 positive samples.
pub fn tail_index(samples: &[f64], k_fraction: f64) -> Result<TailIndex> {
    require_samples("tail index", 1000, samples.len())?;
    if !(k_fraction > 0.0 && k_fraction < 0.5) {
        return Err(RwreError::InvalidParameter(format!(
            "k fraction {k_fraction} outside (0, 0.5)"
        )));
    }
    if samples.iter().any(|&x| !(x > 0.0)) {
        return Err(RwreError::InvalidParameter(
            "tail samples must be positive".into(),
        ));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k_of = |f: f64| ((f * sorted.len() as f64).round() as usize).max(2);
    let estimate = hill(&sorted, k_of(k_fraction));
    let sweep: Vec<(f64, EstimateWithCI)> = HILL_SWEEP
        .iter()
        .map(|&f| (f, hill(&sorted, k_of(f))))
        .collect();
    let increasing = sweep.windows(2).all(|w| w[1].1.point > w[0].1.point);
    let last = sweep[sweep.len() - 1].1;
    let light_tail_suspected = increasing && last.point - sweep[0].1.point > 2.0 * last.std_error();
    Ok(TailIndex {
        estimate,
        k_fraction,
        sweep,
        light_tail_suspected,
    })
}

/// Annealed samples of `τ_0`, the time to first reach `+1`; walkers still
/// below after `cap` steps are counted as censored and left out.
pub fn annealed_tau_samples(
    spec: &Arc<EnvironmentSpec>,
    samples: usize,
    cap: u64,
    seed: u64,
) -> (Vec<f64>, usize) {
    let times = map_annealed(spec, samples, seed, |_, env, ws| {
        Walker1d::new(env, 0, ws).run_until_level(1, cap)
    });
    let censored = times.iter().filter(|t| t.is_none()).count();
    (
        times.into_iter().flatten().map(|t| t as f64).collect(),
        censored,
    )
}

/// One grid point of a probability-decay experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayPoint {
    pub n: u64,
    pub probability: EstimateWithCI,
}

/// Annealed slowdown: decay of `ℙ(X_n/n ∈ (w − δ, w + δ))` against `1 − s`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlowdownFit {
    pub points: Vec<DecayPoint>,
    /// Slope of `log p̂_n` against `log n`.
    pub fit: ExponentFit,
    pub target: f64,
    pub warnings: Vec<String>,
}

fn require_ballistic(spec: &EnvironmentSpec, w: f64, delta: f64) -> Result<f64> {
    let v = speed(spec)?;
    if !(v > 0.0) {
        return Err(RwreError::Precondition(
            "slowdown needs a positive speed".into(),
        ));
    }
    if !(w >= 0.0 && w < v) {
        return Err(RwreError::Precondition(format!(
            "slowdown needs 0 <= w < v = {v}, got w = {w}"
        )));
    }
    if !(delta > 0.0) {
        return Err(RwreError::InvalidParameter(format!(
            "window half-width {delta} must be positive"
        )));
    }
    Ok(v)
}

fn check_grid(n_grid: &[u64]) -> Result<()> {
    if n_grid.len() < 4 || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] == 0 {
        return Err(RwreError::InvalidParameter(
            "grid needs at least 4 strictly increasing positive sizes".into(),
        ));
    }
    Ok(())
}

/// Monte Carlo estimate of the annealed slowdown probabilities. Each walker
/// runs to the largest grid size and is checked at every grid size.
pub fn slowdown_exponent_annealed(
    spec: &Arc<EnvironmentSpec>,
    w: f64,
    delta: f64,
    n_grid: &[u64],
    samples: usize,
    seed: u64,
) -> Result<SlowdownFit> {
    require_ballistic(spec, w, delta)?;
    check_grid(n_grid)?;
    let s = s_parameter(spec)?;
    if !(s > 1.0 && s.is_finite()) {
        return Err(RwreError::Precondition(format!(
            "annealed slowdown exponent needs 1 < s < inf, got {s}"
        )));
    }
    let grid = n_grid.to_vec();
    let hits = map_annealed(spec, samples, seed, |_, env, ws| {
        let mut walker = Walker1d::new(env, 0, ws);
        let mut mask = 0u64;
        for (k, &n) in grid.iter().enumerate() {
            let x = walker.run(n - walker.time()) as f64;
            if x > (w - delta) * n as f64 && x < (w + delta) * n as f64 {
                mask |= 1 << k;
            }
        }
        mask
    });
    let mut points = Vec::new();
    let mut warnings = Vec::new();
    let mut fit_points = Vec::new();
    for (k, &n) in n_grid.iter().enumerate() {
        let count = hits.iter().filter(|&&m| m & (1 << k) != 0).count();
        let p = proportion(count, samples);
        points.push(DecayPoint { n, probability: p });
        if count == 0 {
            warnings.push(format!(
                "no sample in the window at n = {n}; grid point dropped"
            ));
        } else {
            fit_points.push(((n as f64).ln(), p.point.ln()));
        }
    }
    Ok(SlowdownFit {
        points,
        fit: ExponentFit::fit(fit_points)?,
        target: 1.0 - s,
        warnings,
    })
}

/// Quenched slowdown in a fixed environment from the exact quenched law.
#[derive(Clone, Debug, PartialEq)]
pub struct QuenchedSlowdown {
    /// `(n, P_ω(X_n/n ∈ (w − δ, w + δ)))`.
    pub probabilities: Vec<(u64, f64)>,
    /// Slope of `log(−log p_n)` against `log n`.
    pub stretched: ExponentFit,
    /// Slope of `log p_n` against `log n`.
    pub log_fit: ExponentFit,
    /// `(1 − 1/s − η, 1 − 1/s + η)`.
    pub bracket: (f64, f64),
    pub within_bracket: bool,
    pub nonincreasing: bool,
}

/// Stretched-exponential diagnostic for the quenched slowdown probability.
/// Probabilities are computed exactly by propagating the quenched law, so
/// no sampling is involved.
pub fn slowdown_quenched_diagnostic(
    env: &Environment,
    w: f64,
    delta: f64,
    n_grid: &[u64],
    eta: f64,
) -> Result<QuenchedSlowdown> {
    require_ballistic(env.spec(), w, delta)?;
    check_grid(n_grid)?;
    let s = s_parameter(env.spec())?;
    let centre = 1.0 - 1.0 / s;
    let probabilities: Vec<(u64, f64)> = n_grid
        .iter()
        .map(|&n| {
            let d = quenched_distribution(env, 0, n as usize);
            (
                n,
                d.prob_open((w - delta) * n as f64, (w + delta) * n as f64),
            )
        })
        .collect();
    if let Some((n, _)) = probabilities.iter().find(|p| !(p.1 > 0.0 && p.1 < 1.0)) {
        return Err(RwreError::Precondition(format!(
            "window probability at n = {n} is degenerate"
        )));
    }
    let stretched = ExponentFit::fit(
        probabilities
            .iter()
            .map(|&(n, p)| ((n as f64).ln(), (-p.ln()).ln()))
            .collect(),
    )?;
    let log_fit = ExponentFit::fit(
        probabilities
            .iter()
            .map(|&(n, p)| ((n as f64).ln(), p.ln()))
            .collect(),
    )?;
    let bracket = (centre - eta, centre + eta);
    Ok(QuenchedSlowdown {
        nonincreasing: probabilities.windows(2).all(|p| p[1].1 <= p[0].1),
        within_bracket: stretched.slope >= bracket.0 && stretched.slope <= bracket.1,
        probabilities,
        stretched,
        log_fit,
        bracket,
    })
}

/// Limit of `ℙ(|X_{n^h} − X_n| < η (log n)²)` as `n → ∞` for `η → 0`.
pub fn aging_formula(h: f64) -> f64 {
    (5.0 / 3.0 - 2.0 / 3.0 * (-(h - 1.0)).exp()) / (h * h)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgingEstimate {
    pub estimate: EstimateWithCI,
    pub formula: f64,
}

fn require_recurrent(spec: &EnvironmentSpec) -> Result<()> {
    if classify(spec)? != Classification::Recurrent {
        return Err(RwreError::Precondition(
            "requires a recurrent environment law".into(),
        ));
    }
    Ok(())
}

/// Annealed estimate of `ℙ(|X_{n^h} − X_n| / (log n)² < η)`. Long runs use
/// the exact block sampler.
pub fn aging_correlator(
    spec: &Arc<EnvironmentSpec>,
    n: u64,
    h: f64,
    eta: f64,
    samples: usize,
    seed: u64,
) -> Result<AgingEstimate> {
    require_recurrent(spec)?;
    if !(h >= 1.0) || n < 3 || !(eta > 0.0) || samples == 0 {
        return Err(RwreError::InvalidParameter(
            "aging needs h >= 1, n >= 3, eta > 0 and samples > 0".into(),
        ));
    }
    let formula = aging_formula(h);
    if h == 1.0 {
        return Ok(AgingEstimate {
            estimate: EstimateWithCI::new(1.0, 1.0, 1.0, samples, CiMethod::Exact),
            formula,
        });
    }
    let later = (n as f64).powf(h).round() as u64;
    let scale = (n as f64).ln().powi(2);
    let close = map_annealed(spec, samples, seed, |_, env, ws| {
        let mut walker = BlockWalker1d::new(env, 0, ws);
        let a = walker.advance(n);
        let b = walker.advance(later - n);
        (((b - a).abs() as f64) / scale) < eta
    });
    Ok(AgingEstimate {
        estimate: proportion(close.iter().filter(|&&c| c).count(), samples),
        formula,
    })
}

/// Fraction of walkers with `|X_n/(log n)² − B_n| < η` at one grid size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalizationPoint {
    pub n: u64,
    pub fraction: EstimateWithCI,
}

/// Annealed localization fractions around the valley bottom; one fresh
/// environment and walker per sample, checked at every grid size.
pub fn sinai_localization(
    spec: &Arc<EnvironmentSpec>,
    n_grid: &[u64],
    eta: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<LocalizationPoint>> {
    require_recurrent(spec)?;
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] < 3 {
        return Err(RwreError::InvalidParameter(
            "grid needs increasing sizes >= 3".into(),
        ));
    }
    let grid = n_grid.to_vec();
    let hits: Vec<Result<u64>> = map_annealed(spec, samples, seed, |_, env, ws| {
        let mut walker = Walker1d::new(env, 0, ws);
        let mut mask = 0u64;
        for (k, &n) in grid.iter().enumerate() {
            let x = walker.run(n - walker.time());
            let valley = sinai_valley(env, n)?;
            if (x as f64 / valley.scale - valley.rescaled_bottom).abs() < eta {
                mask |= 1 << k;
            }
        }
        Ok(mask)
    });
    let masks: Vec<u64> = hits.into_iter().collect::<Result<_>>()?;
    Ok(n_grid
        .iter()
        .enumerate()
        .map(|(k, &n)| LocalizationPoint {
            n,
            fraction: proportion(
                masks.iter().filter(|&&m| m & (1 << k) != 0).count(),
                samples,
            ),
        })
        .collect())
}

/// Exact quenched probability `P_ω(|X_n/(log n)² − B_n| < η)`.
pub fn quenched_localization(env: &Environment, n: u64, eta: f64) -> Result<f64> {
    let valley = sinai_valley(env, n)?;
    let d = quenched_distribution(env, 0, n as usize);
    let lo = (valley.rescaled_bottom - eta) * valley.scale;
    let hi = (valley.rescaled_bottom + eta) * valley.scale;
    Ok(d.prob_open(lo, hi))
}

/// Interquantile spread of `T_n` regressed on `n` in log-log scale.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingFit {
    /// `(n, q_0.9 − q_0.1)` of `T_n`.
    pub spreads: Vec<(u64, f64)>,
    pub fit: ExponentFit,
    /// `1/s` for `s < 2`, otherwise `1/2`.
    pub target: f64,
    pub censored: usize,
}

/// Step budget per walker in [`stable_scaling`], as a multiple of the largest level.
pub const SCALING_STEP_FACTOR: u64 = 100_000;

pub fn stable_scaling(
    spec: &Arc<EnvironmentSpec>,
    n_grid: &[u64],
    samples: usize,
    seed: u64,
) -> Result<ScalingFit> {
    check_grid(n_grid)?;
    if !(speed(spec)? > 0.0) {
        return Err(RwreError::Precondition(
            "stable scaling needs a positive speed".into(),
        ));
    }
    let s = s_parameter(spec)?;
    if !(s > 1.0) {
        return Err(RwreError::Precondition(format!(
            "stable scaling needs s > 1, got {s}"
        )));
    }
    let target = if s < 2.0 { 1.0 / s } else { 0.5 };
    let grid = n_grid.to_vec();
    let cap = SCALING_STEP_FACTOR * grid[grid.len() - 1];
    let times: Vec<Vec<f64>> = map_annealed(spec, samples, seed, |_, env, ws| {
        let mut walker = Walker1d::new(env, 0, ws);
        grid.iter()
            .map(|&n| {
                walker
                    .run_until_level(n as i64, cap)
                    .map_or(f64::INFINITY, |t| t as f64)
            })
            .collect()
    });
    let censored = times
        .iter()
        .filter(|t| t.iter().any(|v| v.is_infinite()))
        .count();
    if censored * 20 > samples {
        return Err(RwreError::Precondition(format!(
            "{censored} of {samples} walkers exceeded the step budget"
        )));
    }
    let mut spreads = Vec::new();
    for (k, &n) in n_grid.iter().enumerate() {
        let mut col: Vec<f64> = times.iter().map(|t| t[k]).collect();
        col.sort_by(f64::total_cmp);
        spreads.push((n, quantile_sorted(&col, 0.9) - quantile_sorted(&col, 0.1)));
    }
    let fit = ExponentFit::fit(
        spreads
            .iter()
            .map(|&(n, d)| ((n as f64).ln(), d.ln()))
            .collect(),
    )?;
    Ok(ScalingFit {
        spreads,
        fit,
        target,
        censored,
    })
}

/// Two-sample χ² homogeneity test on discrete values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub bins: usize,
}

/// Values adjacent in sort order are pooled until every bin has expected
/// count at least 5 in both samples.
pub fn distribution_equality_test<T: Ord + Clone>(a: &[T], b: &[T]) -> Result<ChiSquareReport> {
    require_samples("distribution equality test", 10, a.len().min(b.len()))?;
    let mut values: Vec<(T, u8)> = a
        .iter()
        .map(|x| (x.clone(), 0))
        .chain(b.iter().map(|x| (x.clone(), 1)))
        .collect();
    values.sort_unstable();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let total = na + nb;
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut ca, mut cb) = (0.0, 0.0);
    let mut i = 0;
    while i < values.len() {
        let v = values[i].0.clone();
        while i < values.len() && values[i].0 == v {
            if values[i].1 == 0 {
                ca += 1.0;
            } else {
                cb += 1.0;
            }
            i += 1;
        }
        let pooled = ca + cb;
        if pooled * na / total >= 5.0 && pooled * nb / total >= 5.0 {
            bins.push((ca, cb));
            ca = 0.0;
            cb = 0.0;
        }
    }
    if ca + cb > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += ca;
                last.1 += cb;
            }
            None => bins.push((ca, cb)),
        }
    }
    if bins.len() < 2 {
        return Ok(ChiSquareReport {
            statistic: 0.0,
            df: 0,
            p_value: 1.0,
            bins: bins.len(),
        });
    }
    let statistic: f64 = bins
        .iter()
        .map(|&(oa, ob)| {
            let ea = (oa + ob) * na / total;
            let eb = (oa + ob) * nb / total;
            (oa - ea).powi(2) / ea + (ob - eb).powi(2) / eb
        })
        .sum();
    let df = bins.len() - 1;
    let dist =
        ChiSquared::new(df as f64).map_err(|e| RwreError::InvalidParameter(e.to_string()))?;
    Ok(ChiSquareReport {
        statistic,
        df,
        p_value: dist.sf(statistic),
        bins: bins.len(),
    })
}

/// Empirical `E exp(c sup_{n<d_1} |X_n|^γ)` over regeneration decompositions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TPrimeDiagnostic {
    pub mean: f64,
    pub log_mean: f64,
    /// Share of the sum contributed by the largest sample.
    pub top_share: f64,
    pub dominated: bool,
    pub samples: usize,
}

/// Diagnostic only: a finite empirical mean says nothing about finiteness
/// of the true moment.
pub fn tprime_moment_diagnostic(
    spec: &EnvironmentSpec,
    decomps: &[RegenerationDecomposition],
    c: f64,
    gamma: f64,
) -> Result<TPrimeDiagnostic> {
    if spec.dimension() == 1 && !(speed(spec)? > 0.0) {
        return Err(RwreError::Precondition(
            "regeneration moments need a ballistic walk".into(),
        ));
    }
    if !(c > 0.0 && gamma > 0.0) {
        return Err(RwreError::InvalidParameter(
            "c and gamma must be positive".into(),
        ));
    }
    let logs: Vec<f64> = decomps
        .iter()
        .filter_map(|d| d.sup_before_first)
        .map(|s| c * s.powf(gamma))
        .collect();
    require_samples("regeneration moment diagnostic", 1, logs.len())?;
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    let log_mean = lse - (logs.len() as f64).ln();
    let top_share = (max - lse).exp();
    Ok(TPrimeDiagnostic {
        mean: log_mean.exp(),
        log_mean,
        top_share,
        dominated: top_share > 0.5,
        samples: logs.len(),
    })
}

/// Sample standard deviation, exposed for seed-stability checks.
pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Exp, Gamma, Pareto};

    fn rng(seed: u64) -> WalkRng {
        WalkRng::seed_from_u64(seed)
    }

    #[test]
    fn estimate_interval_contains_point() {
        let e = EstimateWithCI::new(1.0, 1.2, 1.5, 3, CiMethod::Normal);
        assert!(e.ci_low <= e.point && e.point <= e.ci_high);
        let b = bootstrap_mean(&[1.0, 2.0, 3.0, 4.0], 1);
        assert!(b.ci_low <= 2.5 && b.ci_high >= 2.5);
        assert_eq!(
            bootstrap_mean(&[2.0; 10], 1),
            EstimateWithCI::new(2.0, 2.0, 2.0, 10, CiMethod::Bootstrap)
        );
    }

    #[test]
    fn wilson_interval() {
        let p = proportion(0, 100);
        assert_eq!(p.point, 0.0);
        assert!(p.ci_high > 0.0 && p.ci_high < 0.05);
        let q = proportion(50, 100);
        assert!((q.ci_low - 0.4038).abs() < 1e-3 && (q.ci_high - 0.5962).abs() < 1e-3);
    }

    #[test]
    fn hill_on_pareto() {
        let d = Pareto::new(1.0, 2.0).unwrap();
        let mut r = rng(4);
        let xs: Vec<f64> = (0..10_000).map(|_| d.sample(&mut r)).collect();
        let t = tail_index(&xs, 0.05).unwrap();
        assert!((t.estimate.point - 2.0).abs() < 0.15, "{}", t.estimate);
        assert!(!t.light_tail_suspected);
    }

    #[test]
    fn hill_flags_light_tails() {
        let d = Exp::new(1.0).unwrap();
        let mut r = rng(5);
        let xs: Vec<f64> = (0..10_000).map(|_| d.sample(&mut r)).collect();
        assert!(tail_index(&xs, 0.05).unwrap().light_tail_suspected);
        assert!(tail_index(&xs[..500], 0.05).is_err());
    }

    #[test]
    fn independence_null_and_power() {
        let g = Gamma::new(2.0, 1.0).unwrap();
        let mut pass_iid = 0;
        let mut fail_ar = 0;
        for rep in 0..100u64 {
            let mut r = rng(100 + rep);
            let iid: Vec<f64> = (0..200).map(|_| g.sample(&mut r)).collect();
            let mut ar = vec![g.sample(&mut r)];
            for _ in 1..200 {
                let prev = ar[ar.len() - 1];
                ar.push(0.5 * prev + g.sample(&mut r));
            }
            pass_iid += independence_test(&[&iid], 0.01, rep).passed as u32;
            fail_ar += (!independence_test(&[&ar], 0.01, rep).passed) as u32;
        }
        assert!(pass_iid >= 95, "{pass_iid}");
        assert!(fail_ar >= 95, "{fail_ar}");
    }

    #[test]
    fn chi_square_null_and_power() {
        let sample = |p: f64, seed: u64, count: usize| -> Vec<i64> {
            let mut r = rng(seed);
            (0..count)
                .map(|_| {
                    (0..20)
                        .map(|_| if r.random::<f64>() < p { 1 } else { -1 })
                        .sum()
                })
                .collect()
        };
        let rejections = (0..100)
            .filter(|&k| {
                distribution_equality_test(&sample(0.5, 2 * k, 2000), &sample(0.5, 2 * k + 1, 2000))
                    .unwrap()
                    .p_value
                    < 0.01
            })
            .count();
        assert!(rejections <= 2, "{rejections}");
        let r =
            distribution_equality_test(&sample(0.6, 1, 100_000), &sample(0.5, 2, 100_000)).unwrap();
        assert!(r.p_value < 0.01);
    }

    #[test]
    fn exponent_fit_requires_four_points() {
        assert!(ExponentFit::fit(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]).is_err());
        let f =
            ExponentFit::fit((0..5).map(|i| (i as f64, 3.0 * i as f64 + 1.0)).collect()).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-12 && f.residual_norm < 1e-9);
    }

    #[test]
    fn aging_formula_values() {
        assert!((aging_formula(1.0) - 1.0).abs() < 1e-15);
        assert!((aging_formula(2.0) - 0.355_353_426_471_426).abs() < 1e-12);
        assert!((aging_formula(3.0) - 0.175_160_349_389_881).abs() < 1e-12);
        let spec = Arc::new(EnvironmentSpec::two_point(0.75, 0.25, 0.5).unwrap());
        assert_eq!(
            aging_correlator(&spec, 100, 1.0, 0.5, 10, 1)
                .unwrap()
                .estimate
                .point,
            1.0
        );
        let ballistic = Arc::new(EnvironmentSpec::two_point(0.9, 0.4, 0.5).unwrap());
        assert!(aging_correlator(&ballistic, 100, 2.0, 0.5, 10, 1).is_err());
    }

    #[test]
    fn slowdown_preconditions() {
        let spec = Arc::new(EnvironmentSpec::two_point(0.9, 0.4, 0.5).unwrap());
        let v = speed(&spec).unwrap();
        assert!(
            slowdown_exponent_annealed(&spec, v, 0.025, &[250, 500, 1000, 2000], 10, 1).is_err()
        );
        assert!(slowdown_exponent_annealed(&spec, 0.0, 0.025, &[250, 500, 1000], 10, 1).is_err());
        let c = Arc::new(EnvironmentSpec::constant(0.6).unwrap());
        assert!(
            slowdown_exponent_annealed(&c, 0.0, 0.025, &[250, 500, 1000, 2000], 10, 1).is_err()
        );
    }

    #[test]
    fn quenched_slowdown_homogeneous() {
        let env = Environment::new(EnvironmentSpec::constant(0.6).unwrap(), 0);
        let q =
            slowdown_quenched_diagnostic(&env, 0.0, 0.025, &[1000, 2000, 4000, 8000], 0.2).unwrap();
        assert!(q.nonincreasing);
        assert!(
            (q.stretched.slope - 1.0).abs() < 0.1,
            "{}",
            q.stretched.slope
        );
    }

    #[test]
    fn quenched_slowdown_median_exponent_in_corridor() {
        let spec = EnvironmentSpec::two_point(0.9, 0.4, 0.5).unwrap();
        let mut slopes: Vec<f64> = (0..10u64)
            .map(|k| {
                let env = Environment::new(spec.clone(), 100 + k);
                slowdown_quenched_diagnostic(&env, 0.0, 0.025, &[500, 1000, 2000, 4000], 0.3)
                    .unwrap()
                    .stretched
                    .slope
            })
            .collect();
        slopes.sort_by(f64::total_cmp);
        let median = (slopes[4] + slopes[5]) / 2.0;
        assert!((0.1..=0.7).contains(&median), "{median}");
    }

    #[test]
    fn localization_is_mirror_symmetric() {
        let spec = EnvironmentSpec::two_point(0.75, 0.25, 0.5).unwrap();
        let env = Environment::new(spec, 12);
        let a = quenched_localization(&env, 500, 0.5).unwrap();
        let b = quenched_localization(&env.reflected(), 500, 0.5).unwrap();
        assert!((a - b).abs() < 1e-12, "{a} {b}");
    }

    #[test]
    fn stable_scaling_homogeneous_is_diffusive() {
        let spec = Arc::new(EnvironmentSpec::constant(0.6).unwrap());
        let f = stable_scaling(&spec, &[250, 500, 1000, 2000], 2000, 3).unwrap();
        assert_eq!(f.target, 0.5);
        assert!((f.fit.slope - 0.5).abs() < 0.1, "{}", f.fit.slope);
    }
}
