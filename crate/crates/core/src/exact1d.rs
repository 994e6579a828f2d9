//! Exact and semi-exact computations for one-dimensional environments.
//!
//! Conventions: `ρ_x = (1 − ω_x)/ω_x`, `T_n = min{t > 0 : X_t = n}` and
//! `τ_i = T_{i+1} − T_i`. The potential is `W(0) = 0`,
//! `W(x) − W(x − 1) = log ρ_x`.

use std::io::Write;

use crate::env::{log_moment, moments, EnvLaw, Environment, EnvironmentSpec, Rho};
use crate::error::{Result, RwreError};
use crate::numeric::{bisect_boundary, golden_max, golden_min, log_sum_exp_weighted, OPT_TOL};

/// Burn-in length for the hitting-time transform recursion.
pub const DEFAULT_BURN_IN: usize = 1000;

/// Maximal number of series terms before a result is declared undetermined.
pub const SERIES_CAP: usize = 1_000_000;

const SERIES_SUM_CAP: f64 = 1e30;
const BOUNDARY_TOL: f64 = 1e-12;

fn require_1d(env: &Environment, op: &'static str) -> Result<()> {
    if env.dimension() != 1 {
        return Err(RwreError::WrongSpecKind {
            op,
            kind: env.spec().kind_name(),
        });
    }
    Ok(())
}

/// An interval `[−m_minus, m_plus]` with a starting point strictly inside.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub m_minus: i64,
    pub m_plus: i64,
    pub z: i64,
}

impl Window {
    pub fn new(m_minus: i64, m_plus: i64, z: i64) -> Result<Self> {
        if m_minus < 1 || m_plus < 1 || z <= -m_minus || z >= m_plus {
            return Err(RwreError::InvalidParameter(format!(
                "window [-{m_minus}, {m_plus}] must contain z = {z} strictly inside"
            )));
        }
        Ok(Window { m_minus, m_plus, z })
    }
}

/// Log-weights of the two sums in the exit formula: first the paths that
/// leave through the right end, then through the left end.
fn exit_log_sums(env: &Environment, w: Window) -> (f64, f64) {
    // i = z+1..=m_plus : prod_{j=z+1}^{i-1} rho_j
    let mut right = Vec::with_capacity((w.m_plus - w.z) as usize);
    let mut acc = 0.0;
    for i in w.z + 1..=w.m_plus {
        right.push(acc);
        acc += env.rho(i).ln();
    }
    // i = -m_minus+1..=z : prod_{j=i}^{z} rho_j^{-1}
    let mut left = Vec::with_capacity((w.z + w.m_minus) as usize);
    let mut acc = 0.0;
    for i in (-w.m_minus + 1..=w.z).rev() {
        acc -= env.rho(i).ln();
        left.push(acc);
    }
    (
        log_sum_exp_weighted(right.iter().map(|&a| (1.0, a))),
        log_sum_exp_weighted(left.iter().map(|&a| (1.0, a))),
    )
}

/// Probability that the walk from `z` hits `−m_minus` before `m_plus`.
pub fn exit_probability(env: &Environment, w: Window) -> Result<f64> {
    require_1d(env, "exit_probability")?;
    let (a, b) = exit_log_sums(env, w);
    Ok(1.0 / (1.0 + (b - a).exp()))
}

/// Probability that the walk from `z` hits `m_plus` before `−m_minus`.
pub fn exit_probability_right(env: &Environment, w: Window) -> Result<f64> {
    require_1d(env, "exit_probability_right")?;
    let (a, b) = exit_log_sums(env, w);
    Ok(1.0 / (1.0 + (a - b).exp()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    TransientRight,
    TransientLeft,
    Recurrent,
}

/// Transience direction from the sign of `E log ρ` (zero within `1e-12`).
pub fn classify(spec: &EnvironmentSpec) -> Result<Classification> {
    let u = log_moment(spec)?;
    Ok(if u.abs() <= 1e-12 {
        Classification::Recurrent
    } else if u < 0.0 {
        Classification::TransientRight
    } else {
        Classification::TransientLeft
    })
}

fn require_product_1d(spec: &EnvironmentSpec, op: &'static str) -> Result<()> {
    match spec.law() {
        EnvLaw::Constant(_) | EnvLaw::FiniteSupport(_) => Ok(()),
        _ => Err(RwreError::WrongSpecKind {
            op,
            kind: spec.kind_name(),
        }),
    }
}

/// Limiting speed of the walk in an i.i.d. environment.
pub fn speed(spec: &EnvironmentSpec) -> Result<f64> {
    require_product_1d(spec, "speed")?;
    let m = moments(spec, 1.0)?;
    let minv = moments(spec, -1.0)?;
    Ok(if m < 1.0 {
        (1.0 - m) / (1.0 + m)
    } else if minv < 1.0 {
        -(1.0 - minv) / (1.0 + minv)
    } else {
        0.0
    })
}

/// A quantity that may be finite, infinite, or not resolvable within the
/// series budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TauValue {
    Finite(f64),
    Infinite,
    Undetermined,
}

impl TauValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            TauValue::Finite(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpeedOutcome {
    Determined(f64),
    Undetermined,
}

/// Stationary chain describing the environment read from a site leftwards.
struct LeftChain {
    omega: Vec<f64>,
    step: Vec<Vec<f64>>,
    stationary: Vec<f64>,
}

fn left_chain(spec: &EnvironmentSpec) -> Result<LeftChain> {
    match spec.law() {
        EnvLaw::Constant(p) => Ok(LeftChain {
            omega: vec![*p],
            step: vec![vec![1.0]],
            stationary: vec![1.0],
        }),
        EnvLaw::Periodic(values) => {
            let p = values.len();
            let step = (0..p)
                .map(|k| {
                    let mut row = vec![0.0; p];
                    row[(k + p - 1) % p] = 1.0;
                    row
                })
                .collect();
            Ok(LeftChain {
                omega: values.clone(),
                step,
                stationary: vec![1.0 / p as f64; p],
            })
        }
        EnvLaw::Markov { omegas, .. } => Ok(LeftChain {
            omega: omegas.clone(),
            step: spec.reversed_transition().expect("markov").to_vec(),
            stationary: spec.stationary().expect("markov").to_vec(),
        }),
        _ => Err(RwreError::WrongSpecKind {
            op: "speed_ergodic",
            kind: spec.kind_name(),
        }),
    }
}

/// `E_P E_ω τ_0 = Σ_k E_P(ρ_0 ⋯ ρ_{−k+1} / ω_{−k})` for a stationary chain
/// environment, summed with a Collatz–Wielandt tail certificate.
fn chain_expected_tau(chain: &LeftChain, tol: f64) -> TauValue {
    let n = chain.omega.len();
    let rho: Vec<f64> = chain
        .omega
        .iter()
        .map(|&w| Rho::from_omega(w).value())
        .collect();
    let apply = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| rho[i] * (0..n).map(|j| chain.step[i][j] * v[j]).sum::<f64>())
            .collect()
    };
    // Perron vector estimate of A = D_rho * step via (I + A), which is primitive
    let mut g = vec![1.0; n];
    for _ in 0..2000 {
        let ag = apply(&g);
        let next: Vec<f64> = g.iter().zip(&ag).map(|(a, b)| a + b).collect();
        let norm = next.iter().cloned().fold(0.0, f64::max);
        g = next.into_iter().map(|v| v / norm).collect();
    }
    let ag = apply(&g);
    let ratios: Vec<f64> = ag.iter().zip(&g).map(|(a, b)| a / b).collect();
    let r_hi = ratios.iter().cloned().fold(0.0, f64::max);
    let r_lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    if r_lo >= 1.0 {
        return TauValue::Infinite;
    }
    if r_hi >= 1.0 {
        return TauValue::Undetermined;
    }
    let pi_g: f64 = chain.stationary.iter().zip(&g).map(|(a, b)| a * b).sum();
    let mut f: Vec<f64> = chain.omega.iter().map(|w| 1.0 / w).collect();
    let mut sum = 0.0;
    for _ in 0..SERIES_CAP {
        sum += chain
            .stationary
            .iter()
            .zip(&f)
            .map(|(a, b)| a * b)
            .sum::<f64>();
        f = apply(&f);
        let c = f.iter().zip(&g).map(|(a, b)| a / b).fold(0.0, f64::max);
        // remaining terms are bounded by c * r^j * (pi . g), j >= 0
        let tail = c * pi_g / (1.0 - r_hi);
        if tail < tol * sum {
            return TauValue::Finite(sum);
        }
    }
    TauValue::Undetermined
}

/// Speed for periodic, Markov, or constant environments via the series
/// criterion; `v = 1 / E_P E_ω τ_0` when the series converges, signed by
/// the transience direction, and `0` when it diverges.
pub fn speed_ergodic(spec: &EnvironmentSpec, tol: f64) -> Result<SpeedOutcome> {
    let chain = left_chain(spec)?;
    let (chain, sign) = match classify(spec)? {
        Classification::Recurrent => return Ok(SpeedOutcome::Determined(0.0)),
        Classification::TransientRight => (chain, 1.0),
        Classification::TransientLeft => (left_chain(&spec.mirrored()?)?, -1.0),
    };
    Ok(match chain_expected_tau(&chain, tol) {
        TauValue::Finite(t) => SpeedOutcome::Determined(sign / t),
        TauValue::Infinite => SpeedOutcome::Determined(0.0),
        TauValue::Undetermined => SpeedOutcome::Undetermined,
    })
}

/// Quenched `E_ω τ_site` (time to go from `site` to `site + 1`) from the
/// iterated recursion `1/ω_x + ρ_x/ω_{x−1} + ρ_x ρ_{x−1}/ω_{x−2} + …`.
///
/// Terms are accumulated in blocks; once a block's product of `ρ` is below
/// one and the geometric continuation of that block is below `tol` times
/// the partial sum, the continuation is added and the sum returned. The
/// continuation is exact for constant and periodic environments.
pub fn expected_tau(env: &Environment, site: i64, tol: f64) -> TauValue {
    let block = match env.spec().law() {
        EnvLaw::Periodic(values) => values.len() * 64usize.div_ceil(values.len()),
        _ => 64,
    };
    let mut log_prod = 0.0;
    let mut sum = 0.0;
    let mut block_sum = 0.0;
    let mut block_start_log = 0.0;
    for k in 0..SERIES_CAP {
        let x = site - k as i64;
        let term = (log_prod - env.omega(x).ln()).exp();
        sum += term;
        block_sum += term;
        log_prod += env.rho(x).ln();
        if (k + 1) % block == 0 {
            let block_log = log_prod - block_start_log;
            if block_log < 0.0 {
                let r = block_log.exp();
                let tail = block_sum * r / (1.0 - r);
                if tail < tol * sum {
                    return TauValue::Finite(sum + tail);
                }
            } else if sum > SERIES_SUM_CAP {
                return TauValue::Infinite;
            }
            block_sum = 0.0;
            block_start_log = log_prod;
        }
        if !sum.is_finite() {
            return TauValue::Infinite;
        }
    }
    TauValue::Undetermined
}

/// Annealed `E τ_0 = (1 + Eρ)/(1 − Eρ)` for i.i.d. environments.
pub fn annealed_expected_tau(spec: &EnvironmentSpec) -> Result<TauValue> {
    require_product_1d(spec, "annealed_expected_tau")?;
    let m = moments(spec, 1.0)?;
    Ok(if m < 1.0 {
        TauValue::Finite((1.0 + m) / (1.0 - m))
    } else {
        TauValue::Infinite
    })
}

/// `(log ρ, probability)` atoms of an i.i.d. law.
fn log_rho_atoms(spec: &EnvironmentSpec) -> Vec<(f64, f64)> {
    spec.site_marginal()
        .expect("one-dimensional law")
        .into_iter()
        .filter(|a| a.1 > 0.0)
        .map(|(w, p)| (Rho::from_omega(w).ln(), p))
        .collect()
}

fn log_mgf(atoms: &[(f64, f64)], lambda: f64) -> f64 {
    log_sum_exp_weighted(atoms.iter().map(|&(l, p)| (p, lambda * l)))
}

fn tilted_mean(atoms: &[(f64, f64)], lambda: f64) -> f64 {
    let max = atoms
        .iter()
        .map(|a| lambda * a.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let (num, den) = atoms.iter().fold((0.0, 0.0), |(n, d), &(l, p)| {
        let w = p * (lambda * l - max).exp();
        (n + w * l, d + w)
    });
    num / den
}

fn require_transient_right(spec: &EnvironmentSpec, op: &str) -> Result<()> {
    let u = log_moment(spec)?;
    if !(u < 0.0) {
        return Err(RwreError::Precondition(format!(
            "{op} requires E log rho < 0, found {u}"
        )));
    }
    Ok(())
}

/// The positive root `s` of `E ρ^s = 1`, or `+∞` when `ρ ≤ 1` almost surely.
pub fn s_parameter(spec: &EnvironmentSpec) -> Result<f64> {
    require_product_1d(spec, "s_parameter")?;
    require_transient_right(spec, "s_parameter")?;
    let atoms = log_rho_atoms(spec);
    if atoms.iter().all(|a| a.0 <= 0.0) {
        return Ok(f64::INFINITY);
    }
    let mut hi = 1.0;
    while log_mgf(&atoms, hi) <= 0.0 {
        hi *= 2.0;
    }
    // log E rho^s is negative on (0, s) and positive beyond
    Ok(bisect_boundary(
        |s| log_mgf(&atoms, s) < 0.0,
        0.0,
        hi,
        1e-13,
    ))
}

/// Cramér rate `J(y) = sup_λ (λ y − log E ρ^λ)` of the empirical mean of `log ρ`.
/// Returns `+∞` outside the closed hull of the support of `log ρ`.
pub fn cramer_rate(spec: &EnvironmentSpec, y: f64) -> Result<f64> {
    require_product_1d(spec, "cramer_rate")?;
    let atoms = log_rho_atoms(spec);
    Ok(cramer_from_atoms(&atoms, y))
}

fn cramer_from_atoms(atoms: &[(f64, f64)], y: f64) -> f64 {
    let lo = atoms.iter().map(|a| a.0).fold(f64::INFINITY, f64::min);
    let hi = atoms.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
    let mass_at = |v: f64| -> f64 {
        atoms
            .iter()
            .filter(|a| (a.0 - v).abs() <= BOUNDARY_TOL)
            .map(|a| a.1)
            .sum()
    };
    if y < lo - BOUNDARY_TOL || y > hi + BOUNDARY_TOL {
        return f64::INFINITY;
    }
    if (y - hi).abs() <= BOUNDARY_TOL {
        return -mass_at(hi).ln().min(0.0);
    }
    if (y - lo).abs() <= BOUNDARY_TOL {
        return -mass_at(lo).ln().min(0.0);
    }
    let mean = tilted_mean(atoms, 0.0);
    let (mut a, mut b) = (0.0, 0.0);
    if y > mean {
        b = 1.0;
        while tilted_mean(atoms, b) < y && b < 1e8 {
            a = b;
            b *= 2.0;
        }
    } else if y < mean {
        a = -1.0;
        while tilted_mean(atoms, a) > y && a > -1e8 {
            b = a;
            a *= 2.0;
        }
    } else {
        return 0.0;
    }
    let (_, v) = golden_max(|l| l * y - log_mgf(atoms, l), a, b, OPT_TOL);
    v.max(0.0)
}

/// `min_{y ≥ 0} J(y)/y`, which coincides with the root of `E ρ^s = 1`.
pub fn s_from_rate(spec: &EnvironmentSpec) -> Result<f64> {
    require_product_1d(spec, "s_from_rate")?;
    require_transient_right(spec, "s_from_rate")?;
    let atoms = log_rho_atoms(spec);
    let hi = atoms.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
    if hi <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let ratio = |y: f64| cramer_from_atoms(&atoms, y) / y;
    const GRID: usize = 400;
    let (best, _) = (1..=GRID)
        .map(|k| (k, ratio(hi * k as f64 / GRID as f64)))
        .fold(
            (GRID, f64::INFINITY),
            |acc, c| if c.1 < acc.1 { c } else { acc },
        );
    let lo_y = hi * (best as f64 - 1.0).max(1e-6) / GRID as f64;
    let hi_y = hi * ((best + 1).min(GRID)) as f64 / GRID as f64;
    let (_, v) = golden_min(ratio, lo_y, hi_y, OPT_TOL);
    Ok(v.min(ratio(hi)))
}

/// `(1/n) log E_ω^0[e^{θ T_n}; T_n < ∞]`, or `None` when infinite.
///
/// Uses `φ_i = ω_i e^θ / (1 − (1 − ω_i) e^θ φ_{i−1})`, the transform of the
/// time to step from `i` to `i + 1`, seeded at `φ = ω e^θ` `burn_in` sites
/// to the left of the origin.
pub fn hitting_time_log_transform(
    env: &Environment,
    theta: f64,
    n: usize,
    burn_in: usize,
) -> Option<f64> {
    let e = theta.exp();
    let start = -(burn_in as i64);
    let mut phi = env.omega(start - 1) * e;
    let mut acc = 0.0;
    for i in start..n as i64 {
        let w = env.omega(i);
        let denom = 1.0 - (1.0 - w) * e * phi;
        if !(denom > 0.0) {
            return None;
        }
        phi = w * e / denom;
        if !phi.is_finite() {
            return None;
        }
        if i >= 0 {
            acc += phi.ln();
        }
    }
    Some(acc / n as f64)
}

/// `(1/n) log E_ω^0 exp(−λ T_n)` for `λ ≥ 0`.
pub fn quenched_laplace(env: &Environment, lambda: f64, n: usize) -> Result<f64> {
    quenched_laplace_with_burn_in(env, lambda, n, DEFAULT_BURN_IN)
}

pub fn quenched_laplace_with_burn_in(
    env: &Environment,
    lambda: f64,
    n: usize,
    burn_in: usize,
) -> Result<f64> {
    require_1d(env, "quenched_laplace")?;
    if !(lambda >= 0.0) {
        return Err(RwreError::InvalidParameter(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    if n == 0 {
        return Err(RwreError::InvalidParameter("n must be positive".into()));
    }
    Ok(hitting_time_log_transform(env, -lambda, n, burn_in).expect("finite for lambda >= 0"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateMethod {
    Legendre,
    Laplace,
    UpperBound,
}

/// One evaluation of a rate function or of a hitting-time transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFunctionSample {
    pub argument: f64,
    pub value: f64,
    pub method: RateMethod,
}

/// Quenched velocity rate `sup_θ (θ − w L_n(θ))` with
/// `L_n(θ) = (1/n) log E_ω e^{θ T_n}`, without preconditions on the law.
pub fn quenched_rate(env: &Environment, w: f64, n: usize) -> Result<f64> {
    require_1d(env, "quenched_rate")?;
    if !(w > 0.0 && w <= 1.0) {
        return Err(RwreError::InvalidParameter(format!(
            "velocity w must lie in (0, 1], got {w}"
        )));
    }
    if n == 0 {
        return Err(RwreError::InvalidParameter("n must be positive".into()));
    }
    let transform = |t: f64| hitting_time_log_transform(env, t, n, DEFAULT_BURN_IN);
    let objective = |t: f64| match transform(t) {
        Some(l) => t - w * l,
        None => f64::NEG_INFINITY,
    };
    // upper end of the domain where E e^{θ T_n} is finite
    let mut hi = 1e-3;
    while hi < 50.0 && transform(hi).is_some() {
        hi *= 2.0;
    }
    let theta_c = if transform(hi).is_some() {
        hi
    } else {
        bisect_boundary(|t| transform(t).is_some(), 0.0, hi, OPT_TOL)
    };
    let mut lo = -1.0;
    while lo > -1e4 && objective(lo) >= objective(lo + 1.0) {
        lo *= 2.0;
    }
    let (_, v) = golden_max(objective, lo, theta_c, OPT_TOL);
    Ok(v.max(0.0))
}

/// Quenched large-deviation rate `I_P(w)` for the slowdown `X_n/n ≈ w ≤ v`
/// of a walk transient to the right.
pub fn quenched_rate_slowdown(env: &Environment, w: f64, n: usize) -> Result<RateFunctionSample> {
    require_1d(env, "quenched_rate_slowdown")?;
    if classify(env.spec())? != Classification::TransientRight {
        return Err(RwreError::Precondition(
            "quenched_rate_slowdown requires a walk transient to the right".into(),
        ));
    }
    Ok(RateFunctionSample {
        argument: w,
        value: quenched_rate(env, w, n)?,
        method: RateMethod::Legendre,
    })
}

/// Result of the product-tilt upper bound on the annealed rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnnealedBound {
    pub sample: RateFunctionSample,
    /// Probability of the first atom under the minimizing tilt.
    pub tilt: f64,
    pub entropy: f64,
    pub quenched: f64,
}

/// Upper bound on the annealed rate `I(w)`: the minimum over product tilts
/// `q` of `h(q|p) + I_q(w)`. The untilted law is always evaluated, so the
/// bound never exceeds the quenched rate computed with the same seed.
pub fn annealed_rate_upper(
    spec: &EnvironmentSpec,
    w: f64,
    tilts: &[f64],
    seed: u64,
    n: usize,
) -> Result<AnnealedBound> {
    let p = match spec.law() {
        EnvLaw::FiniteSupport(atoms) if atoms.len() == 2 => atoms[0].1,
        _ => {
            return Err(RwreError::WrongSpecKind {
                op: "annealed_rate_upper",
                kind: spec.kind_name(),
            })
        }
    };
    if tilts.is_empty() {
        return Err(RwreError::InvalidParameter("tilt grid is empty".into()));
    }
    if let Some(q) = tilts.iter().find(|&&q| !(q > 0.0 && q < 1.0)) {
        return Err(RwreError::InvalidParameter(format!(
            "tilt {q} outside (0, 1)"
        )));
    }
    let kl = |q: f64| q * (q / p).ln() + (1.0 - q) * ((1.0 - q) / (1.0 - p)).ln();
    let mut best: Option<AnnealedBound> = None;
    for q in std::iter::once(p).chain(tilts.iter().copied()) {
        let tilted = if (q - p).abs() < 1e-15 {
            spec.clone()
        } else {
            spec.tilted(q)?
        };
        let env = Environment::new(tilted, seed);
        let rate = quenched_rate(&env, w, n)?;
        let entropy = if (q - p).abs() < 1e-15 { 0.0 } else { kl(q) };
        let total = entropy + rate;
        if best.is_none_or(|b| total < b.sample.value) {
            best = Some(AnnealedBound {
                sample: RateFunctionSample {
                    argument: w,
                    value: total,
                    method: RateMethod::UpperBound,
                },
                tilt: q,
                entropy,
                quenched: rate,
            });
        }
    }
    Ok(best.expect("identity tilt evaluated"))
}

/// Potential `W` on a range of sites.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialProfile {
    pub start: i64,
    pub values: Vec<f64>,
}

impl PotentialProfile {
    /// `W` on `[a, b]`.
    pub fn build(env: &Environment, a: i64, b: i64) -> Self {
        assert!(a <= b);
        let lo = a.min(0);
        let hi = b.max(0);
        let mut values = vec![0.0; (hi - lo + 1) as usize];
        let origin = (-lo) as usize;
        for x in 1..=hi {
            values[origin + x as usize] = values[origin + x as usize - 1] + env.rho(x).ln();
        }
        for x in (lo..0).rev() {
            let i = (x - lo) as usize;
            values[i] = values[i + 1] - env.rho(x + 1).ln();
        }
        let values = values[(a - lo) as usize..=(b - lo) as usize].to_vec();
        PotentialProfile { start: a, values }
    }

    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64 - 1
    }

    pub fn at(&self, x: i64) -> f64 {
        self.values[(x - self.start) as usize]
    }

    /// `R_k ∘ θ^z = k⁻¹ Σ_{i=1}^k log ρ_{z+i}`; needs `[z, z+k]` in range.
    pub fn r_k(&self, z: i64, k: usize) -> f64 {
        (self.at(z + k as i64) - self.at(z)) / k as f64
    }
}

/// Sites `z ∈ [a, b]` whose following `k` sites have average `log ρ ≥ y`.
pub fn find_traps(env: &Environment, k: usize, y: f64, range: (i64, i64)) -> Result<Vec<i64>> {
    require_1d(env, "find_traps")?;
    if k == 0 {
        return Err(RwreError::InvalidParameter(
            "trap length k must be positive".into(),
        ));
    }
    let (a, b) = range;
    if a > b {
        return Err(RwreError::InvalidParameter(format!(
            "empty range [{a}, {b}]"
        )));
    }
    let logs: Vec<f64> = (a + 1..=b + k as i64).map(|x| env.rho(x).ln()).collect();
    let target = y * k as f64 - 1e-9;
    let mut sum: f64 = logs[..k].iter().sum();
    let mut out = Vec::new();
    for (i, z) in (a..=b).enumerate() {
        if i > 0 {
            sum += logs[i + k - 1] - logs[i - 1];
            if i % 4096 == 0 {
                sum = logs[i..i + k].iter().sum();
            }
        }
        if sum >= target {
            out.push(z);
        }
    }
    Ok(out)
}

/// Valley of the potential around the origin at depth scale `log n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinaiValley {
    pub left: i64,
    pub right: i64,
    pub bottom: i64,
    /// `(log n)²`.
    pub scale: f64,
    /// `B_n = bottom / (log n)²`.
    pub rescaled_bottom: f64,
}

/// Valley located by the first rises of height `depth` above the running
/// minimum on each side of the origin. `right[k]` and `left[k]` are the
/// potential at `k + 1` and `−(k + 1)`; the potential at 0 is 0.
///
/// Returns `(left end, right end, bottom)` as signed offsets from the
/// origin. The bottom is the minimizer closest to the origin (ties within
/// `1e-9`; equidistant ties go right).
pub fn valley_from_sides(
    mut right: impl FnMut(usize) -> Option<f64>,
    mut left: impl FnMut(usize) -> Option<f64>,
    depth: f64,
) -> Option<(i64, i64, i64)> {
    let scan = |next: &mut dyn FnMut(usize) -> Option<f64>| -> Option<Vec<f64>> {
        let mut vals = vec![0.0];
        let mut min = 0.0f64;
        loop {
            let v = next(vals.len() - 1)?;
            vals.push(v);
            min = min.min(v);
            if v - min >= depth {
                return Some(vals);
            }
        }
    };
    let rv = scan(&mut right)?;
    let lv = scan(&mut left)?;
    let min = rv
        .iter()
        .chain(lv.iter())
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let is_min = |v: f64| v - min <= 1e-9;
    let r = rv.iter().position(|&v| is_min(v));
    let l = lv.iter().position(|&v| is_min(v));
    let bottom = match (r, l) {
        (Some(r), Some(l)) if l < r => -(l as i64),
        (Some(r), _) => r as i64,
        (None, Some(l)) => -(l as i64),
        (None, None) => unreachable!(),
    };
    Some((-(lv.len() as i64 - 1), rv.len() as i64 - 1, bottom))
}

/// Valley in a tabulated potential with the origin at index `origin`.
pub fn valley_in_potential(
    potential: &[f64],
    origin: usize,
    depth: f64,
) -> Option<(i64, i64, i64)> {
    let base = potential[origin];
    valley_from_sides(
        |k| potential.get(origin + k + 1).map(|v| v - base),
        |k| origin.checked_sub(k + 1).map(|i| potential[i] - base),
        depth,
    )
    .map(|(a, b, c)| (a + origin as i64, b + origin as i64, c + origin as i64))
}

/// Maximal distance scanned on either side when locating a valley.
pub const VALLEY_SCAN_LIMIT: usize = 50_000_000;

/// Valley bottom `b*` at depth `log n` and `B_n = b*/(log n)²` for a
/// recurrent environment.
///
/// The valley is located on `V(x) = W(x) + log ω_x − log ω_0`, the
/// logarithm of the walk's reversible measure. `V` differs from `W` by a
/// bounded site term and is exactly mirrored by [`Environment::reflected`].
pub fn sinai_valley(env: &Environment, n: u64) -> Result<SinaiValley> {
    require_1d(env, "sinai_valley")?;
    if classify(env.spec())? != Classification::Recurrent {
        return Err(RwreError::Precondition(
            "sinai_valley requires a recurrent environment".into(),
        ));
    }
    if n < 3 {
        return Err(RwreError::InvalidParameter("n must be at least 3".into()));
    }
    let depth = (n as f64).ln();
    // V(x+1) - V(x) = log(1 - w_{x+1}) - log w_x
    let mut vr = 0.0;
    let right = |k: usize| {
        if k >= VALLEY_SCAN_LIMIT {
            return None;
        }
        let x = k as i64;
        vr += (1.0 - env.omega(x + 1)).ln() - env.omega(x).ln();
        Some(vr)
    };
    let mut vl = 0.0;
    let left = |k: usize| {
        if k >= VALLEY_SCAN_LIMIT {
            return None;
        }
        let x = -(k as i64);
        vl -= (1.0 - env.omega(x)).ln() - env.omega(x - 1).ln();
        Some(vl)
    };
    let (left, right, bottom) = valley_from_sides(right, left, depth)
        .ok_or_else(|| RwreError::Precondition("no valley found within the scan limit".into()))?;
    let scale = depth * depth;
    Ok(SinaiValley {
        left,
        right,
        bottom,
        scale,
        rescaled_bottom: bottom as f64 / scale,
    })
}

/// One exported analytic result.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactRow {
    pub operation: String,
    pub spec: String,
    pub parameters: String,
    pub value: f64,
    pub error: Option<String>,
}

impl ExactRow {
    pub fn ok(operation: &str, spec: &EnvironmentSpec, parameters: &str, value: f64) -> Self {
        ExactRow {
            operation: operation.into(),
            spec: spec.label(),
            parameters: parameters.into(),
            value,
            error: None,
        }
    }

    pub fn from_result(
        operation: &str,
        spec: &EnvironmentSpec,
        parameters: &str,
        r: Result<f64>,
    ) -> Self {
        match r {
            Ok(v) => Self::ok(operation, spec, parameters, v),
            Err(e) => ExactRow {
                operation: operation.into(),
                spec: spec.label(),
                parameters: parameters.into(),
                value: f64::NAN,
                error: Some(e.to_string()),
            },
        }
    }
}

/// Writes rows as `operation,spec,parameters,value,error`.
pub fn write_exact_csv<W: Write>(rows: &[ExactRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "operation,spec,parameters,value,error")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            csv_field(&r.operation),
            csv_field(&r.spec),
            csv_field(&r.parameters),
            r.value,
            csv_field(r.error.as_deref().unwrap_or(""))
        )?;
    }
    Ok(())
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two(a: f64, b: f64) -> EnvironmentSpec {
        EnvironmentSpec::two_point(a, b, 0.5).unwrap()
    }

    fn constant_env(p: f64) -> Environment {
        Environment::new(EnvironmentSpec::constant(p).unwrap(), 0)
    }

    #[test]
    fn exit_probability_examples() {
        let w = Window::new(5, 5, 0).unwrap();
        assert!((exit_probability(&constant_env(0.5), w).unwrap() - 0.5).abs() < 1e-14);
        assert!(
            (exit_probability(&constant_env(0.6), w).unwrap() - 0.116_363_636_363_636_36).abs()
                < 1e-12
        );
        let w = Window::new(3, 6, 0).unwrap();
        assert!((exit_probability(&constant_env(0.5), w).unwrap() - 6.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_windows_rejected() {
        assert!(Window::new(3, 3, 3).is_err());
        assert!(Window::new(3, 3, -3).is_err());
        assert!(Window::new(0, 3, 0).is_err());
    }

    #[test]
    fn classification_examples() {
        assert_eq!(
            classify(&two(0.75, 0.25)).unwrap(),
            Classification::Recurrent
        );
        assert_eq!(
            classify(&two(0.8, 0.3)).unwrap(),
            Classification::TransientRight
        );
        assert_eq!(
            classify(&EnvironmentSpec::constant(0.4).unwrap()).unwrap(),
            Classification::TransientLeft
        );
        assert!((log_moment(&two(0.8, 0.3)).unwrap() + 0.269_498_250_366_343_5).abs() < 1e-12);
    }

    #[test]
    fn speed_examples() {
        assert!((speed(&two(0.9, 0.4)).unwrap() - 0.107_692_307_692_307_7).abs() < 1e-12);
        assert_eq!(speed(&two(0.8, 0.3)).unwrap(), 0.0);
        assert!((speed(&EnvironmentSpec::constant(0.6).unwrap()).unwrap() - 0.2).abs() < 1e-12);
        assert!((speed(&EnvironmentSpec::constant(0.4).unwrap()).unwrap() + 0.2).abs() < 1e-12);
        assert!((moments(&two(0.9, 0.4), 1.0).unwrap() - 0.805_555_555_555_555_6).abs() < 1e-12);
    }

    #[test]
    fn speed_ergodic_examples() {
        let p = EnvironmentSpec::periodic(&[0.8, 0.4]).unwrap();
        match speed_ergodic(&p, 1e-13).unwrap() {
            SpeedOutcome::Determined(v) => assert!((v - 0.2).abs() < 1e-10, "{v}"),
            o => panic!("{o:?}"),
        }
        match speed_ergodic(&EnvironmentSpec::constant(0.6).unwrap(), 1e-13).unwrap() {
            SpeedOutcome::Determined(v) => assert!((v - 0.2).abs() < 1e-10),
            o => panic!("{o:?}"),
        }
        assert!(matches!(
            speed_ergodic(&two(0.75, 0.25), 1e-12),
            Err(RwreError::WrongSpecKind { .. })
        ));
        // mirrored periodic law runs left at the same speed
        let m = p.mirrored().unwrap();
        match speed_ergodic(&m, 1e-13).unwrap() {
            SpeedOutcome::Determined(v) => assert!((v + 0.2).abs() < 1e-10),
            o => panic!("{o:?}"),
        }
        // zero-speed periodic law: prod rho over a period = 1
        let z = EnvironmentSpec::periodic(&[0.75, 0.25]).unwrap();
        assert_eq!(
            speed_ergodic(&z, 1e-12).unwrap(),
            SpeedOutcome::Determined(0.0)
        );
    }

    #[test]
    fn expected_tau_examples() {
        let t = expected_tau(&constant_env(0.6), 0, 1e-14).finite().unwrap();
        assert!((t - 5.0).abs() < 1e-10, "{t}");
        let env = Environment::new(EnvironmentSpec::periodic(&[0.8, 0.4]).unwrap(), 0);
        assert!((expected_tau(&env, 0, 1e-14).finite().unwrap() - 3.0).abs() < 1e-10);
        assert!((expected_tau(&env, 1, 1e-14).finite().unwrap() - 7.0).abs() < 1e-10);
        assert!((expected_tau(&env, -4, 1e-14).finite().unwrap() - 3.0).abs() < 1e-10);
        assert_eq!(
            expected_tau(&constant_env(0.4), 0, 1e-12),
            TauValue::Infinite
        );
    }

    #[test]
    fn annealed_tau_examples() {
        let t = annealed_expected_tau(&two(0.9, 0.4))
            .unwrap()
            .finite()
            .unwrap();
        assert!((t - 9.285_714_285_714_286).abs() < 1e-12);
        assert!((t - 1.0 / speed(&two(0.9, 0.4)).unwrap()).abs() < 1e-12);
        let c = annealed_expected_tau(&EnvironmentSpec::constant(0.6).unwrap()).unwrap();
        assert!((c.finite().unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(
            annealed_expected_tau(&two(0.8, 0.3)).unwrap(),
            TauValue::Infinite
        );
    }

    #[test]
    fn s_parameter_examples() {
        assert!((s_parameter(&two(0.8, 0.3)).unwrap() - 0.449_899_203_401_016_5).abs() < 1e-10);
        assert!((s_parameter(&two(0.9, 0.4)).unwrap() - 1.678_459_225_092_061_5).abs() < 1e-10);
        assert_eq!(
            s_parameter(&EnvironmentSpec::constant(0.6).unwrap()).unwrap(),
            f64::INFINITY
        );
        assert!(s_parameter(&two(0.75, 0.25)).is_err());
    }

    #[test]
    fn cramer_examples() {
        let spec = two(0.8, 0.3);
        let mean = log_moment(&spec).unwrap();
        assert!(cramer_rate(&spec, mean).unwrap().abs() < 1e-14);
        let top = (7.0f64 / 3.0).ln();
        assert!((cramer_rate(&spec, top).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert_eq!(cramer_rate(&spec, top + 0.01).unwrap(), f64::INFINITY);
        // interior values approach the boundary value continuously
        let near = cramer_rate(&spec, top - 1e-7).unwrap();
        assert!((near - 2f64.ln()).abs() < 1e-4 && near < 2f64.ln());
        let mid = cramer_rate(&spec, 0.2).unwrap();
        assert!(mid > 0.0 && mid < 2f64.ln());
    }

    #[test]
    fn s_from_rate_matches_root() {
        for spec in [two(0.8, 0.3), two(0.9, 0.4)] {
            let a = s_parameter(&spec).unwrap();
            let b = s_from_rate(&spec).unwrap();
            assert!((a - b).abs() < 1e-6, "{a} {b}");
        }
        assert_eq!(
            s_from_rate(&EnvironmentSpec::constant(0.6).unwrap()).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn laplace_examples() {
        let v = quenched_laplace(&constant_env(0.5), 0.1, 10_000).unwrap();
        assert!((v - 0.634_636_372_946_206_7f64.ln()).abs() < 1e-6, "{v}");
        assert!(
            quenched_laplace(&constant_env(0.6), 0.0, 1000)
                .unwrap()
                .abs()
                < 1e-12
        );
        assert!(quenched_laplace(&constant_env(0.6), -0.1, 10).is_err());
    }

    #[test]
    fn laplace_self_averages() {
        let spec = std::sync::Arc::new(two(0.9, 0.4));
        let a = quenched_laplace(&Environment::new(spec.clone(), 1), 0.05, 10_000).unwrap();
        let b = quenched_laplace(&Environment::new(spec, 2), 0.05, 10_000).unwrap();
        assert!((a - b).abs() < 1e-2, "{a} {b}");
    }

    #[test]
    fn burn_in_doubling_is_stable() {
        let env = Environment::new(two(0.9, 0.4), 5);
        let a = quenched_laplace_with_burn_in(&env, 0.05, 5000, 1000).unwrap();
        let b = quenched_laplace_with_burn_in(&env, 0.05, 5000, 2000).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn slowdown_rate_matches_bernoulli_rate() {
        // homogeneous walk: I(w) = Σ q log(q/p) over the step law with mean w
        let p: f64 = 0.6;
        let bern = |w: f64| {
            let a = (1.0 + w) / 2.0;
            a * (a / p).ln() + (1.0 - a) * ((1.0 - a) / (1.0 - p)).ln()
        };
        let env = constant_env(0.6);
        for w in [0.05, 0.1, 0.15] {
            let r = quenched_rate_slowdown(&env, w, 10_000).unwrap().value;
            assert!((r - bern(w)).abs() < 1e-6, "w={w}: {r} vs {}", bern(w));
        }
        assert!((bern(0.1) - 0.005_146_108_701_076_183).abs() < 1e-15);
        assert!(quenched_rate_slowdown(&env, 0.2, 10_000).unwrap().value < 1e-8);
        assert!(quenched_rate_slowdown(&env, 0.0, 10).is_err());
        assert!(quenched_rate_slowdown(&env, 1.5, 10).is_err());
    }

    #[test]
    fn annealed_bound_examples() {
        let spec = two(0.9, 0.4);
        let v = speed(&spec).unwrap();
        let at_v = annealed_rate_upper(&spec, v, &[0.5], 3, 10_000).unwrap();
        assert!(at_v.sample.value < 5e-2);
        let env = Environment::new(spec.clone(), 3);
        let q = quenched_rate_slowdown(&env, 0.05, 10_000).unwrap().value;
        let b = annealed_rate_upper(&spec, 0.05, &[0.45, 0.4, 0.35, 0.3], 3, 10_000).unwrap();
        assert!(b.sample.value <= q + 1e-9);
        assert!(annealed_rate_upper(&spec, 0.05, &[], 3, 100).is_err());
        assert!(annealed_rate_upper(
            &EnvironmentSpec::constant(0.6).unwrap(),
            0.05,
            &[0.5],
            3,
            100
        )
        .is_err());
    }

    #[test]
    fn trap_examples() {
        assert!(find_traps(&constant_env(0.6), 5, 0.0, (0, 100))
            .unwrap()
            .is_empty());
        assert_eq!(
            find_traps(&constant_env(0.4), 10, 0.4, (0, 50))
                .unwrap()
                .len(),
            51
        );
        // only an all-0.4 window of length 5 reaches average 0.2: probability 1/32
        let env = Environment::new(two(0.9, 0.4), 1);
        let traps = find_traps(&env, 5, 0.2, (0, 10_000)).unwrap();
        let density = traps.len() as f64 / 10_001.0;
        assert!((density - 1.0 / 32.0).abs() < 0.01, "{density}");
        let prof = PotentialProfile::build(&env, 0, 10_005);
        for &z in traps.iter().take(50) {
            assert!(prof.r_k(z, 5) >= 0.2 - 1e-9);
        }
    }

    #[test]
    fn potential_profile_increments() {
        let env = Environment::new(two(0.75, 0.25), 9);
        let prof = PotentialProfile::build(&env, -20, 20);
        assert_eq!(prof.at(0), 0.0);
        for x in -19..=20 {
            assert!((prof.at(x) - prof.at(x - 1) - env.rho(x).ln()).abs() < 1e-12);
        }
        let shifted = PotentialProfile::build(&env, 5, 20);
        assert!((shifted.at(12) - prof.at(12)).abs() < 1e-12);
    }

    #[test]
    fn hand_built_valley() {
        // potential: descend to -(D+1) at index 30, climb back by D+1 on both sides
        let depth = 5.0;
        let mut pot = vec![0.0; 61];
        for (i, v) in pot.iter_mut().enumerate() {
            let d = (i as f64 - 30.0).abs();
            *v = -(depth + 1.0) + d * (depth + 1.0) / 20.0;
        }
        let origin = 25;
        let (a, c, b) = valley_in_potential(&pot, origin, depth).unwrap();
        assert_eq!(b, 30);
        assert!(a < 30 && c > 30);
    }

    #[test]
    fn sinai_valley_requires_recurrence() {
        assert!(sinai_valley(&Environment::new(two(0.9, 0.4), 1), 1000).is_err());
        let env = Environment::new(two(0.75, 0.25), 4);
        let v = sinai_valley(&env, 10_000).unwrap();
        assert!(v.left <= v.bottom && v.bottom <= v.right);
        assert!((v.scale - (10_000f64).ln().powi(2)).abs() < 1e-9);
    }

    #[test]
    fn csv_rows() {
        let spec = two(0.9, 0.4);
        let rows = vec![
            ExactRow::from_result("speed", &spec, "", speed(&spec)),
            ExactRow::from_result(
                "moments",
                &spec,
                "lambda=1",
                moments(
                    &EnvironmentSpec::lattice_product(1, vec![(vec![0.5, 0.5], 1.0)]).unwrap(),
                    1.0,
                ),
            ),
        ];
        let mut buf = Vec::new();
        write_exact_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("operation,spec,parameters,value,error\nspeed,"));
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().ends_with("environment laws"));
    }
}
