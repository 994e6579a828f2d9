//! Environment laws, their realizations, and analytic moments.
//!
//! In one dimension `ω_x` is the probability of a step from `x` to `x + 1`
//! and `ρ_x = (1 − ω_x) / ω_x`, so `E log ρ < 0` means transience to the
//! right. In `d` dimensions the transition vector at a site is ordered
//! `[+e_1, −e_1, +e_2, −e_2, …]`.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::config::Section;
use crate::error::{Result, RwreError};
use crate::numeric;
use crate::rng::{keyed_hash, tag, unit_f64};

const SUM_TOL: f64 = 1e-12;
const MARKOV_SPAN: i64 = 4096;

/// The law `P` of the environment.
#[derive(Clone, Debug, PartialEq)]
pub enum EnvLaw {
    /// Every site has the same `ω`.
    Constant(f64),
    /// I.i.d. sites with `ω` drawn from `(value, probability)` atoms.
    FiniteSupport(Vec<(f64, f64)>),
    /// `ω_x = values[x mod p]`.
    Periodic(Vec<f64>),
    /// Stationary finite-state Markov chain along the line; state `i` has
    /// `ω = omegas[i]` and `transition[i][j]` is the chance that site `x+1`
    /// is in state `j` given site `x` is in state `i`.
    Markov {
        omegas: Vec<f64>,
        transition: Vec<Vec<f64>>,
    },
    /// I.i.d. sites in `Z^dim` whose `2·dim` transition vectors are drawn
    /// from `(vector, probability)` atoms.
    LatticeProduct {
        dim: usize,
        support: Vec<(Vec<f64>, f64)>,
    },
}

impl EnvLaw {
    pub fn kind_name(&self) -> &'static str {
        match self {
            EnvLaw::Constant(_) => "constant",
            EnvLaw::FiniteSupport(_) => "finite_support",
            EnvLaw::Periodic(_) => "periodic",
            EnvLaw::Markov { .. } => "markov",
            EnvLaw::LatticeProduct { .. } => "lattice_product",
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            EnvLaw::LatticeProduct { dim, .. } => *dim,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug)]
struct MarkovData {
    stationary: Vec<f64>,
    forward_cdf: Vec<Vec<f64>>,
    reversed: Vec<Vec<f64>>,
    reversed_cdf: Vec<Vec<f64>>,
}

/// A validated environment law together with its ellipticity bound.
#[derive(Clone, Debug)]
pub struct EnvironmentSpec {
    law: EnvLaw,
    ellipticity: f64,
    cdf: Vec<f64>,
    markov: Option<MarkovData>,
}

impl PartialEq for EnvironmentSpec {
    fn eq(&self, other: &Self) -> bool {
        self.law == other.law && self.ellipticity == other.ellipticity
    }
}

/// Odds ratio `ρ = (1 − ω) / ω` at a site.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Rho(f64);

impl Rho {
    pub fn from_omega(omega: f64) -> Self {
        Rho((1.0 - omega) / omega)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn ln(self) -> f64 {
        self.0.ln()
    }
}

impl EnvironmentSpec {
    /// Validates `law` and sets the ellipticity bound to the largest valid value.
    pub fn new(law: EnvLaw) -> Result<Self> {
        validate(&law)?;
        let ellipticity = ellipticity_check(&law)?;
        let cdf = match &law {
            EnvLaw::FiniteSupport(atoms) => cumulative(atoms.iter().map(|a| a.1)),
            EnvLaw::LatticeProduct { support, .. } => cumulative(support.iter().map(|a| a.1)),
            _ => Vec::new(),
        };
        let markov = match &law {
            EnvLaw::Markov { transition, .. } => Some(markov_data(transition)?),
            _ => None,
        };
        Ok(EnvironmentSpec {
            law,
            ellipticity,
            cdf,
            markov,
        })
    }

    pub fn constant(omega: f64) -> Result<Self> {
        Self::new(EnvLaw::Constant(omega))
    }

    pub fn finite_support(atoms: &[(f64, f64)]) -> Result<Self> {
        Self::new(EnvLaw::FiniteSupport(atoms.to_vec()))
    }

    /// Two atoms `a` and `b` with probabilities `p` and `1 − p`.
    pub fn two_point(a: f64, b: f64, p: f64) -> Result<Self> {
        Self::new(EnvLaw::FiniteSupport(vec![(a, p), (b, 1.0 - p)]))
    }

    pub fn periodic(values: &[f64]) -> Result<Self> {
        Self::new(EnvLaw::Periodic(values.to_vec()))
    }

    pub fn markov(omegas: &[f64], transition: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(EnvLaw::Markov {
            omegas: omegas.to_vec(),
            transition,
        })
    }

    pub fn lattice_product(dim: usize, support: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        Self::new(EnvLaw::LatticeProduct { dim, support })
    }

    /// Lowers the recorded ellipticity bound; fails if `eps` exceeds what the
    /// law actually guarantees.
    pub fn with_ellipticity(mut self, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || eps > self.ellipticity {
            return Err(RwreError::InvalidSpec(format!(
                "ellipticity bound {eps} not in (0, {}]",
                self.ellipticity
            )));
        }
        self.ellipticity = eps;
        Ok(self)
    }

    pub fn law(&self) -> &EnvLaw {
        &self.law
    }

    pub fn ellipticity(&self) -> f64 {
        self.ellipticity
    }

    pub fn dimension(&self) -> usize {
        self.law.dimension()
    }

    pub fn kind_name(&self) -> &'static str {
        self.law.kind_name()
    }

    /// True for laws under which distinct sites are independent.
    pub fn is_product(&self) -> bool {
        matches!(
            self.law,
            EnvLaw::Constant(_) | EnvLaw::FiniteSupport(_) | EnvLaw::LatticeProduct { .. }
        )
    }

    /// Site marginal of a one-dimensional law as `(ω, weight)` pairs.
    /// Periodic laws weight each phase equally; Markov laws use the
    /// stationary distribution.
    pub fn site_marginal(&self) -> Option<Vec<(f64, f64)>> {
        match &self.law {
            EnvLaw::Constant(p) => Some(vec![(*p, 1.0)]),
            EnvLaw::FiniteSupport(atoms) => Some(atoms.clone()),
            EnvLaw::Periodic(values) => {
                let w = 1.0 / values.len() as f64;
                Some(values.iter().map(|&v| (v, w)).collect())
            }
            EnvLaw::Markov { omegas, .. } => {
                let pi = &self.markov.as_ref().expect("markov data").stationary;
                Some(omegas.iter().copied().zip(pi.iter().copied()).collect())
            }
            EnvLaw::LatticeProduct { .. } => None,
        }
    }

    /// Stationary distribution of a Markov law.
    pub fn stationary(&self) -> Option<&[f64]> {
        self.markov.as_ref().map(|m| m.stationary.as_slice())
    }

    /// Transition matrix of the chain read from right to left (site `x` to
    /// site `x − 1`) for Markov laws.
    pub fn reversed_transition(&self) -> Option<&[Vec<f64>]> {
        self.markov.as_ref().map(|m| m.reversed.as_slice())
    }

    /// The law of `x ↦ 1 − ω_{−x}`, i.e. the environment seen by the
    /// reflected walk `−X`.
    pub fn mirrored(&self) -> Result<Self> {
        let law = match &self.law {
            EnvLaw::Constant(p) => EnvLaw::Constant(1.0 - p),
            EnvLaw::FiniteSupport(atoms) => {
                EnvLaw::FiniteSupport(atoms.iter().map(|&(w, p)| (1.0 - w, p)).collect())
            }
            EnvLaw::Periodic(values) => {
                let p = values.len() as i64;
                EnvLaw::Periodic(
                    (0..p)
                        .map(|k| 1.0 - values[(-k).rem_euclid(p) as usize])
                        .collect(),
                )
            }
            EnvLaw::Markov { omegas, .. } => EnvLaw::Markov {
                omegas: omegas.iter().map(|w| 1.0 - w).collect(),
                transition: self.markov.as_ref().expect("markov data").reversed.clone(),
            },
            EnvLaw::LatticeProduct { dim, support } => EnvLaw::LatticeProduct {
                dim: *dim,
                support: support
                    .iter()
                    .map(|(v, p)| (v.chunks(2).flat_map(|c| [c[1], c[0]]).collect(), *p))
                    .collect(),
            },
        };
        EnvironmentSpec::new(law)
    }

    /// Short identifier used in CSV output.
    pub fn label(&self) -> String {
        let mut s = String::new();
        match &self.law {
            EnvLaw::Constant(p) => write!(s, "constant({p})").unwrap(),
            EnvLaw::FiniteSupport(atoms) => {
                let items: Vec<String> = atoms.iter().map(|(w, p)| format!("{w}:{p}")).collect();
                write!(s, "finite_support({})", items.join(";")).unwrap();
            }
            EnvLaw::Periodic(values) => {
                let items: Vec<String> = values.iter().map(|v| v.to_string()).collect();
                write!(s, "periodic({})", items.join(";")).unwrap();
            }
            EnvLaw::Markov { omegas, transition } => {
                let items: Vec<String> = omegas.iter().map(|v| v.to_string()).collect();
                let rows: Vec<String> = transition
                    .iter()
                    .map(|r| {
                        r.iter()
                            .map(|v| v.to_string())
                            .collect::<Vec<_>>()
                            .join(" ")
                    })
                    .collect();
                write!(s, "markov({}|{})", items.join(";"), rows.join(";")).unwrap();
            }
            EnvLaw::LatticeProduct { dim, support } => {
                let items: Vec<String> = support
                    .iter()
                    .map(|(v, p)| {
                        let vs: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                        format!("{}:{p}", vs.join(" "))
                    })
                    .collect();
                write!(s, "lattice_product(d={dim};{})", items.join(";")).unwrap();
            }
        }
        s
    }

    /// Reads a law from a config section.
    ///
    /// ```text
    /// kind = finite_support        # constant | finite_support | periodic | markov | lattice_product
    /// support = 0.8:0.5, 0.3:0.5   # finite_support: omega:probability pairs
    /// value = 0.6                  # constant
    /// values = 0.8, 0.4            # periodic
    /// states = 0.8, 0.3            # markov: omega per state
    /// transition = 0.9 0.1; 0.2 0.8
    /// dimension = 2                # lattice_product
    /// vectors = 0.3 0.2 0.25 0.25 : 0.5; 0.2 0.3 0.25 0.25 : 0.5
    /// ellipticity = 0.1            # optional, lowers the recorded bound
    /// ```
    pub fn from_section(section: &Section) -> Result<Self> {
        let kind = section.require("kind")?;
        let law =
            match kind.value.as_str() {
                "constant" => EnvLaw::Constant(section.require("value")?.parse()?),
                "finite_support" => {
                    let entry = section.require("support")?;
                    let atoms = entry
                        .value
                        .split(',')
                        .map(|pair| {
                            let (w, p) = pair.split_once(':').ok_or_else(|| {
                                entry.error(format!(
                                    "expected omega:probability, found `{}`",
                                    pair.trim()
                                ))
                            })?;
                            let w: f64 = w
                                .trim()
                                .parse()
                                .map_err(|_| entry.error(format!("bad omega `{}`", w.trim())))?;
                            let p: f64 = p.trim().parse().map_err(|_| {
                                entry.error(format!("bad probability `{}`", p.trim()))
                            })?;
                            Ok((w, p))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    EnvLaw::FiniteSupport(atoms)
                }
                "periodic" => EnvLaw::Periodic(section.require("values")?.parse_list()?),
                "markov" => {
                    let omegas = section.require("states")?.parse_list()?;
                    let entry = section.require("transition")?;
                    let transition = parse_rows(entry)?;
                    EnvLaw::Markov { omegas, transition }
                }
                "lattice_product" => {
                    let dim: usize = section.require("dimension")?.parse()?;
                    let entry = section.require("vectors")?;
                    let support = entry
                        .value
                        .split(';')
                        .map(|item| {
                            let (v, p) = item.split_once(':').ok_or_else(|| {
                                entry.error(format!(
                                    "expected `vector : probability`, found `{}`",
                                    item.trim()
                                ))
                            })?;
                            let v = v
                                .split_whitespace()
                                .map(|x| {
                                    x.parse::<f64>()
                                        .map_err(|_| entry.error(format!("bad number `{x}`")))
                                })
                                .collect::<Result<Vec<_>>>()?;
                            let p: f64 = p.trim().parse().map_err(|_| {
                                entry.error(format!("bad probability `{}`", p.trim()))
                            })?;
                            Ok((v, p))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    EnvLaw::LatticeProduct { dim, support }
                }
                other => return Err(kind.error(format!("unknown environment kind `{other}`"))),
            };
        let spec = EnvironmentSpec::new(law).map_err(|e| kind.error(e.to_string()))?;
        match section.get("ellipticity") {
            Some(e) => spec
                .with_ellipticity(e.parse()?)
                .map_err(|err| e.error(err.to_string())),
            None => Ok(spec),
        }
    }

    /// Two-point law with the first atom's probability replaced by `q`.
    pub fn tilted(&self, q: f64) -> Result<Self> {
        match &self.law {
            EnvLaw::FiniteSupport(atoms) if atoms.len() == 2 => {
                EnvironmentSpec::two_point(atoms[0].0, atoms[1].0, q)
            }
            _ => Err(RwreError::WrongSpecKind {
                op: "tilted",
                kind: self.kind_name(),
            }),
        }
    }

    fn sample_atom(&self, u: f64) -> usize {
        self.cdf
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.cdf.len() - 1)
    }
}

fn parse_rows(entry: &crate::config::Entry) -> Result<Vec<Vec<f64>>> {
    entry
        .value
        .split(';')
        .map(|row| {
            row.split_whitespace()
                .map(|x| {
                    x.parse::<f64>()
                        .map_err(|_| entry.error(format!("bad number `{x}`")))
                })
                .collect()
        })
        .collect()
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    cdf
}

fn check_distribution(weights: &[f64], what: &str) -> Result<()> {
    if weights.is_empty() {
        return Err(RwreError::InvalidSpec(format!(
            "{what}: empty distribution"
        )));
    }
    if weights.iter().any(|&w| !(w >= 0.0) || w > 1.0) {
        return Err(RwreError::InvalidSpec(format!(
            "{what}: probabilities must lie in [0, 1]"
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        return Err(RwreError::InvalidSpec(format!(
            "{what}: probabilities sum to {total}, not 1"
        )));
    }
    Ok(())
}

fn check_omega(w: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&w) {
        return Err(RwreError::InvalidSpec(format!("omega {w} outside [0, 1]")));
    }
    Ok(())
}

fn validate(law: &EnvLaw) -> Result<()> {
    match law {
        EnvLaw::Constant(p) => check_omega(*p),
        EnvLaw::FiniteSupport(atoms) => {
            check_distribution(
                &atoms.iter().map(|a| a.1).collect::<Vec<_>>(),
                "finite_support",
            )?;
            atoms.iter().try_for_each(|a| check_omega(a.0))
        }
        EnvLaw::Periodic(values) => {
            if values.is_empty() {
                return Err(RwreError::InvalidSpec("periodic: no values".into()));
            }
            values.iter().try_for_each(|&w| check_omega(w))
        }
        EnvLaw::Markov { omegas, transition } => {
            if omegas.is_empty() || transition.len() != omegas.len() {
                return Err(RwreError::InvalidSpec(
                    "markov: transition matrix must be square with one row per state".into(),
                ));
            }
            if omegas.len() > u16::MAX as usize {
                return Err(RwreError::InvalidSpec("markov: too many states".into()));
            }
            for row in transition {
                if row.len() != omegas.len() {
                    return Err(RwreError::InvalidSpec(
                        "markov: ragged transition matrix".into(),
                    ));
                }
                check_distribution(row, "markov transition row")?;
            }
            if !irreducible(transition) {
                return Err(RwreError::InvalidSpec(
                    "markov: chain is not irreducible".into(),
                ));
            }
            omegas.iter().try_for_each(|&w| check_omega(w))
        }
        EnvLaw::LatticeProduct { dim, support } => {
            if *dim == 0 {
                return Err(RwreError::InvalidSpec(
                    "lattice_product: dimension must be positive".into(),
                ));
            }
            check_distribution(
                &support.iter().map(|a| a.1).collect::<Vec<_>>(),
                "lattice_product",
            )?;
            for (v, _) in support {
                if v.len() != 2 * dim {
                    return Err(RwreError::InvalidSpec(format!(
                        "lattice_product: transition vectors need {} entries, found {}",
                        2 * dim,
                        v.len()
                    )));
                }
                check_distribution(v, "lattice transition vector")?;
            }
            Ok(())
        }
    }
}

fn irreducible(transition: &[Vec<f64>]) -> bool {
    let n = transition.len();
    let reach = |rev: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let p = if rev {
                    transition[j][i]
                } else {
                    transition[i][j]
                };
                if p > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(false) && reach(true)
}

fn markov_data(transition: &[Vec<f64>]) -> Result<MarkovData> {
    let n = transition.len();
    // pi (P - I) = 0 with the last equation replaced by normalization
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[j][i] = transition[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    let mut b = vec![0.0; n];
    a[n - 1] = vec![1.0; n];
    b[n - 1] = 1.0;
    let stationary = numeric::solve_dense(a, b).ok_or_else(|| {
        RwreError::InvalidSpec("markov: stationary distribution is not unique".into())
    })?;
    let reversed: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| stationary[j] * transition[j][i] / stationary[i])
                .collect()
        })
        .collect();
    Ok(MarkovData {
        forward_cdf: transition
            .iter()
            .map(|r| cumulative(r.iter().copied()))
            .collect(),
        reversed_cdf: reversed
            .iter()
            .map(|r| cumulative(r.iter().copied()))
            .collect(),
        reversed,
        stationary,
    })
}

/// Largest `ε` with every transition probability in the support `≥ ε`.
pub fn ellipticity_check(law: &EnvLaw) -> Result<f64> {
    let side = |w: f64| w.min(1.0 - w);
    let min = match law {
        EnvLaw::Constant(p) => side(*p),
        EnvLaw::FiniteSupport(atoms) => atoms
            .iter()
            .filter(|a| a.1 > 0.0)
            .map(|a| side(a.0))
            .fold(f64::INFINITY, f64::min),
        EnvLaw::Periodic(values) => values
            .iter()
            .map(|&w| side(w))
            .fold(f64::INFINITY, f64::min),
        EnvLaw::Markov { omegas, .. } => omegas
            .iter()
            .map(|&w| side(w))
            .fold(f64::INFINITY, f64::min),
        EnvLaw::LatticeProduct { support, .. } => support
            .iter()
            .filter(|a| a.1 > 0.0)
            .flat_map(|a| a.0.iter().copied())
            .fold(f64::INFINITY, f64::min),
    };
    if !(min > 0.0) {
        return Err(RwreError::NonElliptic { min });
    }
    Ok(min)
}

/// `E_P(ρ_0^λ)` for one-dimensional laws.
pub fn moments(spec: &EnvironmentSpec, lambda: f64) -> Result<f64> {
    let marginal = spec.site_marginal().ok_or(RwreError::WrongSpecKind {
        op: "moments",
        kind: spec.kind_name(),
    })?;
    if lambda == 0.0 {
        return Ok(1.0);
    }
    Ok(marginal
        .iter()
        .map(|&(w, p)| p * (lambda * Rho::from_omega(w).ln()).exp())
        .sum())
}

/// `u = E_P(log ρ_0)` for one-dimensional laws.
pub fn log_moment(spec: &EnvironmentSpec) -> Result<f64> {
    let marginal = spec.site_marginal().ok_or(RwreError::WrongSpecKind {
        op: "log_moment",
        kind: spec.kind_name(),
    })?;
    Ok(marginal
        .iter()
        .map(|&(w, p)| p * Rho::from_omega(w).ln())
        .sum())
}

/// Local drift vectors `Σ_e e·ω(0, e)` over the support of the law.
pub fn drift_support(spec: &EnvironmentSpec) -> Vec<Vec<f64>> {
    match spec.law() {
        EnvLaw::LatticeProduct { support, .. } => support
            .iter()
            .filter(|a| a.1 > 0.0)
            .map(|(v, _)| v.chunks(2).map(|c| c[0] - c[1]).collect())
            .collect(),
        _ => spec
            .site_marginal()
            .unwrap_or_default()
            .into_iter()
            .filter(|a| a.1 > 0.0)
            .map(|(w, _)| vec![2.0 * w - 1.0])
            .collect(),
    }
}

/// True iff the zero vector lies in the convex hull of the local drifts.
pub fn is_nestling(spec: &EnvironmentSpec) -> bool {
    let drifts = drift_support(spec);
    let closest = numeric::min_norm_point(&drifts);
    closest.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-9
}

#[derive(Debug)]
struct MarkovStates {
    states: Vec<u16>,
}

/// A realized environment `ω`: a pure function of `(spec, seed, site)`.
///
/// Values are never stored except for Markov laws, whose chain states are
/// cached around the origin at construction; sites beyond the cache are
/// recomputed from its boundary, so the cache never changes the values.
#[derive(Clone, Debug)]
pub struct Environment {
    spec: Arc<EnvironmentSpec>,
    seed: u64,
    reflected: bool,
    markov: Option<Arc<MarkovStates>>,
}

impl PartialEq for Environment {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.seed == other.seed && self.reflected == other.reflected
    }
}

impl Environment {
    pub fn new(spec: impl Into<Arc<EnvironmentSpec>>, seed: u64) -> Self {
        let spec = spec.into();
        let markov = spec
            .markov
            .is_some()
            .then(|| Arc::new(build_markov_states(&spec, seed)));
        Environment {
            spec,
            seed,
            reflected: false,
            markov,
        }
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn shared_spec(&self) -> Arc<EnvironmentSpec> {
        Arc::clone(&self.spec)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dimension(&self) -> usize {
        self.spec.dimension()
    }

    pub fn is_reflected(&self) -> bool {
        self.reflected
    }

    /// The environment `x ↦ 1 − ω_{−x}` (one dimension) or with every `±e_i`
    /// pair swapped and sites negated (lattice). A walk in the reflected
    /// environment has the law of the negated original walk.
    pub fn reflected(&self) -> Self {
        Environment {
            reflected: !self.reflected,
            ..self.clone()
        }
    }

    /// `ω_x` for a one-dimensional environment.
    #[inline]
    pub fn omega(&self, x: i64) -> f64 {
        if self.reflected {
            1.0 - self.raw_omega(-x)
        } else {
            self.raw_omega(x)
        }
    }

    /// `ρ_x` for a one-dimensional environment.
    #[inline]
    pub fn rho(&self, x: i64) -> Rho {
        Rho::from_omega(self.omega(x))
    }

    #[inline]
    fn raw_omega(&self, x: i64) -> f64 {
        match &self.spec.law {
            EnvLaw::Constant(p) => *p,
            EnvLaw::FiniteSupport(atoms) => {
                let u = unit_f64(keyed_hash(self.seed, &[tag::SITE, x as u64]));
                atoms[self.spec.sample_atom(u)].0
            }
            EnvLaw::Periodic(values) => values[x.rem_euclid(values.len() as i64) as usize],
            EnvLaw::Markov { omegas, .. } => omegas[self.markov_state(x)],
            EnvLaw::LatticeProduct { .. } => {
                panic!("omega() called on a lattice environment; use omega_at")
            }
        }
    }

    /// Transition probabilities at `site`, ordered `[+e_1, −e_1, …]`.
    pub fn omega_at(&self, site: &[i64]) -> Vec<f64> {
        debug_assert_eq!(site.len(), self.dimension());
        match &self.spec.law {
            EnvLaw::LatticeProduct { support, .. } => {
                let lookup: Vec<i64> = if self.reflected {
                    site.iter().map(|c| -c).collect()
                } else {
                    site.to_vec()
                };
                let mut words = Vec::with_capacity(lookup.len() + 1);
                words.push(tag::SITE);
                words.extend(lookup.iter().map(|&c| c as u64));
                let u = unit_f64(keyed_hash(self.seed, &words));
                let v = &support[self.spec.sample_atom(u)].0;
                if self.reflected {
                    v.chunks(2).flat_map(|c| [c[1], c[0]]).collect()
                } else {
                    v.clone()
                }
            }
            _ => {
                let w = self.omega(site[0]);
                vec![w, 1.0 - w]
            }
        }
    }

    /// Chain state at site `x` of a Markov environment.
    pub fn markov_state(&self, x: i64) -> usize {
        let cache = self.markov.as_ref().expect("markov environment");
        let data = self.spec.markov.as_ref().expect("markov data");
        if x.abs() <= MARKOV_SPAN {
            return cache.states[(x + MARKOV_SPAN) as usize] as usize;
        }
        let mut state = if x > 0 {
            cache.states[cache.states.len() - 1] as usize
        } else {
            cache.states[0] as usize
        };
        if x > 0 {
            for site in MARKOV_SPAN + 1..=x {
                state = markov_step_right(data, self.seed, site, state);
            }
        } else {
            let left_seed = keyed_hash(self.seed, &[tag::MARKOV_LEFT_SEED]);
            for site in (x..-MARKOV_SPAN).rev() {
                state = markov_step_left(data, left_seed, site, state);
            }
        }
        state
    }
}

fn sample_cdf(cdf: &[f64], u: f64) -> usize {
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

fn markov_step_right(data: &MarkovData, seed: u64, site: i64, prev: usize) -> usize {
    let u = unit_f64(keyed_hash(seed, &[tag::MARKOV_RIGHT, site as u64]));
    sample_cdf(&data.forward_cdf[prev], u)
}

fn markov_step_left(data: &MarkovData, left_seed: u64, site: i64, next: usize) -> usize {
    let u = unit_f64(keyed_hash(left_seed, &[tag::MARKOV_LEFT, site as u64]));
    sample_cdf(&data.reversed_cdf[next], u)
}

fn build_markov_states(spec: &EnvironmentSpec, seed: u64) -> MarkovStates {
    let data = spec.markov.as_ref().expect("markov data");
    let len = (2 * MARKOV_SPAN + 1) as usize;
    let mut states = vec![0u16; len];
    let origin_cdf = cumulative(data.stationary.iter().copied());
    let origin = sample_cdf(
        &origin_cdf,
        unit_f64(keyed_hash(seed, &[tag::MARKOV_ORIGIN])),
    );
    states[MARKOV_SPAN as usize] = origin as u16;
    let mut s = origin;
    for site in 1..=MARKOV_SPAN {
        s = markov_step_right(data, seed, site, s);
        states[(site + MARKOV_SPAN) as usize] = s as u16;
    }
    let left_seed = keyed_hash(seed, &[tag::MARKOV_LEFT_SEED]);
    let mut s = origin;
    for site in (-MARKOV_SPAN..0).rev() {
        s = markov_step_left(data, left_seed, site, s);
        states[(site + MARKOV_SPAN) as usize] = s as u16;
    }
    MarkovStates { states }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two(a: f64, b: f64) -> EnvironmentSpec {
        EnvironmentSpec::two_point(a, b, 0.5).unwrap()
    }

    #[test]
    fn constant_site_value() {
        let env = Environment::new(EnvironmentSpec::constant(0.6).unwrap(), 1);
        assert_eq!(env.omega(-17), 0.6);
        assert_eq!(env.omega(123_456), 0.6);
    }

    #[test]
    fn periodic_wraps_negative_sites() {
        let env = Environment::new(EnvironmentSpec::periodic(&[0.8, 0.4]).unwrap(), 0);
        assert_eq!(env.omega(3), 0.4);
        assert_eq!(env.omega(-2), 0.8);
        assert_eq!(env.omega(-1), 0.4);
    }

    #[test]
    fn finite_support_is_deterministic() {
        let env = Environment::new(two(0.8, 0.3), 7);
        let a = env.omega(12);
        assert_eq!(a, env.omega(12));
        assert!(a == 0.8 || a == 0.3);
        let again = Environment::new(two(0.8, 0.3), 7);
        assert_eq!(a, again.omega(12));
    }

    #[test]
    fn moment_examples() {
        let spec = two(0.8, 0.3);
        assert!((moments(&spec, 1.0).unwrap() - 0.5 * (0.25 + 7.0 / 3.0)).abs() < 1e-12);
        assert!((moments(&spec, 1.0).unwrap() - 1.291_667).abs() < 1e-6);
        assert_eq!(moments(&spec, 0.0).unwrap(), 1.0);
        assert!(log_moment(&two(0.75, 0.25)).unwrap().abs() < 1e-15);
    }

    #[test]
    fn moments_reject_lattice() {
        let spec = EnvironmentSpec::lattice_product(2, vec![(vec![0.25; 4], 1.0)]).unwrap();
        assert!(matches!(
            moments(&spec, 1.0),
            Err(RwreError::WrongSpecKind { .. })
        ));
    }

    #[test]
    fn nestling_examples() {
        let seg = EnvironmentSpec::lattice_product(
            2,
            vec![
                (vec![0.35, 0.15, 0.25, 0.25], 0.5),
                (vec![0.1, 0.4, 0.25, 0.25], 0.5),
            ],
        )
        .unwrap();
        assert_eq!(drift_support(&seg)[0].len(), 2);
        assert!(is_nestling(&seg));
        let one =
            EnvironmentSpec::lattice_product(2, vec![(vec![0.3, 0.2, 0.25, 0.25], 1.0)]).unwrap();
        assert!(!is_nestling(&one));
        assert!(is_nestling(&two(0.8, 0.3)));
        assert!(!is_nestling(&two(0.8, 0.6)));
    }

    #[test]
    fn ellipticity_examples() {
        assert!((ellipticity_check(&EnvLaw::Constant(0.6)).unwrap() - 0.4).abs() < 1e-15);
        assert!(
            (ellipticity_check(&EnvLaw::FiniteSupport(vec![(0.9, 0.5), (0.4, 0.5)])).unwrap()
                - 0.1)
                .abs()
                < 1e-15
        );
        assert!(matches!(
            EnvironmentSpec::finite_support(&[(1.0, 0.5), (0.4, 0.5)]),
            Err(RwreError::NonElliptic { .. })
        ));
        assert!(EnvironmentSpec::constant(1.0).is_err());
    }

    #[test]
    fn validation_catches_bad_laws() {
        assert!(EnvironmentSpec::finite_support(&[(0.8, 0.5), (0.3, 0.4)]).is_err());
        assert!(
            EnvironmentSpec::markov(&[0.8, 0.3], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).is_err()
        );
        assert!(EnvironmentSpec::lattice_product(2, vec![(vec![0.5, 0.5], 1.0)]).is_err());
        assert!(EnvironmentSpec::constant(0.6)
            .unwrap()
            .with_ellipticity(0.5)
            .is_err());
        assert!(EnvironmentSpec::constant(0.6)
            .unwrap()
            .with_ellipticity(0.3)
            .is_ok());
    }

    #[test]
    fn markov_stationary_and_sites() {
        let spec =
            EnvironmentSpec::markov(&[0.8, 0.3], vec![vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
        let pi = spec.stationary().unwrap();
        assert!((pi[0] - 0.75).abs() < 1e-12 && (pi[1] - 0.25).abs() < 1e-12);
        let env = Environment::new(spec, 3);
        // sites beyond the cache follow from its boundary
        let far = env.omega(MARKOV_SPAN + 50);
        assert_eq!(far, env.omega(MARKOV_SPAN + 50));
        let n = 2 * MARKOV_SPAN;
        let frac = (-MARKOV_SPAN..MARKOV_SPAN)
            .filter(|&x| env.omega(x) == 0.8)
            .count() as f64
            / n as f64;
        assert!((frac - 0.75).abs() < 0.05, "{frac}");
    }

    #[test]
    fn reflection_negates_sites() {
        let env = Environment::new(two(0.8, 0.3), 11);
        let r = env.reflected();
        for x in -20..20 {
            assert_eq!(r.omega(x), 1.0 - env.omega(-x));
        }
        assert_eq!(r.reflected(), env);
    }

    #[test]
    fn mirrored_spec_flips_drift() {
        let spec = two(0.9, 0.4);
        let m = spec.mirrored().unwrap();
        assert!((log_moment(&m).unwrap() + log_moment(&spec).unwrap()).abs() < 1e-12);
        let p = EnvironmentSpec::periodic(&[0.8, 0.4, 0.6])
            .unwrap()
            .mirrored()
            .unwrap();
        let env = Environment::new(p, 0);
        let orig = Environment::new(EnvironmentSpec::periodic(&[0.8, 0.4, 0.6]).unwrap(), 0);
        for x in -6..6 {
            assert!((env.omega(x) - (1.0 - orig.omega(-x))).abs() < 1e-15);
        }
    }

    #[test]
    fn parses_config_section() {
        let cfg = crate::config::Config::parse(
            "[environment]\nkind = finite_support\nsupport = 0.8:0.5, 0.3:0.5\n",
        )
        .unwrap();
        let spec = EnvironmentSpec::from_section(cfg.section("environment").unwrap()).unwrap();
        assert_eq!(spec, two(0.8, 0.3));
        let bad = crate::config::Config::parse("[environment]\nkind = finite_support\n").unwrap();
        let err = EnvironmentSpec::from_section(bad.section("environment").unwrap()).unwrap_err();
        assert!(matches!(err, RwreError::Config { line: 1, .. }));
    }
}
