//! Path decompositions: fresh times, regeneration times, modified
//! regenerations, and cut times of the product-structure walker.
//!
//! Conditions quantifying over infinite futures are checked up to a finite
//! horizon; the boundary items are flagged as censored.

use std::io::Write;

use rustc_hash::{FxHashMap, FxHashSet};

use crate::error::{Result, RwreError};
use crate::stats::{independence_test, ratio_estimate, EstimateWithCI, IndependenceReport};
use crate::walk::{Trajectory, R_DIM};

/// Times `t` with `Z_t > Z_n` for all `n < t`; `t = 0` is fresh.
pub fn fresh_times(z: &[i64]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut max = i64::MIN;
    for (t, &v) in z.iter().enumerate() {
        if v > max {
            out.push(t);
            max = v;
        }
    }
    out
}

/// Increment between consecutive regeneration times.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Slab {
    pub start: usize,
    pub duration: usize,
    pub displacement: Vec<i64>,
    /// Levels `[Z_{d_i}, Z_{d_{i+1}})` of the environment the slab explores ahead.
    pub levels: (i64, i64),
    /// The slab ends at the horizon-censored last regeneration.
    pub censored: bool,
}

impl Slab {
    pub fn projected(&self, direction: &[i64]) -> i64 {
        self.displacement
            .iter()
            .zip(direction)
            .map(|(a, b)| a * b)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegenerationDecomposition {
    pub direction: Vec<i64>,
    pub times: Vec<usize>,
    pub slabs: Vec<Slab>,
    pub horizon: usize,
    /// The last reported time is only verified up to the horizon.
    pub last_censored: bool,
    /// `sup_{n < d_1} |X_n − X_0|` for the first uncensored time `d_1`.
    pub sup_before_first: Option<f64>,
}

impl RegenerationDecomposition {
    /// Slabs entering estimators: the first slab and censored slabs dropped.
    pub fn usable_slabs(&self) -> impl Iterator<Item = &Slab> {
        self.slabs.iter().skip(1).filter(|s| !s.censored)
    }

    /// Writes `index,time,duration,displacement…,censored` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let dims: Vec<String> = (1..=self.direction.len())
            .map(|i| format!("dx{i}"))
            .collect();
        writeln!(out, "index,time,duration,{},censored", dims.join(","))?;
        for (i, s) in self.slabs.iter().enumerate() {
            let d: Vec<String> = s.displacement.iter().map(|v| v.to_string()).collect();
            writeln!(
                out,
                "{},{},{},{},{}",
                i + 1,
                s.start,
                s.duration,
                d.join(","),
                s.censored as u8
            )?;
        }
        Ok(())
    }
}

fn projection_to(traj: &Trajectory, direction: &[i64], horizon: usize) -> Result<Vec<i64>> {
    if direction.len() != traj.dim {
        return Err(RwreError::InvalidParameter(
            "direction dimension differs from the path".into(),
        ));
    }
    if horizon > traj.steps() {
        return Err(RwreError::InvalidParameter(format!(
            "horizon {horizon} exceeds trajectory length {}",
            traj.steps()
        )));
    }
    let mut z = traj.projection(direction);
    z.truncate(horizon + 1);
    Ok(z)
}

/// Fresh times `t ≤ H` with `Z_n ≥ Z_t` for every `n ∈ (t, H]`.
pub fn regeneration_times_of(z: &[i64]) -> Vec<usize> {
    let mut suffix_min = vec![i64::MAX; z.len() + 1];
    for t in (0..z.len()).rev() {
        suffix_min[t] = suffix_min[t + 1].min(z[t]);
    }
    fresh_times(z)
        .into_iter()
        .filter(|&t| suffix_min[t + 1] >= z[t])
        .collect()
}

pub fn regeneration_times(
    traj: &Trajectory,
    direction: &[i64],
    horizon: usize,
) -> Result<RegenerationDecomposition> {
    let z = projection_to(traj, direction, horizon)?;
    let times = regeneration_times_of(&z);
    Ok(decompose(traj, direction, horizon, times, &z))
}

fn decompose(
    traj: &Trajectory,
    direction: &[i64],
    horizon: usize,
    times: Vec<usize>,
    z: &[i64],
) -> RegenerationDecomposition {
    let last = times.len().saturating_sub(1);
    let slabs = times
        .windows(2)
        .enumerate()
        .map(|(i, w)| Slab {
            start: w[0],
            duration: w[1] - w[0],
            displacement: traj
                .position(w[1])
                .iter()
                .zip(traj.position(w[0]))
                .map(|(a, b)| a - b)
                .collect(),
            levels: (z[w[0]], z[w[1]]),
            censored: i + 1 == last,
        })
        .collect();
    let sup_before_first = (times.len() >= 2).then(|| {
        let origin = traj.position(0);
        (0..times[0].max(1))
            .map(|n| {
                traj.position(n)
                    .iter()
                    .zip(origin)
                    .map(|(a, b)| ((a - b) as f64).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    });
    RegenerationDecomposition {
        direction: direction.to_vec(),
        last_censored: !times.is_empty(),
        times,
        slabs,
        horizon,
        sup_before_first,
    }
}

/// Regeneration times followed by the coin pattern `ε_{t+i} = u_i`,
/// `i = 1..L`. Coins are coded as in [`Trajectory::coins`]; the pattern
/// must satisfy `Σ u_i · ℓ ≥ L/2`.
pub fn modified_regeneration_times(
    traj: &Trajectory,
    direction: &[i64],
    pattern: &[i8],
    horizon: usize,
) -> Result<RegenerationDecomposition> {
    let coins = traj.coins.as_ref().ok_or_else(|| {
        RwreError::Precondition("modified regenerations need a coin record".into())
    })?;
    if pattern.is_empty() {
        return Err(RwreError::InvalidParameter("coin pattern is empty".into()));
    }
    let mut progress = 0;
    for &c in pattern {
        let axis = c.unsigned_abs() as usize;
        if c == 0 || axis > traj.dim {
            return Err(RwreError::InvalidParameter(format!(
                "coin code {c} is not a unit direction"
            )));
        }
        progress += c.signum() as i64 * direction[axis - 1];
    }
    if 2 * progress < pattern.len() as i64 {
        return Err(RwreError::InvalidParameter(format!(
            "pattern progress {progress} is below L/2 = {}",
            pattern.len() as f64 / 2.0
        )));
    }
    let z = projection_to(traj, direction, horizon)?;
    let times = regeneration_times_of(&z)
        .into_iter()
        .filter(|&t| t + pattern.len() <= horizon && coins[t..t + pattern.len()] == *pattern)
        .collect();
    Ok(decompose(traj, direction, horizon, times, &z))
}

/// Level of the slab independence test.
pub const IID_LEVEL: f64 = 0.01;
/// Minimal number of usable slabs.
pub const MIN_SLABS: usize = 30;

/// Lag-1 permutation test on slab durations and projected displacements.
pub fn slabs_iid_check(
    decomp: &RegenerationDecomposition,
    seed: u64,
) -> Result<IndependenceReport> {
    let slabs: Vec<&Slab> = decomp.usable_slabs().collect();
    if slabs.len() < MIN_SLABS {
        return Err(RwreError::InsufficientData {
            what: "slab independence test",
            needed: MIN_SLABS,
            got: slabs.len(),
        });
    }
    let durations: Vec<f64> = slabs.iter().map(|s| s.duration as f64).collect();
    let displacements: Vec<f64> = slabs
        .iter()
        .map(|s| s.projected(&decomp.direction) as f64)
        .collect();
    Ok(independence_test(
        &[&durations, &displacements],
        IID_LEVEL,
        seed,
    ))
}

/// Velocity as mean slab displacement over mean slab duration, pooled
/// over decompositions, with a slab-resampling interval.
pub fn lln_via_regeneration(
    decomps: &[RegenerationDecomposition],
    seed: u64,
) -> Result<EstimateWithCI> {
    let (num, den): (Vec<f64>, Vec<f64>) = decomps
        .iter()
        .flat_map(|d| {
            d.usable_slabs()
                .map(move |s| (s.projected(&d.direction) as f64, s.duration as f64))
        })
        .unzip();
    if num.len() < MIN_SLABS {
        return Err(RwreError::InsufficientData {
            what: "regeneration velocity",
            needed: MIN_SLABS,
            got: num.len(),
        });
    }
    Ok(ratio_estimate(&num, &den, seed))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CutDecomposition {
    pub times: Vec<usize>,
    pub margin: usize,
    pub horizon: usize,
}

impl CutDecomposition {
    /// Writes `index,time,duration,censored` rows; the last cut has no
    /// successor and is flagged.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,time,duration,censored")?;
        for (i, &t) in self.times.iter().enumerate() {
            match self.times.get(i + 1) {
                Some(&next) => writeln!(out, "{},{},{},0", i + 1, t, next - t)?,
                None => writeln!(out, "{},{},,1", i + 1, t)?,
            }
        }
        Ok(())
    }

    /// Fraction of candidate times that are cut times.
    pub fn density(&self) -> f64 {
        self.times.len() as f64 / (self.horizon - 2 * self.margin + 1) as f64
    }
}

fn check_cut_args(len: usize, k: usize, horizon: usize, margin: usize) -> Result<()> {
    if k == 0 || !len.is_multiple_of(k) {
        return Err(RwreError::InvalidParameter(
            "path length is not a multiple of its dimension".into(),
        ));
    }
    if horizon + 1 > len / k {
        return Err(RwreError::InvalidParameter(format!(
            "horizon {horizon} exceeds the path length"
        )));
    }
    if 2 * margin >= horizon {
        return Err(RwreError::InvalidParameter(format!(
            "margin {margin} must be below half the horizon {horizon}"
        )));
    }
    Ok(())
}

/// Cut times of a flattened path in `Z^k`: `t ∈ [M, H − M]` such that
/// `{R_n : t − M ≤ n < t}` and `{R_n : t ≤ n ≤ t + M}` are disjoint.
///
/// A revisit `R_i = R_j`, `i < j`, rules out exactly the times
/// `t ∈ [max(i + 1, j − M), min(j, i + M)]`; consecutive revisits of a
/// vertex cover all others.
pub fn cut_times(
    path: &[i64],
    k: usize,
    horizon: usize,
    margin: usize,
) -> Result<CutDecomposition> {
    check_cut_args(path.len(), k, horizon, margin)?;
    let mut blocked = vec![0i64; horizon + 2];
    let mut last: FxHashMap<&[i64], usize> = FxHashMap::default();
    for j in 0..=horizon {
        let v = &path[j * k..(j + 1) * k];
        if let Some(i) = last.insert(v, j) {
            let lo = (i + 1).max(j.saturating_sub(margin));
            let hi = j.min(i + margin);
            if lo <= hi {
                blocked[lo] += 1;
                blocked[hi + 1] -= 1;
            }
        }
    }
    let mut times = Vec::new();
    let mut acc = 0;
    for (t, b) in blocked.iter().enumerate().take(horizon - margin + 1) {
        acc += b;
        if t >= margin && acc == 0 {
            times.push(t);
        }
    }
    Ok(CutDecomposition {
        times,
        margin,
        horizon,
    })
}

/// Direct check of the cut condition at `t` with explicit vertex sets.
pub fn verify_cut(path: &[i64], k: usize, t: usize, margin: usize, horizon: usize) -> bool {
    let past: FxHashSet<&[i64]> = (t.saturating_sub(margin)..t)
        .map(|n| &path[n * k..(n + 1) * k])
        .collect();
    (t..=(t + margin).min(horizon)).all(|n| !past.contains(&path[n * k..(n + 1) * k]))
}

/// Velocity of residual coordinates estimated between cut times.
#[derive(Clone, Debug, PartialEq)]
pub struct CutVelocity {
    pub estimate: EstimateWithCI,
    pub increments: usize,
    pub independence: IndependenceReport,
}

/// Increments `(Δ(X · ℓ), Δn)` between cuts of `R`, mapped to walk times
/// `min{n : U_n = c}`. Cuts are thinned greedily so that the ones used are at
/// least `margin` apart in `R`-time. `direction` acts on all `d` coordinates.
pub fn cut_increments(
    traj: &Trajectory,
    cuts: &CutDecomposition,
    direction: &[i64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let rui = traj.rui.as_ref().ok_or_else(|| {
        RwreError::Precondition("cut-point velocity needs an (R, I, U) record".into())
    })?;
    let z = traj.projection(direction);
    let mut walk_times = Vec::new();
    let mut n = 0;
    let mut next_allowed = 0;
    for &c in &cuts.times {
        if c < next_allowed {
            continue;
        }
        next_allowed = c + cuts.margin.max(1);
        while n < rui.u.len() && (rui.u[n] as usize) < c {
            n += 1;
        }
        if n == rui.u.len() {
            break;
        }
        walk_times.push(n);
    }
    Ok(walk_times
        .windows(2)
        .map(|w| ((z[w[1]] - z[w[0]]) as f64, (w[1] - w[0]) as f64))
        .unzip())
}

/// Velocity of `X · ℓ` as summed displacement over summed duration between
/// cuts, with a resampling interval and a lag-1 test on the displacements.
pub fn cut_velocity(num: &[f64], den: &[f64], seed: u64) -> Result<CutVelocity> {
    if num.len() < MIN_SLABS {
        return Err(RwreError::InsufficientData {
            what: "cut-point velocity",
            needed: MIN_SLABS,
            got: num.len(),
        });
    }
    Ok(CutVelocity {
        estimate: ratio_estimate(num, den, seed),
        increments: num.len(),
        independence: independence_test(&[num], IID_LEVEL, seed),
    })
}

/// [`cut_velocity`] pooled over several product-structure paths.
pub fn lln_via_cutpoints(
    paths: &[(&Trajectory, &CutDecomposition)],
    direction: &[i64],
    seed: u64,
) -> Result<CutVelocity> {
    let mut num = Vec::new();
    let mut den = Vec::new();
    for (traj, cuts) in paths {
        let (a, b) = cut_increments(traj, cuts, direction)?;
        num.extend(a);
        den.extend(b);
    }
    cut_velocity(&num, &den, seed)
}

/// Cut times of the `R` path of a product-structure trajectory, with the
/// horizon set to the full `R` path.
pub fn cut_times_of_trajectory(traj: &Trajectory, margin: usize) -> Result<CutDecomposition> {
    let rui = traj
        .rui
        .as_ref()
        .ok_or_else(|| RwreError::Precondition("cut times need an (R, I, U) record".into()))?;
    cut_times(&rui.r, R_DIM, rui.r_len() - 1, margin)
}
