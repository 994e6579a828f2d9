//! Trajectory samplers.
//!
//! Every sampler is a pure function of its environment and seeds. Walkers
//! in annealed runs get `(env_seed, walk_seed)` from
//! [`split_walker`](crate::rng::split_walker), so walker `k` can be replayed
//! alone.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::config::{Config, Section};
use crate::env::{ellipticity_check, EnvLaw, Environment, EnvironmentSpec};
use crate::error::{Result, RwreError};
use crate::exact1d::Window;
use crate::rng::{next_unit, split_walker, threshold, WalkRng};

/// Number of leading coordinates carried by `R` in the product-structure walker.
pub const R_DIM: usize = 5;

/// The `(R, I, U)` record of the product-structure walker.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuiRecord {
    /// `R_0, R_1, …, R_{U_N}`, flattened with [`R_DIM`] coordinates per point.
    pub r: Vec<i64>,
    /// `I_0, …, I_{N−1}`.
    pub i: Vec<bool>,
    /// `U_0 = 0, …, U_N`.
    pub u: Vec<u64>,
}

impl RuiRecord {
    pub fn r_at(&self, k: usize) -> &[i64] {
        &self.r[k * R_DIM..(k + 1) * R_DIM]
    }

    pub fn r_len(&self) -> usize {
        self.r.len() / R_DIM
    }
}

/// A sampled path `X_0, …, X_N` with its seeds and optional records.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub dim: usize,
    /// Flattened positions, `dim` coordinates per time.
    pub positions: Vec<i64>,
    pub env_seed: u64,
    pub walk_seed: u64,
    /// Coupling coins `ε_1..ε_N`: `0`, or `±(i + 1)` for `±e_{i+1}`.
    pub coins: Option<Vec<i8>>,
    pub rui: Option<RuiRecord>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.positions.len() / self.dim - 1
    }

    pub fn position(&self, n: usize) -> &[i64] {
        &self.positions[n * self.dim..(n + 1) * self.dim]
    }

    pub fn endpoint(&self) -> &[i64] {
        self.position(self.steps())
    }

    /// `Z_n = X_n · ℓ` for an integer direction `ℓ`.
    pub fn projection(&self, direction: &[i64]) -> Vec<i64> {
        assert_eq!(direction.len(), self.dim, "direction dimension");
        self.positions
            .chunks_exact(self.dim)
            .map(|x| x.iter().zip(direction).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Checks unit steps and, when present, the coin and `(R, I, U)` records.
    pub fn check_invariants(&self) -> Result<()> {
        let bad = |m: String| Err(RwreError::Precondition(m));
        for n in 0..self.steps() {
            let d: i64 = self
                .position(n)
                .iter()
                .zip(self.position(n + 1))
                .map(|(a, b)| (b - a).abs())
                .sum();
            if d != 1 {
                return bad(format!("step {n} is not a unit step"));
            }
        }
        if let Some(coins) = &self.coins {
            if coins.len() != self.steps() {
                return bad("coin record length differs from path length".into());
            }
            for (n, &c) in coins.iter().enumerate() {
                if c != 0 {
                    let axis = c.unsigned_abs() as usize - 1;
                    if self.position(n + 1)[axis] - self.position(n)[axis] != c.signum() as i64 {
                        return bad(format!("step {n} does not follow its coin"));
                    }
                }
            }
        }
        if let Some(rui) = &self.rui {
            if rui.u.len() != self.steps() + 1 || rui.i.len() != self.steps() || rui.u[0] != 0 {
                return bad("(R, I, U) record has inconsistent lengths".into());
            }
            for n in 0..self.steps() {
                if rui.u[n + 1] != rui.u[n] + rui.i[n] as u64 {
                    return bad(format!("U is not the partial sum of I at step {n}"));
                }
            }
            for n in 0..=self.steps() {
                if self.position(n)[..R_DIM] != *rui.r_at(rui.u[n] as usize) {
                    return bad(format!("leading coordinates differ from R at step {n}"));
                }
            }
        }
        Ok(())
    }

    /// Writes `(n, X_n · ℓ)` rows.
    pub fn write_csv<W: Write>(&self, direction: &[i64], mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,projection")?;
        for (n, z) in self.projection(direction).iter().enumerate() {
            writeln!(out, "{n},{z}")?;
        }
        Ok(())
    }

    /// Writes the binary record (per step: `u64` index then `dim` × `i64`,
    /// little-endian) to `path` and a text header to `path.header`.
    pub fn write_binary(&self, path: &Path, spec_label: &str) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for (n, x) in self.positions.chunks_exact(self.dim).enumerate() {
            out.write_all(&(n as u64).to_le_bytes())?;
            for c in x {
                out.write_all(&c.to_le_bytes())?;
            }
        }
        out.flush()?;
        let header = format!(
            "[trajectory]\nformat = rwre-trajectory-1\nspec = {spec_label}\ndimension = {}\nsteps = {}\nenv_seed = {}\nwalk_seed = {}\n",
            self.dim,
            self.steps(),
            self.env_seed,
            self.walk_seed
        );
        std::fs::write(header_path(path), header)?;
        Ok(())
    }

    /// Reads a record written by [`Trajectory::write_binary`]. Coin and
    /// `(R, I, U)` records are not part of the format.
    pub fn read_binary(path: &Path) -> Result<Trajectory> {
        let text = std::fs::read_to_string(header_path(path))?;
        let config = Config::parse(&text)?;
        let header: &Section = config.require_section("trajectory")?;
        let dim: usize = header.require("dimension")?.parse()?;
        let steps: usize = header.require("steps")?.parse()?;
        let env_seed: u64 = header.require("env_seed")?.parse()?;
        let walk_seed: u64 = header.require("walk_seed")?.parse()?;
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        let record = 8 * (dim + 1);
        if dim == 0 || bytes.len() != record * (steps + 1) {
            return Err(RwreError::InvalidParameter(format!(
                "record file has {} bytes, expected {}",
                bytes.len(),
                record * (steps + 1)
            )));
        }
        let word = |b: &[u8]| u64::from_le_bytes(b.try_into().expect("8 bytes"));
        let mut positions = Vec::with_capacity(dim * (steps + 1));
        for (n, rec) in bytes.chunks_exact(record).enumerate() {
            if word(&rec[..8]) != n as u64 {
                return Err(RwreError::InvalidParameter(format!(
                    "record {n} has a wrong step index"
                )));
            }
            positions.extend(rec[8..].chunks_exact(8).map(|b| word(b) as i64));
        }
        Ok(Trajectory {
            dim,
            positions,
            env_seed,
            walk_seed,
            coins: None,
            rui: None,
        })
    }
}

fn header_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".header");
    PathBuf::from(p)
}

/// One-dimensional walker with per-site thresholds memoized over a
/// growing window of sites.
pub struct Walker1d<'e> {
    env: &'e Environment,
    lo: i64,
    thresholds: Vec<u64>,
    pos: i64,
    time: u64,
    rng: WalkRng,
}

impl<'e> Walker1d<'e> {
    pub fn new(env: &'e Environment, start: i64, walk_seed: u64) -> Self {
        assert_eq!(env.dimension(), 1, "one-dimensional environment");
        let lo = start - 64;
        let thresholds = (lo..=start + 64).map(|x| threshold(env.omega(x))).collect();
        Walker1d {
            env,
            lo,
            thresholds,
            pos: start,
            time: 0,
            rng: WalkRng::seed_from_u64(walk_seed),
        }
    }

    pub fn position(&self) -> i64 {
        self.pos
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn environment(&self) -> &'e Environment {
        self.env
    }

    /// Moves the walker to `x` and resets its clock, keeping the random
    /// stream and the memoized sites.
    pub fn restart_at(&mut self, x: i64) {
        self.pos = x;
        self.time = 0;
    }

    #[cold]
    fn grow(&mut self, x: i64) {
        let len = self.thresholds.len() as i64;
        let hi = self.lo + len - 1;
        let new_lo = if x < self.lo {
            self.lo.min(x) - len
        } else {
            self.lo
        };
        let new_hi = if x > hi { hi.max(x) + len } else { hi };
        let mut t = Vec::with_capacity((new_hi - new_lo + 1) as usize);
        t.extend((new_lo..self.lo).map(|s| threshold(self.env.omega(s))));
        t.extend_from_slice(&self.thresholds);
        t.extend((hi + 1..=new_hi).map(|s| threshold(self.env.omega(s))));
        self.lo = new_lo;
        self.thresholds = t;
    }

    #[inline]
    fn threshold_at(&mut self, x: i64) -> u64 {
        let i = x - self.lo;
        if i < 0 || i >= self.thresholds.len() as i64 {
            self.grow(x);
        }
        self.thresholds[(x - self.lo) as usize]
    }

    /// One step; returns the new position.
    #[inline]
    pub fn step(&mut self) -> i64 {
        let t = self.threshold_at(self.pos);
        if self.rng.next_u64() < t {
            self.pos += 1;
        } else {
            self.pos -= 1;
        }
        self.time += 1;
        self.pos
    }

    pub fn run(&mut self, steps: u64) -> i64 {
        for _ in 0..steps {
            self.step();
        }
        self.pos
    }

    /// Steps until `X ≥ level`; returns the hitting time, or `None` if
    /// `max_time` is reached first.
    pub fn run_until_level(&mut self, level: i64, max_time: u64) -> Option<u64> {
        while self.pos < level {
            if self.time >= max_time {
                return None;
            }
            self.step();
        }
        Some(self.time)
    }
}

/// Alias table over the `B + 1` possible displacements `−B, −B + 2, …, B`.
struct BlockKernel {
    prob: Vec<u64>,
    alias: Vec<u16>,
}

impl BlockKernel {
    fn build(env: &Environment, x: i64, block: usize) -> Self {
        let b = block as i64;
        let omegas: Vec<f64> = (x - b..=x + b).map(|s| env.omega(s)).collect();
        let mut dist = vec![0.0; 2 * block + 1];
        let mut next = vec![0.0; 2 * block + 1];
        dist[block] = 1.0;
        for t in 0..block {
            next.iter_mut().for_each(|v| *v = 0.0);
            // reachable offsets after t steps: -t..=t with parity of t
            for j in (block - t..=block + t).step_by(2) {
                let p = dist[j];
                let w = omegas[j];
                next[j + 1] += p * w;
                next[j - 1] += p * (1.0 - w);
            }
            std::mem::swap(&mut dist, &mut next);
        }
        let weights: Vec<f64> = (0..=block).map(|k| dist[2 * k]).collect();
        let (prob, alias) = vose(&weights);
        BlockKernel { prob, alias }
    }

    #[inline]
    fn sample(&self, rng: &mut WalkRng, block: usize) -> i64 {
        let k = ((rng.next_u64() as u128 * self.prob.len() as u128) >> 64) as usize;
        let j = if (rng.next_u64() >> 11) < self.prob[k] {
            k
        } else {
            self.alias[k] as usize
        };
        2 * j as i64 - block as i64
    }
}

/// Vose alias construction; acceptance probabilities are 53-bit integers.
fn vose(weights: &[f64]) -> (Vec<u64>, Vec<u16>) {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
    let mut alias: Vec<u16> = (0..n as u16).collect();
    let mut prob = vec![1.0f64; n];
    let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
    while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
        prob[s] = scaled[s];
        alias[s] = l as u16;
        scaled[l] -= 1.0 - scaled[s];
        if scaled[l] < 1.0 {
            large.pop();
            small.push(l);
        }
    }
    let scale = (1u64 << 53) as f64;
    let prob = prob
        .iter()
        .map(|&p| (p.clamp(0.0, 1.0) * scale) as u64)
        .collect();
    (prob, alias)
}

/// Block length of [`BlockWalker1d`].
pub const KERNEL_BLOCK: usize = 64;

/// One-dimensional walker that advances [`KERNEL_BLOCK`] steps at a time
/// by sampling the exact quenched displacement law of the block, built
/// lazily per site. Remainders use single steps.
pub struct BlockWalker1d<'e> {
    inner: Walker1d<'e>,
    lo: i64,
    kernels: Vec<Option<Box<BlockKernel>>>,
}

impl<'e> BlockWalker1d<'e> {
    pub fn new(env: &'e Environment, start: i64, walk_seed: u64) -> Self {
        BlockWalker1d {
            inner: Walker1d::new(env, start, walk_seed),
            lo: start,
            kernels: Vec::new(),
        }
    }

    pub fn position(&self) -> i64 {
        self.inner.pos
    }

    pub fn time(&self) -> u64 {
        self.inner.time
    }

    fn kernel_index(&mut self, x: i64) -> usize {
        if self.kernels.is_empty() {
            self.lo = x - 256;
            self.kernels.resize_with(513, || None);
        }
        let len = self.kernels.len() as i64;
        if x < self.lo {
            let extra = (self.lo - x + len) as usize;
            let mut v: Vec<Option<Box<BlockKernel>>> = Vec::with_capacity(extra + len as usize);
            v.resize_with(extra, || None);
            v.append(&mut self.kernels);
            self.kernels = v;
            self.lo -= extra as i64;
        } else if x >= self.lo + len {
            let new_len = (x - self.lo + 1 + len) as usize;
            self.kernels.resize_with(new_len, || None);
        }
        (x - self.lo) as usize
    }

    pub fn advance(&mut self, steps: u64) -> i64 {
        let block = KERNEL_BLOCK as u64;
        for _ in 0..steps / block {
            let x = self.inner.pos;
            let i = self.kernel_index(x);
            let env = self.inner.env;
            let kernel = self.kernels[i]
                .get_or_insert_with(|| Box::new(BlockKernel::build(env, x, KERNEL_BLOCK)));
            let d = kernel.sample(&mut self.inner.rng, KERNEL_BLOCK);
            self.inner.pos += d;
            self.inner.time += block;
        }
        self.inner.run(steps % block)
    }
}

/// Exact quenched law of `X_n` started at `start`.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionDistribution {
    /// Site of `probs[0]`.
    pub lo: i64,
    pub probs: Vec<f64>,
}

impl PositionDistribution {
    pub fn prob(&self, x: i64) -> f64 {
        let i = x - self.lo;
        if i < 0 || i >= self.probs.len() as i64 {
            0.0
        } else {
            self.probs[i as usize]
        }
    }

    /// `P(a < X_n < b)` (open interval).
    pub fn prob_open(&self, a: f64, b: f64) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let x = (self.lo + *i as i64) as f64;
                x > a && x < b
            })
            .map(|(_, p)| p)
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| (self.lo + i as i64) as f64 * p)
            .sum()
    }
}

/// Propagates the quenched law of the walk for `n` steps in `O(n²)`.
pub fn quenched_distribution(env: &Environment, start: i64, n: usize) -> PositionDistribution {
    let lo = start - n as i64;
    let omegas: Vec<f64> = (lo..=start + n as i64).map(|x| env.omega(x)).collect();
    let mut dist = vec![0.0; 2 * n + 1];
    let mut next = vec![0.0; 2 * n + 1];
    dist[n] = 1.0;
    for t in 0..n {
        next.iter_mut().for_each(|v| *v = 0.0);
        for j in (n - t..=n + t).step_by(2) {
            let p = dist[j];
            next[j + 1] += p * omegas[j];
            next[j - 1] += p * (1.0 - omegas[j]);
        }
        std::mem::swap(&mut dist, &mut next);
    }
    PositionDistribution { lo, probs: dist }
}

/// Inverse-CDF sampler over `2d` directions with cumulative weights
/// memoized per visited site.
struct LatticeStepper<'e> {
    env: &'e Environment,
    cache: FxHashMap<Vec<i64>, Vec<f64>>,
}

impl<'e> LatticeStepper<'e> {
    fn new(env: &'e Environment) -> Self {
        LatticeStepper {
            env,
            cache: FxHashMap::default(),
        }
    }

    fn weights(&mut self, x: &[i64]) -> &[f64] {
        if !self.cache.contains_key(x) {
            self.cache.insert(x.to_vec(), self.env.omega_at(x));
        }
        &self.cache[x]
    }

    /// Direction index in `[+e_1, −e_1, …]` order.
    fn draw(&mut self, x: &[i64], rng: &mut WalkRng) -> usize {
        let u = next_unit(rng);
        let w = self.weights(x);
        let mut acc = 0.0;
        for (k, p) in w.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        w.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

#[inline]
fn apply_direction(x: &mut [i64], k: usize) {
    x[k / 2] += if k.is_multiple_of(2) { 1 } else { -1 };
}

/// Samples `N` steps of the quenched walk from `start`.
pub fn run_quenched(env: &Environment, start: &[i64], n: usize, walk_seed: u64) -> Trajectory {
    let dim = env.dimension();
    assert_eq!(start.len(), dim, "start dimension");
    let mut positions = Vec::with_capacity(dim * (n + 1));
    positions.extend_from_slice(start);
    if dim == 1 {
        let mut w = Walker1d::new(env, start[0], walk_seed);
        for _ in 0..n {
            positions.push(w.step());
        }
    } else {
        let mut rng = WalkRng::seed_from_u64(walk_seed);
        let mut stepper = LatticeStepper::new(env);
        let mut x = start.to_vec();
        for _ in 0..n {
            let k = stepper.draw(&x, &mut rng);
            apply_direction(&mut x, k);
            positions.extend_from_slice(&x);
        }
    }
    Trajectory {
        dim,
        positions,
        env_seed: env.seed(),
        walk_seed,
        coins: None,
        rui: None,
    }
}

/// Runs `f(k, environment, walk_seed)` for walkers `0..walkers`, each in a
/// fresh environment, and returns the results in walker order.
pub fn map_annealed<T, F>(
    spec: &Arc<EnvironmentSpec>,
    walkers: usize,
    master_seed: u64,
    f: F,
) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &Environment, u64) -> T + Sync,
{
    (0..walkers)
        .into_par_iter()
        .map(|k| {
            let (env_seed, walk_seed) = split_walker(master_seed, k as u64);
            let env = Environment::new(Arc::clone(spec), env_seed);
            f(k, &env, walk_seed)
        })
        .collect()
}

/// Annealed trajectories from the origin, one fresh environment per walker.
pub fn run_annealed(
    spec: &Arc<EnvironmentSpec>,
    n: usize,
    walkers: usize,
    master_seed: u64,
) -> Vec<Trajectory> {
    let origin = vec![0; spec.dimension()];
    map_annealed(spec, walkers, master_seed, |_, env, seed| {
        run_quenched(env, &origin, n, seed)
    })
}

/// Endpoints `X_N` of annealed one-dimensional walkers, without storing paths.
pub fn annealed_endpoints_1d(
    spec: &Arc<EnvironmentSpec>,
    n: u64,
    walkers: usize,
    master_seed: u64,
) -> Vec<i64> {
    map_annealed(spec, walkers, master_seed, |_, env, seed| {
        Walker1d::new(env, 0, seed).run(n)
    })
}

/// Runs a walker from `w.z` until it leaves the window; returns `true` for
/// an exit through the left end.
pub fn exits_left(env: &Environment, w: Window, walk_seed: u64) -> bool {
    exit_left_run(&mut Walker1d::new(env, w.z, walk_seed), w)
}

fn exit_left_run(walker: &mut Walker1d<'_>, w: Window) -> bool {
    walker.restart_at(w.z);
    loop {
        let x = walker.step();
        if x <= -w.m_minus {
            return true;
        }
        if x >= w.m_plus {
            return false;
        }
    }
}

/// Number of left exits among `trials` runs sharing one random stream.
pub fn count_left_exits(env: &Environment, w: Window, trials: usize, walk_seed: u64) -> usize {
    let mut walker = Walker1d::new(env, w.z, walk_seed);
    (0..trials)
        .filter(|_| exit_left_run(&mut walker, w))
        .count()
}

/// Parameters of the coin-coupled walker.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingParams {
    pub epsilon: f64,
    pub dim: usize,
}

impl CouplingParams {
    pub fn new(epsilon: f64, dim: usize) -> Result<Self> {
        if dim == 0 || !(epsilon > 0.0) || !(1.0 - epsilon * dim as f64 > 0.0) {
            return Err(RwreError::InvalidParameter(format!(
                "coupling needs epsilon > 0 and 1 - epsilon * d > 0, got epsilon = {epsilon}, d = {dim}"
            )));
        }
        Ok(CouplingParams { epsilon, dim })
    }

    /// Checks `ε/2 ≤ ω(z, z + e)` over the support of the law.
    pub fn check_law(&self, spec: &EnvironmentSpec) -> Result<()> {
        if spec.dimension() != self.dim {
            return Err(RwreError::InvalidParameter(format!(
                "coupling dimension {} differs from environment dimension {}",
                self.dim,
                spec.dimension()
            )));
        }
        let min = ellipticity_check(spec.law())?;
        if self.epsilon / 2.0 > min + 1e-12 {
            return Err(RwreError::InvalidParameter(format!(
                "epsilon / 2 = {} exceeds the smallest transition probability {min}",
                self.epsilon / 2.0
            )));
        }
        Ok(())
    }
}

/// Walk under the coin coupling: with probability `ε/2` each the coin is
/// `±e_i` and the walk follows it; otherwise the coin is `0` and the walk
/// steps by `(ω(z, z + e) − ε/2)/(1 − dε)`.
pub fn run_coupled(
    env: &Environment,
    params: CouplingParams,
    n: usize,
    walk_seed: u64,
) -> Result<Trajectory> {
    params.check_law(env.spec())?;
    let dim = params.dim;
    let eps = params.epsilon;
    let coin_mass = eps * dim as f64;
    let rest = 1.0 - coin_mass;
    let mut rng = WalkRng::seed_from_u64(walk_seed);
    let mut stepper = LatticeStepper::new(env);
    let mut x = vec![0i64; dim];
    let mut positions = Vec::with_capacity(dim * (n + 1));
    positions.extend_from_slice(&x);
    let mut coins = Vec::with_capacity(n);
    for _ in 0..n {
        let u = next_unit(&mut rng);
        let k = if u < coin_mass {
            let k = ((u / (eps / 2.0)) as usize).min(2 * dim - 1);
            coins.push(if k.is_multiple_of(2) {
                (k / 2 + 1) as i8
            } else {
                -((k / 2 + 1) as i8)
            });
            k
        } else {
            coins.push(0);
            let v = (u - coin_mass) / rest;
            let w = stepper.weights(&x);
            let mut acc = 0.0;
            let mut pick = None;
            for (k, p) in w.iter().enumerate() {
                acc += (p - eps / 2.0) / rest;
                if v < acc {
                    pick = Some(k);
                    break;
                }
            }
            pick.unwrap_or_else(|| w.iter().rposition(|&p| p - eps / 2.0 > 0.0).unwrap_or(0))
        };
        apply_direction(&mut x, k);
        positions.extend_from_slice(&x);
    }
    Ok(Trajectory {
        dim,
        positions,
        env_seed: env.seed(),
        walk_seed,
        coins: Some(coins),
        rui: None,
    })
}

/// The ten deterministic probabilities `q_{±1..±5}` of a product-structure
/// law and their sum `S`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeadingSplit {
    pub q: [f64; 2 * R_DIM],
    pub total: f64,
}

impl LeadingSplit {
    /// Extracts `q` from a lattice law in `d ≥ 6` whose first ten entries are
    /// identical across the support.
    pub fn from_spec(spec: &EnvironmentSpec) -> Result<Self> {
        let support = match spec.law() {
            EnvLaw::LatticeProduct { dim, support } if *dim > R_DIM => support,
            _ => {
                return Err(RwreError::WrongSpecKind {
                    op: "run_theorem2",
                    kind: spec.kind_name(),
                })
            }
        };
        let first = &support[0].0;
        for (v, _) in support {
            if v[..2 * R_DIM]
                .iter()
                .zip(first)
                .any(|(a, b)| (a - b).abs() > 1e-15)
            {
                return Err(RwreError::InvalidSpec(
                    "leading ten transition probabilities must be deterministic".into(),
                ));
            }
        }
        let mut q = [0.0; 2 * R_DIM];
        q.copy_from_slice(&first[..2 * R_DIM]);
        let total: f64 = q.iter().sum();
        if !(total < 1.0) {
            return Err(RwreError::InvalidParameter(format!(
                "leading mass S = {total} must be < 1"
            )));
        }
        Ok(LeadingSplit { q, total })
    }
}

/// Builds the lattice law with deterministic leading probabilities `q` and
/// a random residual part; each residual vector has `2(d − 5)` entries
/// summing to `1 − S`.
pub fn product_structure_spec(
    q: [f64; 2 * R_DIM],
    residual: Vec<(Vec<f64>, f64)>,
) -> Result<EnvironmentSpec> {
    let total: f64 = q.iter().sum();
    if !(total < 1.0) || q.iter().any(|&v| !(v > 0.0)) {
        return Err(RwreError::InvalidParameter(format!(
            "leading probabilities must be positive with S = {total} < 1"
        )));
    }
    let extra = residual.first().map(|r| r.0.len()).unwrap_or(0);
    if extra == 0 || !extra.is_multiple_of(2) {
        return Err(RwreError::InvalidParameter(
            "residual vectors need 2(d − 5) > 0 entries".into(),
        ));
    }
    let dim = R_DIM + extra / 2;
    let support = residual
        .into_iter()
        .map(|(r, p)| {
            let mut v = q.to_vec();
            v.extend(r);
            (v, p)
        })
        .collect();
    EnvironmentSpec::lattice_product(dim, support)
}

/// Product-structure walker with its `(R, I, U)` record.
///
/// Each step draws `I ~ Bernoulli(S)`; if `I = 1`, `R` advances by a
/// `q/S`-distributed step and the walk copies it in the first five
/// coordinates, otherwise the walk moves in the residual coordinates with
/// probabilities `ω(x, x + e)/(1 − S)`. So `X¹_n = R_{U_n}` by construction.
pub fn run_theorem2(env: &Environment, n: usize, walk_seed: u64) -> Result<Trajectory> {
    let split = LeadingSplit::from_spec(env.spec())?;
    let dim = env.dimension();
    let s = split.total;
    let mut rng = WalkRng::seed_from_u64(walk_seed);
    let mut stepper = LatticeStepper::new(env);
    let mut x = vec![0i64; dim];
    let mut positions = Vec::with_capacity(dim * (n + 1));
    positions.extend_from_slice(&x);
    let mut r = vec![0i64; R_DIM];
    let mut u_rec = Vec::with_capacity(n + 1);
    u_rec.push(0u64);
    let mut i_rec = Vec::with_capacity(n);
    let mut u = 0u64;
    let lead = 2 * R_DIM;
    for _ in 0..n {
        let v = next_unit(&mut rng);
        if v < s {
            let mut acc = 0.0;
            let mut k = lead - 1;
            for (j, q) in split.q.iter().enumerate() {
                acc += q;
                if v < acc {
                    k = j;
                    break;
                }
            }
            apply_direction(&mut x, k);
            r.extend_from_slice(&x[..R_DIM]);
            i_rec.push(true);
            u += 1;
        } else {
            let w = &stepper.weights(&x)[lead..];
            let mut acc = s;
            let mut k = w.iter().rposition(|&p| p > 0.0).unwrap_or(0);
            for (j, p) in w.iter().enumerate() {
                acc += p;
                if v < acc {
                    k = j;
                    break;
                }
            }
            apply_direction(&mut x, lead + k);
            i_rec.push(false);
        }
        u_rec.push(u);
        positions.extend_from_slice(&x);
    }
    Ok(Trajectory {
        dim,
        positions,
        env_seed: env.seed(),
        walk_seed,
        coins: None,
        rui: Some(RuiRecord {
            r,
            i: i_rec,
            u: u_rec,
        }),
    })
}

/// Hitting times `T_k = min{t : Z_t ≥ Z_0 + k}` of a projected path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HittingTimes {
    /// `T_0 = 0, T_1, …, T_K` for the levels reached.
    pub times: Vec<u64>,
    /// `τ_i = T_{i+1} − T_i`, `i = 0..K`.
    pub tau: Vec<u64>,
    /// First level not reached within the path; its time is censored.
    pub censored_level: i64,
}

pub fn hitting_times(traj: &Trajectory, direction: &[i64]) -> HittingTimes {
    hitting_times_of(&traj.projection(direction))
}

pub fn hitting_times_of(z: &[i64]) -> HittingTimes {
    let z0 = z[0];
    let mut times = vec![0u64];
    let mut next = 1;
    for (t, &v) in z.iter().enumerate() {
        while v - z0 >= next {
            times.push(t as u64);
            next += 1;
        }
    }
    let tau = times.windows(2).map(|w| w[1] - w[0]).collect();
    HittingTimes {
        times,
        tau,
        censored_level: next,
    }
}
