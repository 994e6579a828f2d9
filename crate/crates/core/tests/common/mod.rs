//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rwre::Environment;

/// Left-exit probabilities on `[-m_minus, m_plus]` from every interior site by
/// solving `h(x) = ω_x h(x+1) + (1−ω_x) h(x−1)`, `h(−m_minus) = 1`, `h(m_plus) = 0`
/// with the Thomas algorithm. Returns `h` indexed from `−m_minus`.
pub fn exit_left_linear_solve(env: &Environment, m_minus: i64, m_plus: i64) -> Vec<f64> {
    let n = (m_plus + m_minus - 1) as usize;
    // row i (site x = -m_minus + 1 + i): -(1-w) h_{x-1} + h_x - w h_{x+1} = 0
    let mut a = vec![0.0; n];
    let mut b = vec![1.0; n];
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let x = -m_minus + 1 + i as i64;
        let w = env.omega(x);
        a[i] = -(1.0 - w);
        c[i] = -w;
        if i == 0 {
            d[i] = 1.0 - w;
        }
    }
    for i in 1..n {
        let m = a[i] / b[i - 1];
        b[i] -= m * c[i - 1];
        d[i] -= m * d[i - 1];
    }
    let mut h = vec![0.0; n];
    h[n - 1] = d[n - 1] / b[n - 1];
    for i in (0..n - 1).rev() {
        h[i] = (d[i] - c[i] * h[i + 1]) / b[i];
    }
    let mut out = vec![1.0];
    out.extend(h);
    out.push(0.0);
    out
}

/// Expected crossing times `E τ_k` of a periodic environment from the
/// cyclic system `t_k = (1 + (1 − ω_k) t_{k−1}) / ω_k`.
pub fn periodic_expected_tau(values: &[f64]) -> Vec<f64> {
    let p = values.len();
    let step = |k: usize| (1.0 / values[k], (1.0 - values[k]) / values[k]);
    (0..p)
        .map(|k| {
            // unroll t_k = a + b t_{k-1} around one full period
            let (mut a, mut b) = (0.0, 1.0);
            for j in 0..p {
                let (aj, bj) = step((k + p - j) % p);
                a += b * aj;
                b *= bj;
            }
            a / (1.0 - b)
        })
        .collect()
}

/// Relative-entropy rate of a homogeneous walk with right-step probability `p`.
pub fn bernoulli_rate(p: f64, w: f64) -> f64 {
    let a = (1.0 + w) / 2.0;
    a * (a / p).ln() + (1.0 - a) * ((1.0 - a) / (1.0 - p)).ln()
}

// Values computed once in arbitrary precision and frozen.
pub const S_08_03: f64 = 0.449_899_203_401_016_5;
pub const S_09_04: f64 = 1.678_459_225_092_061_5;
pub const SPEED_09_04: f64 = 0.107_692_307_692_307_7;
pub const AGING_H2: f64 = 0.355_353_426_471_426;
pub const AGING_H3: f64 = 0.175_160_349_389_881;

/// Hill functional at the top 5% of the exact annealed law of `τ_1` for
/// `{0.9: ½, 0.4: ½}`, from first-passage propagation over 2000 environments.
pub const HILL_5PCT_09_04: f64 = 1.04;
