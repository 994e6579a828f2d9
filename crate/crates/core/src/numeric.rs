//! Small numerical routines shared by the analytic modules.

/// Absolute tolerance for root finding and one-dimensional optimization.
pub const OPT_TOL: f64 = 1e-10;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Maximizes a unimodal (quasi-concave) function on `[lo, hi]` by
/// golden-section search. `f` may return `-inf` on part of the interval.
pub fn golden_max<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    let fx = f(x);
    // the midpoint can lose to an interior probe when f is flat
    [(x, fx), (x1, f1), (x2, f2)]
        .into_iter()
        .fold((x, fx), |best, c| if c.1 > best.1 { c } else { best })
}

/// Minimizes a quasi-convex function on `[lo, hi]`.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (x, v) = golden_max(|x| -f(x), lo, hi, tol);
    (x, -v)
}

/// Bisection for the boundary of a predicate that holds on `[lo, b)` and
/// fails on `[b, hi]`. Returns the last point where it holds.
pub fn bisect_boundary<P: FnMut(f64) -> bool>(
    mut holds: P,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `log(sum_i w_i exp(a_i))` for nonnegative weights.
pub fn log_sum_exp_weighted(terms: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let max = terms
        .clone()
        .filter(|&(w, _)| w > 0.0)
        .map(|(_, a)| a)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = terms
        .map(|(w, a)| if w > 0.0 { w * (a - max).exp() } else { 0.0 })
        .sum();
    max + s.ln()
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` for (numerically) singular systems.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                let (upper, lower) = a.split_at_mut(row);
                for (x, p) in lower[0][col..n].iter_mut().zip(&upper[col][col..n]) {
                    *x -= factor * p;
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Ordinary least squares of `y` on `x`: returns (slope, intercept, residual norm).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    (slope, intercept, rss.sqrt())
}

/// Empirical quantile with linear interpolation on a sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Lag-1 sample autocorrelation.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let denom: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    num / denom
}

/// Minimum-norm point of the convex hull of `points` (Wolfe's algorithm).
pub fn min_norm_point(points: &[Vec<f64>]) -> Vec<f64> {
    const TOL: f64 = 1e-12;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let scale = points
        .iter()
        .map(|p| dot(p, p))
        .fold(0.0, f64::max)
        .max(1e-300);

    let first = (0..points.len())
        .min_by(|&i, &j| dot(&points[i], &points[i]).total_cmp(&dot(&points[j], &points[j])))
        .expect("nonempty point set");
    let mut active = vec![first];
    let mut weights = vec![1.0];
    let mut x = points[first].clone();

    for _ in 0..1000 {
        let j = (0..points.len())
            .min_by(|&i, &k| dot(&x, &points[i]).total_cmp(&dot(&x, &points[k])))
            .unwrap();
        if dot(&x, &x) - dot(&x, &points[j]) <= TOL * scale || active.contains(&j) {
            return x;
        }
        active.push(j);
        weights.push(0.0);
        loop {
            let Some(alpha) = affine_min_norm(points, &active) else {
                return x;
            };
            if alpha.iter().all(|&a| a > TOL) {
                weights = alpha;
                break;
            }
            let theta = weights
                .iter()
                .zip(&alpha)
                .filter(|(_, &a)| a <= TOL)
                .map(|(&w, &a)| w / (w - a))
                .fold(1.0, f64::min);
            for (w, a) in weights.iter_mut().zip(&alpha) {
                *w = theta * a + (1.0 - theta) * *w;
            }
            let mut k = 0;
            while k < active.len() {
                if weights[k] <= TOL {
                    active.remove(k);
                    weights.remove(k);
                } else {
                    k += 1;
                }
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
        }
        x = combine(points, &active, &weights);
    }
    x
}

fn combine(points: &[Vec<f64>], active: &[usize], weights: &[f64]) -> Vec<f64> {
    let d = points[0].len();
    let mut x = vec![0.0; d];
    for (&i, &w) in active.iter().zip(weights) {
        for (xk, pk) in x.iter_mut().zip(&points[i]) {
            *xk += w * pk;
        }
    }
    x
}

fn affine_min_norm(points: &[Vec<f64>], active: &[usize]) -> Option<Vec<f64>> {
    let m = active.len();
    let mut a = vec![vec![0.0; m + 1]; m + 1];
    for i in 0..m {
        for j in 0..m {
            a[i][j] = points[active[i]]
                .iter()
                .zip(&points[active[j]])
                .map(|(x, y)| x * y)
                .sum();
        }
        a[i][m] = 1.0;
        a[m][i] = 1.0;
    }
    let mut b = vec![0.0; m + 1];
    b[m] = 1.0;
    let sol = solve_dense(a, b)?;
    Some(sol[..m].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, v) = golden_max(|x| -(x - 1.3).powi(2) + 2.0, -5.0, 5.0, 1e-10);
        assert!((x - 1.3).abs() < 1e-7);
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn golden_handles_neg_inf_region() {
        let f = |x: f64| if x > 2.0 { f64::NEG_INFINITY } else { x };
        let (x, _) = golden_max(f, 0.0, 10.0, 1e-10);
        assert!((x - 2.0).abs() < 1e-8);
    }

    #[test]
    fn dense_solve_matches_hand_system() {
        let x = solve_dense(vec![vec![2.0, 1.0], vec![1.0, 3.0]], vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
        assert!(solve_dense(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn fit_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v - 1.0).collect();
        let (s, c, r) = linear_fit(&x, &y);
        assert!((s - 0.5).abs() < 1e-14 && (c + 1.0).abs() < 1e-14 && r < 1e-12);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.0);
        assert!((quantile_sorted(&v, 0.1) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn min_norm_point_cases() {
        let seg = vec![vec![0.2, 0.0], vec![-0.3, 0.0]];
        assert!(min_norm_point(&seg).iter().all(|v| v.abs() < 1e-12));
        let off = vec![vec![1.0, 1.0], vec![1.0, -1.0]];
        let p = min_norm_point(&off);
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1].abs() < 1e-12);
        let tri = vec![vec![1.0, 0.0], vec![-1.0, 1.0], vec![-1.0, -1.0]];
        assert!(min_norm_point(&tri).iter().all(|v| v.abs() < 1e-12));
    }
}
