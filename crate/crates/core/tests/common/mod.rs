//! Brute-force oracles shared by the integration tests. Nothing here calls
//! the filter, smoother or gradient code under test.

#![allow(dead_code)]

use hmmforge::matrix::Matrix;
use hmmforge::HmmParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_row(n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    // Bounded away from zero so every path has positive mass.
    let raw: Vec<f64> = (0..n).map(|_| r.random::<f64>() + 0.05).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

pub fn random_hmm(d: usize, m: usize, r: &mut ChaCha8Rng) -> HmmParams {
    let pi = random_row(d, r);
    let a: Vec<Vec<f64>> = (0..d).map(|_| random_row(d, r)).collect();
    let c: Vec<Vec<f64>> = (0..d).map(|_| random_row(m, r)).collect();
    HmmParams::new(pi, Matrix::from_rows(&a).unwrap(), Matrix::from_rows(&c).unwrap()).unwrap()
}

pub fn random_seq(len: usize, m: usize, r: &mut ChaCha8Rng) -> Vec<usize> {
    (0..len).map(|_| r.random_range(0..m)).collect()
}

/// Calls `f(path, weight)` for every hidden path, weight = P(path, seq).
pub fn for_each_path(p: &HmmParams, seq: &[usize], mut f: impl FnMut(&[usize], f64)) {
    let d = p.d();
    let len = seq.len();
    let mut path = vec![0usize; len];
    let total = d.pow(len as u32);
    for code in 0..total {
        let mut c = code;
        for x in path.iter_mut() {
            *x = c % d;
            c /= d;
        }
        let mut w = p.pi()[path[0]] * p.emission()[(path[0], seq[0])];
        for t in 1..len {
            w *= p.transition()[(path[t - 1], path[t])] * p.emission()[(path[t], seq[t])];
        }
        f(&path, w);
    }
}

/// P(Z_{0:T-1} = seq) by summing over all hidden paths.
pub fn joint(p: &HmmParams, seq: &[usize]) -> f64 {
    let mut total = 0.0;
    for_each_path(p, seq, |_, w| total += w);
    total
}

/// P(Z_{t+1} = . | Z_{0:t}) for every t, by enumeration.
pub fn brute_predictions(p: &HmmParams, seq: &[usize]) -> Vec<Vec<f64>> {
    (0..seq.len())
        .map(|t| {
            let prefix = &seq[..=t];
            let den = joint(p, prefix);
            (0..p.m())
                .map(|k| {
                    let mut ext = prefix.to_vec();
                    ext.push(k);
                    joint(p, &ext) / den
                })
                .collect()
        })
        .collect()
}

/// P(X_t = i | Z_{0:T-1}) by enumeration.
pub fn brute_smoothing(p: &HmmParams, seq: &[usize]) -> Vec<Vec<f64>> {
    let mut gamma = vec![vec![0.0; p.d()]; seq.len()];
    let mut total = 0.0;
    for_each_path(p, seq, |path, w| {
        total += w;
        for (t, &x) in path.iter().enumerate() {
            gamma[t][x] += w;
        }
    });
    for row in gamma.iter_mut() {
        row.iter_mut().for_each(|g| *g /= total);
    }
    gamma
}

/// All permutations of 0..n.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Smallest max-abs parameter difference over all state relabelings.
pub fn permutation_matched_diff(learned: &HmmParams, truth: &HmmParams) -> f64 {
    permutations(learned.d())
        .iter()
        .map(|perm| learned.permute_states(perm).max_abs_diff(truth))
        .fold(f64::INFINITY, f64::min)
}

/// Central differences of `f` with respect to every logit, block by block.
pub fn central_differences(
    lp: &hmmforge::beliefnet::LogitParams,
    h: f64,
    f: impl Fn(&hmmforge::beliefnet::LogitParams) -> f64,
) -> Vec<Vec<f64>> {
    (0..3)
        .map(|b| {
            (0..lp.blocks()[b].1.len())
                .map(|i| {
                    let mut up = lp.clone();
                    up.blocks_mut()[b].1[i] += h;
                    let mut down = lp.clone();
                    down.blocks_mut()[b].1[i] -= h;
                    (f(&up) - f(&down)) / (2.0 * h)
                })
                .collect()
        })
        .collect()
}

/// Worst mismatch between an analytic gradient and finite differences:
/// `(max relative error, max absolute error)` where entries whose magnitude is
/// below `near_zero` count toward the absolute error only.
pub fn gradient_error(analytic: &hmmforge::beliefnet::LogitParams, fd: &[Vec<f64>], near_zero: f64) -> (f64, f64) {
    let (mut rel, mut abs) = (0.0f64, 0.0f64);
    for (b, (_, g)) in analytic.blocks().iter().enumerate() {
        for (&a, &n) in g.iter().zip(&fd[b]) {
            let scale = a.abs().max(n.abs());
            if scale < near_zero {
                abs = abs.max((a - n).abs());
            } else {
                rel = rel.max((a - n).abs() / scale);
            }
        }
    }
    (rel, abs)
}
