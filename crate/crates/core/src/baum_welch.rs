//! Baum-Welch EM with scaled forward-backward smoothing and random restarts.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hmm::{correct, dataset_loss, log_likelihood, HmmParams, SequenceDataset};
use crate::matrix::{softmax, Matrix};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Stop a restart once the log-likelihood gain drops below this; 0 disables.
    pub ll_tolerance: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iters: 20,
            restarts: 5,
            seed: 0,
            ll_tolerance: 0.0,
        }
    }
}

/// Expected sufficient statistics of one or more sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingStats {
    /// Smoothed state posteriors, one `T x d` matrix per sequence.
    pub gamma: Vec<Matrix>,
    pub xi_sum: Matrix,
    pub obs_sum: Matrix,
    pub init_sum: Vec<f64>,
    pub loglik: f64,
}

/// Accumulators without the per-step posteriors, used inside the E-step.
#[derive(Debug, Clone)]
struct Counts {
    xi_sum: Matrix,
    obs_sum: Matrix,
    init_sum: Vec<f64>,
    loglik: f64,
}

impl Counts {
    fn zeros(d: usize, m: usize) -> Self {
        Counts {
            xi_sum: Matrix::zeros(d, d),
            obs_sum: Matrix::zeros(d, m),
            init_sum: vec![0.0; d],
            loglik: 0.0,
        }
    }

    fn add(&mut self, other: &Counts) {
        for (a, b) in self.xi_sum.as_mut_slice().iter_mut().zip(other.xi_sum.as_slice()) {
            *a += b;
        }
        for (a, b) in self.obs_sum.as_mut_slice().iter_mut().zip(other.obs_sum.as_slice()) {
            *a += b;
        }
        for (a, b) in self.init_sum.iter_mut().zip(&other.init_sum) {
            *a += b;
        }
        self.loglik += other.loglik;
    }
}

fn smooth(params: &HmmParams, seq: &[usize]) -> Result<(Matrix, Counts)> {
    let (d, m) = (params.d(), params.m());
    let (a, c) = (params.transition(), params.emission());
    if seq.is_empty() {
        return Err(Error::InvalidDataset("empty sequence".into()));
    }
    if let Some(&bad) = seq.iter().find(|&&z| z >= m) {
        return Err(Error::ObservationOutOfRange { obs: bad, m });
    }
    let t_len = seq.len();
    let emit = |z: usize| -> Vec<f64> { c.column(z).collect() };

    // Scaled forward pass: alpha rows are filtered posteriors.
    let mut alpha = Matrix::zeros(t_len, d);
    let mut scale = vec![0.0; t_len];
    let mut prior = params.pi().to_vec();
    for (t, &z) in seq.iter().enumerate() {
        scale[t] = correct(&prior, &emit(z), alpha.row_mut(t));
        a.left_mul(alpha.row(t), &mut prior);
    }

    // Scaled backward pass.
    let mut beta = Matrix::filled(t_len, d, 1.0);
    let mut weighted = vec![0.0; d];
    for t in (0..t_len - 1).rev() {
        let e = emit(seq[t + 1]);
        for j in 0..d {
            weighted[j] = e[j] * beta[(t + 1, j)] / scale[t + 1];
        }
        let mut row = vec![0.0; d];
        a.right_mul(&weighted, &mut row);
        beta.row_mut(t).copy_from_slice(&row);
    }

    let mut counts = Counts::zeros(d, m);
    let mut gamma = Matrix::zeros(t_len, d);
    for t in 0..t_len {
        let g = gamma.row_mut(t);
        let mut s = 0.0;
        for i in 0..d {
            g[i] = alpha[(t, i)] * beta[(t, i)];
            s += g[i];
        }
        g.iter_mut().for_each(|x| *x /= s);
        for (i, &gi) in g.iter().enumerate() {
            counts.obs_sum[(i, seq[t])] += gi;
        }
        if t + 1 < t_len {
            let e = emit(seq[t + 1]);
            for j in 0..d {
                weighted[j] = e[j] * beta[(t + 1, j)] / scale[t + 1];
            }
            for i in 0..d {
                let ai = alpha[(t, i)];
                if ai == 0.0 {
                    continue;
                }
                for j in 0..d {
                    counts.xi_sum[(i, j)] += ai * a[(i, j)] * weighted[j];
                }
            }
        }
    }
    counts.init_sum.copy_from_slice(gamma.row(0));
    counts.loglik = scale.iter().map(|s| s.ln()).sum();
    Ok((gamma, counts))
}

/// Scaled forward-backward smoothing of a single sequence.
pub fn forward_backward(params: &HmmParams, seq: &[usize]) -> Result<SmoothingStats> {
    let (gamma, counts) = smooth(params, seq)?;
    Ok(SmoothingStats {
        gamma: vec![gamma],
        xi_sum: counts.xi_sum,
        obs_sum: counts.obs_sum,
        init_sum: counts.init_sum,
        loglik: counts.loglik,
    })
}

fn e_step(params: &HmmParams, data: &SequenceDataset) -> Result<Counts> {
    let parts = data
        .sequences()
        .par_iter()
        .map(|s| smooth(params, s).map(|(_, c)| c))
        .collect::<Result<Vec<_>>>()?;
    let mut total = Counts::zeros(params.d(), params.m());
    for p in &parts {
        total.add(p);
    }
    Ok(total)
}

/// Row-normalizes `counts`; rows with no mass keep the row from `previous`.
fn normalize_rows(counts: &Matrix, previous: &Matrix) -> Matrix {
    let mut out = counts.clone();
    for i in 0..out.rows() {
        let s: f64 = counts.row(i).iter().sum();
        if s > 0.0 && s.is_finite() {
            out.row_mut(i).iter_mut().for_each(|x| *x /= s);
        } else {
            out.row_mut(i).copy_from_slice(previous.row(i));
        }
    }
    out
}

/// One EM iteration. Returns the updated parameters and the log-likelihood of
/// the input parameters.
pub fn em_step(params: &HmmParams, data: &SequenceDataset) -> Result<(HmmParams, f64)> {
    if params.m() != data.m() {
        return Err(Error::VocabMismatch {
            model: params.m(),
            data: data.m(),
        });
    }
    let counts = e_step(params, data)?;
    let n: f64 = counts.init_sum.iter().sum();
    let pi = if n > 0.0 {
        counts.init_sum.iter().map(|x| x / n).collect()
    } else {
        params.pi().to_vec()
    };
    let a = normalize_rows(&counts.xi_sum, params.transition());
    let c = normalize_rows(&counts.obs_sum, params.emission());
    Ok((HmmParams::new(pi, a, c)?, counts.loglik))
}

/// Softmax of standard-normal logits for every row of `pi`, `A`, `C`.
pub fn random_init(d: usize, m: usize, rng: &mut StreamRng) -> HmmParams {
    let mut row = |n: usize| -> Vec<f64> {
        let logits: Vec<f64> = (0..n).map(|_| rng::standard_normal(rng)).collect();
        softmax(&logits)
    };
    let pi = row(d);
    let a: Vec<Vec<f64>> = (0..d).map(|_| row(d)).collect();
    let c: Vec<Vec<f64>> = (0..d).map(|_| row(m)).collect();
    HmmParams::new(
        pi,
        Matrix::from_rows(&a).expect("square"),
        Matrix::from_rows(&c).expect("rectangular"),
    )
    .expect("softmax rows are stochastic")
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Per restart: training log-likelihood after 0, 1, 2, ... EM updates.
    pub trajectories: Vec<Vec<f64>>,
    /// Validation cross-entropy of each restart's final parameters.
    pub val_losses: Vec<f64>,
    pub selected: usize,
}

impl FitReport {
    pub fn selected_val_loss(&self) -> f64 {
        self.val_losses[self.selected]
    }
}

fn run_restart(data: &SequenceDataset, d: usize, cfg: &EmConfig, restart: usize) -> Result<(HmmParams, Vec<f64>)> {
    let mut params = random_init(d, data.m(), &mut rng::stream(cfg.seed, restart as u64));
    let mut trajectory = Vec::with_capacity(cfg.max_iters + 1);
    let mut stopped = false;
    for _ in 0..cfg.max_iters {
        let (next, ll) = em_step(&params, data)?;
        let stop = cfg.ll_tolerance > 0.0
            && trajectory
                .last()
                .is_some_and(|&prev: &f64| ll - prev < cfg.ll_tolerance);
        trajectory.push(ll);
        if stop {
            stopped = true;
            break;
        }
        params = next;
    }
    if !stopped {
        let ll = data
            .sequences()
            .par_iter()
            .map(|s| log_likelihood(&params, s))
            .collect::<Result<Vec<_>>>()?
            .iter()
            .sum();
        trajectory.push(ll);
    }
    Ok((params, trajectory))
}

/// Runs `cfg.restarts` EM runs and keeps the one with the lowest validation loss.
pub fn fit(data: &SequenceDataset, d: usize, cfg: &EmConfig, val: &SequenceDataset) -> Result<(HmmParams, FitReport)> {
    if d == 0 || cfg.restarts == 0 {
        return Err(Error::InvalidConfig("d and restarts must be at least 1".into()));
    }
    if data.m() != val.m() {
        return Err(Error::VocabMismatch {
            model: data.m(),
            data: val.m(),
        });
    }
    let runs = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let (params, traj) = run_restart(data, d, cfg, r)?;
            let v = dataset_loss(&params, val)?;
            Ok((params, traj, v))
        })
        .collect::<Result<Vec<_>>>()?;
    let selected = (0..runs.len())
        .min_by(|&i, &j| runs[i].2.total_cmp(&runs[j].2))
        .expect("at least one restart");
    let report = FitReport {
        trajectories: runs.iter().map(|r| r.1.clone()).collect(),
        val_losses: runs.iter().map(|r| r.2).collect(),
        selected,
    };
    let params = runs.into_iter().nth(selected).expect("index in range").0;
    Ok((params, report))
}
