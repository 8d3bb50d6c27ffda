//! The discrete HMM, its forward filter and the one-step-ahead cross-entropy.
//!
//! States and symbols are 0-based indices: `A[i][j] = P(X_{t+1}=j | X_t=i)` and
//! `C[i][k] = P(Z_t=k | X_t=i)`. All arithmetic is `f64` with per-step
//! renormalization instead of log space.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

/// Tolerance on row sums of stochastic vectors and matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Below this unnormalized posterior mass the observation is treated as impossible.
pub const POSTERIOR_UNDERFLOW: f64 = 1e-300;
/// Mass added to every posterior entry when the observation is impossible.
pub const POSTERIOR_FLOOR: f64 = 1e-12;
/// Smallest probability fed to `ln` in the cross-entropy.
pub const PROB_CLAMP: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct HmmParams {
    pi: Vec<f64>,
    a: Matrix,
    c: Matrix,
}

fn check_distribution(what: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::InvalidParams(format!("{what} has an entry outside [0,1]")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidParams(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

impl HmmParams {
    pub fn new(pi: Vec<f64>, a: Matrix, c: Matrix) -> Result<Self> {
        let d = pi.len();
        if d == 0 {
            return Err(Error::InvalidParams("d must be at least 1".into()));
        }
        if a.rows() != d || a.cols() != d {
            return Err(Error::InvalidParams(format!(
                "A is {}x{}, expected {d}x{d}",
                a.rows(),
                a.cols()
            )));
        }
        if c.rows() != d {
            return Err(Error::InvalidParams(format!("C has {} rows, expected {d}", c.rows())));
        }
        if c.cols() < 2 {
            return Err(Error::InvalidParams("m must be at least 2".into()));
        }
        check_distribution("pi", &pi)?;
        for i in 0..d {
            check_distribution(&format!("A row {i}"), a.row(i))?;
            check_distribution(&format!("C row {i}"), c.row(i))?;
        }
        Ok(HmmParams { pi, a, c })
    }

    /// Uniform initial, transition and emission distributions.
    pub fn uniform(d: usize, m: usize) -> Result<Self> {
        Self::new(
            vec![1.0 / d as f64; d],
            Matrix::filled(d, d, 1.0 / d as f64),
            Matrix::filled(d, m, 1.0 / m as f64),
        )
    }

    pub fn d(&self) -> usize {
        self.pi.len()
    }

    pub fn m(&self) -> usize {
        self.c.cols()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn transition(&self) -> &Matrix {
        &self.a
    }

    pub fn emission(&self) -> &Matrix {
        &self.c
    }

    /// Same chain started from `pi` instead of the stored initial distribution.
    pub fn with_initial(&self, pi: Vec<f64>) -> Result<Self> {
        Self::new(pi, self.a.clone(), self.c.clone())
    }

    /// Largest absolute entry difference across `pi`, `A` and `C`.
    pub fn max_abs_diff(&self, other: &HmmParams) -> f64 {
        let pi = self
            .pi
            .iter()
            .zip(&other.pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        pi.max(self.a.max_abs_diff(&other.a)).max(self.c.max_abs_diff(&other.c))
    }

    /// Relabels hidden states: state `i` of the result is state `perm[i]` of `self`.
    pub fn permute_states(&self, perm: &[usize]) -> HmmParams {
        let d = self.d();
        let pi = perm.iter().map(|&p| self.pi[p]).collect();
        let a = Matrix::from_fn(d, d, |i, j| self.a[(perm[i], perm[j])]);
        let c = Matrix::from_fn(d, self.m(), |i, k| self.c[(perm[i], k)]);
        HmmParams { pi, a, c }
    }
}

/// Number of logits in the softmax parameterization of a `(d, m)` model.
pub fn param_count(d: usize, m: usize) -> usize {
    d + d * d + d * m
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    m: usize,
    sequences: Vec<Vec<usize>>,
    metadata: Option<BTreeMap<usize, String>>,
}

impl SequenceDataset {
    pub fn new(m: usize, sequences: Vec<Vec<usize>>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidDataset("m must be positive".into()));
        }
        if sequences.is_empty() {
            return Err(Error::InvalidDataset("no sequences".into()));
        }
        for (n, seq) in sequences.iter().enumerate() {
            if seq.is_empty() {
                return Err(Error::InvalidDataset(format!("sequence {n} is empty")));
            }
            if let Some(&bad) = seq.iter().find(|&&z| z >= m) {
                return Err(Error::ObservationOutOfRange { obs: bad, m });
            }
        }
        Ok(SequenceDataset {
            m,
            sequences,
            metadata: None,
        })
    }

    pub fn with_metadata(mut self, glyphs: BTreeMap<usize, String>) -> Self {
        self.metadata = Some(glyphs);
        self
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn sequences(&self) -> &[Vec<usize>] {
        &self.sequences
    }

    pub fn metadata(&self) -> Option<&BTreeMap<usize, String>> {
        self.metadata.as_ref()
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }

    pub fn into_sequences(self) -> Vec<Vec<usize>> {
        self.sequences
    }
}

/// Filter state after consuming one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    /// `mu_{t|t-1}`: belief before the current observation (after `filter_step`,
    /// the prior for the next time step).
    pub prior: Vec<f64>,
    /// `mu_t`: belief after the current observation.
    pub posterior: Vec<f64>,
    /// `e_t = C[:, z_t]`.
    pub likelihood: Vec<f64>,
    /// `p_{t+1} = mu_{t+1|t} C`.
    pub prediction: Vec<f64>,
}

pub fn filter_init(params: &HmmParams) -> BeliefState {
    BeliefState {
        prior: params.pi.clone(),
        posterior: vec![0.0; params.d()],
        likelihood: vec![0.0; params.d()],
        prediction: vec![0.0; params.m()],
    }
}

/// Correction step in place: `post = e * prior / sum(e * prior)`, with the
/// floor rule on impossible observations. Returns the normalizer actually used.
pub(crate) fn correct(prior: &[f64], likelihood: &[f64], post: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for ((p, &pr), &e) in post.iter_mut().zip(prior).zip(likelihood) {
        *p = pr * e;
        total += *p;
    }
    if total < POSTERIOR_UNDERFLOW {
        total = 0.0;
        for p in post.iter_mut() {
            *p += POSTERIOR_FLOOR;
            total += *p;
        }
    }
    for p in post.iter_mut() {
        *p /= total;
    }
    total
}

fn check_obs(obs: usize, m: usize) -> Result<()> {
    if obs >= m {
        Err(Error::ObservationOutOfRange { obs, m })
    } else {
        Ok(())
    }
}

pub fn filter_step(state: &BeliefState, params: &HmmParams, obs: usize) -> Result<BeliefState> {
    check_obs(obs, params.m())?;
    let d = params.d();
    let likelihood: Vec<f64> = params.c.column(obs).collect();
    let mut posterior = vec![0.0; d];
    correct(&state.prior, &likelihood, &mut posterior);
    let mut prior = vec![0.0; d];
    params.a.left_mul(&posterior, &mut prior);
    let mut prediction = vec![0.0; params.m()];
    params.c.left_mul(&prior, &mut prediction);
    Ok(BeliefState {
        prior,
        posterior,
        likelihood,
        prediction,
    })
}

/// Runs the filter over `seq` and returns `p_1..p_T`, where `p_{t+1}` is the
/// predicted distribution of the token after `seq[t]`.
pub fn filter_run(params: &HmmParams, seq: &[usize]) -> Result<Vec<Vec<f64>>> {
    if seq.is_empty() {
        return Err(Error::InvalidDataset("empty sequence".into()));
    }
    let (d, m) = (params.d(), params.m());
    let mut prior = params.pi.clone();
    let mut post = vec![0.0; d];
    let mut likelihood = vec![0.0; d];
    let mut out = Vec::with_capacity(seq.len());
    for &z in seq {
        check_obs(z, m)?;
        for (l, v) in likelihood.iter_mut().zip(params.c.column(z)) {
            *l = v;
        }
        correct(&prior, &likelihood, &mut post);
        params.a.left_mul(&post, &mut prior);
        let mut p = vec![0.0; m];
        params.c.left_mul(&prior, &mut p);
        out.push(p);
    }
    Ok(out)
}

/// Cross-entropy in nats together with how many target probabilities were clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy {
    pub loss: f64,
    pub clamped: usize,
}

/// Mean negative log-probability of `targets[t]` under `predictions[t]`.
pub fn cross_entropy(predictions: &[Vec<f64>], targets: &[usize]) -> Result<CrossEntropy> {
    if predictions.len() != targets.len() {
        return Err(Error::LengthMismatch {
            what: "predictions vs targets",
            left: predictions.len(),
            right: targets.len(),
        });
    }
    if targets.is_empty() {
        return Err(Error::NoPredictionTargets);
    }
    let mut clamped = 0;
    let mut total = 0.0;
    for (p, &z) in predictions.iter().zip(targets) {
        let &q = p.get(z).ok_or(Error::ObservationOutOfRange { obs: z, m: p.len() })?;
        let q = if q < PROB_CLAMP {
            clamped += 1;
            PROB_CLAMP
        } else {
            q
        };
        total -= q.ln();
    }
    Ok(CrossEntropy {
        loss: (total / targets.len() as f64).max(0.0),
        clamped,
    })
}

/// Per-sequence objective: predictions from `seq[..T-1]` scored against `seq[1..]`.
pub fn sequence_loss(params: &HmmParams, seq: &[usize]) -> Result<CrossEntropy> {
    if seq.len() < 2 {
        return Err(Error::NoPredictionTargets);
    }
    let preds = filter_run(params, &seq[..seq.len() - 1])?;
    cross_entropy(&preds, &seq[1..])
}

/// Mean over sequences of [`sequence_loss`]. Sequences with a single token
/// carry no target and are skipped.
pub fn dataset_loss(params: &HmmParams, data: &SequenceDataset) -> Result<f64> {
    use rayon::prelude::*;
    if params.m() != data.m() {
        return Err(Error::VocabMismatch {
            model: params.m(),
            data: data.m(),
        });
    }
    let losses = data
        .sequences()
        .par_iter()
        .filter(|s| s.len() >= 2)
        .map(|s| sequence_loss(params, s).map(|ce| ce.loss))
        .collect::<Result<Vec<f64>>>()?;
    if losses.is_empty() {
        return Err(Error::NoPredictionTargets);
    }
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// `log P(Z_{0:T})` by the scaled forward recursion.
pub fn log_likelihood(params: &HmmParams, seq: &[usize]) -> Result<f64> {
    let d = params.d();
    let mut prior = params.pi.clone();
    let mut post = vec![0.0; d];
    let mut likelihood = vec![0.0; d];
    let mut total = 0.0;
    for &z in seq {
        check_obs(z, params.m())?;
        for (l, v) in likelihood.iter_mut().zip(params.c.column(z)) {
            *l = v;
        }
        total += correct(&prior, &likelihood, &mut post).ln();
        params.a.left_mul(&post, &mut prior);
    }
    Ok(total)
}

/// Stationary distribution of a row-stochastic matrix by power iteration on
/// the lazy chain `(I + A) / 2`, which shares its fixed points with `A`.
pub fn stationary_distribution(a: &Matrix) -> Result<Vec<f64>> {
    let d = a.rows();
    let mut p = vec![1.0 / d as f64; d];
    let mut next = vec![0.0; d];
    for _ in 0..1_000_000 {
        a.left_mul(&p, &mut next);
        let mut delta: f64 = 0.0;
        for (n, &old) in next.iter_mut().zip(&p) {
            *n = 0.5 * (*n + old);
            delta = delta.max((*n - old).abs());
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        std::mem::swap(&mut p, &mut next);
        if delta < 1e-15 {
            // Fixed point of the lazy chain; confirm it is fixed under A itself.
            a.left_mul(&p, &mut next);
            let residual = next.iter().zip(&p).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            if residual < 1e-12 {
                return Ok(p);
            }
        }
    }
    Err(Error::NoStationaryDistribution)
}

/// Ancestral sampling from `rng`: `X_0 ~ pi`, `Z_t ~ C[X_t]`, `X_{t+1} ~ A[X_t]`.
pub fn sample_with<R: Rng + ?Sized>(params: &HmmParams, n: usize, t: usize, rng: &mut R) -> Result<SequenceDataset> {
    if n == 0 || t == 0 {
        return Err(Error::InvalidConfig("sample count and length must be positive".into()));
    }
    let sequences = (0..n)
        .map(|_| {
            let mut x = rng::categorical(rng, &params.pi);
            (0..t)
                .map(|_| {
                    let z = rng::categorical(rng, params.c.row(x));
                    x = rng::categorical(rng, params.a.row(x));
                    z
                })
                .collect()
        })
        .collect();
    SequenceDataset::new(params.m(), sequences)
}

pub fn sample_sequences(params: &HmmParams, n: usize, t: usize, seed: u64) -> Result<SequenceDataset> {
    sample_with(params, n, t, &mut rng::stream(seed, 0))
}
