//! Forward filter with a tape, and its hand-derived adjoint.
//!
//! For an input `z_0..z_{L-1}` the forward pass runs the filter over every
//! token, giving `p_1..p_L`; the loss uses `p_1..p_{L-1}` against
//! `z_1..z_{L-1}`. Per step `t`:
//!
//! ```text
//! u_t     = prior_t * C[:, z_t]         (+ floor when sum(u_t) underflows)
//! post_t  = u_t / sum(u_t)
//! keep_t  = post_t * r_t / sum(post_t * r_t)   (dropout, training only)
//! prior_{t+1} = keep_t A
//! p_{t+1}     = prior_{t+1} C
//! ```
//!
//! The backward pass walks the steps in reverse, carrying the adjoint of
//! `prior_{t+1}`, and accumulates adjoints of the probabilities `(pi, A, C)`.
//! The row-wise softmax Jacobian is applied once at the end.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::hmm::{correct, cross_entropy, HmmParams, PROB_CLAMP};
use crate::matrix::Matrix;

use super::LogitParams;

#[derive(Debug, Clone)]
struct Dropout {
    /// `mask / (1 - p)` per state.
    scale: Vec<f64>,
    /// `sum(post * scale)` before renormalization.
    total: f64,
    /// Posterior before dropout.
    post: Vec<f64>,
}

/// Intermediates of one forward pass, sufficient for [`backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    seq: Vec<usize>,
    /// `prior_t` for `t = 0..=L`, flattened `d` at a time.
    priors: Vec<f64>,
    /// Posterior after dropout (the value multiplied into `A`), per step.
    posts: Vec<f64>,
    norms: Vec<f64>,
    dropout: Vec<Option<Dropout>>,
    d: usize,
}

#[derive(Debug, Clone)]
pub struct Forward {
    /// `p_1..p_L`.
    pub predictions: Vec<Vec<f64>>,
    /// Mean cross-entropy of `p_1..p_{L-1}` against `z_1..z_{L-1}`.
    pub loss: f64,
    pub tape: Tape,
}

/// Softmaxed parameters, built once per batch.
pub(crate) struct Network {
    pub(crate) probs: HmmParams,
}

impl Network {
    pub(crate) fn new(logits: &LogitParams) -> Self {
        Network {
            probs: logits.to_probs(),
        }
    }

    /// `dropout` carries the rate and its random stream; `None` disables it.
    pub(crate) fn forward(&self, seq: &[usize], mut dropout: Option<(f64, &mut dyn RngCore)>) -> Result<Forward> {
        if seq.len() < 2 {
            return Err(Error::NoPredictionTargets);
        }
        let p = &self.probs;
        let (d, m) = (p.d(), p.m());
        if let Some(&bad) = seq.iter().find(|&&z| z >= m) {
            return Err(Error::ObservationOutOfRange { obs: bad, m });
        }
        let (a, c) = (p.transition(), p.emission());
        let steps = seq.len();
        let mut priors = Vec::with_capacity((steps + 1) * d);
        priors.extend_from_slice(p.pi());
        let mut posts = vec![0.0; steps * d];
        let mut norms = Vec::with_capacity(steps);
        let mut drops = Vec::with_capacity(steps);
        let mut predictions = Vec::with_capacity(steps);
        let mut likelihood = vec![0.0; d];
        let mut next = vec![0.0; d];
        for (t, &z) in seq.iter().enumerate() {
            for (l, v) in likelihood.iter_mut().zip(c.column(z)) {
                *l = v;
            }
            let post = &mut posts[t * d..(t + 1) * d];
            norms.push(correct(&priors[t * d..(t + 1) * d], &likelihood, post));
            drops.push(match dropout.as_mut() {
                Some((rate, rng)) if *rate > 0.0 => apply_dropout(post, *rate, &mut **rng),
                _ => None,
            });
            a.left_mul(post, &mut next);
            priors.extend_from_slice(&next);
            let mut pred = vec![0.0; m];
            c.left_mul(&next, &mut pred);
            predictions.push(pred);
        }
        let loss = cross_entropy(&predictions[..steps - 1], &seq[1..])?.loss;
        Ok(Forward {
            predictions,
            loss,
            tape: Tape {
                seq: seq.to_vec(),
                priors,
                posts,
                norms,
                dropout: drops,
                d,
            },
        })
    }

    /// Adds `d loss / d (pi, A, C)` for one tape into `acc`, scaled by `weight`.
    pub(crate) fn accumulate(&self, tape: &Tape, weight: f64, acc: &mut LogitParams) {
        let p = &self.probs;
        let (a, c) = (p.transition(), p.emission());
        let d = tape.d;
        let seq = &tape.seq;
        let targets = seq.len() - 1;
        let g_scale = weight / targets as f64;

        let mut d_prior = vec![0.0; d];
        let mut d_post = vec![0.0; d];
        let mut d_u = vec![0.0; d];
        for t in (0..targets).rev() {
            let prior_next = &tape.priors[(t + 1) * d..(t + 2) * d];
            let z_next = seq[t + 1];
            // p_{t+1} = prior_{t+1} C, scored at z_{t+1}.
            let q: f64 = prior_next.iter().zip(c.column(z_next)).map(|(x, y)| x * y).sum();
            if q >= PROB_CLAMP {
                let g = -g_scale / q;
                for i in 0..d {
                    d_prior[i] += g * c[(i, z_next)];
                    acc.c[(i, z_next)] += g * prior_next[i];
                }
            }
            // prior_{t+1} = keep_t A.
            let keep = &tape.posts[t * d..(t + 1) * d];
            a.right_mul(&d_prior, &mut d_post);
            for (i, &k) in keep.iter().enumerate() {
                if k != 0.0 {
                    for (da, &dp) in acc.a.row_mut(i).iter_mut().zip(&d_prior) {
                        *da += k * dp;
                    }
                }
            }
            // Dropout renormalization: keep = w / sum(w), w = post * scale.
            let post = match &tape.dropout[t] {
                Some(drop) => {
                    let dot: f64 = d_post.iter().zip(keep).map(|(x, y)| x * y).sum();
                    for (i, dp) in d_post.iter_mut().enumerate() {
                        *dp = (*dp - dot) / drop.total * drop.scale[i];
                    }
                    &drop.post[..]
                }
                None => keep,
            };
            // Correction: post = u / sum(u), u = prior_t * C[:, z_t].
            let z = seq[t];
            let prior = &tape.priors[t * d..(t + 1) * d];
            let dot: f64 = d_post.iter().zip(post).map(|(x, y)| x * y).sum();
            for i in 0..d {
                d_u[i] = (d_post[i] - dot) / tape.norms[t];
                acc.c[(i, z)] += d_u[i] * prior[i];
                d_prior[i] = d_u[i] * c[(i, z)];
            }
        }
        for (dp, g) in acc.pi.iter_mut().zip(&d_prior) {
            *dp += g;
        }
    }

    /// Maps probability-space adjoints to logit gradients through each row's softmax.
    pub(crate) fn softmax_backward(&self, acc: &LogitParams) -> LogitParams {
        let p = &self.probs;
        let mut grad = LogitParams::zeros(p.d(), p.m());
        softmax_row_backward(p.pi(), &acc.pi, &mut grad.pi);
        rows_backward(p.transition(), &acc.a, &mut grad.a);
        rows_backward(p.emission(), &acc.c, &mut grad.c);
        grad
    }
}

fn softmax_row_backward(probs: &[f64], upstream: &[f64], out: &mut [f64]) {
    let dot: f64 = probs.iter().zip(upstream).map(|(p, g)| p * g).sum();
    for ((o, &p), &g) in out.iter_mut().zip(probs).zip(upstream) {
        *o = p * (g - dot);
    }
}

fn rows_backward(probs: &Matrix, upstream: &Matrix, out: &mut Matrix) {
    for i in 0..probs.rows() {
        softmax_row_backward(probs.row(i), upstream.row(i), out.row_mut(i));
    }
}

/// Element-wise dropout on a normalized posterior, rescaled by `1/(1-p)` and
/// renormalized. Leaves `post` untouched if every state is dropped.
fn apply_dropout(post: &mut [f64], rate: f64, rng: &mut dyn RngCore) -> Option<Dropout> {
    let keep_scale = 1.0 / (1.0 - rate);
    let scale: Vec<f64> = post
        .iter()
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep_scale })
        .collect();
    let total: f64 = post.iter().zip(&scale).map(|(p, s)| p * s).sum();
    if total <= 0.0 {
        return None;
    }
    let before = post.to_vec();
    for (p, s) in post.iter_mut().zip(&scale) {
        *p = *p * s / total;
    }
    Some(Dropout {
        scale,
        total,
        post: before,
    })
}

/// Deterministic forward pass (no dropout).
pub fn forward(lp: &LogitParams, seq: &[usize]) -> Result<Forward> {
    Network::new(lp).forward(seq, None)
}

/// Exact gradient of the tape's loss with respect to `lp`.
pub fn backward(lp: &LogitParams, tape: &Tape) -> LogitParams {
    let net = Network::new(lp);
    let mut acc = LogitParams::zeros(lp.d(), lp.m());
    net.accumulate(tape, 1.0, &mut acc);
    net.softmax_backward(&acc)
}

/// Mean loss and gradient over `batch`, reduced in sequence order.
pub fn batch_gradient(
    lp: &LogitParams,
    batch: &[&[usize]],
    dropout: f64,
    rng: &mut dyn RngCore,
) -> Result<(f64, LogitParams)> {
    let net = Network::new(lp);
    let weight = 1.0 / batch.len() as f64;
    let mut acc = LogitParams::zeros(lp.d(), lp.m());
    let mut loss = 0.0;
    for seq in batch {
        let fwd = net.forward(seq, Some((dropout, &mut *rng)))?;
        loss += fwd.loss * weight;
        net.accumulate(&fwd.tape, weight, &mut acc);
    }
    Ok((loss, net.softmax_backward(&acc)))
}
