//! Belief Net: the HMM filter with softmax-parameterized `(pi, A, C)`, trained
//! by exact reverse-mode gradients of the next-token cross-entropy.

mod adamw;
mod network;
mod train;

pub use adamw::{adamw_step, OptimizerState};
pub use network::{backward, batch_gradient, forward, Forward, Tape};
pub use train::{grid_search, train, GridOutcome, GridRun, LossCurves, TrainConfig, TrainOutcome};

use rand::Rng;

use crate::error::{Error, Result};
use crate::hmm::HmmParams;
use crate::matrix::{softmax, softmax_rows, Matrix};
use crate::rng;

/// Unconstrained logits whose row-wise softmax gives `(pi, A, C)`.
///
/// Also used for gradients and optimizer moments, which share the shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitParams {
    pub pi: Vec<f64>,
    pub a: Matrix,
    pub c: Matrix,
}

impl LogitParams {
    pub fn zeros(d: usize, m: usize) -> Self {
        LogitParams {
            pi: vec![0.0; d],
            a: Matrix::zeros(d, d),
            c: Matrix::zeros(d, m),
        }
    }

    pub fn new(pi: Vec<f64>, a: Matrix, c: Matrix) -> Result<Self> {
        let d = pi.len();
        if d == 0 || a.rows() != d || a.cols() != d || c.rows() != d || c.cols() < 2 {
            return Err(Error::InvalidParams(format!(
                "logit shapes pi={d}, A={}x{}, C={}x{}",
                a.rows(),
                a.cols(),
                c.rows(),
                c.cols()
            )));
        }
        let lp = LogitParams { pi, a, c };
        if lp.blocks().iter().any(|(_, b)| b.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidParams("non-finite logit".into()));
        }
        Ok(lp)
    }

    /// I.i.d. `Normal(0, std^2)` logits.
    pub fn random<R: Rng + ?Sized>(d: usize, m: usize, std: f64, rng: &mut R) -> Self {
        let mut lp = Self::zeros(d, m);
        for (_, block) in lp.blocks_mut() {
            for x in block.iter_mut() {
                *x = std * rng::standard_normal(rng);
            }
        }
        lp
    }

    pub fn d(&self) -> usize {
        self.pi.len()
    }

    pub fn m(&self) -> usize {
        self.c.cols()
    }

    pub fn blocks(&self) -> [(&'static str, &[f64]); 3] {
        [("pi", &self.pi), ("A", self.a.as_slice()), ("C", self.c.as_slice())]
    }

    pub fn blocks_mut(&mut self) -> [(&'static str, &mut [f64]); 3] {
        [
            ("pi", &mut self.pi),
            ("A", self.a.as_mut_slice()),
            ("C", self.c.as_mut_slice()),
        ]
    }

    pub fn to_probs(&self) -> HmmParams {
        HmmParams::new(softmax(&self.pi), softmax_rows(&self.a), softmax_rows(&self.c))
            .expect("softmax of finite logits is stochastic")
    }

    /// Logits reproducing `params` exactly (`ln p`), with zeros mapped to `floor`.
    pub fn from_probs(params: &HmmParams, floor: f64) -> Self {
        let ln = |p: f64| if p > 0.0 { p.ln() } else { floor };
        let (d, m) = (params.d(), params.m());
        LogitParams {
            pi: params.pi().iter().map(|&p| ln(p)).collect(),
            a: Matrix::from_fn(d, d, |i, j| ln(params.transition()[(i, j)])),
            c: Matrix::from_fn(d, m, |i, k| ln(params.emission()[(i, k)])),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, b) in self.blocks_mut() {
            b.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &LogitParams) {
        for ((_, dst), (_, src)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
        }
    }
}

pub fn to_probs(lp: &LogitParams) -> HmmParams {
    lp.to_probs()
}
