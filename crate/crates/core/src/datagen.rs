//! Synthetic HMM instances: cyclic-plus-random transitions and low-temperature
//! softmax emissions, with train/validation datasets from separate streams.

use rand::Rng;

use crate::error::{Error, Result};
use crate::hmm::{sample_with, HmmParams, SequenceDataset};
use crate::matrix::{softmax_into, Matrix};
use crate::rng;

const STREAM_TRANSITION: u64 = 0;
const STREAM_EMISSION: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_VAL: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub d: usize,
    pub m: usize,
    /// Weight of the cyclic permutation in the transition matrix.
    pub lambda: f64,
    pub temp_a: f64,
    pub temp_c: f64,
    pub n_train: usize,
    pub t: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(d: usize, m: usize, n_train: usize, seed: u64) -> Self {
        SyntheticConfig {
            d,
            m,
            lambda: 0.9,
            temp_a: 0.1,
            temp_c: 0.01,
            n_train,
            t: 256,
            val_fraction: 0.10,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.d == 0 || self.m < 2 {
            return bad(format!("need d >= 1 and m >= 2, got d={} m={}", self.d, self.m));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must be in [0,1], got {}", self.lambda));
        }
        if !(self.temp_a > 0.0 && self.temp_c > 0.0) {
            return bad("temperatures must be positive".into());
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!("val_fraction must be in (0,1), got {}", self.val_fraction));
        }
        if self.n_train == 0 || self.t == 0 {
            return bad("n_train and t must be positive".into());
        }
        Ok(())
    }

    /// `round(val_fraction * n_train)`, at least 1.
    pub fn n_val(&self) -> usize {
        ((self.val_fraction * self.n_train as f64).round() as usize).max(1)
    }
}

fn stochastic_with<R: Rng + ?Sized>(rows: usize, cols: usize, temp: f64, rng: &mut R) -> Matrix {
    let mut out = Matrix::zeros(rows, cols);
    let mut g = vec![0.0; cols];
    for i in 0..rows {
        g.iter_mut().for_each(|x| *x = rng::standard_normal(rng));
        softmax_into(&g, temp, out.row_mut(i));
    }
    out
}

/// Rows are `softmax(g / temp)` for i.i.d. standard-normal `g`.
pub fn random_stochastic_matrix(rows: usize, cols: usize, temp: f64, seed: u64) -> Matrix {
    stochastic_with(rows, cols, temp, &mut rng::stream(seed, 0))
}

pub fn cyclic_permutation(d: usize) -> Matrix {
    Matrix::from_fn(d, d, |i, j| if j == (i + 1) % d { 1.0 } else { 0.0 })
}

fn mix_cyclic(lambda: f64, random: Matrix) -> Matrix {
    let cyc = cyclic_permutation(random.rows());
    Matrix::from_fn(random.rows(), random.cols(), |i, j| {
        lambda * cyc[(i, j)] + (1.0 - lambda) * random[(i, j)]
    })
}

/// `lambda * cyclic + (1 - lambda) * random_stochastic_matrix(d, d, temp, seed)`.
pub fn make_transition(d: usize, lambda: f64, temp: f64, seed: u64) -> Matrix {
    mix_cyclic(lambda, random_stochastic_matrix(d, d, temp, seed))
}

pub struct Instance {
    pub params: HmmParams,
    pub train: SequenceDataset,
    pub val: SequenceDataset,
}

pub fn make_instance(cfg: &SyntheticConfig) -> Result<Instance> {
    cfg.validate()?;
    let random = stochastic_with(cfg.d, cfg.d, cfg.temp_a, &mut rng::stream(cfg.seed, STREAM_TRANSITION));
    let a = mix_cyclic(cfg.lambda, random);
    let c = stochastic_with(cfg.d, cfg.m, cfg.temp_c, &mut rng::stream(cfg.seed, STREAM_EMISSION));
    let params = HmmParams::new(vec![1.0 / cfg.d as f64; cfg.d], a, c)?;
    let train = sample_with(&params, cfg.n_train, cfg.t, &mut rng::stream(cfg.seed, STREAM_TRAIN))?;
    let val = sample_with(&params, cfg.n_val(), cfg.t, &mut rng::stream(cfg.seed, STREAM_VAL))?;
    Ok(Instance { params, train, val })
}
