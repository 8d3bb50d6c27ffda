//! Method-of-moments learning of an observable representation.
//!
//! From empirical probabilities of single symbols `P1`, ordered pairs
//! `P21[z'][z] = P(Z_{t+1}=z', Z_t=z)` and triples
//! `P3[k][z'][z] = P(Z_{t+2}=z', Z_{t+1}=k, Z_t=z)`, with `U` the top-`d` left
//! singular vectors of `P21`:
//!
//! ```text
//! b0   = U' P1
//! binf = (P21' U)^+ P1
//! B_k  = U' P3[k] (U' P21)^+
//! ```
//!
//! Prediction runs `b <- B_z b / (binf' B_z b)` and scores the next symbol by
//! `binf' B_k b`, repairing negative scores before normalizing.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hmm::{stationary_distribution, HmmParams, SequenceDataset};
use crate::matrix::Matrix;

/// Smallest admissible `d`-th singular value of `P21`.
pub const RANK_THRESHOLD: f64 = 1e-10;
/// Relative singular-value cutoff for pseudoinverses.
pub const PINV_RCOND: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub p1: Vec<f64>,
    /// Row is the later symbol: `p21[(z', z)]`.
    pub p21: Matrix,
    /// `p3[k][(z', z)]` with `k` the middle symbol.
    pub p3: Vec<Matrix>,
}

impl Moments {
    pub fn m(&self) -> usize {
        self.p1.len()
    }
}

/// Counts every overlapping window `(z_t, z_{t+1}, z_{t+2})`; `P1` and `P21`
/// are marginals of the same triple counts. Sequences shorter than 3 are skipped.
pub fn estimate_moments(data: &SequenceDataset) -> Result<Moments> {
    let m = data.m();
    let mut p3 = vec![Matrix::zeros(m, m); m];
    let mut windows = 0usize;
    for seq in data.sequences() {
        for w in seq.windows(3) {
            p3[w[1]][(w[2], w[0])] += 1.0;
            windows += 1;
        }
    }
    if windows == 0 {
        return Err(Error::NoTripleWindows);
    }
    let n = windows as f64;
    let mut p21 = Matrix::zeros(m, m);
    let mut p1 = vec![0.0; m];
    for (k, slice) in p3.iter_mut().enumerate() {
        for x in slice.as_mut_slice() {
            *x /= n;
        }
        for z_next in 0..m {
            for z in 0..m {
                let v = slice[(z_next, z)];
                p21[(k, z)] += v;
                p1[z] += v;
            }
        }
    }
    Ok(Moments { p1, p21, p3 })
}

/// Population moments of `params` under its stationary distribution.
pub fn exact_moments(params: &HmmParams) -> Result<Moments> {
    let pi = stationary_distribution(params.transition())?;
    let (d, m) = (params.d(), params.m());
    let (a, c) = (params.transition(), params.emission());
    let p1 = (0..m).map(|z| (0..d).map(|i| pi[i] * c[(i, z)]).sum()).collect();
    // alpha[z][j] = sum_i pi_i C[i][z] A[i][j]
    let alpha = Matrix::from_fn(m, d, |z, j| (0..d).map(|i| pi[i] * c[(i, z)] * a[(i, j)]).sum());
    let p21 = Matrix::from_fn(m, m, |z_next, z| (0..d).map(|j| alpha[(z, j)] * c[(j, z_next)]).sum());
    let p3 = (0..m)
        .map(|k| {
            let beta = Matrix::from_fn(m, d, |z, l| (0..d).map(|j| alpha[(z, j)] * c[(j, k)] * a[(j, l)]).sum());
            Matrix::from_fn(m, m, |z_next, z| (0..d).map(|l| beta[(z, l)] * c[(l, z_next)]).sum())
        })
        .collect();
    Ok(Moments { p1, p21, p3 })
}

/// Singular values of `P21`, descending, with the count above [`RANK_THRESHOLD`].
#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub singular_values: Vec<f64>,
    pub effective_rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    pub b0: Vec<f64>,
    pub binf: Vec<f64>,
    /// `B_k`, one `d x d` operator per symbol.
    pub b_ops: Vec<Matrix>,
    /// `m x d`, orthonormal columns.
    pub u: Matrix,
}

#[derive(Debug, Clone)]
pub struct SpectralFit {
    pub model: SpectralModel,
    pub rank: RankReport,
}

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn from_na(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// SVD with singular values sorted descending: `(U, sigma, V^T)`.
fn sorted_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let vt = DMatrix::from_fn(order.len(), vt.ncols(), |r, c| vt[(order[r], c)]);
    (u, sigma, vt)
}

/// Moore-Penrose pseudoinverse, discarding singular values below
/// `PINV_RCOND * sigma_max`.
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (u, sigma, vt) = sorted_svd(a);
    let cutoff = PINV_RCOND * sigma.first().copied().unwrap_or(0.0);
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for (k, &s) in sigma.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += (vt.row(k).transpose() * u.column(k).transpose()) / s;
        }
    }
    out
}

pub fn rank_report(moments: &Moments) -> RankReport {
    let (_, sigma, _) = sorted_svd(&to_na(&moments.p21));
    let effective_rank = sigma.iter().filter(|&&s| s >= RANK_THRESHOLD).count();
    RankReport {
        singular_values: sigma,
        effective_rank,
    }
}

pub fn build_observable(moments: &Moments, d: usize) -> Result<SpectralFit> {
    let m = moments.m();
    let p21 = to_na(&moments.p21);
    let (u_full, sigma, _) = sorted_svd(&p21);
    let effective_rank = sigma.iter().filter(|&&s| s >= RANK_THRESHOLD).count();
    let rank = RankReport {
        singular_values: sigma.clone(),
        effective_rank,
    };
    if d == 0 || d > m {
        return Err(Error::RankDeficiency {
            requested: d,
            detail: format!("P21 is {m}x{m} and has only {m} singular values"),
        });
    }
    if sigma[d - 1] < RANK_THRESHOLD {
        return Err(Error::RankDeficiency {
            requested: d,
            detail: format!(
                "singular value {} is {:e} (effective rank {effective_rank})",
                d,
                sigma[d - 1]
            ),
        });
    }
    let u = u_full.columns(0, d).into_owned();
    let p1 = DVector::from_column_slice(&moments.p1);
    let b0 = u.transpose() * &p1;
    let binf = pinv(&(p21.transpose() * &u)) * &p1;
    let right = pinv(&(u.transpose() * &p21));
    let b_ops = moments
        .p3
        .iter()
        .map(|p3k| from_na(&(u.transpose() * to_na(p3k) * &right)))
        .collect();
    Ok(SpectralFit {
        model: SpectralModel {
            b0: b0.iter().copied().collect(),
            binf: binf.iter().copied().collect(),
            b_ops,
            u: from_na(&u),
        },
        rank,
    })
}

impl SpectralModel {
    pub fn d(&self) -> usize {
        self.b0.len()
    }

    pub fn m(&self) -> usize {
        self.b_ops.len()
    }

    /// Number of values used at prediction time: `b0`, `binf` and every `B_k`.
    pub fn param_count(&self) -> usize {
        2 * self.d() + self.m() * self.d() * self.d()
    }

    pub fn validate(&self) -> Result<()> {
        let (d, m) = (self.d(), self.m());
        let bad = d == 0
            || m < 2
            || self.binf.len() != d
            || self.b_ops.iter().any(|b| b.rows() != d || b.cols() != d)
            || self.u.rows() != m
            || self.u.cols() != d;
        if bad {
            return Err(Error::InvalidParams("inconsistent spectral model shapes".into()));
        }
        Ok(())
    }

    /// `binf' B_k` for every `k`, so that scores are `row_k . b`.
    fn score_rows(&self) -> Matrix {
        let d = self.d();
        let mut rows = Matrix::zeros(self.m(), d);
        for (k, b) in self.b_ops.iter().enumerate() {
            b.left_mul(&self.binf, rows.row_mut(k));
        }
        rows
    }
}

/// Replaces negative entries with the smallest positive entry, then normalizes.
/// Falls back to uniform when no entry is positive.
pub fn repair_prediction(raw: &[f64]) -> Vec<f64> {
    let min_pos = raw
        .iter()
        .copied()
        .filter(|&x| x > 0.0 && x.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !min_pos.is_finite() {
        return vec![1.0 / raw.len() as f64; raw.len()];
    }
    let mut out: Vec<f64> = raw
        .iter()
        .map(|&x| if x < 0.0 || x.is_nan() { min_pos } else { x })
        .collect();
    let s: f64 = out.iter().sum();
    if !s.is_finite() {
        return vec![1.0 / raw.len() as f64; raw.len()];
    }
    out.iter_mut().for_each(|x| *x /= s);
    out
}

/// Next-symbol distributions `p_1..p_T` for `seq`, `p_{t+1}` conditioned on `seq[..=t]`.
pub fn spectral_predict(model: &SpectralModel, seq: &[usize]) -> Result<Vec<Vec<f64>>> {
    model.validate()?;
    let (d, m) = (model.d(), model.m());
    let rows = model.score_rows();
    let mut b = model.b0.clone();
    let mut next = vec![0.0; d];
    let mut raw = vec![0.0; m];
    let mut out = Vec::with_capacity(seq.len());
    for &z in seq {
        if z >= m {
            return Err(Error::ObservationOutOfRange { obs: z, m });
        }
        model.b_ops[z].right_mul(&b, &mut next);
        let denom: f64 = rows.row(z).iter().zip(&b).map(|(r, x)| r * x).sum();
        if denom == 0.0 || !denom.is_finite() {
            b.copy_from_slice(&model.b0);
        } else {
            for (bi, ni) in b.iter_mut().zip(&next) {
                *bi = ni / denom;
            }
        }
        rows.right_mul(&b, &mut raw);
        out.push(repair_prediction(&raw));
    }
    Ok(out)
}
