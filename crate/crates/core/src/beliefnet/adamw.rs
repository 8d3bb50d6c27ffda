use crate::error::{Error, Result};

use super::LogitParams;

/// AdamW state with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub first_moment: LogitParams,
    pub second_moment: LogitParams,
    pub step_count: u64,
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptimizerState {
    pub fn new(d: usize, m: usize, lr: f64, weight_decay: f64) -> Self {
        OptimizerState {
            first_moment: LogitParams::zeros(d, m),
            second_moment: LogitParams::zeros(d, m),
            step_count: 0,
            lr,
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// One AdamW update of `lp` in place.
///
/// `theta -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)`.
/// A non-finite gradient leaves both `lp` and `opt` untouched.
pub fn adamw_step(lp: &mut LogitParams, grad: &LogitParams, opt: &mut OptimizerState) -> Result<()> {
    if lp.d() != grad.d() || lp.m() != grad.m() || lp.d() != opt.first_moment.d() || lp.m() != opt.first_moment.m() {
        return Err(Error::InvalidParams("optimizer shape mismatch".into()));
    }
    for (block, g) in grad.blocks() {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::GradientOverflow { block });
        }
    }
    opt.step_count += 1;
    let (b1, b2) = opt.betas;
    let t = opt.step_count as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (lr, eps, wd) = (opt.lr, opt.eps, opt.weight_decay);
    let params = lp.blocks_mut();
    let grads = grad.blocks();
    let ms = opt.first_moment.blocks_mut();
    let vs = opt.second_moment.blocks_mut();
    for (((theta, g), m), v) in params.into_iter().zip(grads).zip(ms).zip(vs) {
        for (((x, &g), m), v) in theta.1.iter_mut().zip(g.1).zip(m.1.iter_mut()).zip(v.1.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *x -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * *x);
        }
    }
    Ok(())
}
