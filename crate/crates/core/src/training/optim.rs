//! AdamW with linear warmup, linear decay and global gradient-norm clipping.

use super::{TrainConfig, TrainError};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Head parameters in `f64` during training.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub d_in: usize,
    pub d_out: usize,
    /// Row-major `d_out x d_in`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl HeadGrad {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            w: vec![0.0; d_in * d_out],
            b: vec![0.0; d_out],
        }
    }

    pub fn clear(&mut self) {
        self.w.fill(0.0);
        self.b.fill(0.0);
    }

    pub fn norm(&self) -> f64 {
        self.w.iter().chain(&self.b).map(|g| g * g).sum::<f64>().sqrt()
    }

    fn scale(&mut self, s: f64) {
        self.w.iter_mut().chain(self.b.iter_mut()).for_each(|g| *g *= s);
    }
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: HeadGrad,
    v: HeadGrad,
}

impl AdamState {
    pub fn new(d_in: usize, d_out: usize) -> Self {
        Self {
            m: HeadGrad::zeros(d_in, d_out),
            v: HeadGrad::zeros(d_in, d_out),
        }
    }
}

/// Warmup length in steps: `round(warmup_fraction * total)`.
pub fn warmup_steps(total: usize, warmup_fraction: f64) -> usize {
    (warmup_fraction * total as f64).round() as usize
}

/// Learning rate at `step` (0-based): linear warmup from 0 to `base` over
/// `warmup` steps, then linear decay to 0 at `total`.
pub fn lr_at(base: f64, step: usize, total: usize, warmup: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let step = step as f64;
    let up = if warmup == 0 { f64::INFINITY } else { step / warmup as f64 };
    let down = if total > warmup {
        (total as f64 - step) / (total - warmup) as f64
    } else {
        1.0
    };
    base * up.min(down).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub lr: f64,
    pub grad_norm: f64,
    pub applied_norm: f64,
}

/// One AdamW update of `params` in place.
///
/// Gradients are clipped (in place) to `config.max_grad_norm` by global
/// norm; weight decay is decoupled and applies to `w` only.
pub fn optimizer_step(
    params: &mut HeadParams,
    grads: &mut HeadGrad,
    state: &mut AdamState,
    step: usize,
    config: &TrainConfig,
) -> Result<StepStats, TrainError> {
    let grad_norm = grads.norm();
    if !grad_norm.is_finite() {
        return Err(TrainError::NonFiniteGradient { step });
    }
    if grad_norm > config.max_grad_norm {
        grads.scale(config.max_grad_norm / grad_norm);
    }
    let applied_norm = grads.norm();
    let total = config.iterations;
    let lr = lr_at(
        config.learning_rate,
        step,
        total,
        warmup_steps(total, config.warmup_fraction),
    );
    let t = (step + 1) as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);

    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], decay: f64| {
        for i in 0..p.len() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            p[i] -= lr * decay * p[i];
            p[i] -= lr * mhat / (vhat.sqrt() + EPS);
        }
    };
    update(&mut params.w, &grads.w, &mut state.m.w, &mut state.v.w, config.weight_decay);
    update(&mut params.b, &grads.b, &mut state.m.b, &mut state.v.b, 0.0);
    Ok(StepStats {
        lr,
        grad_norm,
        applied_norm,
    })
}
