use serde::{Deserialize, Serialize};

use super::head::{AdapterHead, HeadGrad};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction over the flattened (W, b) parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    pub params: AdamParams,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(param_count: usize, params: AdamParams) -> Self {
        Self {
            params,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn step(&mut self, head: &mut AdapterHead, grad: &HeadGrad, lr: f64) {
        let AdamParams { beta1, beta2, eps } = self.params;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let params = head.w.iter_mut().chain(head.b.iter_mut());
        let grads = grad.w.iter().chain(&grad.b);
        for (((p, g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

/// Linear ramp from lr/warmup to lr over `warmup` steps, then constant.
pub fn scheduled_lr(base: f64, step: usize, warmup: usize) -> f64 {
    if warmup == 0 || step >= warmup {
        base
    } else {
        base * step as f64 / warmup as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        let mut head = AdapterHead::identity(1);
        let mut adam = Adam::new(2, AdamParams::default());
        let grad = HeadGrad {
            w: vec![3.0],
            b: vec![-0.5],
        };
        adam.step(&mut head, &grad, 0.01);
        assert!((head.w[0] - 0.99).abs() < 1e-8);
        assert!((head.b[0] - 0.01).abs() < 1e-8);
    }

    #[test]
    fn schedule_ramps_then_holds() {
        assert_eq!(scheduled_lr(1e-4, 1, 10), 1e-5);
        assert_eq!(scheduled_lr(1e-4, 10, 10), 1e-4);
        assert_eq!(scheduled_lr(1e-4, 500, 10), 1e-4);
        assert_eq!(scheduled_lr(1e-4, 1, 0), 1e-4);
    }
}
