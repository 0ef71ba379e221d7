//! Shared finite-difference gradient check.

use reason_forge::trainer::{batch_objective, batch_weights, candidate_losses, reasoning_intensity};

use super::*;

const H: f64 = 1e-5;

/// max_i |a_i − n_i| / max_i |n_i|.
fn normwise_error(a: &[f64], n: &[f64]) -> f64 {
    let scale = n.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    a.iter().zip(n).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

fn ri_weights(seed: u64, dim: usize, n: usize, tau: f64) -> (Vec<f64>, usize) {
    let (head, batch, store) = random_gradient_case(seed, dim, n);
    let cand = candidate_losses(&head, &batch, &store, tau).unwrap();
    let ri: Vec<f64> = cand
        .iter()
        .map(|c| reasoning_intensity(c.plain, c.reasoned.unwrap(), 5.0).unwrap())
        .collect();
    (batch_weights(&ri).unwrap(), n)
}

/// Worst normwise error and the number of instances checked. With
/// `min_scale`, instances whose gradient is smaller than that are skipped:
/// their losses are saturated and the finite-difference estimate is limited
/// by roundoff in the naive forward pass rather than by the gradient.
pub fn check(tau: f64, weighted: bool, richardson: bool, min_scale: f64) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for seed in 0..50u64 {
        let dim = 4 + (seed as usize * 7 % 13);
        let n = 2 + (seed as usize % 4);
        let (head, batch, store) = random_gradient_case(seed, dim, n);
        let weights = if weighted {
            ri_weights(seed, dim, n, tau).0
        } else {
            vec![1.0 / n as f64; n]
        };
        let (value, _, grad, _) = batch_objective(&head, &batch, &store, tau, &weights).unwrap();
        let naive = naive_objective(&head.w, &head.b, &batch, &store, tau, &weights);
        assert!((value - naive).abs() < 1e-10 * naive.abs().max(1.0));
        let analytic: Vec<f64> = grad.w.iter().chain(&grad.b).copied().collect();
        let numeric = if richardson {
            let d1 = fd_gradient(&head, &batch, &store, tau, &weights, H);
            let d2 = fd_gradient(&head, &batch, &store, tau, &weights, 2.0 * H);
            d1.iter().zip(&d2).map(|(a, b)| (4.0 * a - b) / 3.0).collect()
        } else {
            fd_gradient(&head, &batch, &store, tau, &weights, H)
        };
        if numeric.iter().fold(0.0f64, |m, x| m.max(x.abs())) < min_scale {
            continue;
        }
        checked += 1;
        worst = worst.max(normwise_error(&analytic, &numeric));
    }
    (worst, checked)
}
