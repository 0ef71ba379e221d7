//! Contrastive loss, reasoning intensity and batch weights.

use crate::error::{Error, Result};
use crate::retrieval::dot;

/// Below this the reasoned loss is treated as zero.
pub const RI_EPS: f64 = 1e-12;

/// InfoNCE from precomputed similarities.
///
/// `sims[0]` is the positive, the rest are negatives. Returns the loss and
/// dL/dsims, where dL/ds_j = (softmax_j − [j = 0]) / τ.
pub fn info_nce_sims(sims: &[f64], tau: f64) -> (f64, Vec<f64>) {
    debug_assert!(!sims.is_empty() && tau > 0.0);
    let max = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = sims.iter().map(|s| ((s - max) / tau).exp()).collect();
    let z: f64 = exps.iter().sum();
    // When the positive is the max, ln(1 + rest) keeps tiny losses from
    // rounding to zero.
    let loss = if sims[0] >= max {
        exps[1..].iter().sum::<f64>().ln_1p()
    } else {
        z.ln() - (sims[0] - max) / tau
    };
    let grad = exps
        .iter()
        .enumerate()
        .map(|(j, e)| (e / z - if j == 0 { 1.0 } else { 0.0 }) / tau)
        .collect();
    (loss.max(0.0), grad)
}

/// −log softmax of the positive over {positive} ∪ negatives at temperature τ.
pub fn info_nce(query: &[f64], positive: &[f64], negatives: &[&[f64]], tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    if negatives.is_empty() {
        return Err(Error::invalid("InfoNCE needs at least one negative"));
    }
    let dim = query.len();
    for v in std::iter::once(positive).chain(negatives.iter().copied()) {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
    }
    let sims: Vec<f64> = std::iter::once(positive)
        .chain(negatives.iter().copied())
        .map(|d| dot(query, d))
        .collect();
    Ok(info_nce_sims(&sims, tau).0)
}

/// min(L_plain / L_reasoned, κ), with κ when the reasoned loss is ~0.
pub fn reasoning_intensity(loss_plain: f64, loss_reasoned: f64, kappa: f64) -> Result<f64> {
    if !(loss_plain >= 0.0) || !(loss_reasoned >= 0.0) {
        return Err(Error::invalid(format!(
            "losses must be nonnegative, got {loss_plain} and {loss_reasoned}"
        )));
    }
    if !(kappa > 0.0) {
        return Err(Error::invalid(format!("kappa must be positive, got {kappa}")));
    }
    if loss_reasoned < RI_EPS {
        return Ok(kappa);
    }
    Ok((loss_plain / loss_reasoned).min(kappa))
}

/// Normalises positive scores into a probability vector.
pub fn batch_weights(ri: &[f64]) -> Result<Vec<f64>> {
    if ri.is_empty() {
        return Err(Error::invalid("cannot weight an empty batch"));
    }
    if let Some(bad) = ri.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
        return Err(Error::invalid(format!(
            "weights need positive finite scores, got {bad}"
        )));
    }
    // Summed in sorted order so the total, and hence every weight, does not
    // depend on batch order.
    let mut sorted = ri.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = sorted.iter().sum();
    Ok(ri.iter().map(|r| r / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_similarities_give_log_n() {
        let q = [1.0, 0.0];
        let d = [0.5, 0.5];
        let negs: Vec<&[f64]> = vec![&d; 6];
        let loss = info_nce(&q, &d, &negs, 0.02).unwrap();
        assert!((loss - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn scalar_example() {
        let loss = info_nce(&[1.0], &[1.0], &[&[0.0]], 1.0).unwrap();
        let want = (1.0 + (-1.0f64).exp()).ln();
        assert!((loss - want).abs() < 1e-15);
        assert!((loss - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn shrinking_tau_drives_loss_to_zero() {
        let mut prev = f64::INFINITY;
        for tau in [1.0, 0.5, 0.1, 0.05, 0.02, 0.01] {
            let l = info_nce(&[1.0, 0.0], &[1.0, 0.0], &[&[0.6, 0.8]], tau).unwrap();
            assert!(l < prev);
            prev = l;
        }
        assert!(prev > 0.0 && prev < 1e-15);
    }

    #[test]
    fn input_errors() {
        assert!(info_nce(&[1.0], &[1.0, 0.0], &[&[0.0]], 1.0).is_err());
        assert!(info_nce(&[1.0], &[1.0], &[], 1.0).is_err());
        assert!(info_nce(&[1.0], &[1.0], &[&[0.0]], 0.0).is_err());
    }

    #[test]
    fn ri_examples() {
        assert_eq!(reasoning_intensity(0.7, 0.7, 5.0).unwrap(), 1.0);
        assert_eq!(reasoning_intensity(6.0 * 0.3, 0.3, 5.0).unwrap(), 5.0);
        assert_eq!(reasoning_intensity(0.4, 0.0, 5.0).unwrap(), 5.0);
        assert!(reasoning_intensity(-0.1, 0.3, 5.0).is_err());
    }

    #[test]
    fn weight_examples() {
        assert_eq!(batch_weights(&[1.0, 3.0]).unwrap(), [0.25, 0.75]);
        assert_eq!(batch_weights(&[2.0; 4]).unwrap(), [0.25; 4]);
        assert!(batch_weights(&[]).is_err());
        assert!(batch_weights(&[1.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn loss_nonnegative_and_increasing_in_positive(
            sims in proptest::collection::vec(-1.0f64..1.0, 2..10),
            bump in 0.01f64..0.5,
        ) {
            let (l, _) = info_nce_sims(&sims, 0.1);
            prop_assert!(l >= 0.0);
            let mut better = sims.clone();
            better[0] += bump;
            prop_assert!(info_nce_sims(&better, 0.1).0 < l);
        }

        #[test]
        fn weights_sum_to_one(ri in proptest::collection::vec(1e-3f64..5.0, 1..64)) {
            let w = batch_weights(&ri).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
