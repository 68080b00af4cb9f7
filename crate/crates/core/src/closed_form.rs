//! Exact bias, variance and MSE of the discounted Beta-Bernoulli estimator
//! for a known sequence of true success probabilities.
//!
//! After `tau` visits the posterior mass `H = alpha + beta` does not depend
//! on the observed rewards, so the posterior mean is a fixed linear
//! combination of the per-visit success counts. Its conditional moments are
//! therefore available in closed form:
//!
//! ```text
//! H_tau   = lambda^tau * m0 + N * sum_{k=1..tau} lambda^(tau-k)
//! c_0     = lambda^tau * m0 / H_tau,   c_k = N * lambda^(tau-k) / H_tau
//! E[p]    = sum_{k=0..tau} c_k p_k
//! Var[p]  = sum_{k=1..tau} c_k^2 p_k (1 - p_k) / N
//! ```
//!
//! where `m0 = alpha_0 + beta_0` and `p_0 = alpha_0 / m0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{check_probability, Discount};

/// True success probabilities `p_1..p_tau` plus the prior they start from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueProbSequence {
    probs: Vec<f64>,
    prior_mean: f64,
    prior_mass: f64,
}

impl TrueProbSequence {
    /// Sequence under the uniform Beta(1, 1) prior.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_prior(probs, 0.5, 2.0)
    }

    pub fn with_prior(probs: Vec<f64>, prior_mean: f64, prior_mass: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptySequence);
        }
        for &p in &probs {
            check_probability(p)?;
        }
        check_probability(prior_mean)?;
        check_prior_mass(prior_mass)?;
        Ok(Self {
            probs,
            prior_mean,
            prior_mass,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn prior_mass(&self) -> f64 {
        self.prior_mass
    }

    /// Number of epochs `tau`.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// The first `epochs` probabilities under the same prior.
    pub fn prefix(&self, epochs: usize) -> Result<Self> {
        if epochs == 0 {
            return Err(Error::ZeroEpochs);
        }
        if epochs > self.len() {
            return Err(Error::InvalidParameter(format!(
                "prefix of {epochs} epochs from a sequence of {}",
                self.len()
            )));
        }
        Ok(Self {
            probs: self.probs[..epochs].to_vec(),
            ..*self
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormStats {
    pub expectation: f64,
    pub variance: f64,
    pub bias: f64,
    pub mse: f64,
    /// `c_0..c_tau`; `c_0` belongs to the prior.
    pub weights: Vec<f64>,
    /// Posterior mass `H_tau`.
    pub total_mass: f64,
}

fn check_prior_mass(prior_mass: f64) -> Result<()> {
    if prior_mass > 0.0 && prior_mass.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "prior mass must be positive, got {prior_mass}"
        )))
    }
}

fn check_shape(tau: usize, n: usize, prior_mass: f64) -> Result<()> {
    if tau == 0 {
        return Err(Error::ZeroEpochs);
    }
    if n == 0 {
        return Err(Error::EmptyGroupSize);
    }
    check_prior_mass(prior_mass)
}

/// Posterior mass after `tau` visits, by the recurrence `H_k = lambda H_{k-1} + N`.
pub fn total_mass(tau: usize, lambda: Discount, n: usize, prior_mass: f64) -> Result<f64> {
    check_shape(tau, n, prior_mass)?;
    let l = lambda.get();
    Ok((0..tau).fold(prior_mass, |h, _| l * h + n as f64))
}

/// Mixing weights `c_0..c_tau`. Powers of `lambda` are accumulated one
/// factor at a time, so very old terms underflow to 0 rather than NaN.
pub fn weights(tau: usize, lambda: Discount, n: usize, prior_mass: f64) -> Result<Vec<f64>> {
    let h = total_mass(tau, lambda, n, prior_mass)?;
    let l = lambda.get();
    let mut c = vec![0.0; tau + 1];
    let mut decay = 1.0;
    for k in (1..=tau).rev() {
        c[k] = n as f64 * decay / h;
        decay *= l;
    }
    c[0] = decay * prior_mass / h;
    Ok(c)
}

/// Conditional expectation, variance, bias and MSE of the DBB mean at the
/// last epoch of `seq`, relative to that epoch's true probability.
pub fn dbb_closed_form(
    seq: &TrueProbSequence,
    lambda: Discount,
    n: usize,
) -> Result<ClosedFormStats> {
    let tau = seq.len();
    if tau == 0 {
        return Err(Error::EmptySequence);
    }
    let c = weights(tau, lambda, n, seq.prior_mass)?;
    let total_mass = total_mass(tau, lambda, n, seq.prior_mass)?;
    let p_now = seq.probs[tau - 1];
    let p_at = |k: usize| {
        if k == 0 {
            seq.prior_mean
        } else {
            seq.probs[k - 1]
        }
    };

    let expectation: f64 = (0..=tau).map(|k| c[k] * p_at(k)).sum();
    let bias: f64 = (0..tau).map(|k| c[k] * (p_at(k) - p_now)).sum();
    let variance: f64 = (1..=tau)
        .map(|k| {
            let p = p_at(k);
            c[k] * c[k] * p * (1.0 - p) / n as f64
        })
        .sum();
    Ok(ClosedFormStats {
        expectation,
        variance,
        bias,
        mse: bias * bias + variance,
        weights: c,
        total_mass,
    })
}

/// MSE (= variance) of the unbiased point estimator, `p (1 - p) / N`.
pub fn point_mse(p: f64, n: usize) -> Result<f64> {
    check_probability(p)?;
    if n == 0 {
        return Err(Error::EmptyGroupSize);
    }
    Ok(p * (1.0 - p) / n as f64)
}

/// DBB MSE at every epoch `1..=tau` of `seq`.
pub fn dbb_mse_path(seq: &TrueProbSequence, lambda: Discount, n: usize) -> Result<Vec<f64>> {
    (1..=seq.len())
        .map(|t| Ok(dbb_closed_form(&seq.prefix(t)?, lambda, n)?.mse))
        .collect()
}

/// Epoch-averaged DBB and point MSE over the whole sequence.
pub fn average_mse(seq: &TrueProbSequence, lambda: Discount, n: usize) -> Result<(f64, f64)> {
    let tau = seq.len() as f64;
    let dbb = dbb_mse_path(seq, lambda, n)?.iter().sum::<f64>() / tau;
    let mut point = 0.0;
    for &p in seq.probs() {
        point += point_mse(p, n)?;
    }
    Ok((dbb, point / tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{one_step_mean, PosteriorState};
    use crate::rng::{binomial, stream_rng};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn lam(l: f64) -> Discount {
        Discount::new(l).unwrap()
    }

    /// Direct-formula evaluation with explicit powers.
    fn direct_total_mass(tau: usize, l: f64, n: usize, m0: f64) -> f64 {
        let t = tau as i32;
        l.powi(t) * m0 + n as f64 * (1..=t).map(|k| l.powi(t - k)).sum::<f64>()
    }

    #[test]
    fn total_mass_examples() {
        assert_abs_diff_eq!(
            total_mass(2, lam(0.5), 8, 2.0).unwrap(),
            12.5,
            epsilon = 1e-12
        );
        assert_eq!(total_mass(3, lam(1.0), 8, 2.0).unwrap(), 26.0);
        assert_abs_diff_eq!(
            total_mass(1, lam(0.5), 8, 2.0).unwrap(),
            9.0,
            epsilon = 1e-12
        );
        assert_eq!(total_mass(0, lam(0.5), 8, 2.0), Err(Error::ZeroEpochs));
        assert_eq!(total_mass(2, lam(0.5), 0, 2.0), Err(Error::EmptyGroupSize));
    }

    #[test]
    fn weight_examples() {
        let c = weights(2, lam(0.5), 8, 2.0).unwrap();
        for (got, want) in c.iter().zip([0.04, 0.32, 0.64]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        let c = weights(1, lam(1.0), 8, 2.0).unwrap();
        assert_abs_diff_eq!(c[0], 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(c[1], 0.8, epsilon = 1e-12);
    }

    #[test]
    fn long_horizons_underflow_gracefully() {
        let c = weights(5000, lam(0.01), 8, 2.0).unwrap();
        assert_eq!(c[0], 0.0);
        assert!(c.iter().all(|w| w.is_finite()));
        assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_half_example() {
        let seq = TrueProbSequence::new(vec![0.5, 0.5]).unwrap();
        let s = dbb_closed_form(&seq, lam(0.5), 8).unwrap();
        assert_abs_diff_eq!(s.expectation, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.bias, 0.0, epsilon = 1e-12);
        // (0.25 * 8 * 0.25 + 8 * 0.25) / 12.5^2 = 2.5 / 156.25
        assert_abs_diff_eq!(s.variance, 0.016, epsilon = 1e-12);
        assert_abs_diff_eq!(s.mse, 0.016, epsilon = 1e-12);
    }

    #[test]
    fn ramp_example_against_monte_carlo() {
        let seq = TrueProbSequence::new(vec![0.2, 0.8]).unwrap();
        let s = dbb_closed_form(&seq, lam(0.5), 8).unwrap();
        assert_abs_diff_eq!(s.expectation, 0.596, epsilon = 1e-12);
        assert_abs_diff_eq!(s.bias, -0.204, epsilon = 1e-12);

        let reps = 1_000_000;
        let mut rng = stream_rng(5, 0);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..reps {
            let (mut a, mut b) = (1.0f64, 1.0f64);
            for p in [0.2, 0.8] {
                let x = binomial(&mut rng, 8, p) as f64;
                a = 0.5 * a + x;
                b = 0.5 * b + (8.0 - x);
            }
            let est = a / (a + b);
            sum += est;
            sum_sq += est * est;
        }
        let mean = sum / reps as f64;
        let var = sum_sq / reps as f64 - mean * mean;
        assert!((mean - s.expectation).abs() < 4.0 * (var / reps as f64).sqrt());
        assert!((var - s.variance).abs() / s.variance < 0.01);
    }

    #[test]
    fn unit_discount_single_epoch_is_unbiased_at_prior_mean() {
        for p in [0.0, 0.13, 0.5, 0.9, 1.0] {
            let seq = TrueProbSequence::with_prior(vec![p], p, 2.0).unwrap();
            assert_abs_diff_eq!(
                dbb_closed_form(&seq, lam(1.0), 8).unwrap().bias,
                0.0,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn unit_discount_matches_textbook_beta_bernoulli() {
        // Beta(1,1) prior, tau groups of N at p = 0.5: posterior mean (1 + S)/(2 + N tau).
        let seq = TrueProbSequence::new(vec![0.5; 3]).unwrap();
        let s = dbb_closed_form(&seq, lam(1.0), 8).unwrap();
        let m = 2.0 + 24.0;
        assert_abs_diff_eq!(s.expectation, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.variance, 24.0 * 0.25 / (m * m), epsilon = 1e-15);
    }

    #[test]
    fn point_mse_values() {
        assert_eq!(point_mse(0.5, 8).unwrap(), 0.03125);
        assert_eq!(point_mse(0.0, 3).unwrap(), 0.0);
        assert_abs_diff_eq!(point_mse(0.1, 8).unwrap(), 0.01125, epsilon = 1e-15);
        assert!(point_mse(1.5, 8).is_err());
        assert!(point_mse(-0.1, 8).is_err());
    }

    #[test]
    fn invalid_sequences() {
        assert_eq!(TrueProbSequence::new(vec![]), Err(Error::EmptySequence));
        assert!(TrueProbSequence::new(vec![0.2, 1.2]).is_err());
        assert!(TrueProbSequence::with_prior(vec![0.2], 0.5, 0.0).is_err());
    }

    #[test]
    fn stationary_dominance_grid() {
        for pi in 1..=9 {
            for li in 1..=9 {
                let p = pi as f64 / 10.0;
                let seq = TrueProbSequence::new(vec![p; 50]).unwrap();
                let s = dbb_closed_form(&seq, lam(li as f64 / 10.0), 8).unwrap();
                assert!(s.mse < point_mse(p, 8).unwrap(), "p={p} lambda={li}");
            }
        }
    }

    #[test]
    fn vanishing_discount_recovers_point_statistics() {
        let seq = TrueProbSequence::new(vec![0.1, 0.7, 0.35]).unwrap();
        let s = dbb_closed_form(&seq, lam(1e-9), 8).unwrap();
        assert_abs_diff_eq!(s.expectation, 0.35, epsilon = 1e-7);
        assert_abs_diff_eq!(s.variance, point_mse(0.35, 8).unwrap(), epsilon = 1e-9);
    }

    fn arb_seq() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..=1.0, 1..30)
    }

    proptest! {
        #[test]
        fn stats_are_consistent(
            probs in arb_seq(),
            l in 1e-4f64..=1.0,
            n in 1usize..64,
            p0 in 0.0f64..=1.0,
            m0 in 0.1f64..20.0,
        ) {
            let tau = probs.len();
            let seq = TrueProbSequence::with_prior(probs.clone(), p0, m0).unwrap();
            let s = dbb_closed_form(&seq, lam(l), n).unwrap();
            prop_assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(s.weights.iter().all(|&w| w >= 0.0));
            prop_assert!((s.mse - (s.bias * s.bias + s.variance)).abs() < 1e-12);
            prop_assert!((s.bias - (s.expectation - probs[tau - 1])).abs() < 1e-12);
            let direct = direct_total_mass(tau, l, n, m0);
            prop_assert!((s.total_mass - direct).abs() <= 1e-12 * direct);
            let worst = probs.iter().map(|p| p * (1.0 - p)).fold(0.0, f64::max) / n as f64;
            prop_assert!(s.variance <= worst + 1e-15);
        }

        #[test]
        fn expectation_follows_one_step_recursion(
            probs in arb_seq(),
            l in 1e-3f64..=1.0,
            n in 1usize..32,
        ) {
            // Propagate expected pseudo-counts one visit at a time and take
            // the one-step mean from each.
            let l = lam(l);
            let (mut alpha, mut beta) = (1.0, 1.0);
            let mut mean = 0.5;
            for &p in &probs {
                let state = PosteriorState::new(alpha, beta).unwrap();
                mean = one_step_mean(&state, l, n, p).unwrap();
                alpha = l.get() * alpha + n as f64 * p;
                beta = l.get() * beta + n as f64 * (1.0 - p);
            }
            let seq = TrueProbSequence::new(probs).unwrap();
            let s = dbb_closed_form(&seq, l, n).unwrap();
            prop_assert!((s.expectation - mean).abs() < 1e-10);
        }
    }
}
