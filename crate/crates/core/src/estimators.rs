//! Point and (discounted) Beta-Bernoulli estimators of a binary reward
//! distribution.
//!
//! A prompt's reward is Bernoulli(p). The point estimator looks only at the
//! current rollout group. The Beta-Bernoulli estimators carry pseudo-counts
//! `(alpha, beta)` across visits; the discounted variant scales the old
//! counts by `lambda` before adding the new group, so stale evidence fades
//! geometrically and the counts never reach zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discount factor applied to historical pseudo-counts, `0 < lambda <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Discount(f64);

impl Discount {
    pub const UNDISCOUNTED: Discount = Discount(1.0);

    pub fn new(lambda: f64) -> Result<Self> {
        if lambda > 0.0 && lambda <= 1.0 {
            Ok(Discount(lambda))
        } else {
            Err(Error::DiscountOutOfRange(lambda))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Discount {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Discount::new(value)
    }
}

impl From<Discount> for f64 {
    fn from(d: Discount) -> f64 {
        d.0
    }
}

/// Binary rewards of one rollout group, in sampling order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RewardGroup {
    rewards: Vec<u8>,
}

impl RewardGroup {
    /// Rejects empty groups and any value other than 0 or 1.
    pub fn new(rewards: Vec<u8>) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::EmptyGroup);
        }
        if let Some((index, &value)) = rewards.iter().enumerate().find(|(_, &r)| r > 1) {
            return Err(Error::NonBinaryReward { index, value });
        }
        Ok(Self { rewards })
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(outcomes: I) -> Result<Self> {
        Self::new(outcomes.into_iter().map(u8::from).collect())
    }

    pub fn rewards(&self) -> &[u8] {
        &self.rewards
    }

    /// Group size N.
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    /// Always false; a group holds at least one reward.
    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Number of successes S.
    pub fn successes(&self) -> usize {
        self.rewards.iter().map(|&r| r as usize).sum()
    }

    /// True when every rollout received the same reward.
    pub fn is_uniform(&self) -> bool {
        let s = self.successes();
        s == 0 || s == self.len()
    }
}

/// Per-prompt Beta pseudo-counts and the number of updates applied so far.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    pub alpha: f64,
    pub beta: f64,
    pub visits: u64,
}

impl Default for PosteriorState {
    /// The uniform Beta(1, 1) prior.
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            visits: 0,
        }
    }
}

impl PosteriorState {
    /// A prior with arbitrary positive pseudo-counts.
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        Self::with_visits(alpha, beta, 0)
    }

    pub fn with_visits(alpha: f64, beta: f64, visits: u64) -> Result<Self> {
        if alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite() {
            Ok(Self {
                alpha,
                beta,
                visits,
            })
        } else {
            Err(Error::InvalidPosterior { alpha, beta })
        }
    }

    /// Total pseudo-count `alpha + beta`.
    #[inline]
    pub fn mass(&self) -> f64 {
        self.alpha + self.beta
    }

    #[inline]
    pub fn mean(&self) -> f64 {
        self.alpha / self.mass()
    }

    /// Discounted update from a success count, shared by every update path.
    #[inline]
    pub fn observe(self, successes: usize, n: usize, lambda: Discount) -> Self {
        debug_assert!(successes <= n);
        let l = lambda.get();
        Self {
            alpha: l * self.alpha + successes as f64,
            beta: l * self.beta + (n - successes) as f64,
            visits: self.visits + 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    Point,
    Dbb,
}

/// Estimated mean and variance of a prompt's reward distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorSummary {
    pub mean: f64,
    pub variance: f64,
    pub kind: EstimatorKind,
    /// Set when the variance is undefined (point estimator with N = 1) and
    /// has been reported as 0.
    pub degenerate: bool,
}

/// Empirical mean and the N-1 sample variance of the group.
///
/// With a single rollout the sample variance is undefined; it is reported
/// as 0 with `degenerate` set so callers treat it like a collapsed group.
pub fn point_estimate(group: &RewardGroup) -> EstimatorSummary {
    let n = group.len();
    let mean = group.successes() as f64 / n as f64;
    if n == 1 {
        return EstimatorSummary {
            mean,
            variance: 0.0,
            kind: EstimatorKind::Point,
            degenerate: true,
        };
    }
    let nf = n as f64;
    EstimatorSummary {
        mean,
        variance: nf * mean * (1.0 - mean) / (nf - 1.0),
        kind: EstimatorKind::Point,
        degenerate: false,
    }
}

/// Undiscounted conjugate update.
pub fn update_beta_bernoulli(state: PosteriorState, group: &RewardGroup) -> PosteriorState {
    PosteriorState {
        alpha: state.alpha + group.successes() as f64,
        beta: state.beta + (group.len() - group.successes()) as f64,
        visits: state.visits + 1,
    }
}

/// Discounted update: both pseudo-counts are scaled by `lambda` before the
/// group's successes and failures are added.
pub fn update_dbb(state: PosteriorState, group: &RewardGroup, lambda: Discount) -> PosteriorState {
    state.observe(group.successes(), group.len(), lambda)
}

/// Plug-in Bernoulli mean and variance of the posterior,
/// `alpha / (alpha + beta)` and `alpha * beta / (alpha + beta)^2`.
pub fn dbb_estimate(state: &PosteriorState) -> EstimatorSummary {
    let mass = state.mass();
    EstimatorSummary {
        mean: state.alpha / mass,
        variance: state.alpha * state.beta / (mass * mass),
        kind: EstimatorKind::Dbb,
        degenerate: false,
    }
}

/// Weight the next posterior mean places on the history:
/// `w = lambda * (alpha + beta) / (lambda * (alpha + beta) + n)`.
pub fn shrinkage_weight(state: &PosteriorState, lambda: Discount, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyGroupSize);
    }
    let carried = lambda.get() * state.mass();
    Ok(carried / (carried + n as f64))
}

/// Expected posterior mean after one more group drawn at success rate `p`:
/// `w * mu + (1 - w) * p`.
pub fn one_step_mean(state: &PosteriorState, lambda: Discount, n: usize, p: f64) -> Result<f64> {
    check_probability(p)?;
    let w = shrinkage_weight(state, lambda, n)?;
    Ok(w * state.mean() + (1.0 - w) * p)
}

/// Variance of the posterior mean after one more group drawn at success
/// rate `p`: `(1 - w)^2 * p * (1 - p) / n`.
pub fn one_step_variance(
    state: &PosteriorState,
    lambda: Discount,
    n: usize,
    p: f64,
) -> Result<f64> {
    check_probability(p)?;
    let w = shrinkage_weight(state, lambda, n)?;
    Ok((1.0 - w).powi(2) * p * (1.0 - p) / n as f64)
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::ProbabilityOutOfRange(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    use crate::rng::{binomial, stream_rng};

    fn group(r: &[u8]) -> RewardGroup {
        RewardGroup::new(r.to_vec()).unwrap()
    }

    fn lam(l: f64) -> Discount {
        Discount::new(l).unwrap()
    }

    fn st(alpha: f64, beta: f64) -> PosteriorState {
        PosteriorState::new(alpha, beta).unwrap()
    }

    #[test]
    fn point_estimate_half_success() {
        let s = point_estimate(&group(&[1, 0, 1, 0, 1, 0, 1, 0]));
        assert_eq!(s.mean, 0.5);
        assert_abs_diff_eq!(s.variance, 2.0 / 7.0, epsilon = 1e-15);
        assert_eq!(s.kind, EstimatorKind::Point);
        assert!(!s.degenerate);
    }

    #[test]
    fn point_estimate_all_success_collapses() {
        let s = point_estimate(&group(&[1; 8]));
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.variance, 0.0);
    }

    #[test]
    fn empty_and_non_binary_groups_rejected() {
        assert_eq!(RewardGroup::new(vec![]), Err(Error::EmptyGroup));
        assert_eq!(Error::EmptyGroup.to_string(), "empty reward group");
        assert!(matches!(
            RewardGroup::new(vec![1, 2]),
            Err(Error::NonBinaryReward { index: 1, value: 2 })
        ));
    }

    #[test]
    fn single_rollout_is_degenerate() {
        let s = point_estimate(&group(&[1]));
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.variance, 0.0);
        assert!(s.degenerate);
    }

    #[test]
    fn beta_bernoulli_updates() {
        let half = group(&[1, 1, 1, 1, 0, 0, 0, 0]);
        let s = update_beta_bernoulli(PosteriorState::default(), &half);
        assert_eq!((s.alpha, s.beta, s.visits), (5.0, 5.0, 1));
        let s = update_beta_bernoulli(PosteriorState::default(), &group(&[0; 8]));
        assert_eq!((s.alpha, s.beta), (1.0, 9.0));
        let s = update_beta_bernoulli(st(5.0, 5.0), &group(&[1; 8]));
        assert_eq!((s.alpha, s.beta), (13.0, 5.0));
    }

    #[test]
    fn dbb_updates() {
        let s = update_dbb(PosteriorState::default(), &group(&[1; 8]), lam(0.5));
        assert_eq!((s.alpha, s.beta), (8.5, 0.5));
        let s2 = update_dbb(s, &group(&[1, 1, 1, 1, 1, 1, 0, 0]), lam(0.5));
        assert_eq!((s2.alpha, s2.beta, s2.visits), (10.25, 2.25, 2));
        let s = update_dbb(
            PosteriorState::default(),
            &group(&[1, 0, 1, 0, 1, 0, 1, 0]),
            lam(1.0),
        );
        assert_eq!((s.alpha, s.beta), (5.0, 5.0));
    }

    #[test]
    fn discount_range() {
        assert!(Discount::new(0.0).is_err());
        assert!(Discount::new(-0.1).is_err());
        assert!(Discount::new(1.0 + 1e-12).is_err());
        assert!(Discount::new(f64::NAN).is_err());
        assert!(Discount::new(1e-300).is_ok());
        assert!(Error::DiscountOutOfRange(2.0)
            .to_string()
            .starts_with("discount factor out of range"));
    }

    #[test]
    fn dbb_estimate_values() {
        let s = dbb_estimate(&PosteriorState::default());
        assert_eq!((s.mean, s.variance), (0.5, 0.25));
        let s = dbb_estimate(&st(8.5, 0.5));
        assert_abs_diff_eq!(s.mean, 17.0 / 18.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.variance, 17.0 / 324.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.mean, 0.944444, epsilon = 1e-6);
        assert_abs_diff_eq!(s.variance, 0.0524691, epsilon = 1e-7);
        for a in [1e-3, 0.7, 3.0, 1e6] {
            assert_eq!(dbb_estimate(&st(a, a)).mean, 0.5);
        }
    }

    #[test]
    fn shrinkage_weight_values() {
        let prior = PosteriorState::default();
        assert_abs_diff_eq!(
            shrinkage_weight(&prior, lam(0.5), 8).unwrap(),
            1.0 / 9.0,
            epsilon = 1e-15
        );
        assert!(shrinkage_weight(&st(3.0, 40.0), lam(1e-12), 8).unwrap() < 1e-10);
        assert_eq!(
            shrinkage_weight(&prior, lam(0.5), 0),
            Err(Error::EmptyGroupSize)
        );
        assert_eq!(Error::EmptyGroupSize.to_string(), "empty group size");
    }

    #[test]
    fn one_step_variance_matches_resampling() {
        let prior = PosteriorState::default();
        let v = one_step_variance(&prior, lam(0.5), 8, 0.5).unwrap();
        assert_abs_diff_eq!(v, (8.0f64 / 9.0).powi(2) * 0.25 / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.024691, epsilon = 1e-6);

        // Resample 10^5 groups and update the prior directly.
        let reps = 100_000;
        let mut rng = stream_rng(2024, 0);
        let means: Vec<f64> = (0..reps)
            .map(|_| {
                let s = binomial(&mut rng, 8, 0.5) as f64;
                (0.5 * 1.0 + s) / (0.5 * 2.0 + 8.0)
            })
            .collect();
        let m = means.iter().sum::<f64>() / reps as f64;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let expected_mean = one_step_mean(&prior, lam(0.5), 8, 0.5).unwrap();
        assert!((m - expected_mean).abs() < 4.0 * (v / reps as f64).sqrt());
        // Relative standard error of a sample variance is about sqrt(2/reps).
        assert!((var - v).abs() / v < 0.02, "empirical {var} vs {v}");
    }

    #[test]
    fn point_estimator_unbiased_with_binomial_variance() {
        let reps = 100_000usize;
        let n = 8usize;
        for (i, &p) in [0.1, 0.3, 0.5, 0.8].iter().enumerate() {
            let mut rng = stream_rng(99, i as u64);
            let est: Vec<f64> = (0..reps)
                .map(|_| {
                    let g =
                        RewardGroup::from_bools((0..n).map(|_| rng.random::<f64>() < p)).unwrap();
                    point_estimate(&g).mean
                })
                .collect();
            let mean = est.iter().sum::<f64>() / reps as f64;
            let var = est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
            let theory = p * (1.0 - p) / n as f64;
            assert!((mean - p).abs() < 4.0 * (theory / reps as f64).sqrt());
            assert!(
                (var - theory).abs() / theory < 0.05,
                "p={p}: {var} vs {theory}"
            );
        }
    }

    #[test]
    fn vanishing_discount_recovers_point_mean() {
        let n = 8;
        for s in 0..=n {
            let mut r = vec![1u8; s];
            r.resize(n, 0);
            let g = group(&r);
            let post = update_dbb(PosteriorState::default(), &g, lam(1e-6));
            assert!((dbb_estimate(&post).mean - point_estimate(&g).mean).abs() < 1e-5);
        }
    }

    fn arb_history() -> impl Strategy<Value = Vec<Vec<u8>>> {
        prop::collection::vec(prop::collection::vec(0u8..=1, 8), 1..100)
    }

    proptest! {
        #[test]
        fn unit_discount_is_conjugate_update(history in arb_history()) {
            let mut a = PosteriorState::default();
            let mut b = PosteriorState::default();
            for r in history {
                let g = RewardGroup::new(r).unwrap();
                a = update_dbb(a, &g, Discount::UNDISCOUNTED);
                b = update_beta_bernoulli(b, &g);
                prop_assert_eq!(a.alpha.to_bits(), b.alpha.to_bits());
                prop_assert_eq!(a.beta.to_bits(), b.beta.to_bits());
                prop_assert_eq!(a.visits, b.visits);
            }
        }

        #[test]
        fn discounted_variance_never_collapses(
            history in arb_history(),
            tenths in 1u32..=10,
        ) {
            let l = lam(tenths as f64 / 10.0);
            let mut state = PosteriorState::default();
            let mut floor = 1.0f64;
            for r in history {
                state = update_dbb(state, &RewardGroup::new(r).unwrap(), l);
                floor *= l.get();
                prop_assert!(dbb_estimate(&state).variance > 0.0);
                prop_assert!(state.alpha >= floor && state.beta >= floor);
            }
        }

        #[test]
        fn mass_follows_geometric_series(
            history in arb_history(),
            l in 0.01f64..=1.0,
        ) {
            let l = lam(l);
            let mut state = PosteriorState::default();
            for r in &history {
                state = update_dbb(state, &RewardGroup::new(r.clone()).unwrap(), l);
            }
            let tau = history.len() as i32;
            let series: f64 = (1..=tau).map(|k| l.get().powi(tau - k)).sum();
            let expected = l.get().powi(tau) * 2.0 + 8.0 * series;
            prop_assert!((state.mass() - expected).abs() <= 1e-12 * expected);
        }

        #[test]
        fn one_step_variance_below_point_variance(
            p in 0.0f64..=1.0,
            l in 1e-6f64..=1.0,
            mass in 0.01f64..100.0,
            n in 1usize..64,
        ) {
            let state = st(mass / 2.0, mass / 2.0);
            let v = one_step_variance(&state, lam(l), n, p).unwrap();
            prop_assert!(v <= p * (1.0 - p) / n as f64);
        }

        #[test]
        fn point_variance_bounded(r in prop::collection::vec(0u8..=1, 2..64)) {
            let n = r.len() as f64;
            let s = point_estimate(&RewardGroup::new(r).unwrap());
            prop_assert!(s.variance <= n / (4.0 * (n - 1.0)) + 1e-15);
        }
    }
}
