//! Monte Carlo MSE experiments for the point and DBB estimators along a
//! known drift trajectory, next to the closed-form predictions.
//!
//! Reproducibility does not depend on scheduling: replication `r` for group
//! size `n` always draws from ChaCha stream `r` under a key derived from
//! `(base_seed, n)`, replications are processed in fixed-size chunks, and
//! chunk statistics are merged in chunk order. All lambdas at one group size
//! see the same simulated rewards.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{dbb_closed_form, point_mse, TrueProbSequence};
use crate::drift::{generate_trajectory, reference_estimate_with, DriftModel};
use crate::error::{Error, Result};
use crate::estimators::{Discount, PosteriorState};
use crate::rng::{binomial, derive_seed, stream_rng};

const CHUNK: usize = 512;
const TRAJECTORY_LABEL: u64 = 0x5452_414a;

/// What the squared error of an estimate is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroundTruth {
    /// The trajectory's true probability.
    #[default]
    Exact,
    /// A fresh `samples`-rollout empirical mean per epoch. Its sampling
    /// noise adds `p (1 - p) / samples` to both closed-form MSEs.
    Reference { samples: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub trajectory: DriftModel,
    pub lambdas: Vec<f64>,
    pub group_sizes: Vec<usize>,
    pub replications: usize,
    /// 1-based epochs at which the squared error is recorded.
    pub eval_epochs: Vec<usize>,
    pub base_seed: u64,
    pub ground_truth: GroundTruth,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.trajectory.validate()?;
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.lambdas.is_empty() {
            return bad("lambda grid is empty");
        }
        for &l in &self.lambdas {
            Discount::new(l)?;
        }
        if self.group_sizes.is_empty() {
            return bad("group size grid is empty");
        }
        if self.group_sizes.contains(&0) {
            return Err(Error::EmptyGroupSize);
        }
        if self.replications == 0 {
            return bad("replications must be >= 1");
        }
        if self.eval_epochs.is_empty() {
            return bad("no evaluation epochs");
        }
        if let Some(&e) = self
            .eval_epochs
            .iter()
            .find(|&&e| e == 0 || e > self.trajectory.length)
        {
            return Err(Error::InvalidParameter(format!(
                "evaluation epoch {e} outside 1..={}",
                self.trajectory.length
            )));
        }
        let mut seen = self.eval_epochs.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.eval_epochs.len() {
            return bad("duplicate evaluation epochs");
        }
        if let GroundTruth::Reference { samples: 0 } = self.ground_truth {
            return bad("reference samples must be >= 1");
        }
        Ok(())
    }

    /// The true-probability trajectory this spec simulates.
    pub fn true_probs(&self) -> Result<TrueProbSequence> {
        generate_trajectory(
            &self.trajectory,
            derive_seed(self.base_seed, TRAJECTORY_LABEL),
        )
    }
}

/// Empirical and closed-form MSE of both estimators at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub lambda: f64,
    pub n: usize,
    pub epoch: usize,
    pub mse_dbb_empirical: f64,
    pub mse_dbb_closed: f64,
    pub mse_point_empirical: f64,
    pub mse_point_closed: f64,
    pub stderr_dbb: f64,
    pub stderr_point: f64,
    /// The point estimator's sample variance is undefined (N = 1).
    pub point_variance_degenerate: bool,
}

impl SweepRecord {
    /// `|empirical - closed| <= k * stderr` for the DBB estimator. A 1e-12
    /// absolute slack absorbs rounding when the stream is deterministic and
    /// the standard error is exactly zero.
    pub fn dbb_agrees(&self, k: f64) -> bool {
        (self.mse_dbb_empirical - self.mse_dbb_closed).abs() <= k * self.stderr_dbb + 1e-12
    }

    pub fn point_agrees(&self, k: f64) -> bool {
        (self.mse_point_empirical - self.mse_point_closed).abs() <= k * self.stderr_point + 1e-12
    }
}

/// Running mean and sum of squared deviations, merged in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / total as f64;
        self.m2 +=
            other.m2 + delta * delta * (self.count as f64 * other.count as f64) / total as f64;
        self.count = total;
    }

    /// Standard error of the mean.
    fn stderr(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        (self.m2 / (n - 1.0)).sqrt() / n.sqrt()
    }
}

/// Per-chunk accumulators: `dbb[lambda][eval]` and `point[eval]`.
#[derive(Clone)]
struct Accumulators {
    dbb: Vec<Vec<Welford>>,
    point: Vec<Welford>,
}

impl Accumulators {
    fn new(lambdas: usize, evals: usize) -> Self {
        Self {
            dbb: vec![vec![Welford::default(); evals]; lambdas],
            point: vec![Welford::default(); evals],
        }
    }

    fn merge(&mut self, other: &Accumulators) {
        for (mine, theirs) in self.dbb.iter_mut().zip(&other.dbb) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                a.merge(b);
            }
        }
        for (a, b) in self.point.iter_mut().zip(&other.point) {
            a.merge(b);
        }
    }
}

/// Runs every grid point of `spec` on the current rayon pool.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    spec.validate()?;
    let seq = spec.true_probs()?;
    let probs = seq.probs();
    let lambdas: Vec<Discount> = spec
        .lambdas
        .iter()
        .map(|&l| Discount::new(l))
        .collect::<Result<_>>()?;
    // eval_slot[k] = position of epoch k + 1 in eval_epochs.
    let mut eval_slot = vec![None; probs.len()];
    for (i, &e) in spec.eval_epochs.iter().enumerate() {
        eval_slot[e - 1] = Some(i);
    }
    let evals = spec.eval_epochs.len();
    let chunks = spec.replications.div_ceil(CHUNK);

    let mut records = Vec::new();
    for &n in &spec.group_sizes {
        let key = derive_seed(spec.base_seed, n as u64);
        let partials: Vec<Accumulators> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = Accumulators::new(lambdas.len(), evals);
                let end = ((c + 1) * CHUNK).min(spec.replications);
                let mut states = vec![PosteriorState::default(); lambdas.len()];
                for r in c * CHUNK..end {
                    let mut rng = stream_rng(key, r as u64);
                    states.fill(PosteriorState::default());
                    for (k, &p) in probs.iter().enumerate() {
                        let s = binomial(&mut rng, n as u32, p) as usize;
                        let target = match spec.ground_truth {
                            GroundTruth::Exact => p,
                            GroundTruth::Reference { samples } => {
                                reference_estimate_with(&mut rng, p, samples)?.value
                            }
                        };
                        for (state, &l) in states.iter_mut().zip(&lambdas) {
                            *state = state.observe(s, n, l);
                        }
                        if let Some(slot) = eval_slot[k] {
                            for (li, state) in states.iter().enumerate() {
                                acc.dbb[li][slot].push((state.mean() - target).powi(2));
                            }
                            acc.point[slot].push((s as f64 / n as f64 - target).powi(2));
                        }
                    }
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;

        let mut total = Accumulators::new(lambdas.len(), evals);
        for part in &partials {
            total.merge(part);
        }

        for (li, &l) in lambdas.iter().enumerate() {
            for (slot, &epoch) in spec.eval_epochs.iter().enumerate() {
                let p = probs[epoch - 1];
                let noise = match spec.ground_truth {
                    GroundTruth::Exact => 0.0,
                    GroundTruth::Reference { samples } => p * (1.0 - p) / samples as f64,
                };
                let closed = dbb_closed_form(&seq.prefix(epoch)?, l, n)?;
                records.push(SweepRecord {
                    lambda: l.get(),
                    n,
                    epoch,
                    mse_dbb_empirical: total.dbb[li][slot].mean,
                    mse_dbb_closed: closed.mse + noise,
                    mse_point_empirical: total.point[slot].mean,
                    mse_point_closed: point_mse(p, n)? + noise,
                    stderr_dbb: total.dbb[li][slot].stderr(),
                    stderr_point: total.point[slot].stderr(),
                    point_variance_degenerate: n == 1,
                });
            }
        }
    }
    Ok(records)
}

/// [`run_sweep`] on a dedicated pool of `workers` threads.
pub fn run_sweep_with_workers(spec: &SweepSpec, workers: usize) -> Result<Vec<SweepRecord>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| run_sweep(spec))
}

/// Grid lambda with the smallest empirical DBB MSE at `epoch`. Ties go to
/// the smaller lambda.
pub fn argmin_lambda(records: &[SweepRecord], epoch: usize) -> Result<(f64, f64)> {
    let at: Vec<&SweepRecord> = records.iter().filter(|r| r.epoch == epoch).collect();
    let first = at.first().ok_or(Error::NoRecordsAtEpoch(epoch))?;
    if at.iter().any(|r| r.n != first.n) {
        return Err(Error::MixedGroupSizes(epoch));
    }
    let mut distinct: Vec<f64> = at.iter().map(|r| r.lambda).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::TooFewLambdas(distinct.len()));
    }
    let best = at
        .iter()
        .min_by(|a, b| {
            a.mse_dbb_empirical
                .total_cmp(&b.mse_dbb_empirical)
                .then(a.lambda.total_cmp(&b.lambda))
        })
        .expect("non-empty");
    Ok((best.lambda, best.mse_dbb_empirical))
}

/// Lambda whose epoch-averaged MSE (as chosen by `mse`) is smallest. Ties
/// go to the smaller lambda.
pub fn argmin_average<F>(summaries: &[SweepSummary], mse: F) -> Result<(f64, f64)>
where
    F: Fn(&SweepSummary) -> f64,
{
    let first = summaries.first().ok_or(Error::TooFewLambdas(0))?;
    if summaries.iter().any(|s| s.n != first.n) {
        return Err(Error::MixedGroupSizes(0));
    }
    if summaries.len() < 2 {
        return Err(Error::TooFewLambdas(summaries.len()));
    }
    let best = summaries
        .iter()
        .min_by(|a, b| {
            mse(a)
                .total_cmp(&mse(b))
                .then(a.lambda.total_cmp(&b.lambda))
        })
        .expect("non-empty");
    Ok((best.lambda, mse(best)))
}

/// Epoch-averaged MSEs for one `(lambda, n)` grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub lambda: f64,
    pub n: usize,
    pub mse_dbb_empirical: f64,
    pub mse_dbb_closed: f64,
    pub mse_point_empirical: f64,
    pub mse_point_closed: f64,
}

/// Averages each `(lambda, n)` grid point over its evaluation epochs, in
/// first-appearance order.
pub fn epoch_averages(records: &[SweepRecord]) -> Vec<SweepSummary> {
    let mut out: Vec<(SweepSummary, usize)> = Vec::new();
    for r in records {
        let pos = out
            .iter()
            .position(|(s, _)| s.lambda == r.lambda && s.n == r.n);
        let (s, count) = match pos {
            Some(i) => &mut out[i],
            None => {
                out.push((
                    SweepSummary {
                        lambda: r.lambda,
                        n: r.n,
                        mse_dbb_empirical: 0.0,
                        mse_dbb_closed: 0.0,
                        mse_point_empirical: 0.0,
                        mse_point_closed: 0.0,
                    },
                    0,
                ));
                out.last_mut().expect("just pushed")
            }
        };
        s.mse_dbb_empirical += r.mse_dbb_empirical;
        s.mse_dbb_closed += r.mse_dbb_closed;
        s.mse_point_empirical += r.mse_point_empirical;
        s.mse_point_closed += r.mse_point_closed;
        *count += 1;
    }
    out.into_iter()
        .map(|(mut s, count)| {
            let c = count as f64;
            s.mse_dbb_empirical /= c;
            s.mse_dbb_closed /= c;
            s.mse_point_empirical /= c;
            s.mse_point_closed /= c;
            s
        })
        .collect()
}
