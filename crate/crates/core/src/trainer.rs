//! Toy RLVR loop on a softmax bandit.
//!
//! Each prompt is a K-way multiple-choice question with one correct answer;
//! an episode is a single action, so the per-token clipped surrogate reduces
//! to one term per rollout. Per minibatch the loop freezes the old policy,
//! samples a group for every prompt, updates that prompt's discounted
//! posterior, computes advantages from the updated posterior, and then takes
//! `updates_per_batch` gradient-ascent steps on the clipped surrogate.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::advantage::{compute_advantages, AdvantageScheme};
use crate::error::{Error, Result};
use crate::estimators::{
    point_estimate, update_dbb, Discount, EstimatorKind, PosteriorState, RewardGroup,
};
use crate::rng::{derive_seed, stream_rng};

const SHUFFLE_LABEL: u64 = 0x5348_5546;
const ROLLOUT_LABEL: u64 = 0x524f_4c4c;
const TASK_LABEL: u64 = 0x5441_534b;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BanditTask {
    pub prompt_id: u64,
    pub k_answers: usize,
    pub correct_answer: usize,
}

impl BanditTask {
    pub fn new(prompt_id: u64, k_answers: usize, correct_answer: usize) -> Result<Self> {
        if k_answers < 2 {
            return Err(Error::InvalidParameter(format!(
                "a task needs at least 2 answers, got {k_answers}"
            )));
        }
        if correct_answer >= k_answers {
            return Err(Error::InvalidParameter(format!(
                "correct answer {correct_answer} outside 0..{k_answers}"
            )));
        }
        Ok(Self {
            prompt_id,
            k_answers,
            correct_answer,
        })
    }

    /// `count` tasks with ids `0..count` and seeded correct answers.
    pub fn suite(count: usize, k_answers: usize, seed: u64) -> Result<Vec<Self>> {
        let mut rng = stream_rng(derive_seed(seed, TASK_LABEL), 0);
        (0..count)
            .map(|i| {
                let correct = rng.random_range(0..k_answers.max(1) as u64) as usize;
                Self::new(i as u64, k_answers, correct)
            })
            .collect()
    }

    /// Verifiable binary reward.
    #[inline]
    pub fn reward(&self, answer: usize) -> u8 {
        u8::from(answer == self.correct_answer)
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Independent logit vectors, one per task, indexed like the task list.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    logits: Vec<Vec<f64>>,
}

impl SoftmaxPolicy {
    pub fn uniform(tasks: &[BanditTask]) -> Self {
        Self::with_correct_logit(tasks, 0.0)
    }

    /// Zero logits except `correct_logit` on each task's correct answer,
    /// standing in for a base model with some prior competence.
    pub fn with_correct_logit(tasks: &[BanditTask], correct_logit: f64) -> Self {
        let logits = tasks
            .iter()
            .map(|t| {
                let mut z = vec![0.0; t.k_answers];
                z[t.correct_answer] = correct_logit;
                z
            })
            .collect();
        Self { logits }
    }

    pub fn from_logits(logits: Vec<Vec<f64>>) -> Result<Self> {
        if logits.iter().flatten().any(|z| !z.is_finite()) {
            return Err(Error::InvalidParameter("non-finite logit".into()));
        }
        Ok(Self { logits })
    }

    pub fn logits(&self, task: usize) -> &[f64] {
        &self.logits[task]
    }

    pub fn probs(&self, task: usize) -> Vec<f64> {
        softmax(&self.logits[task])
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self, task: usize) -> f64 {
        self.probs(task)
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum()
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }
}

/// Samples `n` answers for `task` and scores them.
pub fn rollout_group<R: Rng + ?Sized>(
    policy: &SoftmaxPolicy,
    task_index: usize,
    task: &BanditTask,
    n: usize,
    rng: &mut R,
) -> Result<(RewardGroup, Vec<usize>)> {
    let probs = policy.probs(task_index);
    let answers: Vec<usize> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut cum = 0.0;
            for (j, &p) in probs.iter().enumerate() {
                cum += p;
                if u < cum {
                    return j;
                }
            }
            // u landed in the rounding gap above the cumulative sum.
            probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
        })
        .collect();
    let rewards = answers.iter().map(|&a| task.reward(a)).collect();
    Ok((RewardGroup::new(rewards)?, answers))
}

/// Clipped surrogate for one prompt:
/// `(1/N) sum_i min(w_i A_i, clip(w_i, 1 - clip_low, 1 + clip_high) A_i)`
/// with `w_i = pi(a_i) / pi_old(a_i)`.
pub fn surrogate_objective(
    logits: &[f64],
    answers: &[usize],
    advantages: &[f64],
    old_probs: &[f64],
    clip_low: f64,
    clip_high: f64,
) -> f64 {
    let probs = softmax(logits);
    let n = answers.len() as f64;
    answers
        .iter()
        .zip(advantages)
        .zip(old_probs)
        .map(|((&a, &adv), &old)| {
            let w = probs[a] / old;
            let clipped = w.clamp(1.0 - clip_low, 1.0 + clip_high);
            (w * adv).min(clipped * adv)
        })
        .sum::<f64>()
        / n
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateGradient {
    pub grad: Vec<f64>,
    /// Rollouts whose clipped branch won the min and contribute no gradient.
    pub clipped: usize,
}

/// Gradient of [`surrogate_objective`] with respect to the logits.
///
/// `d pi(a) / d z_j = pi(a) (1[j = a] - pi(j))`, so an unclipped rollout
/// contributes `A_i w_i (1[j = a_i] - pi(j)) / N`.
pub fn surrogate_gradient(
    logits: &[f64],
    answers: &[usize],
    advantages: &[f64],
    old_probs: &[f64],
    clip_low: f64,
    clip_high: f64,
) -> SurrogateGradient {
    let probs = softmax(logits);
    let n = answers.len() as f64;
    let mut grad = vec![0.0; logits.len()];
    let mut clipped = 0;
    for ((&a, &adv), &old) in answers.iter().zip(advantages).zip(old_probs) {
        let w = probs[a] / old;
        let bounded = w.clamp(1.0 - clip_low, 1.0 + clip_high);
        if bounded * adv < w * adv {
            clipped += 1;
            continue;
        }
        let scale = adv * w / n;
        for (j, g) in grad.iter_mut().enumerate() {
            let indicator = if j == a { 1.0 } else { 0.0 };
            *g += scale * (indicator - probs[j]);
        }
    }
    SurrogateGradient { grad, clipped }
}

/// One gradient-ascent step on task `task_index`'s logits. Returns the
/// number of clipped rollouts.
pub fn surrogate_update(
    policy: &mut SoftmaxPolicy,
    task_index: usize,
    answers: &[usize],
    advantages: &[f64],
    old_probs: &[f64],
    config: &TrainerConfig,
) -> Result<usize> {
    let logits = &mut policy.logits[task_index];
    let g = surrogate_gradient(
        logits,
        answers,
        advantages,
        old_probs,
        config.clip_low,
        config.clip_high,
    );
    if g.grad.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    for (z, d) in logits.iter_mut().zip(&g.grad) {
        *z += config.learning_rate * d;
    }
    Ok(g.clipped)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub n_rollouts: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub updates_per_batch: usize,
    pub learning_rate: f64,
    pub lambda: Discount,
    pub scheme: AdvantageScheme,
    pub clip_low: f64,
    pub clip_high: f64,
    /// Initial logit of every correct answer (all others start at 0).
    pub initial_correct_logit: f64,
    pub seed: u64,
}

impl TrainerConfig {
    /// Defaults for `scheme`: clip range (0.2, 0.28) for point baselines and
    /// the wider (0.98, 0.98) for DBB baselines.
    pub fn for_scheme(scheme: AdvantageScheme) -> Self {
        let (clip_low, clip_high) = default_clip_range(scheme);
        Self {
            n_rollouts: 8,
            epochs: 4,
            minibatch_size: 20,
            updates_per_batch: 1,
            learning_rate: 5.0,
            lambda: Discount::new(0.5).expect("0.5 is a valid discount"),
            scheme,
            clip_low,
            clip_high,
            initial_correct_logit: 1.5,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_rollouts == 0 {
            return Err(Error::EmptyGroupSize);
        }
        if self.minibatch_size == 0 {
            return bad("minibatch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(self.clip_low >= 0.0 && self.clip_high >= 0.0) {
            return bad("clip ranges must be >= 0".into());
        }
        if !self.initial_correct_logit.is_finite() {
            return bad("initial_correct_logit must be finite".into());
        }
        Ok(())
    }
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self::for_scheme(AdvantageScheme::grpo_dbb())
    }
}

pub fn default_clip_range(scheme: AdvantageScheme) -> (f64, f64) {
    match scheme.estimator {
        EstimatorKind::Point => (0.2, 0.28),
        EstimatorKind::Dbb => (0.98, 0.98),
    }
}

/// Per-prompt posteriors keyed by prompt id, all discounted by one lambda.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorStore {
    lambda: Discount,
    states: BTreeMap<u64, PosteriorState>,
}

impl PosteriorStore {
    pub fn new(lambda: Discount) -> Self {
        Self {
            lambda,
            states: BTreeMap::new(),
        }
    }

    /// Store with every task at the Beta(1, 1) prior.
    pub fn for_tasks(lambda: Discount, tasks: &[BanditTask]) -> Self {
        let mut store = Self::new(lambda);
        for t in tasks {
            store.states.insert(t.prompt_id, PosteriorState::default());
        }
        store
    }

    pub fn lambda(&self) -> Discount {
        self.lambda
    }

    /// State for `prompt_id`; unseen prompts are at the prior.
    pub fn get(&self, prompt_id: u64) -> PosteriorState {
        self.states.get(&prompt_id).copied().unwrap_or_default()
    }

    pub fn insert(&mut self, prompt_id: u64, state: PosteriorState) {
        self.states.insert(prompt_id, state);
    }

    /// Applies the discounted update for `group` and returns the new state.
    pub fn update(&mut self, prompt_id: u64, group: &RewardGroup) -> PosteriorState {
        let next = update_dbb(self.get(prompt_id), group, self.lambda);
        self.states.insert(prompt_id, next);
        next
    }

    /// `(prompt_id, state)` in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, &PosteriorState)> {
        self.states.iter().map(|(&id, s)| (id, s))
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Metrics for one minibatch step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub epoch: usize,
    pub mean_reward: f64,
    /// Mean entropy of the sampling policy over the minibatch's prompts.
    pub entropy: f64,
    /// Fraction of groups whose point sample variance is zero.
    pub zero_var_frac: f64,
    /// Fraction of rollout-updates whose clipped branch was active.
    pub clip_frac: f64,
    pub groups: usize,
    pub collapsed_groups: usize,
    pub nonfinite_advantages: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainMetrics {
    pub steps: Vec<StepMetrics>,
}

impl TrainMetrics {
    /// Group-weighted mean reward over the last epoch's steps.
    pub fn final_epoch_reward(&self) -> Option<f64> {
        let last = self.steps.last()?.epoch;
        let (sum, groups) = self
            .steps
            .iter()
            .filter(|s| s.epoch == last)
            .fold((0.0, 0), |(sum, g), s| {
                (sum + s.mean_reward * s.groups as f64, g + s.groups)
            });
        Some(sum / groups as f64)
    }

    pub fn total_groups(&self) -> usize {
        self.steps.iter().map(|s| s.groups).sum()
    }

    pub fn total_nonfinite_advantages(&self) -> usize {
        self.steps.iter().map(|s| s.nonfinite_advantages).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub metrics: TrainMetrics,
    pub policy: SoftmaxPolicy,
    pub posteriors: PosteriorStore,
}

/// Trains from the initial policy and fresh Beta(1, 1) posteriors.
pub fn train(tasks: &[BanditTask], config: &TrainerConfig) -> Result<TrainOutcome> {
    let policy = SoftmaxPolicy::with_correct_logit(tasks, config.initial_correct_logit);
    let posteriors = PosteriorStore::for_tasks(config.lambda, tasks);
    train_from(tasks, config, policy, posteriors)
}

/// Trains starting from an existing policy and posterior store.
pub fn train_from(
    tasks: &[BanditTask],
    config: &TrainerConfig,
    mut policy: SoftmaxPolicy,
    mut posteriors: PosteriorStore,
) -> Result<TrainOutcome> {
    if tasks.is_empty() {
        return Err(Error::InvalidParameter("no training tasks".into()));
    }
    config.validate()?;
    if policy.len() != tasks.len() {
        return Err(Error::InvalidParameter(format!(
            "policy covers {} tasks, expected {}",
            policy.len(),
            tasks.len()
        )));
    }
    if posteriors.lambda() != config.lambda {
        return Err(Error::InvalidParameter(format!(
            "posterior store lambda {} differs from config lambda {}",
            posteriors.lambda().get(),
            config.lambda.get()
        )));
    }
    let n = config.n_rollouts;
    let rollout_key = derive_seed(config.seed, ROLLOUT_LABEL);
    let mut metrics = TrainMetrics::default();

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..tasks.len()).collect();
        let mut shuffle_rng = stream_rng(derive_seed(config.seed, SHUFFLE_LABEL), epoch as u64);
        order.shuffle(&mut shuffle_rng);

        for batch in order.chunks(config.minibatch_size) {
            struct Pending {
                task: usize,
                answers: Vec<usize>,
                advantages: Vec<f64>,
                old_probs: Vec<f64>,
            }
            let mut pending = Vec::with_capacity(batch.len());
            let (mut successes, mut entropy) = (0usize, 0.0);
            let (mut zero_var, mut collapsed, mut nonfinite) = (0usize, 0usize, 0usize);

            for &ti in batch {
                let task = &tasks[ti];
                let stream = ((epoch as u64) << 32) | ti as u64;
                let mut rng = stream_rng(rollout_key, stream);
                let sampling = policy.probs(ti);
                entropy += policy.entropy(ti);
                let (group, answers) = rollout_group(&policy, ti, task, n, &mut rng)?;
                successes += group.successes();
                if point_estimate(&group).variance == 0.0 {
                    zero_var += 1;
                }
                let posterior = posteriors.update(task.prompt_id, &group);
                let adv = compute_advantages(&group, config.scheme, Some(&posterior))?;
                nonfinite += adv.values.iter().filter(|v| !v.is_finite()).count();
                collapsed += usize::from(adv.collapsed);
                pending.push(Pending {
                    task: ti,
                    old_probs: answers.iter().map(|&a| sampling[a]).collect(),
                    answers,
                    advantages: adv.values,
                });
            }

            let mut clipped = 0;
            for _ in 0..config.updates_per_batch {
                for p in &pending {
                    clipped += surrogate_update(
                        &mut policy,
                        p.task,
                        &p.answers,
                        &p.advantages,
                        &p.old_probs,
                        config,
                    )?;
                }
            }

            let groups = batch.len();
            let rollout_updates = groups * n * config.updates_per_batch;
            metrics.steps.push(StepMetrics {
                step: metrics.steps.len() + 1,
                epoch,
                mean_reward: successes as f64 / (groups * n) as f64,
                entropy: entropy / groups as f64,
                zero_var_frac: zero_var as f64 / groups as f64,
                clip_frac: if rollout_updates == 0 {
                    0.0
                } else {
                    clipped as f64 / rollout_updates as f64
                },
                groups,
                collapsed_groups: collapsed,
                nonfinite_advantages: nonfinite,
            });
        }
    }
    Ok(TrainOutcome {
        metrics,
        policy,
        posteriors,
    })
}
