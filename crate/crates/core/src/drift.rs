//! Synthetic trajectories of true success probabilities, and the
//! finite-sample reference value used when the true probability is only
//! observable through extra rollouts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::closed_form::TrueProbSequence;
use crate::error::{Error, Result};
use crate::estimators::check_probability;
use crate::rng::{binomial, derive_seed, irwin_hall_normal, stream_rng};

const WALK_LABEL: u64 = 0x5741_4c4b;
const REFERENCE_LABEL: u64 = 0x5245_4652;

/// Default number of extra rollouts behind a reference value.
pub const REFERENCE_SAMPLES: u32 = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftKind {
    Stationary {
        p: f64,
    },
    /// Affine interpolation from `p_start` at epoch 1 to `p_end` at the last epoch.
    LinearRamp {
        p_start: f64,
        p_end: f64,
    },
    /// `floor + (ceiling - floor) / (1 + exp(-rate * (epoch - midpoint)))`,
    /// a learning-curve shape.
    Logistic {
        midpoint: f64,
        rate: f64,
        floor: f64,
        ceiling: f64,
    },
    /// `p_before` until `change_epoch` (1-based), `p_after` from then on.
    Step {
        p_before: f64,
        p_after: f64,
        change_epoch: usize,
    },
    /// Starts at `p_start`; each later epoch adds a zero-mean step with
    /// standard deviation `step_std` and clamps to [0, 1].
    BoundedRandomWalk {
        p_start: f64,
        step_std: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftModel {
    pub kind: DriftKind,
    pub length: usize,
}

impl Default for DriftModel {
    /// A slow logistic learning curve over 20 epochs.
    fn default() -> Self {
        Self {
            kind: DriftKind::Logistic {
                midpoint: 10.0,
                rate: 0.4,
                floor: 0.05,
                ceiling: 0.95,
            },
            length: 20,
        }
    }
}

impl DriftModel {
    pub fn new(kind: DriftKind, length: usize) -> Self {
        Self { kind, length }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::ZeroEpochs);
        }
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self.kind {
            DriftKind::Stationary { p } => check_probability(p),
            DriftKind::LinearRamp { p_start, p_end } => {
                check_probability(p_start)?;
                check_probability(p_end)
            }
            DriftKind::Logistic {
                midpoint,
                rate,
                floor,
                ceiling,
            } => {
                check_probability(floor)?;
                check_probability(ceiling)?;
                if floor > ceiling {
                    return bad(format!("logistic floor {floor} above ceiling {ceiling}"));
                }
                if !midpoint.is_finite() || !rate.is_finite() {
                    return bad("logistic midpoint and rate must be finite".into());
                }
                Ok(())
            }
            DriftKind::Step {
                p_before,
                p_after,
                change_epoch,
            } => {
                check_probability(p_before)?;
                check_probability(p_after)?;
                if change_epoch == 0 {
                    return bad("step change_epoch is 1-based".into());
                }
                Ok(())
            }
            DriftKind::BoundedRandomWalk { p_start, step_std } => {
                check_probability(p_start)?;
                if !(step_std >= 0.0 && step_std.is_finite()) {
                    return bad(format!("random walk step_std must be >= 0, got {step_std}"));
                }
                Ok(())
            }
        }
    }
}

/// Probabilities `p_1..p_tau` for `model`. Only the random walk consumes
/// `seed`; the other kinds are deterministic.
pub fn generate_trajectory(model: &DriftModel, seed: u64) -> Result<TrueProbSequence> {
    model.validate()?;
    let tau = model.length;
    let probs: Vec<f64> = match model.kind {
        DriftKind::Stationary { p } => vec![p; tau],
        DriftKind::LinearRamp { p_start, p_end } => {
            if tau == 1 {
                vec![p_start]
            } else {
                let span = (tau - 1) as f64;
                (0..tau)
                    .map(|i| {
                        let t = i as f64 / span;
                        ((1.0 - t) * p_start + t * p_end).clamp(0.0, 1.0)
                    })
                    .collect()
            }
        }
        DriftKind::Logistic {
            midpoint,
            rate,
            floor,
            ceiling,
        } => (1..=tau)
            .map(|k| {
                let s = 1.0 / (1.0 + (-rate * (k as f64 - midpoint)).exp());
                (floor + (ceiling - floor) * s).clamp(0.0, 1.0)
            })
            .collect(),
        DriftKind::Step {
            p_before,
            p_after,
            change_epoch,
        } => (1..=tau)
            .map(|k| if k < change_epoch { p_before } else { p_after })
            .collect(),
        DriftKind::BoundedRandomWalk { p_start, step_std } => {
            let mut rng = stream_rng(derive_seed(seed, WALK_LABEL), 0);
            let mut p = p_start;
            let mut out = Vec::with_capacity(tau);
            out.push(p);
            for _ in 1..tau {
                p = (p + step_std * irwin_hall_normal(&mut rng)).clamp(0.0, 1.0);
                out.push(p);
            }
            out
        }
    };
    TrueProbSequence::new(probs)
}

/// Mean of `sample_count` extra Bernoulli(p_true) rollouts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceEstimate {
    pub value: f64,
    pub successes: u32,
    pub sample_count: u32,
}

pub fn reference_estimate(p_true: f64, sample_count: u32, seed: u64) -> Result<ReferenceEstimate> {
    let mut rng = stream_rng(derive_seed(seed, REFERENCE_LABEL), 0);
    reference_estimate_with(&mut rng, p_true, sample_count)
}

/// Same as [`reference_estimate`] but drawing from a caller-owned stream.
pub fn reference_estimate_with<R: Rng + ?Sized>(
    rng: &mut R,
    p_true: f64,
    sample_count: u32,
) -> Result<ReferenceEstimate> {
    check_probability(p_true)?;
    if sample_count == 0 {
        return Err(Error::InvalidParameter(
            "reference sample_count must be >= 1".into(),
        ));
    }
    let successes = binomial(rng, sample_count, p_true);
    Ok(ReferenceEstimate {
        value: successes as f64 / sample_count as f64,
        successes,
        sample_count,
    })
}
