//! Per-rollout advantages for GRPO and Dr.GRPO, each with either the point
//! estimator or the discounted Beta-Bernoulli posterior as the baseline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{dbb_estimate, point_estimate, EstimatorKind, PosteriorState, RewardGroup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Normalization {
    /// `(x - mean) / std`, as in GRPO.
    GroupRelative,
    /// `x - mean`, as in Dr.GRPO.
    MeanCentered,
}

/// What to do when a group-relative point advantage has zero group variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum CollapsePolicy {
    /// Every advantage is 0 and the vector is flagged as collapsed.
    #[default]
    ZeroAdvantage,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AdvantageScheme {
    pub normalization: Normalization,
    pub estimator: EstimatorKind,
    pub collapse_policy: CollapsePolicy,
}

impl AdvantageScheme {
    pub const fn new(normalization: Normalization, estimator: EstimatorKind) -> Self {
        Self {
            normalization,
            estimator,
            collapse_policy: CollapsePolicy::ZeroAdvantage,
        }
    }

    pub const fn grpo_point() -> Self {
        Self::new(Normalization::GroupRelative, EstimatorKind::Point)
    }

    pub const fn grpo_dbb() -> Self {
        Self::new(Normalization::GroupRelative, EstimatorKind::Dbb)
    }

    pub const fn drgrpo_point() -> Self {
        Self::new(Normalization::MeanCentered, EstimatorKind::Point)
    }

    pub const fn drgrpo_dbb() -> Self {
        Self::new(Normalization::MeanCentered, EstimatorKind::Dbb)
    }

    pub fn with_collapse_policy(mut self, policy: CollapsePolicy) -> Self {
        self.collapse_policy = policy;
        self
    }

    pub fn uses_posterior(&self) -> bool {
        self.estimator == EstimatorKind::Dbb
    }

    /// Command-line name, e.g. `grpo-dbb`.
    pub fn name(&self) -> &'static str {
        match (self.normalization, self.estimator) {
            (Normalization::GroupRelative, EstimatorKind::Point) => "grpo-point",
            (Normalization::GroupRelative, EstimatorKind::Dbb) => "grpo-dbb",
            (Normalization::MeanCentered, EstimatorKind::Point) => "drgrpo-point",
            (Normalization::MeanCentered, EstimatorKind::Dbb) => "drgrpo-dbb",
        }
    }
}

impl fmt::Display for AdvantageScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdvantageScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grpo-point" => Ok(Self::grpo_point()),
            "grpo-dbb" => Ok(Self::grpo_dbb()),
            "drgrpo-point" => Ok(Self::drgrpo_point()),
            "drgrpo-dbb" => Ok(Self::drgrpo_dbb()),
            other => Err(Error::InvalidParameter(format!(
                "unknown advantage scheme {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageVector {
    pub values: Vec<f64>,
    /// The group had no within-group signal and all values were zeroed.
    pub collapsed: bool,
}

/// Advantages for every rollout in `group`.
///
/// For DBB schemes `posterior` must already include this group's update:
/// the posterior is updated first and the advantage is computed from the
/// updated counts.
pub fn compute_advantages(
    group: &RewardGroup,
    scheme: AdvantageScheme,
    posterior: Option<&PosteriorState>,
) -> Result<AdvantageVector> {
    let summary = match scheme.estimator {
        EstimatorKind::Point => point_estimate(group),
        EstimatorKind::Dbb => dbb_estimate(posterior.ok_or(Error::MissingPosterior)?),
    };
    let centered = group.rewards().iter().map(|&x| x as f64 - summary.mean);

    let values = match scheme.normalization {
        Normalization::MeanCentered => centered.collect(),
        Normalization::GroupRelative => {
            // DBB variance is strictly positive; only the point estimator
            // can land here with zero.
            if summary.variance == 0.0 {
                return match scheme.collapse_policy {
                    CollapsePolicy::ZeroAdvantage => Ok(AdvantageVector {
                        values: vec![0.0; group.len()],
                        collapsed: true,
                    }),
                    CollapsePolicy::Error => Err(Error::VarianceCollapse),
                };
            }
            let std = summary.variance.sqrt();
            centered.map(|c| c / std).collect()
        }
    };
    Ok(AdvantageVector {
        values,
        collapsed: false,
    })
}
