//! Semantic coders and the semantic distortion loss family.
//!
//! The loss weighs an observable-reconstruction term against a pragmatic
//! term computed on the receiver's task output:
//!
//! ```text
//! L = lambda * alpha * D_ob(K, K_hat) + (1 - lambda) * D_pr(Z, Z_hat)
//! ```
//!
//! `D_ob` is mean squared error. `D_pr` is softmax cross entropy for
//! discrete tasks and mean squared error between masks for continuous
//! tasks; both terms are non-negative penalties.

mod coder;
mod distortion;
mod pragmatic;
mod pretrain;

pub use coder::{CoderArch, CoderPair};
pub use distortion::{
    calibrate_alpha, distortion_components, esd_batch, semantic_distortion, Components,
    SemanticLoss, Target, TrainingSample,
};
pub use pragmatic::{
    metric_from_output, pragmatic_apply, pragmatic_metric, train_pragmatic, IdentityPragmatic, Pragmatic, PragmaticArch,
    PragmaticTrainConfig, TrainedPragmatic,
};
pub use pretrain::{pretrain_reconstruction, PretrainConfig, PretrainOutcome};

pub use crate::datasets_metrics::Targets;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Whether the pragmatic output is a class (discrete) or a mask (continuous).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Discrete,
    Continuous,
}

/// Distortion measure used for the pragmatic term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PragmaticDistortion {
    CrossEntropy,
    Mse,
}

impl TaskKind {
    pub fn pragmatic_distortion(self) -> PragmaticDistortion {
        match self {
            TaskKind::Discrete => PragmaticDistortion::CrossEntropy,
            TaskKind::Continuous => PragmaticDistortion::Mse,
        }
    }
}

/// Weights of the semantic distortion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub d_pr: PragmaticDistortion,
}

impl LossConfig {
    pub fn new(lambda: f64, alpha: f64, task: TaskKind) -> Result<Self> {
        let cfg = Self {
            lambda,
            alpha,
            d_pr: task.pragmatic_distortion(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `lambda = lambda_s(cr)`, `alpha = 1`.
    pub fn with_default_lambda(task: TaskKind, cr: f64) -> Result<Self> {
        Self::new(lambda_s(cr)?, 1.0, task)
    }

    /// Pure reconstruction (`lambda = 1`).
    pub fn reconstruction_only(task: TaskKind) -> Self {
        Self {
            lambda: 1.0,
            alpha: 1.0,
            d_pr: task.pragmatic_distortion(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid(format!("alpha {} must be positive", self.alpha)));
        }
        Ok(())
    }

    /// True when the pragmatic term carries no weight and need not be computed.
    pub fn reconstruction_only_weight(&self) -> bool {
        self.lambda == 1.0
    }
}

/// Default trade-off weight `1 - cr`.
pub fn lambda_s(cr: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&cr) {
        return Err(Error::invalid(format!("compression rate {cr} outside [0, 1]")));
    }
    Ok(1.0 - cr)
}
