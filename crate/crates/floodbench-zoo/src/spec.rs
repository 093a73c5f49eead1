//! Declarative model and training configuration.

use serde::{Deserialize, Serialize};

use crate::error::ZooError;
use floodbench_core::features::FeatureSpec;

/// Model family. `NoChange`/`LinearExtrap` are parameter-free; the AR
/// variants are a single convolution over the depth window; the rest are
/// the deep image-to-image models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    NoChange,
    LinearExtrap,
    Ar1x1,
    Ar5x5,
    Fcn,
    Autoencoder,
    Unet,
    Graph,
}

impl Family {
    pub fn tag(self) -> &'static str {
        match self {
            Family::NoChange => "no_change",
            Family::LinearExtrap => "linear_extrap",
            Family::Ar1x1 => "ar_1x1",
            Family::Ar5x5 => "ar_5x5",
            Family::Fcn => "fcn",
            Family::Autoencoder => "autoencoder",
            Family::Unet => "unet",
            Family::Graph => "graph",
        }
    }

    /// Parameter-free baselines cannot be trained.
    pub fn is_parametric(self) -> bool {
        !matches!(self, Family::NoChange | Family::LinearExtrap)
    }

    /// AR baselines are a single next-step convolution; they train with the
    /// one-step objective and are always evaluated by rollout.
    pub fn is_autoregressive(self) -> bool {
        matches!(self, Family::Ar1x1 | Family::Ar5x5)
    }

    pub fn default_widths(self) -> Vec<usize> {
        match self {
            Family::NoChange | Family::LinearExtrap | Family::Ar1x1 | Family::Ar5x5 => vec![],
            Family::Fcn => vec![64, 64],
            Family::Autoencoder => vec![32, 64, 128],
            Family::Unet => vec![32, 64, 128],
            // [edge MLP width, node MLP width]
            Family::Graph => vec![32, 32],
        }
    }
}

fn default_true() -> bool {
    true
}

/// Everything needed to build a model deterministically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    /// Observed depth frames T in the input window.
    pub t_steps: usize,
    /// Horizon the network's input stack is built for: 1 for one-step
    /// models (rolled out at evaluation), 12 for direct multi-step models.
    pub horizon: usize,
    /// Per-family layer widths; empty selects the family default.
    #[serde(default)]
    pub widths: Vec<usize>,
    /// Seed for weight initialization.
    pub seed: u64,
    /// U-Net only: set false to ablate the skip connections.
    #[serde(default = "default_true")]
    pub unet_skips: bool,
}

impl ModelSpec {
    pub fn new(family: Family, t_steps: usize, horizon: usize, seed: u64) -> Self {
        ModelSpec {
            family,
            t_steps,
            horizon,
            widths: family.default_widths(),
            seed,
            unet_skips: true,
        }
    }

    pub fn with_widths(mut self, widths: Vec<usize>) -> Self {
        self.widths = widths;
        self
    }

    /// Feature layout of the full input stack this model consumes.
    pub fn feature_spec(&self, patch_size: usize) -> FeatureSpec {
        FeatureSpec {
            t_steps: self.t_steps,
            horizon: self.horizon,
            include_delta_dem: true,
            include_delta_wd: true,
            patch_size,
        }
    }

    pub fn validate(&self) -> Result<(), ZooError> {
        if self.t_steps == 0 {
            return Err(ZooError::Config("t_steps must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(ZooError::Config("horizon must be positive".into()));
        }
        if self.family == Family::LinearExtrap && self.t_steps < 2 {
            return Err(ZooError::Config(
                "linear_extrap needs at least two observed frames (t_steps >= 2)".into(),
            ));
        }
        let expected = match self.family {
            Family::NoChange | Family::LinearExtrap | Family::Ar1x1 | Family::Ar5x5 => 0,
            Family::Fcn => 2,
            Family::Autoencoder | Family::Unet => 3,
            Family::Graph => 2,
        };
        let widths = self.widths_or_default();
        if widths.len() != expected {
            return Err(ZooError::Config(format!(
                "{} expects {} widths, got {:?}",
                self.family.tag(),
                expected,
                self.widths
            )));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(ZooError::Config("layer widths must be positive".into()));
        }
        if self.family.is_autoregressive() && self.horizon != 1 {
            return Err(ZooError::Config(
                "autoregressive models predict one step; set horizon = 1".into(),
            ));
        }
        Ok(())
    }

    pub fn widths_or_default(&self) -> Vec<usize> {
        if self.widths.is_empty() {
            self.family.default_widths()
        } else {
            self.widths.clone()
        }
    }
}

/// How a parametric model is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMethod {
    /// Loss on one-step targets; multi-step forecasts come from rollout.
    OneTs,
    /// Loss on H-step targets predicted in a single shot.
    Direct12Ts,
    /// H chained one-step predictions feeding each other on the tape,
    /// supervised at the end of the chain.
    Iterative12Ts,
}

impl TrainMethod {
    pub fn tag(self) -> &'static str {
        match self {
            TrainMethod::OneTs => "one_ts",
            TrainMethod::Direct12Ts => "direct_12ts",
            TrainMethod::Iterative12Ts => "iterative_12ts",
        }
    }
}

fn default_epochs() -> usize {
    30
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    8
}
fn default_patches() -> usize {
    512
}
fn default_val_patches() -> usize {
    64
}
fn default_threshold() -> f64 {
    0.20
}
fn default_factor() -> f64 {
    4.0
}
fn default_horizon() -> usize {
    12
}
fn default_wet_bias() -> f64 {
    0.7
}
fn default_patch_size() -> usize {
    32
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: TrainMethod,
    /// 30 by default; the autoencoder traditionally needs 50.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// 1e-3 by default; the autoencoder needs 1e-4.
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Patches resampled each epoch across the training events.
    #[serde(default = "default_patches")]
    pub patches_per_epoch: usize,
    /// Fixed validation patches sampled once per validation event.
    #[serde(default = "default_val_patches")]
    pub val_patches_per_event: usize,
    /// Loss weight threshold: |target Δdepth| above this gets `loss_factor`.
    #[serde(default = "default_threshold")]
    pub loss_threshold_m: f64,
    #[serde(default = "default_factor")]
    pub loss_factor: f64,
    /// Target horizon for the direct and iterative methods.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Fraction of training patches drawn from wet anchors.
    #[serde(default = "default_wet_bias")]
    pub wet_bias: f64,
    /// Side length of the square patches sampled for training and
    /// validation.
    #[serde(default = "default_patch_size")]
    pub patch_size: usize,
    /// Iterative method: also supervise the cumulative prediction at every
    /// intermediate chain step, not only the final one.
    #[serde(default)]
    pub supervise_intermediate: bool,
    /// Optional step decay: from this epoch (1-based) onward the optimizer
    /// switches to `final_learning_rate`. Adam's moment estimates carry
    /// over — only the step size changes.
    #[serde(default)]
    pub lr_drop_epoch: Option<usize>,
    /// Learning rate used from `lr_drop_epoch` onward; a tenth of
    /// `learning_rate` when unset.
    #[serde(default)]
    pub final_learning_rate: Option<f64>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(method: TrainMethod, seed: u64) -> Self {
        TrainConfig {
            method,
            epochs: default_epochs(),
            learning_rate: default_lr(),
            batch_size: default_batch(),
            patches_per_epoch: default_patches(),
            val_patches_per_event: default_val_patches(),
            loss_threshold_m: default_threshold(),
            loss_factor: default_factor(),
            horizon: default_horizon(),
            wet_bias: default_wet_bias(),
            patch_size: default_patch_size(),
            supervise_intermediate: false,
            lr_drop_epoch: None,
            final_learning_rate: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ZooError> {
        if self.epochs == 0 || self.batch_size == 0 || self.patches_per_epoch == 0 {
            return Err(ZooError::Config(
                "epochs, batch_size and patches_per_epoch must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(ZooError::Config("learning_rate must be positive".into()));
        }
        if !(self.loss_threshold_m > 0.0) || !(self.loss_factor > 0.0) {
            return Err(ZooError::Config(
                "loss threshold and factor must be positive".into(),
            ));
        }
        if self.horizon == 0 {
            return Err(ZooError::Config("horizon must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.wet_bias) {
            return Err(ZooError::Config("wet_bias must lie in [0, 1]".into()));
        }
        if self.patch_size < 4 {
            return Err(ZooError::Config("patch_size must be at least 4".into()));
        }
        if let Some(at) = self.lr_drop_epoch {
            if at == 0 {
                return Err(ZooError::Config("lr_drop_epoch must be positive".into()));
            }
        }
        match self.final_learning_rate {
            Some(rate) if !(rate > 0.0) => {
                return Err(ZooError::Config(
                    "final_learning_rate must be positive".into(),
                ));
            }
            Some(_) if self.lr_drop_epoch.is_none() => {
                return Err(ZooError::Config(
                    "final_learning_rate needs lr_drop_epoch".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }
}
