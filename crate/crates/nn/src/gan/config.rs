use serde::{Deserialize, Serialize};

use super::GanError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Width W of the first stage; the bottleneck runs at 4W.
    pub base_width: usize,
    pub n_res_blocks: usize,
    /// Side length of the square tensors the network sees.
    pub resolution: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { in_channels: 3, out_channels: 3, base_width: 64, n_res_blocks: 9, resolution: 256 }
    }
}

impl GeneratorConfig {
    /// 64 px, W=16, 3 residual blocks: small enough to train on one core.
    pub fn tiny() -> Self {
        Self { base_width: 16, n_res_blocks: 3, resolution: 64, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |m: String| Err(GanError::Config(m));
        if self.base_width < 4 {
            return bad(format!("base_width {} must be at least 4", self.base_width));
        }
        if self.n_res_blocks < 1 {
            return bad("n_res_blocks must be at least 1".into());
        }
        if self.resolution == 0 || self.resolution % 4 != 0 {
            return bad(format!("resolution {} must be a positive multiple of 4", self.resolution));
        }
        // The 7x7 reflect pad needs at least 4 px, the residual pads at least 2.
        if self.resolution < 8 {
            return bad(format!("resolution {} is below the minimum of 8", self.resolution));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    /// Output channels of the feature stages C64..C512.
    pub widths: Vec<usize>,
    pub kernel: usize,
    /// One stride per feature stage; the classifier conv always has stride 1.
    pub strides: Vec<usize>,
    /// See (input, target) pairs rather than targets alone.
    pub conditional: bool,
    pub image_channels: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self { widths: vec![64, 128, 256, 512], kernel: 4, strides: vec![2, 2, 2, 1], conditional: true, image_channels: 3 }
    }
}

impl DiscriminatorConfig {
    /// Same depth and receptive field as the default, a quarter of the width.
    pub fn tiny() -> Self {
        Self { widths: vec![16, 32, 64, 128], ..Self::default() }
    }

    pub fn in_channels(&self) -> usize {
        if self.conditional {
            2 * self.image_channels
        } else {
            self.image_channels
        }
    }

    pub fn validate(&self) -> Result<(), GanError> {
        if self.widths.is_empty() || self.widths.len() != self.strides.len() {
            return Err(GanError::Config(format!(
                "discriminator needs one stride per width, got {} widths and {} strides",
                self.widths.len(),
                self.strides.len()
            )));
        }
        if self.kernel < 2 || self.widths.contains(&0) || self.strides.contains(&0) || self.image_channels == 0 {
            return Err(GanError::Config("discriminator kernel, widths and strides must be positive".into()));
        }
        Ok(())
    }
}

/// Side of the input window seen by one logit: r ← r + (k−1)·∏(earlier strides)
/// over the feature stages and the stride-1 classifier.
pub fn receptive_field(cfg: &DiscriminatorConfig) -> usize {
    let mut r = 1;
    let mut jump = 1;
    for s in cfg.strides.iter().copied().chain([1]) {
        r += (cfg.kernel - 1) * jump;
        jump *= s;
    }
    r
}

/// How patch logits become the adversarial loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchReduction {
    /// Mean of the per-patch cross-entropies.
    #[default]
    PerPatchLoss,
    /// Cross-entropy of the mean logit.
    MeanLogit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Train fraction used when the dataset is rasterized.
    pub split_ratio: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda_l1: f64,
    pub batch: usize,
    pub seed: u64,
    /// Write a checkpoint every this many epochs (0 disables the periodic ones).
    pub checkpoint_every: usize,
    pub patch_reduction: PatchReduction,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            split_ratio: 0.8,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            lambda_l1: 100.0,
            batch: 1,
            seed: 0,
            checkpoint_every: 10,
            patch_reduction: PatchReduction::PerPatchLoss,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |m: String| Err(GanError::Config(m));
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio {} outside (0, 1)", self.split_ratio));
        }
        if !(self.lambda_l1 >= 0.0) || !self.lambda_l1.is_finite() {
            return bad(format!("lambda_l1 {} must be finite and non-negative", self.lambda_l1));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad(format!("lr {} must be positive", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if self.batch != 1 {
            return bad(format!("batch {} is unsupported; training runs one pair per step", self.batch));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_receptive_field_is_70() {
        assert_eq!(receptive_field(&DiscriminatorConfig::default()), 70);
        assert_eq!(receptive_field(&DiscriminatorConfig::tiny()), 70);
        let one = DiscriminatorConfig { widths: vec![8], strides: vec![2], ..DiscriminatorConfig::default() };
        assert_eq!(receptive_field(&one), 1 + 3 + 6);
    }

    #[test]
    fn validation() {
        assert!(GeneratorConfig::default().validate().is_ok());
        assert!(GeneratorConfig::tiny().validate().is_ok());
        assert!(GeneratorConfig { base_width: 3, ..GeneratorConfig::tiny() }.validate().is_err());
        assert!(GeneratorConfig { n_res_blocks: 0, ..GeneratorConfig::tiny() }.validate().is_err());
        assert!(GeneratorConfig { resolution: 66, ..GeneratorConfig::tiny() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { split_ratio: 1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { lambda_l1: -1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch: 4, ..TrainConfig::default() }.validate().is_err());
        assert!(DiscriminatorConfig { strides: vec![2], ..DiscriminatorConfig::default() }.validate().is_err());
    }

    #[test]
    fn configs_round_trip_through_json() {
        let t = TrainConfig { seed: 9, patch_reduction: PatchReduction::MeanLogit, ..TrainConfig::default() };
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("\"mean_logit\""));
        assert_eq!(serde_json::from_str::<TrainConfig>(&s).unwrap(), t);
        let partial: TrainConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(partial, TrainConfig { epochs: 3, ..TrainConfig::default() });
    }
}
