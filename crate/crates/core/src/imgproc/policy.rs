//! Augmentation policy parameters for the three pipeline stages. Values
//! default to the published training recipe; tests override individual
//! probabilities to isolate branches.

use serde::{Deserialize, Serialize};

use super::ImgError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Calibration,
    Test,
}

/// Parameters of the shared one-of-four corruption: JPEG, WebP, blur, or
/// noise, selected uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionParams {
    /// Inclusive quality range for both compressors.
    pub quality: (u8, u8),
    /// Odd kernel sizes in [3, 7].
    pub kernel_sizes: Vec<u32>,
    /// Inclusive noise variance range on the 0-255 intensity scale.
    pub noise_variance: (f64, f64),
}

impl Default for CorruptionParams {
    fn default() -> Self {
        CorruptionParams {
            quality: (50, 95),
            kernel_sizes: vec![3, 5, 7],
            noise_variance: (3.0, 10.0),
        }
    }
}

impl CorruptionParams {
    fn validate(&self) -> Result<(), ImgError> {
        if self.quality.0 < 1 || self.quality.1 > 100 || self.quality.0 > self.quality.1 {
            return Err(ImgError::InvalidPolicy(format!(
                "quality range {:?} must sit inside [1, 100]",
                self.quality
            )));
        }
        if self.kernel_sizes.is_empty()
            || self
                .kernel_sizes
                .iter()
                .any(|&k| k % 2 == 0 || !(3..=7).contains(&k))
        {
            return Err(ImgError::InvalidPolicy(format!(
                "kernel sizes {:?} must be odd and within [3, 7]",
                self.kernel_sizes
            )));
        }
        if !(self.noise_variance.0 > 0.0) || self.noise_variance.0 > self.noise_variance.1 {
            return Err(ImgError::InvalidPolicy(format!(
                "noise variance range {:?} invalid",
                self.noise_variance
            )));
        }
        Ok(())
    }
}

fn check_prob(name: &str, p: f64) -> Result<(), ImgError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ImgError::InvalidPolicy(format!("{name} probability {p} outside [0, 1]")))
    }
}

/// Stage-1 single-view augmentation: pad, crop 96, optional corruption,
/// optional rotation and flip. The stage never resizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainParams {
    pub crop_size: u32,
    pub corrupt_prob: f64,
    pub rotate_prob: f64,
    pub flip_prob: f64,
    pub corruption: CorruptionParams,
}

impl Default for PretrainParams {
    fn default() -> Self {
        PretrainParams {
            crop_size: 96,
            corrupt_prob: 0.5,
            rotate_prob: 1.0 / 3.0,
            flip_prob: 1.0 / 3.0,
            corruption: CorruptionParams::default(),
        }
    }
}

impl PretrainParams {
    pub fn validate(&self) -> Result<(), ImgError> {
        check_prob("corrupt", self.corrupt_prob)?;
        check_prob("rotate", self.rotate_prob)?;
        check_prob("flip", self.flip_prob)?;
        if self.crop_size == 0 {
            return Err(ImgError::InvalidPolicy("crop size 0".into()));
        }
        self.corruption.validate()
    }

    /// All stochastic branches off; useful for identity checks.
    pub fn identity() -> Self {
        PretrainParams {
            corrupt_prob: 0.0,
            rotate_prob: 0.0,
            flip_prob: 0.0,
            ..Default::default()
        }
    }
}

/// Stage-2 calibration augmentation with the nested perturbation policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub crop_size: u32,
    /// Probability that a record enters the perturbation branch at all.
    pub perturb_prob: f64,
    /// Inside the perturbation branch: probability of the one-of-four
    /// corruption; the complement takes the composite branch.
    pub corrupt_branch_prob: f64,
    /// Probability of a final compression inside the composite branch.
    pub composite_compress_prob: f64,
    /// Area scale range of the random resized crop.
    pub scale: (f64, f64),
    /// Aspect ratio range of the random resized crop.
    pub ratio: (f64, f64),
    pub rotate_prob: f64,
    pub flip_prob: f64,
    pub corruption: CorruptionParams,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        CalibrationParams {
            crop_size: 256,
            perturb_prob: 0.5,
            corrupt_branch_prob: 0.7,
            composite_compress_prob: 0.5,
            scale: (0.08, 1.0),
            ratio: (0.75, 4.0 / 3.0),
            rotate_prob: 1.0 / 3.0,
            flip_prob: 1.0 / 3.0,
            corruption: CorruptionParams::default(),
        }
    }
}

impl CalibrationParams {
    pub fn validate(&self) -> Result<(), ImgError> {
        check_prob("perturb", self.perturb_prob)?;
        check_prob("corrupt-branch", self.corrupt_branch_prob)?;
        check_prob("composite-compress", self.composite_compress_prob)?;
        check_prob("rotate", self.rotate_prob)?;
        check_prob("flip", self.flip_prob)?;
        if !(self.scale.0 > 0.0 && self.scale.0 <= self.scale.1 && self.scale.1 <= 1.0) {
            return Err(ImgError::InvalidPolicy(format!("scale range {:?} invalid", self.scale)));
        }
        if !(self.ratio.0 > 0.0 && self.ratio.0 <= self.ratio.1) {
            return Err(ImgError::InvalidPolicy(format!("ratio range {:?} invalid", self.ratio)));
        }
        self.corruption.validate()
    }

    pub fn identity() -> Self {
        CalibrationParams {
            perturb_prob: 0.0,
            rotate_prob: 0.0,
            flip_prob: 0.0,
            ..Default::default()
        }
    }
}

/// Test-set perturbation: large square crop, resize to 256, then lossy
/// compression for a fraction of the records. The compression quality
/// range is a required knob; it defaults to the training range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPerturbParams {
    pub out_size: u32,
    pub compress_prob: f64,
    pub quality: (u8, u8),
}

impl Default for TestPerturbParams {
    fn default() -> Self {
        TestPerturbParams {
            out_size: 256,
            compress_prob: 0.75,
            quality: (50, 95),
        }
    }
}

impl TestPerturbParams {
    pub fn validate(&self) -> Result<(), ImgError> {
        check_prob("compress", self.compress_prob)?;
        if self.quality.0 < 1 || self.quality.1 > 100 || self.quality.0 > self.quality.1 {
            return Err(ImgError::InvalidPolicy(format!(
                "quality range {:?} must sit inside [1, 100]",
                self.quality
            )));
        }
        if self.out_size == 0 {
            return Err(ImgError::InvalidPolicy("output size 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StageParams {
    Pretrain(PretrainParams),
    Calibration(CalibrationParams),
    Test(TestPerturbParams),
}

/// A stage, its seed, and its parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPolicy {
    pub stage: Stage,
    pub rng_seed: u64,
    pub params: StageParams,
}

impl AugmentationPolicy {
    pub fn pretrain(rng_seed: u64) -> Self {
        AugmentationPolicy {
            stage: Stage::Pretrain,
            rng_seed,
            params: StageParams::Pretrain(PretrainParams::default()),
        }
    }

    pub fn calibration(rng_seed: u64) -> Self {
        AugmentationPolicy {
            stage: Stage::Calibration,
            rng_seed,
            params: StageParams::Calibration(CalibrationParams::default()),
        }
    }

    pub fn test(rng_seed: u64) -> Self {
        AugmentationPolicy {
            stage: Stage::Test,
            rng_seed,
            params: StageParams::Test(TestPerturbParams::default()),
        }
    }

    pub fn validate(&self) -> Result<(), ImgError> {
        match (&self.params, self.stage) {
            (StageParams::Pretrain(p), Stage::Pretrain) => p.validate(),
            (StageParams::Calibration(p), Stage::Calibration) => p.validate(),
            (StageParams::Test(p), Stage::Test) => p.validate(),
            _ => Err(ImgError::InvalidPolicy("stage does not match parameter table".into())),
        }
    }
}
