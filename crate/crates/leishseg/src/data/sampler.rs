//! Two-stage non-uniform patch sampling.
//!
//! Early epochs see only patches rich in parasite pixels so the tiny classes
//! produce gradients at all; later epochs shuffle the full patch set.

use super::{LabelMap, PARASITE_CLASSES};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

/// How a patch's parasite fraction is measured against the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FractionMode {
    /// Sum over the three parasite classes (default reading).
    CombinedSum,
    /// Largest single parasite class.
    AnySingle,
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    /// Minimum parasite fraction for a patch to qualify for stage 1.
    pub threshold: f64,
    pub mode: FractionMode,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            stage1_epochs: 40,
            stage2_epochs: 200,
            threshold: 0.40,
            mode: FractionMode::CombinedSum,
        }
    }
}

impl SamplerConfig {
    pub fn total_epochs(&self) -> usize {
        self.stage1_epochs + self.stage2_epochs
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "sampler threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Fraction of patch pixels labeled with any of the parasite classes
/// (combined-sum reading).
pub fn parasite_fraction(labels: &LabelMap) -> f64 {
    patch_fraction(labels, FractionMode::CombinedSum)
}

/// Parasite fraction under either threshold reading.
pub fn patch_fraction(labels: &LabelMap, mode: FractionMode) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hist = labels.histogram();
    let total = labels.len() as f64;
    match mode {
        FractionMode::CombinedSum => {
            let sum: u64 = PARASITE_CLASSES.iter().map(|&c| hist[c as usize]).sum();
            sum as f64 / total
        }
        FractionMode::AnySingle => PARASITE_CLASSES
            .iter()
            .map(|&c| hist[c as usize] as f64 / total)
            .fold(0.0, f64::max),
    }
}

/// Returns the patch indices to visit in `epoch`, shuffled without
/// replacement. Stage-1 epochs (`epoch < stage1_epochs`) draw only from
/// patches whose fraction meets the threshold; later epochs use all patches.
pub fn sample_epoch(
    fractions: &[f64],
    epoch: usize,
    config: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if fractions.is_empty() {
        return Err(Error::Data("the patch set is empty".into()));
    }
    config.validate()?;
    let mut indices: Vec<usize> = if epoch < config.stage1_epochs {
        let qualifying: Vec<usize> = (0..fractions.len())
            .filter(|&i| fractions[i] >= config.threshold)
            .collect();
        if qualifying.is_empty() {
            return Err(Error::Data(format!(
                "no patch reaches parasite fraction {}; lower sampler.threshold \
                 or synthesize a denser dataset",
                config.threshold
            )));
        }
        qualifying
    } else {
        (0..fractions.len()).collect()
    };
    indices.shuffle(rng);
    Ok(indices)
}
