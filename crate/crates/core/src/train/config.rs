use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{ZeroDivision, DEFAULT_JACCARD_FLOOR, DEFAULT_THRESHOLD};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub input_size: usize,
    /// Recorded only; everything runs on the CPU.
    pub device: String,
    /// Random left-right flips of training pairs.
    pub hflip: bool,
    /// Stop after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<usize>,
    pub threshold: f32,
    pub zero_division: ZeroDivision,
    pub jaccard_floor: f64,
    /// Folds trained concurrently.
    pub jobs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 12,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-7,
            seed: 0,
            input_size: 256,
            device: "cpu".into(),
            hflip: false,
            max_steps: None,
            threshold: DEFAULT_THRESHOLD,
            zero_division: ZeroDivision::OneIfMatch,
            jaccard_floor: DEFAULT_JACCARD_FLOOR,
            jobs: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!(
                "moment coefficients must lie in [0, 1), got {} and {}",
                self.beta1, self.beta2
            ));
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad(format!(
                "adam epsilon must be positive, got {}",
                self.adam_eps
            ));
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return bad(format!(
                "threshold must lie in [0, 1), got {}",
                self.threshold
            ));
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        if self.max_steps == Some(0) {
            return bad("max steps must be at least 1".into());
        }
        Ok(())
    }
}
