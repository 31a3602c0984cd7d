use serde::{Deserialize, Serialize};

/// Scales rewards by the running standard deviation of the discounted reward
/// sum. The accumulator resets at episode end; its statistics persist.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizerState {
    pub accumulator: f64,
    count: u64,
    mean: f64,
    m2: f64,
}

impl NormalizerState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Population standard deviation of the accumulator history; 1 until two
    /// samples have been seen.
    pub fn sigma(&self) -> f64 {
        if self.count < 2 {
            1.0
        } else {
            (self.m2 / self.count as f64).sqrt()
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn normalize(&mut self, reward: f64, gamma: f64) -> f64 {
        self.accumulator = gamma * self.accumulator + reward;
        self.count += 1;
        let delta = self.accumulator - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (self.accumulator - self.mean);
        reward / (self.sigma() + 1e-8)
    }

    pub fn end_episode(&mut self) {
        self.accumulator = 0.0;
    }
}
