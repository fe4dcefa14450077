use crate::error::{Error, Result};
use crate::mining::MiningBranch;
use crate::selforg::AugmentConfig;

/// Components that can be switched off for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Ablation {
    pub disable_ptd: bool,
    pub disable_replay: bool,
    pub disable_con: bool,
    /// Skip prototype self-organization: pseudo-labels come straight from
    /// the identifying model's restricted argmax, and the contrastive term
    /// is dropped with it.
    pub disable_ptfs: bool,
    pub mining_branch: MiningBranch,
}

impl Ablation {
    /// Replay plus class mining over plain model predictions.
    pub fn replay_only() -> Self {
        Self {
            disable_ptd: true,
            disable_ptfs: true,
            ..Self::default()
        }
    }

    pub fn without_ptd() -> Self {
        Self {
            disable_ptd: true,
            ..Self::default()
        }
    }

    pub fn contrastive_active(&self) -> bool {
        !self.disable_con && !self.disable_ptfs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub temperature: f64,
    pub mu_c0: f64,
    pub beta: f64,
    pub exemplars_per_class: usize,
    /// Memory is refreshed every this many iterations and at session end.
    pub memory_update_every: usize,
    /// Pseudo-labels come from the frozen source model while the session's
    /// iteration count is below this.
    pub warm_iters: u64,
    pub augment: AugmentConfig,
    pub ablation: Ablation,
    pub seed: u64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            momentum: 0.9,
            weight_decay: 1e-6,
            batch_size: 32,
            epochs: 20,
            temperature: 0.5,
            mu_c0: 0.5,
            beta: 1e-4,
            exemplars_per_class: 10,
            memory_update_every: 10,
            warm_iters: 5,
            augment: AugmentConfig::default(),
            ablation: Ablation::default(),
            seed: 0,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, "must be positive and finite"))
            }
        };
        positive("adapt.lr", self.lr)?;
        positive("adapt.temperature", self.temperature)?;
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("adapt.momentum", "must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("adapt.weight_decay", "must be non-negative"));
        }
        if !(self.mu_c0 >= 0.0) {
            return Err(Error::config("adapt.mu_c0", "must be non-negative"));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::config("adapt.beta", "must be non-negative"));
        }
        if self.batch_size < 2 {
            return Err(Error::config("adapt.batch_size", "must be at least 2"));
        }
        if self.exemplars_per_class == 0 {
            return Err(Error::config("adapt.exemplars_per_class", "must be at least 1"));
        }
        if self.memory_update_every == 0 {
            return Err(Error::config("adapt.memory_update_every", "must be at least 1"));
        }
        if !(self.augment.noise_sigma >= 0.0) {
            return Err(Error::config("adapt.augment.noise_sigma", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.augment.mask_prob) {
            return Err(Error::config("adapt.augment.mask_prob", "must lie in [0, 1)"));
        }
        Ok(())
    }
}
