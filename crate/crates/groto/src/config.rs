//! Run configuration file (TOML). Unknown keys and out-of-range values are
//! rejected with the dotted key path in the message.

use std::path::{Path, PathBuf};

use groto_core::mining::MiningBranch;
use groto_core::model::PretrainConfig;
use groto_core::pipeline::{Ablation, AdaptConfig};
use groto_core::scenario::{ScenarioConfig, SessionOrder};
use groto_core::selforg::AugmentConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The only environment variable consulted: replaces the seed list with
/// one seed.
pub const SEED_ENV: &str = "GROTO_SEED";

/// Largest seed a config file can hold.
pub const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    Index,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub classes: usize,
    pub session_classes: usize,
    pub sessions: usize,
    pub input_dim: usize,
    pub samples_per_class: usize,
    pub cluster_spread: f64,
    pub domain_shift: f64,
    pub test_fraction: f64,
    pub order: Order,
    /// Seed of the class permutation when `order = "random"`.
    pub order_seed: u64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let d = ScenarioConfig::default();
        Self {
            classes: d.classes,
            session_classes: d.session_classes,
            sessions: d.sessions,
            input_dim: d.input_dim,
            samples_per_class: d.samples_per_class,
            cluster_spread: d.cluster_spread,
            domain_shift: d.domain_shift,
            test_fraction: d.test_fraction,
            order: Order::Index,
            order_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainSection {
    pub hidden_dim: usize,
    pub feat_dim: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub min_source_acc: f64,
}

impl Default for PretrainSection {
    fn default() -> Self {
        let d = PretrainConfig::default();
        Self {
            hidden_dim: d.hidden_dim,
            feat_dim: d.feat_dim,
            lr: d.lr,
            momentum: d.momentum,
            weight_decay: d.weight_decay,
            batch_size: d.batch_size,
            max_epochs: d.max_epochs,
            min_source_acc: d.min_source_acc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    pub noise_sigma: f64,
    pub mask_prob: f64,
}

impl Default for AugmentSection {
    fn default() -> Self {
        let d = AugmentConfig::default();
        Self {
            noise_sigma: d.noise_sigma,
            mask_prob: d.mask_prob,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptSection {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub temperature: f64,
    pub mu_c0: f64,
    pub beta: f64,
    pub exemplars_per_class: usize,
    pub memory_update_every: usize,
    pub warm_iters: u64,
    pub augment: AugmentSection,
}

impl Default for AdaptSection {
    fn default() -> Self {
        let d = AdaptConfig::default();
        Self {
            lr: d.lr,
            momentum: d.momentum,
            weight_decay: d.weight_decay,
            batch_size: d.batch_size,
            epochs: d.epochs,
            temperature: d.temperature,
            mu_c0: d.mu_c0,
            beta: d.beta,
            exemplars_per_class: d.exemplars_per_class,
            memory_update_every: d.memory_update_every,
            warm_iters: d.warm_iters,
            augment: AugmentSection::default(),
        }
    }
}

/// Which mining branch to switch off; named by the branch that remains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum BranchSwitch {
    #[default]
    None,
    SimilarityOnly,
    ProbabilityOnly,
}

impl From<BranchSwitch> for MiningBranch {
    fn from(b: BranchSwitch) -> Self {
        match b {
            BranchSwitch::None => MiningBranch::Both,
            BranchSwitch::SimilarityOnly => MiningBranch::SimilarityOnly,
            BranchSwitch::ProbabilityOnly => MiningBranch::ProbabilityOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationSection {
    pub disable_ptd: bool,
    pub disable_replay: bool,
    pub disable_con: bool,
    /// Pseudo-labels from plain predictions instead of prototypes.
    pub disable_ptfs: bool,
    pub disable_hkpcm_branch: BranchSwitch,
}

impl AblationSection {
    pub fn to_core(self) -> Ablation {
        Ablation {
            disable_ptd: self.disable_ptd,
            disable_replay: self.disable_replay,
            disable_con: self.disable_con,
            disable_ptfs: self.disable_ptfs,
            mining_branch: self.disable_hkpcm_branch.into(),
        }
    }

    /// Directory name for a run with these switches: `groto`, or `groto`
    /// followed by one suffix per active switch.
    pub fn run_name(self) -> String {
        let mut name = String::from("groto");
        for (on, suffix) in [
            (self.disable_ptd, "-no-ptd"),
            (self.disable_replay, "-no-replay"),
            (self.disable_con, "-no-con"),
            (self.disable_ptfs, "-no-ptfs"),
        ] {
            if on {
                name.push_str(suffix);
            }
        }
        match self.disable_hkpcm_branch {
            BranchSwitch::None => {}
            BranchSwitch::SimilarityOnly => name.push_str("-similarity-only"),
            BranchSwitch::ProbabilityOnly => name.push_str("-probability-only"),
        }
        name
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub scenario: ScenarioSection,
    pub pretrain: PretrainSection,
    pub adapt: AdaptSection,
    pub ablation: AblationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("runs"),
            seeds: vec![0],
            scenario: ScenarioSection::default(),
            pretrain: PretrainSection::default(),
            adapt: AdaptSection::default(),
            ablation: AblationSection::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let message = e.into_inner().message().to_string();
            Error::config(key, message)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        self.validate()?;
        toml::to_string(self).map_err(|e| Error::config("", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed required"));
        }
        // TOML integers are signed
        if self.seeds.iter().any(|&s| s > MAX_SEED) {
            return Err(Error::config("seeds", format!("seeds must not exceed {MAX_SEED}")));
        }
        if self.scenario.order_seed > MAX_SEED {
            return Err(Error::config("scenario.order_seed", format!("must not exceed {MAX_SEED}")));
        }
        self.scenario_config(0).validate()?;
        self.pretrain_config(0).validate()?;
        self.adapt_config(0).validate()?;
        Ok(())
    }

    /// Replaces the seed list with the value of [`SEED_ENV`], if given.
    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            let seed = v
                .trim()
                .parse()
                .map_err(|_| Error::config(SEED_ENV, format!("not an unsigned integer: {v:?}")))?;
            self.seeds = vec![seed];
        }
        Ok(())
    }

    pub fn scenario_config(&self, seed: u64) -> ScenarioConfig {
        let s = &self.scenario;
        ScenarioConfig {
            classes: s.classes,
            session_classes: s.session_classes,
            sessions: s.sessions,
            input_dim: s.input_dim,
            samples_per_class: s.samples_per_class,
            cluster_spread: s.cluster_spread,
            domain_shift: s.domain_shift,
            test_fraction: s.test_fraction,
            order: match s.order {
                Order::Index => SessionOrder::Index,
                Order::Random => SessionOrder::Random { seed: s.order_seed },
            },
            seed,
        }
    }

    pub fn pretrain_config(&self, seed: u64) -> PretrainConfig {
        let p = &self.pretrain;
        PretrainConfig {
            hidden_dim: p.hidden_dim,
            feat_dim: p.feat_dim,
            lr: p.lr,
            momentum: p.momentum,
            weight_decay: p.weight_decay,
            batch_size: p.batch_size,
            max_epochs: p.max_epochs,
            min_source_acc: p.min_source_acc,
            seed,
        }
    }

    pub fn adapt_config(&self, seed: u64) -> AdaptConfig {
        let a = &self.adapt;
        AdaptConfig {
            lr: a.lr,
            momentum: a.momentum,
            weight_decay: a.weight_decay,
            batch_size: a.batch_size,
            epochs: a.epochs,
            temperature: a.temperature,
            mu_c0: a.mu_c0,
            beta: a.beta,
            exemplars_per_class: a.exemplars_per_class,
            memory_update_every: a.memory_update_every,
            warm_iters: a.warm_iters,
            augment: AugmentConfig {
                noise_sigma: a.augment.noise_sigma,
                mask_prob: a.augment.mask_prob,
            },
            ablation: self.ablation.to_core(),
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(r: Result<RunConfig>) -> String {
        match r {
            Err(Error::Config { key, .. }) => key,
            Err(Error::Core(groto_core::Error::Config { key, .. })) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.seeds = vec![3, 1, 4];
        cfg.adapt.lr = 0.0025;
        cfg.ablation.disable_hkpcm_branch = BranchSwitch::SimilarityOnly;
        cfg.scenario.order = Order::Random;
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn comments_and_partial_sections() {
        let cfg = RunConfig::parse(
            "# desk run\nseeds = [0, 1] # two seeds\n[adapt]\nepochs = 5\n[adapt.augment]\nmask_prob = 0.2\n",
        )
        .unwrap();
        assert_eq!(cfg.seeds, [0, 1]);
        assert_eq!(cfg.adapt.epochs, 5);
        assert_eq!(cfg.adapt.augment.mask_prob, 0.2);
        assert_eq!(cfg.adapt.lr, 0.001);
    }

    #[test]
    fn unknown_keys_name_their_path() {
        assert_eq!(key_of(RunConfig::parse("[adapt]\nlrr = 0.1\n")), "adapt.lrr");
        assert_eq!(key_of(RunConfig::parse("[adapt.augment]\nblur = 1\n")), "adapt.augment.blur");
        assert_eq!(key_of(RunConfig::parse("colour = 1\n")), "colour");
        assert_eq!(key_of(RunConfig::parse("[adapt]\nepochs = \"x\"\n")), "adapt.epochs");
    }

    #[test]
    fn out_of_range_values_name_their_path() {
        assert_eq!(key_of(RunConfig::parse("[adapt]\nbatch_size = 1\n")), "adapt.batch_size");
        assert_eq!(key_of(RunConfig::parse("[scenario]\nclasses = 8\n")), "scenario.classes");
        assert_eq!(key_of(RunConfig::parse("[pretrain]\nlr = -1.0\n")), "pretrain.lr");
        assert_eq!(key_of(RunConfig::parse("seeds = []\n")), "seeds");
        let mut cfg = RunConfig::default();
        cfg.seeds = vec![u64::MAX];
        assert_eq!(key_of(cfg.to_toml().map(|_| cfg.clone())), "seeds");
    }

    #[test]
    fn seed_override() {
        let mut cfg = RunConfig::default();
        cfg.apply_seed_override(Some("42")).unwrap();
        assert_eq!(cfg.seeds, [42]);
        cfg.apply_seed_override(None).unwrap();
        assert_eq!(cfg.seeds, [42]);
        assert_eq!(key_of(cfg.apply_seed_override(Some("x")).map(|_| cfg.clone())), SEED_ENV);
    }

    #[test]
    fn run_names() {
        assert_eq!(AblationSection::default().run_name(), "groto");
        let a = AblationSection {
            disable_ptd: true,
            disable_hkpcm_branch: BranchSwitch::SimilarityOnly,
            ..AblationSection::default()
        };
        assert_eq!(a.run_name(), "groto-no-ptd-similarity-only");
    }
}
