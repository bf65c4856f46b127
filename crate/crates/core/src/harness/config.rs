use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cvae::CvaeConfig;
use crate::dqn::DqnConfig;
use crate::env::EnvConfig;
use crate::fcc::SoftmaxSign;
use crate::method::Method;
use crate::mgda::LearningRates;

use super::HarnessError;

/// Learning hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub dqn: DqnConfig,
    pub cvae: CvaeConfig,
    /// Learning rate of the CVAE encoder.
    pub lr_cvae: f64,
    /// Learning rate of the decoder and LSTM, which both losses train.
    pub lr_shared: f64,
    /// Gradient updates after every agent decision once the buffer holds a batch.
    pub updates_per_step: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            dqn: DqnConfig::default(),
            cvae: CvaeConfig::default(),
            lr_cvae: 1e-5,
            lr_shared: 5e-4,
            updates_per_step: 1,
        }
    }
}

impl Hyper {
    pub fn learning_rates(&self) -> LearningRates {
        LearningRates {
            dqn: self.dqn.lr,
            cvae: self.lr_cvae,
            shared: self.lr_shared,
        }
    }
}

/// Everything that determines a training run apart from its seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub method: Method,
    pub episodes: usize,
    /// Training seeds used when a command does not name one.
    pub seeds: Vec<u64>,
    /// Held-out evaluation episodes.
    pub eval_seeds: Vec<u64>,
    pub env: EnvConfig,
    pub hyper: Hyper,
    pub fcc_softmax_sign: SoftmaxSign,
    pub checkpoint_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::IqlCvaeMgda,
            episodes: 1000,
            seeds: vec![0],
            eval_seeds: default_eval_seeds(20),
            env: EnvConfig::default(),
            hyper: Hyper::default(),
            fcc_softmax_sign: SoftmaxSign::Positive,
            checkpoint_every: 100,
        }
    }
}

/// `n` evaluation seeds far away from every training seed.
pub fn default_eval_seeds(n: u64) -> Vec<u64> {
    (0..n).map(|i| 1_000_000 + i).collect()
}

/// Updates per decision that give 300 episodes about the gradient budget of
/// 1000 episodes at one update per decision.
pub const DESK_UPDATES_PER_STEP: usize = 4;

/// Environment seed of training episode `episode` of run `seed`.
pub fn training_episode_seed(seed: u64, episode: usize) -> u64 {
    (seed << 32) | episode as u64
}

fn desk_hyper() -> Hyper {
    Hyper {
        updates_per_step: DESK_UPDATES_PER_STEP,
        ..Hyper::default()
    }
}

impl RunConfig {
    /// Two EVs, 300 episodes, five seeds, one 7 kW spot per station.
    pub fn desk_two_ev(method: Method) -> Self {
        Self {
            method,
            episodes: 300,
            seeds: (0..5).collect(),
            env: EnvConfig {
                n_evs: 2,
                spots_per_evcs: 1,
                charging_power_kw: 7.0,
                ..EnvConfig::default()
            },
            hyper: desk_hyper(),
            ..Self::default()
        }
    }

    /// Twenty EVs, 300 episodes, three seeds.
    pub fn desk_twenty_ev(method: Method) -> Self {
        Self {
            method,
            episodes: 300,
            seeds: (0..3).collect(),
            env: EnvConfig {
                n_evs: 20,
                ..EnvConfig::default()
            },
            hyper: desk_hyper(),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.episodes == 0 {
            return bad("episodes must be positive");
        }
        if self.eval_seeds.is_empty() {
            return bad("eval_seeds must not be empty");
        }
        let h = &self.hyper;
        if h.dqn.batch_size == 0 || h.dqn.buffer_capacity < h.dqn.batch_size {
            return bad("batch_size must be positive and fit in the replay buffer");
        }
        if h.dqn.target_sync_every == 0 {
            return bad("target_sync_every must be positive");
        }
        if !(0.0..=1.0).contains(&h.dqn.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if h.cvae.window == 0 {
            return bad("the request window must hold at least one request");
        }
        if [h.dqn.lr, h.lr_cvae, h.lr_shared].iter().any(|lr| !(*lr > 0.0)) {
            return bad("learning rates must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_the_reference_hyperparameters() {
        let c = RunConfig::default();
        assert_eq!(c.episodes, 1000);
        assert_eq!(c.hyper.dqn.lr, 5e-4);
        assert_eq!(c.hyper.lr_cvae, 1e-5);
        assert_eq!(c.hyper.dqn.batch_size, 16);
        assert_eq!(c.hyper.dqn.gamma, 0.99);
        assert_eq!(c.hyper.dqn.buffer_capacity, 1_000_000);
        assert_eq!(c.eval_seeds.len(), 20);
        c.validate().unwrap();
    }

    #[test]
    fn json_round_trip_and_partial_files() {
        let c = RunConfig::desk_two_ev(Method::IqlGlobalFcc);
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        let partial = RunConfig::from_json(r#"{"method": "IQL", "episodes": 5}"#).unwrap();
        assert_eq!(partial.method, Method::Iql);
        assert_eq!(partial.env, EnvConfig::default());
    }

    #[test]
    fn training_and_evaluation_seeds_are_disjoint() {
        let eval = default_eval_seeds(20);
        for seed in 0..5 {
            for ep in 0..1000 {
                assert!(!eval.contains(&training_episode_seed(seed, ep)));
            }
        }
    }
}
