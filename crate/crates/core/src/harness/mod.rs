//! Experiment driver: episode rollouts, training runs, evaluation against
//! the shortest-path baseline, and report aggregation.

pub mod config;
pub mod eval;
pub mod report;
pub mod rollout;
pub mod train;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::env::EnvError;
use crate::nn::NnError;

pub use config::{default_eval_seeds, training_episode_seed, Hyper, RunConfig};
pub use eval::{run_eval, run_eval_dir, shortest_path_policy, EvalReport, SeedResult};
pub use report::{build_report, render_table, MethodSummary};
pub use rollout::{run_episode, Agent, DecisionContext, EpisodeOutcome, ShortestPathAgent};
pub use train::{run_many, run_training, RunSummary, TrainedRun};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("method wiring: {0}")]
    Wiring(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Worker threads for parallel runs: `EVNAV_THREADS` if set, else all cores.
pub fn worker_threads() -> usize {
    std::env::var("EVNAV_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}
