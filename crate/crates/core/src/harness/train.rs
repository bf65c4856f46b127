use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cvae::check_distribution;
use crate::dqn::{select_action, select_action_masked, EpsilonSchedule, ReplayBuffer, TargetSync, Transition};
use crate::env::Env;
use crate::method::{Method, RiSource};
use crate::mgda::{JointTrainer, StepMetrics};
use crate::nn::save_checkpoint;

use super::config::{training_episode_seed, RunConfig};
use super::rollout::{run_episode, Agent, Decision, DecisionContext, ShortestPathAgent};
use super::HarnessError;

/// Independent RNG stream `stream` of run `seed`.
pub(crate) fn run_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_INIT: u64 = 1;
const STREAM_LEARN: u64 = 2;

/// One row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRow {
    pub step: u64,
    pub episode: usize,
    pub dqn_loss: f64,
    pub cvae_kl: Option<f64>,
    pub cvae_recon: Option<f64>,
    pub cvae_prior_recon: Option<f64>,
    pub alpha: Option<f64>,
    pub grad_norm_d: Option<f64>,
    pub grad_norm_c: Option<f64>,
}

impl StepRow {
    fn new(step: u64, episode: usize, m: &StepMetrics) -> Self {
        Self {
            step,
            episode,
            dqn_loss: m.dqn_loss,
            cvae_kl: m.cvae_kl,
            cvae_recon: m.cvae_recon,
            cvae_prior_recon: m.cvae_prior_recon,
            alpha: m.alpha,
            grad_norm_d: m.grad_norm_d,
            grad_norm_c: m.grad_norm_c,
        }
    }

    pub fn cvae_loss(&self) -> Option<f64> {
        Some(self.cvae_kl? + self.cvae_recon?)
    }
}

/// One row of `episodes.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeRow {
    pub episode: usize,
    pub env_seed: u64,
    pub epsilon: f64,
    pub total_cost: f64,
    pub mean_return: f64,
    pub stranded: usize,
    pub decisions: usize,
    pub updates: u64,
}

/// What a finished training run reports about itself.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub method: Method,
    pub seed: u64,
    pub episodes: usize,
    pub updates: u64,
    pub target_syncs: u64,
    /// Mean episode cost over the last tenth of training.
    pub late_cost: f64,
    /// Mean KL + reconstruction over the last tenth of updates.
    pub final_cvae_loss: Option<f64>,
}

pub struct TrainedRun {
    pub config: RunConfig,
    pub seed: u64,
    /// `None` for the shortest-path baseline.
    pub trainer: Option<JointTrainer>,
    pub steps: Vec<StepRow>,
    pub episodes: Vec<EpisodeRow>,
    pub summary: RunSummary,
    pub dir: Option<PathBuf>,
}

/// Acts epsilon-greedily during training and learns from every completed transition.
struct Learner {
    trainer: JointTrainer,
    buffer: ReplayBuffer,
    sync: TargetSync,
    rng: ChaCha8Rng,
    epsilon: f64,
    episode: usize,
    batch_size: usize,
    updates_per_step: usize,
    mask: bool,
    k: usize,
    steps: Vec<StepRow>,
}

impl Learner {
    fn training_ri(&self, ctx: &DecisionContext<'_>) -> Result<Vec<f64>, HarnessError> {
        let cvae = || self.trainer.cvae.as_ref().expect("method carries a platform");
        Ok(match self.trainer.ri_source() {
            RiSource::Zeros => vec![0.0; self.k],
            RiSource::TrueFcc => ctx.fcc.probs.clone(),
            RiSource::Condition => cvae().encode_condition(ctx.window)?.0,
            RiSource::Reconstruction => cvae().reconstruct_mean(&ctx.fcc.probs, ctx.window)?,
        })
    }

    fn learn(&mut self) -> Result<(), HarnessError> {
        if self.buffer.len() < self.batch_size {
            return Ok(());
        }
        for _ in 0..self.updates_per_step {
            let batch: Vec<&Transition> = self.buffer.sample(&mut self.rng, self.batch_size);
            let metrics = self.trainer.joint_step(&batch, &mut self.rng)?;
            self.sync.tick(&self.trainer.q, &mut self.trainer.target);
            self.steps.push(StepRow::new(self.sync.steps(), self.episode, &metrics));
        }
        Ok(())
    }
}

impl Agent for Learner {
    fn act(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision, HarnessError> {
        let ri = self.training_ri(ctx)?;
        let qs = self.trainer.q.q_values(&self.trainer.input(ctx.node, ctx.soc, &ri))?;
        let action = if self.mask {
            select_action_masked(&qs, ctx.reachable, self.epsilon, &mut self.rng)
        } else {
            select_action(&qs, self.epsilon, &mut self.rng)
        };
        Ok(Decision {
            action,
            ri,
            condition: None,
        })
    }

    fn record(&mut self, t: Transition) -> Result<(), HarnessError> {
        check_wiring(self.trainer.ri_source(), self.trainer.ri_dim(), &t)?;
        self.buffer.push(t);
        self.learn()
    }
}

/// Aborts when a transition's recommendation does not come from the method's source.
pub fn check_wiring(source: RiSource, ri_dim: usize, t: &Transition) -> Result<(), HarnessError> {
    let fail = |m: String| Err(HarnessError::Wiring(m));
    if t.ri.len() != ri_dim {
        return fail(format!("{source:?} recommendation has length {}, expected {ri_dim}", t.ri.len()));
    }
    match source {
        RiSource::Zeros if t.ri.iter().any(|x| *x != 0.0) => fail("IQL recommendation is not zero".into()),
        RiSource::TrueFcc if t.ri != t.fcc_true => fail("recommendation differs from the true FCC tensor".into()),
        RiSource::Reconstruction if check_distribution(&t.ri, ri_dim).is_err() => {
            fail("reconstruction is not a probability vector".into())
        }
        _ => Ok(()),
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(!rows.is_empty())
        .from_writer(BufWriter::new(file));
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

const STEP_HEADER: [&str; 9] = [
    "step",
    "episode",
    "dqn_loss",
    "cvae_kl",
    "cvae_recon",
    "cvae_prior_recon",
    "alpha",
    "grad_norm_d",
    "grad_norm_c",
];

fn save_trainer(path: &Path, trainer: &JointTrainer) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    save_checkpoint(BufWriter::new(file), &trainer.checkpoint_parts())?;
    Ok(())
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn last_tenth<T>(xs: &[T]) -> &[T] {
    let n = xs.len().div_ceil(10);
    &xs[xs.len() - n..]
}

/// Trains `config.method` with run seed `seed`. When `dir` is given the run
/// writes `config.snapshot`, `metrics.csv`, `episodes.csv`, `checkpoints/`
/// and the final episode's `trace.csv` there.
pub fn run_training(config: &RunConfig, seed: u64, dir: Option<&Path>) -> Result<TrainedRun, HarnessError> {
    config.validate()?;
    let env = Env::new(config.env.clone())?;
    let node_count = env.graph().node_count();
    let k = env.evcs_count();
    let hyper = &config.hyper;
    let window = hyper.cvae.window;
    if let Some(d) = dir {
        fs::create_dir_all(d.join("checkpoints")).map_err(|e| HarnessError::io(d, e))?;
        let snap = d.join("config.snapshot");
        fs::write(&snap, config.to_json()).map_err(|e| HarnessError::io(&snap, e))?;
    }

    let mut episodes = Vec::with_capacity(config.episodes);
    let mut last_state = None;
    let (trainer, steps, syncs) = if config.method.learns() {
        let mut init = run_rng(seed, STREAM_INIT);
        let trainer = JointTrainer::new(
            config.method,
            node_count,
            k,
            &hyper.dqn,
            &hyper.cvae,
            hyper.learning_rates(),
            &mut init,
        )?;
        let mut learner = Learner {
            trainer,
            buffer: ReplayBuffer::new(hyper.dqn.buffer_capacity),
            sync: TargetSync::new(hyper.dqn.target_sync_every),
            rng: run_rng(seed, STREAM_LEARN),
            epsilon: 1.0,
            episode: 0,
            batch_size: hyper.dqn.batch_size,
            updates_per_step: hyper.updates_per_step,
            mask: hyper.dqn.mask_unreachable,
            k,
            steps: Vec::new(),
        };
        let schedule = EpsilonSchedule::new(&hyper.dqn, config.episodes);
        for ep in 0..config.episodes {
            learner.episode = ep;
            learner.epsilon = schedule.value(ep);
            let env_seed = training_episode_seed(seed, ep);
            let out = run_episode(&env, env_seed, &mut learner, config.fcc_softmax_sign, window, false)?;
            episodes.push(EpisodeRow {
                episode: ep,
                env_seed,
                epsilon: learner.epsilon,
                total_cost: out.total_cost,
                mean_return: out.returns.iter().sum::<f64>() / out.returns.len() as f64,
                stranded: out.stranded,
                decisions: out.decisions,
                updates: learner.sync.steps(),
            });
            if let Some(d) = dir {
                if config.checkpoint_every > 0 && (ep + 1) % config.checkpoint_every == 0 {
                    save_trainer(&d.join(format!("checkpoints/ep{:05}.ckpt", ep + 1)), &learner.trainer)?;
                }
            }
            last_state = Some(out.state);
        }
        let syncs = learner.sync.syncs();
        (Some(learner.trainer), learner.steps, syncs)
    } else {
        let mut agent = ShortestPathAgent;
        for ep in 0..config.episodes {
            let env_seed = training_episode_seed(seed, ep);
            let out = run_episode(&env, env_seed, &mut agent, config.fcc_softmax_sign, window, false)?;
            episodes.push(EpisodeRow {
                episode: ep,
                env_seed,
                epsilon: 0.0,
                total_cost: out.total_cost,
                mean_return: out.returns.iter().sum::<f64>() / out.returns.len() as f64,
                stranded: out.stranded,
                decisions: out.decisions,
                updates: 0,
            });
            last_state = Some(out.state);
        }
        (None, Vec::new(), 0)
    };

    if let Some(d) = dir {
        write_csv(&d.join("metrics.csv"), &steps, &STEP_HEADER)?;
        write_csv(&d.join("episodes.csv"), &episodes, &[])?;
        if let Some(t) = &trainer {
            save_trainer(&d.join("checkpoints/final.ckpt"), t)?;
        }
        if let Some(state) = &last_state {
            let path = d.join("trace.csv");
            let file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
            state.write_trace_csv(BufWriter::new(file))?;
        }
    }

    let summary = RunSummary {
        method: config.method,
        seed,
        episodes: config.episodes,
        updates: steps.len() as u64,
        target_syncs: syncs,
        late_cost: mean(last_tenth(&episodes).iter().map(|e| e.total_cost)).unwrap_or(0.0),
        final_cvae_loss: mean(last_tenth(&steps).iter().filter_map(StepRow::cvae_loss)),
    };
    Ok(TrainedRun {
        config: config.clone(),
        seed,
        trainer,
        steps,
        episodes,
        summary,
        dir: dir.map(Path::to_path_buf),
    })
}

/// Run directory `root/<method>/<seed>`.
pub fn run_dir(root: &Path, method: Method, seed: u64) -> PathBuf {
    root.join(method.name()).join(seed.to_string())
}

/// Trains every `(config, seed)` pair on up to [`super::worker_threads`] threads.
pub fn run_many(jobs: &[(RunConfig, u64)], root: Option<&Path>) -> Vec<Result<TrainedRun, HarnessError>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(super::worker_threads())
        .build()
        .expect("thread pool");
    pool.install(|| {
        jobs.par_iter()
            .map(|(cfg, seed)| {
                let dir = root.map(|r| run_dir(r, cfg.method, *seed));
                run_training(cfg, *seed, dir.as_deref())
            })
            .collect()
    })
}
