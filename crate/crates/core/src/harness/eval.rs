use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cvae::RuntimePlatform;
use crate::env::{CostBreakdown, Env};
use crate::method::{Method, RiSource};
use crate::mgda::JointTrainer;
use crate::nn::load_checkpoint;

use super::config::RunConfig;
use super::rollout::{greedy_masked, run_episode, Agent, Decision, DecisionContext, DecisionRecord, ShortestPathAgent};
use super::train::run_rng;
use super::HarnessError;

/// Station with the smallest expected arrival time; ties go to the lowest index.
pub fn shortest_path_policy(arrival_minutes: &[f64]) -> usize {
    let mut best = 0;
    for (j, t) in arrival_minutes.iter().enumerate() {
        if *t < arrival_minutes[best] {
            best = j;
        }
    }
    best
}

/// Greedy execution-mode policy: the platform sees only charging requests.
pub struct GreedyAgent<'a> {
    trainer: &'a JointTrainer,
    platform: Option<RuntimePlatform>,
    rng: ChaCha8Rng,
    mask: bool,
}

impl<'a> GreedyAgent<'a> {
    pub fn new(trainer: &'a JointTrainer, config: &RunConfig, seed: u64) -> Self {
        let node_count = trainer.q.node_count();
        let platform = trainer
            .cvae
            .as_ref()
            .map(|c| RuntimePlatform::new(c, &config.hyper.cvae, node_count));
        Self {
            trainer,
            platform,
            rng: run_rng(seed, 3),
            mask: config.hyper.dqn.mask_unreachable,
        }
    }
}

impl Agent for GreedyAgent<'_> {
    fn begin_episode(&mut self) -> Result<(), HarnessError> {
        if let (Some(p), Some(c)) = (&mut self.platform, &self.trainer.cvae) {
            p.reset(c);
        }
        Ok(())
    }

    fn act(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision, HarnessError> {
        let k = self.trainer.q.actions();
        let (ri, condition) = match self.trainer.ri_source() {
            RiSource::Zeros => (vec![0.0; k], None),
            RiSource::TrueFcc => (ctx.fcc.probs.clone(), None),
            RiSource::Condition | RiSource::Reconstruction => {
                let cvae = self.trainer.cvae.as_ref().expect("method carries a platform");
                let platform = self.platform.as_mut().expect("method carries a platform");
                if self.trainer.ri_source() == RiSource::Condition {
                    let c = platform.observe(cvae, &ctx.request)?;
                    (c.clone(), Some(c))
                } else {
                    let (c, ri) = platform.recommend(cvae, &ctx.request, &mut self.rng)?;
                    (ri, Some(c))
                }
            }
        };
        let qs = self.trainer.q.q_values(&self.trainer.input(ctx.node, ctx.soc, &ri))?;
        let action = greedy_masked(&qs, self.mask.then_some(ctx.reachable));
        Ok(Decision { action, ri, condition })
    }
}

/// Outcome of one evaluation episode next to the baseline on the same seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub cost: f64,
    pub sp_cost: f64,
    pub ratio: f64,
    pub road_energy: f64,
    pub charging: f64,
    pub drive_time: f64,
    pub wait_time: f64,
    pub stranding: f64,
    pub stranded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub method: Method,
    pub seeds: Vec<SeedResult>,
    /// Total baseline cost over total method cost.
    pub cost_ratio: f64,
    pub mean_cost: f64,
    pub std_cost: f64,
    pub breakdown: CostBreakdown,
    #[serde(skip)]
    pub records: Vec<(u64, DecisionRecord)>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Greedy evaluation of `trainer` (or the baseline when `None`) on `seeds`.
pub fn run_eval(
    config: &RunConfig,
    trainer: Option<&JointTrainer>,
    seeds: &[u64],
    keep_records: bool,
) -> Result<EvalReport, HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::Config("no evaluation seeds".into()));
    }
    let env = Env::new(config.env.clone())?;
    if let Some(t) = trainer {
        if t.method() != config.method {
            return Err(HarnessError::Config(format!(
                "checkpoint holds {} but the config names {}",
                t.method(),
                config.method
            )));
        }
    } else if config.method.learns() {
        return Err(HarnessError::Config(format!("{} needs a trained model", config.method)));
    }
    let sign = config.fcc_softmax_sign;
    let window = config.hyper.cvae.window;
    let mut results = Vec::with_capacity(seeds.len());
    let mut breakdown = CostBreakdown::default();
    let mut records = Vec::new();
    for &seed in seeds {
        let sp = run_episode(&env, seed, &mut ShortestPathAgent, sign, window, false)?;
        let out = match trainer {
            Some(t) => run_episode(&env, seed, &mut GreedyAgent::new(t, config, seed), sign, window, keep_records)?,
            None => run_episode(&env, seed, &mut ShortestPathAgent, sign, window, keep_records)?,
        };
        breakdown.add(&out.breakdown);
        let b = out.breakdown;
        results.push(SeedResult {
            seed,
            cost: out.total_cost,
            sp_cost: sp.total_cost,
            ratio: sp.total_cost / out.total_cost,
            road_energy: b.road_energy,
            charging: b.charging,
            drive_time: b.drive_time,
            wait_time: b.wait_time,
            stranding: b.stranding,
            stranded: out.stranded,
        });
        records.extend(out.records.into_iter().map(|r| (seed, r)));
    }
    let n = seeds.len() as f64;
    let costs: Vec<f64> = results.iter().map(|r| r.cost).collect();
    let (mean_cost, std_cost) = mean_std(&costs);
    let sp_total: f64 = results.iter().map(|r| r.sp_cost).sum();
    let total: f64 = costs.iter().sum();
    Ok(EvalReport {
        method: config.method,
        seeds: results,
        cost_ratio: sp_total / total,
        mean_cost,
        std_cost,
        breakdown: CostBreakdown {
            road_energy: breakdown.road_energy / n,
            charging: breakdown.charging / n,
            drive_time: breakdown.drive_time / n,
            wait_time: breakdown.wait_time / n,
            stranding: breakdown.stranding / n,
        },
        records,
    })
}

/// Loads a checkpoint into a freshly built trainer for `config`.
pub fn load_trainer(config: &RunConfig, checkpoint: &Path) -> Result<JointTrainer, HarnessError> {
    let env = Env::new(config.env.clone())?;
    let hyper = &config.hyper;
    let mut trainer = JointTrainer::new(
        config.method,
        env.graph().node_count(),
        env.evcs_count(),
        &hyper.dqn,
        &hyper.cvae,
        hyper.learning_rates(),
        &mut run_rng(0, 0),
    )?;
    let file = File::open(checkpoint).map_err(|e| HarnessError::io(checkpoint, e))?;
    let entries = load_checkpoint(BufReader::new(file))?;
    trainer.restore(&entries)?;
    Ok(trainer)
}

/// The run directory holding `checkpoint` (`<run>/checkpoints/<file>`).
pub fn run_dir_of(checkpoint: &Path) -> Option<PathBuf> {
    checkpoint.parent()?.parent().map(Path::to_path_buf)
}

/// Evaluates a checkpoint against the config snapshot of its run unless
/// `config` overrides it, and writes `eval.csv` into the run directory.
pub fn run_eval_dir(
    checkpoint: &Path,
    config: Option<RunConfig>,
    seeds: &[u64],
    keep_records: bool,
) -> Result<EvalReport, HarnessError> {
    let dir = run_dir_of(checkpoint)
        .ok_or_else(|| HarnessError::Config(format!("{} is not inside a run directory", checkpoint.display())))?;
    let config = match config {
        Some(c) => c,
        None => RunConfig::load(&dir.join("config.snapshot"))?,
    };
    let trainer = load_trainer(&config, checkpoint)?;
    let report = run_eval(&config, Some(&trainer), seeds, keep_records)?;
    write_eval_csv(&dir.join("eval.csv"), &report)?;
    Ok(report)
}

pub fn write_eval_csv(path: &Path, report: &EvalReport) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in &report.seeds {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

/// Writes `(seed, step, ev, request, c, RI, fcc_true, action)` rows.
pub fn write_ri_dump<W: Write>(out: W, records: &[(u64, DecisionRecord)]) -> Result<(), HarnessError> {
    let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "step", "ev", "node", "soc", "time", "c", "ri", "fcc_true", "action"])?;
    for (seed, r) in records {
        w.write_record([
            seed.to_string(),
            r.step.to_string(),
            r.ev.to_string(),
            r.request.node.to_string(),
            format!("{}", r.request.soc),
            format!("{}", r.request.time),
            r.condition.as_deref().map(join).unwrap_or_default(),
            join(&r.ri),
            join(&r.fcc_true),
            r.action.to_string(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::Io {
        path: PathBuf::from("<ri dump>"),
        source: e,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shortest_path_picks_nearest_and_breaks_ties_low() {
        assert_eq!(shortest_path_policy(&[7.0]), 0);
        assert_eq!(shortest_path_policy(&[20.0, 5.0]), 1);
        assert_eq!(shortest_path_policy(&[5.0, 20.0]), 0);
        assert_eq!(shortest_path_policy(&[9.0, 4.0, 4.0]), 1);
        assert_eq!(shortest_path_policy(&[f64::INFINITY, 3.0]), 1);
    }

    #[test]
    fn baseline_against_itself_is_exactly_one() {
        let cfg = RunConfig::desk_two_ev(Method::ShortestPath);
        let a = run_eval(&cfg, None, &cfg.eval_seeds, false).unwrap();
        assert_eq!(a.cost_ratio, 1.0);
        assert!(a.seeds.iter().all(|s| s.ratio == 1.0));
        let b = run_eval(&cfg, None, &cfg.eval_seeds, false).unwrap();
        assert_eq!(a, b);
        let sum = a.breakdown.road_energy + a.breakdown.charging + a.breakdown.drive_time + a.breakdown.wait_time
            + a.breakdown.stranding;
        assert!((sum - a.mean_cost).abs() < 1e-9 * a.mean_cost);
    }
}
