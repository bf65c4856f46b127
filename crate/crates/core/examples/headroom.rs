//! Compares the shortest-path baseline with a greedy policy that sees the
//! true FCC tensor, to show how much a scene rewards queue awareness.
//!
//! `cargo run --release --example headroom -- [n_evs] [spots] [power_kw] [episodes]`

use evnav_core::env::{Env, EnvConfig};
use evnav_core::harness::rollout::{run_episode, Agent, Decision, DecisionContext, ShortestPathAgent};
use evnav_core::harness::HarnessError;
use evnav_core::fcc::SoftmaxSign;

/// Minimizes expected drive-time cost plus expected queue cost.
struct QueueAware {
    time_cost: f64,
}

impl Agent for QueueAware {
    fn act(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision, HarnessError> {
        let score: Vec<f64> = ctx
            .arrival_minutes
            .iter()
            .zip(&ctx.fcc.raw)
            .map(|(t, w)| self.time_cost * (t + w))
            .collect();
        let mut best = 0;
        for (j, s) in score.iter().enumerate() {
            if *s < score[best] {
                best = j;
            }
        }
        Ok(Decision {
            action: best,
            ri: ctx.fcc.probs.clone(),
            condition: None,
        })
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let cfg = EnvConfig {
        n_evs: arg(0, 2.0) as usize,
        spots_per_evcs: arg(1, 1.0) as usize,
        charging_power_kw: arg(2, 60.0),
        ..EnvConfig::default()
    };
    let episodes = arg(3, 200.0) as u64;
    let env = Env::new(cfg.clone()).expect("valid config");
    let (mut sp_total, mut qa_total, mut sp_wait, mut qa_wait) = (0.0, 0.0, 0.0, 0.0);
    for seed in 0..episodes {
        let sp = run_episode(&env, seed, &mut ShortestPathAgent, SoftmaxSign::Positive, 8, false).unwrap();
        let mut qa = QueueAware {
            time_cost: cfg.time_cost_per_min,
        };
        let q = run_episode(&env, seed, &mut qa, SoftmaxSign::Positive, 8, false).unwrap();
        sp_total += sp.total_cost;
        qa_total += q.total_cost;
        sp_wait += sp.breakdown.wait_time;
        qa_wait += q.breakdown.wait_time;
    }
    let n = episodes as f64;
    println!(
        "shortest path: cost {:.2} (wait {:.2})  queue-aware: cost {:.2} (wait {:.2})  ratio {:.3}",
        sp_total / n,
        sp_wait / n,
        qa_total / n,
        qa_wait / n,
        sp_total / qa_total
    );
}
