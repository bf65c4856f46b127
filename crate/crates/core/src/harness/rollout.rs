use std::collections::VecDeque;

use crate::cvae::{request_dim, ChargingRequest};
use crate::dqn::{greedy, Transition};
use crate::env::{CostBreakdown, Env, EvStatus, GlobalState, Step};
use crate::fcc::{fcc_tensor, FccTensor, SoftmaxSign};
use crate::graph::NodeId;

use super::HarnessError;

/// Everything known when an EV decides. Agents running in execution mode
/// must read only `request` and `window`.
pub struct DecisionContext<'a> {
    pub ev: usize,
    pub node: NodeId,
    pub soc: f64,
    pub clock: f64,
    pub request: ChargingRequest,
    /// Encoded requests, oldest first, ending with `request`.
    pub window: &'a [Vec<f64>],
    /// Global information, available while training.
    pub fcc: &'a FccTensor,
    /// Expected minutes to each station under current velocities.
    pub arrival_minutes: &'a [f64],
    /// Stations reachable on the remaining charge.
    pub reachable: &'a [bool],
}

/// An agent's choice together with the recommendation it acted on.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub action: usize,
    pub ri: Vec<f64>,
    /// Condition label behind `ri`, when the platform produced one.
    pub condition: Option<Vec<f64>>,
}

pub trait Agent {
    fn begin_episode(&mut self) -> Result<(), HarnessError> {
        Ok(())
    }

    fn act(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision, HarnessError>;

    /// A completed transition of one EV.
    fn record(&mut self, _transition: Transition) -> Result<(), HarnessError> {
        Ok(())
    }
}

/// Heads for the station with the smallest expected arrival time.
#[derive(Clone, Copy, Debug, Default)]
pub struct ShortestPathAgent;

impl Agent for ShortestPathAgent {
    fn act(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision, HarnessError> {
        Ok(Decision {
            action: super::eval::shortest_path_policy(ctx.arrival_minutes),
            ri: vec![0.0; ctx.arrival_minutes.len()],
            condition: None,
        })
    }
}

/// One decision as seen by a debugging dump.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionRecord {
    pub step: usize,
    pub ev: usize,
    pub request: ChargingRequest,
    pub condition: Option<Vec<f64>>,
    pub ri: Vec<f64>,
    pub fcc_true: Vec<f64>,
    pub action: usize,
}

#[derive(Clone, Debug)]
pub struct EpisodeOutcome {
    pub seed: u64,
    pub total_cost: f64,
    pub breakdown: CostBreakdown,
    pub returns: Vec<f64>,
    pub stranded: usize,
    pub decisions: usize,
    pub records: Vec<DecisionRecord>,
    pub state: GlobalState,
}

struct Pending {
    node: NodeId,
    soc: f64,
    ri: Vec<f64>,
    action: usize,
    fcc_true: Vec<f64>,
    window: Vec<Vec<f64>>,
}

impl Pending {
    fn complete(self, ev: usize, reward: f64, next: Option<(&DecisionContext<'_>, &[f64])>) -> Transition {
        let (terminal, next_node, next_soc, next_ri, next_fcc_true, next_window) = match next {
            Some((ctx, ri)) => (false, ctx.node, ctx.soc, ri.to_vec(), ctx.fcc.probs.clone(), ctx.window.to_vec()),
            None => (true, self.node, 0.0, Vec::new(), Vec::new(), Vec::new()),
        };
        Transition {
            ev,
            node: self.node,
            soc: self.soc,
            ri: self.ri,
            action: self.action,
            reward,
            terminal,
            next_node,
            next_soc,
            next_ri,
            fcc_true: self.fcc_true,
            next_fcc_true,
            window: self.window,
            next_window,
        }
    }
}

/// Plays one episode with `agent` controlling every EV.
pub fn run_episode<A: Agent + ?Sized>(
    env: &Env,
    seed: u64,
    agent: &mut A,
    sign: SoftmaxSign,
    window_len: usize,
    keep_records: bool,
) -> Result<EpisodeOutcome, HarnessError> {
    let graph = env.graph();
    let cfg = env.config();
    let node_count = graph.node_count();
    let mut state = env.reset(seed);
    let mut pending: Vec<Option<Pending>> = (0..cfg.n_evs).map(|_| None).collect();
    let mut history: VecDeque<Vec<f64>> = VecDeque::with_capacity(window_len);
    let mut records = Vec::new();
    let mut decisions = 0;
    agent.begin_episode()?;

    while let Some(step) = env.next_decision(&mut state) {
        match step {
            Step::Decision { ev, reward, .. } => {
                let node = state.evs[ev].node().expect("deciding EVs sit at a node");
                let soc = state.evs[ev].soc;
                let request = ChargingRequest::new(node, soc, state.clock, cfg.horizon_min);
                if history.len() == window_len {
                    history.pop_front();
                }
                history.push_back(request.encode(node_count));
                let window: Vec<Vec<f64>> = history.iter().cloned().collect();
                debug_assert_eq!(window[0].len(), request_dim(node_count));
                let fcc = fcc_tensor(env, &state, ev, sign)?;
                let tree = env.path_tree(&state, ev)?;
                let arrival: Vec<f64> = graph.evcs_nodes().iter().map(|&t| tree.time_to(t)).collect();
                let reachable = env.reachable_actions(&state, ev)?;
                let ctx = DecisionContext {
                    ev,
                    node,
                    soc,
                    clock: state.clock,
                    request,
                    window: &window,
                    fcc: &fcc,
                    arrival_minutes: &arrival,
                    reachable: &reachable,
                };
                let decision = agent.act(&ctx)?;
                if let Some(p) = pending[ev].take() {
                    let r = reward.ok_or_else(|| HarnessError::Wiring(format!("EV {ev} resumed without a reward")))?;
                    agent.record(p.complete(ev, r.value, Some((&ctx, &decision.ri))))?;
                }
                if keep_records {
                    records.push(DecisionRecord {
                        step: decisions,
                        ev,
                        request,
                        condition: decision.condition.clone(),
                        ri: decision.ri.clone(),
                        fcc_true: fcc.probs.clone(),
                        action: decision.action,
                    });
                }
                env.apply_action(&mut state, ev, decision.action)?;
                pending[ev] = Some(Pending {
                    node,
                    soc,
                    ri: decision.ri,
                    action: decision.action,
                    fcc_true: fcc.probs,
                    window,
                });
                decisions += 1;
            }
            Step::Terminal { ev, reward, .. } => {
                let p = pending[ev]
                    .take()
                    .ok_or_else(|| HarnessError::Wiring(format!("EV {ev} ended without deciding")))?;
                agent.record(p.complete(ev, reward.value, None))?;
            }
            Step::ChargeComplete { .. } => {}
        }
    }

    Ok(EpisodeOutcome {
        seed,
        total_cost: state.total_cost(),
        breakdown: state.cost_breakdown(),
        returns: state.evs.iter().map(|e| e.reward_sum).collect(),
        stranded: state.evs.iter().filter(|e| e.status == EvStatus::Stranded).count(),
        decisions,
        records,
        state,
    })
}

/// Greedy choice among `qs`, restricted to `allowed` when any is allowed.
pub fn greedy_masked(qs: &[f64], allowed: Option<&[bool]>) -> usize {
    match allowed {
        Some(mask) if mask.iter().any(|a| *a) => {
            let masked: Vec<f64> = qs
                .iter()
                .zip(mask)
                .map(|(q, ok)| if *ok { *q } else { f64::NEG_INFINITY })
                .collect();
            greedy(&masked)
        }
        _ => greedy(qs),
    }
}
