//! Event-driven Dec-POMDP charging-navigation environment.
//!
//! Each EV holds exactly one pending event: its arrival at the next node,
//! the point where its battery runs out, or the end of its charge. Popping
//! the earliest event advances the clock, moves every driving EV along its
//! edge at the speed frozen when it entered that edge, and refreshes the
//! piecewise-constant velocity (every 5 min) and price (every 30 min)
//! processes at exact window boundaries.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    build_graph, sample_velocities, shortest_path, shortest_path_tree, GraphConfig, GraphError,
    NodeId, PathTree, Position, TrafficGraph, VelocityField,
};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("{requested} EVs requested but only {available} non-EVCS nodes exist")]
    TooManyEvs { requested: usize, available: usize },
    #[error("action {action} out of range for {k} charging stations")]
    ActionOutOfRange { action: usize, k: usize },
    #[error("EV {0} does not exist")]
    UnknownEv(usize),
    #[error("EV {ev} is not waiting for a decision at a node (status {status:?})")]
    NotAtNode { ev: usize, status: EvStatus },
    #[error("recommendation vector invalid: {0}")]
    InvalidRi(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("trace export failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Physical and economic parameters of an episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub graph: GraphConfig,
    /// N
    pub n_evs: usize,
    pub spots_per_evcs: usize,
    pub battery_kwh: f64,
    /// alpha, kWh per km
    pub consumption_kwh_per_km: f64,
    /// pi, yuan per minute of driving or waiting
    pub time_cost_per_min: f64,
    pub charging_power_kw: f64,
    /// Cost charged once when an EV runs out of energy (yuan, positive).
    pub stranding_penalty: f64,
    pub horizon_min: f64,
    pub price_period_min: f64,
    pub velocity_period_min: f64,
    /// Per-station base price `a ~ U(lo, hi)`.
    pub price_base_range: (f64, f64),
    pub price_std_factor: f64,
    pub initial_soc_range: (f64, f64),
    pub soc_max: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            graph: GraphConfig::graph39(),
            n_evs: 2,
            spots_per_evcs: 2,
            battery_kwh: 60.0,
            consumption_kwh_per_km: 0.15,
            time_cost_per_min: 0.4,
            charging_power_kw: 60.0,
            stranding_penalty: 200.0,
            horizon_min: 480.0,
            price_period_min: 30.0,
            velocity_period_min: 5.0,
            price_base_range: (0.3, 0.7),
            price_std_factor: 0.15,
            initial_soc_range: (0.4, 0.6),
            soc_max: 1.0,
        }
    }
}

impl EnvConfig {
    fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: &str| Err(EnvError::InvalidConfig(msg.to_string()));
        if self.n_evs == 0 {
            return bad("n_evs must be at least 1");
        }
        if self.spots_per_evcs == 0 {
            return bad("spots_per_evcs must be at least 1");
        }
        let positive = [
            self.battery_kwh,
            self.consumption_kwh_per_km,
            self.charging_power_kw,
            self.horizon_min,
            self.price_period_min,
            self.velocity_period_min,
            self.price_std_factor,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return bad("capacities, rates and periods must be positive");
        }
        if self.time_cost_per_min < 0.0 || self.stranding_penalty < 0.0 {
            return bad("costs must be non-negative");
        }
        let (lo, hi) = self.price_base_range;
        if !(lo > 0.0 && lo <= hi) {
            return bad("price_base_range must satisfy 0 < lo <= hi");
        }
        let (slo, shi) = self.initial_soc_range;
        if !(0.0..=1.0).contains(&slo) || !(slo..=1.0).contains(&shi) {
            return bad("initial_soc_range must lie within [0, 1]");
        }
        if !(self.soc_max > 0.0 && self.soc_max <= 1.0) {
            return bad("soc_max must lie in (0, 1]");
        }
        Ok(())
    }

    /// Stranding distance in km for a given state of charge.
    pub fn range_km(&self, soc: f64) -> f64 {
        soc * self.battery_kwh / self.consumption_kwh_per_km
    }

    /// Minutes to charge from `soc` to `soc_max`.
    pub fn charge_minutes(&self, soc: f64) -> f64 {
        (self.soc_max - soc).max(0.0) * self.battery_kwh / self.charging_power_kw * 60.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvStatus {
    Driving,
    AtNode,
    Queuing,
    Charging,
    Done,
    Stranded,
}

impl EvStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, EvStatus::Done | EvStatus::Stranded)
    }

    /// Still navigating (not yet at a station and not stranded).
    pub fn is_navigating(self) -> bool {
        matches!(self, EvStatus::Driving | EvStatus::AtNode)
    }
}

/// Costs accumulated by one EV, all in yuan and non-negative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub road_energy: f64,
    pub charging: f64,
    pub drive_time: f64,
    pub wait_time: f64,
    pub stranding: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.road_energy + self.charging + self.drive_time + self.wait_time + self.stranding
    }

    pub fn add(&mut self, other: &CostBreakdown) {
        self.road_energy += other.road_energy;
        self.charging += other.charging;
        self.drive_time += other.drive_time;
        self.wait_time += other.wait_time;
        self.stranding += other.stranding;
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Segment {
    edge: usize,
    to: NodeId,
    start_time: f64,
    speed: f64,
    soc_at_start: f64,
    /// km into the edge at which the battery empties, if before the end.
    strand_at_km: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvState {
    pub id: usize,
    pub position: Position,
    pub soc: f64,
    pub route: Option<crate::graph::Route>,
    pub target_evcs: Option<usize>,
    pub status: EvStatus,
    /// Sum of all rewards received so far (non-positive).
    pub reward_sum: f64,
    pub costs: CostBreakdown,
    /// Minute at which charging finishes, once queued.
    pub charge_finish: Option<f64>,
    segment: Option<Segment>,
}

impl EvState {
    /// The node the EV currently occupies, if any.
    pub fn node(&self) -> Option<NodeId> {
        self.position.node()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub ev: usize,
    pub spot: usize,
    pub arrive: f64,
    pub start: f64,
    pub finish: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvcsState {
    pub node: NodeId,
    /// yuan/kWh
    pub price: f64,
    pub power_kw: f64,
    /// Minute at which each spot becomes free.
    pub spots: Vec<f64>,
    pub queue_log: Vec<QueueEntry>,
}

impl EvcsState {
    /// Spot that frees up first, ties to the lowest index.
    pub fn earliest_spot(&self) -> usize {
        let mut best = 0;
        for (i, &t) in self.spots.iter().enumerate() {
            if t < self.spots[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Event {
    time: f64,
    ev: usize,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.ev.cmp(&self.ev))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub ev: usize,
    /// yuan, negative cost
    pub value: f64,
    pub terminal: bool,
}

/// What happened at a popped event.
#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    /// `ev` sits at a node and must pick a station. `reward` settles the
    /// edge it just finished (absent for the very first decision).
    Decision {
        ev: usize,
        time: f64,
        reward: Option<RewardRecord>,
    },
    /// `ev` reached its station or ran out of energy.
    Terminal {
        ev: usize,
        time: f64,
        reward: RewardRecord,
    },
    /// `ev` finished charging; carries no reward.
    ChargeComplete { ev: usize, time: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub clock: f64,
    pub ev: usize,
    pub event: String,
    pub node: Option<NodeId>,
    pub soc: f64,
    pub reward: f64,
    pub cumulative_cost: f64,
}

/// Complete mutable state of one episode.
#[derive(Clone, Debug)]
pub struct GlobalState {
    pub clock: f64,
    pub evs: Vec<EvState>,
    pub evcss: Vec<EvcsState>,
    pub field: VelocityField,
    pub trace: Vec<TraceRow>,
    events: BinaryHeap<Event>,
    seed: u64,
    price_bases: Vec<f64>,
    velocity_window: u64,
    price_window: u64,
}

impl GlobalState {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Per-station base price `a` drawn at reset.
    pub fn price_bases(&self) -> &[f64] {
        &self.price_bases
    }

    pub fn pending_events(&self) -> usize {
        self.events.len()
    }

    pub fn is_over(&self) -> bool {
        self.events.is_empty()
    }

    pub fn total_cost(&self) -> f64 {
        self.evs.iter().map(|e| e.costs.total()).sum()
    }

    pub fn cost_breakdown(&self) -> CostBreakdown {
        let mut sum = CostBreakdown::default();
        for ev in &self.evs {
            sum.add(&ev.costs);
        }
        sum
    }

    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<(), EnvError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["clock", "ev", "event", "node", "soc", "reward", "cumulative_cost"])
            .map_err(csv_io)?;
        for r in &self.trace {
            w.write_record([
                format!("{}", r.clock),
                r.ev.to_string(),
                r.event.clone(),
                r.node.map(|n| n.to_string()).unwrap_or_default(),
                format!("{}", r.soc),
                format!("{}", r.reward),
                format!("{}", r.cumulative_cost),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// An EV's local view: position, battery and recommendation vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub position: NodeId,
    pub soc: f64,
    pub ri: Vec<f64>,
}

impl Observation {
    pub fn encode(&self, node_count: usize) -> Vec<f64> {
        encode_observation(node_count, self.position, self.soc, &self.ri)
    }
}

/// `one_hot(node) ++ [soc] ++ ri`.
pub fn encode_observation(node_count: usize, node: NodeId, soc: f64, ri: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; node_count + 1 + ri.len()];
    v[node] = 1.0;
    v[node_count] = soc;
    v[node_count + 1..].copy_from_slice(ri);
    v
}

const STREAM_VELOCITY: u64 = 1 << 40;
const STREAM_PRICE: u64 = 2 << 40;

/// Immutable environment description shared by every episode.
#[derive(Clone, Debug)]
pub struct Env {
    config: EnvConfig,
    graph: Arc<TrafficGraph>,
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let graph = Arc::new(build_graph(&config.graph)?);
        let available = graph.node_count() - graph.evcs_count();
        if config.n_evs > available {
            return Err(EnvError::TooManyEvs {
                requested: config.n_evs,
                available,
            });
        }
        Ok(Self { config, graph })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn graph(&self) -> &TrafficGraph {
        &self.graph
    }

    pub fn evcs_count(&self) -> usize {
        self.graph.evcs_count()
    }

    /// Velocity field of window `k` (`[k*P, (k+1)*P)`), a pure function of
    /// the seed so that every policy sees the same draws.
    pub fn velocity_field(&self, seed: u64, window: u64) -> VelocityField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_VELOCITY + window);
        let p = self.config.velocity_period_min;
        sample_velocities(&self.graph, &mut rng)
            .with_window(window as f64 * p, (window + 1) as f64 * p)
    }

    /// Station prices of window `k`: `N(a, (f*a)^2)` redrawn until positive.
    pub fn prices(&self, seed: u64, window: u64, bases: &[f64]) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_PRICE + window);
        bases
            .iter()
            .map(|&a| {
                let normal = Normal::new(a, self.config.price_std_factor * a).expect("finite");
                loop {
                    let p = normal.sample(&mut rng);
                    if p > 0.0 {
                        break p;
                    }
                }
            })
            .collect()
    }

    /// Fresh episode: EVs on distinct non-station nodes, all due to decide at t=0.
    pub fn reset(&self, seed: u64) -> GlobalState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let candidates: Vec<NodeId> = (0..self.graph.node_count())
            .filter(|n| !self.graph.is_evcs(*n))
            .collect();
        let picks = rand::seq::index::sample(&mut rng, candidates.len(), self.config.n_evs);
        let (slo, shi) = self.config.initial_soc_range;
        let evs: Vec<EvState> = picks
            .iter()
            .enumerate()
            .map(|(id, pick)| {
                let soc = if shi > slo { rng.random_range(slo..shi) } else { slo };
                EvState {
                    id,
                    position: Position::Node(candidates[pick]),
                    soc,
                    route: None,
                    target_evcs: None,
                    status: EvStatus::AtNode,
                    reward_sum: 0.0,
                    costs: CostBreakdown::default(),
                    charge_finish: None,
                    segment: None,
                }
            })
            .collect();
        let (plo, phi) = self.config.price_base_range;
        let price_bases: Vec<f64> = (0..self.graph.evcs_count())
            .map(|_| if phi > plo { rng.random_range(plo..=phi) } else { plo })
            .collect();
        let prices = self.prices(seed, 0, &price_bases);
        let evcss = self
            .graph
            .evcs_nodes()
            .iter()
            .zip(prices)
            .map(|(&node, price)| EvcsState {
                node,
                price,
                power_kw: self.config.charging_power_kw,
                spots: vec![0.0; self.config.spots_per_evcs],
                queue_log: Vec::new(),
            })
            .collect();
        let events = (0..evs.len()).map(|ev| Event { time: 0.0, ev }).collect();
        GlobalState {
            clock: 0.0,
            evs,
            evcss,
            field: self.velocity_field(seed, 0),
            trace: Vec::new(),
            events,
            seed,
            price_bases,
            velocity_window: 0,
            price_window: 0,
        }
    }

    /// Moves the clock to `t`, updating positions, SOCs and the stochastic processes.
    fn advance_clock(&self, state: &mut GlobalState, t: f64) {
        debug_assert!(t >= state.clock);
        state.clock = t;
        let alpha = self.config.consumption_kwh_per_km;
        let cap = self.config.battery_kwh;
        for ev in &mut state.evs {
            if ev.status != EvStatus::Driving {
                continue;
            }
            if let Some(seg) = &ev.segment {
                let len = self.graph.edge(seg.edge).length_km;
                let limit = seg.strand_at_km.unwrap_or(len);
                let km = (seg.speed * (t - seg.start_time) / 60.0).clamp(0.0, limit);
                ev.position = Position::OnEdge {
                    edge: seg.edge,
                    toward: seg.to,
                    offset_km: km,
                };
                ev.soc = (seg.soc_at_start - alpha * km / cap).max(0.0);
            }
        }
        let vw = (t / self.config.velocity_period_min).floor() as u64;
        if vw != state.velocity_window {
            state.velocity_window = vw;
            state.field = self.velocity_field(state.seed, vw);
        }
        let pw = (t / self.config.price_period_min).floor() as u64;
        if pw != state.price_window {
            state.price_window = pw;
            let prices = self.prices(state.seed, pw, &state.price_bases);
            for (evcs, p) in state.evcss.iter_mut().zip(prices) {
                evcs.price = p;
            }
        }
    }

    /// Pops the earliest event (ties to the lowest EV id) and resolves it.
    /// `None` once every EV has finished. After a [`Step::Decision`] the EV
    /// holds no event until [`Env::apply_action`] is called for it.
    pub fn next_decision(&self, state: &mut GlobalState) -> Option<Step> {
        let Event { time, ev } = state.events.pop()?;
        self.advance_clock(state, time);
        let step = match state.evs[ev].status {
            EvStatus::AtNode => Step::Decision {
                ev,
                time,
                reward: None,
            },
            EvStatus::Driving => self.finish_segment(state, ev),
            EvStatus::Queuing | EvStatus::Charging => {
                let e = &mut state.evs[ev];
                e.status = EvStatus::Done;
                Step::ChargeComplete { ev, time }
            }
            EvStatus::Done | EvStatus::Stranded => unreachable!("terminal EVs hold no events"),
        };
        let (label, reward) = match &step {
            Step::Decision { reward, .. } => ("node", reward.map(|r| r.value).unwrap_or(0.0)),
            Step::Terminal { reward, .. } => {
                if state.evs[ev].status == EvStatus::Stranded {
                    ("stranded", reward.value)
                } else {
                    ("evcs", reward.value)
                }
            }
            Step::ChargeComplete { .. } => ("done", 0.0),
        };
        push_trace(state, ev, label, reward);
        Some(step)
    }

    fn finish_segment(&self, state: &mut GlobalState, ev: usize) -> Step {
        let time = state.clock;
        let cfg = &self.config;
        let seg = state.evs[ev].segment.take();
        let target = state.evs[ev]
            .target_evcs
            .expect("driving EVs always have a target");
        let price = state.evcss[target].price;
        let mut edge_cost = CostBreakdown::default();
        if let Some(seg) = seg {
            if let Some(km) = seg.strand_at_km {
                let e = &mut state.evs[ev];
                e.position = Position::OnEdge {
                    edge: seg.edge,
                    toward: seg.to,
                    offset_km: km,
                };
                e.soc = 0.0;
                e.status = EvStatus::Stranded;
                e.route = None;
                let reward = self.settle(e, CostBreakdown {
                    stranding: cfg.stranding_penalty,
                    ..Default::default()
                }, true);
                return Step::Terminal { ev, time, reward };
            }
            let len = self.graph.edge(seg.edge).length_km;
            let e = &mut state.evs[ev];
            e.position = Position::Node(seg.to);
            e.soc = (seg.soc_at_start - cfg.consumption_kwh_per_km * len / cfg.battery_kwh).max(0.0);
            edge_cost = edge_cost_of(cfg, price, len, seg.speed);
        }
        let node = state.evs[ev].node().expect("segment ends at a node");
        if node == self.graph.evcs_nodes()[target] {
            let wait = self.enqueue_and_charge(state, ev, target);
            let e = &mut state.evs[ev];
            e.route = None;
            let cost = arrival_cost_of(cfg, price, e.soc, wait);
            let reward = self.settle(e, cost, true);
            Step::Terminal { ev, time, reward }
        } else {
            let e = &mut state.evs[ev];
            e.status = EvStatus::AtNode;
            let reward = self.settle(e, edge_cost, false);
            Step::Decision {
                ev,
                time,
                reward: Some(reward),
            }
        }
    }

    fn settle(&self, ev: &mut EvState, cost: CostBreakdown, terminal: bool) -> RewardRecord {
        ev.costs.add(&cost);
        let value = -cost.total();
        ev.reward_sum += value;
        RewardRecord {
            ev: ev.id,
            value,
            terminal,
        }
    }

    /// Assigns `ev` to the spot that frees first and returns its wait in minutes.
    pub fn enqueue_and_charge(&self, state: &mut GlobalState, ev: usize, evcs: usize) -> f64 {
        let now = state.clock;
        let soc = state.evs[ev].soc;
        let duration = self.config.charge_minutes(soc);
        let station = &mut state.evcss[evcs];
        let spot = station.earliest_spot();
        let start = station.spots[spot].max(now);
        let finish = start + duration;
        station.spots[spot] = finish;
        station.queue_log.push(QueueEntry {
            ev,
            spot,
            arrive: now,
            start,
            finish,
        });
        let e = &mut state.evs[ev];
        e.status = if start > now {
            EvStatus::Queuing
        } else {
            EvStatus::Charging
        };
        e.charge_finish = Some(finish);
        state.events.push(Event { time: finish, ev });
        start - now
    }

    fn check_deciding(&self, state: &GlobalState, ev: usize) -> Result<NodeId, EnvError> {
        let e = state.evs.get(ev).ok_or(EnvError::UnknownEv(ev))?;
        match (e.status, e.node()) {
            (EvStatus::AtNode, Some(node)) => Ok(node),
            (status, _) => Err(EnvError::NotAtNode { ev, status }),
        }
    }

    /// Sends `ev` toward station `action` along the current shortest route
    /// and schedules its next event.
    pub fn apply_action(
        &self,
        state: &mut GlobalState,
        ev: usize,
        action: usize,
    ) -> Result<(), EnvError> {
        let node = self.check_deciding(state, ev)?;
        let k = self.evcs_count();
        if action >= k {
            return Err(EnvError::ActionOutOfRange { action, k });
        }
        let target = self.graph.evcs_nodes()[action];
        let route = shortest_path(&self.graph, &state.field, Position::Node(node), target)?;
        let now = state.clock;
        let e = &mut state.evs[ev];
        e.target_evcs = Some(action);
        e.status = EvStatus::Driving;
        let event_time = if let Some(&edge) = route.edges.first() {
            let to = route.node_seq[1];
            let len = self.graph.edge(edge).length_km;
            let speed = state.field.speed(edge);
            let range = self.config.range_km(e.soc);
            let strand_at_km = (range < len).then_some(range);
            e.segment = Some(Segment {
                edge,
                to,
                start_time: now,
                speed,
                soc_at_start: e.soc,
                strand_at_km,
            });
            e.position = Position::OnEdge {
                edge,
                toward: to,
                offset_km: 0.0,
            };
            now + crate::graph::travel_minutes(strand_at_km.unwrap_or(len), speed)
        } else {
            e.segment = None;
            now
        };
        e.route = Some(route);
        state.events.push(Event {
            time: event_time,
            ev,
        });
        push_trace(state, ev, &format!("depart:{action}"), 0.0);
        Ok(())
    }

    /// Stations `ev` can reach before its battery empties.
    pub fn reachable_actions(&self, state: &GlobalState, ev: usize) -> Result<Vec<bool>, EnvError> {
        let node = self.check_deciding(state, ev)?;
        let tree = shortest_path_tree(&self.graph, &state.field, Position::Node(node))?;
        let range = self.config.range_km(state.evs[ev].soc);
        Ok(self
            .graph
            .evcs_nodes()
            .iter()
            .map(|&t| {
                tree.route_to(&self.graph, t)
                    .map(|r| r.distance <= range)
                    .unwrap_or(false)
            })
            .collect())
    }

    /// Shortest-time tree from the EV's current position.
    pub fn path_tree(&self, state: &GlobalState, ev: usize) -> Result<PathTree, EnvError> {
        let e = state.evs.get(ev).ok_or(EnvError::UnknownEv(ev))?;
        Ok(shortest_path_tree(&self.graph, &state.field, e.position)?)
    }

    /// Packs the EV's local view with the supplied recommendation vector,
    /// which must be a probability vector of length K.
    pub fn local_observation(
        &self,
        state: &GlobalState,
        ev: usize,
        ri: &[f64],
    ) -> Result<Observation, EnvError> {
        let node = self.check_deciding(state, ev)?;
        let k = self.evcs_count();
        if ri.len() != k {
            return Err(EnvError::InvalidRi(format!("length {} != K = {k}", ri.len())));
        }
        if ri.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(EnvError::InvalidRi("components must lie in [0, 1]".into()));
        }
        let sum: f64 = ri.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EnvError::InvalidRi(format!("components sum to {sum}")));
        }
        Ok(Observation {
            position: node,
            soc: state.evs[ev].soc,
            ri: ri.to_vec(),
        })
    }
}

/// Cost of driving a full edge: `alpha * price * km` for energy plus
/// `pi * minutes` for time.
pub fn edge_cost_of(cfg: &EnvConfig, price: f64, km: f64, speed_kmh: f64) -> CostBreakdown {
    CostBreakdown {
        road_energy: cfg.consumption_kwh_per_km * price * km,
        drive_time: cfg.time_cost_per_min * crate::graph::travel_minutes(km, speed_kmh),
        ..Default::default()
    }
}

/// Cost settled on reaching the chosen station: refill energy at the
/// arrival price plus `pi * wait`.
pub fn arrival_cost_of(cfg: &EnvConfig, price: f64, soc_arrive: f64, wait_min: f64) -> CostBreakdown {
    let energy = (cfg.soc_max - soc_arrive).max(0.0) * cfg.battery_kwh;
    CostBreakdown {
        charging: energy * price,
        wait_time: cfg.time_cost_per_min * wait_min,
        ..Default::default()
    }
}

fn push_trace(state: &mut GlobalState, ev: usize, event: &str, reward: f64) {
    let e = &state.evs[ev];
    state.trace.push(TraceRow {
        clock: state.clock,
        ev,
        event: event.to_string(),
        node: e.node(),
        soc: e.soc,
        reward,
        cumulative_cost: e.costs.total(),
    });
}
