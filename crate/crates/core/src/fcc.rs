//! Future-charging-competition (FCC) encoder.
//!
//! Compresses the whole fleet into one number per station: the minutes the
//! deciding EV would queue there, given every rival's current commitment.
//! Rivals that would arrive after the deciding EV never change its entry.

use serde::{Deserialize, Serialize};

use crate::env::{Env, EnvConfig, EnvError, EvState, EvStatus, GlobalState};
use crate::graph::{shortest_path_tree, GraphError, TrafficGraph, VelocityField};
use crate::nn::ops::softmax;

/// Expected queue minutes per station and their softmax.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FccTensor {
    pub raw: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Which way the raw minutes enter the softmax.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SoftmaxSign {
    /// `softmax(raw)`: longer waits get more mass.
    #[default]
    Positive,
    /// `softmax(-raw)`
    Negative,
}

impl FccTensor {
    pub fn from_raw(raw: Vec<f64>, sign: SoftmaxSign) -> Self {
        let signed: Vec<f64> = match sign {
            SoftmaxSign::Positive => raw.clone(),
            SoftmaxSign::Negative => raw.iter().map(|x| -x).collect(),
        };
        let probs = softmax(&signed);
        Self { raw, probs }
    }
}

/// A commitment to reach station `evcs` in `at` minutes and charge for `ct`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedArrival {
    pub ev: usize,
    pub evcs: usize,
    pub at: f64,
    pub ct: f64,
}

impl PlannedArrival {
    /// Queue order: earlier arrival first, ties to the lower EV id.
    fn ahead_of(&self, other: &PlannedArrival) -> bool {
        self.at < other.at || (self.at == other.at && self.ev < other.ev)
    }
}

/// Minutes along the shortest-time route from the EV's position to `target`.
pub fn arrival_time(
    graph: &TrafficGraph,
    field: &VelocityField,
    ev: &EvState,
    target: usize,
) -> Result<f64, GraphError> {
    let tree = shortest_path_tree(graph, field, ev.position)?;
    let t = tree.time_to(target);
    if t.is_finite() {
        Ok(t)
    } else {
        Err(GraphError::Unreachable { target })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChargeEstimate {
    pub minutes: f64,
    /// Projected SOC on arrival, floored at 0.
    pub soc_arrive: f64,
    /// False when the projected SOC would go negative before arrival.
    pub feasible: bool,
}

/// Charging minutes after driving `route_km` from `soc_now`.
pub fn charge_time(cfg: &EnvConfig, soc_now: f64, route_km: f64) -> ChargeEstimate {
    let projected = soc_now - cfg.consumption_kwh_per_km * route_km / cfg.battery_kwh;
    let soc_arrive = projected.max(0.0);
    ChargeEstimate {
        minutes: cfg.charge_minutes(soc_arrive),
        soc_arrive,
        feasible: projected >= 0.0,
    }
}

/// Wait for `me` at a station with `spots` idle spots, given the plans of
/// the other EVs heading there.
pub fn expected_queue(plans: &[PlannedArrival], me: &PlannedArrival, spots: usize) -> f64 {
    expected_queue_from(plans, me, &vec![0.0; spots.max(1)])
}

/// As [`expected_queue`], with each spot busy for `spot_free[s]` more minutes.
///
/// Plans ahead of `me` are served in arrival order, each taking the spot
/// that frees first; `me` then waits for the earliest remaining spot.
pub fn expected_queue_from(plans: &[PlannedArrival], me: &PlannedArrival, spot_free: &[f64]) -> f64 {
    let mut ahead: Vec<&PlannedArrival> = plans
        .iter()
        .filter(|p| p.ev != me.ev && p.evcs == me.evcs && p.ahead_of(me))
        .collect();
    ahead.sort_by(|a, b| a.at.total_cmp(&b.at).then(a.ev.cmp(&b.ev)));
    let mut free = spot_free.to_vec();
    for p in ahead {
        let s = argmin_first(&free);
        free[s] = free[s].max(p.at) + p.ct;
    }
    let earliest = free[argmin_first(&free)];
    (earliest - me.at).max(0.0)
}

fn argmin_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

/// Current commitment of every navigating EV other than `exclude`.
pub fn rival_plans(env: &Env, state: &GlobalState, exclude: usize) -> Result<Vec<PlannedArrival>, EnvError> {
    let graph = env.graph();
    let mut plans = Vec::new();
    for ev in &state.evs {
        if ev.id == exclude || !ev.status.is_navigating() {
            continue;
        }
        let Some(evcs) = ev.target_evcs else { continue };
        let target = graph.evcs_nodes()[evcs];
        let tree = shortest_path_tree(graph, &state.field, ev.position)?;
        let Ok(route) = tree.route_to(graph, target) else { continue };
        let ct = charge_time(env.config(), ev.soc, route.distance);
        plans.push(PlannedArrival {
            ev: ev.id,
            evcs,
            at: route.expected_time,
            ct: ct.minutes,
        });
    }
    Ok(plans)
}

/// FCC tensor for the EV deciding at a node: for each station, the wait it
/// would face if it headed there now.
pub fn fcc_tensor(env: &Env, state: &GlobalState, ev: usize, sign: SoftmaxSign) -> Result<FccTensor, EnvError> {
    let me = state.evs.get(ev).ok_or(EnvError::UnknownEv(ev))?;
    if me.status != EvStatus::AtNode || me.node().is_none() {
        return Err(EnvError::NotAtNode { ev, status: me.status });
    }
    let graph = env.graph();
    let cfg = env.config();
    let tree = shortest_path_tree(graph, &state.field, me.position)?;
    let plans = rival_plans(env, state, ev)?;
    let mut raw = Vec::with_capacity(graph.evcs_count());
    for (j, &node) in graph.evcs_nodes().iter().enumerate() {
        let Ok(route) = tree.route_to(graph, node) else {
            raw.push(cfg.horizon_min);
            continue;
        };
        let mine = PlannedArrival {
            ev,
            evcs: j,
            at: route.expected_time,
            ct: charge_time(cfg, me.soc, route.distance).minutes,
        };
        let spot_free: Vec<f64> = state.evcss[j]
            .spots
            .iter()
            .map(|&busy| (busy - state.clock).max(0.0))
            .collect();
        raw.push(expected_queue_from(&plans, &mine, &spot_free));
    }
    Ok(FccTensor::from_raw(raw, sign))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(ev: usize, at: f64, ct: f64) -> PlannedArrival {
        PlannedArrival { ev, evcs: 0, at, ct }
    }

    #[test]
    fn no_earlier_arrivals_means_no_wait() {
        let me = plan(0, 10.0, 30.0);
        assert_eq!(expected_queue(&[], &me, 1), 0.0);
        assert_eq!(expected_queue(&[plan(1, 11.0, 50.0)], &me, 1), 0.0);
    }

    #[test]
    fn single_predecessor_matches_closed_form() {
        let me = plan(0, 25.0, 30.0);
        let w = expected_queue(&[plan(1, 10.0, 30.0)], &me, 1);
        assert!((w - (30.0 - (25.0 - 10.0))).abs() < 1e-12);
    }

    #[test]
    fn predecessor_done_before_arrival_clamps_to_zero() {
        let me = plan(0, 50.0, 30.0);
        assert_eq!(expected_queue(&[plan(1, 10.0, 30.0)], &me, 1), 0.0);
    }

    #[test]
    fn back_to_back_predecessors_match_closed_form() {
        // no idle gaps: CT1 - (ATi - AT1) + CT2 + CT3
        let plans = [plan(1, 0.0, 20.0), plan(2, 5.0, 15.0), plan(3, 6.0, 10.0)];
        let me = plan(0, 8.0, 30.0);
        let w = expected_queue(&plans, &me, 1);
        assert!((w - (20.0 - 8.0 + 15.0 + 10.0)).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_the_lower_id() {
        let me = plan(2, 10.0, 30.0);
        assert_eq!(expected_queue(&[plan(1, 10.0, 30.0)], &me, 1), 30.0);
        let me = plan(0, 10.0, 30.0);
        assert_eq!(expected_queue(&[plan(1, 10.0, 30.0)], &me, 1), 0.0);
    }

    #[test]
    fn two_spots_absorb_one_predecessor() {
        let me = plan(0, 10.0, 30.0);
        assert_eq!(expected_queue(&[plan(1, 0.0, 30.0)], &me, 2), 0.0);
        let w = expected_queue(&[plan(1, 0.0, 30.0), plan(2, 1.0, 40.0)], &me, 2);
        assert!((w - 20.0).abs() < 1e-12);
    }

    #[test]
    fn other_stations_are_ignored() {
        let me = plan(0, 10.0, 30.0);
        let other = PlannedArrival { ev: 1, evcs: 1, at: 0.0, ct: 100.0 };
        assert_eq!(expected_queue(&[other], &me, 1), 0.0);
    }

    #[test]
    fn charge_time_examples() {
        let cfg = EnvConfig::default();
        assert!((charge_time(&cfg, 0.5, 0.0).minutes - 30.0).abs() < 1e-12);
        assert_eq!(charge_time(&cfg, 1.0, 0.0).minutes, 0.0);
        let est = charge_time(&cfg, 0.5, 20.0);
        assert!((est.soc_arrive - 0.45).abs() < 1e-12);
        assert!((est.minutes - 33.0).abs() < 1e-9);
        let empty = charge_time(&cfg, 0.01, 100.0);
        assert!(!empty.feasible);
        assert_eq!(empty.soc_arrive, 0.0);
        assert!((empty.minutes - 60.0).abs() < 1e-12);
    }

    #[test]
    fn equal_raw_entries_give_uniform_probs() {
        let t = FccTensor::from_raw(vec![0.0; 4], SoftmaxSign::Positive);
        for p in &t.probs {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn sign_flips_mass() {
        let pos = FccTensor::from_raw(vec![0.0, 5.0], SoftmaxSign::Positive);
        let neg = FccTensor::from_raw(vec![0.0, 5.0], SoftmaxSign::Negative);
        assert!(pos.probs[1] > pos.probs[0]);
        assert!(neg.probs[1] < neg.probs[0]);
    }
}
