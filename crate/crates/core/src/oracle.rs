//! Slow, independent reference implementations used to check the fast paths.
//!
//! Nothing here shares logic with the code under test beyond the edge-weight
//! arithmetic ([`travel_minutes`]), so an agreement is real evidence.

use crate::fcc::PlannedArrival;
use crate::graph::{travel_minutes, Position, TrafficGraph, VelocityField};

/// Minutes from `start` to every node by Bellman-Ford relaxation.
pub fn bellman_ford(graph: &TrafficGraph, field: &VelocityField, start: Position) -> Vec<f64> {
    let n = graph.node_count();
    let mut dist = vec![f64::INFINITY; n];
    match start {
        Position::Node(s) => dist[s] = 0.0,
        Position::OnEdge {
            edge,
            toward,
            offset_km,
        } => {
            let rest = graph.edge(edge).length_km - offset_km;
            dist[toward] = travel_minutes(rest, field.speed(edge));
        }
    }
    for _ in 0..n {
        let mut changed = false;
        for (i, e) in graph.edges().iter().enumerate() {
            let w = travel_minutes(e.length_km, field.speed(i));
            let mut relax = |a: usize, b: usize| {
                if dist[a] + w < dist[b] {
                    dist[b] = dist[a] + w;
                    changed = true;
                }
            };
            relax(e.from, e.to);
            if !graph.is_directed() {
                relax(e.to, e.from);
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum QueueEvent {
    Departure { spot: usize },
    Arrival { idx: usize },
}

/// Wait of `me` in a discrete-event simulation of a shared FIFO queue in
/// front of `spot_free.len()` chargers.
///
/// Every plan for the same station (including ones that arrive after `me`)
/// is simulated. At equal times departures are handled before arrivals and
/// simultaneous arrivals join the line in EV-id order.
pub fn queue_wait_by_simulation(plans: &[PlannedArrival], me: &PlannedArrival, spot_free: &[f64]) -> f64 {
    let mut arrivals: Vec<PlannedArrival> = plans
        .iter()
        .filter(|p| p.evcs == me.evcs && p.ev != me.ev)
        .copied()
        .collect();
    arrivals.push(*me);

    let mut events: Vec<(f64, QueueEvent)> = Vec::new();
    for (spot, &t) in spot_free.iter().enumerate() {
        events.push((t, QueueEvent::Departure { spot }));
    }
    for (idx, a) in arrivals.iter().enumerate() {
        events.push((a.at, QueueEvent::Arrival { idx }));
    }
    let mut busy = vec![true; spot_free.len()];
    let mut line: Vec<usize> = Vec::new();
    let mut start_of = vec![f64::NAN; arrivals.len()];

    loop {
        // Next event: earliest time, departures first, then lower EV id.
        let Some(pos) = (0..events.len()).min_by(|&i, &j| {
            let (ti, ei) = events[i];
            let (tj, ej) = events[j];
            ti.total_cmp(&tj).then_with(|| rank(&arrivals, ei).cmp(&rank(&arrivals, ej)))
        }) else {
            break;
        };
        let (now, ev) = events.swap_remove(pos);
        match ev {
            QueueEvent::Departure { spot } => busy[spot] = false,
            QueueEvent::Arrival { idx } => line.push(idx),
        }
        // Only start service once every event at `now` has been applied.
        if events.iter().any(|(t, _)| *t == now) {
            continue;
        }
        while !line.is_empty() {
            let Some(spot) = busy.iter().position(|b| !b) else { break };
            let idx = line.remove(0);
            busy[spot] = true;
            start_of[idx] = now;
            events.push((now + arrivals[idx].ct, QueueEvent::Departure { spot }));
        }
    }
    let mine = arrivals.len() - 1;
    start_of[mine] - me.at
}

fn rank(arrivals: &[PlannedArrival], e: QueueEvent) -> (u8, usize) {
    match e {
        QueueEvent::Departure { spot } => (0, spot),
        QueueEvent::Arrival { idx } => (1, arrivals[idx].ev),
    }
}

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn finite_difference<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + h;
            let up = f(&xp);
            xp[i] = orig - h;
            let down = f(&xp);
            xp[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over the components.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// `argmin_alpha |alpha g_d + (1 - alpha) g_c|^2` over the grid `0, step, ..., 1`.
/// Returns `(alpha, squared norm)`.
pub fn min_norm_by_grid(g_d: &[f64], g_c: &[f64], step: f64) -> (f64, f64) {
    let n = (1.0 / step).round() as usize;
    let mut best = (0.0, f64::INFINITY);
    for i in 0..=n {
        let a = i as f64 / n as f64;
        let sq: f64 = g_d
            .iter()
            .zip(g_c)
            .map(|(d, c)| {
                let v = a * d + (1.0 - a) * c;
                v * v
            })
            .sum();
        if sq < best.1 {
            best = (a, sq);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(ev: usize, at: f64, ct: f64) -> PlannedArrival {
        PlannedArrival { ev, evcs: 0, at, ct }
    }

    #[test]
    fn simulation_reproduces_hand_queues() {
        let me = plan(0, 25.0, 30.0);
        assert_eq!(queue_wait_by_simulation(&[plan(1, 10.0, 30.0)], &me, &[0.0]), 15.0);
        assert_eq!(queue_wait_by_simulation(&[], &me, &[0.0]), 0.0);
        assert_eq!(queue_wait_by_simulation(&[plan(1, 30.0, 5.0)], &me, &[0.0]), 0.0);
        assert_eq!(queue_wait_by_simulation(&[], &me, &[32.0]), 7.0);
        let two = [plan(1, 0.0, 30.0), plan(2, 1.0, 40.0)];
        assert_eq!(queue_wait_by_simulation(&two, &plan(0, 10.0, 5.0), &[0.0, 0.0]), 20.0);
    }

    #[test]
    fn finite_difference_of_a_quadratic() {
        let g = finite_difference(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, -1.0], 1e-5);
        assert!((g[0] - 4.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn grid_finds_the_midpoint() {
        let (a, sq) = min_norm_by_grid(&[1.0, 0.0], &[0.0, 1.0], 1e-4);
        assert!((a - 0.5).abs() < 1e-12);
        assert!((sq - 0.5).abs() < 1e-12);
    }
}
