//! Deep Q-learning for the EV agents: Q-network, target network, replay
//! buffer, epsilon-greedy selection and the TD loss.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{Activation, Mlp, MlpCache, NnError, ParamVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Environment steps between target-network copies.
    pub target_sync_every: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the episodes over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    /// Restrict exploration and greedy choice to stations within range.
    pub mask_unreachable: bool,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            lr: 5e-4,
            gamma: 0.99,
            batch_size: 16,
            buffer_capacity: 1_000_000,
            target_sync_every: 100,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.5,
            mask_unreachable: false,
        }
    }
}

/// `one_hot(node) ++ [soc] ++ ri  ->  Q(., a)` for each of the K stations.
#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork {
    pub mlp: Mlp,
    node_count: usize,
    ri_dim: usize,
}

impl QNetwork {
    pub fn new<R: Rng + ?Sized>(node_count: usize, ri_dim: usize, k: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![node_count + 1 + ri_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(k);
        Self {
            mlp: Mlp::new("q", &sizes, Activation::Relu, Activation::Identity, rng),
            node_count,
            ri_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.node_count + 1 + self.ri_dim
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn ri_dim(&self) -> usize {
        self.ri_dim
    }

    pub fn actions(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn params(&self) -> &ParamVector {
        &self.mlp.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.mlp.params
    }

    pub fn q_values(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.mlp.predict(input)
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, MlpCache), NnError> {
        self.mlp.forward(input)
    }

    /// Accumulates parameter gradients and returns `dL/dinput`.
    pub fn backward(&mut self, cache: &MlpCache, dq: &[f64]) -> Vec<f64> {
        self.mlp.backward(cache, dq)
    }

    /// Copies every weight from `other` (the target-network update).
    pub fn copy_from(&mut self, other: &QNetwork) {
        self.mlp
            .params
            .copy_values_from(&other.mlp.params)
            .expect("target and online networks share a layout");
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn greedy(qs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &q) in qs.iter().enumerate() {
        if q > qs[best] {
            best = i;
        }
    }
    best
}

/// Uniform action with probability `epsilon`, otherwise [`greedy`].
pub fn select_action<R: Rng + ?Sized>(qs: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..qs.len())
    } else {
        greedy(qs)
    }
}

/// As [`select_action`] restricted to `allowed`; falls back to every
/// action when nothing is allowed.
pub fn select_action_masked<R: Rng + ?Sized>(qs: &[f64], allowed: &[bool], epsilon: f64, rng: &mut R) -> usize {
    let ids: Vec<usize> = (0..qs.len()).filter(|&i| allowed[i]).collect();
    if ids.is_empty() {
        return select_action(qs, epsilon, rng);
    }
    if rng.random::<f64>() < epsilon {
        ids[rng.random_range(0..ids.len())]
    } else {
        let mut best = ids[0];
        for &i in &ids {
            if qs[i] > qs[best] {
                best = i;
            }
        }
        best
    }
}

/// Linear decay from `start` to `end` over the first `decay_episodes`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_episodes: f64,
}

impl EpsilonSchedule {
    pub fn new(cfg: &DqnConfig, episodes: usize) -> Self {
        Self {
            start: cfg.epsilon_start,
            end: cfg.epsilon_end,
            decay_episodes: (episodes as f64 * cfg.epsilon_decay_fraction).max(1.0),
        }
    }

    pub fn value(&self, episode: usize) -> f64 {
        let frac = (episode as f64 / self.decay_episodes).min(1.0);
        self.start + (self.end - self.start) * frac
    }
}

/// One agent step. Besides the local observation parts it keeps what the
/// platform needs to rebuild the recommendation for either end of the step.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub ev: usize,
    pub node: usize,
    pub soc: f64,
    /// Recommendation the agent acted on.
    pub ri: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub terminal: bool,
    pub next_node: usize,
    pub next_soc: f64,
    pub next_ri: Vec<f64>,
    /// FCC probabilities at the decision and at the next decision.
    pub fcc_true: Vec<f64>,
    pub next_fcc_true: Vec<f64>,
    /// Encoded charging requests, oldest first, ending with this EV's own.
    pub window: Vec<Vec<f64>>,
    pub next_window: Vec<Vec<f64>>,
}

/// Fixed-capacity ring of transitions.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Stores `t`, overwriting the oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `n` distinct transitions drawn uniformly (fewer if the buffer is smaller).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<&Transition> {
        let n = n.min(self.items.len());
        index::sample(rng, self.items.len(), n)
            .iter()
            .map(|i| &self.items[i])
            .collect()
    }
}

/// `r` for terminal steps, `r + gamma * max_a Q_target(o', a)` otherwise.
pub fn td_target(reward: f64, terminal: bool, gamma: f64, next_max_q: f64) -> f64 {
    if terminal {
        reward
    } else {
        reward + gamma * next_max_q
    }
}

/// One regression pair of the TD loss.
#[derive(Clone, Debug, PartialEq)]
pub struct TdSample {
    pub input: Vec<f64>,
    pub action: usize,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TdOutput {
    pub loss: f64,
    /// `dL/dinput` for every sample, in batch order.
    pub input_grads: Vec<Vec<f64>>,
}

/// Mean squared TD error over `batch`. Gradients are added to `net`'s
/// buffers (the caller zeroes them); targets are constants.
pub fn td_loss(net: &mut QNetwork, batch: &[TdSample]) -> Result<TdOutput, NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptySequence);
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut input_grads = Vec::with_capacity(batch.len());
    for s in batch {
        let (q, cache) = net.forward(&s.input)?;
        let err = q[s.action] - s.target;
        loss += err * err / n;
        let mut dq = vec![0.0; q.len()];
        dq[s.action] = 2.0 * err / n;
        input_grads.push(net.backward(&cache, &dq));
    }
    Ok(TdOutput { loss, input_grads })
}

/// Counts environment steps and copies the online weights into the target
/// network every `every` steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetSync {
    pub every: u64,
    steps: u64,
    syncs: u64,
}

impl TargetSync {
    pub fn new(every: u64) -> Self {
        assert!(every > 0, "sync period must be positive");
        Self {
            every,
            steps: 0,
            syncs: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn syncs(&self) -> u64 {
        self.syncs
    }

    /// Records one step; returns true when a copy happened.
    pub fn tick(&mut self, online: &QNetwork, target: &mut QNetwork) -> bool {
        self.steps += 1;
        if self.steps % self.every == 0 {
            target.copy_from(online);
            self.syncs += 1;
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn transition(tag: usize) -> Transition {
        Transition {
            ev: tag,
            node: 0,
            soc: 0.5,
            ri: vec![],
            action: 0,
            reward: -(tag as f64),
            terminal: false,
            next_node: 0,
            next_soc: 0.5,
            next_ri: vec![],
            fcc_true: vec![],
            next_fcc_true: vec![],
            window: vec![],
            next_window: vec![],
        }
    }

    #[test]
    fn greedy_choice_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&[1.0, 3.0, 2.0], 0.0, &mut rng), 1);
        assert_eq!(select_action(&[2.0, 2.0, 1.0], 0.0, &mut rng), 0);
        assert_eq!(select_action_masked(&[1.0, 3.0, 2.0], &[true, false, true], 0.0, &mut rng), 2);
    }

    #[test]
    fn td_targets() {
        assert!((td_target(-1.0, false, 0.99, 2.0) - 0.98).abs() < 1e-12);
        assert_eq!(td_target(-17.5, true, 0.99, 1e9), -17.5);
    }

    #[test]
    fn replay_ring_drops_the_oldest() {
        let mut buf = ReplayBuffer::new(5);
        for i in 0..6 {
            buf.push(transition(i));
        }
        assert_eq!(buf.len(), 5);
        assert!(buf.iter().all(|t| t.ev != 0));
        assert!(buf.iter().any(|t| t.ev == 5));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = buf.sample(&mut rng, 5);
        let mut ids: Vec<_> = batch.iter().map(|t| t.ev).collect();
        ids.sort();
        assert_eq!(ids, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn epsilon_decays_over_the_first_half() {
        let s = EpsilonSchedule::new(&DqnConfig::default(), 300);
        assert_eq!(s.value(0), 1.0);
        assert!((s.value(75) - 0.525).abs() < 1e-12);
        assert!((s.value(150) - 0.05).abs() < 1e-12);
        assert!((s.value(299) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn target_sync_schedule() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut online = QNetwork::new(3, 2, 2, &[8], &mut rng);
        let mut target = online.clone();
        let initial = target.params().flatten();
        let mut sync = TargetSync::new(100);
        let mut synced_at = Vec::new();
        for step in 1..=350u64 {
            // Perturb the online net so every copy is observable.
            online.params_mut().value_mut(0)[0] += 1.0;
            if sync.tick(&online, &mut target) {
                synced_at.push(step);
                assert_eq!(target.params().flatten(), online.params().flatten());
            } else if synced_at.is_empty() {
                assert_eq!(target.params().flatten(), initial);
            }
        }
        assert_eq!(synced_at, vec![100, 200, 300]);
        assert_eq!(sync.syncs(), 3);
    }

    #[test]
    fn full_exploration_is_uniform() {
        // Pearson chi-square with 3 degrees of freedom; 11.345 is the 0.99 quantile.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[select_action(&[0.0, 5.0, 1.0, 2.0], 1.0, &mut rng)] += 1;
        }
        let expected = n as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 11.345, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn loss_vanishes_on_exact_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = QNetwork::new(3, 2, 2, &[8, 8], &mut rng);
        let input = vec![0.0, 1.0, 0.0, 0.4, 0.5, 0.5];
        let q = net.q_values(&input).unwrap();
        let batch = [TdSample { input, action: 1, target: q[1] }];
        net.params_mut().zero_grad();
        let out = td_loss(&mut net, &batch).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(net.params().flatten_grad().iter().all(|g| *g == 0.0));
        assert!(td_loss(&mut net, &[]).is_err());
    }

    proptest! {
        #[test]
        fn shifting_all_q_values_keeps_the_greedy_action(
            qs in proptest::collection::vec(-100i32..100, 1..8),
            shift in -1000i32..1000,
        ) {
            // Integer-valued floats keep the shifted comparison exact, ties included.
            let qs: Vec<f64> = qs.into_iter().map(f64::from).collect();
            let shifted: Vec<f64> = qs.iter().map(|q| q + f64::from(shift)).collect();
            prop_assert_eq!(greedy(&shifted), greedy(&qs));
        }
    }
}
