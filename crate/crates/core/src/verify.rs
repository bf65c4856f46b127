//! Self-test suites that pit the fast paths against the slow oracles.
//!
//! Shared by `evnav selftest` and the acceptance tests.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cvae::{Cvae, CvaeConfig};
use crate::dqn::{td_loss, QNetwork, TdSample};
use crate::fcc::{expected_queue_from, PlannedArrival};
use crate::graph::{build_graph, sample_velocities, shortest_path_tree, Edge, GraphConfig, Position, RoadClass};
use crate::mgda::{combine, mgda_alpha};
use crate::nn::ops::{
    clamp_logvar, gaussian_reparam, gaussian_reparam_backward, kl_diag_gaussian, kl_diag_gaussian_grad, mse,
    mse_grad, softmax, softmax_backward, standard_normal,
};
use crate::nn::{Activation, Lstm, Mlp, ParamVector};
use crate::oracle::{bellman_ford, finite_difference, max_relative_error, min_norm_by_grid, queue_wait_by_simulation};

pub const FCC_TOLERANCE: f64 = 1e-9;
pub const ROUTING_TOLERANCE: f64 = 1e-9;
pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative gradient error.
pub const GRAD_FLOOR: f64 = 1e-6;
pub const MGDA_GRID_STEP: f64 = 1e-4;
pub const MGDA_NORM_TOLERANCE: f64 = 1e-6;
pub const MGDA_ENDPOINT_SLACK: f64 = 1e-12;
pub const MGDA_FIRST_ORDER_TOLERANCE: f64 = 1e-8;

/// Outcome of one family of randomized checks.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest error seen, in the check's own metric.
    pub worst: f64,
    pub tolerance: f64,
    pub seconds: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} cases={:<5} failures={:<3} worst={:.3e} tol={:.0e} {:.2}s",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.failures,
            self.worst,
            self.tolerance,
            self.seconds
        )
    }
}

struct Tally {
    name: String,
    cases: usize,
    failures: usize,
    worst: f64,
    tolerance: f64,
    start: Instant,
}

impl Tally {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            cases: 0,
            failures: 0,
            worst: 0.0,
            tolerance,
            start: Instant::now(),
        }
    }

    /// Records one case whose error is `err`; it passes when `err <= tolerance`.
    fn add(&mut self, err: f64) {
        self.cases += 1;
        if err.is_nan() || err > self.tolerance {
            self.failures += 1;
        }
        if err.is_nan() || err > self.worst {
            self.worst = err;
        }
    }

    /// Records one case judged by a boolean outcome.
    fn add_bool(&mut self, ok: bool, err: f64) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
        }
        self.worst = self.worst.max(err);
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name,
            cases: self.cases,
            failures: self.failures,
            worst: self.worst,
            tolerance: self.tolerance,
            seconds: self.start.elapsed().as_secs_f64(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Oracle,
    Grad,
    Mgda,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "oracle" => Ok(Suite::Oracle),
            "grad" => Ok(Suite::Grad),
            "mgda" => Ok(Suite::Mgda),
            _ => Err(format!("unknown suite {s:?}; expected oracle, grad or mgda")),
        }
    }
}

/// Runs a whole suite at its reference sizes.
pub fn run_suite(suite: Suite, seed: u64) -> Vec<CheckResult> {
    match suite {
        Suite::Oracle => fcc_oracle_checks(1000, seed)
            .into_iter()
            .chain([routing_oracle_check(500, seed)])
            .collect(),
        Suite::Grad => grad_checks(100, seed),
        Suite::Mgda => mgda_checks(1000, seed),
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

// ---------------------------------------------------------------- FCC

fn random_time(rng: &mut ChaCha8Rng) -> f64 {
    // A coarse grid half of the time so that ties actually occur.
    if rng.random_bool(0.5) {
        rng.random_range(0..12) as f64 * 5.0
    } else {
        rng.random_range(0.0..60.0)
    }
}

/// FCC queue estimates against the discrete-event queue simulation: random
/// instances, the empty-queue case, and invariance to later arrivals.
pub fn fcc_oracle_checks(instances: usize, seed: u64) -> Vec<CheckResult> {
    let mut r = rng(seed, 10);
    let mut eq = Tally::new("fcc_vs_queue_simulation", FCC_TOLERANCE);
    let mut empty = Tally::new("fcc_empty_queue_is_zero", FCC_TOLERANCE);
    let mut later = Tally::new("fcc_later_arrivals_ignored", FCC_TOLERANCE);
    for _ in 0..instances {
        let n_ev = r.random_range(1..=5);
        let n_evcs = r.random_range(1..=3);
        let spots = r.random_range(1..=2);
        let plans: Vec<PlannedArrival> = (0..n_ev)
            .map(|ev| PlannedArrival {
                ev,
                evcs: r.random_range(0..n_evcs),
                at: random_time(&mut r),
                ct: random_time(&mut r),
            })
            .collect();
        let free: Vec<Vec<f64>> = (0..n_evcs)
            .map(|_| {
                (0..spots)
                    .map(|_| if r.random_bool(0.5) { 0.0 } else { random_time(&mut r) })
                    .collect()
            })
            .collect();
        for me in &plans {
            let spot_free = &free[me.evcs];
            let fast = expected_queue_from(&plans, me, spot_free);
            let slow = queue_wait_by_simulation(&plans, me, spot_free);
            eq.add((fast - slow).abs() / slow.abs().max(1.0));

            let idle = vec![0.0; spots];
            let alone = expected_queue_from(&[], me, &idle);
            let alone_oracle = queue_wait_by_simulation(&[], me, &idle);
            empty.add(alone.abs().max(alone_oracle.abs()));

            let mut extended = plans.clone();
            let extra = r.random_range(1..=3);
            for i in 0..extra {
                extended.push(PlannedArrival {
                    ev: n_ev + i,
                    evcs: me.evcs,
                    at: me.at + r.random_range(0.001..30.0),
                    ct: random_time(&mut r),
                });
            }
            let after = expected_queue_from(&extended, me, spot_free);
            let after_oracle = queue_wait_by_simulation(&extended, me, spot_free);
            later.add((after - fast).abs().max((after_oracle - slow).abs()));
        }
    }
    vec![eq.finish(), empty.finish(), later.finish()]
}

// ---------------------------------------------------------------- routing

fn random_graph(r: &mut ChaCha8Rng) -> GraphConfig {
    let nodes = r.random_range(2..=50);
    let directed = r.random_bool(0.3);
    let mut keys = std::collections::BTreeSet::new();
    let mut edges = Vec::new();
    let mut push = |edges: &mut Vec<Edge>, r: &mut ChaCha8Rng, from: usize, to: usize| {
        let key = if directed { (from, to) } else { (from.min(to), from.max(to)) };
        if from != to && keys.insert(key) {
            edges.push(Edge {
                from,
                to,
                length_km: r.random_range(0.1..20.0),
                class: RoadClass::ALL[r.random_range(0..3)],
            });
        }
    };
    for v in 1..nodes {
        let u = r.random_range(0..v);
        push(&mut edges, r, u, v);
        if directed {
            push(&mut edges, r, v, u);
        }
    }
    let extra = r.random_range(0..=2 * nodes);
    for _ in 0..extra {
        let a = r.random_range(0..nodes);
        let b = r.random_range(0..nodes);
        push(&mut edges, r, a, b);
    }
    GraphConfig {
        nodes,
        edges,
        evcs_nodes: vec![0],
        directed,
    }
}

/// Dijkstra against Bellman-Ford on random graphs, from nodes and mid-edge.
pub fn routing_oracle_check(graphs: usize, seed: u64) -> CheckResult {
    let mut r = rng(seed, 20);
    let mut t = Tally::new("dijkstra_vs_bellman_ford", ROUTING_TOLERANCE);
    for _ in 0..graphs {
        let graph = build_graph(&random_graph(&mut r)).expect("generated graphs are valid");
        let field = sample_velocities(&graph, &mut r);
        let start = if r.random_bool(0.5) {
            Position::Node(r.random_range(0..graph.node_count()))
        } else {
            let edge = r.random_range(0..graph.edges().len());
            let e = graph.edge(edge);
            let toward = if graph.is_directed() || r.random_bool(0.5) { e.to } else { e.from };
            Position::OnEdge {
                edge,
                toward,
                offset_km: r.random_range(0.0..e.length_km),
            }
        };
        let fast = shortest_path_tree(&graph, &field, start).expect("valid start").dist;
        let slow = bellman_ford(&graph, &field, start);
        let err = fast
            .iter()
            .zip(&slow)
            .map(|(a, b)| {
                if a.is_infinite() || b.is_infinite() {
                    if a == b {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
                }
            })
            .fold(0.0, f64::max);
        t.add(err);
    }
    t.finish()
}

// ---------------------------------------------------------------- gradients

fn normal_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    standard_normal(r, n)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Finite-difference gradient of `loss` w.r.t. the parameters `pv` selects.
fn fd_params<M: Clone>(model: &M, pv: fn(&mut M) -> &mut ParamVector, loss: &dyn Fn(&M) -> f64) -> Vec<f64> {
    let mut m = model.clone();
    let base = pv(&mut m).flatten();
    finite_difference(
        |x| {
            pv(&mut m).unflatten(x).expect("same length");
            loss(&m)
        },
        &base,
        GRAD_STEP,
    )
}

fn rel(analytic: &[f64], numeric: &[f64]) -> f64 {
    max_relative_error(analytic, numeric, GRAD_FLOOR)
}

fn random_activation(r: &mut ChaCha8Rng) -> Activation {
    [Activation::Identity, Activation::Relu, Activation::Tanh, Activation::Sigmoid][r.random_range(0..4)]
}

fn dense_case(r: &mut ChaCha8Rng) -> f64 {
    let depth = r.random_range(1..=3);
    let sizes: Vec<usize> = (0..=depth).map(|_| r.random_range(1..=8)).collect();
    let mlp = Mlp::new("m", &sizes, random_activation(r), random_activation(r), r);
    let x = normal_vec(r, sizes[0]);
    let w = normal_vec(r, sizes[depth]);
    let mut m = mlp.clone();
    m.params.zero_grad();
    let (_, cache) = m.forward(&x).expect("sized input");
    let dx = m.backward(&cache, &w);
    let loss_p = |m: &Mlp| dot(&m.predict(&x).expect("sized"), &w);
    let num_p = fd_params(&mlp, |m| &mut m.params, &loss_p);
    let num_x = finite_difference(|xi| dot(&mlp.predict(xi).expect("sized"), &w), &x, GRAD_STEP);
    rel(&m.params.flatten_grad(), &num_p).max(rel(&dx, &num_x))
}

fn lstm_case(r: &mut ChaCha8Rng) -> f64 {
    let input = r.random_range(1..=5);
    let hidden = r.random_range(1..=6);
    let layers = r.random_range(1..=2);
    let t_len = r.random_range(1..=8);
    let lstm = Lstm::new("l", input, hidden, layers, r);
    let xs: Vec<Vec<f64>> = (0..t_len).map(|_| normal_vec(r, input)).collect();
    let w = normal_vec(r, hidden);
    let mut m = lstm.clone();
    m.params.zero_grad();
    let (_, cache) = m.forward_window(&xs).expect("sized window");
    let dxs = m.backward_window(&cache, &w);
    let loss_p = |m: &Lstm| dot(&m.forward_window(&xs).expect("sized").0, &w);
    let num_p = fd_params(&lstm, |m| &mut m.params, &loss_p);
    let flat_x: Vec<f64> = xs.concat();
    let num_x = finite_difference(
        |fx| {
            let window: Vec<Vec<f64>> = fx.chunks(input).map(<[f64]>::to_vec).collect();
            dot(&lstm.forward_window(&window).expect("sized").0, &w)
        },
        &flat_x,
        GRAD_STEP,
    );
    rel(&m.params.flatten_grad(), &num_p).max(rel(&dxs.concat(), &num_x))
}

struct CvaeCase {
    cvae: Cvae,
    x: Vec<f64>,
    window: Vec<Vec<f64>>,
    eps: Vec<f64>,
    latent: usize,
    k: usize,
}

fn cvae_case(r: &mut ChaCha8Rng) -> CvaeCase {
    let k = r.random_range(2..=5);
    let node_count = r.random_range(2..=4);
    let latent = r.random_range(1..=4);
    let cfg = CvaeConfig {
        latent_dim: latent,
        cond_dim: r.random_range(1..=5),
        lstm_layers: r.random_range(1..=2),
        hidden: r.random_range(2..=6),
        window: 4,
        ..CvaeConfig::default()
    };
    let cvae = Cvae::new(&cfg, node_count, k, r);
    let x = softmax(&normal_vec(r, k));
    let t_len = r.random_range(1..=4);
    let window = (0..t_len)
        .map(|_| {
            let mut v = vec![0.0; node_count + 2];
            v[r.random_range(0..node_count)] = 1.0;
            v[node_count] = r.random_range(0.0..1.0);
            v[node_count + 1] = r.random_range(0.0..1.0);
            v
        })
        .collect();
    let eps = normal_vec(r, latent);
    CvaeCase {
        cvae,
        x,
        window,
        eps,
        latent,
        k,
    }
}

/// `w . mu + KL(mu, logvar)` through the encoder network.
fn encoder_case(r: &mut ChaCha8Rng) -> f64 {
    let case = cvae_case(r);
    let c = normal_vec(r, case.cvae.cond_dim());
    let w = normal_vec(r, case.latent);
    let input = [&case.x[..], &c[..]].concat();
    let l = case.latent;
    let loss = |enc: &Mlp, inp: &[f64]| {
        let h = enc.predict(inp).expect("sized");
        let (lv, _) = clamp_logvar(&h[l..]);
        dot(&h[..l], &w) + kl_diag_gaussian(&h[..l], &lv)
    };
    let mut enc = case.cvae.encoder.clone();
    enc.params.zero_grad();
    let (h, cache) = enc.forward(&input).expect("sized");
    let (lv, mask) = clamp_logvar(&h[l..]);
    let (dmu, dlv) = kl_diag_gaussian_grad(&h[..l], &lv);
    let mut dh: Vec<f64> = dmu.iter().zip(&w).map(|(a, b)| a + b).collect();
    dh.extend(dlv.iter().zip(&mask).map(|(g, m)| if *m { *g } else { 0.0 }));
    let d_in = enc.backward(&cache, &dh);
    let num_p = fd_params(&case.cvae.encoder, |m| &mut m.params, &|m: &Mlp| loss(m, &input));
    let num_in = finite_difference(|v| loss(&case.cvae.encoder, v), &input, GRAD_STEP);
    rel(&enc.params.flatten_grad(), &num_p).max(rel(&d_in, &num_in))
}

/// `mse(x, softmax(decoder(z ++ c)))`.
fn decoder_case(r: &mut ChaCha8Rng) -> f64 {
    let case = cvae_case(r);
    let z = normal_vec(r, case.latent);
    let c = normal_vec(r, case.cvae.cond_dim());
    let input = [&z[..], &c[..]].concat();
    let x = case.x.clone();
    let loss = |dec: &Mlp, inp: &[f64]| mse(&x, &softmax(&dec.predict(inp).expect("sized")));
    let mut dec = case.cvae.decoder.clone();
    dec.params.zero_grad();
    let (logits, cache) = dec.forward(&input).expect("sized");
    let p = softmax(&logits);
    let d_in = dec.backward(&cache, &softmax_backward(&p, &mse_grad(&x, &p)));
    let num_p = fd_params(&case.cvae.decoder, |m| &mut m.params, &|m: &Mlp| loss(m, &input));
    let num_in = finite_difference(|v| loss(&case.cvae.decoder, v), &input, GRAD_STEP);
    rel(&dec.params.flatten_grad(), &num_p).max(rel(&d_in, &num_in))
}

/// `w . z + |z|^2 / 2` with `z = mu + exp(logvar / 2) eps` and `eps` frozen.
fn reparam_case(r: &mut ChaCha8Rng) -> f64 {
    let n = r.random_range(1..=8);
    let mu = normal_vec(r, n);
    let logvar: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
    let eps = normal_vec(r, n);
    let w = normal_vec(r, n);
    let loss = |mu: &[f64], lv: &[f64]| {
        let z = gaussian_reparam(mu, lv, &eps);
        dot(&z, &w) + 0.5 * dot(&z, &z)
    };
    let z = gaussian_reparam(&mu, &logvar, &eps);
    let dz: Vec<f64> = z.iter().zip(&w).map(|(a, b)| a + b).collect();
    let (dmu, dlv) = gaussian_reparam_backward(&dz, &logvar, &eps);
    let num_mu = finite_difference(|m| loss(m, &logvar), &mu, GRAD_STEP);
    let num_lv = finite_difference(|lv| loss(&mu, lv), &logvar, GRAD_STEP);
    rel(&dmu, &num_mu).max(rel(&dlv, &num_lv))
}

/// Full ELBO (KL + MSE) through LSTM, encoder and decoder with frozen noise.
fn elbo_case(r: &mut ChaCha8Rng) -> f64 {
    let case = cvae_case(r);
    let loss = |m: &Cvae| m.forward(&case.x, &case.window, &case.eps).expect("valid pass").loss();
    let mut m = case.cvae.clone();
    m.zero_grad();
    let pass = m.forward(&case.x, &case.window, &case.eps).expect("valid pass");
    m.backward_elbo(&pass, 1.0);
    let mut err: f64 = 0.0;
    err = err.max(rel(&m.lstm.params.flatten_grad(), &fd_params(&case.cvae, |c| &mut c.lstm.params, &loss)));
    err = err.max(rel(&m.encoder.params.flatten_grad(), &fd_params(&case.cvae, |c| &mut c.encoder.params, &loss)));
    err = err.max(rel(&m.decoder.params.flatten_grad(), &fd_params(&case.cvae, |c| &mut c.decoder.params, &loss)));
    err
}

/// A downstream loss on the reconstruction with `z` held fixed: only the
/// decoder and LSTM may receive gradient.
fn decoder_path_case(r: &mut ChaCha8Rng) -> f64 {
    let case = cvae_case(r);
    let w = normal_vec(r, case.k);
    let pass = case.cvae.forward(&case.x, &case.window, &case.eps).expect("valid pass");
    let z = pass.z.clone();
    let loss = |m: &Cvae| {
        let (c, _) = m.encode_condition(&case.window).expect("sized");
        dot(&m.decode(&z, &c).expect("sized"), &w)
    };
    let mut m = case.cvae.clone();
    m.zero_grad();
    m.backward_through_decoder(&pass, &w);
    let leaked = m.encoder.params.flatten_grad().iter().fold(0.0f64, |a, g| a.max(g.abs()));
    let mut err = if leaked > 0.0 { f64::INFINITY } else { 0.0 };
    err = err.max(rel(&m.lstm.params.flatten_grad(), &fd_params(&case.cvae, |c| &mut c.lstm.params, &loss)));
    err = err.max(rel(&m.decoder.params.flatten_grad(), &fd_params(&case.cvae, |c| &mut c.decoder.params, &loss)));
    err
}

/// Mean squared TD error w.r.t. Q-network weights and inputs.
fn td_case(r: &mut ChaCha8Rng) -> f64 {
    let node_count = r.random_range(2..=6);
    let ri = r.random_range(1..=4);
    let k = r.random_range(2..=4);
    let hidden: Vec<usize> = (0..r.random_range(1..=2)).map(|_| r.random_range(2..=8)).collect();
    let net = QNetwork::new(node_count, ri, k, &hidden, r);
    let batch: Vec<TdSample> = (0..r.random_range(1..=4))
        .map(|_| TdSample {
            input: normal_vec(r, net.input_dim()),
            action: r.random_range(0..k),
            target: r.random_range(-5.0..5.0),
        })
        .collect();
    let loss = |n: &QNetwork, b: &[TdSample]| {
        let mut n = n.clone();
        td_loss(&mut n, b).expect("valid batch").loss
    };
    let mut m = net.clone();
    m.params_mut().zero_grad();
    let out = td_loss(&mut m, &batch).expect("valid batch");
    let num_p = fd_params(&net, |n| n.params_mut(), &|n: &QNetwork| loss(n, &batch));
    let mut err = rel(&m.params().flatten_grad(), &num_p);
    for (i, g) in out.input_grads.iter().enumerate() {
        let num = finite_difference(
            |v| {
                let mut b = batch.clone();
                b[i].input = v.to_vec();
                loss(&net, &b)
            },
            &batch[i].input,
            GRAD_STEP,
        );
        err = err.max(rel(g, &num));
    }
    err
}

/// Central-difference checks of every differentiable block, `configs` random
/// configurations each.
pub fn grad_checks(configs: usize, seed: u64) -> Vec<CheckResult> {
    let cases: [(&str, fn(&mut ChaCha8Rng) -> f64); 8] = [
        ("grad_dense", dense_case),
        ("grad_lstm_window", lstm_case),
        ("grad_cvae_encoder", encoder_case),
        ("grad_cvae_decoder", decoder_case),
        ("grad_reparameterization", reparam_case),
        ("grad_elbo", elbo_case),
        ("grad_decoder_path", decoder_path_case),
        ("grad_td_loss", td_case),
    ];
    cases
        .iter()
        .enumerate()
        .map(|(i, (name, case))| {
            let mut r = rng(seed, 30 + i as u64);
            let mut t = Tally::new(name, GRAD_TOLERANCE);
            for _ in 0..configs {
                t.add(case(&mut r));
            }
            t.finish()
        })
        .collect()
}

// ---------------------------------------------------------------- MGDA

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Closed-form MGDA weight against a grid search, plus its clipping,
/// endpoint and first-order properties.
pub fn mgda_checks(pairs: usize, seed: u64) -> Vec<CheckResult> {
    let mut r = rng(seed, 40);
    let mut grid = Tally::new("mgda_vs_grid", MGDA_NORM_TOLERANCE);
    let mut range = Tally::new("mgda_alpha_in_unit_interval", 0.0);
    let mut endpoint = Tally::new("mgda_norm_below_endpoints", MGDA_ENDPOINT_SLACK);
    let mut first_order = Tally::new("mgda_interior_first_order", MGDA_FIRST_ORDER_TOLERANCE);
    for i in 0..pairs {
        let dim = if i % 2 == 0 { r.random_range(2..=10) } else { r.random_range(2..=1000) };
        let g_d = normal_vec(&mut r, dim);
        let g_c: Vec<f64> = match i % 10 {
            0 => g_d.clone(),
            1 => g_d.iter().map(|x| x * r.random_range(0.05..3.0)).collect(),
            _ => normal_vec(&mut r, dim),
        };
        let alpha = mgda_alpha(&g_d, &g_c);
        let v = combine(&g_d, &g_c, alpha);
        let closed = norm(&v);

        let (_, grid_sq) = min_norm_by_grid(&g_d, &g_c, MGDA_GRID_STEP);
        let grid_norm = grid_sq.sqrt();
        // The grid optimum can exceed the exact one by at most the
        // quadratic's growth over half a grid step.
        let diff: Vec<f64> = g_d.iter().zip(&g_c).map(|(a, b)| a - b).collect();
        let resolution = (closed * closed + dot(&diff, &diff) * (MGDA_GRID_STEP / 2.0).powi(2)).sqrt() - closed;
        let above = closed - grid_norm;
        let below = grid_norm - closed - resolution;
        grid.add(above.max(below).max(0.0));

        range.add_bool((0.0..=1.0).contains(&alpha), 0.0);
        endpoint.add((closed - norm(&g_d).min(norm(&g_c))).max(0.0));

        if alpha > 0.0 && alpha < 1.0 {
            let vv = dot(&v, &v);
            let dv = dot(&g_d, &v);
            let cv = dot(&g_c, &v);
            let scale = vv.max(dv.abs()).max(cv.abs()).max(f64::MIN_POSITIVE);
            first_order.add(((dv - vv).abs().max((cv - vv).abs())) / scale);
        }
    }
    vec![grid.finish(), range.finish(), endpoint.finish(), first_order.finish()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_at_reduced_size() {
        for r in fcc_oracle_checks(100, 1) {
            assert!(r.passed(), "{r}");
        }
        assert!(routing_oracle_check(50, 1).passed());
        for r in grad_checks(5, 1) {
            assert!(r.passed(), "{r}");
        }
        for r in mgda_checks(100, 1) {
            assert!(r.passed(), "{r}");
        }
    }

    #[test]
    fn suite_names_parse() {
        assert_eq!("GRAD".parse::<Suite>().unwrap(), Suite::Grad);
        assert!("speed".parse::<Suite>().is_err());
    }
}
