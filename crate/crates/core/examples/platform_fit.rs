//! Fits the recommendation platform offline on `(request window, FCC)` pairs
//! collected under a noisy shortest-path policy, and reports how well the
//! execution-time recommendation (prior mean) predicts the true FCC.
//!
//! `cargo run --release --example platform_fit -- [episodes] [steps] [lr_shared] [lr_cvae] [explore]`

use evnav_core::cvae::{Cvae, CvaeConfig};
use evnav_core::env::{Env, EnvConfig};
use evnav_core::fcc::SoftmaxSign;
use evnav_core::harness::rollout::{run_episode, Agent, Decision, DecisionContext};
use evnav_core::harness::{shortest_path_policy, HarnessError, RunConfig};
use evnav_core::method::Method;
use evnav_core::nn::{Adam, AdamConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Sample = (Vec<f64>, Vec<Vec<f64>>);

struct Collector {
    rng: ChaCha8Rng,
    explore: f64,
    samples: Vec<Sample>,
}

impl Agent for Collector {
    fn act(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision, HarnessError> {
        self.samples.push((ctx.fcc.probs.clone(), ctx.window.to_vec()));
        let k = ctx.arrival_minutes.len();
        let action = if self.rng.random_bool(self.explore) {
            self.rng.random_range(0..k)
        } else {
            shortest_path_policy(ctx.arrival_minutes)
        };
        Ok(Decision {
            action,
            ri: ctx.fcc.probs.clone(),
            condition: None,
        })
    }
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let episodes = arg(0, 2000.0) as u64;
    let steps = arg(1, 10_000.0) as usize;
    let run = RunConfig::desk_two_ev(Method::IqlCvaeMgda);
    let lr_shared = arg(2, run.hyper.lr_shared);
    let lr_cvae = arg(3, run.hyper.lr_cvae);
    let env_cfg: EnvConfig = run.env.clone();
    let env = Env::new(env_cfg).expect("valid config");
    let cfg: CvaeConfig = run.hyper.cvae.clone();
    let mut collector = Collector {
        rng: ChaCha8Rng::seed_from_u64(1),
        explore: arg(4, 0.3),
        samples: Vec::new(),
    };
    for seed in 0..episodes {
        run_episode(&env, seed, &mut collector, SoftmaxSign::Positive, cfg.window, false).expect("episode");
    }
    let data = collector.samples;
    let split = data.len() * 4 / 5;
    let (train, test) = data.split_at(split);
    let k = env.evcs_count();
    let mean: Vec<f64> = (0..k)
        .map(|j| train.iter().map(|(x, _)| x[j]).sum::<f64>() / train.len() as f64)
        .collect();
    let baseline = test.iter().map(|(x, _)| mse(x, &mean)).sum::<f64>() / test.len() as f64;
    println!("{} train / {} test samples, mean predictor {baseline:.4}", train.len(), test.len());

    let prior_mse = |c: &Cvae| {
        test.iter()
            .map(|(x, w)| mse(x, &c.prior_recommendation(w).expect("window")))
            .sum::<f64>()
            / test.len() as f64
    };
    if let Ok(path) = std::env::var("PLATFORM_CHECKPOINT") {
        let trainer = evnav_core::harness::eval::load_trainer(&run, path.as_ref()).expect("checkpoint");
        let c = trainer.cvae.as_ref().expect("a CVAE method");
        println!("checkpoint prior-path mse {:.4}", prior_mse(c));
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut cvae = Cvae::new(&cfg, env.graph().node_count(), k, &mut rng);
    let mut opt_enc = Adam::new(AdamConfig::with_lr(lr_cvae), &cvae.encoder.params);
    let mut opt_dec = Adam::new(AdamConfig::with_lr(lr_shared), &cvae.decoder.params);
    let mut opt_lstm = Adam::new(AdamConfig::with_lr(lr_shared), &cvae.lstm.params);
    let batch = run.hyper.dqn.batch_size;
    let (mut kl, mut rec) = (0.0, 0.0);
    for step in 1..=steps {
        cvae.zero_grad();
        for _ in 0..batch {
            let (x, w) = &train[rng.random_range(0..train.len())];
            let pass = cvae.forward_sampled(x, w, &mut rng).expect("pass");
            kl += pass.kl / batch as f64;
            rec += pass.mse / batch as f64;
            cvae.backward_elbo(&pass, 1.0 / batch as f64);
        }
        opt_enc.step(&mut cvae.encoder.params);
        opt_dec.step(&mut cvae.decoder.params);
        opt_lstm.step(&mut cvae.lstm.params);
        if step % 1000 == 0 {
            let prior = prior_mse(&cvae);
            println!(
                "step {step:>6}: train kl {:.4} recon {:.4}, test prior-path mse {prior:.4}",
                kl / 1000.0,
                rec / 1000.0
            );
            kl = 0.0;
            rec = 0.0;
        }
    }
}
