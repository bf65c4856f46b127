//! Joint training of the agents and the recommendation platform.
//!
//! Parameters split three ways: the Q-network (`dqn`), the CVAE encoder
//! (`cvae`), and the decoder plus LSTM (`shared`), which both the TD loss
//! (through the recommendation it produces) and the ELBO reach. The two
//! gradients on the shared block are merged with the min-norm convex
//! combination, or simply added for the ablation.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cvae::{Cvae, CvaeConfig, CvaePass};
use crate::dqn::{td_loss, td_target, DqnConfig, QNetwork, TdSample, Transition};
use crate::env::encode_observation;
use crate::method::{Method, RiSource};
use crate::nn::ops::{dot, l2_norm, mse};
use crate::nn::{Adam, AdamConfig, NnError, ParamVector, Tensor};

/// Weight on `g_d` in the min-norm point of the segment `[g_c, g_d]`:
/// `clip((g_c - g_d) . g_c / |g_d - g_c|^2, 0, 1)`, or 0.5 when the two
/// gradients coincide.
pub fn mgda_alpha(g_d: &[f64], g_c: &[f64]) -> f64 {
    assert_eq!(g_d.len(), g_c.len(), "gradient pair lengths differ");
    let mut num = 0.0;
    let mut den = 0.0;
    for (d, c) in g_d.iter().zip(g_c) {
        let diff = c - d;
        num += diff * c;
        den += diff * diff;
    }
    if den.sqrt() < 1e-12 {
        0.5
    } else {
        (num / den).clamp(0.0, 1.0)
    }
}

/// `alpha g_d + (1 - alpha) g_c`.
pub fn combine(g_d: &[f64], g_c: &[f64], alpha: f64) -> Vec<f64> {
    g_d.iter().zip(g_c).map(|(d, c)| alpha * d + (1.0 - alpha) * c).collect()
}

/// The two gradients on the shared parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientPair {
    pub g_d: Vec<f64>,
    pub g_c: Vec<f64>,
}

impl GradientPair {
    pub fn new(g_d: Vec<f64>, g_c: Vec<f64>) -> Result<Self, NnError> {
        if g_d.len() != g_c.len() {
            return Err(NnError::ShapeMismatch {
                expected: vec![g_d.len()],
                got: vec![g_c.len()],
            });
        }
        crate::nn::check_finite(&g_d, "DQN gradient")?;
        crate::nn::check_finite(&g_c, "CVAE gradient")?;
        Ok(Self { g_d, g_c })
    }

    pub fn alpha(&self) -> f64 {
        mgda_alpha(&self.g_d, &self.g_c)
    }

    /// Combined direction and the weight used (`None` for a plain sum).
    pub fn merge(&self, balance: Balance) -> (Vec<f64>, Option<f64>) {
        match balance {
            Balance::Mgda => {
                let a = self.alpha();
                (combine(&self.g_d, &self.g_c, a), Some(a))
            }
            Balance::NaiveSum => (self.g_d.iter().zip(&self.g_c).map(|(d, c)| d + c).collect(), None),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Balance {
    Mgda,
    NaiveSum,
}

/// Segment names owned by each optimizer group.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Partition {
    pub dqn: Vec<String>,
    pub cvae: Vec<String>,
    pub shared: Vec<String>,
}

impl Partition {
    /// Every name in `all` must appear in exactly one group.
    pub fn check(&self, all: &[String]) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for name in self.dqn.iter().chain(&self.cvae).chain(&self.shared) {
            if !seen.insert(name.as_str()) {
                return Err(format!("{name} assigned twice"));
            }
        }
        let all_set: BTreeSet<&str> = all.iter().map(String::as_str).collect();
        if let Some(missing) = all_set.difference(&seen).next() {
            return Err(format!("{missing} unassigned"));
        }
        if let Some(extra) = seen.difference(&all_set).next() {
            return Err(format!("{extra} is not a parameter"));
        }
        Ok(())
    }
}

fn names(p: &ParamVector) -> Vec<String> {
    p.segments().iter().map(|s| s.name.clone()).collect()
}

/// Learning rates of the three groups.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningRates {
    pub dqn: f64,
    pub cvae: f64,
    pub shared: f64,
}

/// Per-update diagnostics; absent values did not apply to the method.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepMetrics {
    pub dqn_loss: f64,
    pub cvae_kl: Option<f64>,
    pub cvae_recon: Option<f64>,
    /// Reconstruction error of the execution-time recommendation (`z = 0`).
    pub cvae_prior_recon: Option<f64>,
    pub alpha: Option<f64>,
    pub grad_norm_d: Option<f64>,
    pub grad_norm_c: Option<f64>,
}

/// Networks, target network and optimizers of one learning method.
#[derive(Clone, Debug)]
pub struct JointTrainer {
    method: Method,
    source: RiSource,
    balance: Balance,
    gamma: f64,
    node_count: usize,
    pub q: QNetwork,
    pub target: QNetwork,
    /// Present for the LSTM-only and CVAE methods (the former uses only its LSTM).
    pub cvae: Option<Cvae>,
    opt_q: Adam,
    opt_enc: Option<Adam>,
    opt_dec: Option<Adam>,
    opt_lstm: Option<Adam>,
}

impl JointTrainer {
    pub fn new<R: Rng + ?Sized>(
        method: Method,
        node_count: usize,
        k: usize,
        dqn: &DqnConfig,
        cvae_cfg: &CvaeConfig,
        lr: LearningRates,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let source = method
            .ri_source()
            .ok_or_else(|| NnError::Config(format!("{method} has nothing to train")))?;
        let cvae = match source {
            RiSource::Condition | RiSource::Reconstruction => Some(Cvae::new(cvae_cfg, node_count, k, rng)),
            _ => None,
        };
        let ri_dim = match source {
            RiSource::Condition => cvae_cfg.cond_dim,
            _ => k,
        };
        let q = QNetwork::new(node_count, ri_dim, k, &dqn.hidden, rng);
        let target = q.clone();
        let opt_q = Adam::new(AdamConfig::with_lr(lr.dqn), q.params());
        let (opt_enc, opt_dec, opt_lstm) = match (&cvae, source) {
            (Some(c), RiSource::Reconstruction) => (
                Some(Adam::new(AdamConfig::with_lr(lr.cvae), &c.encoder.params)),
                Some(Adam::new(AdamConfig::with_lr(lr.shared), &c.decoder.params)),
                Some(Adam::new(AdamConfig::with_lr(lr.shared), &c.lstm.params)),
            ),
            (Some(c), _) => (None, None, Some(Adam::new(AdamConfig::with_lr(lr.shared), &c.lstm.params))),
            _ => (None, None, None),
        };
        Ok(Self {
            method,
            source,
            balance: if method == Method::IqlCvaeNoMgda {
                Balance::NaiveSum
            } else {
                Balance::Mgda
            },
            gamma: dqn.gamma,
            node_count,
            q,
            target,
            cvae,
            opt_q,
            opt_enc,
            opt_dec,
            opt_lstm,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn ri_source(&self) -> RiSource {
        self.source
    }

    pub fn balance(&self) -> Balance {
        self.balance
    }

    pub fn ri_dim(&self) -> usize {
        self.q.ri_dim()
    }

    pub fn input(&self, node: usize, soc: f64, ri: &[f64]) -> Vec<f64> {
        encode_observation(self.node_count, node, soc, ri)
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.q);
    }

    pub fn partition(&self) -> Partition {
        let mut p = Partition {
            dqn: names(self.q.params()),
            ..Default::default()
        };
        if let Some(c) = &self.cvae {
            match self.source {
                RiSource::Reconstruction => {
                    p.cvae = names(&c.encoder.params);
                    p.shared = [names(&c.decoder.params), names(&c.lstm.params)].concat();
                }
                _ => p.shared = names(&c.lstm.params),
            }
        }
        p
    }

    /// Names of every trainable segment the method actually uses.
    pub fn all_param_names(&self) -> Vec<String> {
        let mut all = names(self.q.params());
        if let Some(c) = &self.cvae {
            if self.source == RiSource::Reconstruction {
                all.extend(names(&c.encoder.params));
                all.extend(names(&c.decoder.params));
            }
            all.extend(names(&c.lstm.params));
        }
        all
    }

    /// `(prefix, params)` pairs for checkpointing.
    pub fn checkpoint_parts(&self) -> Vec<(&'static str, &ParamVector)> {
        let mut parts = vec![("q", self.q.params())];
        if let Some(c) = &self.cvae {
            parts.push(("lstm", &c.lstm.params));
            if self.source == RiSource::Reconstruction {
                parts.push(("enc", &c.encoder.params));
                parts.push(("dec", &c.decoder.params));
            }
        }
        parts
    }

    pub fn restore(&mut self, entries: &[(String, Tensor)]) -> Result<(), NnError> {
        crate::nn::restore(self.q.params_mut(), "q", entries)?;
        let source = self.source;
        if let Some(c) = &mut self.cvae {
            crate::nn::restore(&mut c.lstm.params, "lstm", entries)?;
            if source == RiSource::Reconstruction {
                crate::nn::restore(&mut c.encoder.params, "enc", entries)?;
                crate::nn::restore(&mut c.decoder.params, "dec", entries)?;
            }
        }
        self.sync_target();
        Ok(())
    }

    fn zero_grad(&mut self) {
        self.q.params_mut().zero_grad();
        if let Some(c) = &mut self.cvae {
            c.zero_grad();
        }
    }

    /// The recommendation the target network sees for the far end of `t`.
    fn next_ri(&self, t: &Transition) -> Result<Vec<f64>, NnError> {
        match self.source {
            RiSource::Zeros => Ok(vec![0.0; self.ri_dim()]),
            RiSource::TrueFcc => Ok(t.next_fcc_true.clone()),
            RiSource::Condition => Ok(self.cvae_ref().encode_condition(&t.next_window)?.0),
            RiSource::Reconstruction => self.cvae_ref().reconstruct_mean(&t.next_fcc_true, &t.next_window),
        }
    }

    fn cvae_ref(&self) -> &Cvae {
        self.cvae.as_ref().expect("method carries a platform")
    }

    fn td_samples(&self, batch: &[&Transition], ris: &[Vec<f64>]) -> Result<Vec<TdSample>, NnError> {
        batch
            .iter()
            .zip(ris)
            .map(|(t, ri)| {
                let next_max = if t.terminal {
                    0.0
                } else {
                    let next = self.input(t.next_node, t.next_soc, &self.next_ri(t)?);
                    self.target.q_values(&next)?.into_iter().fold(f64::NEG_INFINITY, f64::max)
                };
                Ok(TdSample {
                    input: self.input(t.node, t.soc, ri),
                    action: t.action,
                    target: td_target(t.reward, t.terminal, self.gamma, next_max),
                })
            })
            .collect()
    }

    /// One gradient update on `batch`.
    pub fn joint_step<R: Rng + ?Sized>(&mut self, batch: &[&Transition], rng: &mut R) -> Result<StepMetrics, NnError> {
        if batch.is_empty() {
            return Err(NnError::EmptySequence);
        }
        self.zero_grad();
        let ri_start = self.node_count + 1;
        match self.source {
            RiSource::Zeros | RiSource::TrueFcc => {
                let ris: Vec<Vec<f64>> = batch
                    .iter()
                    .map(|t| match self.source {
                        RiSource::Zeros => vec![0.0; self.ri_dim()],
                        _ => t.fcc_true.clone(),
                    })
                    .collect();
                let samples = self.td_samples(batch, &ris)?;
                let td = td_loss(&mut self.q, &samples)?;
                self.opt_q.step(self.q.params_mut());
                Ok(StepMetrics {
                    dqn_loss: td.loss,
                    ..Default::default()
                })
            }
            RiSource::Condition => {
                let cvae = self.cvae_ref();
                let mut caches = Vec::with_capacity(batch.len());
                let mut ris = Vec::with_capacity(batch.len());
                for t in batch {
                    let (c, cache) = cvae.encode_condition(&t.window)?;
                    ris.push(c);
                    caches.push(cache);
                }
                let samples = self.td_samples(batch, &ris)?;
                let td = td_loss(&mut self.q, &samples)?;
                let cvae = self.cvae.as_mut().expect("method carries a platform");
                for (cache, g) in caches.iter().zip(&td.input_grads) {
                    cvae.lstm.backward_params(cache, &g[ri_start..]);
                }
                let g_norm = l2_norm(&cvae.lstm.params.flatten_grad());
                self.opt_q.step(self.q.params_mut());
                let cvae = self.cvae.as_mut().expect("method carries a platform");
                self.opt_lstm.as_mut().expect("lstm optimizer").step(&mut cvae.lstm.params);
                Ok(StepMetrics {
                    dqn_loss: td.loss,
                    grad_norm_d: Some(g_norm),
                    ..Default::default()
                })
            }
            RiSource::Reconstruction => self.cvae_step(batch, rng),
        }
    }

    fn cvae_step<R: Rng + ?Sized>(&mut self, batch: &[&Transition], rng: &mut R) -> Result<StepMetrics, NnError> {
        let n = batch.len() as f64;
        let ri_start = self.node_count + 1;
        let passes: Vec<CvaePass> = batch
            .iter()
            .map(|t| self.cvae_ref().forward_sampled(&t.fcc_true, &t.window, rng))
            .collect::<Result<_, _>>()?;
        let ris: Vec<Vec<f64>> = passes.iter().map(|p| p.recon.clone()).collect();
        let zero = vec![0.0; self.cvae_ref().latent_dim()];
        let mut prior_recon = 0.0;
        for p in &passes {
            prior_recon += mse(&p.x, &self.cvae_ref().decode(&zero, &p.c)?) / n;
        }
        let samples = self.td_samples(batch, &ris)?;
        let td = td_loss(&mut self.q, &samples)?;

        let cvae = self.cvae.as_mut().expect("method carries a platform");
        for (pass, g) in passes.iter().zip(&td.input_grads) {
            cvae.backward_through_decoder(pass, &g[ri_start..]);
        }
        let g_d = shared_grad(cvae);
        cvae.decoder.params.zero_grad();
        cvae.lstm.params.zero_grad();
        for pass in &passes {
            cvae.backward_elbo(pass, 1.0 / n);
        }
        let g_c = shared_grad(cvae);
        let pair = GradientPair::new(g_d, g_c)?;
        let (merged, alpha) = pair.merge(self.balance);
        let nd = cvae.decoder.params.len();
        cvae.decoder.params.set_grad(&merged[..nd])?;
        cvae.lstm.params.set_grad(&merged[nd..])?;

        self.opt_q.step(self.q.params_mut());
        let cvae = self.cvae.as_mut().expect("method carries a platform");
        self.opt_enc.as_mut().expect("encoder optimizer").step(&mut cvae.encoder.params);
        self.opt_dec.as_mut().expect("decoder optimizer").step(&mut cvae.decoder.params);
        self.opt_lstm.as_mut().expect("lstm optimizer").step(&mut cvae.lstm.params);

        Ok(StepMetrics {
            dqn_loss: td.loss,
            cvae_kl: Some(passes.iter().map(|p| p.kl).sum::<f64>() / n),
            cvae_recon: Some(passes.iter().map(|p| p.mse).sum::<f64>() / n),
            cvae_prior_recon: Some(prior_recon),
            alpha,
            grad_norm_d: Some(l2_norm(&pair.g_d)),
            grad_norm_c: Some(l2_norm(&pair.g_c)),
        })
    }
}

/// Decoder gradient followed by LSTM gradient.
fn shared_grad(cvae: &Cvae) -> Vec<f64> {
    [cvae.decoder.params.flatten_grad(), cvae.lstm.params.flatten_grad()].concat()
}

/// `g_d . v` and `g_c . v` for the combined direction `v`, plus `|v|^2`.
pub fn directional_derivatives(pair: &GradientPair, alpha: f64) -> (f64, f64, f64) {
    let v = combine(&pair.g_d, &pair.g_c, alpha);
    (dot(&pair.g_d, &v), dot(&pair.g_c, &v), dot(&v, &v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::min_norm_by_grid;
    use proptest::prelude::*;

    #[test]
    fn orthogonal_unit_gradients_meet_in_the_middle() {
        let a = mgda_alpha(&[1.0, 0.0], &[0.0, 1.0]);
        assert_eq!(a, 0.5);
        assert_eq!(combine(&[1.0, 0.0], &[0.0, 1.0], a), vec![0.5, 0.5]);
        let (ga, _) = min_norm_by_grid(&[1.0, 0.0], &[0.0, 1.0], 1e-4);
        assert!((ga - a).abs() < 1e-12);
    }

    #[test]
    fn equal_gradients_use_the_degenerate_rule() {
        let g = [0.3, -2.0, 5.0];
        assert_eq!(mgda_alpha(&g, &g), 0.5);
        assert_eq!(combine(&g, &g, 0.5), g.to_vec());
    }

    #[test]
    fn shorter_parallel_gradient_wins() {
        let a = mgda_alpha(&[10.0, 0.0], &[1.0, 0.0]);
        assert_eq!(a, 0.0);
        assert_eq!(combine(&[10.0, 0.0], &[1.0, 0.0], a), vec![1.0, 0.0]);
        assert_eq!(min_norm_by_grid(&[10.0, 0.0], &[1.0, 0.0], 1e-4).0, 0.0);
    }

    #[test]
    fn naive_sum_adds() {
        let pair = GradientPair::new(vec![1.0, 2.0], vec![3.0, -1.0]).unwrap();
        assert_eq!(pair.merge(Balance::NaiveSum), (vec![4.0, 1.0], None));
        assert!(GradientPair::new(vec![1.0], vec![f64::NAN]).is_err());
        assert!(GradientPair::new(vec![1.0], vec![1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn interior_solution_descends_both(
            d in proptest::collection::vec(-5.0f64..5.0, 2..20),
            seed in 0u64..1000,
        ) {
            let c: Vec<f64> = d.iter().enumerate().map(|(i, x)| ((i as f64 + seed as f64) * 0.77).cos() * 3.0 - x * 0.2).collect();
            let pair = GradientPair::new(d, c).unwrap();
            let a = pair.alpha();
            prop_assert!((0.0..=1.0).contains(&a));
            let (dd, dc, vv) = directional_derivatives(&pair, a);
            prop_assert!(dd >= -1e-9 && dc >= -1e-9);
            if a > 0.0 && a < 1.0 {
                prop_assert!((dd - vv).abs() <= 1e-8 * vv.max(1e-12));
                prop_assert!((dc - vv).abs() <= 1e-8 * vv.max(1e-12));
            }
        }
    }
}
