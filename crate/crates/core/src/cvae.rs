//! Recommendation platform: an LSTM turns the recent charging-request
//! history into a condition label `c`, and a conditional VAE learns to
//! reproduce FCC tensors from `c`. At execution time only the requests are
//! available, so the decoder runs from the prior mean.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::NodeId;
use crate::nn::ops::{
    clamp_logvar, gaussian_reparam, gaussian_reparam_backward, kl_diag_gaussian, kl_diag_gaussian_grad, mse,
    mse_grad, softmax, softmax_backward, standard_normal,
};
use crate::nn::{Activation, Lstm, LstmCache, LstmState, Mlp, MlpCache, NnError, ParamVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvaeConfig {
    pub latent_dim: usize,
    /// LSTM hidden size, which is also the size of `c`.
    pub cond_dim: usize,
    pub lstm_layers: usize,
    pub hidden: usize,
    /// Requests per training window.
    pub window: usize,
    /// Sample `z ~ N(0, I)` at execution instead of using `z = 0`.
    pub ri_sample_prior: bool,
    pub runtime_context: RuntimeContext,
}

/// How the execution-time platform turns the request stream into `c`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuntimeContext {
    /// Re-encode the last `window` requests from a zero state, as in training.
    #[default]
    Window,
    /// Carry one LSTM state across the whole episode.
    Running,
}

impl Default for CvaeConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8,
            cond_dim: 32,
            lstm_layers: 2,
            hidden: 64,
            window: 8,
            ri_sample_prior: false,
            runtime_context: RuntimeContext::Window,
        }
    }
}

/// What an EV tells the platform when it reaches a node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargingRequest {
    pub node: NodeId,
    pub soc: f64,
    /// Clock divided by the horizon, capped at 1.
    pub time: f64,
}

impl ChargingRequest {
    pub fn new(node: NodeId, soc: f64, clock: f64, horizon: f64) -> Self {
        Self {
            node,
            soc: soc.clamp(0.0, 1.0),
            time: (clock / horizon).clamp(0.0, 1.0),
        }
    }

    /// `one_hot(node) ++ [soc, time]`.
    pub fn encode(&self, node_count: usize) -> Vec<f64> {
        let mut v = vec![0.0; node_count + 2];
        v[self.node] = 1.0;
        v[node_count] = self.soc;
        v[node_count + 1] = self.time;
        v
    }
}

pub fn request_dim(node_count: usize) -> usize {
    node_count + 2
}

/// LSTM condition encoder, CVAE encoder `q(z | x, c)` and decoder `p(x | z, c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cvae {
    pub lstm: Lstm,
    pub encoder: Mlp,
    pub decoder: Mlp,
    k: usize,
    latent: usize,
}

/// Everything one forward pass produced, kept for the backward passes.
#[derive(Clone, Debug)]
pub struct CvaePass {
    pub x: Vec<f64>,
    pub c: Vec<f64>,
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    pub eps: Vec<f64>,
    pub z: Vec<f64>,
    /// Reconstruction `x'` (a probability vector).
    pub recon: Vec<f64>,
    pub kl: f64,
    pub mse: f64,
    lstm_cache: LstmCache,
    enc_cache: MlpCache,
    dec_cache: MlpCache,
    logvar_mask: Vec<bool>,
}

impl CvaePass {
    pub fn loss(&self) -> f64 {
        self.kl + self.mse
    }
}

/// Checks that `x` is a probability vector of length `k`.
pub fn check_distribution(x: &[f64], k: usize) -> Result<(), NnError> {
    if x.len() != k {
        return Err(NnError::ShapeMismatch {
            expected: vec![k],
            got: vec![x.len()],
        });
    }
    let sum: f64 = x.iter().sum();
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) || (sum - 1.0).abs() > 1e-9 {
        return Err(NnError::NotADistribution);
    }
    Ok(())
}

impl Cvae {
    pub fn new<R: Rng + ?Sized>(cfg: &CvaeConfig, node_count: usize, k: usize, rng: &mut R) -> Self {
        let lstm = Lstm::new("lstm", request_dim(node_count), cfg.cond_dim, cfg.lstm_layers, rng);
        let encoder = Mlp::new(
            "enc",
            &[k + cfg.cond_dim, cfg.hidden, 2 * cfg.latent_dim],
            Activation::Relu,
            Activation::Identity,
            rng,
        );
        let decoder = Mlp::new(
            "dec",
            &[cfg.latent_dim + cfg.cond_dim, cfg.hidden, k],
            Activation::Relu,
            Activation::Identity,
            rng,
        );
        Self {
            lstm,
            encoder,
            decoder,
            k,
            latent: cfg.latent_dim,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn latent_dim(&self) -> usize {
        self.latent
    }

    pub fn cond_dim(&self) -> usize {
        self.lstm.hidden()
    }

    /// `c` for a window of encoded requests, from the zero state.
    pub fn encode_condition(&self, window: &[Vec<f64>]) -> Result<(Vec<f64>, LstmCache), NnError> {
        self.lstm.forward_window(window)
    }

    /// `(mu, logvar)` with the log-variance clamped.
    pub fn encode(&self, x: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        check_distribution(x, self.k)?;
        let (h, _) = self.encoder.forward(&[x, c].concat())?;
        let (lv, _) = clamp_logvar(&h[self.latent..]);
        Ok((h[..self.latent].to_vec(), lv))
    }

    /// `x' = softmax(decoder(z ++ c))`.
    pub fn decode(&self, z: &[f64], c: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(softmax(&self.decoder.predict(&[z, c].concat())?))
    }

    /// Full pass for one `(x, window)` pair with the supplied noise.
    pub fn forward(&self, x: &[f64], window: &[Vec<f64>], eps: &[f64]) -> Result<CvaePass, NnError> {
        check_distribution(x, self.k)?;
        let (c, lstm_cache) = self.encode_condition(window)?;
        let (h, enc_cache) = self.encoder.forward(&[x, &c[..]].concat())?;
        let mu = h[..self.latent].to_vec();
        let (logvar, logvar_mask) = clamp_logvar(&h[self.latent..]);
        let z = gaussian_reparam(&mu, &logvar, eps);
        let (logits, dec_cache) = self.decoder.forward(&[&z[..], &c[..]].concat())?;
        let recon = softmax(&logits);
        Ok(CvaePass {
            kl: kl_diag_gaussian(&mu, &logvar),
            mse: mse(x, &recon),
            x: x.to_vec(),
            c,
            mu,
            logvar,
            eps: eps.to_vec(),
            z,
            recon,
            lstm_cache,
            enc_cache,
            dec_cache,
            logvar_mask,
        })
    }

    /// Forward pass with fresh noise.
    pub fn forward_sampled<R: Rng + ?Sized>(&self, x: &[f64], window: &[Vec<f64>], rng: &mut R) -> Result<CvaePass, NnError> {
        let eps = standard_normal(rng, self.latent);
        self.forward(x, window, &eps)
    }

    /// Reconstruction with `z = mu`; no caches, no gradients.
    pub fn reconstruct_mean(&self, x: &[f64], window: &[Vec<f64>]) -> Result<Vec<f64>, NnError> {
        let (c, _) = self.encode_condition(window)?;
        let (mu, _) = self.encode(x, &c)?;
        self.decode(&mu, &c)
    }

    /// Decoder from the prior mean: the execution-time recommendation for a window.
    pub fn prior_recommendation(&self, window: &[Vec<f64>]) -> Result<Vec<f64>, NnError> {
        let (c, _) = self.encode_condition(window)?;
        self.decode(&vec![0.0; self.latent], &c)
    }

    /// Decoder and condition backward from `dL/dx'`; returns `(dL/dz, dL/dc)`.
    fn decoder_backward(&mut self, pass: &CvaePass, d_recon: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d_logits = softmax_backward(&pass.recon, d_recon);
        let d_in = self.decoder.backward(&pass.dec_cache, &d_logits);
        (d_in[..self.latent].to_vec(), d_in[self.latent..].to_vec())
    }

    /// Gradient of `weight * (KL + MSE)` into the LSTM, encoder and decoder.
    pub fn backward_elbo(&mut self, pass: &CvaePass, weight: f64) {
        let d_recon: Vec<f64> = mse_grad(&pass.x, &pass.recon).iter().map(|g| g * weight).collect();
        let (dz, mut dc) = self.decoder_backward(pass, &d_recon);
        let (dmu_r, dlv_r) = gaussian_reparam_backward(&dz, &pass.logvar, &pass.eps);
        let (dmu_kl, dlv_kl) = kl_diag_gaussian_grad(&pass.mu, &pass.logvar);
        let mut dh = Vec::with_capacity(2 * self.latent);
        dh.extend(dmu_r.iter().zip(&dmu_kl).map(|(a, b)| a + weight * b));
        dh.extend(
            dlv_r
                .iter()
                .zip(&dlv_kl)
                .zip(&pass.logvar_mask)
                .map(|((a, b), &pass_through)| if pass_through { a + weight * b } else { 0.0 }),
        );
        let d_enc_in = self.encoder.backward(&pass.enc_cache, &dh);
        for (d, e) in dc.iter_mut().zip(&d_enc_in[self.k..]) {
            *d += e;
        }
        self.lstm.backward_params(&pass.lstm_cache, &dc);
    }

    /// Gradient of a downstream loss that consumed `x'`, with `z` treated
    /// as a constant: only the decoder and the LSTM receive it.
    pub fn backward_through_decoder(&mut self, pass: &CvaePass, d_recon: &[f64]) {
        let (_, dc) = self.decoder_backward(pass, d_recon);
        self.lstm.backward_params(&pass.lstm_cache, &dc);
    }

    pub fn zero_grad(&mut self) {
        self.lstm.params.zero_grad();
        self.encoder.params.zero_grad();
        self.decoder.params.zero_grad();
    }

    /// Decoder and LSTM parameters, in that order: the part of the model
    /// that both the agents' loss and the ELBO reach.
    pub fn shared_params(&self) -> [&ParamVector; 2] {
        [&self.decoder.params, &self.lstm.params]
    }
}

/// The platform as deployed: it sees only the stream of charging requests.
#[derive(Clone, Debug)]
pub struct RuntimePlatform {
    state: LstmState,
    history: VecDeque<Vec<f64>>,
    node_count: usize,
    window: usize,
    context: RuntimeContext,
    sample_prior: bool,
}

impl RuntimePlatform {
    pub fn new(cvae: &Cvae, cfg: &CvaeConfig, node_count: usize) -> Self {
        Self {
            state: cvae.lstm.zero_state(),
            history: VecDeque::with_capacity(cfg.window),
            node_count,
            window: cfg.window.max(1),
            context: cfg.runtime_context,
            sample_prior: cfg.ri_sample_prior,
        }
    }

    pub fn reset(&mut self, cvae: &Cvae) {
        self.state = cvae.lstm.zero_state();
        self.history.clear();
    }

    /// Records `request` and returns the condition label that follows it.
    pub fn observe(&mut self, cvae: &Cvae, request: &ChargingRequest) -> Result<Vec<f64>, NnError> {
        let x = request.encode(self.node_count);
        match self.context {
            RuntimeContext::Running => {
                let (c, next) = cvae.lstm.step(&self.state, &x)?;
                self.state = next;
                Ok(c)
            }
            RuntimeContext::Window => {
                if self.history.len() == self.window {
                    self.history.pop_front();
                }
                self.history.push_back(x);
                let window: Vec<Vec<f64>> = self.history.iter().cloned().collect();
                Ok(cvae.encode_condition(&window)?.0)
            }
        }
    }

    /// Recommendation for the EV that sent `request`.
    pub fn generate_ri<R: Rng + ?Sized>(
        &mut self,
        cvae: &Cvae,
        request: &ChargingRequest,
        rng: &mut R,
    ) -> Result<Vec<f64>, NnError> {
        Ok(self.recommend(cvae, request, rng)?.1)
    }

    /// `(c, RI)` for the EV that sent `request`.
    pub fn recommend<R: Rng + ?Sized>(
        &mut self,
        cvae: &Cvae,
        request: &ChargingRequest,
        rng: &mut R,
    ) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        let c = self.observe(cvae, request)?;
        let z = if self.sample_prior {
            standard_normal(rng, cvae.latent_dim())
        } else {
            vec![0.0; cvae.latent_dim()]
        };
        let ri = cvae.decode(&z, &c)?;
        Ok((c, ri))
    }
}
