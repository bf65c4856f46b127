//! Stacked LSTM with exact backpropagation through a stored window.
//!
//! Gate layout inside the `4H` pre-activation vector: input, forget, cell
//! candidate, output.

use rand::Rng;

use super::dense::{sigmoid, uniform_tensor};
use super::tensor::{matvec, matvec_sparse, matvec_t, outer_acc, outer_acc_sparse};
use super::{check_finite, check_len, NnError, ParamVector};

#[derive(Clone, Debug, PartialEq)]
struct LstmLayer {
    inputs: usize,
    w_x: usize,
    w_h: usize,
    b: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    pub params: ParamVector,
    input_dim: usize,
    hidden: usize,
    layers: Vec<LstmLayer>,
}

/// Hidden and cell vectors per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Activations of a forward pass over a window, `[layer][time]`.
#[derive(Clone, Debug)]
pub struct LstmCache {
    steps: Vec<Vec<StepCache>>,
}

impl LstmCache {
    pub fn len(&self) -> usize {
        self.steps.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Lstm {
    /// Weights and biases drawn from `U(-1/sqrt(H), 1/sqrt(H))`.
    pub fn new<R: Rng + ?Sized>(name: &str, input_dim: usize, hidden: usize, layers: usize, rng: &mut R) -> Self {
        let mut params = ParamVector::new();
        let bound = 1.0 / (hidden as f64).sqrt();
        let layers = (0..layers)
            .map(|l| {
                let inputs = if l == 0 { input_dim } else { hidden };
                LstmLayer {
                    inputs,
                    w_x: params.push(format!("{name}.l{l}.w_x"), uniform_tensor(rng, &[4 * hidden, inputs], bound)),
                    w_h: params.push(format!("{name}.l{l}.w_h"), uniform_tensor(rng, &[4 * hidden, hidden], bound)),
                    b: params.push(format!("{name}.l{l}.b"), uniform_tensor(rng, &[4 * hidden], bound)),
                }
            })
            .collect();
        Self {
            params,
            input_dim,
            hidden,
            layers,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn zero_state(&self) -> LstmState {
        LstmState {
            h: vec![vec![0.0; self.hidden]; self.layers.len()],
            c: vec![vec![0.0; self.hidden]; self.layers.len()],
        }
    }

    fn cell(&self, layer: &LstmLayer, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
        let hd = self.hidden;
        let mut a = self.params.value(layer.b).to_vec();
        matvec_sparse(self.params.value(layer.w_x), 4 * hd, layer.inputs, x, &mut a);
        matvec(self.params.value(layer.w_h), 4 * hd, hd, h_prev, &mut a);
        let i: Vec<f64> = a[..hd].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = a[hd..2 * hd].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = a[2 * hd..3 * hd].iter().map(|v| v.tanh()).collect();
        let o: Vec<f64> = a[3 * hd..].iter().map(|&v| sigmoid(v)).collect();
        let c: Vec<f64> = (0..hd).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let tanh_c = c.iter().map(|v| v.tanh()).collect();
        StepCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            i,
            f,
            g,
            o,
            tanh_c,
        }
    }

    fn next_state(cache: &StepCache) -> (Vec<f64>, Vec<f64>) {
        let c: Vec<f64> = (0..cache.i.len())
            .map(|k| cache.f[k] * cache.c_prev[k] + cache.i[k] * cache.g[k])
            .collect();
        let h = cache.o.iter().zip(&cache.tanh_c).map(|(o, t)| o * t).collect();
        (h, c)
    }

    /// One step from `state`; returns the top layer's hidden vector.
    pub fn step(&self, state: &LstmState, x: &[f64]) -> Result<(Vec<f64>, LstmState), NnError> {
        check_len(self.input_dim, x.len())?;
        check_finite(x, "lstm input")?;
        let mut next = state.clone();
        let mut input = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let cache = self.cell(layer, &input, &state.h[l], &state.c[l]);
            let (h, c) = Self::next_state(&cache);
            next.h[l] = h.clone();
            next.c[l] = c;
            input = h;
        }
        Ok((input, next))
    }

    /// Runs the window from the zero state; returns the final top hidden vector.
    pub fn forward_window(&self, xs: &[Vec<f64>]) -> Result<(Vec<f64>, LstmCache), NnError> {
        if xs.is_empty() {
            return Err(NnError::EmptySequence);
        }
        for x in xs {
            check_len(self.input_dim, x.len())?;
            check_finite(x, "lstm input")?;
        }
        let mut inputs: Vec<Vec<f64>> = xs.to_vec();
        let mut steps = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut h = vec![0.0; self.hidden];
            let mut c = vec![0.0; self.hidden];
            let mut layer_steps = Vec::with_capacity(inputs.len());
            let mut outputs = Vec::with_capacity(inputs.len());
            for x in &inputs {
                let cache = self.cell(layer, x, &h, &c);
                let (h2, c2) = Self::next_state(&cache);
                h = h2;
                c = c2;
                outputs.push(h.clone());
                layer_steps.push(cache);
            }
            steps.push(layer_steps);
            inputs = outputs;
        }
        let last = inputs.pop().expect("non-empty window");
        Ok((last, LstmCache { steps }))
    }

    /// Backpropagates `dh_final` (gradient w.r.t. the returned hidden
    /// vector) through the whole window. Accumulates parameter gradients and
    /// returns the gradient for each input step.
    pub fn backward_window(&mut self, cache: &LstmCache, dh_final: &[f64]) -> Vec<Vec<f64>> {
        self.backward(cache, dh_final, true)
    }

    /// Like [`Lstm::backward_window`] without the input gradients.
    pub fn backward_params(&mut self, cache: &LstmCache, dh_final: &[f64]) {
        self.backward(cache, dh_final, false);
    }

    fn backward(&mut self, cache: &LstmCache, dh_final: &[f64], input_grads: bool) -> Vec<Vec<f64>> {
        let hd = self.hidden;
        let t_len = cache.len();
        let mut dh_out = vec![vec![0.0; hd]; t_len];
        dh_out[t_len - 1].copy_from_slice(dh_final);
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let mut dx_seq = vec![vec![0.0; layer.inputs]; t_len];
            let mut dh_next = vec![0.0; hd];
            let mut dc_next = vec![0.0; hd];
            for t in (0..t_len).rev() {
                let s = &cache.steps[l][t];
                let mut da = vec![0.0; 4 * hd];
                for k in 0..hd {
                    let dh = dh_out[t][k] + dh_next[k];
                    let dc = dc_next[k] + dh * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
                    let d_o = dh * s.tanh_c[k];
                    let d_i = dc * s.g[k];
                    let d_g = dc * s.i[k];
                    let d_f = dc * s.c_prev[k];
                    dc_next[k] = dc * s.f[k];
                    da[k] = d_i * s.i[k] * (1.0 - s.i[k]);
                    da[hd + k] = d_f * s.f[k] * (1.0 - s.f[k]);
                    da[2 * hd + k] = d_g * (1.0 - s.g[k] * s.g[k]);
                    da[3 * hd + k] = d_o * s.o[k] * (1.0 - s.o[k]);
                }
                outer_acc_sparse(self.params.grad_mut(layer.w_x), 4 * hd, layer.inputs, &da, &s.x);
                outer_acc(self.params.grad_mut(layer.w_h), 4 * hd, hd, &da, &s.h_prev);
                for (gb, d) in self.params.grad_mut(layer.b).iter_mut().zip(&da) {
                    *gb += d;
                }
                if l > 0 || input_grads {
                    matvec_t(self.params.value(layer.w_x), 4 * hd, layer.inputs, &da, &mut dx_seq[t]);
                }
                dh_next.fill(0.0);
                matvec_t(self.params.value(layer.w_h), 4 * hd, hd, &da, &mut dh_next);
            }
            dh_out = dx_seq;
        }
        dh_out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_keep_hidden_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut lstm = Lstm::new("l", 3, 4, 2, &mut rng);
        let n = lstm.params.len();
        lstm.params.unflatten(&vec![0.0; n]).unwrap();
        let (h, _) = lstm.forward_window(&[vec![1.0, -1.0, 0.5], vec![0.0; 3]]).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn running_steps_match_window_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lstm = Lstm::new("l", 3, 5, 2, &mut rng);
        let xs: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let (h_win, _) = lstm.forward_window(&xs).unwrap();
        let mut state = lstm.zero_state();
        let mut h = Vec::new();
        for x in &xs {
            let (out, next) = lstm.step(&state, x).unwrap();
            h = out;
            state = next;
        }
        assert_eq!(h, h_win);
    }

    #[test]
    fn empty_window_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lstm = Lstm::new("l", 3, 4, 2, &mut rng);
        assert!(matches!(lstm.forward_window(&[]), Err(NnError::EmptySequence)));
    }
}
