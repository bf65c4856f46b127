//! Stateless differentiable operations.

use rand::Rng;
use rand_distr::StandardNormal;

pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

/// Numerically stable softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Vector-Jacobian product of softmax given its output `p`.
pub fn softmax_backward(p: &[f64], dy: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(dy).map(|(a, b)| a * b).sum();
    p.iter().zip(dy).map(|(pi, gi)| pi * (gi - dot)).collect()
}

/// `KL(N(mu, diag(exp(logvar))) || N(0, I))`.
pub fn kl_diag_gaussian(mu: &[f64], logvar: &[f64]) -> f64 {
    -0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
        .sum::<f64>()
}

/// Gradients of [`kl_diag_gaussian`] w.r.t. `mu` and `logvar`.
pub fn kl_diag_gaussian_grad(mu: &[f64], logvar: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dmu = mu.to_vec();
    let dlv = logvar.iter().map(|lv| 0.5 * (lv.exp() - 1.0)).collect();
    (dmu, dlv)
}

/// Clamps log-variances to `[LOGVAR_MIN, LOGVAR_MAX]`; the mask marks
/// entries that pass gradient through.
pub fn clamp_logvar(raw: &[f64]) -> (Vec<f64>, Vec<bool>) {
    let clamped = raw.iter().map(|v| v.clamp(LOGVAR_MIN, LOGVAR_MAX)).collect();
    let mask = raw
        .iter()
        .map(|v| (LOGVAR_MIN..=LOGVAR_MAX).contains(v))
        .collect();
    (clamped, mask)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// `z = mu + exp(logvar / 2) * eps` for a supplied noise draw.
pub fn gaussian_reparam(mu: &[f64], logvar: &[f64], eps: &[f64]) -> Vec<f64> {
    mu.iter()
        .zip(logvar)
        .zip(eps)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect()
}

/// Gradients w.r.t. `mu` and `logvar` with the noise held fixed.
pub fn gaussian_reparam_backward(dz: &[f64], logvar: &[f64], eps: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dmu = dz.to_vec();
    let dlv = dz
        .iter()
        .zip(logvar)
        .zip(eps)
        .map(|((g, lv), e)| g * e * 0.5 * (0.5 * lv).exp())
        .collect();
    (dmu, dlv)
}

/// Mean squared error over components.
pub fn mse(target: &[f64], pred: &[f64]) -> f64 {
    let n = target.len() as f64;
    target.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n
}

/// `d mse / d pred`.
pub fn mse_grad(target: &[f64], pred: &[f64]) -> Vec<f64> {
    let n = target.len() as f64;
    target.iter().zip(pred).map(|(a, b)| 2.0 * (b - a) / n).collect()
}

pub fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
