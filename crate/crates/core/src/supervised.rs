//! Supervised learning of ground-state amplitudes and signs with a
//! translation- and flip-symmetric convolutional network.
//!
//! Network: periodic Conv-1 (1 → W/2 channels), `cos(π·)`, periodic Conv-2
//! (W/2 → W), leaky hard tanh, mean over sites, linear read-out. No biases.
//! Both kernels have `⌊N/2⌋ + 1` taps.

use std::path::Path;

use faer::Mat;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSector, SpinConfig};
use crate::ed::EdResult;
use crate::error::{Error, Result};
use crate::linalg::shifted_solve_escalating;
use crate::sampling::{stream_rng, ExactSamplerTable};

pub const LEAKY_SLOPE: f64 = 0.01;

pub fn leaky_hard_tanh(x: f64) -> f64 {
    if x >= 1.0 {
        LEAKY_SLOPE * (x - 1.0) + 1.0
    } else if x > -1.0 {
        x
    } else {
        LEAKY_SLOPE * (x + 1.0) - 1.0
    }
}

fn leaky_hard_tanh_deriv(x: f64) -> f64 {
    if x.abs() < 1.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Network weights, flat in the order conv1 `[c][t]`, conv2 `[d][c][t]`, fc `[d]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvNet {
    n_sites: usize,
    width: usize,
    taps: usize,
    pub conv1: Vec<f64>,
    pub conv2: Vec<f64>,
    pub fc: Vec<f64>,
}

/// Reusable buffers for forward and backward passes.
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    x: Vec<f64>,
    h1: Vec<f64>,
    a1: Vec<f64>,
    h2: Vec<f64>,
    pooled: Vec<f64>,
    sort_buf: Vec<f64>,
    g_h2: Vec<f64>,
    g_a1: Vec<f64>,
}

impl ConvNet {
    pub fn zeros(n_sites: usize, width: usize) -> Result<Self> {
        if n_sites < 2 || n_sites > 64 {
            return Err(Error::InvalidSites(n_sites));
        }
        if width < 4 || width % 2 != 0 {
            return Err(Error::Config(format!("network width must be even and at least 4, got {width}")));
        }
        let taps = n_sites / 2 + 1;
        Ok(Self {
            n_sites,
            width,
            taps,
            conv1: vec![0.0; width / 2 * taps],
            conv2: vec![0.0; width * width / 2 * taps],
            fc: vec![0.0; width],
        })
    }

    /// Glorot normal: std `√(2 / (fan_in + fan_out))` per layer, with the
    /// receptive field counted in both fans of a convolution.
    pub fn glorot<R: Rng + ?Sized>(n_sites: usize, width: usize, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(n_sites, width)?;
        let k = net.taps as f64;
        let half = (width / 2) as f64;
        let w = width as f64;
        let layers: [(&mut Vec<f64>, f64, f64); 3] = [
            (&mut net.conv1, k, half * k),
            (&mut net.conv2, half * k, w * k),
            (&mut net.fc, w, 1.0),
        ];
        for (v, fan_in, fan_out) in layers {
            let d = Normal::new(0.0, (2.0 / (fan_in + fan_out)).sqrt()).expect("finite std");
            v.iter_mut().for_each(|x| *x = d.sample(rng));
        }
        Ok(net)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    /// `(W/2 + W²/2)(⌊N/2⌋ + 1) + W`.
    pub fn n_params(&self) -> usize {
        self.conv1.len() + self.conv2.len() + self.fc.len()
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(&self.conv1);
        v.extend_from_slice(&self.conv2);
        v.extend_from_slice(&self.fc);
        v
    }

    pub fn set_from_vector(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.n_params() {
            return Err(Error::Dimension(format!("expected {} parameters, got {}", self.n_params(), v.len())));
        }
        let (c1, rest) = v.split_at(self.conv1.len());
        let (c2, fc) = rest.split_at(self.conv2.len());
        self.conv1.copy_from_slice(c1);
        self.conv2.copy_from_slice(c2);
        self.fc.copy_from_slice(fc);
        Ok(())
    }

    /// `θ ← θ − η δ`.
    pub fn step(&mut self, delta: &[f64], eta: f64) -> Result<()> {
        let mut v = self.to_vector();
        if delta.len() != v.len() {
            return Err(Error::Dimension(format!("expected {} parameters, got {}", v.len(), delta.len())));
        }
        v.iter_mut().zip(delta).for_each(|(t, d)| *t -= eta * d);
        self.set_from_vector(&v)
    }

    pub fn is_finite(&self) -> bool {
        self.conv1.iter().chain(&self.conv2).chain(&self.fc).all(|v| v.is_finite())
    }

    pub fn scratch(&self) -> Scratch {
        let (n, k, w) = (self.n_sites, self.taps, self.width);
        let ext = n + k - 1;
        Scratch {
            x: vec![0.0; ext],
            h1: vec![0.0; w / 2 * n],
            a1: vec![0.0; w / 2 * ext],
            h2: vec![0.0; w * n],
            pooled: vec![0.0; w],
            sort_buf: vec![0.0; n],
            g_h2: vec![0.0; w * n],
            g_a1: vec![0.0; w / 2 * n],
        }
    }

    /// `f_θ(x)`.
    pub fn forward(&self, x: SpinConfig) -> f64 {
        self.forward_with(x, &mut self.scratch())
    }

    pub fn forward_with(&self, x: SpinConfig, s: &mut Scratch) -> f64 {
        let (n, k, half, w) = (self.n_sites, self.taps, self.width / 2, self.width);
        let ext = n + k - 1;
        for j in 0..ext {
            s.x[j] = x.spin_f64(j % n);
        }
        for c in 0..half {
            let ker = &self.conv1[c * k..(c + 1) * k];
            for i in 0..n {
                let h: f64 = ker.iter().zip(&s.x[i..i + k]).map(|(a, b)| a * b).sum();
                s.h1[c * n + i] = h;
                s.a1[c * ext + i] = (std::f64::consts::PI * h).cos();
            }
            for j in n..ext {
                s.a1[c * ext + j] = s.a1[c * ext + j - n];
            }
        }
        for d in 0..w {
            for i in 0..n {
                let mut h = 0.0;
                for c in 0..half {
                    let ker = &self.conv2[(d * half + c) * k..(d * half + c + 1) * k];
                    let a = &s.a1[c * ext + i..c * ext + i + k];
                    h += ker.iter().zip(a).map(|(p, q)| p * q).sum::<f64>();
                }
                s.h2[d * n + i] = h;
                s.sort_buf[i] = leaky_hard_tanh(h);
            }
            // Summing in sorted order makes the site mean exactly shift invariant.
            s.sort_buf.sort_unstable_by(f64::total_cmp);
            s.pooled[d] = s.sort_buf.iter().sum::<f64>() / n as f64;
        }
        self.fc.iter().zip(&s.pooled).map(|(a, b)| a * b).sum()
    }

    /// `f_θ(x)` and its gradient written to `out` in parameter order.
    pub fn gradient_with(&self, x: SpinConfig, s: &mut Scratch, out: &mut [f64]) -> f64 {
        let f = self.forward_with(x, s);
        let (n, k, half, w) = (self.n_sites, self.taps, self.width / 2, self.width);
        let ext = n + k - 1;
        let (g1, rest) = out.split_at_mut(self.conv1.len());
        let (g2, gfc) = rest.split_at_mut(self.conv2.len());
        gfc.copy_from_slice(&s.pooled);
        for d in 0..w {
            let scale = self.fc[d] / n as f64;
            for i in 0..n {
                s.g_h2[d * n + i] = scale * leaky_hard_tanh_deriv(s.h2[d * n + i]);
            }
        }
        s.g_a1.iter_mut().for_each(|v| *v = 0.0);
        for d in 0..w {
            let gh = &s.g_h2[d * n..(d + 1) * n];
            for c in 0..half {
                let base = (d * half + c) * k;
                for t in 0..k {
                    let a = &s.a1[c * ext + t..c * ext + t + n];
                    g2[base + t] = gh.iter().zip(a).map(|(p, q)| p * q).sum();
                    let kv = self.conv2[base + t];
                    for (i, g) in gh.iter().enumerate() {
                        s.g_a1[c * n + (i + t) % n] += g * kv;
                    }
                }
            }
        }
        let pi = std::f64::consts::PI;
        for c in 0..half {
            for i in 0..n {
                let h = s.h1[c * n + i];
                s.g_a1[c * n + i] *= -pi * (pi * h).sin();
            }
            let gh = &s.g_a1[c * n..(c + 1) * n];
            for t in 0..k {
                g1[c * k + t] = gh.iter().zip(&s.x[t..t + n]).map(|(p, q)| p * q).sum();
            }
        }
        f
    }

    pub fn gradient(&self, x: SpinConfig) -> (f64, Vec<f64>) {
        let mut out = vec![0.0; self.n_params()];
        let f = self.gradient_with(x, &mut self.scratch(), &mut out);
        (f, out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let net: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        let shape = Self::zeros(net.n_sites, net.width)?;
        if net.taps != shape.taps
            || net.conv1.len() != shape.conv1.len()
            || net.conv2.len() != shape.conv2.len()
            || net.fc.len() != shape.fc.len()
        {
            return Err(Error::Format("network weights do not match the declared shape".into()));
        }
        Ok(net)
    }
}

/// `f_θ` over a list of configurations.
pub fn forward_all(net: &ConvNet, configs: &[SpinConfig]) -> Vec<f64> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        configs
            .par_iter()
            .with_min_len(64)
            .map_init(|| net.scratch(), |s, &x| net.forward_with(x, s))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut s = net.scratch();
        configs.iter().map(|&x| net.forward_with(x, &mut s)).collect()
    }
}

/// Row-major `n × P` gradients and the outputs.
pub fn gradients_all(net: &ConvNet, configs: &[SpinConfig]) -> (Vec<f64>, Vec<f64>) {
    let p = net.n_params();
    let mut g = vec![0.0; configs.len() * p];
    let mut f = vec![0.0; configs.len()];
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        g.par_chunks_mut(p)
            .zip(f.par_iter_mut())
            .zip(configs.par_iter())
            .with_min_len(16)
            .for_each_init(|| net.scratch(), |s, ((row, fv), &x)| *fv = net.gradient_with(x, s, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut s = net.scratch();
        for ((row, fv), &x) in g.chunks_mut(p).zip(f.iter_mut()).zip(configs) {
            *fv = net.gradient_with(x, &mut s, row);
        }
    }
    (f, g)
}

/// Training targets taken from a ground state.
#[derive(Clone, Debug)]
pub struct SupervisedData {
    pub sector: BasisSector,
    pub configs: Vec<SpinConfig>,
    /// `|ψ(x)|²`.
    pub probs: Vec<f64>,
    /// Target signs, with the Marshall factor folded in if requested.
    pub signs: Vec<i8>,
    pub sign_rule: bool,
}

/// `(−1)^(number of down spins on even sites)`.
pub fn marshall_factor(x: SpinConfig) -> i8 {
    let mut even = 0u64;
    for i in (0..x.n_sites()).step_by(2) {
        even |= 1 << i;
    }
    let downs = (!x.bits() & even).count_ones();
    if downs % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Signs of the ground state, optionally multiplied by the Marshall factor.
/// The overall sign is chosen so the most probable configuration is positive.
pub fn marshall_sign_target(gs: &EdResult, apply_rule: bool) -> Result<Vec<i8>> {
    let configs = gs.configs()?;
    let mut signs: Vec<i8> = gs
        .vector
        .iter()
        .zip(&configs)
        .map(|(&v, &x)| {
            let s = if v < 0.0 { -1 } else { 1 };
            if apply_rule {
                s * marshall_factor(x)
            } else {
                s
            }
        })
        .collect();
    let top = (0..gs.vector.len())
        .max_by(|&a, &b| gs.vector[a].abs().total_cmp(&gs.vector[b].abs()))
        .ok_or(Error::DegenerateDistribution)?;
    if signs[top] < 0 {
        signs.iter_mut().for_each(|s| *s = -*s);
    }
    Ok(signs)
}

impl SupervisedData {
    pub fn from_ground_state(gs: &EdResult, sign_rule: bool) -> Result<Self> {
        Ok(Self {
            sector: gs.sector,
            configs: gs.configs()?,
            probs: gs.probabilities(),
            signs: marshall_sign_target(gs, sign_rule)?,
            sign_rule,
        })
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn table(&self) -> Result<ExactSamplerTable> {
        ExactSamplerTable::from_probabilities(&self.probs)
    }

    /// Fraction of configurations (by count) with a negative target.
    pub fn negative_fraction(&self) -> f64 {
        self.signs.iter().filter(|&&s| s < 0).count() as f64 / self.len() as f64
    }

    /// Probability mass on configurations with a negative target.
    pub fn negative_mass(&self) -> f64 {
        self.signs
            .iter()
            .zip(&self.probs)
            .filter(|(s, _)| **s < 0)
            .map(|(_, p)| p)
            .sum()
    }
}

fn log_sum_exp(f: &[f64]) -> f64 {
    let m = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + f.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `p_θ(x) = e^{f(x)} / Z` over the given configurations.
pub fn model_probabilities(f: &[f64]) -> Vec<f64> {
    let lz = log_sum_exp(f);
    f.iter().map(|v| (v - lz).exp()).collect()
}

fn model_table(f: &[f64]) -> Result<ExactSamplerTable> {
    let m = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = f.iter().map(|v| (v - m).exp()).collect();
    ExactSamplerTable::from_probabilities(&w)
}

/// Cross entropy `−Σ p_data f + ln Z`.
pub fn amplitude_loss_exact(net: &ConvNet, data: &SupervisedData) -> f64 {
    let f = forward_all(net, &data.configs);
    amplitude_loss_from(&f, &data.probs)
}

fn amplitude_loss_from(f: &[f64], probs: &[f64]) -> f64 {
    log_sum_exp(f) - probs.iter().zip(f).map(|(p, v)| p * v).sum::<f64>()
}

fn weighted_mean_rows(g: &[f64], p: usize, w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p];
    for (row, &wi) in g.chunks(p).zip(w) {
        out.iter_mut().zip(row).for_each(|(o, v)| *o += wi * v);
    }
    out
}

/// `−(E_data[∇f] − E_θ[∇f])` by exact sums.
pub fn amplitude_gradient_exact(net: &ConvNet, data: &SupervisedData) -> Vec<f64> {
    let p = net.n_params();
    let (f, g) = gradients_all(net, &data.configs);
    let pm = model_probabilities(&f);
    let ed = weighted_mean_rows(&g, p, &data.probs);
    let em = weighted_mean_rows(&g, p, &pm);
    em.iter().zip(&ed).map(|(m, d)| m - d).collect()
}

/// Covariance of gradient rows under weights `w` (which sum to one).
fn covariance(g: &[f64], p: usize, w: &[f64]) -> Mat<f64> {
    let mean = weighted_mean_rows(g, p, w);
    let n = w.len();
    let y = Mat::<f64>::from_fn(n, p, |r, k| w[r].sqrt() * (g[r * p + k] - mean[k]));
    let mut f = y.transpose() * &y;
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (f[(i, j)] + f[(j, i)]);
            f[(i, j)] = v;
            f[(j, i)] = v;
        }
    }
    f
}

/// Classical Fisher matrix under `p_θ` by exact sums.
pub fn fisher_exact(net: &ConvNet, configs: &[SpinConfig]) -> Mat<f64> {
    let (f, g) = gradients_all(net, configs);
    covariance(&g, net.n_params(), &model_probabilities(&f))
}

/// Minibatch estimates for one amplitude-model epoch.
#[derive(Clone, Debug)]
pub struct AmplitudeBatch {
    /// Exact cross entropy at the current parameters.
    pub loss: f64,
    pub gradient: Vec<f64>,
    pub fisher: Mat<f64>,
    /// Exact infidelity at the current parameters.
    pub infidelity: f64,
}

fn draw(table: &ExactSamplerTable, configs: &[SpinConfig], m: usize, rng: &mut ChaCha8Rng) -> Vec<SpinConfig> {
    (0..m).map(|_| configs[table.sample_index(rng)]).collect()
}

/// Draws `minibatch` configurations from the data and from `p_θ` (exactly) and
/// returns the gradient and Fisher estimates.
pub fn amplitude_loss_and_gradient(
    net: &ConvNet,
    data: &SupervisedData,
    data_table: &ExactSamplerTable,
    minibatch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<AmplitudeBatch> {
    if minibatch == 0 {
        return Err(Error::Config("minibatch must be positive".into()));
    }
    let p = net.n_params();
    let f = forward_all(net, &data.configs);
    let table = model_table(&f)?;
    let xd = draw(data_table, &data.configs, minibatch, rng);
    let xm = draw(&table, &data.configs, minibatch, rng);
    let (_, gd) = gradients_all(net, &xd);
    let (_, gm) = gradients_all(net, &xm);
    let w = vec![1.0 / minibatch as f64; minibatch];
    let ed = weighted_mean_rows(&gd, p, &w);
    let em = weighted_mean_rows(&gm, p, &w);
    Ok(AmplitudeBatch {
        loss: amplitude_loss_from(&f, &data.probs),
        gradient: em.iter().zip(&ed).map(|(m, d)| m - d).collect(),
        fisher: covariance(&gm, p, &w),
        infidelity: 1.0 - amplitude_fidelity_from(&f, &data.probs),
    })
}

/// Fisher estimate from `minibatch` exact draws of `p_θ`.
pub fn fisher_matrix(net: &ConvNet, configs: &[SpinConfig], minibatch: usize, rng: &mut ChaCha8Rng) -> Result<Mat<f64>> {
    let f = forward_all(net, configs);
    let table = model_table(&f)?;
    let xm = draw(&table, configs, minibatch.max(1), rng);
    let (_, gm) = gradients_all(net, &xm);
    Ok(covariance(&gm, net.n_params(), &vec![1.0 / xm.len() as f64; xm.len()]))
}

fn amplitude_fidelity_from(f: &[f64], probs: &[f64]) -> f64 {
    let m = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = f.iter().map(|v| (v - m).exp()).sum();
    let overlap: f64 = probs
        .iter()
        .zip(f)
        .map(|(p, v)| p.sqrt() * ((v - m) / 2.0).exp())
        .sum::<f64>()
        / z.sqrt();
    (overlap * overlap).min(1.0)
}

/// `(Σ |ψ(x)| e^{f(x)/2} / √Z)²`: the reconstructed state carries the true signs.
pub fn amplitude_fidelity(net: &ConvNet, data: &SupervisedData) -> f64 {
    amplitude_fidelity_from(&forward_all(net, &data.configs), &data.probs)
}

/// `(Σ |ψ(x)|² sgn f(x) · target(x))²`: the reconstructed state carries the true amplitudes.
pub fn sign_fidelity(net: &ConvNet, data: &SupervisedData) -> f64 {
    sign_fidelity_from(&forward_all(net, &data.configs), data)
}

fn sign_fidelity_from(f: &[f64], data: &SupervisedData) -> f64 {
    let o: f64 = f
        .iter()
        .zip(&data.probs)
        .zip(&data.signs)
        .map(|((v, p), s)| {
            let sg = if *v > 0.0 {
                1.0
            } else if *v < 0.0 {
                -1.0
            } else {
                0.0
            };
            p * sg * *s as f64
        })
        .sum();
    o * o
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross entropy of `σ(f)` against `y = [sign > 0]`.
fn bce(f: f64, sign: i8) -> f64 {
    if sign > 0 {
        softplus(-f)
    } else {
        softplus(f)
    }
}

fn bce_deriv(f: f64, sign: i8) -> f64 {
    sigmoid(f) - if sign > 0 { 1.0 } else { 0.0 }
}

/// Mean BCE and gradient over the given data indices.
pub fn sign_loss_and_gradient_on(net: &ConvNet, data: &SupervisedData, idx: &[usize]) -> (f64, Vec<f64>) {
    let p = net.n_params();
    let xs: Vec<SpinConfig> = idx.iter().map(|&k| data.configs[k]).collect();
    let (f, g) = gradients_all(net, &xs);
    let m = idx.len() as f64;
    let mut grad = vec![0.0; p];
    let mut loss = 0.0;
    for ((row, fv), &k) in g.chunks(p).zip(&f).zip(idx) {
        let s = data.signs[k];
        loss += bce(*fv, s) / m;
        let d = bce_deriv(*fv, s) / m;
        grad.iter_mut().zip(row).for_each(|(o, v)| *o += d * v);
    }
    (loss, grad)
}

/// BCE on `minibatch` draws from the data distribution.
pub fn sign_loss_and_gradient(
    net: &ConvNet,
    data: &SupervisedData,
    data_table: &ExactSamplerTable,
    minibatch: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, Vec<f64>) {
    let idx: Vec<usize> = (0..minibatch.max(1)).map(|_| data_table.sample_index(rng)).collect();
    sign_loss_and_gradient_on(net, data, &idx)
}

/// `Σ p_data BCE` and its gradient by exact sums.
pub fn sign_loss_and_gradient_exact(net: &ConvNet, data: &SupervisedData) -> (f64, Vec<f64>) {
    let p = net.n_params();
    let (f, g) = gradients_all(net, &data.configs);
    let mut grad = vec![0.0; p];
    let mut loss = 0.0;
    for (((row, fv), &s), &w) in g.chunks(p).zip(&f).zip(&data.signs).zip(&data.probs) {
        loss += w * bce(*fv, s);
        let d = w * bce_deriv(*fv, s);
        grad.iter_mut().zip(row).for_each(|(o, v)| *o += d * v);
    }
    (loss, grad)
}

#[derive(Clone, Debug, Default)]
pub struct NgdState {
    g: Option<Vec<f64>>,
    f: Option<Mat<f64>>,
}

/// `θ ← θ − η (F_n + λ I)⁻¹ g_n` with `g_n = β1 g_{n−1} + (1 − β1) g` and the
/// same recursion for `F` under `β2`. The first call takes `g` and `F` as is.
pub fn ngd_update(
    net: &mut ConvNet,
    g: &[f64],
    fisher: &Mat<f64>,
    eta: f64,
    lambda: f64,
    momenta: (Option<f64>, Option<f64>),
    state: &mut NgdState,
) -> Result<f64> {
    let p = net.n_params();
    if g.len() != p || fisher.nrows() != p || fisher.ncols() != p {
        return Err(Error::Dimension(format!("gradient or Fisher matrix does not match {p} parameters")));
    }
    let gn: Vec<f64> = match (momenta.0, state.g.take()) {
        (Some(b), Some(prev)) => prev.iter().zip(g).map(|(o, v)| b * o + (1.0 - b) * v).collect(),
        _ => g.to_vec(),
    };
    let fnm: Mat<f64> = match (momenta.1, state.f.take()) {
        (Some(b), Some(prev)) => Mat::from_fn(p, p, |i, j| b * prev[(i, j)] + (1.0 - b) * fisher[(i, j)]),
        _ => fisher.clone(),
    };
    let fc = Mat::<C64>::from_fn(p, p, |i, j| C64::new(fnm[(i, j)], 0.0));
    let gc: Vec<C64> = gn.iter().map(|&v| C64::new(v, 0.0)).collect();
    let (delta, used) = shifted_solve_escalating(fc.as_ref(), &gc, lambda)?;
    let delta: Vec<f64> = delta.iter().map(|z| z.re).collect();
    if momenta.0.is_some() {
        state.g = Some(gn);
    }
    if momenta.1.is_some() {
        state.f = Some(fnm);
    }
    net.step(&delta, eta)?;
    if !net.is_finite() {
        return Err(Error::NonFinite("network weights after update".into()));
    }
    Ok(used)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            eta: 2.5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// Adam with bias correction.
pub fn adam_update(net: &mut ConvNet, g: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    let p = net.n_params();
    if g.len() != p {
        return Err(Error::Dimension(format!("expected {p} gradient entries, got {}", g.len())));
    }
    if state.m.len() != p {
        state.m = vec![0.0; p];
        state.v = vec![0.0; p];
        state.t = 0;
    }
    state.t += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.t);
    let c2 = 1.0 - cfg.beta2.powi(state.t);
    let delta: Vec<f64> = g
        .iter()
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
        .map(|(&gi, (m, v))| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
            (*m / c1) / ((*v / c2).sqrt() + cfg.eps)
        })
        .collect();
    net.step(&delta, cfg.eta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Amplitude,
    Sign,
}

impl std::str::FromStr for TargetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "amplitude" => Ok(Self::Amplitude),
            "sign" => Ok(Self::Sign),
            _ => Err(Error::Config(format!("unknown target kind '{s}' (amplitude|sign)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NgdConfig {
    pub eta: f64,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub lambda0: f64,
    pub lambda_decay: f64,
    pub lambda_min: f64,
}

impl Default for NgdConfig {
    fn default() -> Self {
        Self {
            eta: 1e-4,
            beta1: Some(0.9),
            beta2: Some(0.999),
            lambda0: 1.0,
            lambda_decay: 0.9,
            lambda_min: 1e-3,
        }
    }
}

impl NgdConfig {
    pub fn lambda_at(&self, n: usize) -> f64 {
        (self.lambda0 * self.lambda_decay.powi(n.min(i32::MAX as usize) as i32)).max(self.lambda_min)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisedConfig {
    pub model: crate::model::ModelSpec,
    pub width: usize,
    pub kind: TargetKind,
    #[serde(default)]
    pub sign_rule: bool,
    /// Defaults to 1024 for amplitudes and 32 for signs.
    #[serde(default)]
    pub minibatch: Option<usize>,
    #[serde(default)]
    pub ngd: NgdConfig,
    #[serde(default)]
    pub adam: AdamConfig,
    pub epochs: usize,
    /// Evaluate the exact infidelity every this many epochs.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    pub seed: u64,
}

fn default_record_every() -> usize {
    10
}

impl SupervisedConfig {
    pub fn minibatch(&self) -> usize {
        self.minibatch.unwrap_or(match self.kind {
            TargetKind::Amplitude => 1024,
            TargetKind::Sign => 32,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.record_every == 0 || self.minibatch() == 0 {
            return Err(Error::Config("record_every and minibatch must be positive".into()));
        }
        ConvNet::zeros(self.model.n_sites, self.width).map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupervisedRecord {
    pub epoch: usize,
    pub loss: f64,
    pub infidelity: f64,
}

#[derive(Clone, Debug)]
pub struct SupervisedOutcome {
    pub net: ConvNet,
    pub curve: Vec<SupervisedRecord>,
    pub final_infidelity: f64,
}

pub const NET_INIT_STREAM: u64 = 2000;
pub const BATCH_STREAM: u64 = 2001;

/// Trains on `data` for `cfg.epochs` epochs, recording the exact loss and
/// infidelity before the first update, every `record_every` epochs and at the end.
pub fn train_supervised(cfg: &SupervisedConfig, data: &SupervisedData) -> Result<SupervisedOutcome> {
    cfg.validate()?;
    if data.configs.first().map(|x| x.n_sites()) != Some(cfg.model.n_sites) {
        return Err(Error::Dimension("training data does not match the chain length".into()));
    }
    let mut net = ConvNet::glorot(cfg.model.n_sites, cfg.width, &mut stream_rng(cfg.seed, NET_INIT_STREAM))?;
    let mut rng = stream_rng(cfg.seed, BATCH_STREAM);
    let table = data.table()?;
    let mb = cfg.minibatch();
    let mut curve = Vec::new();
    let record = |net: &ConvNet, epoch: usize| -> SupervisedRecord {
        let f = forward_all(net, &data.configs);
        let (loss, fid) = match cfg.kind {
            TargetKind::Amplitude => (amplitude_loss_from(&f, &data.probs), amplitude_fidelity_from(&f, &data.probs)),
            TargetKind::Sign => (
                f.iter().zip(&data.signs).zip(&data.probs).map(|((v, s), p)| p * bce(*v, *s)).sum(),
                sign_fidelity_from(&f, data),
            ),
        };
        SupervisedRecord {
            epoch,
            loss,
            infidelity: (1.0 - fid).max(0.0),
        }
    };
    let mut ngd = NgdState::default();
    let mut adam = AdamState::default();
    for epoch in 0..cfg.epochs {
        let due = epoch % cfg.record_every == 0;
        match cfg.kind {
            TargetKind::Amplitude => {
                let b = amplitude_loss_and_gradient(&net, data, &table, mb, &mut rng)?;
                if due {
                    curve.push(SupervisedRecord {
                        epoch,
                        loss: b.loss,
                        infidelity: b.infidelity.max(0.0),
                    });
                }
                ngd_update(
                    &mut net,
                    &b.gradient,
                    &b.fisher,
                    cfg.ngd.eta,
                    cfg.ngd.lambda_at(epoch),
                    (cfg.ngd.beta1, cfg.ngd.beta2),
                    &mut ngd,
                )
                .map_err(|e| e.at_epoch(epoch))?;
            }
            TargetKind::Sign => {
                if due {
                    curve.push(record(&net, epoch));
                }
                let (_, g) = sign_loss_and_gradient(&net, data, &table, mb, &mut rng);
                adam_update(&mut net, &g, &mut adam, &cfg.adam).map_err(|e| e.at_epoch(epoch))?;
            }
        }
    }
    let last = record(&net, cfg.epochs);
    let final_infidelity = last.infidelity;
    curve.push(last);
    Ok(SupervisedOutcome {
        net,
        curve,
        final_infidelity,
    })
}

/// First recorded epoch whose infidelity is below `threshold`.
pub fn epochs_to_reach(curve: &[SupervisedRecord], threshold: f64) -> Option<usize> {
    curve.iter().find(|r| r.infidelity < threshold).map(|r| r.epoch)
}
