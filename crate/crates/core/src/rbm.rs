//! Complex RBM amplitudes `ψ(x) = exp(Σ_i a_i x_i) Π_j 2 cosh χ_j` with
//! `χ_j = Σ_i w_ij x_i + b_j`.

use std::f64::consts::{LN_2, PI};
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::basis::{bit_positions, SpinConfig};
use crate::error::{Error, Result};
use crate::model::Connections;

const TWO_PI: f64 = 2.0 * PI;

/// Maps an imaginary part into `(-π, π]`.
#[inline]
pub(crate) fn wrap_phase(im: f64) -> f64 {
    if im > -PI && im <= PI {
        return im;
    }
    let r = im.rem_euclid(TWO_PI);
    if r > PI {
        r - TWO_PI
    } else {
        r
    }
}

/// `log cosh z`, finite for any finite `z` away from the zeros of cosh.
#[inline]
pub fn log_cosh(z: C64) -> C64 {
    let zh = if z.re < 0.0 { -z } else { z };
    let t = (-2.0 * zh).exp();
    let v = zh + (C64::new(1.0, 0.0) + t).ln() - LN_2;
    C64::new(v.re, wrap_phase(v.im))
}

/// `tanh z` without overflow for large `|Re z|`.
#[inline]
pub fn tanh_c(z: C64) -> C64 {
    let (s, zh) = if z.re < 0.0 { (-1.0, -z) } else { (1.0, z) };
    let t = (-2.0 * zh).exp();
    s * (C64::new(1.0, 0.0) - t) / (C64::new(1.0, 0.0) + t)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RbmParams {
    n_visible: usize,
    n_hidden: usize,
    pub a: Vec<C64>,
    pub b: Vec<C64>,
    /// Row-major `w[i * M + j]`.
    pub w: Vec<C64>,
}

impl RbmParams {
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        let z = C64::new(0.0, 0.0);
        Self {
            n_visible,
            n_hidden,
            a: vec![z; n_visible],
            b: vec![z; n_hidden],
            w: vec![z; n_visible * n_hidden],
        }
    }

    /// Real and imaginary parts i.i.d. `N(0, σ²)`, `M = α N`.
    pub fn init_random<R: Rng + ?Sized>(
        n_visible: usize,
        alpha: usize,
        sigma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if alpha == 0 {
            return Err(Error::Config("alpha must be at least 1".into()));
        }
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::Config(format!("invalid init sigma {sigma}: {e}")))?;
        let mut p = Self::zeros(n_visible, alpha * n_visible);
        for v in p.a.iter_mut().chain(p.b.iter_mut()).chain(p.w.iter_mut()) {
            *v = C64::new(normal.sample(rng), normal.sample(rng));
        }
        Ok(p)
    }

    pub fn from_parts(a: Vec<C64>, b: Vec<C64>, w: Vec<C64>) -> Result<Self> {
        let (n, m) = (a.len(), b.len());
        if w.len() != n * m {
            return Err(Error::Dimension(format!(
                "weights have {} entries, expected {n}×{m}",
                w.len()
            )));
        }
        Ok(Self {
            n_visible: n,
            n_hidden: m,
            a,
            b,
            w,
        })
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn alpha(&self) -> f64 {
        self.n_hidden as f64 / self.n_visible as f64
    }

    /// `N M + N + M`.
    pub fn n_params(&self) -> usize {
        self.n_visible * self.n_hidden + self.n_visible + self.n_hidden
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> C64 {
        self.w[i * self.n_hidden + j]
    }

    /// Flat parameter vector in `(a, b, w)` order.
    pub fn to_vector(&self) -> Vec<C64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(&self.a);
        v.extend_from_slice(&self.b);
        v.extend_from_slice(&self.w);
        v
    }

    pub fn set_from_vector(&mut self, v: &[C64]) -> Result<()> {
        if v.len() != self.n_params() {
            return Err(Error::Dimension(format!(
                "parameter vector has length {}, expected {}",
                v.len(),
                self.n_params()
            )));
        }
        let (n, m) = (self.n_visible, self.n_hidden);
        self.a.copy_from_slice(&v[..n]);
        self.b.copy_from_slice(&v[n..n + m]);
        self.w.copy_from_slice(&v[n + m..]);
        Ok(())
    }

    /// `θ ← θ − η δ`.
    pub fn step(&mut self, delta: &[C64], eta: f64) -> Result<()> {
        if delta.len() != self.n_params() {
            return Err(Error::Dimension(format!(
                "update has length {}, expected {}",
                delta.len(),
                self.n_params()
            )));
        }
        let iter = self.a.iter_mut().chain(self.b.iter_mut()).chain(self.w.iter_mut());
        for (p, d) in iter.zip(delta) {
            *p -= eta * d;
        }
        Ok(())
    }

    pub fn conj(&self) -> Self {
        let c = |v: &Vec<C64>| v.iter().map(|z| z.conj()).collect();
        Self {
            n_visible: self.n_visible,
            n_hidden: self.n_hidden,
            a: c(&self.a),
            b: c(&self.b),
            w: c(&self.w),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.a
            .iter()
            .chain(&self.b)
            .chain(&self.w)
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn check(&self, x: SpinConfig) {
        debug_assert_eq!(x.n_sites(), self.n_visible, "configuration size mismatch");
    }

    /// Activations `χ_j` for `x`.
    pub fn activations(&self, x: SpinConfig) -> Vec<C64> {
        self.check(x);
        let m = self.n_hidden;
        let mut chi = self.b.clone();
        for i in 0..self.n_visible {
            let row = &self.w[i * m..(i + 1) * m];
            if x.spin(i) > 0 {
                chi.iter_mut().zip(row).for_each(|(c, w)| *c += w);
            } else {
                chi.iter_mut().zip(row).for_each(|(c, w)| *c -= w);
            }
        }
        chi
    }

    fn visible_term(&self, x: SpinConfig) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for (i, a) in self.a.iter().enumerate() {
            if x.spin(i) > 0 {
                s += a;
            } else {
                s -= a;
            }
        }
        s
    }

    fn quasi_energy_with(&self, x: SpinConfig, chi: &[C64]) -> C64 {
        let mut e = self.visible_term(x);
        for c in chi {
            e += log_cosh(*c);
        }
        C64::new(e.re, wrap_phase(e.im))
    }

    /// `E(x; θ) = Σ a_i x_i + Σ_j log cosh χ_j`.
    pub fn quasi_energy(&self, x: SpinConfig) -> C64 {
        self.quasi_energy_with(x, &self.activations(x))
    }

    /// `log ψ(x) = E(x; θ) + M log 2`, imaginary part in `(-π, π]`.
    pub fn log_psi(&self, x: SpinConfig) -> C64 {
        let e = self.quasi_energy(x) + self.n_hidden as f64 * LN_2;
        C64::new(e.re, wrap_phase(e.im))
    }

    /// Writes `O_k(x) = ∂ log ψ / ∂θ_k` in `(a, b, w)` order into `out`.
    pub fn log_derivatives_into(&self, x: SpinConfig, chi: &[C64], out: &mut [C64]) {
        let (n, m) = (self.n_visible, self.n_hidden);
        debug_assert_eq!(out.len(), self.n_params());
        let (oa, rest) = out.split_at_mut(n);
        let (ob, ow) = rest.split_at_mut(m);
        for (i, o) in oa.iter_mut().enumerate() {
            *o = C64::new(x.spin_f64(i), 0.0);
        }
        for (o, c) in ob.iter_mut().zip(chi) {
            *o = tanh_c(*c);
        }
        for i in 0..n {
            let row = &mut ow[i * m..(i + 1) * m];
            if x.spin(i) > 0 {
                row.copy_from_slice(ob);
            } else {
                row.iter_mut().zip(ob.iter()).for_each(|(o, t)| *o = -t);
            }
        }
    }

    pub fn log_derivatives(&self, x: SpinConfig) -> Vec<C64> {
        let chi = self.activations(x);
        let mut out = vec![C64::new(0.0, 0.0); self.n_params()];
        self.log_derivatives_into(x, &chi, &mut out);
        out
    }

    /// Little-endian `u32 N`, `u32 M`, then `(re, im)` f64 pairs for `a`, `b`, `w`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 16 * self.n_params());
        out.extend_from_slice(&(self.n_visible as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_hidden as u32).to_le_bytes());
        for z in self.a.iter().chain(&self.b).chain(&self.w) {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Format("checkpoint shorter than its header".into()));
        }
        let n = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let m = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let count = n * m + n + m;
        if bytes.len() != 8 + 16 * count {
            return Err(Error::Format(format!(
                "checkpoint for N={n}, M={m} should be {} bytes, got {}",
                8 + 16 * count,
                bytes.len()
            )));
        }
        let f = |k: usize| f64::from_le_bytes(bytes[8 + 8 * k..16 + 8 * k].try_into().unwrap());
        let v: Vec<C64> = (0..count).map(|k| C64::new(f(2 * k), f(2 * k + 1))).collect();
        let mut p = Self::zeros(n, m);
        p.set_from_vector(&v)?;
        if !p.is_finite() {
            return Err(Error::Format("checkpoint contains non-finite values".into()));
        }
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

/// Cached activations for one bound configuration.
#[derive(Clone, Debug)]
pub struct ActivationLookup {
    chi: Vec<C64>,
    config: SpinConfig,
}

impl ActivationLookup {
    pub fn new(params: &RbmParams, x: SpinConfig) -> Self {
        Self {
            chi: params.activations(x),
            config: x,
        }
    }

    pub fn config(&self) -> SpinConfig {
        self.config
    }

    pub fn chi(&self) -> &[C64] {
        &self.chi
    }

    pub fn refresh(&mut self, params: &RbmParams) {
        self.chi = params.activations(self.config);
    }

    /// `log ψ(x') − log ψ(x)` for `x'` = bound config with the sites in `mask` flipped.
    pub fn log_ratio_mask(&self, params: &RbmParams, mask: u64) -> C64 {
        let x = self.config;
        let m = params.n_hidden;
        let mut out = C64::new(0.0, 0.0);
        let mut sites = [0usize; 64];
        let mut signs = [0.0f64; 64];
        let mut k = 0;
        for i in bit_positions(mask) {
            let s = x.spin_f64(i);
            out -= 2.0 * s * params.a[i];
            sites[k] = i;
            signs[k] = 2.0 * s;
            k += 1;
        }
        if k == 0 {
            return out;
        }
        for j in 0..m {
            let mut shift = C64::new(0.0, 0.0);
            for t in 0..k {
                shift += signs[t] * params.w[sites[t] * m + j];
            }
            let c = self.chi[j];
            out += log_cosh(c - shift) - log_cosh(c);
        }
        C64::new(out.re, wrap_phase(out.im))
    }

    pub fn log_ratio(&self, params: &RbmParams, flips: &[usize]) -> C64 {
        let mask = flips.iter().fold(0u64, |m, &i| m | (1u64 << i));
        self.log_ratio_mask(params, mask)
    }

    /// Moves the bound configuration to `x` with `mask` flipped, in O(M |mask|).
    pub fn apply_flips(&mut self, params: &RbmParams, mask: u64) {
        let m = params.n_hidden;
        for i in bit_positions(mask) {
            let s = 2.0 * self.config.spin_f64(i);
            let row = &params.w[i * m..(i + 1) * m];
            self.chi.iter_mut().zip(row).for_each(|(c, w)| *c -= s * w);
        }
        self.config = self.config.flip_mask(mask);
    }

    /// Rebinds to an arbitrary configuration, recomputing from scratch.
    pub fn rebind(&mut self, params: &RbmParams, x: SpinConfig) {
        self.config = x;
        self.refresh(params);
    }

    pub fn quasi_energy(&self, params: &RbmParams) -> C64 {
        params.quasi_energy_with(self.config, &self.chi)
    }
}

/// `ψ(x') / ψ(x)` with `x'` the bound configuration with `flips` negated.
pub fn ratio(params: &RbmParams, lookup: &ActivationLookup, flips: &[usize]) -> C64 {
    lookup.log_ratio(params, flips).exp()
}

/// `E_loc(x) = Σ_{x'} H_{x',x} ψ(x')/ψ(x)` for the configuration bound to `lookup`.
pub fn local_energy(conn: &Connections, params: &RbmParams, lookup: &ActivationLookup) -> C64 {
    let x = lookup.config();
    let mut e = C64::new(0.0, 0.0);
    conn.for_each(x, |xp, h| {
        let mask = xp.bits() ^ x.bits();
        if mask == 0 {
            e += h;
        } else {
            e += h * lookup.log_ratio_mask(params, mask).exp();
        }
    });
    e
}
