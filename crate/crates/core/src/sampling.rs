//! Metropolis-Hastings chains, parallel tempering over equally spaced inverse
//! temperatures, and the exact cumulative-table sampler.

use num_complex::Complex64 as C64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSector, SpinConfig};
use crate::error::{Error, Result};
use crate::rbm::{ActivationLookup, RbmParams};

/// Sweeps between full recomputations of cached activations.
pub const REFRESH_INTERVAL: u64 = 100;
pub const DEFAULT_CHAINS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    #[serde(alias = "single-flip")]
    Flip,
    Exchange,
}

/// Anything that can report log-amplitude differences under spin flips.
pub trait LogAmplitude: Sync {
    type State: Clone + Send;

    fn n_sites(&self) -> usize;
    fn bind(&self, x: SpinConfig) -> Self::State;
    fn config(&self, state: &Self::State) -> SpinConfig;
    /// `log ψ(x') − log ψ(x)` for `x'` = bound config with `mask` flipped.
    fn log_ratio(&self, state: &Self::State, mask: u64) -> C64;
    fn move_to(&self, state: &mut Self::State, mask: u64);
    /// Quasi-energy, i.e. `log ψ` up to a constant.
    fn quasi_energy(&self, state: &Self::State) -> C64;
    fn refresh(&self, _state: &mut Self::State) {}
}

impl LogAmplitude for RbmParams {
    type State = ActivationLookup;

    fn n_sites(&self) -> usize {
        self.n_visible()
    }

    fn bind(&self, x: SpinConfig) -> ActivationLookup {
        ActivationLookup::new(self, x)
    }

    fn config(&self, state: &ActivationLookup) -> SpinConfig {
        state.config()
    }

    fn log_ratio(&self, state: &ActivationLookup, mask: u64) -> C64 {
        state.log_ratio_mask(self, mask)
    }

    fn move_to(&self, state: &mut ActivationLookup, mask: u64) {
        state.apply_flips(self, mask);
    }

    fn quasi_energy(&self, state: &ActivationLookup) -> C64 {
        state.quasi_energy(self)
    }

    fn refresh(&self, state: &mut ActivationLookup) {
        state.refresh(self);
    }
}

/// A state given as a table of `log ψ` over a sector.
pub struct TabulatedState<'a> {
    pub sector: BasisSector,
    pub log_psi: &'a [C64],
}

impl LogAmplitude for TabulatedState<'_> {
    type State = SpinConfig;

    fn n_sites(&self) -> usize {
        self.sector.n_sites()
    }

    fn bind(&self, x: SpinConfig) -> SpinConfig {
        x
    }

    fn config(&self, state: &SpinConfig) -> SpinConfig {
        *state
    }

    fn log_ratio(&self, state: &SpinConfig, mask: u64) -> C64 {
        let xp = state.flip_mask(mask);
        if !self.sector.contains(xp) {
            return C64::new(f64::NEG_INFINITY, 0.0);
        }
        self.log_psi[self.sector.index_unchecked(xp.bits())]
            - self.log_psi[self.sector.index_unchecked(state.bits())]
    }

    fn move_to(&self, state: &mut SpinConfig, mask: u64) {
        *state = state.flip_mask(mask);
    }

    fn quasi_energy(&self, state: &SpinConfig) -> C64 {
        self.log_psi[self.sector.index_unchecked(state.bits())]
    }
}

/// Seeded stream for `(seed, stream id)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniformly random configuration with `n/2` up spins.
pub fn random_balanced_config<R: Rng + ?Sized>(n_sites: usize, rng: &mut R) -> Result<SpinConfig> {
    if n_sites % 2 != 0 {
        return Err(Error::OddZeroMagnetization(n_sites));
    }
    let mut sites: Vec<usize> = (0..n_sites).collect();
    sites.shuffle(rng);
    let bits = sites[..n_sites / 2].iter().fold(0u64, |b, &i| b | (1u64 << i));
    SpinConfig::new(bits, n_sites)
}

pub fn random_config<R: Rng + ?Sized>(n_sites: usize, rng: &mut R) -> Result<SpinConfig> {
    let bits = rng.random::<u64>() & crate::basis::low_mask(n_sites);
    SpinConfig::new(bits, n_sites)
}

#[derive(Clone, Debug)]
pub struct MarkovChain<S> {
    pub state: S,
    pub beta: f64,
    pub rng: ChaCha8Rng,
    pub accept_count: u64,
    pub proposal_count: u64,
    sweeps: u64,
}

impl<S: Clone> MarkovChain<S> {
    pub fn new<P: LogAmplitude<State = S>>(psi: &P, x: SpinConfig, beta: f64, rng: ChaCha8Rng) -> Self {
        assert!(beta > 0.0 && beta <= 1.0, "inverse temperature must lie in (0, 1]");
        Self {
            state: psi.bind(x),
            beta,
            rng,
            accept_count: 0,
            proposal_count: 0,
            sweeps: 0,
        }
    }

    pub fn acceptance(&self) -> f64 {
        if self.proposal_count == 0 {
            0.0
        } else {
            self.accept_count as f64 / self.proposal_count as f64
        }
    }

    pub fn reset_counters(&mut self) {
        self.accept_count = 0;
        self.proposal_count = 0;
    }
}

fn accept<R: Rng>(rng: &mut R, log_w: f64) -> bool {
    if log_w >= 0.0 {
        // Still draw so the stream position does not depend on the outcome.
        let _ = rng.random::<f64>();
        true
    } else {
        rng.random::<f64>() < log_w.exp()
    }
}

fn propose<R: Rng>(x: SpinConfig, rule: UpdateRule, rng: &mut R) -> Option<u64> {
    let n = x.n_sites();
    match rule {
        UpdateRule::Flip => Some(1u64 << rng.random_range(0..n)),
        UpdateRule::Exchange => {
            let up = x.n_up();
            if up == 0 || up == n {
                return None;
            }
            let ku = rng.random_range(0..up);
            let kd = rng.random_range(0..n - up);
            let mut ups = crate::basis::bit_positions(x.bits());
            let mut downs = crate::basis::bit_positions(!x.bits() & crate::basis::low_mask(n));
            let i = ups.nth(ku).unwrap();
            let j = downs.nth(kd).unwrap();
            Some((1u64 << i) | (1u64 << j))
        }
    }
}

/// One sweep of `N` Metropolis steps with acceptance
/// `min(1, exp(2β Re[E(x') − E(x)]))`.
pub fn metropolis_sweep<P: LogAmplitude>(chain: &mut MarkovChain<P::State>, psi: &P, rule: UpdateRule) {
    for _ in 0..psi.n_sites() {
        let x = psi.config(&chain.state);
        let Some(mask) = propose(x, rule, &mut chain.rng) else {
            chain.proposal_count += 1;
            continue;
        };
        chain.proposal_count += 1;
        let d = psi.log_ratio(&chain.state, mask).re;
        if accept(&mut chain.rng, 2.0 * chain.beta * d) {
            psi.move_to(&mut chain.state, mask);
            chain.accept_count += 1;
        }
    }
    chain.sweeps += 1;
    if chain.sweeps % REFRESH_INTERVAL == 0 {
        psi.refresh(&mut chain.state);
    }
}

/// Chains at `β_i = i / n`, `i = 1..=n`; samples come from the last one.
#[derive(Clone, Debug)]
pub struct TemperedEnsemble<S> {
    pub chains: Vec<MarkovChain<S>>,
    pub rule: UpdateRule,
    rng: ChaCha8Rng,
    pub swap_attempts: u64,
    pub swap_accepts: u64,
}

impl<S: Clone + Send> TemperedEnsemble<S> {
    /// Chain `i` draws from stream `i` of `seed`; swaps use stream `n_chains`.
    pub fn new<P: LogAmplitude<State = S>>(
        psi: &P,
        n_chains: usize,
        rule: UpdateRule,
        seed: u64,
    ) -> Result<Self> {
        if n_chains == 0 {
            return Err(Error::Config("at least one chain is required".into()));
        }
        let betas: Vec<f64> = (1..=n_chains).map(|i| i as f64 / n_chains as f64).collect();
        Self::with_betas(psi, &betas, rule, seed)
    }

    pub fn with_betas<P: LogAmplitude<State = S>>(
        psi: &P,
        betas: &[f64],
        rule: UpdateRule,
        seed: u64,
    ) -> Result<Self> {
        let n = psi.n_sites();
        let mut chains = Vec::with_capacity(betas.len());
        for (c, &beta) in betas.iter().enumerate() {
            let mut rng = stream_rng(seed, c as u64);
            let x = match rule {
                UpdateRule::Exchange => random_balanced_config(n, &mut rng)?,
                UpdateRule::Flip => random_config(n, &mut rng)?,
            };
            chains.push(MarkovChain::new(psi, x, beta, rng));
        }
        Ok(Self {
            chains,
            rule,
            rng: stream_rng(seed, betas.len() as u64),
            swap_attempts: 0,
            swap_accepts: 0,
        })
    }

    pub fn target(&self) -> &MarkovChain<S> {
        self.chains.last().unwrap()
    }

    pub fn sample<P: LogAmplitude<State = S>>(&self, psi: &P) -> SpinConfig {
        psi.config(&self.target().state)
    }

    /// Sweeps every chain once, then performs one round of swaps.
    pub fn step<P: LogAmplitude<State = S>>(&mut self, psi: &P) {
        let rule = self.rule;
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            self.chains
                .par_iter_mut()
                .for_each(|c| metropolis_sweep(c, psi, rule));
        }
        #[cfg(not(feature = "parallel"))]
        for c in &mut self.chains {
            metropolis_sweep(c, psi, rule);
        }
        tempering_exchange(self, psi);
    }

    pub fn advance<P: LogAmplitude<State = S>>(&mut self, psi: &P, sweeps: usize) {
        for _ in 0..sweeps {
            self.step(psi);
        }
    }

    pub fn reset_counters(&mut self) {
        self.chains.iter_mut().for_each(|c| c.reset_counters());
        self.swap_attempts = 0;
        self.swap_accepts = 0;
    }

    /// Rebinds every chain's cache after a parameter update.
    pub fn rebind<P: LogAmplitude<State = S>>(&mut self, psi: &P) {
        for c in &mut self.chains {
            let x = psi.config(&c.state);
            c.state = psi.bind(x);
        }
    }
}

/// Swaps configurations of neighbouring temperatures, first pairs `(0,1),
/// (2,3), …` then `(1,2), (3,4), …`, accepting with
/// `min(1, exp{2(β_{i+1} − β_i) Re[E(x_i) − E(x_{i+1})]})`, the detailed-balance
/// ratio for `π_β(x) ∝ exp(2β Re E(x))`.
pub fn tempering_exchange<P: LogAmplitude>(ens: &mut TemperedEnsemble<P::State>, psi: &P) {
    let n = ens.chains.len();
    let mut energy: Vec<f64> = ens
        .chains
        .iter()
        .map(|c| psi.quasi_energy(&c.state).re)
        .collect();
    for start in [0usize, 1] {
        let mut i = start;
        while i + 1 < n {
            let (bi, bj) = (ens.chains[i].beta, ens.chains[i + 1].beta);
            let log_w = 2.0 * (bj - bi) * (energy[i] - energy[i + 1]);
            ens.swap_attempts += 1;
            if accept(&mut ens.rng, log_w) {
                let (lo, hi) = ens.chains.split_at_mut(i + 1);
                std::mem::swap(&mut lo[i].state, &mut hi[0].state);
                energy.swap(i, i + 1);
                ens.swap_accepts += 1;
            }
            i += 2;
        }
    }
}

/// `n_samples` configurations from the `β = 1` chain, each preceded by
/// `sweeps_between` ensemble steps.
pub fn draw_batch<P: LogAmplitude>(
    ens: &mut TemperedEnsemble<P::State>,
    psi: &P,
    n_samples: usize,
    sweeps_between: usize,
) -> Vec<SpinConfig> {
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        ens.advance(psi, sweeps_between.max(1));
        out.push(ens.sample(psi));
    }
    out
}

/// Prefix sums of `|ψ(x)|²` over a sector in canonical order.
#[derive(Clone, Debug)]
pub struct ExactSamplerTable {
    pub cumulative: Vec<f64>,
    pub total: f64,
    /// Shift subtracted from `Re log ψ` before exponentiating.
    pub log_shift: f64,
}

impl ExactSamplerTable {
    pub fn from_log_psi(log_psi: &[C64]) -> Result<Self> {
        let shift = log_psi
            .iter()
            .map(|l| l.re)
            .filter(|r| !r.is_nan())
            .fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return Err(Error::DegenerateDistribution);
        }
        let mut acc = 0.0;
        let cumulative: Vec<f64> = log_psi
            .iter()
            .map(|l| {
                acc += (2.0 * (l.re - shift)).exp();
                acc
            })
            .collect();
        if !(acc > 0.0) || !acc.is_finite() {
            return Err(Error::DegenerateDistribution);
        }
        Ok(Self {
            cumulative,
            total: acc,
            log_shift: shift,
        })
    }

    pub fn from_probabilities(p: &[f64]) -> Result<Self> {
        let mut acc = 0.0;
        let cumulative: Vec<f64> = p
            .iter()
            .map(|v| {
                acc += v.max(0.0);
                acc
            })
            .collect();
        if !(acc > 0.0) || !acc.is_finite() {
            return Err(Error::DegenerateDistribution);
        }
        Ok(Self {
            cumulative,
            total: acc,
            log_shift: 0.0,
        })
    }

    /// Normalized probability of index `k`.
    pub fn probability(&self, k: usize) -> f64 {
        let lo = if k == 0 { 0.0 } else { self.cumulative[k - 1] };
        (self.cumulative[k] - lo) / self.total
    }

    /// Least `k` with `cumulative[k] > u`.
    pub fn index_for(&self, u: f64) -> usize {
        let k = self.cumulative.partition_point(|&c| c <= u);
        k.min(self.cumulative.len() - 1)
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index_for(rng.random::<f64>() * self.total)
    }
}

pub fn build_exact_table(params: &RbmParams, sector: &BasisSector) -> Result<ExactSamplerTable> {
    let configs = sector.enumerate()?;
    let log_psi: Vec<C64> = configs.iter().map(|&x| params.log_psi(x)).collect();
    ExactSamplerTable::from_log_psi(&log_psi)
}

pub fn exact_sample<R: Rng + ?Sized>(
    table: &ExactSamplerTable,
    sector: &BasisSector,
    rng: &mut R,
) -> Result<SpinConfig> {
    sector.config_at(table.sample_index(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rbm::RbmParams;

    fn random_rbm(n: usize, alpha: usize, sigma: f64, seed: u64) -> RbmParams {
        RbmParams::init_random(n, alpha, sigma, &mut stream_rng(seed, 99)).unwrap()
    }

    fn tv(p: &[f64], q: &[f64]) -> f64 {
        0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    #[test]
    fn zero_params_accept_everything() {
        let p = RbmParams::zeros(8, 8);
        let mut ens = TemperedEnsemble::new(&p, 16, UpdateRule::Flip, 3).unwrap();
        ens.advance(&p, 20);
        for c in &ens.chains {
            assert_eq!(c.accept_count, c.proposal_count);
        }
        assert_eq!(ens.swap_accepts, ens.swap_attempts);
    }

    #[test]
    fn exchange_conserves_magnetization() {
        let p = random_rbm(10, 2, 0.5, 1);
        let mut chain = MarkovChain::new(
            &p,
            random_balanced_config(10, &mut stream_rng(0, 0)).unwrap(),
            1.0,
            stream_rng(0, 1),
        );
        for _ in 0..10_000 {
            metropolis_sweep(&mut chain, &p, UpdateRule::Exchange);
            assert_eq!(chain.state.config().magnetization(), 0);
        }
        assert!(chain.accept_count > 0);
    }

    #[test]
    fn equal_temperatures_always_swap() {
        let p = random_rbm(6, 1, 0.8, 2);
        let mut ens =
            TemperedEnsemble::with_betas(&p, &[1.0; 8], UpdateRule::Flip, 5).unwrap();
        ens.advance(&p, 50);
        assert_eq!(ens.swap_accepts, ens.swap_attempts);
    }

    #[test]
    fn phase_conjugation_leaves_trajectory_unchanged() {
        let p = random_rbm(8, 2, 0.7, 4);
        let q = p.conj();
        let mut e1 = TemperedEnsemble::new(&p, 16, UpdateRule::Flip, 11).unwrap();
        let mut e2 = TemperedEnsemble::new(&q, 16, UpdateRule::Flip, 11).unwrap();
        let a = draw_batch(&mut e1, &p, 300, 1);
        let b = draw_batch(&mut e2, &q, 300, 1);
        assert_eq!(a, b);
        assert_eq!(e1.swap_accepts, e2.swap_accepts);
    }

    #[test]
    fn batches_are_reproducible() {
        let p = random_rbm(8, 1, 0.5, 6);
        let run = || {
            let mut e = TemperedEnsemble::new(&p, 16, UpdateRule::Exchange, 42).unwrap();
            draw_batch(&mut e, &p, 200, 2)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn single_flip_reaches_every_configuration() {
        let p = random_rbm(4, 1, 0.3, 8);
        let mut chain = MarkovChain::new(&p, SpinConfig::all_up(4).unwrap(), 1.0, stream_rng(1, 0));
        let mut seen = [false; 16];
        for _ in 0..25_000 {
            metropolis_sweep(&mut chain, &p, UpdateRule::Flip);
            seen[chain.state.config().bits() as usize] = true;
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn tempered_marginal_matches_exact_distribution() {
        let p = random_rbm(3, 2, 0.8, 12);
        let sector = BasisSector::full(3).unwrap();
        let table = build_exact_table(&p, &sector).unwrap();
        let exact: Vec<f64> = (0..8).map(|k| table.probability(k)).collect();
        let mut ens = TemperedEnsemble::new(&p, 16, UpdateRule::Flip, 21).unwrap();
        ens.advance(&p, 1000);
        let mut counts = [0.0; 8];
        let batch = draw_batch(&mut ens, &p, 100_000, 1);
        for x in &batch {
            counts[x.bits() as usize] += 1.0 / batch.len() as f64;
        }
        assert!(tv(&counts, &exact) < 0.02, "tv {}", tv(&counts, &exact));
    }

    #[test]
    fn exact_table_basics() {
        let sector = BasisSector::full(2).unwrap();
        let t = build_exact_table(&RbmParams::zeros(2, 2), &sector).unwrap();
        let c = t.cumulative[0];
        for (k, v) in t.cumulative.iter().enumerate() {
            assert!((v - (k + 1) as f64 * c).abs() < 1e-15);
        }
        assert_eq!(t.index_for(0.3 * t.total), 1);
        assert_eq!(t.total, *t.cumulative.last().unwrap());

        let point = ExactSamplerTable::from_probabilities(&[0.0, 0.0, 1.0, 0.0]).unwrap();
        let mut rng = stream_rng(0, 0);
        for _ in 0..1000 {
            assert_eq!(exact_sample(&point, &sector, &mut rng).unwrap().bits(), 2);
        }
        assert!(matches!(
            ExactSamplerTable::from_probabilities(&[0.0; 4]),
            Err(Error::DegenerateDistribution)
        ));
    }

    #[test]
    fn exact_sampler_frequencies() {
        let p = random_rbm(10, 1, 0.4, 30);
        let sector = BasisSector::zero_magnetization(10).unwrap();
        let table = build_exact_table(&p, &sector).unwrap();
        let d = sector.size().unwrap();
        let mut counts = vec![0.0; d];
        let mut rng = stream_rng(7, 0);
        let draws = 100_000;
        for _ in 0..draws {
            counts[table.sample_index(&mut rng)] += 1.0 / draws as f64;
        }
        let exact: Vec<f64> = (0..d).map(|k| table.probability(k)).collect();
        assert!(tv(&counts, &exact) < 0.02, "tv {}", tv(&counts, &exact));
    }

    #[test]
    fn large_log_amplitudes_do_not_overflow() {
        let logs = [C64::new(800.0, 0.0), C64::new(799.0, 1.0), C64::new(-5000.0, 0.0)];
        let t = ExactSamplerTable::from_log_psi(&logs).unwrap();
        assert!((t.probability(0) / t.probability(1) - (2.0f64).exp()).abs() < 1e-9);
    }
}
