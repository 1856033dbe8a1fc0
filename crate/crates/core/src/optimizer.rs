//! Stochastic and exact reconfiguration.
//!
//! With `Y_x = √p_x (O_x − Ō)` and `e_x = √p_x (E_loc(x) − Ē)` the covariance is
//! `S = YᴴY` and the force is `F = Yᴴe = ⟨O* E_loc⟩ − ⟨O*⟩⟨E_loc⟩`, the gradient
//! of the energy with respect to `θ*`. Updates solve `(S + λI) δ = F` and set
//! `θ ← θ − η δ`.

use faer::{Mat, MatRef};
use num_complex::Complex64 as C64;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSector, SpinConfig};
use crate::config::{Method, OptimizerConfig, SamplerKind, TrainingConfig};
use crate::error::{Error, Result};
use crate::linalg::{adjoint_times, gram, shifted_solve_escalating};
use crate::model::{Connections, SectorOperator, XyzChain};
use crate::rbm::{local_energy, ActivationLookup, RbmParams};
use crate::sampling::{draw_batch, stream_rng, ExactSamplerTable, TemperedEnsemble};

/// Stream ids derived from a run seed.
pub const INIT_STREAM: u64 = 1000;
pub const EXACT_SAMPLER_STREAM: u64 = 1001;

#[derive(Clone, Debug)]
pub struct SrObservables {
    pub s: Mat<C64>,
    /// `⟨O* E_loc⟩ − ⟨O*⟩⟨E_loc⟩`.
    pub force: Vec<C64>,
    pub energy_mean: C64,
    pub energy_std: f64,
    pub n_samples: usize,
}

/// Configurations of a sector with the Hamiltonian's rows, for exact sums.
pub struct ExactContext {
    pub sector: BasisSector,
    pub configs: Vec<SpinConfig>,
    pub conn: Connections,
}

impl ExactContext {
    pub fn new(model: &XyzChain, sector: &BasisSector) -> Result<Self> {
        let op = SectorOperator::new(model, *sector)?;
        Ok(Self {
            sector: *sector,
            configs: op.configs().to_vec(),
            conn: model.connections(),
        })
    }

    pub fn dim(&self) -> usize {
        self.configs.len()
    }
}

/// Weighted covariance estimators from per-configuration rows.
/// `o` is row-major `n × P` and is centered and scaled in place.
fn observables_from_rows(mut o: Vec<C64>, n_params: usize, eloc: &[C64], weights: &[f64]) -> SrObservables {
    let n = eloc.len();
    let mut o_mean = vec![C64::new(0.0, 0.0); n_params];
    let mut e_mean = C64::new(0.0, 0.0);
    for (row, (&w, e)) in o.chunks(n_params).zip(weights.iter().zip(eloc)) {
        e_mean += w * e;
        o_mean.iter_mut().zip(row).for_each(|(m, v)| *m += w * v);
    }
    for (row, &w) in o.chunks_mut(n_params).zip(weights) {
        let sw = w.sqrt();
        row.iter_mut().zip(&o_mean).for_each(|(v, m)| *v = sw * (*v - m));
    }
    // Row-major n × P storage is a column-major P × n matrix, i.e. Yᵀ.
    let y = MatRef::from_column_major_slice(&o, n_params, n).transpose();
    let ev: Vec<C64> = weights
        .iter()
        .zip(eloc)
        .map(|(w, e)| w.sqrt() * (e - e_mean))
        .collect();
    let var: f64 = ev.iter().map(|v| v.norm_sqr()).sum();
    SrObservables {
        s: gram(y),
        force: adjoint_times(y, &ev),
        energy_mean: e_mean,
        energy_std: var.max(0.0).sqrt(),
        n_samples: n,
    }
}

fn fill_rows<F>(n: usize, n_params: usize, f: F) -> (Vec<C64>, Vec<C64>)
where
    F: Fn(usize, &mut [C64]) -> C64 + Sync,
{
    let mut o = vec![C64::new(0.0, 0.0); n * n_params];
    let mut e = vec![C64::new(0.0, 0.0); n];
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        o.par_chunks_mut(n_params)
            .zip(e.par_iter_mut())
            .enumerate()
            .with_min_len(64)
            .for_each(|(r, (row, er))| *er = f(r, row));
    }
    #[cfg(not(feature = "parallel"))]
    for (r, (row, er)) in o.chunks_mut(n_params).zip(e.iter_mut()).enumerate() {
        *er = f(r, row);
    }
    (o, e)
}

/// Sample-mean estimators with optional per-sample weights (uniform if `None`).
pub fn estimate_observables_weighted(
    conn: &Connections,
    params: &RbmParams,
    samples: &[SpinConfig],
    weights: Option<&[f64]>,
) -> Result<SrObservables> {
    if samples.is_empty() {
        return Err(Error::Config("at least one sample is required".into()));
    }
    let p = params.n_params();
    let (o, e) = fill_rows(samples.len(), p, |r, row| {
        let lk = ActivationLookup::new(params, samples[r]);
        params.log_derivatives_into(samples[r], lk.chi(), row);
        local_energy(conn, params, &lk)
    });
    let w: Vec<f64> = match weights {
        Some(w) => {
            let t: f64 = w.iter().sum();
            w.iter().map(|v| v / t).collect()
        }
        None => vec![1.0 / samples.len() as f64; samples.len()],
    };
    Ok(observables_from_rows(o, p, &e, &w))
}

pub fn estimate_observables_mc(
    conn: &Connections,
    params: &RbmParams,
    samples: &[SpinConfig],
) -> Result<SrObservables> {
    estimate_observables_weighted(conn, params, samples, None)
}

/// `log ψ` over the sector, in canonical order.
pub fn log_psi_table(params: &RbmParams, configs: &[SpinConfig]) -> Vec<C64> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        configs.par_iter().map(|&x| params.log_psi(x)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    configs.iter().map(|&x| params.log_psi(x)).collect()
}

fn born_weights(log_psi: &[C64]) -> Result<Vec<f64>> {
    let table = ExactSamplerTable::from_log_psi(log_psi)?;
    Ok(log_psi
        .iter()
        .map(|l| (2.0 * (l.re - table.log_shift)).exp() / table.total)
        .collect())
}

fn table_local_energy(ctx: &ExactContext, log_psi: &[C64], k: usize) -> C64 {
    let x = ctx.configs[k];
    let lx = log_psi[k];
    let mut e = C64::new(0.0, 0.0);
    ctx.conn.for_each(x, |xp, h| {
        if xp == x {
            e += h;
        } else {
            e += h * (log_psi[ctx.sector.index_unchecked(xp.bits())] - lx).exp();
        }
    });
    e
}

/// Exact estimators under `|ψ(x)|² / Σ|ψ|²` over the whole sector.
pub fn estimate_observables_exact(ctx: &ExactContext, params: &RbmParams) -> Result<SrObservables> {
    let log_psi = log_psi_table(params, &ctx.configs);
    let w = born_weights(&log_psi)?;
    let p = params.n_params();
    let (o, e) = fill_rows(ctx.dim(), p, |k, row| {
        let x = ctx.configs[k];
        let chi = params.activations(x);
        params.log_derivatives_into(x, &chi, row);
        table_local_energy(ctx, &log_psi, k)
    });
    Ok(observables_from_rows(o, p, &e, &w))
}

/// Rayleigh quotient `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩` by exact summation.
pub fn exact_energy(ctx: &ExactContext, params: &RbmParams) -> Result<C64> {
    let log_psi = log_psi_table(params, &ctx.configs);
    let w = born_weights(&log_psi)?;
    Ok((0..ctx.dim())
        .map(|k| w[k] * table_local_energy(ctx, &log_psi, k))
        .sum())
}

/// Running averages `f_n = (1 − β1) f_{n−1} + β1 f`, `S_n = (1 − β2) S_{n−1} + β2 S`.
#[derive(Clone, Debug, Default)]
pub struct SrState {
    force: Option<Vec<C64>>,
    s: Option<Mat<C64>>,
}

impl SrState {
    pub fn reset(&mut self) {
        self.force = None;
        self.s = None;
    }
}

/// One regularized natural-gradient update; returns the shift actually used.
pub fn sr_step(
    params: &mut RbmParams,
    obs: &SrObservables,
    schedule: &OptimizerConfig,
    n: usize,
    state: &mut SrState,
) -> Result<f64> {
    let p = params.n_params();
    if obs.force.len() != p || obs.s.nrows() != p {
        return Err(Error::Dimension(format!(
            "observables for {} parameters, model has {p}",
            obs.force.len()
        )));
    }
    let force = match (schedule.beta1, state.force.take()) {
        (Some(b), Some(prev)) => prev
            .iter()
            .zip(&obs.force)
            .map(|(o, f)| (1.0 - b) * o + b * f)
            .collect(),
        _ => obs.force.clone(),
    };
    let s = match (schedule.beta2, state.s.take()) {
        (Some(b), Some(prev)) => Mat::<C64>::from_fn(p, p, |i, j| (1.0 - b) * prev[(i, j)] + b * obs.s[(i, j)]),
        _ => obs.s.clone(),
    };
    let lambda = schedule.lambda_at(n);
    let (delta, used) = shifted_solve_escalating(s.as_ref(), &force, lambda)?;
    if schedule.beta1.is_some() {
        state.force = Some(force);
    }
    if schedule.beta2.is_some() {
        state.s = Some(s);
    }
    params.step(&delta, schedule.eta)?;
    if !params.is_finite() {
        return Err(Error::NonFinite("parameters after update".into()));
    }
    Ok(used)
}

/// `(E − E_ED) / |E_ED|`.
pub fn normalized_energy(energy: f64, e_ref: f64) -> f64 {
    (energy - e_ref) / e_ref.abs()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub energy_re: f64,
    pub energy_im: f64,
    pub energy_std: f64,
    pub norm_energy: Option<f64>,
    pub acceptance: f64,
    pub lambda: f64,
}

pub type LearningCurve = Vec<EpochRecord>;

enum Estimator {
    Exact(ExactContext),
    ExactSampler {
        ctx: ExactContext,
        rng: ChaCha8Rng,
    },
    Mcmc {
        conn: Connections,
        ensemble: TemperedEnsemble<ActivationLookup>,
        sweeps_between: usize,
        exact: Option<ExactContext>,
    },
}

/// Stateful optimization loop; one [`Trainer::step`] per epoch.
pub struct Trainer {
    cfg: TrainingConfig,
    model: XyzChain,
    sector: BasisSector,
    estimator: Estimator,
    state: SrState,
    params: RbmParams,
    epoch: usize,
    e_ref: Option<f64>,
    n_samples: usize,
}

/// Sectors up to this size get an exact final energy in sampled runs.
pub const EXACT_CHECK_LIMIT: u64 = 1 << 22;

impl Trainer {
    pub fn new(cfg: &TrainingConfig, start: Option<RbmParams>, e_ref: Option<f64>) -> Result<Self> {
        cfg.validate()?;
        let model = cfg.build_model()?;
        let sector = cfg.resolve_sector(&model)?;
        let params = match start {
            Some(p) => {
                if p.n_visible() != model.n_sites {
                    return Err(Error::Dimension(format!(
                        "start parameters have {} visible units, model has {} sites",
                        p.n_visible(),
                        model.n_sites
                    )));
                }
                p
            }
            None => RbmParams::init_random(
                model.n_sites,
                cfg.ansatz.alpha,
                cfg.ansatz.sigma,
                &mut stream_rng(cfg.seed, INIT_STREAM),
            )?,
        };
        let n_samples = ((cfg.sampler.samples_multiplier * params.n_params() as f64).round() as usize).max(1);
        let estimator = match (cfg.optimizer.method, cfg.sampler.kind) {
            (Method::Er, _) => Estimator::Exact(ExactContext::new(&model, &sector)?),
            (Method::Sr, SamplerKind::Exact) => Estimator::ExactSampler {
                ctx: ExactContext::new(&model, &sector)?,
                rng: stream_rng(cfg.seed, EXACT_SAMPLER_STREAM),
            },
            (Method::Sr, SamplerKind::Mcmc) => {
                let rule = cfg.update_rule(&sector);
                let mut ensemble = TemperedEnsemble::new(&params, cfg.sampler.chains, rule, cfg.seed)?;
                ensemble.advance(&params, cfg.sampler.burn_in);
                let exact = if sector.size_u64() <= EXACT_CHECK_LIMIT {
                    Some(ExactContext::new(&model, &sector)?)
                } else {
                    None
                };
                Estimator::Mcmc {
                    conn: model.connections(),
                    ensemble,
                    sweeps_between: cfg.sampler.sweeps_between,
                    exact,
                }
            }
        };
        Ok(Self {
            cfg: cfg.clone(),
            model,
            sector,
            estimator,
            state: SrState::default(),
            params,
            epoch: 0,
            e_ref,
            n_samples,
        })
    }

    pub fn params(&self) -> &RbmParams {
        &self.params
    }

    pub fn model(&self) -> &XyzChain {
        &self.model
    }

    pub fn sector(&self) -> &BasisSector {
        &self.sector
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn reference(&self) -> Option<f64> {
        self.e_ref
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.cfg
    }

    /// Swaps in a new Hamiltonian on the same sector, keeping parameters and epoch count.
    pub fn set_model(&mut self, model: XyzChain, e_ref: Option<f64>) -> Result<()> {
        if model.n_sites != self.model.n_sites {
            return Err(Error::Dimension("annealing path changes the chain length".into()));
        }
        match &mut self.estimator {
            Estimator::Exact(ctx) | Estimator::ExactSampler { ctx, .. } => {
                *ctx = ExactContext::new(&model, &self.sector)?;
            }
            Estimator::Mcmc { conn, exact, .. } => {
                *conn = model.connections();
                if exact.is_some() {
                    *exact = Some(ExactContext::new(&model, &self.sector)?);
                }
            }
        }
        self.model = model;
        self.e_ref = e_ref;
        self.state.reset();
        Ok(())
    }

    fn estimate(&mut self) -> Result<(SrObservables, f64)> {
        let n_samples = self.n_samples;
        match &mut self.estimator {
            Estimator::Exact(ctx) => Ok((estimate_observables_exact(ctx, &self.params)?, 1.0)),
            Estimator::ExactSampler { ctx, rng } => {
                let log_psi = log_psi_table(&self.params, &ctx.configs);
                let table = ExactSamplerTable::from_log_psi(&log_psi)?;
                let samples: Vec<SpinConfig> = (0..n_samples)
                    .map(|_| ctx.configs[table.sample_index(rng)])
                    .collect();
                Ok((estimate_observables_mc(&ctx.conn, &self.params, &samples)?, 1.0))
            }
            Estimator::Mcmc {
                conn,
                ensemble,
                sweeps_between,
                ..
            } => {
                ensemble.rebind(&self.params);
                ensemble.reset_counters();
                let samples = draw_batch(ensemble, &self.params, n_samples, *sweeps_between);
                let acc = ensemble.target().acceptance();
                Ok((estimate_observables_mc(conn, &self.params, &samples)?, acc))
            }
        }
    }

    /// Estimates at the current parameters, records, then updates.
    pub fn step(&mut self) -> Result<EpochRecord> {
        let n = self.epoch;
        let (obs, acceptance) = self.estimate().map_err(|e| e.at_epoch(n))?;
        if !(obs.energy_mean.re.is_finite() && obs.energy_mean.im.is_finite()) {
            return Err(Error::NonFinite("energy estimate".into()).at_epoch(n));
        }
        let lambda = sr_step(&mut self.params, &obs, &self.cfg.optimizer, n, &mut self.state)
            .map_err(|e| e.at_epoch(n))?;
        self.epoch += 1;
        Ok(EpochRecord {
            epoch: n,
            energy_re: obs.energy_mean.re,
            energy_im: obs.energy_mean.im,
            energy_std: obs.energy_std,
            norm_energy: self.e_ref.map(|r| normalized_energy(obs.energy_mean.re, r)),
            acceptance,
            lambda,
        })
    }

    /// Exact Rayleigh quotient of the current parameters when the sector is small enough.
    pub fn exact_energy(&self) -> Result<Option<f64>> {
        let ctx = match &self.estimator {
            Estimator::Exact(ctx) | Estimator::ExactSampler { ctx, .. } => Some(ctx),
            Estimator::Mcmc { exact, .. } => exact.as_ref(),
        };
        ctx.map(|c| exact_energy(c, &self.params).map(|e| e.re)).transpose()
    }

    pub fn into_params(self) -> RbmParams {
        self.params
    }
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub params: RbmParams,
    pub curve: LearningCurve,
    /// Exact energy of the final parameters when available.
    pub final_energy: Option<f64>,
    pub final_norm_energy: Option<f64>,
    /// First epoch whose record reached the configured target.
    pub reached_target_at: Option<usize>,
}

/// Runs `optimizer.epochs` epochs (or until the target normalized energy is
/// reached). `on_epoch` sees every record with the parameters before the update
/// that produced the next one.
pub fn run_training(
    cfg: &TrainingConfig,
    start: Option<RbmParams>,
    e_ref: Option<f64>,
    mut on_epoch: impl FnMut(&EpochRecord, &RbmParams) -> Result<()>,
) -> Result<TrainingOutcome> {
    let mut trainer = Trainer::new(cfg, start, e_ref)?;
    let mut curve = Vec::with_capacity(cfg.optimizer.epochs);
    let mut reached = None;
    for _ in 0..cfg.optimizer.epochs {
        let rec = trainer.step()?;
        on_epoch(&rec, trainer.params())?;
        let hit = matches!(
            (cfg.optimizer.target_norm_energy, rec.norm_energy),
            (Some(t), Some(v)) if v <= t
        );
        curve.push(rec);
        if hit {
            reached = Some(curve.len() - 1);
            break;
        }
    }
    finish(trainer, curve, reached)
}

fn finish(trainer: Trainer, curve: LearningCurve, reached: Option<usize>) -> Result<TrainingOutcome> {
    let final_energy = trainer.exact_energy()?;
    let e_ref = trainer.reference();
    let final_norm_energy = match (final_energy, e_ref) {
        (Some(e), Some(r)) => Some(normalized_energy(e, r)),
        (None, Some(_)) => curve.last().and_then(|r| r.norm_energy),
        _ => None,
    };
    Ok(TrainingOutcome {
        params: trainer.into_params(),
        curve,
        final_energy,
        final_norm_energy,
        reached_target_at: reached,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealPoint {
    pub model_params: Vec<f64>,
    pub energy: Option<f64>,
    pub reference: Option<f64>,
    pub norm_energy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct AnnealOutcome {
    pub points: Vec<AnnealPoint>,
    pub curve: LearningCurve,
    pub params: RbmParams,
}

/// Walks `path` (model parameter vectors for `cfg.model.name`), running
/// `epochs_per_step` epochs at each point from the current parameters. The
/// epoch counter, and so the shift schedule, continues across points.
pub fn anneal(
    cfg: &TrainingConfig,
    start: RbmParams,
    path: &[Vec<f64>],
    epochs_per_step: usize,
    reference: &dyn Fn(&XyzChain, &BasisSector) -> Result<Option<f64>>,
) -> Result<AnnealOutcome> {
    let first = path
        .first()
        .ok_or_else(|| Error::Config("annealing path is empty".into()))?;
    let mut point_cfg = cfg.clone();
    point_cfg.model.params = first.clone();
    let model0 = point_cfg.build_model()?;
    let sector = point_cfg.resolve_sector(&model0)?;
    let mut trainer = Trainer::new(&point_cfg, Some(start), reference(&model0, &sector)?)?;
    let mut curve = Vec::new();
    let mut points = Vec::with_capacity(path.len());
    for (k, p) in path.iter().enumerate() {
        if k > 0 {
            let mut spec = cfg.model.clone();
            spec.params = p.clone();
            let model = spec.build()?;
            let r = reference(&model, &sector)?;
            trainer.set_model(model, r)?;
        }
        for _ in 0..epochs_per_step {
            curve.push(trainer.step()?);
        }
        let energy = trainer.exact_energy()?;
        let r = trainer.reference();
        points.push(AnnealPoint {
            model_params: p.clone(),
            energy,
            reference: r,
            norm_energy: energy.zip(r).map(|(e, r)| normalized_energy(e, r)),
        });
    }
    Ok(AnnealOutcome {
        points,
        curve,
        params: trainer.into_params(),
    })
}
