//! Batch runs: parameter sweeps over independent instances, annealing paths,
//! and their on-disk artifacts.
//!
//! Layout under `out_dir`:
//! `summary.csv`, `timings.csv`, `manifest.json`, and `<point>/<instance>/`
//! holding `curve.csv` and `final.rbm` for each run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{BasisSector, SectorKind};
use crate::config::{AnsatzConfig, OptimizerConfig, ReferenceConfig, SamplerConfig, TrainingConfig};
use crate::ed::{lanczos_ground, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, XyzChain};
use crate::optimizer::{anneal, run_training, AnnealPoint, EpochRecord, TrainingOutcome};
use crate::rbm::RbmParams;

pub const CURVE_HEADER: &str = "epoch,energy_re,energy_im,energy_std,norm_energy,acceptance,lambda";
pub const SUMMARY_HEADER: &str = "sweep_value,instance,seed,final_norm_energy,final_energy,epochs,status";
pub const TIMINGS_HEADER: &str = "sweep_value,instance,wall_time_s";
pub const ANNEAL_HEADER: &str = "step,params,energy,reference,norm_energy";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// A model parameter name, e.g. `delta`, `j2`, `a`.
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealSpec {
    /// Model parameter vectors visited in order.
    pub path: Vec<Vec<f64>>,
    pub epochs_per_step: usize,
    /// Warm start; otherwise each instance first trains `optimizer.epochs`
    /// epochs from random initialization at the first path point.
    #[serde(default)]
    pub start: Option<PathBuf>,
}

fn default_instances() -> usize {
    12
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub sector: Option<SectorKind>,
    #[serde(default)]
    pub ansatz: AnsatzConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
    pub seed: u64,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default = "default_instances")]
    pub instances: usize,
    /// Worker threads; `0` uses all available cores.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub anneal: Option<AnnealSpec>,
}

/// A config on disk is either a bare experiment config or a manifest embedding one.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub crate_version: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedEntry>,
    /// How RNG streams map to Markov chains; fixed regardless of thread count.
    pub stream_assignment: String,
    /// Relative path → sha256.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub sweep_value: Option<f64>,
    pub instance: usize,
    pub seed: u64,
}

pub const STREAM_ASSIGNMENT: &str = "chain i draws from ChaCha8 stream i of the instance seed; \
tempering swaps use stream n_chains; initialization and exact sampling use fixed streams 1000 and 1001";

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Instance `i` gets the same seed at every sweep point.
pub fn instance_seed(base: u64, instance: usize) -> u64 {
    splitmix64(base ^ splitmix64(instance as u64))
}

impl ExperimentConfig {
    pub fn from_training(cfg: TrainingConfig) -> Self {
        Self {
            model: cfg.model,
            sector: cfg.sector,
            ansatz: cfg.ansatz,
            optimizer: cfg.optimizer,
            sampler: cfg.sampler,
            reference: cfg.reference,
            seed: cfg.seed,
            sweep: None,
            instances: default_instances(),
            threads: 0,
            out_dir: None,
            anneal: None,
        }
    }

    pub fn training(&self) -> TrainingConfig {
        TrainingConfig {
            model: self.model.clone(),
            sector: self.sector,
            ansatz: self.ansatz.clone(),
            optimizer: self.optimizer.clone(),
            sampler: self.sampler.clone(),
            reference: self.reference.clone(),
            seed: self.seed,
        }
    }

    /// Training config for one sweep value and seed.
    pub fn training_at(&self, value: Option<f64>, seed: u64) -> Result<TrainingConfig> {
        let mut cfg = self.training();
        cfg.seed = seed;
        if let (Some(sw), Some(v)) = (&self.sweep, value) {
            let k = cfg.model.parameter_index(&sw.parameter)?;
            cfg.model.params[k] = v;
        }
        Ok(cfg)
    }

    pub fn sweep_points(&self) -> Vec<Option<f64>> {
        match &self.sweep {
            Some(s) => s.values.iter().map(|&v| Some(v)).collect(),
            None => vec![None],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.instances == 0 {
            return Err(Error::Config("instances must be at least 1".into()));
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(Error::Config("sweep.values is empty".into()));
            }
            for v in &sw.values {
                self.training_at(Some(*v), self.seed)?.validate()?;
            }
        } else {
            self.training().validate()?;
        }
        if let Some(a) = &self.anneal {
            if a.path.is_empty() || a.epochs_per_step == 0 {
                return Err(Error::Config("anneal.path must be non-empty and epochs_per_step positive".into()));
            }
            if self.sweep.is_some() {
                return Err(Error::Config("anneal and sweep cannot be combined".into()));
            }
            for p in &a.path {
                let mut spec = self.model.clone();
                spec.params = p.clone();
                spec.build()?;
            }
        }
        Ok(())
    }
}

/// Reads an experiment config, or the config embedded in a manifest.
pub fn load_experiment_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path.as_ref())?;
    parse_experiment_config(&text)
}

pub fn parse_experiment_config(text: &str) -> Result<ExperimentConfig> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    if value.get("version").is_some() && value.get("config").is_some() {
        let m: Manifest = serde_json::from_value(value)?;
        return Ok(m.config);
    }
    Ok(serde_json::from_value(value)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn curve_csv(curve: &[EpochRecord]) -> String {
    let mut s = String::with_capacity(64 * (curve.len() + 1));
    s.push_str(CURVE_HEADER);
    s.push('\n');
    for r in curve {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.epoch,
            r.energy_re,
            r.energy_im,
            r.energy_std,
            fmt_opt(r.norm_energy),
            r.acceptance,
            r.lambda
        );
    }
    s
}

/// Parses a curve written by [`curve_csv`]; the header must match exactly.
pub fn parse_curve_csv(text: &str) -> Result<Vec<EpochRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CURVE_HEADER) {
        return Err(Error::Format("curve.csv header mismatch".into()));
    }
    let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Format(format!("bad number '{s}'"))) };
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 7 {
                return Err(Error::Format(format!("curve.csv row has {} fields", f.len())));
            }
            Ok(EpochRecord {
                epoch: f[0].parse().map_err(|_| Error::Format(format!("bad epoch '{}'", f[0])))?,
                energy_re: num(f[1])?,
                energy_im: num(f[2])?,
                energy_std: num(f[3])?,
                norm_energy: if f[4].is_empty() { None } else { Some(num(f[4])?) },
                acceptance: num(f[5])?,
                lambda: num(f[6])?,
            })
        })
        .collect()
}

fn write_hashed(root: &Path, rel: &str, bytes: &[u8], hashes: &mut BTreeMap<String, String>) -> Result<()> {
    let path = root.join(rel);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(&path, bytes)?;
    hashes.insert(rel.to_string(), format!("{:x}", Sha256::digest(bytes)));
    Ok(())
}

pub fn point_label(sweep: Option<&SweepSpec>, value: Option<f64>) -> String {
    match (sweep, value) {
        (Some(s), Some(v)) => format!("{}_{}", s.parameter, v),
        _ => "base".to_string(),
    }
}

/// Ground-state energy of `model` in `sector`.
pub fn ed_reference(model: &XyzChain, sector: &BasisSector) -> Result<f64> {
    Ok(lanczos_ground(model, sector, DEFAULT_TOL)?.energy)
}

#[derive(Clone, Debug)]
pub struct InstanceResult {
    pub sweep_value: Option<f64>,
    pub instance: usize,
    pub seed: u64,
    pub outcome: std::result::Result<TrainingOutcome, String>,
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub results: Vec<InstanceResult>,
    pub references: Vec<(Option<f64>, Option<f64>)>,
    pub manifest: Manifest,
}

impl ExperimentReport {
    pub fn n_failed(&self) -> usize {
        self.results.iter().filter(|r| r.outcome.is_err()).count()
    }

    /// Final normalized energies of successful instances at one sweep point.
    pub fn final_norm_energies(&self, value: Option<f64>) -> Vec<f64> {
        self.results
            .iter()
            .filter(|r| r.sweep_value == value)
            .filter_map(|r| r.outcome.as_ref().ok().and_then(|o| o.final_norm_energy))
            .collect()
    }
}

/// Runs `f` on a pool of `threads` workers (`0` = all cores).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(f())
    }
}

fn map_jobs<J: Sync, T: Send>(jobs: &[J], f: impl Fn(&J) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        jobs.par_iter().with_max_len(1).map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    jobs.iter().map(f).collect()
}

/// Runs every (sweep value × instance), writes artifacts when `out_dir` is set.
/// Failures are recorded per instance and do not stop the sweep.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentReport> {
    cfg.validate()?;
    if cfg.anneal.is_some() {
        return Err(Error::Config("config has an anneal section; use the annealing driver".into()));
    }
    let points = cfg.sweep_points();
    let references: Vec<(Option<f64>, Option<f64>)> = points
        .iter()
        .map(|&v| {
            if !cfg.reference.ed {
                return Ok((v, None));
            }
            let t = cfg.training_at(v, cfg.seed)?;
            let model = t.build_model()?;
            let sector = t.resolve_sector(&model)?;
            Ok((v, Some(ed_reference(&model, &sector)?)))
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..cfg.instances).map(move |i| (p, i)))
        .collect();
    let results = with_threads(cfg.threads, || {
        map_jobs(&jobs, |&(p, i)| {
            let value = points[p];
            let seed = instance_seed(cfg.seed, i);
            let start = Instant::now();
            let outcome = cfg
                .training_at(value, seed)
                .and_then(|t| run_training(&t, None, references[p].1, |_, _| Ok(())))
                .map_err(|e| e.to_string());
            InstanceResult {
                sweep_value: value,
                instance: i,
                seed,
                outcome,
                wall_time: start.elapsed().as_secs_f64(),
            }
        })
    })?;

    let mut hashes = BTreeMap::new();
    let summary = summary_text(&results);
    let mut timings = String::from(TIMINGS_HEADER);
    timings.push('\n');
    for r in &results {
        if let (Ok(o), Some(dir)) = (&r.outcome, out_dir) {
            let base = format!("{}/{}", point_label(cfg.sweep.as_ref(), r.sweep_value), r.instance);
            write_hashed(dir, &format!("{base}/curve.csv"), curve_csv(&o.curve).as_bytes(), &mut hashes)?;
            write_hashed(dir, &format!("{base}/final.rbm"), &o.params.to_bytes(), &mut hashes)?;
        }
        let _ = writeln!(timings, "{},{},{:.3}", fmt_opt(r.sweep_value), r.instance, r.wall_time);
    }
    let seeds = results
        .iter()
        .map(|r| SeedEntry {
            sweep_value: r.sweep_value,
            instance: r.instance,
            seed: r.seed,
        })
        .collect();
    let mut manifest = Manifest {
        version: MANIFEST_VERSION,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        seeds,
        stream_assignment: STREAM_ASSIGNMENT.to_string(),
        artifacts: BTreeMap::new(),
    };
    if let Some(dir) = out_dir {
        write_hashed(dir, "summary.csv", summary.as_bytes(), &mut hashes)?;
        fs::write(dir.join("timings.csv"), timings)?;
        let errors: String = results
            .iter()
            .filter_map(|r| {
                r.outcome
                    .as_ref()
                    .err()
                    .map(|e| format!("{},{}: {e}\n", fmt_opt(r.sweep_value), r.instance))
            })
            .collect();
        if !errors.is_empty() {
            fs::write(dir.join("errors.log"), errors)?;
        }
        manifest.artifacts = hashes;
        fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    }
    Ok(ExperimentReport {
        results,
        references,
        manifest,
    })
}

fn summary_text(results: &[InstanceResult]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in results {
        match &r.outcome {
            Ok(o) => {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},ok",
                    fmt_opt(r.sweep_value),
                    r.instance,
                    r.seed,
                    fmt_opt(o.final_norm_energy),
                    fmt_opt(o.final_energy.or(o.curve.last().map(|c| c.energy_re))),
                    o.curve.len()
                );
            }
            Err(_) => {
                let _ = writeln!(s, "{},{},{},,,,failed", fmt_opt(r.sweep_value), r.instance, r.seed);
            }
        }
    }
    s
}

/// `summary.csv` contents.
pub fn summary_csv(report: &ExperimentReport) -> String {
    summary_text(&report.results)
}

#[derive(Clone, Debug)]
pub struct AnnealInstance {
    pub instance: usize,
    pub seed: u64,
    pub outcome: std::result::Result<Vec<AnnealPoint>, String>,
}

fn anneal_csv(points: &[AnnealPoint]) -> String {
    let mut s = String::from(ANNEAL_HEADER);
    s.push('\n');
    for (k, p) in points.iter().enumerate() {
        let params: Vec<String> = p.model_params.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(
            s,
            "{k},{},{},{},{}",
            params.join(";"),
            fmt_opt(p.energy),
            fmt_opt(p.reference),
            fmt_opt(p.norm_energy)
        );
    }
    s
}

/// Runs the annealing path for every instance and writes `anneal.csv` per instance.
pub fn run_anneal_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<Vec<AnnealInstance>> {
    cfg.validate()?;
    let spec = cfg
        .anneal
        .as_ref()
        .ok_or_else(|| Error::Config("config has no anneal section".into()))?;
    let start = spec.start.as_ref().map(RbmParams::load).transpose()?;
    let reference = |m: &XyzChain, s: &BasisSector| -> Result<Option<f64>> {
        if cfg.reference.ed {
            ed_reference(m, s).map(Some)
        } else {
            Ok(None)
        }
    };
    let jobs: Vec<usize> = (0..cfg.instances).collect();
    let results = with_threads(cfg.threads, || {
        map_jobs(&jobs, |&i| {
            let seed = instance_seed(cfg.seed, i);
            let run = || -> Result<(Vec<AnnealPoint>, Vec<EpochRecord>, RbmParams)> {
                let mut t = cfg.training();
                t.seed = seed;
                t.model.params = spec.path[0].clone();
                let init = match &start {
                    Some(p) => p.clone(),
                    None => run_training(&t, None, None, |_, _| Ok(()))?.params,
                };
                let out = anneal(&t, init, &spec.path, spec.epochs_per_step, &reference)?;
                Ok((out.points, out.curve, out.params))
            };
            (i, seed, run())
        })
    })?;
    let mut hashes = BTreeMap::new();
    let mut out = Vec::with_capacity(results.len());
    for (i, seed, r) in results {
        match r {
            Ok((points, curve, params)) => {
                if let Some(dir) = out_dir {
                    write_hashed(dir, &format!("anneal/{i}/anneal.csv"), anneal_csv(&points).as_bytes(), &mut hashes)?;
                    write_hashed(dir, &format!("anneal/{i}/curve.csv"), curve_csv(&curve).as_bytes(), &mut hashes)?;
                    write_hashed(dir, &format!("anneal/{i}/final.rbm"), &params.to_bytes(), &mut hashes)?;
                }
                out.push(AnnealInstance {
                    instance: i,
                    seed,
                    outcome: Ok(points),
                });
            }
            Err(e) => out.push(AnnealInstance {
                instance: i,
                seed,
                outcome: Err(e.to_string()),
            }),
        }
    }
    if let Some(dir) = out_dir {
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            seeds: out
                .iter()
                .map(|r| SeedEntry {
                    sweep_value: None,
                    instance: r.instance,
                    seed: r.seed,
                })
                .collect(),
            stream_assignment: STREAM_ASSIGNMENT.to_string(),
            artifacts: hashes,
        };
        fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    }
    Ok(out)
}

/// One run written straight into `out_dir`: `curve.csv`, `final.rbm`,
/// periodic `checkpoint.rbm`, and `manifest.json`.
pub fn run_single(cfg: &TrainingConfig, out_dir: &Path) -> Result<TrainingOutcome> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let e_ref = if cfg.reference.ed {
        let model = cfg.build_model()?;
        let sector = cfg.resolve_sector(&model)?;
        Some(ed_reference(&model, &sector)?)
    } else {
        None
    };
    let every = cfg.optimizer.checkpoint_every;
    let ckpt = out_dir.join("checkpoint.rbm");
    let outcome = run_training(cfg, None, e_ref, |rec, params| {
        if every > 0 && (rec.epoch + 1) % every == 0 {
            params.save(&ckpt)?;
        }
        Ok(())
    })?;
    let mut hashes = BTreeMap::new();
    write_hashed(out_dir, "curve.csv", curve_csv(&outcome.curve).as_bytes(), &mut hashes)?;
    write_hashed(out_dir, "final.rbm", &outcome.params.to_bytes(), &mut hashes)?;
    let mut exp = ExperimentConfig::from_training(cfg.clone());
    exp.instances = 1;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config: exp,
        seeds: vec![SeedEntry {
            sweep_value: None,
            instance: 0,
            seed: cfg.seed,
        }],
        stream_assignment: STREAM_ASSIGNMENT.to_string(),
        artifacts: hashes,
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(outcome)
}
