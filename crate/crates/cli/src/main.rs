//! `nqs`: batch front end for ground-state search with complex RBMs.
//!
//! Exit status: 0 on success, 1 on runtime failure (including any failed
//! sweep instance), 2 on usage or config-schema errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use nqs_core::basis::{BasisSector, SectorKind};
use nqs_core::config::{default_sector, Method, TrainingConfig};
use nqs_core::ed::{
    correlation, entanglement_entropy, lanczos_ground, susceptibility, top_k_mass, write_gsvec, z2_ground, Axis,
    EdResult, Parity, DEFAULT_TOL,
};
use nqs_core::experiment::{
    load_experiment_config, run_anneal_experiment, run_experiment, run_single, with_threads, ExperimentConfig,
};
use nqs_core::model::{make_model, ModelName, ModelSpec};
use nqs_core::stoq::{classify_txyz_region, find_stoquastic_transformation_for, region_label};
use nqs_core::supervised::{train_supervised, SupervisedConfig, SupervisedData, TargetKind};
use nqs_core::Error;

const CONFIG_HELP: &str = "\
Training config (JSON, unknown keys rejected):
  model      {name, params, n_sites}   name: xxz | xxz-sr | j1j2 | j1j2-sr | txyz | txyz-star | txyz-diamond | custom
  sector     full | jz0                 default: jz0 when magnetization is conserved and N is even
  ansatz     {alpha = 2, sigma = 1e-3}
  optimizer  {method = er | sr, eta = 0.02, lambda0 = 1, lambda_decay = 0.9, lambda_min = 1e-3,
              beta1, beta2, epochs = 3000, target_norm_energy, checkpoint_every = 100}
  sampler    {kind = mcmc | exact, update = flip | exchange, chains = 16, sweeps_between = 1,
              burn_in = 1000, samples_multiplier = 1}
  reference  {ed = true}
  seed       u64 (required)
Experiment configs add:
  sweep      {parameter, values}        parameter names: delta | j1, j2 | a, b, j1, j2
  instances  12
  threads    0 (all cores)
  out_dir    path
  anneal     {path: [[params]...], epochs_per_step, start}
A manifest.json written by a previous run is accepted wherever a config is.";

#[derive(Parser)]
#[command(name = "nqs", version, about = "Variational ground states of spin chains with complex RBMs", after_help = CONFIG_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact ground state and diagnostics.
    Ed(EdArgs),
    /// One optimization run from a training config.
    #[command(after_help = CONFIG_HELP)]
    Vqmc(RunArgs),
    /// Annealing along a path of model parameters.
    #[command(after_help = CONFIG_HELP)]
    Anneal(AnnealArgs),
    /// Search for an on-site signed permutation making the model stoquastic.
    StoqCheck(StoqArgs),
    /// Supervised learning of ground-state amplitudes or signs.
    Supervised(SupervisedArgs),
    /// Parameter sweep over independent instances.
    #[command(after_help = CONFIG_HELP)]
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    model: ModelName,
    /// Comma-separated model parameters.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    params: Vec<f64>,
    #[arg(long = "n", default_value_t = 8)]
    n_sites: usize,
}

#[derive(Args)]
struct EdArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// full | jz0; defaults as for training.
    #[arg(long)]
    sector: Option<SectorKind>,
    /// Restrict to one eigenspace of the global spin flip.
    #[arg(long)]
    parity: Option<ParityArg>,
    /// Entanglement entropy at N/2, susceptibilities, correlations.
    #[arg(long)]
    observables: bool,
    /// Report the probability mass of the K most probable configurations.
    #[arg(long)]
    top_k: Option<usize>,
    /// Write the ground state as a .gsvec file.
    #[arg(long)]
    dump: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ParityArg {
    Even,
    Odd,
}

#[derive(Args)]
struct CommonRun {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonRun,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    method: Option<MethodArg>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MethodArg {
    Sr,
    Er,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonRun,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct AnnealArgs {
    #[command(flatten)]
    common: CommonRun,
    #[arg(long)]
    instances: Option<usize>,
    /// Warm-start checkpoint (.rbm).
    #[arg(long)]
    start: Option<PathBuf>,
}

#[derive(Args)]
struct StoqArgs {
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct SupervisedArgs {
    /// Supervised config (JSON); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelName>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    params: Option<Vec<f64>>,
    #[arg(long = "n")]
    n_sites: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    kind: Option<TargetKind>,
    /// Multiply targets by the Marshall factor.
    #[arg(long)]
    sign_rule: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    minibatch: Option<usize>,
    /// Learning rate of the active optimizer.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    record_every: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "supervised-out")]
    out: PathBuf,
}

enum Failure {
    Schema(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::Json(_)
            | Error::UnknownModel(_)
            | Error::ParameterArity { .. }
            | Error::InvalidModel(_)
            | Error::InvalidSites(_)
            | Error::OddZeroMagnetization(_) => Failure::Schema(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn read_config_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Schema(format!("cannot read config {}: {e}", path.display())))
}

fn load_experiment(path: &Path) -> CliResult<ExperimentConfig> {
    read_config_text(path)?;
    load_experiment_config(path).map_err(|e| Failure::Schema(format!("invalid config {}: {e}", path.display())))
}

fn apply_common(cfg: &mut ExperimentConfig, c: &CommonRun) -> PathBuf {
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.threads {
        cfg.threads = t;
    }
    c.out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("nqs-out"))
}

fn sector_of(kind: Option<SectorKind>, model: &nqs_core::model::XyzChain) -> CliResult<BasisSector> {
    Ok(BasisSector::new(kind.unwrap_or_else(|| default_sector(model)), model.n_sites)?)
}

fn cmd_ed(a: EdArgs) -> CliResult<()> {
    let model = make_model(a.model.model, &a.model.params, a.model.n_sites)?;
    let sector = sector_of(a.sector, &model)?;
    let gs: EdResult = match a.parity {
        None => lanczos_ground(&model, &sector, a.tol)?,
        Some(p) => {
            let parity = match p {
                ParityArg::Even => Parity::Symmetric,
                ParityArg::Odd => Parity::Antisymmetric,
            };
            z2_ground(&model, &sector, parity, a.tol)?
        }
    };
    let mut out = json!({
        "model": a.model.model.as_str(),
        "params": a.model.params,
        "n_sites": a.model.n_sites,
        "sector": sector.kind(),
        "dimension": gs.vector.len(),
        "energy": gs.energy,
        "n_iterations": gs.n_iterations,
        "residual": gs.residual,
    });
    if let Some(p) = a.parity {
        out["parity"] = json!(match p {
            ParityArg::Even => "even",
            ParityArg::Odd => "odd",
        });
    }
    if a.observables {
        let n = a.model.n_sites;
        let mut chi = serde_json::Map::new();
        let mut corr = serde_json::Map::new();
        for (name, axis) in [("x", Axis::X), ("y", Axis::Y), ("z", Axis::Z)] {
            chi.insert(name.into(), json!(susceptibility(&gs, axis)?));
            let c: Vec<f64> = (0..=n / 2).map(|k| correlation(&gs, axis, k)).collect::<nqs_core::Result<_>>()?;
            corr.insert(name.into(), json!(c));
        }
        out["observables"] = json!({
            "entropy_half": entanglement_entropy(&gs, n / 2)?,
            "entropy_units": "nats",
            "susceptibility": chi,
            "susceptibility_definition": "(<J_a^2> - <J_a>^2) / N with J_a the total spin along a",
            "correlations": corr,
        });
    }
    if let Some(k) = a.top_k {
        out["top_k_mass"] = json!({ "k": k, "mass": top_k_mass(&gs, k)? });
    }
    if let Some(path) = &a.dump {
        write_gsvec(&gs, path)?;
        out["dump"] = json!(path);
    }
    print_json(&out);
    Ok(())
}

fn cmd_vqmc(a: RunArgs) -> CliResult<()> {
    let mut exp = load_experiment(&a.common.config)?;
    let out = apply_common(&mut exp, &a.common);
    let mut cfg: TrainingConfig = exp.training();
    if let Some(e) = a.epochs {
        cfg.optimizer.epochs = e;
    }
    if let Some(m) = a.method {
        cfg.optimizer.method = match m {
            MethodArg::Sr => Method::Sr,
            MethodArg::Er => Method::Er,
        };
    }
    cfg.validate()?;
    let outcome = with_threads(exp.threads, || run_single(&cfg, &out))??;
    let last = outcome.curve.last();
    print_json(&json!({
        "out_dir": out,
        "epochs": outcome.curve.len(),
        "final_energy": outcome.final_energy.or(last.map(|r| r.energy_re)),
        "final_norm_energy": outcome.final_norm_energy,
        "reached_target_at": outcome.reached_target_at,
    }));
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CliResult<()> {
    let mut exp = load_experiment(&a.common.config)?;
    let out = apply_common(&mut exp, &a.common);
    if let Some(i) = a.instances {
        exp.instances = i;
    }
    if let Some(e) = a.epochs {
        exp.optimizer.epochs = e;
    }
    exp.validate()?;
    fs::create_dir_all(&out).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", out.display())))?;
    let report = run_experiment(&exp, Some(&out))?;
    let failed = report.n_failed();
    print_json(&json!({
        "out_dir": out,
        "runs": report.results.len(),
        "failed": failed,
        "references": report.references.iter().map(|(v, e)| json!({"sweep_value": v, "energy": e})).collect::<Vec<_>>(),
    }));
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} instance(s) failed; see errors.log")));
    }
    Ok(())
}

fn cmd_anneal(a: AnnealArgs) -> CliResult<()> {
    let mut exp = load_experiment(&a.common.config)?;
    let out = apply_common(&mut exp, &a.common);
    if let Some(i) = a.instances {
        exp.instances = i;
    }
    match (&mut exp.anneal, a.start) {
        (Some(spec), Some(s)) => spec.start = Some(s),
        (None, _) => return Err(Failure::Schema("config has no anneal section".into())),
        _ => {}
    }
    exp.validate()?;
    fs::create_dir_all(&out).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", out.display())))?;
    let results = run_anneal_experiment(&exp, Some(&out))?;
    let failed = results.iter().filter(|r| r.outcome.is_err()).count();
    let rows: Vec<Value> = results
        .iter()
        .map(|r| match &r.outcome {
            Ok(points) => json!({"instance": r.instance, "points": points}),
            Err(e) => json!({"instance": r.instance, "error": e}),
        })
        .collect();
    print_json(&json!({"out_dir": out, "instances": rows}));
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} instance(s) failed")));
    }
    Ok(())
}

fn cmd_stoq(a: StoqArgs) -> CliResult<()> {
    let model = make_model(a.model.model, &a.model.params, a.model.n_sites)?;
    let v = find_stoquastic_transformation_for(&model);
    let checked: Vec<Value> = v
        .checked_permutations
        .iter()
        .map(|c| json!({"permutation": c.perm.to_string(), "satisfied": c.satisfied, "needs_parity_flip": c.needs_parity_flip}))
        .collect();
    let mut out = json!({
        "model": a.model.model.as_str(),
        "params": a.model.params,
        "n_sites": a.model.n_sites,
        "stoquastic_as_written": model.is_stoquastic_as_written(),
        "transformable": v.transformable,
        "witness": v.witness.map(|w| w.perm.to_string()),
        "witness_signs": v.witness.map(|w| w.signs),
        "parity_site_flip": v.witness.map(|w| w.parity_site_flip),
        "rank_degenerate": v.rank_degenerate,
        "checked": checked,
    });
    if a.model.model == ModelName::Txyz {
        let p = &a.model.params;
        let region = classify_txyz_region(p[0], p[1], p[2], p[3]);
        out["closed_form_region"] = json!(region_label(&region));
    }
    print_json(&out);
    Ok(())
}

fn cmd_supervised(a: SupervisedArgs) -> CliResult<()> {
    let mut cfg: SupervisedConfig = match &a.config {
        Some(p) => serde_json::from_str(&read_config_text(p)?)
            .map_err(|e| Failure::Schema(format!("invalid config {}: {e}", p.display())))?,
        None => SupervisedConfig {
            model: ModelSpec {
                name: a.model.unwrap_or(ModelName::J1J2),
                params: a.params.clone().unwrap_or_else(|| vec![1.0, 0.2]),
                n_sites: a.n_sites.unwrap_or(12),
            },
            width: 8,
            kind: a.kind.unwrap_or(TargetKind::Amplitude),
            sign_rule: false,
            minibatch: None,
            ngd: Default::default(),
            adam: Default::default(),
            epochs: 1000,
            record_every: 10,
            seed: 0,
        },
    };
    if let Some(m) = a.model {
        cfg.model.name = m;
    }
    if let Some(p) = a.params {
        cfg.model.params = p;
    }
    if let Some(n) = a.n_sites {
        cfg.model.n_sites = n;
    }
    if let Some(w) = a.width {
        cfg.width = w;
    }
    if let Some(k) = a.kind {
        cfg.kind = k;
    }
    cfg.sign_rule |= a.sign_rule;
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if a.minibatch.is_some() {
        cfg.minibatch = a.minibatch;
    }
    if let Some(e) = a.eta {
        match cfg.kind {
            TargetKind::Amplitude => cfg.ngd.eta = e,
            TargetKind::Sign => cfg.adam.eta = e,
        }
    }
    if let Some(r) = a.record_every {
        cfg.record_every = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let model = cfg.model.build()?;
    let sector = sector_of(None, &model)?;
    let gs = lanczos_ground(&model, &sector, DEFAULT_TOL)?;
    let data = SupervisedData::from_ground_state(&gs, cfg.sign_rule)?;
    let outcome = train_supervised(&cfg, &data)?;
    let io = |e: std::io::Error| Failure::Runtime(e.to_string());
    fs::create_dir_all(&a.out).map_err(io)?;
    let mut csv = String::from("epoch,loss,infidelity\n");
    for r in &outcome.curve {
        csv.push_str(&format!("{},{},{}\n", r.epoch, r.loss, r.infidelity));
    }
    fs::write(a.out.join("curve.csv"), csv).map_err(io)?;
    outcome.net.save(a.out.join("model.json"))?;
    fs::write(
        a.out.join("config.json"),
        serde_json::to_vec_pretty(&cfg).map_err(|e| Failure::Runtime(e.to_string()))?,
    )
    .map_err(io)?;
    print_json(&json!({
        "out_dir": a.out,
        "ed_energy": gs.energy,
        "n_params": outcome.net.n_params(),
        "final_infidelity": outcome.final_infidelity,
        "negative_target_mass": data.negative_mass(),
    }));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.command {
        Command::Ed(a) => cmd_ed(a),
        Command::Vqmc(a) => cmd_vqmc(a),
        Command::Anneal(a) => cmd_anneal(a),
        Command::StoqCheck(a) => cmd_stoq(a),
        Command::Supervised(a) => cmd_supervised(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Schema(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
