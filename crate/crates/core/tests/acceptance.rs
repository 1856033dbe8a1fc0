//! Acceptance checks, one line per criterion. Run with
//! `cargo test -p nqs-core --release --test acceptance`; pass criterion
//! numbers as arguments to run a subset.

use std::collections::BTreeSet;
use std::time::Instant;

use num_complex::Complex64 as C64;
use rand::Rng;

use nqs_core::basis::{low_mask, BasisSector, SectorKind, SpinConfig};
use nqs_core::config::{default_sector, Method, SamplerKind, TrainingConfig};
use nqs_core::ed::{dense_spectrum, lanczos_full_spectrum, lanczos_ground, top_k_mass, DEFAULT_TOL};
use nqs_core::experiment::{
    instance_seed, load_experiment_config, run_experiment, ExperimentConfig, ExperimentReport, SweepSpec,
};
use nqs_core::model::{make_model, ModelName, ModelSpec, XyzChain};
use nqs_core::optimizer::{anneal, run_training};
use nqs_core::rbm::RbmParams;
use nqs_core::sampling::{
    build_exact_table, draw_batch, exact_sample, stream_rng, TabulatedState, TemperedEnsemble, UpdateRule,
};
use nqs_core::stoq::find_stoquastic_transformation_for;
use nqs_core::supervised::{
    epochs_to_reach, train_supervised, ConvNet, SupervisedConfig, SupervisedData, TargetKind,
};

type Check = (bool, String);

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn model(name: ModelName, params: &[f64], n: usize) -> XyzChain {
    make_model(name, params, n).unwrap()
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn zoo() -> Vec<(ModelName, Vec<f64>)> {
    vec![
        (ModelName::Xxz, vec![0.7]),
        (ModelName::XxzSignRule, vec![1.3]),
        (ModelName::J1J2, vec![1.0, 0.35]),
        (ModelName::J1J2SignRule, vec![1.0, 0.6]),
        (ModelName::Txyz, vec![0.4, 1.3, -1.0, -1.0]),
        (ModelName::TxyzStar, vec![1.2, 0.6, -1.0, 0.5]),
        (ModelName::TxyzDiamond, vec![0.27, 0.77, -1.0, -1.0]),
        (ModelName::Custom, vec![0.3, -0.8, 1.1, 0.5, 0.2, -0.4, 1.0, 0.7]),
    ]
}

fn c1_ed() -> Check {
    const TOL_SPECTRUM: f64 = 1e-10;
    const TOL_ENERGY: f64 = 1e-8;
    let mut worst: f64 = 0.0;
    for (name, p) in zoo() {
        for n in 4..=6 {
            let Ok(m) = make_model(name, &p, n) else {
                // sign-rule variants exist only for even chains
                assert!(n % 2 == 1, "{name:?} rejected N={n}");
                continue;
            };
            let mut kinds = vec![SectorKind::Full];
            if m.conserves_magnetization() && n % 2 == 0 {
                kinds.push(SectorKind::ZeroMagnetization);
            }
            for k in kinds {
                let s = BasisSector::new(k, n).unwrap();
                let d = sorted(dense_spectrum(&m, &s).unwrap());
                let l = sorted(lanczos_full_spectrum(&m, &s).unwrap());
                worst = worst.max(max_abs_diff(&d, &l));
            }
        }
    }
    let heis = lanczos_ground(&model(ModelName::Xxz, &[1.0], 4), &BasisSector::full(4).unwrap(), DEFAULT_TOL)
        .unwrap()
        .energy;
    let mg = lanczos_ground(
        &model(ModelName::J1J2, &[1.0, 0.5], 12),
        &BasisSector::zero_magnetization(12).unwrap(),
        DEFAULT_TOL,
    )
    .unwrap()
    .energy;
    let ok = worst < TOL_SPECTRUM && (heis + 8.0).abs() < TOL_ENERGY && (mg + 18.0).abs() < TOL_ENERGY;
    (
        ok,
        format!("max |dense - lanczos| = {worst:.2e}, Heisenberg N=4 E0 = {heis:.12}, Majumdar-Ghosh N=12 E0 = {mg:.12}"),
    )
}

fn relative_error(fd: &[f64], an: &[f64]) -> f64 {
    let num: f64 = fd.iter().zip(an).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = an.iter().map(|v| v * v).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

fn c2_gradients() -> Check {
    const INSTANCES: usize = 100;
    const TOL_RBM: f64 = 1e-6;
    const TOL_NET: f64 = 1e-5;
    let mut rng = stream_rng(2, 0);
    let mut worst_rbm: f64 = 0.0;
    for _ in 0..INSTANCES {
        let n = rng.random_range(4..=12);
        let alpha = rng.random_range(1..=3);
        let p = RbmParams::init_random(n, alpha, 0.4, &mut rng).unwrap();
        let x = SpinConfig::new(rng.random::<u64>() & low_mask(n), n).unwrap();
        let an = p.log_derivatives(x);
        let base = p.to_vector();
        let h = 1e-5;
        let mut fd = Vec::with_capacity(2 * base.len());
        let mut flat = Vec::with_capacity(2 * base.len());
        for k in 0..base.len() {
            let eval = |d: f64| {
                let mut v = base.clone();
                v[k] += C64::new(d, 0.0);
                let mut q = p.clone();
                q.set_from_vector(&v).unwrap();
                (q.log_psi(x) - p.log_psi(x)).exp()
            };
            let g = (eval(h) - eval(-h)) / (2.0 * h);
            fd.extend([g.re, g.im]);
            flat.extend([an[k].re, an[k].im]);
        }
        worst_rbm = worst_rbm.max(relative_error(&fd, &flat));
    }
    let mut worst_net: f64 = 0.0;
    for _ in 0..INSTANCES {
        let n = 2 * rng.random_range(3..=6);
        let w = 2 * rng.random_range(2..=4);
        let net = ConvNet::glorot(n, w, &mut rng).unwrap();
        let x = SpinConfig::new(rng.random::<u64>() & low_mask(n), n).unwrap();
        let (_, an) = net.gradient(x);
        let base = net.to_vector();
        let h = 1e-5;
        let fd: Vec<f64> = (0..base.len())
            .map(|k| {
                let eval = |d: f64| {
                    let mut v = base.clone();
                    v[k] += d;
                    let mut q = net.clone();
                    q.set_from_vector(&v).unwrap();
                    q.forward(x)
                };
                (eval(h) - eval(-h)) / (2.0 * h)
            })
            .collect();
        worst_net = worst_net.max(relative_error(&fd, &an));
    }
    (
        worst_rbm < TOL_RBM && worst_net < TOL_NET,
        format!("{INSTANCES} instances each: worst relative error RBM {worst_rbm:.2e}, convnet {worst_net:.2e}"),
    )
}

fn c3_spectral_invariance() -> Check {
    const TOL: f64 = 1e-10;
    const N: usize = 8;
    let mut worst: f64 = 0.0;
    let full = BasisSector::full(N).unwrap();
    for delta in [0.5, 1.0, 1.7] {
        let a = sorted(dense_spectrum(&model(ModelName::Xxz, &[delta], N), &full).unwrap());
        let b = sorted(dense_spectrum(&model(ModelName::XxzSignRule, &[delta], N), &full).unwrap());
        worst = worst.max(max_abs_diff(&a, &b));
    }
    for (j1, j2) in [(1.0, 0.3), (1.0, 0.5)] {
        let a = sorted(dense_spectrum(&model(ModelName::J1J2, &[j1, j2], N), &full).unwrap());
        let b = sorted(dense_spectrum(&model(ModelName::J1J2SignRule, &[j1, j2], N), &full).unwrap());
        worst = worst.max(max_abs_diff(&a, &b));
    }
    for p in [[0.27, 0.77, -1.0, -1.0], [1.23, 1.73, -1.0, -1.0], [0.6, 1.4, 1.0, -0.5]] {
        let base = sorted(dense_spectrum(&model(ModelName::Txyz, &p, N), &full).unwrap());
        for v in [ModelName::TxyzStar, ModelName::TxyzDiamond] {
            let s = sorted(dense_spectrum(&model(v, &p, N), &full).unwrap());
            worst = worst.max(max_abs_diff(&base, &s));
        }
    }
    (worst < TOL, format!("N={N}: max sorted-spectrum difference {worst:.2e}"))
}

fn c4_stoquasticity() -> Check {
    const GRID: usize = 41;
    let mut mismatches = 0;
    let mut bad_witnesses = 0;
    for i in 0..GRID {
        for j in 0..GRID {
            let (a, b) = (i as f64 / 20.0, j as f64 / 20.0);
            let m = model(ModelName::Txyz, &[a, b, -1.0, -1.0], 8);
            let v = find_stoquastic_transformation_for(&m);
            let expected = (a <= 1.0 && b <= 1.0) || (a >= 1.0 && b >= 1.0);
            if v.transformable != expected {
                mismatches += 1;
            }
            if let Some(w) = &v.witness {
                if !m.apply_signed_permutation(w).unwrap().is_stoquastic_as_written() {
                    bad_witnesses += 1;
                }
            }
        }
    }
    let j1j2_flagged = [0.05, 0.2, 0.44, 0.5, 1.0]
        .iter()
        .filter(|&&j2| find_stoquastic_transformation_for(&model(ModelName::J1J2, &[1.0, j2], 8)).transformable)
        .count();
    (
        mismatches == 0 && bad_witnesses == 0 && j1j2_flagged == 0,
        format!(
            "{GRID}x{GRID} grid on [0,2]^2: {mismatches} verdict mismatches, {bad_witnesses} failing witnesses; \
             J1-J2 with J2>0 reported transformable {j1j2_flagged} times"
        ),
    )
}

fn c5_exact_sampler() -> Check {
    const TOL: f64 = 0.02;
    const DRAWS: usize = 100_000;
    const N: usize = 10;
    let sector = BasisSector::full(N).unwrap();
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let p = RbmParams::init_random(N, 1, 0.5, &mut stream_rng(seed, 7)).unwrap();
        let table = build_exact_table(&p, &sector).unwrap();
        let mut rng = stream_rng(seed, 8);
        let mut counts = vec![0usize; sector.size().unwrap()];
        for _ in 0..DRAWS {
            let x = exact_sample(&table, &sector, &mut rng).unwrap();
            counts[sector.index_of(x).unwrap()] += 1;
        }
        let configs = sector.enumerate().unwrap();
        let w: Vec<f64> = configs.iter().map(|&x| (2.0 * p.log_psi(x).re).exp()).collect();
        let z: f64 = w.iter().sum();
        let tv = 0.5
            * counts
                .iter()
                .zip(&w)
                .map(|(&c, &q)| (c as f64 / DRAWS as f64 - q / z).abs())
                .sum::<f64>();
        worst = worst.max(tv);
    }
    (worst < TOL, format!("N={N}, {DRAWS} draws, 5 random RBMs: worst TV distance {worst:.4}"))
}

fn er_experiment(name: ModelName, params: Vec<f64>, n: usize, alpha: usize, epochs: usize) -> ExperimentConfig {
    let mut t = TrainingConfig::new(ModelSpec { name, params, n_sites: n }, 20_240_601);
    t.optimizer.method = Method::Er;
    t.optimizer.epochs = epochs;
    t.ansatz.alpha = alpha;
    ExperimentConfig::from_training(t)
}

fn run(cfg: &ExperimentConfig) -> ExperimentReport {
    let r = run_experiment(cfg, None).unwrap();
    assert_eq!(r.n_failed(), 0, "failed instances in acceptance run");
    r
}

fn c6_er_stoquastic() -> Check {
    const TARGET: f64 = 1e-4;
    const MAX_EPOCHS: usize = 2000;
    const NEEDED: usize = 10;
    let mut cfg = er_experiment(ModelName::XxzSignRule, vec![1.0], 10, 2, MAX_EPOCHS);
    cfg.optimizer.target_norm_energy = Some(TARGET);
    cfg.instances = 12;
    cfg.sweep = Some(SweepSpec {
        parameter: "delta".into(),
        values: vec![0.5, 1.0, 1.5],
    });
    let r = run(&cfg);
    let mut ok = true;
    let mut parts = vec![];
    for d in [0.5, 1.0, 1.5] {
        let hits = r
            .results
            .iter()
            .filter(|x| x.sweep_value == Some(d))
            .filter(|x| {
                let o = x.outcome.as_ref().unwrap();
                o.curve.len() <= MAX_EPOCHS && o.final_norm_energy.is_some_and(|e| e <= TARGET)
            })
            .count();
        ok &= hits >= NEEDED;
        let epochs = median(
            r.results
                .iter()
                .filter(|x| x.sweep_value == Some(d))
                .map(|x| x.outcome.as_ref().unwrap().curve.len() as f64)
                .collect(),
        );
        parts.push(format!("delta={d}: {hits}/12 (median {epochs} epochs)"));
    }
    (ok, format!("N=10, alpha=2, reduced energy <= {TARGET:.0e}: {}", parts.join(", ")))
}

fn c7_nonstoquastic_gap() -> Check {
    const EPOCHS: usize = 150;
    const PROBE: usize = 100;
    const RATIO: f64 = 10.0;
    const N: usize = 16;
    let mut cfg = er_experiment(ModelName::J1J2SignRule, vec![1.0, 0.2], N, 1, EPOCHS);
    cfg.instances = 12;
    cfg.sweep = Some(SweepSpec {
        parameter: "j2".into(),
        values: vec![0.2, 0.44],
    });
    let r = run(&cfg);
    let easy = median(r.final_norm_energies(Some(0.2)));
    let hard = median(r.final_norm_energies(Some(0.44)));
    let easy_probe = median(
        r.results
            .iter()
            .filter(|x| x.sweep_value == Some(0.2))
            .filter_map(|x| x.outcome.as_ref().unwrap().curve[PROBE].norm_energy)
            .collect(),
    );
    let mut ok = hard >= RATIO * easy;
    let mut parts = vec![format!(
        "alpha=1, {EPOCHS} epochs, 12 instances: median E~(0.44) = {hard:.2e}, median E~(0.2) = {easy:.2e}, ratio {:.1}",
        hard / easy
    )];
    for alpha in [2, 4] {
        let mut c = er_experiment(ModelName::J1J2SignRule, vec![1.0, 0.44], N, alpha, PROBE);
        c.instances = 3;
        let m = median(run(&c).final_norm_energies(None));
        ok &= m >= RATIO * easy_probe;
        parts.push(format!("alpha={alpha}, {PROBE} epochs, 3 instances: median E~(0.44) = {m:.2e}"));
    }
    parts.push(format!("alpha=1 E~(0.2) after {PROBE} epochs = {easy_probe:.2e}"));
    (ok, parts.join("; "))
}

fn c8_sign_invariance() -> Check {
    const N: usize = 8;
    let sector = BasisSector::full(N).unwrap();
    let configs = sector.enumerate().unwrap();
    let mut identical = 0;
    let cases = 32;
    for case in 0..cases {
        let mut rng = stream_rng(case, 0);
        let p = RbmParams::init_random(N, 2, 0.6, &mut rng).unwrap();
        let base: Vec<C64> = configs.iter().map(|&x| p.log_psi(x)).collect();
        let flipped: Vec<C64> = base
            .iter()
            .map(|l| if rng.random::<bool>() { l + C64::new(0.0, std::f64::consts::PI) } else { *l })
            .collect();
        let a = TabulatedState { sector: sector.clone(), log_psi: &base };
        let b = TabulatedState { sector: sector.clone(), log_psi: &flipped };
        let rule = if case % 2 == 0 { UpdateRule::Flip } else { UpdateRule::Exchange };
        let mut ea = TemperedEnsemble::new(&a, 8, rule, case).unwrap();
        let mut eb = TemperedEnsemble::new(&b, 8, rule, case).unwrap();
        let xa = draw_batch(&mut ea, &a, 200, 1);
        let xb = draw_batch(&mut eb, &b, 200, 1);
        let same_counts = ea
            .chains
            .iter()
            .zip(&eb.chains)
            .all(|(u, v)| u.accept_count == v.accept_count && u.proposal_count == v.proposal_count);
        let q = p.conj();
        let mut ec = TemperedEnsemble::new(&p, 8, rule, case).unwrap();
        let mut ed = TemperedEnsemble::new(&q, 8, rule, case).unwrap();
        let same_conj = draw_batch(&mut ec, &p, 200, 1) == draw_batch(&mut ed, &q, 200, 1)
            && ec.chains.iter().zip(&ed.chains).all(|(u, v)| u.accept_count == v.accept_count);
        if xa == xb && same_counts && ea.swap_accepts == eb.swap_accepts && same_conj {
            identical += 1;
        }
    }
    (
        identical == cases,
        format!("{identical}/{cases} random sign patterns and phase conjugations give bit-identical chains"),
    )
}

fn c9_heavy_tail() -> Check {
    const K: usize = 1000;
    const FACTOR: f64 = 2.0;
    let mass = |name: ModelName, a: f64, b: f64| {
        let m = model(name, &[a, b, -1.0, -1.0], 16);
        let s = BasisSector::new(default_sector(&m), 16).unwrap();
        top_k_mass(&lanczos_ground(&m, &s, DEFAULT_TOL).unwrap(), K).unwrap()
    };
    let inside = mass(ModelName::TxyzDiamond, 0.27, 0.77);
    let outside = mass(ModelName::TxyzDiamond, 1.23, 1.73);
    let plain_inside = mass(ModelName::Txyz, 0.27, 0.77);
    let plain_outside = mass(ModelName::Txyz, 1.23, 1.73);
    (
        inside >= FACTOR * outside,
        format!(
            "N=16 top-{K} mass of txyz-diamond: {inside:.4} at (0.27,0.77), {outside:.4} at (1.23,1.73), ratio {:.2}; \
             same points in the txyz basis: {plain_inside:.4} vs {plain_outside:.4}, ratio {:.2}",
            inside / outside,
            plain_inside / plain_outside
        ),
    )
}

fn c10_annealing() -> Check {
    const N: usize = 12;
    const ALPHA: usize = 1;
    const INIT_EPOCHS: usize = 1000;
    const PER_STEP: usize = 200;
    const RANDOM_EPOCHS: usize = 400;
    const INSTANCES: usize = 12;
    const STRIDE: usize = 3;
    const FRACTION: f64 = 0.8;
    let path: Vec<Vec<f64>> = (0..22)
        .map(|k| {
            let d = 0.01 * k as f64;
            vec![1.01 - d, 1.51 - d, -1.0, -1.0]
        })
        .collect();
    let mut t = TrainingConfig::new(
        ModelSpec {
            name: ModelName::TxyzDiamond,
            params: path[0].clone(),
            n_sites: N,
        },
        31,
    );
    t.optimizer.method = Method::Er;
    t.ansatz.alpha = ALPHA;
    t.optimizer.epochs = INIT_EPOCHS;
    let reference = |m: &XyzChain, s: &BasisSector| -> nqs_core::Result<Option<f64>> {
        Ok(Some(lanczos_ground(m, s, DEFAULT_TOL)?.energy))
    };
    let sector = t.resolve_sector(&t.build_model().unwrap()).unwrap();
    let e0 = reference(&t.build_model().unwrap(), &sector).unwrap();
    let start = run_training(&t, None, e0, |_, _| Ok(())).unwrap().params;
    let annealed = anneal(&t, start, &path, PER_STEP, &reference).unwrap();
    let mut wins = 0;
    let mut checked = 0;
    let mut worst_ratio: f64 = 0.0;
    for point in annealed.points.iter().step_by(STRIDE) {
        let mut r = t.clone();
        r.model.params = point.model_params.clone();
        r.optimizer.epochs = RANDOM_EPOCHS;
        let random: Vec<f64> = (0..INSTANCES)
            .map(|i| {
                r.seed = instance_seed(t.seed, i);
                run_training(&r, None, point.reference, |_, _| Ok(())).unwrap().final_norm_energy.unwrap()
            })
            .collect();
        let med = median(random);
        let e = point.norm_energy.unwrap();
        checked += 1;
        if e <= med {
            wins += 1;
        }
        worst_ratio = worst_ratio.max(e / med);
    }
    (
        wins as f64 >= FRACTION * checked as f64,
        format!(
            "N={N}, alpha={ALPHA}, {PER_STEP} epochs per step: annealed <= median of {INSTANCES} random-init runs \
             ({RANDOM_EPOCHS} epochs) at {wins}/{checked} path points; worst ratio {worst_ratio:.2}"
        ),
    )
}

const SUP_N: usize = 16;
const SUP_WIDTH: usize = 8;

fn supervised_data(j2: f64, rule: bool) -> SupervisedData {
    let m = model(ModelName::J1J2, &[1.0, j2], SUP_N);
    let s = BasisSector::new(default_sector(&m), SUP_N).unwrap();
    SupervisedData::from_ground_state(&lanczos_ground(&m, &s, DEFAULT_TOL).unwrap(), rule).unwrap()
}

/// Mean infidelity over the records of the last `tail` epochs, and the first
/// recorded epoch below 1e-3.
fn supervised_run(j2: f64, kind: TargetKind, rule: bool, epochs: usize, eta: f64, seed: u64) -> (f64, Option<usize>) {
    const TAIL: usize = 100;
    let mut cfg = SupervisedConfig {
        model: ModelSpec {
            name: ModelName::J1J2,
            params: vec![1.0, j2],
            n_sites: SUP_N,
        },
        width: SUP_WIDTH,
        kind,
        sign_rule: rule,
        minibatch: None,
        ngd: Default::default(),
        adam: Default::default(),
        epochs,
        record_every: 10,
        seed,
    };
    cfg.ngd.eta = eta;
    cfg.adam.eta = eta;
    let out = train_supervised(&cfg, &supervised_data(j2, rule)).unwrap();
    let tail: Vec<f64> = out
        .curve
        .iter()
        .filter(|r| r.epoch + TAIL > epochs)
        .map(|r| r.infidelity)
        .collect();
    (tail.iter().sum::<f64>() / tail.len() as f64, epochs_to_reach(&out.curve, 1e-3))
}

fn c11_supervised() -> Check {
    const AMP_EPOCHS: usize = 600;
    const AMP_ETA: f64 = 1e-2;
    const SIGN_EPOCHS: usize = 1000;
    const SIGN_ETA: f64 = 3e-3;
    const SEEDS: [u64; 3] = [5, 6, 7];
    const FINAL_FACTOR: f64 = 2.0;
    const FLOOR: f64 = 1e-12;
    let med = |j2, kind, rule, epochs, eta| {
        let runs: Vec<(f64, Option<usize>)> =
            SEEDS.iter().map(|&s| supervised_run(j2, kind, rule, epochs, eta, s)).collect();
        let fin = median(runs.iter().map(|r| r.0).collect());
        let warm = median(runs.iter().map(|r| r.1.map_or(f64::INFINITY, |v| v as f64)).collect());
        (fin, warm)
    };
    let amp_easy = med(0.2, TargetKind::Amplitude, false, AMP_EPOCHS, AMP_ETA).0;
    let amp_hard = med(0.44, TargetKind::Amplitude, false, AMP_EPOCHS, AMP_ETA).0;
    let sign_easy = med(0.2, TargetKind::Sign, false, SIGN_EPOCHS, SIGN_ETA).0;
    let sign_hard = med(0.44, TargetKind::Sign, false, SIGN_EPOCHS, SIGN_ETA).0;
    let (fr, wr) = med(0.0, TargetKind::Sign, true, SIGN_EPOCHS, SIGN_ETA);
    let (fw, ww) = med(0.0, TargetKind::Sign, false, SIGN_EPOCHS, SIGN_ETA);
    let ok = amp_hard > amp_easy
        && sign_hard > sign_easy
        && wr.is_finite()
        && 2.0 * wr <= ww
        && fr <= FINAL_FACTOR * fw.max(FLOOR)
        && fw <= FINAL_FACTOR * fr.max(FLOOR);
    (
        ok,
        format!(
            "N={SUP_N}, W={SUP_WIDTH}, medians over {} seeds of the last-100-epoch mean infidelity: \
             amplitude {amp_hard:.2e} (J2=0.44) vs {amp_easy:.2e} (J2=0.2); sign {sign_hard:.2e} vs {sign_easy:.2e}; \
             J2=0 sign network reaches 1e-3 at epoch {wr} with the Marshall rule, {ww} without; final {fr:.1e} vs {fw:.1e}",
            SEEDS.len()
        ),
    )
}

fn c12_determinism() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let mut t = TrainingConfig::new(
        ModelSpec {
            name: ModelName::XxzSignRule,
            params: vec![1.0],
            n_sites: 8,
        },
        77,
    );
    t.optimizer.method = Method::Sr;
    t.optimizer.epochs = 40;
    t.ansatz.alpha = 1;
    t.sampler.kind = SamplerKind::Exact;
    let mut cfg = ExperimentConfig::from_training(t);
    cfg.instances = 3;
    cfg.sweep = Some(SweepSpec {
        parameter: "delta".into(),
        values: vec![0.5, 1.5],
    });
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    run_experiment(&cfg, Some(&first)).unwrap();
    let again = load_experiment_config(first.join("manifest.json")).unwrap();
    run_experiment(&again, Some(&second)).unwrap();
    let a = std::fs::read(first.join("summary.csv")).unwrap();
    let b = std::fs::read(second.join("summary.csv")).unwrap();
    (
        a == b && !a.is_empty(),
        format!("summary.csv {} bytes, rerun from manifest identical: {}", a.len(), a == b),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Check); 12] = [
        ("ED correctness", c1_ed),
        ("gradient fidelity", c2_gradients),
        ("spectral invariance", c3_spectral_invariance),
        ("stoquasticity analyzer", c4_stoquasticity),
        ("exact sampler statistics", c5_exact_sampler),
        ("ER convergence, stoquastic side", c6_er_stoquastic),
        ("non-stoquastic gap", c7_nonstoquastic_gap),
        ("sign invariance of sampling", c8_sign_invariance),
        ("heavy-tail diagnostic", c9_heavy_tail),
        ("annealing advantage", c10_annealing),
        ("supervised ordering", c11_supervised),
        ("determinism", c12_determinism),
    ];
    let selected: BTreeSet<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let k = i + 1;
        if !selected.is_empty() && !selected.contains(&k) {
            continue;
        }
        let t = Instant::now();
        let (ok, detail) = f();
        println!(
            "criterion {k:>2} {} {name}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
        if !ok {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
