//! Browser bindings: stoquasticity map, exact diagnostics, and a live
//! exact-reconfiguration trainer. Results are returned as JSON strings.

use serde_json::json;
use wasm_bindgen::prelude::*;

use nqs_core::basis::BasisSector;
use nqs_core::config::{default_sector, Method, TrainingConfig};
use nqs_core::ed::{entanglement_entropy, lanczos_ground, susceptibility, top_k_mass, Axis, DEFAULT_TOL};
use nqs_core::model::{make_model, ModelName, ModelSpec};
use nqs_core::optimizer::{normalized_energy, Trainer};
use nqs_core::stoq::{classify_txyz_region, find_stoquastic_transformation_for, region_label};

/// Largest chain the page accepts; keeps each call well under a second.
pub const MAX_SITES: usize = 14;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn parse_model(name: &str) -> Result<ModelName, JsValue> {
    name.parse().map_err(js_err)
}

fn check_sites(n: usize) -> Result<(), JsValue> {
    if n > MAX_SITES {
        return Err(js_err(format!("at most {MAX_SITES} sites in the browser")));
    }
    Ok(())
}

/// Closed-form region codes for the twisted XYZ model on a `res × res` grid
/// over `[0, a_max] × [0, b_max]`, row-major with `b` varying slowest.
/// Code: 0 = no on-site transformation, 1 = identity works, 2 = (2,3) works,
/// 3 = (1,3) works, 4 = only other permutations work.
#[wasm_bindgen]
pub fn txyz_region_map(res: usize, a_max: f64, b_max: f64, j1: f64, j2: f64) -> Vec<u8> {
    let res = res.clamp(2, 400);
    let mut out = Vec::with_capacity(res * res);
    for jb in 0..res {
        let b = b_max * jb as f64 / (res - 1) as f64;
        for ja in 0..res {
            let a = a_max * ja as f64 / (res - 1) as f64;
            let perms = classify_txyz_region(a, b, j1, j2);
            let labels: Vec<String> = perms.iter().map(|p| p.to_string()).collect();
            let has = |l: &str| labels.iter().any(|p| p == l);
            out.push(if labels.is_empty() {
                0
            } else if has("()") {
                1
            } else if has("(2,3)") {
                2
            } else if has("(1,3)") {
                3
            } else {
                4
            });
        }
    }
    out
}

/// Full signed-permutation search for one model, as JSON.
#[wasm_bindgen]
pub fn stoq_verdict(model: &str, params: &[f64], n_sites: usize) -> Result<String, JsValue> {
    let name = parse_model(model)?;
    let m = make_model(name, params, n_sites).map_err(js_err)?;
    let v = find_stoquastic_transformation_for(&m);
    let mut out = json!({
        "stoquastic_as_written": m.is_stoquastic_as_written(),
        "transformable": v.transformable,
        "witness": v.witness.map(|w| w.to_string()),
    });
    if name == ModelName::Txyz && params.len() == 4 {
        out["closed_form_region"] = json!(region_label(&classify_txyz_region(params[0], params[1], params[2], params[3])));
    }
    Ok(out.to_string())
}

/// Exact ground-state energy and diagnostics, as JSON.
#[wasm_bindgen]
pub fn ed_diagnostics(model: &str, params: &[f64], n_sites: usize, top_k: usize) -> Result<String, JsValue> {
    check_sites(n_sites)?;
    let m = make_model(parse_model(model)?, params, n_sites).map_err(js_err)?;
    let sector = BasisSector::new(default_sector(&m), n_sites).map_err(js_err)?;
    let gs = lanczos_ground(&m, &sector, DEFAULT_TOL).map_err(js_err)?;
    let chi = |a| susceptibility(&gs, a).map_err(js_err);
    Ok(json!({
        "energy": gs.energy,
        "energy_per_site": gs.energy / n_sites as f64,
        "sector": sector.kind(),
        "dimension": gs.vector.len(),
        "entropy_half": entanglement_entropy(&gs, n_sites / 2).map_err(js_err)?,
        "susceptibility": { "x": chi(Axis::X)?, "y": chi(Axis::Y)?, "z": chi(Axis::Z)? },
        "top_k_mass": top_k_mass(&gs, top_k.max(1)).map_err(js_err)?,
    })
    .to_string())
}

/// Exact-reconfiguration optimizer driven one batch of epochs at a time.
#[wasm_bindgen]
pub struct ErTrainer {
    trainer: Trainer,
}

#[wasm_bindgen]
impl ErTrainer {
    #[wasm_bindgen(constructor)]
    pub fn new(model: &str, params: &[f64], n_sites: usize, alpha: usize, eta: f64, seed: u64) -> Result<ErTrainer, JsValue> {
        check_sites(n_sites)?;
        let mut cfg = TrainingConfig::new(
            ModelSpec {
                name: parse_model(model)?,
                params: params.to_vec(),
                n_sites,
            },
            seed,
        );
        cfg.optimizer.method = Method::Er;
        cfg.optimizer.eta = eta;
        cfg.ansatz.alpha = alpha.max(1);
        let m = cfg.build_model().map_err(js_err)?;
        let sector = cfg.resolve_sector(&m).map_err(js_err)?;
        let e0 = lanczos_ground(&m, &sector, DEFAULT_TOL).map_err(js_err)?.energy;
        let trainer = Trainer::new(&cfg, None, Some(e0)).map_err(js_err)?;
        Ok(ErTrainer { trainer })
    }

    /// Exact ground-state energy used for normalization.
    pub fn reference(&self) -> f64 {
        self.trainer.reference().unwrap_or(f64::NAN)
    }

    pub fn epoch(&self) -> usize {
        self.trainer.epoch()
    }

    /// Runs `k` epochs; returns the normalized energy recorded at each.
    pub fn run(&mut self, k: usize) -> Result<Vec<f64>, JsValue> {
        let r = self.reference();
        (0..k)
            .map(|_| {
                self.trainer
                    .step()
                    .map(|rec| normalized_energy(rec.energy_re, r))
                    .map_err(js_err)
            })
            .collect()
    }
}
