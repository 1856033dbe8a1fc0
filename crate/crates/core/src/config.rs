//! Serializable run configuration. Unknown keys are rejected everywhere.

use serde::{Deserialize, Serialize};

use crate::basis::{BasisSector, SectorKind};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, XyzChain};
use crate::sampling::{UpdateRule, DEFAULT_CHAINS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Sampled estimators.
    Sr,
    /// Exact sums over the sector.
    Er,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Mcmc,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnsatzConfig {
    pub alpha: usize,
    pub sigma: f64,
}

impl Default for AnsatzConfig {
    fn default() -> Self {
        Self {
            alpha: 2,
            sigma: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub method: Method,
    pub eta: f64,
    pub lambda0: f64,
    pub lambda_decay: f64,
    pub lambda_min: f64,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epochs: usize,
    /// Stop once the normalized energy reaches this value (needs an ED reference).
    pub target_norm_energy: Option<f64>,
    pub checkpoint_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::Er,
            eta: 0.02,
            lambda0: 1.0,
            lambda_decay: 0.9,
            lambda_min: 1e-3,
            beta1: None,
            beta2: None,
            epochs: 3000,
            target_norm_energy: None,
            checkpoint_every: 100,
        }
    }
}

impl OptimizerConfig {
    /// `λ_n = max(λ0 · decay^n, λ_min)`.
    pub fn lambda_at(&self, n: usize) -> f64 {
        (self.lambda0 * self.lambda_decay.powi(n.min(i32::MAX as usize) as i32)).max(self.lambda_min)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::Config("optimizer.eta must be positive".into()));
        }
        if !(self.lambda_min > 0.0) || self.lambda0 < 0.0 || self.lambda_decay < 0.0 {
            return Err(Error::Config(
                "optimizer.lambda_min must be positive and lambda0, lambda_decay nonnegative".into(),
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if let Some(b) = b {
                if !(0.0..=1.0).contains(&b) || b == 0.0 {
                    return Err(Error::Config(format!("optimizer.{name} must lie in (0, 1]")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Defaults to `exchange` in the zero-magnetization sector, `flip` otherwise.
    pub update: Option<UpdateRule>,
    pub chains: usize,
    pub sweeps_between: usize,
    pub burn_in: usize,
    /// Samples per epoch as a multiple of the parameter count.
    pub samples_multiplier: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            kind: SamplerKind::Mcmc,
            update: None,
            chains: DEFAULT_CHAINS,
            sweeps_between: 1,
            burn_in: 1000,
            samples_multiplier: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceConfig {
    pub ed: bool,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self { ed: true }
    }
}

/// Everything needed for a single optimization run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
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
}

/// Zero-magnetization when the model conserves it and `N` is even, else full.
pub fn default_sector(model: &XyzChain) -> SectorKind {
    if model.conserves_magnetization() && model.n_sites % 2 == 0 {
        SectorKind::ZeroMagnetization
    } else {
        SectorKind::Full
    }
}

impl TrainingConfig {
    pub fn new(model: ModelSpec, seed: u64) -> Self {
        Self {
            model,
            sector: None,
            ansatz: AnsatzConfig::default(),
            optimizer: OptimizerConfig::default(),
            sampler: SamplerConfig::default(),
            reference: ReferenceConfig::default(),
            seed,
        }
    }

    pub fn build_model(&self) -> Result<XyzChain> {
        self.model.build()
    }

    pub fn resolve_sector(&self, model: &XyzChain) -> Result<BasisSector> {
        BasisSector::new(self.sector.unwrap_or_else(|| default_sector(model)), model.n_sites)
    }

    pub fn update_rule(&self, sector: &BasisSector) -> UpdateRule {
        self.sampler.update.unwrap_or(match sector.kind() {
            SectorKind::ZeroMagnetization => UpdateRule::Exchange,
            SectorKind::Full => UpdateRule::Flip,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.ansatz.alpha == 0 {
            return Err(Error::Config("ansatz.alpha must be at least 1".into()));
        }
        if !(self.ansatz.sigma >= 0.0) {
            return Err(Error::Config("ansatz.sigma must be nonnegative".into()));
        }
        if self.sampler.chains == 0 || !(self.sampler.samples_multiplier > 0.0) {
            return Err(Error::Config(
                "sampler.chains and sampler.samples_multiplier must be positive".into(),
            ));
        }
        let model = self.build_model()?;
        let sector = self.resolve_sector(&model)?;
        let rule = self.update_rule(&sector);
        match (sector.kind(), rule) {
            (SectorKind::ZeroMagnetization, UpdateRule::Flip) | (SectorKind::Full, UpdateRule::Exchange)
                if self.optimizer.method == Method::Sr && self.sampler.kind == SamplerKind::Mcmc =>
            {
                Err(Error::Config(format!(
                    "update rule {rule:?} does not preserve the {:?} sector",
                    sector.kind()
                )))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelName;

    #[test]
    fn lambda_schedule() {
        let o = OptimizerConfig::default();
        assert_eq!(o.lambda_at(0), 1.0);
        assert!((o.lambda_at(1) - 0.9).abs() < 1e-15);
        assert_eq!(o.lambda_at(1000), 1e-3);
    }

    #[test]
    fn json_defaults_and_unknown_keys() {
        let cfg: TrainingConfig = serde_json::from_str(
            r#"{"model":{"name":"xxz-sr","params":[1.0],"n_sites":10},"seed":3}"#,
        )
        .unwrap();
        assert_eq!(cfg.model.name, ModelName::XxzSignRule);
        assert_eq!(cfg.optimizer.eta, 0.02);
        assert!(serde_json::from_str::<TrainingConfig>(
            r#"{"model":{"name":"xxz","params":[1.0],"n_sites":4},"seed":1,"bogus":2}"#
        )
        .is_err());
        assert!(serde_json::from_str::<TrainingConfig>(
            r#"{"model":{"name":"xxz","params":[1.0],"n_sites":4},"seed":1,"optimizer":{"etaa":1}}"#
        )
        .is_err());
    }

    #[test]
    fn sector_defaults() {
        let m = crate::model::make_model(ModelName::Txyz, &[0.3, 0.6, -1.0, -1.0], 8).unwrap();
        assert_eq!(default_sector(&m), SectorKind::Full);
        let m = crate::model::make_model(ModelName::J1J2SignRule, &[1.0, 0.2], 8).unwrap();
        assert_eq!(default_sector(&m), SectorKind::ZeroMagnetization);
    }
}
