//! Translation-invariant XYZ chains with nearest- and next-nearest-neighbour
//! couplings, written with Pauli operators and periodic boundaries:
//!
//! `H = j1 Σ_i Σ_α β1^α σ_i^α σ_{i+1}^α + j2 Σ_i Σ_α β2^α σ_i^α σ_{i+2}^α`
//!
//! In the Z basis each bond `(i, j)` contributes `j β^z x_i x_j` to the
//! diagonal and `j (β^x − β^y x_i x_j)` to the element connecting `x` with the
//! configuration where spins `i` and `j` are both flipped.

use std::fmt;
use std::str::FromStr;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSector, SpinConfig};
use crate::error::{Error, Result};
use crate::stoq::SignedPermutation;

/// Diagonal coupling matrix `diag(β^x, β^y, β^z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Coupling {
    pub const ZERO: Coupling = Coupling::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(s * self.x, s * self.y, s * self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Number of nonzero diagonal entries.
    pub fn rank(&self) -> usize {
        self.as_array().iter().filter(|v| **v != 0.0).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelName {
    #[serde(rename = "xxz")]
    Xxz,
    #[serde(rename = "xxz-sr")]
    XxzSignRule,
    #[serde(rename = "j1j2")]
    J1J2,
    #[serde(rename = "j1j2-sr")]
    J1J2SignRule,
    #[serde(rename = "txyz")]
    Txyz,
    #[serde(rename = "txyz-star")]
    TxyzStar,
    #[serde(rename = "txyz-diamond")]
    TxyzDiamond,
    #[serde(rename = "custom")]
    Custom,
}

impl ModelName {
    pub const ALL: [ModelName; 8] = [
        ModelName::Xxz,
        ModelName::XxzSignRule,
        ModelName::J1J2,
        ModelName::J1J2SignRule,
        ModelName::Txyz,
        ModelName::TxyzStar,
        ModelName::TxyzDiamond,
        ModelName::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Xxz => "xxz",
            ModelName::XxzSignRule => "xxz-sr",
            ModelName::J1J2 => "j1j2",
            ModelName::J1J2SignRule => "j1j2-sr",
            ModelName::Txyz => "txyz",
            ModelName::TxyzStar => "txyz-star",
            ModelName::TxyzDiamond => "txyz-diamond",
            ModelName::Custom => "custom",
        }
    }

    /// Names of the positional parameters, in order.
    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            ModelName::Xxz | ModelName::XxzSignRule => &["delta"],
            ModelName::J1J2 | ModelName::J1J2SignRule => &["j1", "j2"],
            ModelName::Txyz | ModelName::TxyzStar | ModelName::TxyzDiamond => {
                &["a", "b", "j1", "j2"]
            }
            ModelName::Custom => &["b1x", "b1y", "b1z", "b2x", "b2y", "b2z", "j1", "j2"],
        }
    }

    fn uses_sign_rule(self) -> bool {
        matches!(self, ModelName::XxzSignRule | ModelName::J1J2SignRule)
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

/// Serializable model description, as it appears in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: ModelName,
    pub params: Vec<f64>,
    pub n_sites: usize,
}

impl ModelSpec {
    pub fn build(&self) -> Result<XyzChain> {
        make_model(self.name, &self.params, self.n_sites)
    }

    pub fn parameter_index(&self, name: &str) -> Result<usize> {
        self.name
            .parameter_names()
            .iter()
            .position(|p| *p == name)
            .ok_or_else(|| {
                Error::Config(format!("model '{}' has no parameter '{name}'", self.name))
            })
    }
}

#[derive(Clone, Copy, Debug)]
struct Bond {
    mask: u64,
    lo: usize,
    hi: usize,
    /// Off-diagonal element for parallel (`x_i x_j = +1`) and antiparallel spins.
    off_parallel: f64,
    off_antiparallel: f64,
    diag: f64,
}

/// Periodic NN + NNN XYZ chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XyzChain {
    pub n_sites: usize,
    pub j1: f64,
    pub j2: f64,
    pub beta1: Coupling,
    pub beta2: Coupling,
}

impl XyzChain {
    pub fn new(n_sites: usize, j1: f64, j2: f64, beta1: Coupling, beta2: Coupling) -> Result<Self> {
        if !(2..=crate::basis::MAX_SITES).contains(&n_sites) {
            return Err(Error::InvalidSites(n_sites));
        }
        if !(j1.is_finite() && j2.is_finite() && beta1.is_finite() && beta2.is_finite()) {
            return Err(Error::InvalidModel("couplings must be finite".into()));
        }
        if j2 != 0.0 && n_sites < 4 {
            return Err(Error::InvalidModel(format!(
                "next-nearest-neighbour bonds need at least 4 sites, got {n_sites}"
            )));
        }
        Ok(Self {
            n_sites,
            j1,
            j2,
            beta1,
            beta2,
        })
    }

    /// Bond couplings with the overall `j1`/`j2` factors folded in.
    pub fn scaled_couplings(&self) -> (Coupling, Coupling) {
        (self.beta1.scaled(self.j1), self.beta2.scaled(self.j2))
    }

    fn bonds(&self) -> Vec<Bond> {
        let n = self.n_sites;
        let (b1, b2) = self.scaled_couplings();
        let mut bonds = Vec::with_capacity(2 * n);
        for (dist, c) in [(1usize, b1), (2usize, b2)] {
            if c == Coupling::ZERO {
                continue;
            }
            for i in 0..n {
                let j = (i + dist) % n;
                let (lo, hi) = (i.min(j), i.max(j));
                bonds.push(Bond {
                    mask: (1u64 << i) | (1u64 << j),
                    lo,
                    hi,
                    off_parallel: c.x - c.y,
                    off_antiparallel: c.x + c.y,
                    diag: c.z,
                });
            }
        }
        bonds
    }

    /// Whether total `Σ σ^z` is conserved (`β^x = β^y` on every active bond).
    pub fn conserves_magnetization(&self) -> bool {
        let (b1, b2) = self.scaled_couplings();
        b1.x == b1.y && b2.x == b2.y
    }

    /// True iff every scaled bond satisfies `j β^x ≤ −|j β^y|`.
    pub fn is_stoquastic_as_written(&self) -> bool {
        let (b1, b2) = self.scaled_couplings();
        b1.x <= -b1.y.abs() && b2.x <= -b2.y.abs()
    }

    /// Conjugates both coupling matrices with the same on-site signed
    /// permutation; the even-site rule (Pauli Z on even sites) negates the
    /// nearest-neighbour x and y couplings.
    pub fn apply_signed_permutation(&self, perm: &SignedPermutation) -> Result<XyzChain> {
        let mut beta1 = perm.conjugate(self.beta1);
        let beta2 = perm.conjugate(self.beta2);
        if perm.parity_site_flip {
            if self.n_sites % 2 != 0 {
                return Err(Error::InvalidModel(format!(
                    "even-site sign rule needs an even number of sites, got {}",
                    self.n_sites
                )));
            }
            beta1.x = -beta1.x;
            beta1.y = -beta1.y;
        }
        XyzChain::new(self.n_sites, self.j1, self.j2, beta1, beta2)
    }

    pub fn connections(&self) -> Connections {
        Connections {
            n_sites: self.n_sites,
            bonds: self.bonds(),
        }
    }

    /// All nonzero matrix elements `(x', H_{x',x})` of column `x`, diagonal first.
    pub fn local_connections(&self, x: SpinConfig) -> Vec<(SpinConfig, f64)> {
        let mut out = Vec::with_capacity(2 * self.n_sites + 1);
        self.connections().for_each(x, |xp, h| out.push((xp, h)));
        out
    }

    /// Dense real symmetric matrix restricted to `sector`.
    pub fn dense_matrix(&self, sector: &BasisSector) -> Result<Mat<f64>> {
        let configs = sector.enumerate()?;
        let conn = self.connections();
        let d = configs.len();
        let mut h = Mat::<f64>::zeros(d, d);
        for (col, &x) in configs.iter().enumerate() {
            conn.try_for_each(x, |xp, v| {
                if !sector.contains(xp) {
                    return Err(Error::SectorIncompatible {
                        from: x.to_string(),
                        to: xp.to_string(),
                    });
                }
                h[(sector.index_unchecked(xp.bits()), col)] += v;
                Ok(())
            })?;
        }
        Ok(h)
    }
}

/// Precomputed bond table for fast row generation.
#[derive(Clone, Debug)]
pub struct Connections {
    n_sites: usize,
    bonds: Vec<Bond>,
}

impl Connections {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    #[inline]
    pub fn diagonal(&self, x: SpinConfig) -> f64 {
        let bits = x.bits();
        self.bonds
            .iter()
            .map(|b| {
                if ((bits >> b.lo) ^ (bits >> b.hi)) & 1 == 0 {
                    b.diag
                } else {
                    -b.diag
                }
            })
            .sum()
    }

    /// Calls `f(x', h)` for the diagonal and every nonzero off-diagonal element.
    #[inline]
    pub fn for_each(&self, x: SpinConfig, mut f: impl FnMut(SpinConfig, f64)) {
        let _ = self.try_for_each(x, |xp, h| {
            f(xp, h);
            Ok::<(), ()>(())
        });
    }

    #[inline]
    pub fn try_for_each<E>(
        &self,
        x: SpinConfig,
        mut f: impl FnMut(SpinConfig, f64) -> std::result::Result<(), E>,
    ) -> std::result::Result<(), E> {
        let bits = x.bits();
        let mut diag = 0.0;
        for b in &self.bonds {
            if ((bits >> b.lo) ^ (bits >> b.hi)) & 1 == 0 {
                diag += b.diag;
            } else {
                diag -= b.diag;
            }
        }
        f(x, diag)?;
        for b in &self.bonds {
            let parallel = ((bits >> b.lo) ^ (bits >> b.hi)) & 1 == 0;
            let h = if parallel {
                b.off_parallel
            } else {
                b.off_antiparallel
            };
            if h != 0.0 {
                f(x.flip_mask(b.mask), h)?;
            }
        }
        Ok(())
    }
}

/// Builds a named model. Parameter lists:
///
/// | name | params |
/// |---|---|
/// | `xxz`, `xxz-sr` | `[Δ]` |
/// | `j1j2`, `j1j2-sr` | `[J1, J2]` |
/// | `txyz`, `txyz-star`, `txyz-diamond` | `[a, b, J1, J2]` |
/// | `custom` | `[β1x, β1y, β1z, β2x, β2y, β2z, J1, J2]` |
pub fn make_model(name: ModelName, params: &[f64], n_sites: usize) -> Result<XyzChain> {
    let expected = name.parameter_names().len();
    if params.len() != expected {
        return Err(Error::ParameterArity {
            name: name.to_string(),
            expected,
            got: params.len(),
        });
    }
    if name.uses_sign_rule() && n_sites % 2 != 0 {
        return Err(Error::InvalidModel(format!(
            "'{name}' applies Pauli Z on even sites and needs an even chain, got N = {n_sites}"
        )));
    }
    let p = params;
    let c = Coupling::new;
    let (j1, j2, beta1, beta2) = match name {
        ModelName::Xxz => (1.0, 0.0, c(1.0, 1.0, p[0]), Coupling::ZERO),
        ModelName::XxzSignRule => (1.0, 0.0, c(-1.0, -1.0, p[0]), Coupling::ZERO),
        ModelName::J1J2 => (p[0], p[1], c(1.0, 1.0, 1.0), c(1.0, 1.0, 1.0)),
        ModelName::J1J2SignRule => (p[0], p[1], c(-1.0, -1.0, 1.0), c(1.0, 1.0, 1.0)),
        ModelName::Txyz => (p[2], p[3], c(p[0], p[1], 1.0), c(p[1], p[0], 1.0)),
        ModelName::TxyzStar => (p[2], p[3], c(1.0, p[1], p[0]), c(1.0, p[0], p[1])),
        ModelName::TxyzDiamond => (p[2], p[3], c(p[0], 1.0, p[1]), c(p[1], 1.0, p[0])),
        ModelName::Custom => (p[6], p[7], c(p[0], p[1], p[2]), c(p[3], p[4], p[5])),
    };
    XyzChain::new(n_sites, j1, j2, beta1, beta2)
}

/// `H v` over a fixed sector, with the configuration list cached.
pub struct SectorOperator<'a> {
    sector: BasisSector,
    configs: Vec<SpinConfig>,
    conn: Connections,
    _model: &'a XyzChain,
}

impl<'a> SectorOperator<'a> {
    /// Fails with [`Error::SectorIncompatible`] if any nonzero element leaves the sector.
    pub fn new(model: &'a XyzChain, sector: BasisSector) -> Result<Self> {
        if model.n_sites != sector.n_sites() {
            return Err(Error::Dimension(format!(
                "model has {} sites, sector has {}",
                model.n_sites,
                sector.n_sites()
            )));
        }
        let configs = sector.enumerate()?;
        let conn = model.connections();
        for &x in &configs {
            conn.try_for_each(x, |xp, _| {
                if sector.contains(xp) {
                    Ok(())
                } else {
                    Err(Error::SectorIncompatible {
                        from: x.to_string(),
                        to: xp.to_string(),
                    })
                }
            })?;
        }
        Ok(Self {
            sector,
            configs,
            conn,
            _model: model,
        })
    }

    pub fn dim(&self) -> usize {
        self.configs.len()
    }

    pub fn sector(&self) -> &BasisSector {
        &self.sector
    }

    pub fn configs(&self) -> &[SpinConfig] {
        &self.configs
    }

    /// Row `i` of `H v`, using the symmetry of `H` to gather from column entries.
    #[inline]
    fn row(&self, i: usize, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        self.conn.for_each(self.configs[i], |xp, h| {
            acc += h * v[self.sector.index_unchecked(xp.bits())];
        });
        acc
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.dim());
        assert_eq!(out.len(), self.dim());
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            out.par_iter_mut()
                .enumerate()
                .with_min_len(1024)
                .for_each(|(i, o)| *o = self.row(i, v));
        }
        #[cfg(not(feature = "parallel"))]
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i, v);
        }
    }
}

/// `H v` restricted to `sector`.
pub fn matvec(model: &XyzChain, v: &[f64], sector: &BasisSector) -> Result<Vec<f64>> {
    let op = SectorOperator::new(model, *sector)?;
    if v.len() != op.dim() {
        return Err(Error::Dimension(format!(
            "vector length {} != sector size {}",
            v.len(),
            op.dim()
        )));
    }
    let mut out = vec![0.0; v.len()];
    op.apply(v, &mut out);
    Ok(out)
}
