//! On-site signed-permutation search that turns a translation-invariant
//! NN + NNN XYZ chain into stoquastic form.
//!
//! A signed permutation `Π = S P` acts on each site's Pauli vector and maps a
//! diagonal coupling matrix to `Π β Πᵀ = P β Pᵀ`; the signs cancel on diagonal
//! matrices. The remaining sign freedom on a bipartite chain is a Pauli Z on
//! every even site, which negates the nearest-neighbour x and y couplings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Coupling, XyzChain};

/// Element of S3 acting on the axes (x, y, z) = (1, 2, 3), stored as images:
/// `images[k] = π(k)` with zero-based axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Permutation {
    images: [u8; 3],
}

impl Permutation {
    pub const IDENTITY: Permutation = Permutation { images: [0, 1, 2] };

    /// Search order used for first-hit witnesses.
    pub const SEARCH_ORDER: [Permutation; 6] = [
        Permutation { images: [0, 1, 2] }, // ()
        Permutation { images: [1, 0, 2] }, // (1,2)
        Permutation { images: [0, 2, 1] }, // (2,3)
        Permutation { images: [2, 1, 0] }, // (1,3)
        Permutation { images: [1, 2, 0] }, // (1,2,3)
        Permutation { images: [2, 0, 1] }, // (1,3,2)
    ];

    pub fn from_images(images: [u8; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for &i in &images {
            if i > 2 || seen[i as usize] {
                return Err(Error::InvalidConfig(format!("{images:?} is not a permutation")));
            }
            seen[i as usize] = true;
        }
        Ok(Self { images })
    }

    pub fn images(&self) -> [u8; 3] {
        self.images
    }

    pub fn inverse(&self) -> Self {
        let mut inv = [0u8; 3];
        for (k, &p) in self.images.iter().enumerate() {
            inv[p as usize] = k as u8;
        }
        Self { images: inv }
    }

    /// `(self ∘ other)(k) = self(other(k))`.
    pub fn compose(&self, other: &Permutation) -> Self {
        let mut out = [0u8; 3];
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.images[other.images[k] as usize];
        }
        Self { images: out }
    }

    /// `P diag(β) Pᵀ`: the entry on axis `k` moves to axis `π(k)`.
    pub fn conjugate(&self, beta: Coupling) -> Coupling {
        let src = beta.as_array();
        let mut dst = [0.0; 3];
        for k in 0..3 {
            dst[self.images[k] as usize] = src[k];
        }
        Coupling::from_array(dst)
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut visited = [false; 3];
        let mut wrote = false;
        for start in 0..3 {
            if visited[start] || self.images[start] as usize == start {
                continue;
            }
            let mut cycle = vec![start + 1];
            visited[start] = true;
            let mut k = self.images[start] as usize;
            while k != start {
                cycle.push(k + 1);
                visited[k] = true;
                k = self.images[k] as usize;
            }
            let body: Vec<String> = cycle.iter().map(|c| c.to_string()).collect();
            write!(f, "({})", body.join(","))?;
            wrote = true;
        }
        if !wrote {
            f.write_str("()")?;
        }
        Ok(())
    }
}

impl FromStr for Permutation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        Permutation::SEARCH_ORDER
            .into_iter()
            .find(|p| p.to_string() == t)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown permutation '{s}'")))
    }
}

impl Serialize for Permutation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Permutation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// On-site signed permutation, applied uniformly to all sites, plus the
/// optional Pauli Z on even sites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedPermutation {
    pub perm: Permutation,
    pub signs: [i8; 3],
    pub parity_site_flip: bool,
}

impl SignedPermutation {
    pub fn identity() -> Self {
        Self::new(Permutation::IDENTITY)
    }

    pub fn new(perm: Permutation) -> Self {
        Self {
            perm,
            signs: [1, 1, 1],
            parity_site_flip: false,
        }
    }

    pub fn with_parity_flip(mut self, flip: bool) -> Self {
        self.parity_site_flip = flip;
        self
    }

    /// Inverse of the on-site part. The even-site flip is its own inverse.
    pub fn inverse(&self) -> Self {
        let inv = self.perm.inverse();
        let mut signs = [1i8; 3];
        // (S P)^{-1} = Pᵀ S; the sign attached to output axis π(k) returns to axis k.
        for k in 0..3 {
            signs[k] = self.signs[self.perm.images()[k] as usize];
        }
        Self {
            perm: inv,
            signs,
            parity_site_flip: self.parity_site_flip,
        }
    }

    /// `Π β Πᵀ` for a diagonal `β`; signs square to one on the diagonal.
    pub fn conjugate(&self, beta: Coupling) -> Coupling {
        self.perm.conjugate(beta)
    }
}

impl fmt::Display for SignedPermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.perm)?;
        if self.parity_site_flip {
            f.write_str(" + Z on even sites")?;
        }
        Ok(())
    }
}

/// One row of the condition table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationCheck {
    pub perm: Permutation,
    pub satisfied: bool,
    pub needs_parity_flip: bool,
    pub beta1: Coupling,
    pub beta2: Coupling,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoqVerdict {
    pub transformable: bool,
    pub witness: Option<SignedPermutation>,
    pub checked_permutations: Vec<PermutationCheck>,
    /// Both bonds have rank ≤ 1, so site-dependent permutations were not excluded.
    pub rank_degenerate: bool,
}

fn bond_ok(c: Coupling) -> bool {
    c.x <= -c.y.abs()
}

fn search(beta1: Coupling, beta2: Coupling, j1: f64, j2: f64, allow_flip: bool) -> StoqVerdict {
    let mut checks = Vec::with_capacity(6);
    let mut witness = None;
    for perm in Permutation::SEARCH_ORDER {
        let t1 = perm.conjugate(beta1).scaled(j1);
        let t2 = perm.conjugate(beta2).scaled(j2);
        let nnn = bond_ok(t2);
        let direct = bond_ok(t1);
        let flipped = allow_flip && bond_ok(Coupling::new(-t1.x, -t1.y, t1.z));
        let satisfied = nnn && (direct || flipped);
        let needs_parity_flip = satisfied && !direct;
        if satisfied && witness.is_none() {
            witness = Some(SignedPermutation::new(perm).with_parity_flip(needs_parity_flip));
        }
        checks.push(PermutationCheck {
            perm,
            satisfied,
            needs_parity_flip,
            beta1: t1,
            beta2: t2,
        });
    }
    let rank_degenerate = beta1.scaled(j1).rank() <= 1 && beta2.scaled(j2).rank() <= 1;
    StoqVerdict {
        transformable: witness.is_some(),
        witness,
        checked_permutations: checks,
        rank_degenerate,
    }
}

/// Searches the six uniform permutations in [`Permutation::SEARCH_ORDER`] for
/// a chain with an even number of sites, where the nearest-neighbour x-coupling
/// sign is free.
pub fn find_stoquastic_transformation(
    beta1: Coupling,
    beta2: Coupling,
    j1: f64,
    j2: f64,
) -> StoqVerdict {
    search(beta1, beta2, j1, j2, true)
}

/// Same search for a concrete model; odd chains get no even-site sign freedom.
pub fn find_stoquastic_transformation_for(model: &XyzChain) -> StoqVerdict {
    search(
        model.beta1,
        model.beta2,
        model.j1,
        model.j2,
        model.n_sites % 2 == 0,
    )
}

/// Closed-form conditions for the twisted XYZ couplings
/// `β1 = J1 diag(a, b, 1)`, `β2 = J2 diag(b, a, 1)`, in search order.
/// Valid for `J2 ≠ 0`; at `J2 = 0` the general search is authoritative.
pub fn classify_txyz_region(a: f64, b: f64, _j1: f64, j2: f64) -> Vec<Permutation> {
    let (aa, ab) = (a.abs(), b.abs());
    let conds = [
        aa == ab && j2 * b <= 0.0,
        ab == aa && j2 * a <= 0.0,
        aa >= 1.0 && ab >= 1.0 && j2 * b <= 0.0,
        1.0 >= ab && 1.0 >= aa && j2 <= 0.0,
        1.0 >= aa && 1.0 >= ab && j2 <= 0.0,
        ab >= 1.0 && aa >= 1.0 && j2 * a <= 0.0,
    ];
    Permutation::SEARCH_ORDER
        .into_iter()
        .zip(conds)
        .filter_map(|(p, c)| c.then_some(p))
        .collect()
}

/// Compact label for a set of permutations, e.g. `{(2,3),(1,3,2)}`.
pub fn region_label(perms: &[Permutation]) -> String {
    let parts: Vec<String> = perms.iter().map(|p| p.to_string()).collect();
    format!("{{{}}}", parts.join(","))
}
