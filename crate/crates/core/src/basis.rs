//! Spin-1/2 chain configurations in the Pauli-Z basis and the sectors they are
//! enumerated over.
//!
//! A configuration is stored as an `N`-bit word where bit `i` set means
//! `x_i = +1`. Sectors are enumerated in ascending order of that word, which
//! makes cumulative tables and binary searches deterministic.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of sites a configuration word can hold.
pub const MAX_SITES: usize = 64;

/// Largest sector that [`BasisSector::enumerate`] will materialize.
pub const ENUMERATION_BUDGET: usize = 1 << 24;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinConfig {
    bits: u64,
    n_sites: u8,
}

impl SpinConfig {
    pub fn new(bits: u64, n_sites: usize) -> Result<Self> {
        if !(2..=MAX_SITES).contains(&n_sites) {
            return Err(Error::InvalidSites(n_sites));
        }
        if n_sites < 64 && bits >> n_sites != 0 {
            return Err(Error::InvalidConfig(format!(
                "bits {bits:#x} exceed {n_sites} sites"
            )));
        }
        Ok(Self {
            bits,
            n_sites: n_sites as u8,
        })
    }

    /// Builds a configuration from explicit `±1` spins.
    pub fn from_spins(spins: &[i8]) -> Result<Self> {
        let mut bits = 0u64;
        for (i, &s) in spins.iter().enumerate() {
            match s {
                1 => bits |= 1 << i,
                -1 => {}
                other => {
                    return Err(Error::InvalidConfig(format!("spin value {other}")));
                }
            }
        }
        Self::new(bits, spins.len())
    }

    pub fn all_up(n_sites: usize) -> Result<Self> {
        Self::new(low_mask(n_sites), n_sites)
    }

    #[inline]
    pub(crate) fn from_raw(bits: u64, n_sites: usize) -> Self {
        debug_assert!(n_sites >= 1 && n_sites <= MAX_SITES);
        debug_assert!(n_sites == 64 || bits >> n_sites == 0);
        Self {
            bits,
            n_sites: n_sites as u8,
        }
    }

    #[inline]
    pub fn bits(self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn n_sites(self) -> usize {
        self.n_sites as usize
    }

    /// Spin at `site` as `+1` or `-1`.
    #[inline]
    pub fn spin(self, site: usize) -> i8 {
        if (self.bits >> site) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    #[inline]
    pub fn spin_f64(self, site: usize) -> f64 {
        if (self.bits >> site) & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn spins(self) -> Vec<i8> {
        (0..self.n_sites()).map(|i| self.spin(i)).collect()
    }

    pub fn n_up(self) -> usize {
        self.bits.count_ones() as usize
    }

    /// `Σ_i x_i`.
    pub fn magnetization(self) -> i64 {
        2 * self.n_up() as i64 - self.n_sites() as i64
    }

    #[inline]
    pub fn flip(self, site: usize) -> Self {
        Self::from_raw(self.bits ^ (1 << site), self.n_sites())
    }

    #[inline]
    pub fn flip_mask(self, mask: u64) -> Self {
        Self::from_raw(self.bits ^ mask, self.n_sites())
    }

    /// Global spin flip `x -> -x`.
    #[inline]
    pub fn flip_all(self) -> Self {
        self.flip_mask(low_mask(self.n_sites()))
    }

    /// Cyclic translation by `shift` sites: the spin at site `i` moves to
    /// site `i + shift (mod N)`.
    pub fn translate(self, shift: usize) -> Self {
        let n = self.n_sites();
        let s = shift % n;
        if s == 0 {
            return self;
        }
        let mask = low_mask(n);
        let bits = ((self.bits << s) | (self.bits >> (n - s))) & mask;
        Self::from_raw(bits, n)
    }

    /// Sites whose spins differ between `self` and `other`.
    pub fn differing_sites(self, other: SpinConfig) -> Vec<usize> {
        bit_positions(self.bits ^ other.bits).collect()
    }
}

impl fmt::Debug for SpinConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpinConfig({self})")
    }
}

/// Sites are written from the highest index down, so the string reads like
/// the binary literal of the configuration word (`+` for a set bit).
impl fmt::Display for SpinConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in (0..self.n_sites()).rev() {
            f.write_str(if self.spin(i) == 1 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

#[inline]
pub fn low_mask(n_sites: usize) -> u64 {
    if n_sites >= 64 {
        u64::MAX
    } else {
        (1u64 << n_sites) - 1
    }
}

pub(crate) fn bit_positions(mut word: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if word == 0 {
            return None;
        }
        let i = word.trailing_zeros() as usize;
        word &= word - 1;
        Some(i)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SectorKind {
    Full,
    #[serde(alias = "jz0")]
    ZeroMagnetization,
}

impl SectorKind {
    pub fn code(self) -> u32 {
        match self {
            SectorKind::Full => 0,
            SectorKind::ZeroMagnetization => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(SectorKind::Full),
            1 => Some(SectorKind::ZeroMagnetization),
            _ => None,
        }
    }
}

impl std::str::FromStr for SectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SectorKind::Full),
            "jz0" | "zero-magnetization" => Ok(SectorKind::ZeroMagnetization),
            other => Err(Error::InvalidConfig(format!("unknown sector '{other}'"))),
        }
    }
}

/// Binomial coefficients `C(n, k)` for `n, k ≤ 64`.
struct Binomials([[u64; 65]; 65]);

impl Binomials {
    const fn build() -> Self {
        let mut t = [[0u64; 65]; 65];
        let mut n = 0;
        while n <= 64 {
            t[n][0] = 1;
            let mut k = 1;
            while k <= n {
                t[n][k] = t[n - 1][k - 1].saturating_add(t[n - 1][k]);
                k += 1;
            }
            n += 1;
        }
        Binomials(t)
    }
}

static BINOMIALS: Binomials = Binomials::build();

#[inline]
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        0
    } else {
        BINOMIALS.0[n][k]
    }
}

/// A set of configurations closed under the Hamiltonians that act on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisSector {
    kind: SectorKind,
    n_sites: usize,
}

impl BasisSector {
    pub fn new(kind: SectorKind, n_sites: usize) -> Result<Self> {
        if !(2..=MAX_SITES).contains(&n_sites) {
            return Err(Error::InvalidSites(n_sites));
        }
        if kind == SectorKind::ZeroMagnetization && n_sites % 2 != 0 {
            return Err(Error::OddZeroMagnetization(n_sites));
        }
        Ok(Self { kind, n_sites })
    }

    pub fn full(n_sites: usize) -> Result<Self> {
        Self::new(SectorKind::Full, n_sites)
    }

    pub fn zero_magnetization(n_sites: usize) -> Result<Self> {
        Self::new(SectorKind::ZeroMagnetization, n_sites)
    }

    pub fn kind(&self) -> SectorKind {
        self.kind
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Number of configurations (saturates at `u64::MAX` for `N = 64`).
    pub fn size_u64(&self) -> u64 {
        match self.kind {
            SectorKind::Full if self.n_sites == 64 => u64::MAX,
            SectorKind::Full => 1u64 << self.n_sites,
            SectorKind::ZeroMagnetization => binomial(self.n_sites, self.n_sites / 2),
        }
    }

    /// Sector size as an index bound; errors when it exceeds the enumeration budget.
    pub fn size(&self) -> Result<usize> {
        let size = self.size_u64();
        if size > ENUMERATION_BUDGET as u64 {
            return Err(Error::EnumerationBudget {
                n_sites: self.n_sites,
                size,
            });
        }
        Ok(size as usize)
    }

    pub fn contains(&self, config: SpinConfig) -> bool {
        config.n_sites() == self.n_sites
            && match self.kind {
                SectorKind::Full => true,
                SectorKind::ZeroMagnetization => config.n_up() * 2 == self.n_sites,
            }
    }

    /// Position of `config` in the canonical (ascending) order of the sector.
    pub fn index_of(&self, config: SpinConfig) -> Result<usize> {
        if !self.contains(config) {
            return Err(Error::NotInSector(config.to_string()));
        }
        Ok(self.index_unchecked(config.bits()))
    }

    /// Rank of a word known to lie in the sector.
    #[inline]
    pub fn index_unchecked(&self, bits: u64) -> usize {
        match self.kind {
            SectorKind::Full => bits as usize,
            SectorKind::ZeroMagnetization => {
                // Combinadic rank: Σ_t C(c_t, t) over set-bit positions c_1 < c_2 < ...
                let mut rank = 0u64;
                let mut word = bits;
                let mut t = 1;
                while word != 0 {
                    let c = word.trailing_zeros() as usize;
                    rank += binomial(c, t);
                    t += 1;
                    word &= word - 1;
                }
                rank as usize
            }
        }
    }

    /// Inverse of [`index_of`](Self::index_of).
    pub fn config_at(&self, index: usize) -> Result<SpinConfig> {
        if index as u64 >= self.size_u64() {
            return Err(Error::IndexOutOfRange {
                index,
                size: self.size_u64(),
            });
        }
        let bits = match self.kind {
            SectorKind::Full => index as u64,
            SectorKind::ZeroMagnetization => {
                let mut rank = index as u64;
                let mut bits = 0u64;
                let mut t = self.n_sites / 2;
                let mut c = self.n_sites;
                while t > 0 {
                    c -= 1;
                    while binomial(c, t) > rank {
                        c -= 1;
                    }
                    rank -= binomial(c, t);
                    bits |= 1 << c;
                    t -= 1;
                }
                bits
            }
        };
        Ok(SpinConfig::from_raw(bits, self.n_sites))
    }

    /// All configurations of the sector in canonical order.
    pub fn enumerate(&self) -> Result<Vec<SpinConfig>> {
        if self.kind == SectorKind::Full && self.n_sites > 24 {
            return Err(Error::EnumerationBudget {
                n_sites: self.n_sites,
                size: self.size_u64(),
            });
        }
        let size = self.size()?;
        let n = self.n_sites;
        let out = match self.kind {
            SectorKind::Full => (0..size as u64).map(|b| SpinConfig::from_raw(b, n)).collect(),
            SectorKind::ZeroMagnetization => {
                let mut out = Vec::with_capacity(size);
                let mut word = low_mask(n / 2);
                for _ in 0..size {
                    out.push(SpinConfig::from_raw(word, n));
                    word = next_same_popcount(word);
                }
                out
            }
        };
        Ok(out)
    }
}

/// Next larger word with the same number of set bits (Gosper's hack).
#[inline]
fn next_same_popcount(word: u64) -> u64 {
    let c = word & word.wrapping_neg();
    let r = word.wrapping_add(c);
    if c == 0 || r == 0 {
        return u64::MAX;
    }
    (((r ^ word) >> 2) / c) | r
}

/// Free-function form of [`BasisSector::enumerate`].
pub fn enumerate_sector(n_sites: usize, kind: SectorKind) -> Result<Vec<SpinConfig>> {
    BasisSector::new(kind, n_sites)?.enumerate()
}

/// Free-function form of [`BasisSector::index_of`].
pub fn sector_index(config: SpinConfig, sector: &BasisSector) -> Result<usize> {
    sector.index_of(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_site_full_sector_in_order() {
        let configs = enumerate_sector(2, SectorKind::Full).unwrap();
        let shown: Vec<String> = configs.iter().map(|c| c.to_string()).collect();
        assert_eq!(shown, ["--", "-+", "+-", "++"]);
    }

    #[test]
    fn four_site_zero_magnetization() {
        let configs = enumerate_sector(4, SectorKind::ZeroMagnetization).unwrap();
        assert_eq!(configs.len(), 6);
        assert!(configs.iter().all(|c| c.n_up() == 2));
        assert!(configs.windows(2).all(|w| w[0].bits() < w[1].bits()));
    }

    #[test]
    fn twelve_site_sector_size_matches_binomial() {
        // C(12,6) computed by the multiplicative formula, independently of the table.
        let expected = (1..=6u64).fold(1u64, |acc, k| acc * (6 + k) / k);
        assert_eq!(expected, 924);
        let sector = BasisSector::zero_magnetization(12).unwrap();
        assert_eq!(sector.enumerate().unwrap().len() as u64, expected);
        assert_eq!(sector.size().unwrap() as u64, expected);
    }

    #[test]
    fn odd_zero_magnetization_rejected() {
        assert!(matches!(
            enumerate_sector(5, SectorKind::ZeroMagnetization),
            Err(Error::OddZeroMagnetization(5))
        ));
    }

    #[test]
    fn oversized_full_enumeration_rejected() {
        assert!(matches!(
            enumerate_sector(30, SectorKind::Full),
            Err(Error::EnumerationBudget { .. })
        ));
        assert!(BasisSector::full(1).is_err());
    }

    #[test]
    fn index_anchors() {
        for sector in [
            BasisSector::full(6).unwrap(),
            BasisSector::zero_magnetization(10).unwrap(),
        ] {
            let configs = sector.enumerate().unwrap();
            assert_eq!(sector.index_of(configs[0]).unwrap(), 0);
            let last = *configs.last().unwrap();
            assert_eq!(sector.index_of(last).unwrap(), configs.len() - 1);
        }
    }

    #[test]
    fn index_is_a_bijection() {
        for n in [2usize, 4, 8, 10, 16] {
            for sector in [BasisSector::full(n).unwrap(), BasisSector::zero_magnetization(n).unwrap()] {
                let configs = sector.enumerate().unwrap();
                assert_eq!(configs.len(), sector.size().unwrap());
                for (i, c) in configs.iter().enumerate() {
                    assert!(sector.contains(*c));
                    assert_eq!(sector.index_of(*c).unwrap(), i);
                    assert_eq!(sector.config_at(i).unwrap(), *c);
                }
                if sector.kind() == SectorKind::ZeroMagnetization {
                    assert!(configs.iter().all(|c| c.magnetization() == 0));
                }
            }
        }
    }

    #[test]
    fn membership_error() {
        let sector = BasisSector::zero_magnetization(4).unwrap();
        let c = SpinConfig::all_up(4).unwrap();
        assert!(matches!(sector.index_of(c), Err(Error::NotInSector(_))));
        assert!(sector.config_at(6).is_err());
    }

    #[test]
    fn spins_round_trip_and_translation() {
        let c = SpinConfig::from_spins(&[1, -1, -1, 1, 1]).unwrap();
        assert_eq!(SpinConfig::from_spins(&c.spins()).unwrap(), c);
        assert_eq!(c.translate(5), c);
        let t = c.translate(2);
        for i in 0..5 {
            assert_eq!(t.spin((i + 2) % 5), c.spin(i));
        }
        assert_eq!(c.flip_all().flip_all(), c);
        assert_eq!(c.flip_all().magnetization(), -c.magnetization());
        assert!(SpinConfig::from_spins(&[1, 0]).is_err());
        assert!(SpinConfig::new(0b100, 2).is_err());
    }
}
