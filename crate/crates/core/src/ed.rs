//! Exact diagonalization: Lanczos ground states, spin-flip parity sectors and
//! ground-state diagnostics.

use std::io::{Read, Write};
use std::path::Path;

use faer::prelude::*;
use faer::Side;
use num_complex::Complex64 as C64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSector, SectorKind, SpinConfig};
use crate::error::{Error, Result};
use crate::model::{SectorOperator, XyzChain};
use crate::sampling::stream_rng;

pub const DEFAULT_LANCZOS_SEED: u64 = 0x5eed_1a2c;
pub const DEFAULT_TOL: f64 = 1e-10;
/// Sectors at or below this size are diagonalized densely.
pub const DENSE_LIMIT: usize = 256;
const MAX_ITERATIONS: usize = 600;

#[derive(Clone, Debug)]
pub struct EdResult {
    pub energy: f64,
    /// Real amplitudes in canonical sector order, unit norm.
    pub vector: Vec<f64>,
    pub sector: BasisSector,
    pub n_iterations: usize,
    pub residual: f64,
}

impl EdResult {
    /// Wraps an arbitrary state; normalizes and fixes the gauge.
    pub fn from_vector(sector: BasisSector, mut vector: Vec<f64>, energy: f64) -> Result<Self> {
        let size = sector.size()?;
        if vector.len() != size {
            return Err(Error::Dimension(format!(
                "vector length {} != sector size {size}",
                vector.len()
            )));
        }
        normalize(&mut vector)?;
        fix_gauge(&mut vector);
        Ok(Self {
            energy,
            vector,
            sector,
            n_iterations: 0,
            residual: 0.0,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.sector.n_sites()
    }

    pub fn configs(&self) -> Result<Vec<SpinConfig>> {
        self.sector.enumerate()
    }

    /// Amplitude of an arbitrary configuration, zero outside the sector.
    pub fn amplitude(&self, x: SpinConfig) -> f64 {
        if self.sector.contains(x) {
            self.vector[self.sector.index_unchecked(x.bits())]
        } else {
            0.0
        }
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.vector.iter().map(|v| v * v).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(v: &mut [f64]) -> Result<()> {
    let n = norm(v);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::NonFinite("cannot normalize a zero vector".into()));
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(())
}

/// Makes the largest-magnitude component (first in canonical order on ties) positive.
pub fn fix_gauge(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    orthogonalize_all(w, &[basis]);
}

/// Two Gram-Schmidt passes over every set in turn, so later sets cannot
/// reintroduce components along earlier ones.
fn orthogonalize_all(w: &mut [f64], sets: &[&[Vec<f64>]]) {
    for _ in 0..2 {
        for u in sets.iter().flat_map(|s| s.iter()) {
            let c = dot(w, u);
            w.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
        }
    }
}

/// Lowest eigenpair of the tridiagonal matrix `(alpha, beta)`.
fn tridiagonal_lowest(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>, f64) {
    let k = alpha.len();
    let t = Mat::<f64>::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i == j + 1 {
            beta[j]
        } else if j == i + 1 {
            beta[i]
        } else {
            0.0
        }
    });
    let eig = t.self_adjoint_eigen(Side::Lower).expect("tridiagonal eigensolver");
    let s = eig.S();
    let u = eig.U();
    let mut lo = 0;
    for i in 1..k {
        if s[i] < s[lo] {
            lo = i;
        }
    }
    let scale = (0..k).map(|i| s[i].abs()).fold(0.0, f64::max);
    ((s[lo]), (0..k).map(|i| u[(i, lo)]).collect(), scale)
}

pub struct LanczosOutcome {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Lowest eigenpair of a real symmetric operator restricted to the orthogonal
/// complement of `locked`, with full reorthogonalization.
pub fn lanczos_lowest(
    dim: usize,
    apply: &dyn Fn(&[f64], &mut [f64]),
    locked: &[Vec<f64>],
    seed: u64,
    tol: f64,
) -> Result<LanczosOutcome> {
    let available = dim - locked.len().min(dim);
    if available == 0 {
        return Err(Error::Dimension("no directions left to search".into()));
    }
    let mut rng = stream_rng(seed, locked.len() as u64);
    let mut v0: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    orthogonalize(&mut v0, locked);
    normalize(&mut v0)?;

    let mut basis: Vec<Vec<f64>> = vec![v0];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; dim];
    let max_iter = MAX_ITERATIONS.min(available);
    let mut last = (0.0, vec![1.0], 0.0);
    let mut est_residual = f64::INFINITY;

    for k in 0..max_iter {
        apply(&basis[k], &mut w);
        let a = dot(&w, &basis[k]);
        alpha.push(a);
        orthogonalize_all(&mut w, &[locked, &basis]);
        let b = norm(&w);
        let done_space = k + 1 == max_iter;
        let check = k < 20 || k % 5 == 4 || done_space || b == 0.0;
        if check {
            last = tridiagonal_lowest(&alpha, &beta);
            est_residual = b * last.1[k].abs();
        }
        let scale = last.2.max(1.0);
        if check && (est_residual <= tol * scale || b <= 1e-13 * scale || done_space) {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }

    let (value, y, scale) = last;
    let mut vector = vec![0.0; dim];
    for (c, u) in y.iter().zip(&basis) {
        vector.iter_mut().zip(u).for_each(|(v, x)| *v += c * x);
    }
    orthogonalize(&mut vector, locked);
    normalize(&mut vector)?;
    apply(&vector, &mut w);
    let residual = w
        .iter()
        .zip(&vector)
        .map(|(hv, v)| (hv - value * v).powi(2))
        .sum::<f64>()
        .sqrt();
    if residual > 1e-8 * scale.max(1.0) {
        return Err(Error::NoConvergence {
            iterations: alpha.len(),
            residual,
        });
    }
    Ok(LanczosOutcome {
        value,
        vector,
        iterations: alpha.len(),
        residual,
    })
}

/// Full spectrum by repeated deflated Lanczos runs.
pub fn lanczos_spectrum(dim: usize, apply: &dyn Fn(&[f64], &mut [f64]), seed: u64) -> Result<Vec<f64>> {
    let mut locked: Vec<Vec<f64>> = Vec::with_capacity(dim);
    let mut values = Vec::with_capacity(dim);
    while locked.len() < dim {
        let out = lanczos_lowest(dim, apply, &locked, seed, 1e-12)?;
        values.push(out.value);
        locked.push(out.vector);
    }
    values.sort_by(f64::total_cmp);
    Ok(values)
}

fn dense_lowest(h: MatRef<'_, f64>) -> Result<(f64, Vec<f64>)> {
    let eig = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::NonFinite("dense eigensolver failed".into()))?;
    let s = eig.S();
    let u = eig.U();
    let mut lo = 0;
    for i in 1..h.nrows() {
        if s[i] < s[lo] {
            lo = i;
        }
    }
    Ok((s[lo], (0..h.nrows()).map(|i| u[(i, lo)]).collect()))
}

/// All eigenvalues of the dense sector matrix, ascending.
pub fn dense_spectrum(model: &XyzChain, sector: &BasisSector) -> Result<Vec<f64>> {
    crate::linalg::symmetric_eigenvalues(model.dense_matrix(sector)?.as_ref())
}

pub fn lanczos_ground(model: &XyzChain, sector: &BasisSector, tol: f64) -> Result<EdResult> {
    lanczos_ground_seeded(model, sector, tol, DEFAULT_LANCZOS_SEED)
}

pub fn lanczos_ground_seeded(
    model: &XyzChain,
    sector: &BasisSector,
    tol: f64,
    seed: u64,
) -> Result<EdResult> {
    let op = SectorOperator::new(model, *sector)?;
    let dim = op.dim();
    let (energy, mut vector, n_iterations, residual) = if dim <= DENSE_LIMIT {
        let h = model.dense_matrix(sector)?;
        let (e, v) = dense_lowest(h.as_ref())?;
        (e, v, 0, 0.0)
    } else {
        let out = lanczos_lowest(dim, &|v, o| op.apply(v, o), &[], seed, tol)?;
        (out.value, out.vector, out.iterations, out.residual)
    };
    fix_gauge(&mut vector);
    Ok(EdResult {
        energy,
        vector,
        sector: *sector,
        n_iterations,
        residual,
    })
}

/// Spectrum of `model` on `sector` computed with deflated Lanczos.
pub fn lanczos_full_spectrum(model: &XyzChain, sector: &BasisSector) -> Result<Vec<f64>> {
    let op = SectorOperator::new(model, *sector)?;
    lanczos_spectrum(op.dim(), &|v, o| op.apply(v, o), DEFAULT_LANCZOS_SEED)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parity {
    Symmetric,
    Antisymmetric,
}

impl Parity {
    fn sign(self) -> f64 {
        match self {
            Parity::Symmetric => 1.0,
            Parity::Antisymmetric => -1.0,
        }
    }
}

/// Lowest state of `model` in one eigenspace of the global spin flip, expanded
/// back to `sector`. Representatives are configurations with the top spin down,
/// which occupy the first half of the canonical order.
pub fn z2_ground(model: &XyzChain, sector: &BasisSector, parity: Parity, tol: f64) -> Result<EdResult> {
    let op = SectorOperator::new(model, *sector)?;
    let n = sector.n_sites();
    let full = op.dim();
    let half = full / 2;
    let configs = &op.configs()[..half];
    let top = 1u64 << (n - 1);
    debug_assert!(configs.iter().all(|x| x.bits() & top == 0));
    let sign = parity.sign();
    let conn = model.connections();
    let sec = *sector;
    let apply = |v: &[f64], out: &mut [f64]| {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            conn.for_each(configs[r], |xp, h| {
                let (rep, s) = if xp.bits() & top == 0 {
                    (xp, 1.0)
                } else {
                    (xp.flip_all(), sign)
                };
                acc += h * s * v[sec.index_unchecked(rep.bits())];
            });
            *o = acc;
        }
    };
    let (energy, reduced, iters, residual) = if half <= DENSE_LIMIT {
        let mut h = Mat::<f64>::zeros(half, half);
        let mut e = vec![0.0; half];
        let mut col = vec![0.0; half];
        for c in 0..half {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[c] = 1.0;
            apply(&e, &mut col);
            for r in 0..half {
                h[(r, c)] = col[r];
            }
        }
        let (val, vec) = dense_lowest(h.as_ref())?;
        (val, vec, 0, 0.0)
    } else {
        let out = lanczos_lowest(half, &apply, &[], DEFAULT_LANCZOS_SEED, tol)?;
        (out.value, out.vector, out.iterations, out.residual)
    };
    let mut vector = vec![0.0; full];
    let r2 = std::f64::consts::FRAC_1_SQRT_2;
    for (k, &x) in configs.iter().enumerate() {
        vector[k] = reduced[k] * r2;
        vector[sec.index_unchecked(x.flip_all().bits())] = sign * reduced[k] * r2;
    }
    fix_gauge(&mut vector);
    Ok(EdResult {
        energy,
        vector,
        sector: *sector,
        n_iterations: iters,
        residual,
    })
}

/// `(E_symmetric, E_antisymmetric)`.
pub fn z2_resolved_energies(model: &XyzChain, sector: &BasisSector) -> Result<(f64, f64)> {
    let s = z2_ground(model, sector, Parity::Symmetric, DEFAULT_TOL)?;
    let a = z2_ground(model, sector, Parity::Antisymmetric, DEFAULT_TOL)?;
    Ok((s.energy, a.energy))
}

/// Amplitudes on the full `2^N` basis.
fn embed(result: &EdResult) -> Result<Vec<f64>> {
    let n = result.n_sites();
    if n > 24 {
        return Err(Error::EnumerationBudget {
            n_sites: n,
            size: 1u64 << n.min(63),
        });
    }
    let mut out = vec![0.0; 1usize << n];
    for (x, v) in result.configs()?.iter().zip(&result.vector) {
        out[x.bits() as usize] = *v;
    }
    Ok(out)
}

/// Von Neumann entropy (natural log) of sites `[0, cut)`.
pub fn entanglement_entropy(result: &EdResult, cut: usize) -> Result<f64> {
    let n = result.n_sites();
    if cut == 0 || cut >= n {
        return Err(Error::InvalidConfig(format!("cut {cut} outside 1..{n}")));
    }
    let (rows, cols) = (1usize << cut, 1usize << (n - cut));
    let mut a = Mat::<f64>::zeros(rows, cols);
    let mask = (1u64 << cut) - 1;
    for (x, v) in result.configs()?.iter().zip(&result.vector) {
        a[((x.bits() & mask) as usize, (x.bits() >> cut) as usize)] = *v;
    }
    let sv = a
        .singular_values()
        .map_err(|_| Error::NonFinite("singular value decomposition failed".into()))?;
    let total: f64 = sv.iter().map(|s| s * s).sum();
    Ok(sv
        .iter()
        .map(|s| s * s / total)
        .filter(|p| *p > 0.0)
        .map(|p| -p * p.ln())
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            _ => Err(Error::InvalidConfig(format!("unknown axis '{s}'"))),
        }
    }
}

/// `(⟨J_α²⟩ − ⟨J_α⟩²) / N` with `J_α = Σ_i σ_i^α`.
pub fn susceptibility(result: &EdResult, axis: Axis) -> Result<f64> {
    let n = result.n_sites();
    let configs = result.configs()?;
    match axis {
        Axis::Z => {
            let (mut m1, mut m2) = (0.0, 0.0);
            for (x, v) in configs.iter().zip(&result.vector) {
                let m = x.magnetization() as f64;
                m1 += v * v * m;
                m2 += v * v * m * m;
            }
            Ok((m2 - m1 * m1) / n as f64)
        }
        Axis::X | Axis::Y => {
            let psi = embed(result)?;
            let mut j = vec![C64::new(0.0, 0.0); psi.len()];
            for (x, v) in configs.iter().zip(&result.vector) {
                for i in 0..n {
                    let c = match axis {
                        Axis::X => C64::new(*v, 0.0),
                        _ => C64::new(0.0, *v * x.spin_f64(i)),
                    };
                    j[x.flip(i).bits() as usize] += c;
                }
            }
            let m2: f64 = j.iter().map(|z| z.norm_sqr()).sum();
            let m1: C64 = j.iter().zip(&psi).map(|(z, p)| z * p).sum();
            Ok((m2 - m1.norm_sqr()) / n as f64)
        }
    }
}

/// `C(k) = Σ_i ⟨σ_i^α σ_{i+k}^α⟩ / N`.
pub fn correlation(result: &EdResult, axis: Axis, k: usize) -> Result<f64> {
    let n = result.n_sites();
    if k > n / 2 {
        return Err(Error::InvalidConfig(format!("distance {k} exceeds N/2")));
    }
    if k == 0 {
        return Ok(result.vector.iter().map(|v| v * v).sum());
    }
    let mut acc = 0.0;
    for (x, v) in result.configs()?.iter().zip(&result.vector) {
        for i in 0..n {
            let j = (i + k) % n;
            let zz = x.spin_f64(i) * x.spin_f64(j);
            acc += match axis {
                Axis::Z => v * v * zz,
                Axis::X => v * result.amplitude(x.flip(i).flip(j)),
                Axis::Y => -zz * v * result.amplitude(x.flip(i).flip(j)),
            };
        }
    }
    Ok(acc / n as f64)
}

/// `[E(θ+h) − 2E(θ) + E(θ−h)] / h²` for a one-parameter model family.
pub fn energy_second_derivative(
    family: &dyn Fn(f64) -> Result<XyzChain>,
    sector: SectorKind,
    theta: f64,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidConfig("step must be positive".into()));
    }
    let e = |t: f64| -> Result<f64> {
        let m = family(t)?;
        let sec = BasisSector::new(sector, m.n_sites)?;
        Ok(lanczos_ground(&m, &sec, DEFAULT_TOL)?.energy)
    };
    Ok((e(theta + h)? - 2.0 * e(theta)? + e(theta - h)?) / (h * h))
}

/// Sum of the `k` largest `|ψ(x)|²`.
pub fn top_k_mass(result: &EdResult, k: usize) -> Result<f64> {
    if k > result.vector.len() {
        return Err(Error::InvalidConfig(format!(
            "k = {k} exceeds sector size {}",
            result.vector.len()
        )));
    }
    let mut p = result.probabilities();
    p.sort_by(|a, b| b.total_cmp(a));
    Ok(p[..k].iter().sum())
}

/// Little-endian `u32 N`, `u32 sector code`, `u64 size`, then f64 amplitudes.
pub fn gsvec_bytes(result: &EdResult) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * result.vector.len());
    out.extend_from_slice(&(result.n_sites() as u32).to_le_bytes());
    out.extend_from_slice(&result.sector.kind().code().to_le_bytes());
    out.extend_from_slice(&(result.vector.len() as u64).to_le_bytes());
    for v in &result.vector {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn parse_gsvec(bytes: &[u8]) -> Result<(BasisSector, Vec<f64>)> {
    if bytes.len() < 16 {
        return Err(Error::Format("ground-state file shorter than its header".into()));
    }
    let n = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let code = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let size = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let kind = SectorKind::from_code(code)
        .ok_or_else(|| Error::Format(format!("unknown sector code {code}")))?;
    let sector = BasisSector::new(kind, n)?;
    if sector.size_u64() != size || bytes.len() as u64 != 16 + 8 * size {
        return Err(Error::Format(format!(
            "size field {size} inconsistent with sector or file length"
        )));
    }
    let v = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((sector, v))
}

pub fn write_gsvec(result: &EdResult, path: impl AsRef<Path>) -> Result<()> {
    std::fs::File::create(path)?.write_all(&gsvec_bytes(result))?;
    Ok(())
}

pub fn read_gsvec(path: impl AsRef<Path>) -> Result<(BasisSector, Vec<f64>)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    parse_gsvec(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_model, ModelName};

    fn full(n: usize) -> BasisSector {
        BasisSector::full(n).unwrap()
    }

    fn ghz(n: usize) -> EdResult {
        let mut v = vec![0.0; 1 << n];
        v[0] = 1.0;
        v[(1 << n) - 1] = 1.0;
        EdResult::from_vector(full(n), v, 0.0).unwrap()
    }

    fn product_up(n: usize) -> EdResult {
        let mut v = vec![0.0; 1 << n];
        v[(1 << n) - 1] = 1.0;
        EdResult::from_vector(full(n), v, 0.0).unwrap()
    }

    #[test]
    fn heisenberg_four_sites() {
        let m = make_model(ModelName::Xxz, &[1.0], 4).unwrap();
        let r = lanczos_ground(&m, &full(4), DEFAULT_TOL).unwrap();
        assert!((r.energy + 8.0).abs() < 1e-10);
        assert!((norm(&r.vector) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lanczos_matches_dense_on_larger_sector() {
        let m = make_model(ModelName::Xxz, &[10.0], 10).unwrap();
        let sec = full(10);
        let r = lanczos_ground(&m, &sec, DEFAULT_TOL).unwrap();
        let d = dense_spectrum(&m, &sec).unwrap();
        assert!((r.energy - d[0]).abs() < 1e-8);
        assert!(r.n_iterations > 0);
        let mut hv = vec![0.0; r.vector.len()];
        SectorOperator::new(&m, sec).unwrap().apply(&r.vector, &mut hv);
        let res: f64 = hv
            .iter()
            .zip(&r.vector)
            .map(|(a, b)| (a - r.energy * b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(res < 1e-8 * 40.0);
    }

    #[test]
    fn deflated_spectrum_matches_dense() {
        let m = make_model(ModelName::Txyz, &[0.3, 1.2, -1.0, -1.0], 5).unwrap();
        let l = lanczos_full_spectrum(&m, &full(5)).unwrap();
        let d = dense_spectrum(&m, &full(5)).unwrap();
        for (a, b) in l.iter().zip(&d) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn deflated_spectrum_with_heavy_degeneracy() {
        let m = make_model(ModelName::Xxz, &[0.7], 6).unwrap();
        let l = lanczos_full_spectrum(&m, &full(6)).unwrap();
        let d = dense_spectrum(&m, &full(6)).unwrap();
        for (a, b) in l.iter().zip(&d) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn top_k_mass_depends_on_the_local_basis() {
        let mass = |name, a: f64, b: f64| {
            let m = make_model(name, &[a, b, -1.0, -1.0], 12).unwrap();
            top_k_mass(&lanczos_ground(&m, &full(12), DEFAULT_TOL).unwrap(), 100).unwrap()
        };
        // the dominant coupling sits on zz in the txyz basis at small (a, b)
        // and in the diamond basis at large (a, b)
        assert!(mass(ModelName::Txyz, 0.27, 0.77) > 2.0 * mass(ModelName::Txyz, 1.23, 1.73));
        assert!(mass(ModelName::TxyzDiamond, 1.23, 1.73) > 2.0 * mass(ModelName::TxyzDiamond, 0.27, 0.77));
    }

    #[test]
    fn parity_sectors() {
        let m = make_model(ModelName::Txyz, &[0.0, 0.0, -1.0, -1.0], 8).unwrap();
        let (s, a) = z2_resolved_energies(&m, &full(8)).unwrap();
        assert!((s - a).abs() < 1e-10);
        assert!((s + 16.0).abs() < 1e-10);

        let m = make_model(ModelName::Txyz, &[0.7, 1.6, -1.0, -1.0], 10).unwrap();
        let e0 = lanczos_ground(&m, &full(10), DEFAULT_TOL).unwrap().energy;
        let (s, a) = z2_resolved_energies(&m, &full(10)).unwrap();
        assert!(s >= e0 - 1e-10 && a >= e0 - 1e-10);
        assert!((s.min(a) - e0).abs() < 1e-8);
    }

    #[test]
    fn parity_ground_is_an_eigenvector() {
        let m = make_model(ModelName::Xxz, &[0.6], 10).unwrap();
        let sec = BasisSector::zero_magnetization(10).unwrap();
        for p in [Parity::Symmetric, Parity::Antisymmetric] {
            let r = z2_ground(&m, &sec, p, DEFAULT_TOL).unwrap();
            let hv = crate::model::matvec(&m, &r.vector, &sec).unwrap();
            for (a, b) in hv.iter().zip(&r.vector) {
                assert!((a - r.energy * b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn entropy_examples() {
        assert!(entanglement_entropy(&product_up(6), 3).unwrap().abs() < 1e-12);
        for cut in 1..6 {
            assert!((entanglement_entropy(&ghz(6), cut).unwrap() - 2f64.ln()).abs() < 1e-12);
        }
        let m = make_model(ModelName::J1J2, &[1.0, 0.3], 10).unwrap();
        let r = lanczos_ground(&m, &BasisSector::zero_magnetization(10).unwrap(), DEFAULT_TOL).unwrap();
        for cut in 1..10 {
            let a = entanglement_entropy(&r, cut).unwrap();
            let b = entanglement_entropy(&r, 10 - cut).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn susceptibility_examples() {
        assert!(susceptibility(&product_up(6), Axis::Z).unwrap().abs() < 1e-12);
        assert!((susceptibility(&ghz(6), Axis::Z).unwrap() - 6.0).abs() < 1e-12);
        // σx eigenstate |+…+⟩ has zero x-variance and unit y, z variance per site.
        let n = 5;
        let v = vec![1.0; 1 << n];
        let plus = EdResult::from_vector(full(n), v, 0.0).unwrap();
        assert!(susceptibility(&plus, Axis::X).unwrap().abs() < 1e-12);
        assert!((susceptibility(&plus, Axis::Y).unwrap() - 1.0).abs() < 1e-12);
        assert!((susceptibility(&plus, Axis::Z).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_examples() {
        let g = ghz(8);
        assert!((correlation(&g, Axis::Y, 0).unwrap() - 1.0).abs() < 1e-12);
        assert!(correlation(&product_up(8), Axis::Y, 2).unwrap().abs() < 1e-12);
        assert!((correlation(&g, Axis::Z, 3).unwrap() - 1.0).abs() < 1e-12);
        // Singlet-like check: Heisenberg ground state has equal x, y, z correlations.
        let m = make_model(ModelName::Xxz, &[1.0], 8).unwrap();
        let r = lanczos_ground(&m, &BasisSector::zero_magnetization(8).unwrap(), DEFAULT_TOL).unwrap();
        let cz = correlation(&r, Axis::Z, 1).unwrap();
        assert!((correlation(&r, Axis::X, 1).unwrap() - cz).abs() < 1e-10);
        assert!((correlation(&r, Axis::Y, 1).unwrap() - cz).abs() < 1e-10);
        // E0 = 3 N C(1) for the Pauli Heisenberg chain.
        assert!((3.0 * 8.0 * cz - r.energy).abs() < 1e-9);
    }

    #[test]
    fn tail_mass() {
        let g = ghz(6);
        assert!((top_k_mass(&g, 2).unwrap() - 1.0).abs() < 1e-12);
        let m = make_model(ModelName::Xxz, &[0.5], 8).unwrap();
        let r = lanczos_ground(&m, &full(8), DEFAULT_TOL).unwrap();
        assert!((top_k_mass(&r, 256).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn second_derivative_of_affine_family() {
        // Classical Ising family: E(θ) = -8 (1 + θ) is affine.
        let fam = |t: f64| {
            XyzChain::new(
                8,
                -(1.0 + t),
                0.0,
                crate::model::Coupling::new(0.0, 0.0, 1.0),
                crate::model::Coupling::ZERO,
            )
        };
        let d2 = energy_second_derivative(&fam, SectorKind::Full, 0.3, 1e-2).unwrap();
        assert!(d2.abs() < 10.0 * DEFAULT_TOL / 1e-4);
    }

    #[test]
    fn gsvec_round_trip() {
        let m = make_model(ModelName::Xxz, &[1.0], 6).unwrap();
        let sec = BasisSector::zero_magnetization(6).unwrap();
        let r = lanczos_ground(&m, &sec, DEFAULT_TOL).unwrap();
        let bytes = gsvec_bytes(&r);
        let (s2, v2) = parse_gsvec(&bytes).unwrap();
        assert_eq!(s2, sec);
        assert_eq!(v2, r.vector);
        assert!(parse_gsvec(&bytes[..bytes.len() - 8]).is_err());
    }
}
