//! Truncated bosonic Fock space over the discrete modes, with
//! epsilon-scaled commutation relations [a(f), a'(g)] = eps <f, g>.
//!
//! The basis is every occupation vector n in N^{M'} with total occupation
//! at most `n_max`, enumerated graded-lexicographically. Ladder amplitudes
//! carry sqrt(eps n), so the commutator is order eps while coherent
//! amplitudes stay order one.

use crate::error::{Error, Result};
use crate::field_model::CouplingVector;
use crate::linalg::{axpy, dot, norm, scale, C64, SparseMatrix, Triplet};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Arc;

/// Truncated Fock space: mode count M', max total occupation, eps.
#[derive(Clone, Debug)]
pub struct FockSpace {
    mode_count: usize,
    n_max: usize,
    epsilon: f64,
    basis: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
    /// raise[m][i] = index of basis[i] + delta_m, if within truncation.
    raise: Vec<Vec<Option<u32>>>,
    mode_set_hash: Option<String>,
}

impl FockSpace {
    pub fn new(mode_count: usize, n_max: usize, epsilon: f64) -> Result<Arc<FockSpace>> {
        if mode_count == 0 {
            return Err(Error::InvalidInput("mode count must be >= 1".into()));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
        }
        let mut basis = Vec::new();
        let mut current = vec![0u32; mode_count];
        for total in 0..=n_max {
            enumerate_compositions(total as u32, 0, &mut current, &mut basis);
        }
        debug_assert_eq!(basis.len(), binomial(mode_count + n_max, n_max));
        let index: HashMap<Vec<u32>, usize> =
            basis.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let mut raise = vec![vec![None; basis.len()]; mode_count];
        for (i, n) in basis.iter().enumerate() {
            let total: u32 = n.iter().sum();
            if (total as usize) < n_max {
                let mut up = n.clone();
                for m in 0..mode_count {
                    up[m] += 1;
                    raise[m][i] = index.get(&up).map(|&j| j as u32);
                    up[m] -= 1;
                }
            }
        }
        Ok(Arc::new(FockSpace {
            mode_count,
            n_max,
            epsilon,
            basis,
            index,
            raise,
            mode_set_hash: None,
        }))
    }

    pub fn with_mode_set_hash(mut self: Arc<Self>, hash: &str) -> Arc<FockSpace> {
        Arc::make_mut(&mut self).mode_set_hash = Some(hash.to_string());
        self
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn basis(&self) -> &[Vec<u32>] {
        &self.basis
    }

    pub fn basis_index(&self, n: &[u32]) -> Option<usize> {
        self.index.get(n).copied()
    }

    pub fn total_occupation(&self, i: usize) -> u32 {
        self.basis[i].iter().sum()
    }

    pub fn mode_set_hash(&self) -> Option<&str> {
        self.mode_set_hash.as_deref()
    }

    fn check_vector_len(&self, f: &[C64]) -> Result<()> {
        if f.len() != self.mode_count {
            return Err(Error::DimensionMismatch(format!(
                "one-photon vector has {} entries, space has {} modes",
                f.len(),
                self.mode_count
            )));
        }
        if f.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("one-photon vector has non-finite entries".into()));
        }
        Ok(())
    }

    /// Fingerprint used to refuse mixing operators across spaces, in
    /// particular across different eps.
    pub fn fingerprint(&self) -> (usize, usize, u64) {
        (self.mode_count, self.n_max, self.epsilon.to_bits())
    }

    /// out += a(f) v, matrix-free: a(f)|n> = sum_m conj(f_m) sqrt(eps n_m) |n - d_m>.
    pub fn apply_lowering(&self, f: &[C64], v: &[C64], out: &mut [C64]) {
        let eps = self.epsilon;
        for m in 0..self.mode_count {
            let fm = f[m].conj();
            if fm.norm_sqr() == 0.0 {
                continue;
            }
            for (target, &src) in self.raise[m].iter().enumerate() {
                // raise[m][target] = src means a_m maps src back down to target.
                let Some(src) = src else { continue };
                let n_m = self.basis[src as usize][m] as f64;
                out[target] += fm * (eps * n_m).sqrt() * v[src as usize];
            }
        }
    }

    /// out += a'(f) v.
    pub fn apply_raising(&self, f: &[C64], v: &[C64], out: &mut [C64]) {
        let eps = self.epsilon;
        for m in 0..self.mode_count {
            let fm = f[m];
            if fm.norm_sqr() == 0.0 {
                continue;
            }
            for (src, &target) in self.raise[m].iter().enumerate() {
                let Some(target) = target else { continue };
                let n_m = self.basis[target as usize][m] as f64;
                out[target as usize] += fm * (eps * n_m).sqrt() * v[src];
            }
        }
    }

    /// out += (a'(f) + a(f)) v, one Segal-field component.
    pub fn apply_field(&self, f: &[C64], v: &[C64], out: &mut [C64]) {
        self.apply_lowering(f, v, out);
        self.apply_raising(f, v, out);
    }
}

fn enumerate_compositions(remaining: u32, mode: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if mode + 1 == current.len() {
        current[mode] = remaining;
        out.push(current.clone());
        current[mode] = 0;
        return;
    }
    for take in 0..=remaining {
        current[mode] = take;
        enumerate_compositions(remaining - take, mode + 1, current, out);
    }
    current[mode] = 0;
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

/// Sparse operator on a [`FockSpace`].
#[derive(Clone, Debug)]
pub struct FockOperator {
    pub matrix: SparseMatrix,
    pub hermitian: bool,
    /// True when assembly dropped contributions at the truncation boundary.
    pub truncation_touched: bool,
    space_fingerprint: (usize, usize, u64),
}

impl FockOperator {
    pub(crate) fn from_parts(
        fs: &FockSpace,
        matrix: SparseMatrix,
        hermitian: bool,
        touched: bool,
    ) -> FockOperator {
        if hermitian {
            debug_assert!(matrix.hermiticity_deviation() < 1e-13);
        }
        FockOperator {
            matrix,
            hermitian,
            truncation_touched: touched,
            space_fingerprint: fs.fingerprint(),
        }
    }

    pub fn same_space(&self, other: &FockOperator) -> bool {
        self.space_fingerprint == other.space_fingerprint
    }

    pub fn compatible_with(&self, fs: &FockSpace) -> bool {
        self.space_fingerprint == fs.fingerprint()
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        self.matrix.apply(v)
    }

    pub fn expectation(&self, v: &[C64]) -> C64 {
        dot(v, &self.matrix.apply(v))
    }

    /// Sum of operators living on the same space.
    pub fn add(&self, other: &FockOperator) -> Result<FockOperator> {
        if !self.same_space(other) {
            return Err(Error::DimensionMismatch(
                "operators live on different Fock spaces (or different eps)".into(),
            ));
        }
        Ok(FockOperator {
            matrix: self.matrix.add(&other.matrix),
            hermitian: self.hermitian && other.hermitian,
            truncation_touched: self.truncation_touched || other.truncation_touched,
            space_fingerprint: self.space_fingerprint,
        })
    }

    pub fn scaled(&self, factor: C64) -> FockOperator {
        FockOperator {
            matrix: self.matrix.scaled(factor),
            hermitian: self.hermitian && factor.im == 0.0,
            truncation_touched: self.truncation_touched,
            space_fingerprint: self.space_fingerprint,
        }
    }
}

/// Annihilation operator a(f); antilinear in f.
pub fn annihilation(fs: &FockSpace, f: &[C64]) -> Result<FockOperator> {
    fs.check_vector_len(f)?;
    let mut triplets = Vec::new();
    let eps = fs.epsilon();
    for m in 0..fs.mode_count() {
        let fm = f[m].conj();
        if fm.norm_sqr() == 0.0 {
            continue;
        }
        for (target, &src) in fs.raise[m].iter().enumerate() {
            let Some(src) = src else { continue };
            let n_m = fs.basis[src as usize][m] as f64;
            triplets.push(Triplet {
                row: target,
                col: src as usize,
                value: fm * (eps * n_m).sqrt(),
            });
        }
    }
    let matrix = SparseMatrix::from_triplets(fs.dim(), fs.dim(), &triplets);
    Ok(FockOperator::from_parts(fs, matrix, false, false))
}

/// Creation operator a'(f), the adjoint of [`annihilation`]; linear in f.
/// Contributions that would leave the truncated space are dropped and the
/// operator is flagged.
pub fn creation(fs: &FockSpace, f: &[C64]) -> Result<FockOperator> {
    fs.check_vector_len(f)?;
    let mut triplets = Vec::new();
    let eps = fs.epsilon();
    let mut touched = false;
    for m in 0..fs.mode_count() {
        let fm = f[m];
        if fm.norm_sqr() == 0.0 {
            continue;
        }
        touched = true; // raising always drops the top sector
        for (src, &target) in fs.raise[m].iter().enumerate() {
            let Some(target) = target else { continue };
            let n_m = fs.basis[target as usize][m] as f64;
            triplets.push(Triplet {
                row: target as usize,
                col: src,
                value: fm * (eps * n_m).sqrt(),
            });
        }
    }
    let matrix = SparseMatrix::from_triplets(fs.dim(), fs.dim(), &triplets);
    Ok(FockOperator::from_parts(fs, matrix, false, touched))
}

/// Segal-field components phi_i = a'(F_i) + a(F_i) for a coupling vector,
/// one Hermitian operator per spatial direction.
pub fn field_operator(fs: &FockSpace, coupling: &CouplingVector) -> Result<Vec<FockOperator>> {
    if coupling.amplitudes.len() != fs.mode_count() {
        return Err(Error::DimensionMismatch(format!(
            "coupling has {} flattened modes, space has {}",
            coupling.amplitudes.len(),
            fs.mode_count()
        )));
    }
    let mut components = Vec::with_capacity(coupling.d);
    for i in 0..coupling.d {
        let f_i = coupling.component(i);
        let low = annihilation(fs, &f_i)?;
        let high = creation(fs, &f_i)?;
        let matrix = low.matrix.add(&high.matrix);
        components.push(FockOperator::from_parts(fs, matrix, true, high.truncation_touched));
    }
    Ok(components)
}

/// Second quantization of a nonnegative multiplier t over the modes:
/// diagonal with eigenvalue eps * sum_m t_m n_m.
pub fn dgamma(fs: &FockSpace, t: &[f64]) -> Result<FockOperator> {
    if t.len() != fs.mode_count() {
        return Err(Error::DimensionMismatch(format!(
            "multiplier has {} entries, space has {} modes",
            t.len(),
            fs.mode_count()
        )));
    }
    if t.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidInput("dgamma multiplier must be nonnegative".into()));
    }
    let eps = fs.epsilon();
    let triplets: Vec<Triplet> = fs
        .basis
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let val: f64 = n.iter().zip(t).map(|(&nm, &tm)| nm as f64 * tm).sum();
            Triplet {
                row: i,
                col: i,
                value: C64::new(eps * val, 0.0),
            }
        })
        .collect();
    let matrix = SparseMatrix::from_triplets(fs.dim(), fs.dim(), &triplets);
    Ok(FockOperator::from_parts(fs, matrix, true, false))
}

/// Diagonal of dgamma(t) as a plain vector, for matrix-free application.
pub fn dgamma_diagonal(fs: &FockSpace, t: &[f64]) -> Result<Vec<f64>> {
    if t.len() != fs.mode_count() {
        return Err(Error::DimensionMismatch("dgamma multiplier length".into()));
    }
    let eps = fs.epsilon();
    Ok(fs
        .basis
        .iter()
        .map(|n| eps * n.iter().zip(t).map(|(&nm, &tm)| nm as f64 * tm).sum::<f64>())
        .collect())
}

/// Classical point z feeding a displaced-vacuum state.
#[derive(Clone, Debug)]
pub struct CoherentSpec {
    pub z: Vec<C64>,
}

pub const DEFAULT_TAIL_TOL: f64 = 1e-10;

/// State vector on a truncated Fock space, tagged with the space data it
/// was built on so checkpoints can be validated.
#[derive(Clone, Debug)]
pub struct FockVector {
    pub data: Vec<C64>,
    pub epsilon: f64,
    pub n_max: usize,
    pub mode_count: usize,
    pub mode_set_hash: Option<String>,
}

impl FockVector {
    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        let dev = (self.norm() - 1.0).abs();
        if dev > tol {
            return Err(Error::NotNormalized(dev));
        }
        Ok(())
    }

    /// Occupation mass sitting in the top graded sector.
    pub fn top_sector_mass(&self, fs: &FockSpace) -> f64 {
        self.data
            .iter()
            .enumerate()
            .filter(|(i, _)| fs.total_occupation(*i) as usize == fs.n_max())
            .map(|(_, c)| c.norm_sqr())
            .sum()
    }

    /// Binary checkpoint: little-endian (re, im) f64 pairs, with a JSON
    /// sidecar `<path>.json` recording eps, n_max, mode count and the
    /// mode-set hash.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        for c in &self.data {
            f.write_all(&c.re.to_le_bytes())?;
            f.write_all(&c.im.to_le_bytes())?;
        }
        let sidecar = StateSidecar {
            epsilon: self.epsilon,
            n_max: self.n_max,
            mode_count: self.mode_count,
            mode_set_hash: self.mode_set_hash.clone(),
            len: self.data.len(),
        };
        let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(path.with_extension("json"), json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<FockVector> {
        let sidecar_text = std::fs::read_to_string(path.with_extension("json"))?;
        let sidecar: StateSidecar =
            serde_json::from_str(&sidecar_text).map_err(|e| Error::Serde(e.to_string()))?;
        let mut f = std::fs::File::open(path)?;
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes)?;
        if bytes.len() != 16 * sidecar.len {
            return Err(Error::Serde(format!(
                "state file holds {} bytes, sidecar says {} amplitudes",
                bytes.len(),
                sidecar.len
            )));
        }
        let data = bytes
            .chunks_exact(16)
            .map(|c| {
                C64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        Ok(FockVector {
            data,
            epsilon: sidecar.epsilon,
            n_max: sidecar.n_max,
            mode_count: sidecar.mode_count,
            mode_set_hash: sidecar.mode_set_hash,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct StateSidecar {
    epsilon: f64,
    n_max: usize,
    mode_count: usize,
    mode_set_hash: Option<String>,
    len: usize,
}

/// Basis (number) state |n>.
pub fn number_state(fs: &FockSpace, n: &[u32]) -> Result<FockVector> {
    if n.len() != fs.mode_count() {
        return Err(Error::DimensionMismatch(format!(
            "occupation vector has {} entries, space has {} modes",
            n.len(),
            fs.mode_count()
        )));
    }
    let total: u32 = n.iter().sum();
    if total as usize > fs.n_max() {
        return Err(Error::InvalidInput(format!(
            "total occupation {total} exceeds truncation {}",
            fs.n_max()
        )));
    }
    let idx = fs.basis_index(n).expect("in-range occupation vector");
    let mut data = vec![C64::default(); fs.dim()];
    data[idx] = C64::new(1.0, 0.0);
    Ok(FockVector {
        data,
        epsilon: fs.epsilon(),
        n_max: fs.n_max(),
        mode_count: fs.mode_count(),
        mode_set_hash: fs.mode_set_hash().map(str::to_string),
    })
}

/// Vacuum |0>.
pub fn vacuum(fs: &FockSpace) -> FockVector {
    number_state(fs, &vec![0; fs.mode_count()]).expect("vacuum is always representable")
}

/// Smallest n with Poisson(mean) upper-tail mass P(X > n) below tol.
pub fn poisson_required_n_max(mean: f64, tol: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    // Walk the pmf up from n = 0 in linear space; terms underflow harmlessly
    // once the tail is far below tol.
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut n = 0usize;
    if p == 0.0 {
        // Huge mean: switch to the normal approximation plus safety margin.
        let n_est = mean + 12.0 * mean.sqrt() + 20.0;
        return n_est.ceil() as usize;
    }
    while 1.0 - cdf > tol && n < 10_000_000 {
        n += 1;
        p *= mean / n as f64;
        cdf += p;
    }
    n
}

/// Displaced vacuum Xi_eps(z) = exp{(a'(z) - a(z)) / eps} |0>, built by a
/// substepped Taylor expansion of the displacement exponential, then
/// renormalized. Errors out when the truncation cannot carry the state:
/// the mean total occupation is ||z||^2 / eps and the occupation
/// distribution is Poisson, so the required n_max is the Poisson
/// (1 - tail_tol)-quantile.
pub fn coherent_state(fs: &FockSpace, cs: &CoherentSpec, tail_tol: f64) -> Result<FockVector> {
    fs.check_vector_len(&cs.z)?;
    let eps = fs.epsilon();
    let z_norm_sq: f64 = cs.z.iter().map(|c| c.norm_sqr()).sum();
    let mean_occupation = z_norm_sq / eps;
    let required = poisson_required_n_max(mean_occupation, tail_tol);
    if required > fs.n_max() {
        return Err(Error::UnderTruncated {
            tail: poisson_tail(mean_occupation, fs.n_max()),
            tol: tail_tol,
            mean_occupation,
            required_n_max: required,
        });
    }

    let mut v = vacuum(fs).data;
    if z_norm_sq > 0.0 {
        // Generator K = (a'(z) - a(z)) / eps is anti-Hermitian; exp(K) is
        // applied as (exp(K/s))^s with ||K/s|| <~ 1 per substep so the
        // Taylor sums never see large cancellations.
        let gen_bound = 2.0 * z_norm_sq.sqrt() * ((fs.n_max() as f64 + 1.0) / eps).sqrt();
        let steps = gen_bound.ceil().max(1.0) as usize;
        let zc: Vec<C64> = cs.z.iter().map(|c| c / (eps * steps as f64)).collect();
        let mut term = vec![C64::default(); fs.dim()];
        let mut next = vec![C64::default(); fs.dim()];
        for _ in 0..steps {
            let mut acc = v.clone();
            term.copy_from_slice(&v);
            for order in 1..200 {
                next.iter_mut().for_each(|c| *c = C64::default());
                fs.apply_raising(&zc, &term, &mut next);
                let mut lowered = vec![C64::default(); fs.dim()];
                fs.apply_lowering(&zc, &term, &mut lowered);
                for (n, l) in next.iter_mut().zip(&lowered) {
                    *n = (*n - l) / order as f64;
                }
                std::mem::swap(&mut term, &mut next);
                axpy(&mut acc, C64::new(1.0, 0.0), &term);
                if norm(&term) < 1e-18 {
                    break;
                }
            }
            v = acc;
        }
    }

    let nv = norm(&v);
    scale(&mut v, 1.0 / nv);
    let state = FockVector {
        data: v,
        epsilon: eps,
        n_max: fs.n_max(),
        mode_count: fs.mode_count(),
        mode_set_hash: fs.mode_set_hash().map(str::to_string),
    };
    let top = state.top_sector_mass(fs);
    if top > tail_tol {
        return Err(Error::UnderTruncated {
            tail: top,
            tol: tail_tol,
            mean_occupation,
            required_n_max: poisson_required_n_max(mean_occupation, tail_tol * 1e-2),
        });
    }
    Ok(state)
}

/// Poisson upper-tail mass P(X > n) at the given mean.
pub fn poisson_tail(mean: f64, n: usize) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    // Sum the tail from n+1 upward in log space.
    let ln_p = |k: usize| -> f64 {
        let mut ln_fact = 0.0;
        for i in 1..=k {
            ln_fact += (i as f64).ln();
        }
        -mean + k as f64 * mean.ln() - ln_fact
    };
    let mut total = 0.0;
    let mut lp = ln_p(n + 1);
    let mut k = n + 1;
    loop {
        let p = lp.exp();
        total += p;
        if p < 1e-300 || (total > 0.0 && p < total * 1e-18) || k > n + 10_000 {
            break;
        }
        k += 1;
        lp += mean.ln() - (k as f64).ln();
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn basis_is_graded_lex_and_counted_by_stars_and_bars() {
        let fs = FockSpace::new(2, 2, 0.5).unwrap();
        let expected: Vec<Vec<u32>> = vec![
            vec![0, 0],
            vec![0, 1],
            vec![1, 0],
            vec![0, 2],
            vec![1, 1],
            vec![2, 0],
        ];
        assert_eq!(fs.basis(), expected.as_slice());
        assert_eq!(fs.dim(), 6); // C(4, 2)
        let fs2 = FockSpace::new(4, 8, 0.1).unwrap();
        assert_eq!(fs2.dim(), 495); // C(12, 8)
    }

    #[test]
    fn single_quantum_lowering_carries_sqrt_eps() {
        let fs = FockSpace::new(2, 3, 0.25).unwrap();
        let a = annihilation(&fs, &[c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let one = number_state(&fs, &[1, 0]).unwrap();
        let out = a.apply(&one.data);
        let vac = vacuum(&fs);
        let overlap = dot(&vac.data, &out);
        assert!((overlap - c(0.5, 0.0)).norm() < 1e-15);
        // vacuum is annihilated
        let out0 = a.apply(&vac.data);
        assert!(norm(&out0) == 0.0);
    }

    #[test]
    fn creation_is_exact_adjoint_and_raises_vacuum() {
        let fs = FockSpace::new(2, 3, 0.25).unwrap();
        let f = [c(0.3, -0.2), c(1.0, 0.5)];
        let a = annihilation(&fs, &f).unwrap();
        let adag = creation(&fs, &f).unwrap();
        let diff = adag.matrix.add(&a.matrix.adjoint().scaled(c(-1.0, 0.0)));
        assert_eq!(diff.nnz(), 0);

        let adag_e1 = creation(&fs, &[c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let vac = vacuum(&fs);
        let raised = adag_e1.apply(&vac.data);
        let one = number_state(&fs, &[1, 0]).unwrap();
        assert!((dot(&one.data, &raised) - c(0.5, 0.0)).norm() < 1e-15);

        // <n| a'(f) |n> = 0 by occupation orthogonality.
        let n = number_state(&fs, &[1, 1]).unwrap();
        assert!(dot(&n.data, &adag.apply(&n.data)).norm() < 1e-15);
    }

    #[test]
    fn ccr_holds_below_the_truncation_boundary() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let fs = FockSpace::new(3, 5, 0.125).unwrap();
        let f: Vec<C64> = (0..3).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let g: Vec<C64> = (0..3).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let a_f = annihilation(&fs, &f).unwrap();
        let adag_g = creation(&fs, &g).unwrap();
        let comm = a_f
            .matrix
            .matmul(&adag_g.matrix)
            .add(&adag_g.matrix.matmul(&a_f.matrix).scaled(c(-1.0, 0.0)));
        let fg: C64 = f.iter().zip(&g).map(|(x, y)| x.conj() * y).sum();
        let expected = fg * fs.epsilon();
        for (i, n) in fs.basis().iter().enumerate() {
            if n.iter().sum::<u32>() as usize > fs.n_max() - 2 {
                continue;
            }
            let mut e_i = vec![C64::default(); fs.dim()];
            e_i[i] = c(1.0, 0.0);
            let out = comm.apply(&e_i);
            for (j, v) in out.iter().enumerate() {
                let want = if j == i { expected } else { C64::default() };
                assert!((v - want).norm() <= 1e-13, "commutator defect at ({i}, {j})");
            }
        }
    }

    #[test]
    fn dgamma_is_diagonal_with_eps_scaled_occupation() {
        let fs = FockSpace::new(1, 6, 0.1).unwrap();
        let d = dgamma(&fs, &[2.0]).unwrap();
        let n3 = number_state(&fs, &[3]).unwrap();
        let e = d.expectation(&n3.data);
        assert!((e - c(0.6, 0.0)).norm() < 1e-14);
        let vac = vacuum(&fs);
        assert!(d.expectation(&vac.data).norm() < 1e-16);
        assert!(dgamma(&fs, &[-1.0]).is_err());
    }

    #[test]
    fn dgamma_commutes_with_total_number() {
        let fs = FockSpace::new(3, 4, 0.2).unwrap();
        let d_omega = dgamma(&fs, &[0.5, 1.0, 2.5]).unwrap();
        let d_one = dgamma(&fs, &[1.0, 1.0, 1.0]).unwrap();
        let comm = d_omega
            .matrix
            .matmul(&d_one.matrix)
            .add(&d_one.matrix.matmul(&d_omega.matrix).scaled(c(-1.0, 0.0)));
        let worst = comm
            .to_triplets()
            .iter()
            .map(|t| t.value.norm())
            .fold(0.0f64, f64::max);
        assert!(worst <= 1e-12);
    }

    // Closed-form oracle: coefficients of the displaced vacuum are the
    // per-mode Poisson amplitudes e^{-|a|^2/2} a^n / sqrt(n!), a = z/sqrt(eps).
    fn coherent_oracle(fs: &FockSpace, z: &[C64]) -> Vec<C64> {
        let eps = fs.epsilon();
        let alpha: Vec<C64> = z.iter().map(|c| c / eps.sqrt()).collect();
        let norm_fac: f64 = alpha.iter().map(|a| -a.norm_sqr() / 2.0).sum::<f64>();
        let mut data = vec![C64::default(); fs.dim()];
        for (i, n) in fs.basis().iter().enumerate() {
            let mut coeff = C64::new(norm_fac.exp(), 0.0);
            for (m, &nm) in n.iter().enumerate() {
                let mut fact = 1.0f64;
                for t in 1..=nm {
                    fact *= t as f64;
                }
                coeff *= alpha[m].powu(nm) / fact.sqrt();
            }
            data[i] = coeff;
        }
        let nv = norm(&data);
        data.iter().map(|c| c / nv).collect()
    }

    #[test]
    fn coherent_state_matches_poisson_oracle_and_expectation_contract() {
        let fs = FockSpace::new(1, 40, 0.16).unwrap();
        let z = vec![c(0.8, 0.0)];
        let xi = coherent_state(&fs, &CoherentSpec { z: z.clone() }, DEFAULT_TAIL_TOL).unwrap();
        let oracle = coherent_oracle(&fs, &z);
        let fidelity = dot(&oracle, &xi.data).norm();
        assert!(fidelity > 1.0 - 1e-12, "fidelity {fidelity}");

        // <a(1)> = <1, z> = 0.8 within tail tolerance.
        let a = annihilation(&fs, &[c(1.0, 0.0)]).unwrap();
        let exp_a = dot(&xi.data, &a.apply(&xi.data));
        assert!((exp_a - c(0.8, 0.0)).norm() <= 1e-9, "<a> = {exp_a}");

        // z = 0 gives the vacuum.
        let xi0 = coherent_state(&fs, &CoherentSpec { z: vec![c(0.0, 0.0)] }, DEFAULT_TAIL_TOL).unwrap();
        assert!((xi0.data[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!(norm(&xi0.data[1..]) < 1e-15);
    }

    #[test]
    fn coherent_overlap_follows_the_gaussian_law() {
        // || z ||^2 = 2 eps gives |<Xi(0), Xi(z)>| = e^{-1}.
        let eps = 0.25;
        let fs = FockSpace::new(1, 30, eps).unwrap();
        let z = vec![c((2.0 * eps).sqrt(), 0.0)];
        let xi_z = coherent_state(&fs, &CoherentSpec { z }, DEFAULT_TAIL_TOL).unwrap();
        let xi_0 = coherent_state(&fs, &CoherentSpec { z: vec![c(0.0, 0.0)] }, DEFAULT_TAIL_TOL).unwrap();
        let overlap = dot(&xi_0.data, &xi_z.data).norm();
        assert!(
            (overlap - (-1.0f64).exp()).abs() < 1e-9,
            "overlap {overlap} vs {}",
            (-1.0f64).exp()
        );
    }

    #[test]
    fn coherent_dgamma_expectation_is_classical_energy_for_all_eps() {
        for &eps in &[0.25, 0.125, 0.0625] {
            let fs = FockSpace::new(2, poisson_required_n_max(0.52 / eps, 1e-12) + 4, eps).unwrap();
            let z = vec![c(0.6, 0.2), c(-0.3, 0.2)];
            let t = vec![1.3, 0.7];
            let xi = coherent_state(&fs, &CoherentSpec { z: z.clone() }, DEFAULT_TAIL_TOL).unwrap();
            let d = dgamma(&fs, &t).unwrap();
            let e = d.expectation(&xi.data).re;
            let classical: f64 = z.iter().zip(&t).map(|(zm, tm)| tm * zm.norm_sqr()).sum();
            assert!((e - classical).abs() < 1e-9, "eps = {eps}: {e} vs {classical}");
        }
    }

    #[test]
    fn under_truncation_is_reported_with_required_n_max() {
        let fs = FockSpace::new(1, 4, 0.04).unwrap();
        // mean occupation 0.64 / 0.04 = 16 >> 4
        let err = coherent_state(&fs, &CoherentSpec { z: vec![c(0.8, 0.0)] }, 1e-10);
        match err {
            Err(Error::UnderTruncated { required_n_max, mean_occupation, .. }) => {
                assert!(required_n_max > 4);
                assert!((mean_occupation - 16.0).abs() < 1e-12);
            }
            other => panic!("expected UnderTruncated, got {other:?}"),
        }
    }

    #[test]
    fn number_state_expectations() {
        let fs = FockSpace::new(1, 12, 0.1).unwrap();
        let n10 = number_state(&fs, &[10]).unwrap();
        let num_op = dgamma(&fs, &[1.0]).unwrap();
        // <a'(1) a(1)> = eps n = 1.
        assert!((num_op.expectation(&n10.data) - c(1.0, 0.0)).norm() < 1e-13);
        let a = annihilation(&fs, &[c(1.0, 0.0)]).unwrap();
        assert!(dot(&n10.data, &a.apply(&n10.data)).norm() < 1e-15);
        assert!(number_state(&fs, &[13]).is_err());
    }

    #[test]
    fn field_operator_single_mode_components() {
        use crate::field_model::CouplingVector;
        let fs = FockSpace::new(1, 8, 0.3).unwrap();
        let coupling = CouplingVector {
            d: 2,
            amplitudes: vec![c(1.0, 0.0)],
            directions: vec![vec![1.0, 0.0]],
        };
        let phi = field_operator(&fs, &coupling).unwrap();
        assert_eq!(phi.len(), 2);
        // x-component equals a' + a; y-component vanishes.
        let a = annihilation(&fs, &[c(1.0, 0.0)]).unwrap();
        let adag = creation(&fs, &[c(1.0, 0.0)]).unwrap();
        let sum = a.matrix.add(&adag.matrix);
        let diff = phi[0].matrix.add(&sum.scaled(c(-1.0, 0.0)));
        assert_eq!(diff.nnz(), 0);
        assert_eq!(phi[1].matrix.nnz(), 0);
        assert!(phi[0].hermitian);
    }

    #[test]
    fn coherent_field_expectation_is_eps_independent() {
        for &eps in &[0.4, 0.1, 0.025] {
            let n_max = poisson_required_n_max(0.09 / eps, 1e-12) + 4;
            let fs = FockSpace::new(1, n_max, eps).unwrap();
            let xi = coherent_state(&fs, &CoherentSpec { z: vec![c(0.3, 0.0)] }, DEFAULT_TAIL_TOL)
                .unwrap();
            let coupling = CouplingVector {
                d: 2,
                amplitudes: vec![c(1.0, 0.0)],
                directions: vec![vec![1.0, 0.0]],
            };
            let phi = field_operator(&fs, &coupling).unwrap();
            let e = dot(&xi.data, &phi[0].apply(&xi.data)).re;
            assert!((e - 0.6).abs() < 1e-9, "eps {eps}: {e}");
        }
    }

    #[test]
    fn lowering_is_antilinear_raising_linear() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let fs = FockSpace::new(2, 4, 0.2).unwrap();
        let f: Vec<C64> = (0..2).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let g: Vec<C64> = (0..2).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let alpha = c(0.7, -1.1);
        let fg: Vec<C64> = f.iter().zip(&g).map(|(x, y)| alpha * x + y).collect();
        let max_entry = |m: &crate::linalg::SparseMatrix| {
            m.to_triplets().iter().map(|t| t.value.norm()).fold(0.0f64, f64::max)
        };
        let a_combo = annihilation(&fs, &fg).unwrap();
        let a_f = annihilation(&fs, &f).unwrap();
        let a_g = annihilation(&fs, &g).unwrap();
        let lin = a_f.matrix.scaled(alpha.conj()).add(&a_g.matrix);
        assert!(max_entry(&a_combo.matrix.add(&lin.scaled(c(-1.0, 0.0)))) < 1e-13);

        let adag_combo = creation(&fs, &fg).unwrap();
        let adag_f = creation(&fs, &f).unwrap();
        let adag_g = creation(&fs, &g).unwrap();
        let lin = adag_f.matrix.scaled(alpha).add(&adag_g.matrix);
        assert!(max_entry(&adag_combo.matrix.add(&lin.scaled(c(-1.0, 0.0)))) < 1e-13);
    }

    #[test]
    fn mixing_spaces_with_different_eps_is_rejected() {
        let fs1 = FockSpace::new(1, 3, 0.5).unwrap();
        let fs2 = FockSpace::new(1, 3, 0.25).unwrap();
        let a1 = annihilation(&fs1, &[c(1.0, 0.0)]).unwrap();
        let a2 = annihilation(&fs2, &[c(1.0, 0.0)]).unwrap();
        assert!(a1.add(&a2).is_err());
    }

    #[test]
    fn state_roundtrips_through_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let fs = FockSpace::new(2, 16, 0.2).unwrap();
        let xi = coherent_state(
            &fs,
            &CoherentSpec { z: vec![c(0.2, 0.1), c(-0.1, 0.3)] },
            DEFAULT_TAIL_TOL,
        )
        .unwrap();
        let path = dir.path().join("state.bin");
        xi.save(&path).unwrap();
        let back = FockVector::load(&path).unwrap();
        assert_eq!(back.n_max, xi.n_max);
        assert_eq!(back.epsilon, xi.epsilon);
        assert_eq!(back.data.len(), xi.data.len());
        for (a, b) in back.data.iter().zip(&xi.data) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn matrix_free_application_matches_sparse_matrices() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let fs = FockSpace::new(3, 4, 0.17).unwrap();
        let f: Vec<C64> = (0..3).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let v: Vec<C64> = (0..fs.dim()).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let a = annihilation(&fs, &f).unwrap();
        let mut out = vec![C64::default(); fs.dim()];
        fs.apply_lowering(&f, &v, &mut out);
        let dense = a.apply(&v);
        for (x, y) in out.iter().zip(&dense) {
            assert!((x - y).norm() < 1e-14);
        }
        let adag = creation(&fs, &f).unwrap();
        let mut out = vec![C64::default(); fs.dim()];
        fs.apply_raising(&f, &v, &mut out);
        let dense = adag.apply(&v);
        for (x, y) in out.iter().zip(&dense) {
            assert!((x - y).norm() < 1e-14);
        }
    }
}
