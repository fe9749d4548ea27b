//! Homogeneous polynomial symbols on the classical field space C^{M'} and
//! their Wick quantization on the truncated Fock space.
//!
//! A (p, q)-symbol s(z) = <z^{(x) q}, ker z^{(x) p}> has holomorphic degree
//! p and antiholomorphic degree q; its quantization annihilates p quanta
//! and creates q, with the eps^{(p+q)/2} scale carried by the ladder
//! amplitudes.

use crate::error::{Error, Result};
use crate::fock::{FockOperator, FockSpace, FockVector};
use crate::linalg::{C64, SparseMatrix, Triplet};
use serde::{Deserialize, Serialize};

/// Finite-support probability measure on classical field space: weights
/// alpha_l >= 0 summing to one, complex amplitude vectors z_l.
#[derive(Clone, Debug)]
pub struct WignerMeasure {
    points: Vec<WignerPoint>,
}

#[derive(Clone, Debug)]
pub struct WignerPoint {
    pub weight: f64,
    pub amplitude: Vec<C64>,
}

impl WignerMeasure {
    pub fn new(points: Vec<WignerPoint>) -> Result<WignerMeasure> {
        if points.is_empty() {
            return Err(Error::InvalidInput("measure needs at least one point".into()));
        }
        let mode_count = points[0].amplitude.len();
        let mut total = 0.0;
        for p in &points {
            if p.weight < 0.0 {
                return Err(Error::InvalidInput(format!("negative weight {}", p.weight)));
            }
            if p.amplitude.len() != mode_count {
                return Err(Error::DimensionMismatch("measure points differ in mode count".into()));
            }
            total += p.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "weights sum to {total}, expected 1 within 1e-12"
            )));
        }
        Ok(WignerMeasure { points })
    }

    /// Point mass at z.
    pub fn dirac(z: Vec<C64>) -> WignerMeasure {
        WignerMeasure {
            points: vec![WignerPoint { weight: 1.0, amplitude: z }],
        }
    }

    /// Uniform measure on `count` equi-phase rotations of z0.
    pub fn phase_circle(z0: Vec<C64>, count: usize) -> Result<WignerMeasure> {
        if count == 0 {
            return Err(Error::InvalidInput("phase circle needs >= 1 point".into()));
        }
        let w = 1.0 / count as f64;
        let points = (0..count)
            .map(|j| {
                let phase = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / count as f64);
                WignerPoint {
                    weight: w,
                    amplitude: z0.iter().map(|z| z * phase).collect(),
                }
            })
            .collect();
        WignerMeasure::new(points)
    }

    pub fn points(&self) -> &[WignerPoint] {
        &self.points
    }

    pub fn mode_count(&self) -> usize {
        self.points[0].amplitude.len()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "points": self.points.iter().map(|p| serde_json::json!({
                "weight": p.weight,
                "re": p.amplitude.iter().map(|c| c.re).collect::<Vec<_>>(),
                "im": p.amplitude.iter().map(|c| c.im).collect::<Vec<_>>(),
            })).collect::<Vec<_>>()
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<WignerMeasure> {
        let raw: WignerMeasureJson =
            serde_json::from_value(v.clone()).map_err(|e| Error::Serde(e.to_string()))?;
        let points = raw
            .points
            .into_iter()
            .map(|p| {
                if p.re.len() != p.im.len() {
                    return Err(Error::Serde("re/im length mismatch".into()));
                }
                Ok(WignerPoint {
                    weight: p.weight,
                    amplitude: p.re.iter().zip(&p.im).map(|(&r, &i)| C64::new(r, i)).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        WignerMeasure::new(points)
    }
}

#[derive(Serialize, Deserialize)]
struct WignerMeasureJson {
    points: Vec<WignerPointJson>,
}

#[derive(Serialize, Deserialize)]
struct WignerPointJson {
    weight: f64,
    re: Vec<f64>,
    im: Vec<f64>,
}

/// Default cap on p + q; the field Hamiltonians only ever need degree two.
pub const DEFAULT_MAX_DEGREE: usize = 2;

/// (p, q)-homogeneous polynomial symbol with a dense kernel over modes.
/// The kernel is stored symmetrized in its p input slots and q output
/// slots; rows are q-multi-indices, columns p-multi-indices.
#[derive(Clone, Debug)]
pub struct PolySymbol {
    p: usize,
    q: usize,
    mode_count: usize,
    kernel: Vec<C64>,
    label: String,
}

fn pow(base: usize, exp: usize) -> usize {
    base.pow(exp as u32)
}

fn unflatten(mut idx: usize, modes: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut() {
        *slot = idx % modes;
        idx /= modes;
    }
    out
}

fn flatten(tuple: &[usize], modes: usize) -> usize {
    let mut idx = 0;
    for &t in tuple.iter().rev() {
        idx = idx * modes + t;
    }
    idx
}

fn permutations(len: usize) -> Vec<Vec<usize>> {
    if len == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..len).collect();
    heap_permute(&mut items, len, &mut out);
    out
}

fn heap_permute(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == 1 {
        out.push(items.clone());
        return;
    }
    for i in 0..k {
        heap_permute(items, k - 1, out);
        if k % 2 == 0 {
            items.swap(i, k - 1);
        } else {
            items.swap(0, k - 1);
        }
    }
}

impl PolySymbol {
    /// Build from a raw kernel of shape [modes^q rows x modes^p cols]
    /// (row-major), symmetrizing over the p and q slots.
    pub fn from_kernel(
        p: usize,
        q: usize,
        mode_count: usize,
        raw: &[C64],
        label: &str,
    ) -> Result<PolySymbol> {
        let rows = pow(mode_count, q);
        let cols = pow(mode_count, p);
        if raw.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "kernel has {} entries, expected {}",
                raw.len(),
                rows * cols
            )));
        }
        let perms_p = permutations(p);
        let perms_q = permutations(q);
        let mut kernel = vec![C64::default(); rows * cols];
        for r in 0..rows {
            let rt = unflatten(r, mode_count, q);
            for c in 0..cols {
                let ct = unflatten(c, mode_count, p);
                let mut acc = C64::default();
                for pq in &perms_q {
                    let rp: Vec<usize> = pq.iter().map(|&i| rt[i]).collect();
                    for pp in &perms_p {
                        let cp: Vec<usize> = pp.iter().map(|&i| ct[i]).collect();
                        acc += raw[flatten(&rp, mode_count) * cols + flatten(&cp, mode_count)];
                    }
                }
                kernel[r * cols + c] = acc / (perms_p.len() * perms_q.len()) as f64;
            }
        }
        Ok(PolySymbol {
            p,
            q,
            mode_count,
            kernel,
            label: label.to_string(),
        })
    }

    pub fn zero(p: usize, q: usize, mode_count: usize) -> PolySymbol {
        PolySymbol {
            p,
            q,
            mode_count,
            kernel: vec![C64::default(); pow(mode_count, p) * pow(mode_count, q)],
            label: "zero".into(),
        }
    }

    /// s(z) = <xi, z>, quantizing to a(xi).
    pub fn annihilation_symbol(xi: &[C64]) -> PolySymbol {
        let kernel: Vec<C64> = xi.iter().map(|c| c.conj()).collect();
        PolySymbol {
            p: 1,
            q: 0,
            mode_count: xi.len(),
            kernel,
            label: "a".into(),
        }
    }

    /// s(z) = <z, xi>, quantizing to a'(xi).
    pub fn creation_symbol(xi: &[C64]) -> PolySymbol {
        PolySymbol {
            p: 0,
            q: 1,
            mode_count: xi.len(),
            kernel: xi.to_vec(),
            label: "a_dag".into(),
        }
    }

    /// s(z) = <z, T z>, quantizing to the second quantization of T.
    /// T is row-major [modes x modes].
    pub fn operator_symbol(t: &[C64], mode_count: usize) -> Result<PolySymbol> {
        PolySymbol::from_kernel(1, 1, mode_count, t, "dGamma")
    }

    /// s(z) = ||z||^2.
    pub fn norm_squared_symbol(mode_count: usize) -> PolySymbol {
        let mut t = vec![C64::default(); mode_count * mode_count];
        for m in 0..mode_count {
            t[m * mode_count + m] = C64::new(1.0, 0.0);
        }
        PolySymbol::from_kernel(1, 1, mode_count, &t, "norm_sq").expect("square kernel")
    }

    /// s(z) = || sqrt(w) z ||^2 for a nonnegative weight vector w (the field
    /// energy symbol when w is the dispersion).
    pub fn weighted_norm_squared_symbol(weights: &[f64]) -> PolySymbol {
        let mc = weights.len();
        let mut t = vec![C64::default(); mc * mc];
        for m in 0..mc {
            t[m * mc + m] = C64::new(weights[m], 0.0);
        }
        PolySymbol::from_kernel(1, 1, mc, &t, "weighted_norm_sq").expect("square kernel")
    }

    /// Normal-ordered product symbol
    /// s(z) = prod_t <z, eta_t> prod_u <xi_u, z>, quantizing to
    /// a'(eta_1)...a'(eta_q) a(xi_1)...a(xi_p).
    pub fn product_symbol(etas: &[Vec<C64>], xis: &[Vec<C64>]) -> Result<PolySymbol> {
        let mode_count = etas
            .first()
            .or(xis.first())
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidInput("product symbol needs at least one factor".into()))?;
        let q = etas.len();
        let p = xis.len();
        let rows = pow(mode_count, q);
        let cols = pow(mode_count, p);
        let mut raw = vec![C64::default(); rows * cols];
        for r in 0..rows {
            let rt = unflatten(r, mode_count, q);
            let eta_term: C64 = rt
                .iter()
                .zip(etas)
                .map(|(&j, eta)| eta[j])
                .product();
            for c in 0..cols {
                let ct = unflatten(c, mode_count, p);
                let xi_term: C64 = ct.iter().zip(xis).map(|(&i, xi)| xi[i].conj()).product();
                raw[r * cols + c] = eta_term * xi_term;
            }
        }
        PolySymbol::from_kernel(p, q, mode_count, &raw, "product")
    }

    pub fn degrees(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kernel(&self) -> &[C64] {
        &self.kernel
    }

    /// Conjugate symbol: degrees swapped, kernel conjugate-transposed.
    /// Quantization of the result is the adjoint of the original's.
    pub fn adjoint(&self) -> PolySymbol {
        let rows = pow(self.mode_count, self.q);
        let cols = pow(self.mode_count, self.p);
        let mut kernel = vec![C64::default(); rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                kernel[c * rows + r] = self.kernel[r * cols + c].conj();
            }
        }
        PolySymbol {
            p: self.q,
            q: self.p,
            mode_count: self.mode_count,
            kernel,
            label: format!("{}_adj", self.label),
        }
    }

    pub fn scaled(&self, factor: C64) -> PolySymbol {
        let mut out = self.clone();
        for k in out.kernel.iter_mut() {
            *k *= factor;
        }
        out
    }

    pub fn add(&self, other: &PolySymbol) -> Result<PolySymbol> {
        if self.p != other.p || self.q != other.q || self.mode_count != other.mode_count {
            return Err(Error::DimensionMismatch("symbol shapes differ".into()));
        }
        let mut out = self.clone();
        for (k, o) in out.kernel.iter_mut().zip(&other.kernel) {
            *k += o;
        }
        Ok(out)
    }

    /// Max symmetry defect under random slot permutations; 0 after
    /// construction by [`PolySymbol::from_kernel`].
    pub fn symmetry_defect(&self) -> f64 {
        let rows = pow(self.mode_count, self.q);
        let cols = pow(self.mode_count, self.p);
        let mut worst = 0.0f64;
        for perm in permutations(self.q) {
            for r in 0..rows {
                let rt = unflatten(r, self.mode_count, self.q);
                let rp: Vec<usize> = perm.iter().map(|&i| rt[i]).collect();
                let r2 = flatten(&rp, self.mode_count);
                for c in 0..cols {
                    worst = worst.max((self.kernel[r * cols + c] - self.kernel[r2 * cols + c]).norm());
                }
            }
        }
        for perm in permutations(self.p) {
            for c in 0..cols {
                let ct = unflatten(c, self.mode_count, self.p);
                let cp: Vec<usize> = perm.iter().map(|&i| ct[i]).collect();
                let c2 = flatten(&cp, self.mode_count);
                for r in 0..rows {
                    worst = worst.max((self.kernel[r * cols + c] - self.kernel[r * cols + c2]).norm());
                }
            }
        }
        worst
    }

    /// s(z) = sum_{J, I} ker[J, I] prod conj(z_J) prod z_I.
    pub fn evaluate(&self, z: &[C64]) -> C64 {
        assert_eq!(z.len(), self.mode_count);
        let rows = pow(self.mode_count, self.q);
        let cols = pow(self.mode_count, self.p);
        let mut acc = C64::default();
        for r in 0..rows {
            let rt = unflatten(r, self.mode_count, self.q);
            let zbar: C64 = rt.iter().map(|&j| z[j].conj()).product();
            for c in 0..cols {
                let ct = unflatten(c, self.mode_count, self.p);
                let zfac: C64 = ct.iter().map(|&i| z[i]).product();
                acc += self.kernel[r * cols + c] * zbar * zfac;
            }
        }
        acc
    }
}

/// Wick quantization with the default degree cap.
pub fn quantize(fs: &FockSpace, sym: &PolySymbol) -> Result<FockOperator> {
    quantize_with_max_degree(fs, sym, DEFAULT_MAX_DEGREE)
}

/// Wick quantization sum_{J,I} ker[J,I] a'_J a_I on the truncated space.
/// Contributions over the truncation boundary are dropped and flagged.
pub fn quantize_with_max_degree(
    fs: &FockSpace,
    sym: &PolySymbol,
    max_degree: usize,
) -> Result<FockOperator> {
    let (p, q) = sym.degrees();
    if p + q > max_degree {
        return Err(Error::DegreeOverflow {
            degree: p + q,
            max: max_degree,
        });
    }
    if sym.mode_count() != fs.mode_count() {
        return Err(Error::DimensionMismatch(format!(
            "symbol over {} modes, space has {}",
            sym.mode_count(),
            fs.mode_count()
        )));
    }
    if sym.kernel().iter().any(|k| !k.is_finite()) {
        return Err(Error::InvalidInput("symbol kernel has non-finite entries".into()));
    }
    let modes = fs.mode_count();
    let eps = fs.epsilon();
    let cols = pow(modes, p);
    let rows = pow(modes, q);
    let mut triplets: Vec<Triplet> = Vec::new();
    let mut touched = false;

    for (src, occ) in fs.basis().iter().enumerate() {
        for ci in 0..cols {
            let lower_tuple = unflatten(ci, modes, p);
            // Apply the annihilators, tracking amplitudes.
            let mut n = occ.clone();
            let mut amp = 1.0f64;
            let mut dead = false;
            for &m in &lower_tuple {
                if n[m] == 0 {
                    dead = true;
                    break;
                }
                amp *= (eps * n[m] as f64).sqrt();
                n[m] -= 1;
            }
            if dead {
                continue;
            }
            let base_total: u32 = n.iter().sum();
            for ri in 0..rows {
                let kval = sym.kernel()[ri * cols + ci];
                if kval.norm_sqr() == 0.0 {
                    continue;
                }
                let raise_tuple = unflatten(ri, modes, q);
                if base_total as usize + q > fs.n_max() {
                    touched = true;
                    continue;
                }
                let mut n2 = n.clone();
                let mut amp2 = amp;
                for &m in &raise_tuple {
                    n2[m] += 1;
                    amp2 *= (eps * n2[m] as f64).sqrt();
                }
                let target = fs.basis_index(&n2).expect("within truncation");
                triplets.push(Triplet {
                    row: target,
                    col: src,
                    value: kval * amp2,
                });
            }
        }
    }
    let matrix = SparseMatrix::from_triplets(fs.dim(), fs.dim(), &triplets);
    let hermitian = p == q && sym.adjoint_equals(sym);
    Ok(FockOperator::from_parts(fs, matrix, hermitian, touched))
}

impl PolySymbol {
    fn adjoint_equals(&self, other: &PolySymbol) -> bool {
        let adj = self.adjoint();
        adj.p == other.p
            && adj.q == other.q
            && adj
                .kernel
                .iter()
                .zip(&other.kernel)
                .all(|(a, b)| (a - b).norm() < 1e-14)
    }
}

/// Classical expectation integral of the symbol against a finite-support
/// measure: sum_l alpha_l s(z_l).
pub fn classical_expectation(mu: &WignerMeasure, sym: &PolySymbol) -> C64 {
    mu.points()
        .iter()
        .map(|p| sym.evaluate(&p.amplitude) * p.weight)
        .sum()
}

/// Table of |<Psi_eps | s^Wick | Psi_eps> - mu(s)| per eps, sorted by
/// decreasing eps. States must be normalized to 1e-10.
pub fn semiclassical_gap(
    family: &[(std::sync::Arc<FockSpace>, FockVector)],
    mu: &WignerMeasure,
    sym: &PolySymbol,
) -> Result<Vec<(f64, f64)>> {
    let target = classical_expectation(mu, sym);
    let mut rows = Vec::with_capacity(family.len());
    for (fs, state) in family {
        state.check_normalized(1e-10)?;
        let op = quantize(fs, sym)?;
        let val = op.expectation(&state.data);
        rows.push((fs.epsilon(), (val - target).norm()));
    }
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{
        annihilation, coherent_state, creation, dgamma, number_state, CoherentSpec,
        DEFAULT_TAIL_TOL,
    };
    use crate::linalg::dot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn evaluate_norm_square_and_functionals() {
        let sym = PolySymbol::norm_squared_symbol(3);
        let z = vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)];
        assert!((sym.evaluate(&z) - c(2.0, 0.0)).norm() < 1e-14);

        let a_sym = PolySymbol::annihilation_symbol(&[c(1.0, 0.0), c(0.0, 0.0)]);
        let z = vec![c(3.0, 4.0), c(7.0, -2.0)];
        assert!((a_sym.evaluate(&z) - c(3.0, 4.0)).norm() < 1e-14);

        // (p, q) = (2, 0) from lambda = e_1: s(z) = z_1^2.
        let lam = vec![c(1.0, 0.0), c(0.0, 0.0)];
        let pair = PolySymbol::product_symbol(&[], &[lam.clone(), lam]).unwrap();
        let z = vec![c(1.0, 1.0), c(0.3, 0.0)];
        assert!((pair.evaluate(&z) - c(0.0, 2.0)).norm() < 1e-14);
    }

    #[test]
    fn homogeneity_of_random_symbols() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(p, q) in &[(1usize, 0usize), (0, 1), (1, 1), (2, 0), (0, 2)] {
            let mc = 2;
            let raw = random_vec(&mut rng, pow(mc, p) * pow(mc, q));
            let sym = PolySymbol::from_kernel(p, q, mc, &raw, "t").unwrap();
            let z = random_vec(&mut rng, mc);
            let t = c(0.7, -0.4);
            let tz: Vec<C64> = z.iter().map(|zz| t * zz).collect();
            let lhs = sym.evaluate(&tz);
            let rhs = t.powu(p as u32) * t.conj().powu(q as u32) * sym.evaluate(&z);
            assert!((lhs - rhs).norm() < 1e-12 * (1.0 + rhs.norm()));
            assert!(sym.symmetry_defect() < 1e-12);
        }
    }

    #[test]
    fn quantize_reproduces_ladder_correspondences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fs = FockSpace::new(3, 6, 0.2).unwrap();
        let xi = random_vec(&mut rng, 3);

        let qa = quantize(&fs, &PolySymbol::annihilation_symbol(&xi)).unwrap();
        let a = annihilation(&fs, &xi).unwrap();
        assert_eq!(qa.matrix.add(&a.matrix.scaled(c(-1.0, 0.0))).nnz(), 0);

        let qc = quantize(&fs, &PolySymbol::creation_symbol(&xi)).unwrap();
        let adag = creation(&fs, &xi).unwrap();
        assert_eq!(qc.matrix.add(&adag.matrix.scaled(c(-1.0, 0.0))).nnz(), 0);

        // Diagonal (1,1) kernel matches dgamma.
        let t = vec![
            c(1.5, 0.0), c(0.0, 0.0), c(0.0, 0.0),
            c(0.0, 0.0), c(0.4, 0.0), c(0.0, 0.0),
            c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0),
        ];
        let qd = quantize(&fs, &PolySymbol::operator_symbol(&t, 3).unwrap()).unwrap();
        let d = dgamma(&fs, &[1.5, 0.4, 2.0]).unwrap();
        let diff = qd.matrix.add(&d.matrix.scaled(c(-1.0, 0.0)));
        let worst = diff.to_triplets().iter().map(|t| t.value.norm()).fold(0.0, f64::max);
        assert!(worst < 1e-13);
    }

    #[test]
    fn norm_squared_quantizes_to_total_number() {
        let fs = FockSpace::new(1, 5, 0.1).unwrap();
        let q = quantize(&fs, &PolySymbol::norm_squared_symbol(1)).unwrap();
        let n3 = number_state(&fs, &[3]).unwrap();
        let e = dot(&n3.data, &q.apply(&n3.data));
        assert!((e - c(0.3, 0.0)).norm() < 1e-14);
        let zero = quantize(&fs, &PolySymbol::zero(1, 1, 1)).unwrap();
        assert_eq!(zero.matrix.nnz(), 0);
    }

    #[test]
    fn quantize_normal_ordered_product_matches_operator_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fs = FockSpace::new(3, 6, 0.15).unwrap();
        let eta = random_vec(&mut rng, 3);
        let xi = random_vec(&mut rng, 3);
        let sym = PolySymbol::product_symbol(&[eta.clone()], &[xi.clone()]).unwrap();
        let q = quantize(&fs, &sym).unwrap();
        let oracle = creation(&fs, &eta)
            .unwrap()
            .matrix
            .matmul(&annihilation(&fs, &xi).unwrap().matrix);
        let diff = q.matrix.add(&oracle.scaled(c(-1.0, 0.0)));
        let scalemax = oracle.to_triplets().iter().map(|t| t.value.norm()).fold(0.0, f64::max);
        let worst = diff.to_triplets().iter().map(|t| t.value.norm()).fold(0.0, f64::max);
        assert!(worst <= 1e-12 * scalemax.max(1.0));
    }

    #[test]
    fn quantize_is_linear_in_the_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fs = FockSpace::new(2, 4, 0.3).unwrap();
        let raw1 = random_vec(&mut rng, 4);
        let raw2 = random_vec(&mut rng, 4);
        let s1 = PolySymbol::from_kernel(1, 1, 2, &raw1, "s1").unwrap();
        let s2 = PolySymbol::from_kernel(1, 1, 2, &raw2, "s2").unwrap();
        let alpha = c(0.3, 0.9);
        let combo = s1.scaled(alpha).add(&s2).unwrap();
        let q_combo = quantize(&fs, &combo).unwrap();
        let q1 = quantize(&fs, &s1).unwrap();
        let q2 = quantize(&fs, &s2).unwrap();
        let lin = q1.matrix.scaled(alpha).add(&q2.matrix);
        let diff = q_combo.matrix.add(&lin.scaled(c(-1.0, 0.0)));
        let worst = diff.to_triplets().iter().map(|t| t.value.norm()).fold(0.0, f64::max);
        assert!(worst < 1e-12);
    }

    #[test]
    fn adjoint_covariance_of_quantization() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for &(p, q) in &[(1usize, 0usize), (2, 0), (1, 1)] {
            let fs = FockSpace::new(2, 5, 0.2).unwrap();
            let raw = random_vec(&mut rng, pow(2, p) * pow(2, q));
            let sym = PolySymbol::from_kernel(p, q, 2, &raw, "s").unwrap();
            let lhs = quantize(&fs, &sym).unwrap().matrix.adjoint();
            let rhs = quantize(&fs, &sym.adjoint()).unwrap().matrix;
            let diff = lhs.add(&rhs.scaled(c(-1.0, 0.0)));
            let worst = diff.to_triplets().iter().map(|t| t.value.norm()).fold(0.0, f64::max);
            assert!(worst < 1e-12);
        }
    }

    #[test]
    fn pair_annihilation_block_scales_as_eps_times_sqrt_n_n_minus_1() {
        let eps = 0.35;
        let fs = FockSpace::new(1, 8, eps).unwrap();
        let sym = PolySymbol::product_symbol(&[], &[vec![c(1.0, 0.0)], vec![c(1.0, 0.0)]]).unwrap();
        let q = quantize(&fs, &sym).unwrap();
        for n in 2..=8usize {
            let src = number_state(&fs, &[n as u32]).unwrap();
            let out = q.apply(&src.data);
            let target = number_state(&fs, &[(n - 2) as u32]).unwrap();
            let got = dot(&target.data, &out).re;
            let want = eps * ((n * (n - 1)) as f64).sqrt();
            assert!((got - want).abs() < 1e-12, "n = {n}: {got} vs {want}");
        }
    }

    #[test]
    fn degree_cap_is_enforced() {
        let fs = FockSpace::new(1, 4, 0.5).unwrap();
        let unit = vec![c(1.0, 0.0)];
        let sym = PolySymbol::product_symbol(&[unit.clone(), unit.clone()], &[unit]).unwrap();
        assert!(matches!(
            quantize(&fs, &sym),
            Err(Error::DegreeOverflow { degree: 3, max: 2 })
        ));
        assert!(quantize_with_max_degree(&fs, &sym, 4).is_ok());
    }

    #[test]
    fn classical_expectation_examples() {
        let sym = PolySymbol::annihilation_symbol(&[c(1.0, 0.0)]);
        let z = vec![c(0.4, -0.2)];
        let point = WignerMeasure::dirac(z.clone());
        assert!((classical_expectation(&point, &sym) - c(0.4, -0.2)).norm() < 1e-14);

        // Two-point symmetric measure kills odd symbols.
        let two = WignerMeasure::new(vec![
            WignerPoint { weight: 0.5, amplitude: z.clone() },
            WignerPoint { weight: 0.5, amplitude: z.iter().map(|c| -c).collect() },
        ])
        .unwrap();
        assert!(classical_expectation(&two, &sym).norm() < 1e-15);

        // 8-point phase circle of a unit vector: mu(||z||^2) = 1.
        let circle = WignerMeasure::phase_circle(vec![c(1.0, 0.0)], 8).unwrap();
        let nsq = PolySymbol::norm_squared_symbol(1);
        assert!((classical_expectation(&circle, &nsq) - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn coherent_normal_ordered_expectation_matches_symbol_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let eps = 0.2;
        let fs = FockSpace::new(2, 30, eps).unwrap();
        let z = vec![c(0.4, 0.1), c(-0.2, 0.3)];
        let xi_state = coherent_state(&fs, &CoherentSpec { z: z.clone() }, DEFAULT_TAIL_TOL).unwrap();
        for &(ne, nx) in &[(1usize, 1usize), (0, 2), (2, 0), (1, 0), (0, 1)] {
            let etas: Vec<Vec<C64>> = (0..ne).map(|_| random_vec(&mut rng, 2)).collect();
            let xis: Vec<Vec<C64>> = (0..nx).map(|_| random_vec(&mut rng, 2)).collect();
            let sym = PolySymbol::product_symbol(&etas, &xis).unwrap();
            let op = quantize(&fs, &sym).unwrap();
            let got = op.expectation(&xi_state.data);
            let want = sym.evaluate(&z);
            assert!(
                (got - want).norm() <= 1e-8 * (1.0 + want.norm()),
                "({ne},{nx}): {got} vs {want}"
            );
        }
    }

    #[test]
    fn semiclassical_gap_vanishes_for_matched_families() {
        // Coherent family with mu = delta_z and the (1,0) symbol.
        let z = vec![c(0.35, 0.15)];
        let mu = WignerMeasure::dirac(z.clone());
        let sym = PolySymbol::annihilation_symbol(&[c(0.8, -0.3)]);
        let mut family = Vec::new();
        for &eps in &[0.25, 0.125, 0.0625] {
            let n_max = crate::fock::poisson_required_n_max(
                z.iter().map(|c| c.norm_sqr()).sum::<f64>() / eps,
                1e-12,
            ) + 4;
            let fs = FockSpace::new(1, n_max, eps).unwrap();
            let st = coherent_state(&fs, &CoherentSpec { z: z.clone() }, DEFAULT_TAIL_TOL).unwrap();
            family.push((fs, st));
        }
        let gaps = semiclassical_gap(&family, &mu, &sym).unwrap();
        assert_eq!(gaps.len(), 3);
        assert!(gaps.windows(2).all(|w| w[0].0 > w[1].0));
        for (_, g) in &gaps {
            assert!(*g <= 1e-9);
        }

        // Number-state family with eps * n = 1 against the circle measure.
        let mut family = Vec::new();
        for &n in &[4usize, 8, 16] {
            let eps = 1.0 / n as f64;
            let fs = FockSpace::new(1, n + 2, eps).unwrap();
            let st = number_state(&fs, &[n as u32]).unwrap();
            family.push((fs, st));
        }
        let mu = WignerMeasure::phase_circle(vec![c(1.0, 0.0)], 16).unwrap();
        let nsq = PolySymbol::norm_squared_symbol(1);
        let gaps = semiclassical_gap(&family, &mu, &nsq).unwrap();
        for (_, g) in &gaps {
            assert!(*g <= 1e-12);
        }
    }

    #[test]
    fn measure_json_roundtrip() {
        let mu = WignerMeasure::new(vec![
            WignerPoint { weight: 0.25, amplitude: vec![c(1.0, -2.0)] },
            WignerPoint { weight: 0.75, amplitude: vec![c(0.5, 0.125)] },
        ])
        .unwrap();
        let back = WignerMeasure::from_json(&mu.to_json()).unwrap();
        assert_eq!(back.points().len(), 2);
        assert_eq!(back.points()[0].amplitude[0], c(1.0, -2.0));
        assert_eq!(back.points()[1].weight, 0.75);
    }

    #[test]
    fn invalid_measures_are_rejected() {
        assert!(WignerMeasure::new(vec![WignerPoint { weight: 0.5, amplitude: vec![c(1.0, 0.0)] }]).is_err());
        assert!(WignerMeasure::new(vec![
            WignerPoint { weight: 1.5, amplitude: vec![c(1.0, 0.0)] },
            WignerPoint { weight: -0.5, amplitude: vec![c(0.0, 0.0)] },
        ])
        .is_err());
    }
}
