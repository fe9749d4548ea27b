//! Discretized photon momentum space: quadrature nodes with weights,
//! dispersion values, transverse polarization frames, and the particle
//! form factors that couple to them.
//!
//! Momentum space is R^d (d = 2 or 3) sampled by a product rule of radial
//! shells times uniform angles. All Fock-side vectors are stored in
//! sqrt(weight)-scaled coordinates, so the plain complex dot product on
//! mode amplitudes reproduces the quadrature inner product on L^2.

use crate::error::{Error, Result};
use crate::linalg::C64;
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Photon dispersion omega(|k|).
#[derive(Clone, Debug)]
pub enum DispersionRule {
    /// omega = |k|
    Massless,
    /// omega = sqrt(|k|^2 + mass^2)
    Massive { mass: f64 },
    /// Piecewise-linear table of (|k|, omega) rows, sorted by |k|.
    CustomTable(Vec<(f64, f64)>),
}

impl DispersionRule {
    pub fn evaluate(&self, k_norm: f64) -> Result<f64> {
        let omega = match self {
            DispersionRule::Massless => k_norm,
            DispersionRule::Massive { mass } => {
                if *mass < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "massive dispersion needs mass >= 0, got {mass}"
                    )));
                }
                (k_norm * k_norm + mass * mass).sqrt()
            }
            DispersionRule::CustomTable(rows) => {
                if rows.len() < 2 {
                    return Err(Error::InvalidInput(
                        "dispersion table needs at least two rows".into(),
                    ));
                }
                interp_linear(rows, k_norm)
            }
        };
        if !(omega > 0.0) {
            return Err(Error::InvalidInput(format!(
                "dispersion must be strictly positive, got omega({k_norm}) = {omega}"
            )));
        }
        Ok(omega)
    }

    /// Load a two-column CSV of (|k|, omega) rows. Lines starting with '#'
    /// and an optional non-numeric header line are skipped.
    pub fn table_from_csv(path: &std::path::Path) -> Result<DispersionRule> {
        let text = std::fs::read_to_string(path)?;
        let mut rows = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let (Some(a), Some(b)) = (parts.next(), parts.next()) else {
                return Err(Error::Config(format!("bad dispersion row: {line}")));
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(k), Ok(w)) => rows.push((k, w)),
                _ if rows.is_empty() => continue, // header
                _ => return Err(Error::Config(format!("bad dispersion row: {line}"))),
            }
        }
        rows.sort_by(|x, y| x.0.total_cmp(&y.0));
        if rows.len() < 2 {
            return Err(Error::Config("dispersion table needs >= 2 rows".into()));
        }
        Ok(DispersionRule::CustomTable(rows))
    }
}

fn interp_linear(rows: &[(f64, f64)], x: f64) -> f64 {
    if x <= rows[0].0 {
        return rows[0].1;
    }
    if x >= rows[rows.len() - 1].0 {
        return rows[rows.len() - 1].1;
    }
    let j = rows.partition_point(|r| r.0 < x);
    let (x0, y0) = rows[j - 1];
    let (x1, y1) = rows[j];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// One momentum node with its quadrature weight, dispersion value and
/// orthonormal transverse polarization frame.
#[derive(Clone, Debug)]
pub struct Mode {
    pub node: Vec<f64>,
    pub weight: f64,
    pub omega: f64,
    /// d-1 unit vectors, each orthogonal to the node.
    pub polarizations: Vec<Vec<f64>>,
}

/// Discretized momentum space.
#[derive(Clone, Debug)]
pub struct ModeSet {
    d: usize,
    modes: Vec<Mode>,
    hash: String,
}

impl ModeSet {
    /// Manual constructor; validates weights, dispersion and frames.
    pub fn from_modes(d: usize, modes: Vec<Mode>) -> Result<ModeSet> {
        if d != 2 && d != 3 {
            return Err(Error::InvalidInput(format!("dimension must be 2 or 3, got {d}")));
        }
        for m in &modes {
            if m.node.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "node has {} components in d = {d}",
                    m.node.len()
                )));
            }
            if !(m.weight > 0.0) {
                return Err(Error::InvalidInput(format!("weight {} not positive", m.weight)));
            }
            if !(m.omega > 0.0) {
                return Err(Error::InvalidInput(format!("omega {} not positive", m.omega)));
            }
            if m.polarizations.len() != d - 1 {
                return Err(Error::DimensionMismatch(format!(
                    "{} polarizations in d = {d}",
                    m.polarizations.len()
                )));
            }
            let khat = normalize(&m.node);
            for (g, e) in m.polarizations.iter().enumerate() {
                if (norm2(e) - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!("polarization {g} not unit")));
                }
                if dot_r(&khat, e).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!("polarization {g} not transverse")));
                }
                for e2 in &m.polarizations[..g] {
                    if dot_r(e, e2).abs() > 1e-12 {
                        return Err(Error::InvalidInput("polarization frame not orthogonal".into()));
                    }
                }
            }
        }
        let hash = hash_modes(d, &modes);
        Ok(ModeSet { d, modes, hash })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn polarization_count(&self) -> usize {
        self.d - 1
    }

    /// Number of Fock modes M' = M (d-1); flattened index is m*(d-1) + gamma.
    pub fn fock_mode_count(&self) -> usize {
        self.modes.len() * (self.d - 1)
    }

    /// Dispersion value per flattened (mode, polarization) index.
    pub fn omega_flat(&self) -> Vec<f64> {
        let p = self.polarization_count();
        let mut out = Vec::with_capacity(self.fock_mode_count());
        for m in &self.modes {
            for _ in 0..p {
                out.push(m.omega);
            }
        }
        out
    }

    pub fn total_weight(&self) -> f64 {
        self.modes.iter().map(|m| m.weight).sum()
    }

    /// Content hash used to key caches and serialized-state sidecars.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Completeness defect: max over nodes of
    /// | sum_gamma e e^T + khat khat^T - Id |_inf.
    pub fn completeness_defect(&self) -> f64 {
        let d = self.d;
        let mut worst = 0.0f64;
        for m in &self.modes {
            let khat = normalize(&m.node);
            for i in 0..d {
                for j in 0..d {
                    let mut s = khat[i] * khat[j];
                    for e in &m.polarizations {
                        s += e[i] * e[j];
                    }
                    let target = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((s - target).abs());
                }
            }
        }
        worst
    }
}

fn hash_modes(d: usize, modes: &[Mode]) -> String {
    let mut h = Sha256::new();
    h.update((d as u64).to_le_bytes());
    for m in modes {
        for x in &m.node {
            h.update(x.to_le_bytes());
        }
        h.update(m.weight.to_le_bytes());
        h.update(m.omega.to_le_bytes());
        for e in &m.polarizations {
            for x in e {
                h.update(x.to_le_bytes());
            }
        }
    }
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let n = norm2(v);
    v.iter().map(|x| x / n).collect()
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot_r(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cross(a: &[f64], b: &[f64]) -> Vec<f64> {
    vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Transverse frame at a node. In d = 2 this is the counterclockwise
/// perpendicular; in d = 3, e1 = khat x zhat normalized (xhat at the pole)
/// and e2 = khat x e1.
pub fn polarization_frame(node: &[f64]) -> Vec<Vec<f64>> {
    match node.len() {
        2 => {
            let n = norm2(node);
            vec![vec![-node[1] / n, node[0] / n]]
        }
        3 => {
            let khat = normalize(node);
            let kxz = cross(&khat, &[0.0, 0.0, 1.0]);
            let e1 = if norm2(&kxz) > 1e-12 {
                normalize(&kxz)
            } else {
                vec![1.0, 0.0, 0.0]
            };
            let e2 = cross(&khat, &e1);
            vec![e1, e2]
        }
        _ => unreachable!("dimension checked at construction"),
    }
}

/// Product quadrature over momentum space: radial shells (trapezoidal
/// weights) times uniform angles. Node ordering is lexicographic in
/// (radius, angle), which makes downstream hashing deterministic.
pub fn build_mode_set(
    d: usize,
    radial_nodes: &[f64],
    angular_resolution: usize,
    rule: &DispersionRule,
) -> Result<ModeSet> {
    if d != 2 && d != 3 {
        return Err(Error::InvalidInput(format!("dimension must be 2 or 3, got {d}")));
    }
    if radial_nodes.is_empty() {
        return Err(Error::InvalidInput("no radial nodes supplied".into()));
    }
    if angular_resolution == 0 {
        return Err(Error::InvalidInput("angular_resolution must be >= 1".into()));
    }
    let mut radii = radial_nodes.to_vec();
    radii.sort_by(f64::total_cmp);
    for &r in &radii {
        if !(r > 0.0) {
            return Err(Error::InfraredNode(r));
        }
    }
    let radial_weights = trapezoid_weights(&radii);

    let mut modes = Vec::new();
    for (ri, &r) in radii.iter().enumerate() {
        let omega = rule.evaluate(r)?;
        match d {
            2 => {
                let dtheta = 2.0 * std::f64::consts::PI / angular_resolution as f64;
                for a in 0..angular_resolution {
                    let theta = dtheta * a as f64;
                    let node = vec![r * theta.cos(), r * theta.sin()];
                    let polarizations = polarization_frame(&node);
                    modes.push(Mode {
                        node,
                        weight: radial_weights[ri] * r * dtheta,
                        omega,
                        polarizations,
                    });
                }
            }
            3 => {
                // Midpoint rule in u = cos(theta), uniform azimuth.
                let nu = angular_resolution;
                let du = 2.0 / nu as f64;
                let dphi = 2.0 * std::f64::consts::PI / angular_resolution as f64;
                for b in 0..nu {
                    let u = -1.0 + du * (b as f64 + 0.5);
                    let s = (1.0 - u * u).sqrt();
                    for a in 0..angular_resolution {
                        let phi = dphi * a as f64;
                        let node = vec![r * s * phi.cos(), r * s * phi.sin(), r * u];
                        let polarizations = polarization_frame(&node);
                        modes.push(Mode {
                            node,
                            weight: radial_weights[ri] * r * r * du * dphi,
                            omega,
                            polarizations,
                        });
                    }
                }
            }
            _ => unreachable!(),
        }
    }
    ModeSet::from_modes(d, modes)
}

fn trapezoid_weights(radii: &[f64]) -> Vec<f64> {
    let n = radii.len();
    if n == 1 {
        return vec![1.0];
    }
    let mut w = vec![0.0; n];
    w[0] = (radii[1] - radii[0]) / 2.0;
    w[n - 1] = (radii[n - 1] - radii[n - 2]) / 2.0;
    for i in 1..n - 1 {
        w[i] = (radii[i + 1] - radii[i - 1]) / 2.0;
    }
    w
}

/// Rectangular particle domain [0, L]^d.
#[derive(Clone, Copy, Debug)]
pub struct BoxDomain {
    pub d: usize,
    pub side: f64,
}

impl BoxDomain {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.d && x.iter().all(|&c| (0.0..=self.side).contains(&c))
    }
}

type CouplingClosure = Arc<dyn Fn(&[f64], &Mode) -> C64 + Send + Sync>;

/// Scalar coupling evaluator lambda_j(x; k) (or the spin analogue b_j).
#[derive(Clone)]
pub enum CouplingFn {
    /// rho(k) * omega^{-1/2} * exp(-i k . (x - center))
    PlaneWave {
        profile: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
        center: Vec<f64>,
    },
    /// rho(k) * omega^{-1/2}, independent of x.
    Static {
        profile: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    },
    /// Arbitrary evaluator of (x, mode).
    Custom(CouplingClosure),
}

impl CouplingFn {
    pub fn evaluate(&self, x: &[f64], mode: &Mode) -> C64 {
        match self {
            CouplingFn::PlaneWave { profile, center } => {
                let rho = profile(&mode.node) / mode.omega.sqrt();
                let phase: f64 = mode
                    .node
                    .iter()
                    .zip(x.iter().zip(center.iter().chain(std::iter::repeat(&0.0))))
                    .map(|(k, (xi, ci))| k * (xi - ci))
                    .sum();
                C64::from_polar(rho, -phase)
            }
            CouplingFn::Static { profile } => C64::new(profile(&mode.node) / mode.omega.sqrt(), 0.0),
            CouplingFn::Custom(f) => f(x, mode),
        }
    }

    pub fn is_plane_wave(&self) -> bool {
        matches!(self, CouplingFn::PlaneWave { .. })
    }
}

/// Per-particle form factors: the vector-potential coupling lambda_j and
/// the optional spin coupling b_j.
#[derive(Clone)]
pub struct FormFactor {
    lambdas: Vec<CouplingFn>,
    spin_couplings: Vec<Option<CouplingFn>>,
    domain: Option<BoxDomain>,
    cache: Arc<Mutex<HashMap<CacheKey, Arc<Vec<C64>>>>>,
}

type CacheKey = (usize, Vec<u64>, u64);

impl FormFactor {
    pub fn new(lambdas: Vec<CouplingFn>, spin_couplings: Vec<Option<CouplingFn>>) -> FormFactor {
        assert_eq!(lambdas.len(), spin_couplings.len());
        FormFactor {
            lambdas,
            spin_couplings,
            domain: None,
            cache: Arc::new(Mutex::new(HashMap::new())),
        }
    }

    /// Gaussian charge profile rho(k) = amplitude * exp(-|k|^2 / 2) with the
    /// plane-wave phase about `center`.
    pub fn gaussian_charge(n_particles: usize, amplitude: f64, center: Vec<f64>) -> FormFactor {
        let profile = Arc::new(move |k: &[f64]| {
            let k2: f64 = k.iter().map(|x| x * x).sum();
            amplitude * (-k2 / 2.0).exp()
        });
        let lam = CouplingFn::PlaneWave { profile, center };
        FormFactor::new(vec![lam; n_particles], vec![None; n_particles])
    }

    /// x-independent coupling lambda = amplitude * omega^{-1/2}.
    pub fn constant_profile(n_particles: usize, amplitude: f64) -> FormFactor {
        let profile = Arc::new(move |_: &[f64]| amplitude);
        let lam = CouplingFn::Static { profile };
        FormFactor::new(vec![lam; n_particles], vec![None; n_particles])
    }

    pub fn with_domain(mut self, domain: BoxDomain) -> FormFactor {
        self.domain = Some(domain);
        self
    }

    pub fn with_spin_couplings(mut self, b: Vec<Option<CouplingFn>>) -> FormFactor {
        assert_eq!(b.len(), self.lambdas.len());
        self.spin_couplings = b;
        self
    }

    pub fn n_particles(&self) -> usize {
        self.lambdas.len()
    }

    pub fn domain(&self) -> Option<&BoxDomain> {
        self.domain.as_ref()
    }

    pub fn lambda(&self, j: usize) -> &CouplingFn {
        &self.lambdas[j]
    }

    pub fn spin_coupling(&self, j: usize) -> Option<&CouplingFn> {
        self.spin_couplings[j].as_ref()
    }

    pub fn has_spin_coupling(&self) -> bool {
        self.spin_couplings.iter().any(Option::is_some)
    }

    /// Plane-wave phase convention flag: true when every particle coupling
    /// carries the exp(-i k . x) factor.
    pub fn plane_wave_convention(&self) -> bool {
        self.lambdas.iter().all(CouplingFn::is_plane_wave)
    }

    /// Discrete analogue of the quadratic-form condition
    /// lambda in D[omega + omega^{-1}]: sum_m w_m (omega + 1/omega) |lambda|^2.
    pub fn sobolev_weight(&self, ms: &ModeSet, j: usize, x: &[f64]) -> f64 {
        ms.modes()
            .iter()
            .map(|m| {
                let v = self.lambdas[j].evaluate(x, m).norm_sqr();
                m.weight * (m.omega + 1.0 / m.omega) * v
            })
            .sum()
    }

    fn cached_amplitudes(&self, ms: &ModeSet, j: usize, x: &[f64]) -> Arc<Vec<C64>> {
        let key: CacheKey = (
            j,
            x.iter().map(|v| v.to_bits()).collect(),
            u64::from_str_radix(&ms.hash()[..16], 16).unwrap_or(0),
        );
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return hit.clone();
        }
        let p = ms.polarization_count();
        let mut amps = Vec::with_capacity(ms.fock_mode_count());
        for m in ms.modes() {
            let a = self.lambdas[j].evaluate(x, m) * m.weight.sqrt();
            for _ in 0..p {
                amps.push(a);
            }
        }
        let arc = Arc::new(amps);
        self.cache.lock().unwrap().insert(key, arc.clone());
        arc
    }
}

/// One-photon coupling amplitudes sqrt(w_m) lambda_j(x; k_m) per flattened
/// (mode, polarization) index, paired with the polarization directions.
/// This is the vector that feeds the ladder operators in the Segal field.
#[derive(Clone, Debug)]
pub struct CouplingVector {
    pub d: usize,
    /// Length M' = M (d-1).
    pub amplitudes: Vec<C64>,
    /// Direction e_gamma(k_m) per flattened index.
    pub directions: Vec<Vec<f64>>,
}

impl CouplingVector {
    /// Cartesian component i of the coupling: F_i[mg] = amp[mg] * e[mg][i].
    pub fn component(&self, i: usize) -> Vec<C64> {
        self.amplitudes
            .iter()
            .zip(&self.directions)
            .map(|(a, e)| a * e[i])
            .collect()
    }

    /// sum over (m, gamma) of |amp|^2 = (d-1) sum_m w_m |lambda(x; k_m)|^2.
    pub fn norm_sq(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// Coupling vector of particle j at point x; rejects x outside the domain
/// when one is attached to the form factor.
pub fn coupling_vector(ms: &ModeSet, ff: &FormFactor, j: usize, x: &[f64]) -> Result<CouplingVector> {
    if j >= ff.n_particles() {
        return Err(Error::InvalidInput(format!("particle index {j} out of range")));
    }
    if let Some(domain) = ff.domain() {
        if !domain.contains(x) {
            return Err(Error::OutsideDomain(x.to_vec()));
        }
    }
    let amplitudes = ff.cached_amplitudes(ms, j, x).as_ref().clone();
    let mut directions = Vec::with_capacity(ms.fock_mode_count());
    for m in ms.modes() {
        for e in &m.polarizations {
            directions.push(e.clone());
        }
    }
    Ok(CouplingVector {
        d: ms.d(),
        amplitudes,
        directions,
    })
}

/// Spin-coupling analogue of [`coupling_vector`]; None when particle j has
/// no b coupling.
pub fn spin_coupling_vector(
    ms: &ModeSet,
    ff: &FormFactor,
    j: usize,
    x: &[f64],
) -> Result<Option<CouplingVector>> {
    let Some(b) = ff.spin_coupling(j) else {
        return Ok(None);
    };
    if let Some(domain) = ff.domain() {
        if !domain.contains(x) {
            return Err(Error::OutsideDomain(x.to_vec()));
        }
    }
    let mut amplitudes = Vec::with_capacity(ms.fock_mode_count());
    let mut directions = Vec::with_capacity(ms.fock_mode_count());
    for m in ms.modes() {
        let a = b.evaluate(x, m) * m.weight.sqrt();
        for e in &m.polarizations {
            amplitudes.push(a);
            directions.push(e.clone());
        }
    }
    Ok(Some(CouplingVector {
        d: ms.d(),
        amplitudes,
        directions,
    }))
}

/// Max over sample points, particles, modes and polarizations of the
/// Coulomb-gauge defect |grad_x lambda_j(x; k) . e_gamma(k)|, with central
/// finite differences (step 1e-5).
pub fn gauge_residual(ms: &ModeSet, ff: &FormFactor, x_samples: &[Vec<f64>]) -> f64 {
    let h = 1e-5;
    let d = ms.d();
    let mut worst = 0.0f64;
    for x in x_samples {
        for j in 0..ff.n_particles() {
            for mode in ms.modes() {
                let mut grad = vec![C64::default(); d];
                for (i, g) in grad.iter_mut().enumerate() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    *g = (ff.lambda(j).evaluate(&xp, mode) - ff.lambda(j).evaluate(&xm, mode))
                        / (2.0 * h);
                }
                for e in &mode.polarizations {
                    let proj: C64 = grad
                        .iter()
                        .zip(e)
                        .map(|(gc, ec)| gc * ec)
                        .sum();
                    worst = worst.max(proj.norm());
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn massless() -> DispersionRule {
        DispersionRule::Massless
    }

    #[test]
    fn single_node_d2_frame_is_unit_and_transverse() {
        let ms = ModeSet::from_modes(
            2,
            vec![Mode {
                node: vec![0.0, 1.0],
                weight: 1.0,
                omega: 1.0,
                polarizations: polarization_frame(&[0.0, 1.0]),
            }],
        )
        .unwrap();
        let m = &ms.modes()[0];
        assert!((m.omega - 1.0).abs() < 1e-15);
        let e = &m.polarizations[0];
        assert!((norm2(e) - 1.0).abs() < 1e-14);
        assert!(dot_r(&m.node, e).abs() < 1e-14);
        // transversality forces +-(-1, 0)
        assert!(e[1].abs() < 1e-14 && (e[0].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn d3_frame_is_orthonormal_and_perp_to_z_axis_node() {
        let node = [0.0, 0.0, 2.0];
        let frame = polarization_frame(&node);
        assert_eq!(frame.len(), 2);
        assert!(dot_r(&frame[0], &frame[1]).abs() < 1e-14);
        for e in &frame {
            assert!((norm2(e) - 1.0).abs() < 1e-14);
            assert!(dot_r(e, &node).abs() < 1e-14);
        }
        let rule = massless();
        assert!((rule.evaluate(2.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn annulus_quadrature_total_matches_direct_integration() {
        // Two radial trapezoid nodes on [0.5, 1.0] x 4 angles -> 8 modes.
        let ms = build_mode_set(2, &[0.5, 1.0], 4, &massless()).unwrap();
        assert_eq!(ms.len(), 8);
        // Trapezoid integrates r exactly: 2 pi * (0.25 * 1.5) = 0.75 pi.
        let expected = 0.75 * std::f64::consts::PI;
        assert!(
            (ms.total_weight() - expected).abs() < 1e-10,
            "total {} vs {}",
            ms.total_weight(),
            expected
        );
    }

    #[test]
    fn refining_radial_nodes_reduces_quadrature_error_on_gaussian() {
        // integral of exp(-|k|^2) over the annulus 0.2 <= |k| <= 2.5.
        let exact = std::f64::consts::PI * ((-0.04f64).exp() - (-6.25f64).exp());
        let mut errors = Vec::new();
        for n in [8usize, 16, 32, 64] {
            let radii: Vec<f64> = (0..n)
                .map(|i| 0.2 + (2.5 - 0.2) * i as f64 / (n - 1) as f64)
                .collect();
            let ms = build_mode_set(2, &radii, 6, &massless()).unwrap();
            let total: f64 = ms
                .modes()
                .iter()
                .map(|m| m.weight * (-dot_r(&m.node, &m.node)).exp())
                .sum();
            errors.push((total - exact).abs());
        }
        for w in errors.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "errors not decreasing: {errors:?}");
        }
        // Angular refinement cannot hurt for radial integrands.
        let e6 = {
            let radii: Vec<f64> = (0..32).map(|i| 0.2 + 2.3 * i as f64 / 31.0).collect();
            let ms = build_mode_set(2, &radii, 6, &massless()).unwrap();
            let total: f64 = ms.modes().iter().map(|m| m.weight * (-dot_r(&m.node, &m.node)).exp()).sum();
            (total - exact).abs()
        };
        let e12 = {
            let radii: Vec<f64> = (0..32).map(|i| 0.2 + 2.3 * i as f64 / 31.0).collect();
            let ms = build_mode_set(2, &radii, 12, &massless()).unwrap();
            let total: f64 = ms.modes().iter().map(|m| m.weight * (-dot_r(&m.node, &m.node)).exp()).sum();
            (total - exact).abs()
        };
        assert!(e12 <= e6 + 1e-12);
    }

    #[test]
    fn zero_radius_node_is_rejected() {
        assert!(matches!(
            build_mode_set(2, &[0.0, 1.0], 4, &massless()),
            Err(Error::InfraredNode(_))
        ));
        assert!(matches!(
            build_mode_set(3, &[1.0], 4, &DispersionRule::Massive { mass: -1.0 }),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn polarization_completeness_holds_on_product_sets() {
        for d in [2usize, 3] {
            let ms = build_mode_set(d, &[0.5, 1.0, 1.5], 5, &massless()).unwrap();
            assert!(ms.completeness_defect() < 1e-12, "d = {d}");
        }
    }

    #[test]
    fn gauge_residual_vanishes_for_plane_wave_gaussian() {
        let ms = build_mode_set(2, &[0.7, 1.3], 6, &massless()).unwrap();
        let ff = FormFactor::gaussian_charge(1, 1.0, vec![0.0, 0.0]);
        let samples = vec![vec![0.3, 0.4], vec![0.9, 0.1]];
        assert!(gauge_residual(&ms, &ff, &samples) <= 1e-8);
    }

    #[test]
    fn gauge_residual_is_zero_for_static_couplings() {
        let ms = build_mode_set(2, &[1.0], 4, &massless()).unwrap();
        let ff = FormFactor::constant_profile(1, 2.0);
        assert_eq!(gauge_residual(&ms, &ff, &[vec![0.2, 0.8]]), 0.0);
    }

    #[test]
    fn gauge_violating_coupling_reports_unit_residual() {
        let ms = build_mode_set(2, &[1.0], 4, &massless()).unwrap();
        // lambda(x; k) = x . e_1(k): directional derivative along e_1 is 1.
        let eval: CouplingClosure = Arc::new(|x: &[f64], mode: &Mode| {
            let e = &mode.polarizations[0];
            C64::new(x[0] * e[0] + x[1] * e[1], 0.0)
        });
        let ff = FormFactor::new(vec![CouplingFn::Custom(eval)], vec![None]);
        let r = gauge_residual(&ms, &ff, &[vec![0.5, 0.5], vec![0.1, 0.9]]);
        assert!((r - 1.0).abs() < 1e-9, "residual {r}");
    }

    #[test]
    fn gauge_residual_invariant_under_frame_rotation_d3() {
        let ms = build_mode_set(3, &[0.8, 1.2], 4, &massless()).unwrap();
        let ff = FormFactor::gaussian_charge(1, 1.0, vec![0.0, 0.0, 0.0]);
        let samples = vec![vec![0.3, 0.4, 0.5]];
        let base = gauge_residual(&ms, &ff, &samples);
        // Rotate every frame by 0.4 rad about khat.
        let rotated: Vec<Mode> = ms
            .modes()
            .iter()
            .map(|m| {
                let (c, s) = (0.4f64.cos(), 0.4f64.sin());
                let e1: Vec<f64> = (0..3)
                    .map(|i| c * m.polarizations[0][i] + s * m.polarizations[1][i])
                    .collect();
                let e2: Vec<f64> = (0..3)
                    .map(|i| -s * m.polarizations[0][i] + c * m.polarizations[1][i])
                    .collect();
                Mode {
                    node: m.node.clone(),
                    weight: m.weight,
                    omega: m.omega,
                    polarizations: vec![e1, e2],
                }
            })
            .collect();
        let ms_rot = ModeSet::from_modes(3, rotated).unwrap();
        let rot = gauge_residual(&ms_rot, &ff, &samples);
        assert!((base - rot).abs() <= 1e-10 * (1.0 + base.abs()));
    }

    #[test]
    fn coupling_vector_matches_hand_values() {
        // Zero coupling -> all-zero amplitudes.
        let ms = build_mode_set(2, &[1.0], 4, &massless()).unwrap();
        let ff0 = FormFactor::constant_profile(1, 0.0);
        let cv = coupling_vector(&ms, &ff0, 0, &[0.5, 0.5]).unwrap();
        assert!(cv.amplitudes.iter().all(|a| a.norm() == 0.0));

        // Single mode, w = 1, lambda = 1: one coefficient 1 along e_1.
        let ms1 = ModeSet::from_modes(
            2,
            vec![Mode {
                node: vec![0.0, 1.0],
                weight: 1.0,
                omega: 1.0,
                polarizations: polarization_frame(&[0.0, 1.0]),
            }],
        )
        .unwrap();
        let eval: CouplingClosure = Arc::new(|_: &[f64], _: &Mode| C64::new(1.0, 0.0));
        let ff1 = FormFactor::new(vec![CouplingFn::Custom(eval)], vec![None]);
        let cv = coupling_vector(&ms1, &ff1, 0, &[0.5, 0.5]).unwrap();
        assert_eq!(cv.amplitudes.len(), 1);
        assert!((cv.amplitudes[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(cv.directions[0], ms1.modes()[0].polarizations[0]);

        // Gaussian profile at |k| = 1: amplitude sqrt(w) * e^{-1/2}.
        let ff2 = FormFactor::gaussian_charge(1, 1.0, vec![0.0, 0.0]);
        let cv = coupling_vector(&ms, &ff2, 0, &[0.0, 0.0]).unwrap();
        let w = ms.modes()[0].weight;
        let expected = w.sqrt() * (-0.5f64).exp();
        assert!((cv.amplitudes[0].norm() - expected).abs() < 1e-12);
        assert!(((-0.5f64).exp() - 0.606_530_659_712_633_4).abs() < 1e-15);
    }

    #[test]
    fn domain_enforcement_rejects_outside_points() {
        let ms = build_mode_set(2, &[1.0], 2, &massless()).unwrap();
        let ff = FormFactor::gaussian_charge(1, 1.0, vec![0.0, 0.0])
            .with_domain(BoxDomain { d: 2, side: 1.0 });
        assert!(coupling_vector(&ms, &ff, 0, &[0.5, 0.5]).is_ok());
        assert!(matches!(
            coupling_vector(&ms, &ff, 0, &[1.5, 0.5]),
            Err(Error::OutsideDomain(_))
        ));
    }

    #[test]
    fn sobolev_weight_is_finite_for_gaussian_profile() {
        let ms = build_mode_set(2, &[0.4, 0.9, 1.7], 8, &massless()).unwrap();
        let ff = FormFactor::gaussian_charge(1, 1.0, vec![0.0, 0.0]);
        let s = ff.sobolev_weight(&ms, 0, &[0.25, 0.75]);
        assert!(s.is_finite() && s > 0.0);
    }

    #[test]
    fn dispersion_table_interpolates() {
        let rule = DispersionRule::CustomTable(vec![(0.5, 1.0), (1.5, 3.0)]);
        assert!((rule.evaluate(1.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((rule.evaluate(0.1).unwrap() - 1.0).abs() < 1e-14);
    }
}
