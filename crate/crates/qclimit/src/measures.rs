//! Classical effective fields induced by finite-support measures on field
//! space and by quantum field states: the mediated vector potential A, the
//! Zeeman field B, the variance electric potential W, and the field-energy
//! functional c(mu).

use crate::error::{Error, Result};
use crate::field_model::{coupling_vector, spin_coupling_vector, FormFactor, ModeSet};
use crate::fock::{FockSpace, FockVector};
use crate::grid::ParticleGrid;
use crate::linalg::{dot, C64};
use crate::wick::WignerMeasure;
use std::io::Write;

/// Where a set of effective fields came from.
#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    FromMeasure,
    FromState { epsilon: f64 },
}

/// Per-particle fields sampled on the single-particle grid points.
#[derive(Clone, Debug)]
pub struct ParticleFieldSet {
    /// Vector potential A_j(x), one d-vector per grid point.
    pub a: Vec<Vec<f64>>,
    /// Zeeman field B_j(x).
    pub b: Vec<Vec<f64>>,
    /// Variance electric potential W_j(x) >= 0.
    pub w: Vec<f64>,
    /// Second moment <phi^2>_j(x); equals W + |A|^2 by construction for
    /// measure provenance, and the quantum expectation for state provenance.
    pub phi2: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct EffectiveFields {
    pub provenance: Provenance,
    pub particles: Vec<ParticleFieldSet>,
}

impl EffectiveFields {
    pub fn min_w(&self) -> f64 {
        self.particles
            .iter()
            .flat_map(|p| p.w.iter())
            .fold(f64::INFINITY, |acc, &w| acc.min(w))
    }

    /// CSV export: coordinates, A components, B components, W, phi2,
    /// one block of columns per particle.
    pub fn to_csv(&self, grid: &ParticleGrid) -> String {
        let d = grid.d();
        let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
        for j in 0..self.particles.len() {
            for i in 0..d {
                header.push(format!("A{j}_{i}"));
            }
            for i in 0..d {
                header.push(format!("B{j}_{i}"));
            }
            header.push(format!("W{j}"));
            header.push(format!("phi2_{j}"));
        }
        let mut out = header.join(",") + "\n";
        for g in 0..grid.single_particle_points() {
            let mut row: Vec<String> = grid.point(g).iter().map(|x| format!("{x:.17e}")).collect();
            for p in &self.particles {
                row.extend(p.a[g].iter().map(|v| format!("{v:.17e}")));
                row.extend(p.b[g].iter().map(|v| format!("{v:.17e}")));
                row.push(format!("{:.17e}", p.w[g]));
                row.push(format!("{:.17e}", p.phi2[g]));
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, grid: &ParticleGrid, path: &std::path::Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv(grid).as_bytes())?;
        Ok(())
    }
}

/// Bare vector potential of a single classical point z at the N-particle
/// configuration X: block j is 2 Re sum_{m,gamma} conj(z)_{m gamma}
/// sqrt(w_m) lambda_j(x_j; k_m) e_gamma(k_m).
pub fn bare_potential(
    z: &[C64],
    ff: &FormFactor,
    ms: &ModeSet,
    configuration: &[f64],
) -> Result<Vec<f64>> {
    let d = ms.d();
    let n = ff.n_particles();
    if configuration.len() != d * n {
        return Err(Error::DimensionMismatch(format!(
            "configuration has {} coordinates, expected {}",
            configuration.len(),
            d * n
        )));
    }
    let mut out = vec![0.0; d * n];
    for j in 0..n {
        let x = &configuration[j * d..(j + 1) * d];
        let cv = coupling_vector(ms, ff, j, x)?;
        let block = bare_block(z, &cv.amplitudes, &cv.directions, d);
        out[j * d..(j + 1) * d].copy_from_slice(&block);
    }
    Ok(out)
}

fn bare_block(z: &[C64], amplitudes: &[C64], directions: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut block = vec![0.0; d];
    for ((zc, amp), dir) in z.iter().zip(amplitudes).zip(directions) {
        let w = 2.0 * (zc.conj() * amp).re;
        for i in 0..d {
            block[i] += w * dir[i];
        }
    }
    block
}

/// Classical field energy c(mu) = sum_l alpha_l sum_{m,gamma} omega_m
/// |z_{l, m gamma}|^2.
pub fn field_energy(mu: &WignerMeasure, ms: &ModeSet) -> Result<f64> {
    let omega = ms.omega_flat();
    if mu.mode_count() != omega.len() {
        return Err(Error::DimensionMismatch(format!(
            "measure over {} modes, mode set has {}",
            mu.mode_count(),
            omega.len()
        )));
    }
    Ok(mu
        .points()
        .iter()
        .map(|p| {
            p.weight
                * p.amplitude
                    .iter()
                    .zip(&omega)
                    .map(|(z, &w)| w * z.norm_sqr())
                    .sum::<f64>()
        })
        .sum())
}

/// Effective fields of a finite-support measure, sampled on the grid.
///
/// A_j(x) is the measure average of the bare potential; phi2_j its second
/// moment; W_j = phi2_j - |A_j|^2 the per-particle variance. B_j uses the
/// spin couplings and is zero when they are absent.
pub fn effective_fields_mu(
    mu: &WignerMeasure,
    ff: &FormFactor,
    ms: &ModeSet,
    grid: &ParticleGrid,
) -> Result<EffectiveFields> {
    let d = ms.d();
    if grid.d() != d {
        return Err(Error::DimensionMismatch("grid and mode set disagree on d".into()));
    }
    if mu.mode_count() != ms.fock_mode_count() {
        return Err(Error::DimensionMismatch("measure mode count".into()));
    }
    let points = grid.single_particle_points();
    let mut particles = Vec::with_capacity(ff.n_particles());
    for j in 0..ff.n_particles() {
        let mut set = ParticleFieldSet {
            a: vec![vec![0.0; d]; points],
            b: vec![vec![0.0; d]; points],
            w: vec![0.0; points],
            phi2: vec![0.0; points],
        };
        for g in 0..points {
            let x = grid.point(g);
            let cv = coupling_vector(ms, ff, j, &x)?;
            let bcv = spin_coupling_vector(ms, ff, j, &x)?;
            let mut mean = vec![0.0; d];
            let mut second = 0.0;
            let mut mean_b = vec![0.0; d];
            for pt in mu.points() {
                let bare = bare_block(&pt.amplitude, &cv.amplitudes, &cv.directions, d);
                let bare_sq: f64 = bare.iter().map(|v| v * v).sum();
                second += pt.weight * bare_sq;
                for i in 0..d {
                    mean[i] += pt.weight * bare[i];
                }
                if let Some(bcv) = &bcv {
                    let bare_b = bare_block(&pt.amplitude, &bcv.amplitudes, &bcv.directions, d);
                    for i in 0..d {
                        mean_b[i] += pt.weight * bare_b[i];
                    }
                }
            }
            let mean_sq: f64 = mean.iter().map(|v| v * v).sum();
            set.a[g] = mean;
            set.b[g] = mean_b;
            set.phi2[g] = second;
            set.w[g] = second - mean_sq;
        }
        particles.push(set);
    }
    Ok(EffectiveFields {
        provenance: Provenance::FromMeasure,
        particles,
    })
}

/// Effective fields of a normalized Fock state: A and B are field-operator
/// expectations, phi2 the quantum second moment, and the W slot stores
/// phi2 - |A|^2 (nonnegative by Cauchy-Schwarz).
pub fn effective_fields_eps(
    state: &FockVector,
    fs: &FockSpace,
    ff: &FormFactor,
    ms: &ModeSet,
    grid: &ParticleGrid,
) -> Result<EffectiveFields> {
    state.check_normalized(1e-10)?;
    let d = ms.d();
    if grid.d() != d {
        return Err(Error::DimensionMismatch("grid and mode set disagree on d".into()));
    }
    if state.data.len() != fs.dim() {
        return Err(Error::DimensionMismatch("state length vs Fock dimension".into()));
    }
    let points = grid.single_particle_points();
    let mut particles = Vec::with_capacity(ff.n_particles());
    let mut work = vec![C64::default(); fs.dim()];
    for j in 0..ff.n_particles() {
        let mut set = ParticleFieldSet {
            a: vec![vec![0.0; d]; points],
            b: vec![vec![0.0; d]; points],
            w: vec![0.0; points],
            phi2: vec![0.0; points],
        };
        for g in 0..points {
            let x = grid.point(g);
            let cv = coupling_vector(ms, ff, j, &x)?;
            let mut mean = vec![0.0; d];
            let mut second = 0.0;
            for i in 0..d {
                let f_i = cv.component(i);
                work.iter_mut().for_each(|c| *c = C64::default());
                fs.apply_field(&f_i, &state.data, &mut work);
                mean[i] = dot(&state.data, &work).re;
                second += work.iter().map(|c| c.norm_sqr()).sum::<f64>();
            }
            let mean_sq: f64 = mean.iter().map(|v| v * v).sum();
            set.a[g] = mean;
            set.phi2[g] = second;
            set.w[g] = second - mean_sq;
            if let Some(bcv) = spin_coupling_vector(ms, ff, j, &x)? {
                for i in 0..d {
                    let f_i = bcv.component(i);
                    work.iter_mut().for_each(|c| *c = C64::default());
                    fs.apply_field(&f_i, &state.data, &mut work);
                    set.b[g][i] = dot(&state.data, &work).re;
                }
            }
        }
        particles.push(set);
    }
    Ok(EffectiveFields {
        provenance: Provenance::FromState { epsilon: fs.epsilon() },
        particles,
    })
}
