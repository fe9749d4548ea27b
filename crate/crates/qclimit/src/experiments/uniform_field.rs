//! Uniform-magnetic-field synthesis: displaced-vacuum amplitudes built
//! from a mollified version of the target potential A = (1/2) x_perp
//! reproduce A in the limit of vanishing mollifier width, and the
//! synthesized effective operator reproduces the bulk level structure of
//! the exact magnetic box.

use super::report::{RateFit, RunMeta, UniformFieldReport, UniformFieldRow};
use super::{build_grid_from, linear_fit, ExperimentConfig};
use crate::error::{Error, Result};
use crate::field_model::{build_mode_set, DispersionRule, FormFactor, ModeSet};
use crate::fock::poisson_required_n_max;
use crate::grid::ParticleGrid;
use crate::linalg::C64;
use crate::measures::{effective_fields_eps, effective_fields_mu, EffectiveFields, Provenance};
use crate::schrodinger::{assemble_effective, lowest_eigs_seeded, Potential};
use crate::wick::WignerMeasure;
use std::sync::Arc;
use std::time::Instant;

/// Compactly supported radial mollifier profile exp(-1/(1 - r^2)) on
/// r < 1, normalized to unit integral over the plane.
pub struct Mollifier {
    norm_const: f64,
}

impl Mollifier {
    pub fn new() -> Mollifier {
        // 2 pi int_0^1 exp(-1/(1-r^2)) r dr by composite Simpson.
        let n = 4000;
        let h = 1.0 / n as f64;
        let f = |r: f64| bump(r) * r;
        let mut acc = 0.0;
        for i in 0..n {
            let a = i as f64 * h;
            acc += (f(a) + 4.0 * f(a + 0.5 * h) + f(a + h)) * h / 6.0;
        }
        Mollifier {
            norm_const: 1.0 / (2.0 * std::f64::consts::PI * acc),
        }
    }

    /// xi_w(k) = w^{-2} xi_1(|k|/w); unit integral for every width.
    pub fn value(&self, r: f64, width: f64) -> f64 {
        self.norm_const * bump(r / width) / (width * width)
    }

    /// Radial derivative xi_w'(r).
    pub fn derivative(&self, r: f64, width: f64) -> f64 {
        self.norm_const * bump_derivative(r / width) / (width * width * width)
    }

    /// Fourier transform int xi_w(k) e^{-i k.x} dk = F(w |x|), evaluated by
    /// polar quadrature (Simpson radially, trapezoid over the angle); real
    /// and radial by symmetry. This is the factor by which the synthesized
    /// potential multiplies (1/2) x_perp.
    pub fn fourier(&self, rho: f64) -> f64 {
        let n_r = 1200;
        let n_t = 128;
        let hr = 1.0 / n_r as f64;
        let radial = |r: f64| -> f64 {
            let mut ang = 0.0;
            for j in 0..n_t {
                let theta = 2.0 * std::f64::consts::PI * j as f64 / n_t as f64;
                ang += (r * rho * theta.cos()).cos();
            }
            bump(r) * r * ang * 2.0 * std::f64::consts::PI / n_t as f64
        };
        let mut acc = 0.0;
        for i in 0..n_r {
            let a = i as f64 * hr;
            acc += (radial(a) + 4.0 * radial(a + 0.5 * hr) + radial(a + hr)) * hr / 6.0;
        }
        self.norm_const * acc
    }
}

impl Default for Mollifier {
    fn default() -> Self {
        Self::new()
    }
}

fn bump(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

fn bump_derivative(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        let denom = 1.0 - r * r;
        (-1.0 / denom).exp() * (-2.0 * r / (denom * denom))
    }
}

/// Gaussian charge profile used for the synthesis: lambda_A(k) =
/// |k|^{-1/2} e^{-|k|^2/2} under the massless dispersion.
fn lambda_a(r: f64) -> f64 {
    (-r * r / 2.0).exp() / r.sqrt()
}

/// Displaced-vacuum amplitudes on the mode set that synthesize the
/// mollified uniform-field potential: z_{m, gamma} = sqrt(w_m)
/// (i/4) lambda_A(k_m)^{-1} xi_w'(|k_m|), using that the transverse
/// projection of the rotated mollifier gradient is xi_w' e_1.
pub fn synthesis_amplitudes(ms: &ModeSet, moll: &Mollifier, width: f64) -> Result<Vec<C64>> {
    let mut z = Vec::with_capacity(ms.fock_mode_count());
    for m in ms.modes() {
        let r = m.node.iter().map(|x| x * x).sum::<f64>().sqrt();
        let lam = lambda_a(r);
        if lam.abs() < 1e-300 {
            return Err(Error::InvalidInput(format!(
                "charge profile vanishes at |k| = {r}; cannot invert the coupling"
            )));
        }
        let amp = C64::new(0.0, 0.25) * (moll.derivative(r, width) / lam) * m.weight.sqrt();
        for _ in 0..ms.polarization_count() {
            z.push(amp);
        }
    }
    Ok(z)
}

/// Exact target fields A(x) = (1/2)(x - c)_perp on the grid.
fn exact_uniform_fields(grid: &ParticleGrid) -> EffectiveFields {
    let c = grid.box_len() / 2.0;
    let pts = grid.single_particle_points();
    let mut a = Vec::with_capacity(pts);
    let mut phi2 = Vec::with_capacity(pts);
    for g in 0..pts {
        let x = grid.point(g);
        let ax = -0.5 * (x[1] - c);
        let ay = 0.5 * (x[0] - c);
        a.push(vec![ax, ay]);
        phi2.push(ax * ax + ay * ay);
    }
    EffectiveFields {
        provenance: Provenance::FromMeasure,
        particles: vec![crate::measures::ParticleFieldSet {
            a,
            b: vec![vec![0.0; 2]; pts],
            w: vec![0.0; pts],
            phi2,
        }],
    }
}

/// Locate bulk levels as density clusters: the first eigenvalue with at
/// least `quorum` neighbors within `window` starts a level. Returns
/// (level0, level1).
pub fn detect_bulk_levels(eigs: &[f64], window: f64, quorum: usize) -> Option<(f64, f64)> {
    let level_at = |start: usize| -> bool {
        let v = eigs[start];
        eigs[start..].iter().take_while(|&&e| e <= v + window).count() >= quorum
    };
    let mut level0 = None;
    for i in 0..eigs.len() {
        if level_at(i) {
            level0 = Some(eigs[i]);
            break;
        }
    }
    let l0 = level0?;
    for i in 0..eigs.len() {
        if eigs[i] > l0 + window * 2.0 && level_at(i) {
            return Some((l0, eigs[i]));
        }
    }
    None
}

pub fn run_uniform_field(cfg: &ExperimentConfig) -> Result<UniformFieldReport> {
    let start = Instant::now();
    cfg.validate()?;
    if cfg.mode_set.d != 2 {
        return Err(Error::Config(
            "uniform-field synthesis runs in d = 2 (planar reduction)".into(),
        ));
    }
    let spec = cfg
        .uniform_field
        .clone()
        .ok_or_else(|| Error::Config("missing [uniform_field] section".into()))?;
    if spec.widths.is_empty() || !spec.widths.windows(2).all(|w| w[0] > w[1]) {
        return Err(Error::Config("uniform_field.widths must be strictly decreasing".into()));
    }
    let grid = build_grid_from(&cfg.grid, 2)?;
    if grid.spin_mult() != 1 || grid.n_particles() != 1 {
        return Err(Error::Config("uniform-field synthesis is spinless, single-particle".into()));
    }
    let center = vec![grid.box_len() / 2.0; 2];
    let potential = Potential::zero();
    let moll = Mollifier::new();

    // Exact operator and its level structure.
    let exact_fields = exact_uniform_fields(&grid);
    let h_exact = assemble_effective(&exact_fields, &potential, &grid)?;
    let k_exact = spec.level_eigs.max(spec.compare_eigs);
    let exact_rep = lowest_eigs_seeded(&h_exact, k_exact, cfg.solver.eig_tol, cfg.solver.seed)?;
    let (level0, level1) = detect_bulk_levels(&exact_rep.eigenvalues, 0.15, 3).ok_or_else(|| {
        Error::NoConvergence {
            iterations: k_exact,
            residual: f64::NAN,
        }
    })?;

    // Probe points: a ring at quarter-box offsets from the center.
    let probe_offsets: [[f64; 2]; 8] = {
        let q = grid.box_len() / 4.0;
        [
            [q, 0.0], [-q, 0.0], [0.0, q], [0.0, -q],
            [q, q], [q, -q], [-q, q], [-q, -q],
        ]
    };

    let mut rows = Vec::with_capacity(spec.widths.len());
    for &width in &spec.widths {
        // Momentum support lives inside |k| <= width; uniform radial nodes
        // are spectrally accurate for the smooth compactly supported
        // integrand.
        let radii: Vec<f64> = (1..=spec.radial_points)
            .map(|i| width * i as f64 / (spec.radial_points + 1) as f64)
            .collect();
        let ms = build_mode_set(2, &radii, spec.angular_resolution, &DispersionRule::Massless)?;
        let ff = FormFactor::gaussian_charge(1, 1.0, center.clone());
        let z = synthesis_amplitudes(&ms, &moll, width)?;
        let mu = WignerMeasure::dirac(z.clone());
        let fields = effective_fields_mu(&mu, &ff, &ms, &grid)?;

        // Field errors at the probes against both targets.
        let mut mollified_error = 0.0f64;
        let mut target_error = 0.0f64;
        for off in &probe_offsets {
            let x = [center[0] + off[0], center[1] + off[1]];
            let g = nearest_grid_index(&grid, &x);
            let xg = grid.point(g);
            let a = &fields.particles[0].a[g];
            let rel = [xg[0] - center[0], xg[1] - center[1]];
            let target = [-0.5 * rel[1], 0.5 * rel[0]];
            let damp = moll.fourier(width * (rel[0] * rel[0] + rel[1] * rel[1]).sqrt());
            let mollified = [target[0] * damp, target[1] * damp];
            mollified_error = mollified_error.max(
                ((a[0] - mollified[0]).powi(2) + (a[1] - mollified[1]).powi(2)).sqrt(),
            );
            target_error =
                target_error.max(((a[0] - target[0]).powi(2) + (a[1] - target[1]).powi(2)).sqrt());
        }

        let h_synth = assemble_effective(&fields, &potential, &grid)?;
        let rep = lowest_eigs_seeded(&h_synth, spec.compare_eigs, cfg.solver.eig_tol, cfg.solver.seed)?;
        let eig_relative_gap = rep
            .eigenvalues
            .iter()
            .zip(&exact_rep.eigenvalues)
            .map(|(s, e)| (s - e).abs() / e.abs().max(1e-300))
            .fold(0.0f64, f64::max);

        let c_eps: f64 = z
            .iter()
            .zip(ms.omega_flat())
            .map(|(zm, w)| w * zm.norm_sqr())
            .sum();

        rows.push(UniformFieldRow {
            width,
            c_eps,
            mollified_error,
            target_error,
            synth_eigenvalues: rep.eigenvalues,
            eig_relative_gap,
        });
    }

    // Quantum-route validation on a reduced mode set: the state-route A
    // must match the measure-route A for the same amplitudes.
    let quantum_route_error = {
        let width = spec.widths[0];
        let radii: Vec<f64> = (1..=2).map(|i| width * i as f64 / 3.0).collect();
        let ms_small = build_mode_set(2, &radii, 4, &DispersionRule::Massless)?;
        let ff = FormFactor::gaussian_charge(1, 1.0, center.clone());
        let mut z = synthesis_amplitudes(&ms_small, &moll, width)?;
        // Scale down so a modest truncation carries the state; exactness
        // of the coherent fields is amplitude-independent.
        let norm_sq: f64 = z.iter().map(|c| c.norm_sqr()).sum();
        let eps = 0.25;
        if norm_sq > 1.5 * eps {
            let s = (1.5 * eps / norm_sq).sqrt();
            z.iter_mut().for_each(|c| *c *= s);
        }
        let mean = z.iter().map(|c| c.norm_sqr()).sum::<f64>() / eps;
        let n_max = poisson_required_n_max(mean, cfg.schedule.tail_tol) + 6;
        let fs = crate::fock::FockSpace::new(ms_small.fock_mode_count(), n_max, eps)?;
        let state = crate::fock::coherent_state(
            &fs,
            &crate::fock::CoherentSpec { z: z.clone() },
            cfg.schedule.tail_tol,
        )?;
        let small_grid = ParticleGrid::new(2, 1, 1, grid.box_len(), 8)?;
        let from_state = effective_fields_eps(&state, &fs, &ff, &ms_small, &small_grid)?;
        let from_measure = effective_fields_mu(&WignerMeasure::dirac(z), &ff, &ms_small, &small_grid)?;
        let mut worst = 0.0f64;
        for g in 0..small_grid.single_particle_points() {
            for i in 0..2 {
                worst = worst.max(
                    (from_state.particles[0].a[g][i] - from_measure.particles[0].a[g][i]).abs(),
                );
            }
        }
        worst
    };

    let c_eps_growing = rows.last().map(|r| r.c_eps).unwrap_or(0.0)
        > rows.first().map(|r| r.c_eps).unwrap_or(0.0);

    let mollifier_rate = if rows.len() >= 3 && rows.iter().all(|r| r.target_error > 0.0) {
        let xs: Vec<f64> = rows.iter().map(|r| r.width.ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.target_error.ln()).collect();
        let (slope, _, r2) = linear_fit(&xs, &ys);
        Some(RateFit { slope, r_squared: r2 })
    } else {
        None
    };

    Ok(UniformFieldReport {
        rows,
        exact_eigenvalues: exact_rep.eigenvalues,
        level0,
        level1,
        quantum_route_error,
        c_eps_growing,
        mollifier_rate,
        meta: RunMeta {
            experiment: "uniform-field".into(),
            config_hash: cfg.content_hash(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    })
}

fn nearest_grid_index(grid: &Arc<ParticleGrid>, x: &[f64]) -> usize {
    let h = grid.spacing();
    let n = grid.points_per_axis();
    let axes: Vec<usize> = x
        .iter()
        .map(|&c| {
            let i = (c / h).round() as isize - 1;
            i.clamp(0, n as isize - 1) as usize
        })
        .collect();
    grid.flat_index(&axes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mollifier_is_normalized_and_contracts_to_one() {
        let m = Mollifier::new();
        // FT at 0 equals the integral = 1.
        assert!((m.fourier(0.0) - 1.0).abs() < 1e-6);
        // FT decays with rho.
        assert!(m.fourier(2.0) < m.fourier(0.5));
        // Direct polar quadrature of xi_w over the plane at width 0.3.
        let width = 0.3;
        let n = 2000;
        let h = width / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            let r = (i as f64 + 0.5) * h;
            total += m.value(r, width) * r * h * 2.0 * std::f64::consts::PI;
        }
        assert!((total - 1.0).abs() < 1e-6, "integral {total}");
    }

    #[test]
    fn synthesized_field_matches_mollified_target_in_quadrature() {
        // Direct check of the quadrature identity
        // A(x) = (1/2) x_perp FT(xi_w)(x) away from the grid machinery.
        let moll = Mollifier::new();
        let width = 0.5;
        let radii: Vec<f64> = (1..=60).map(|i| width * i as f64 / 61.0).collect();
        let ms = build_mode_set(2, &radii, 32, &DispersionRule::Massless).unwrap();
        let z = synthesis_amplitudes(&ms, &moll, width).unwrap();
        // Evaluate A at x via the measure formula with the plane-wave
        // Gaussian coupling centered at the origin.
        let x = [1.3, -0.7];
        let mut a = [0.0f64; 2];
        for (flat, m) in ms.modes().iter().enumerate() {
            let zm = z[flat]; // single polarization in d = 2
            let r = (m.node[0] * m.node[0] + m.node[1] * m.node[1]).sqrt();
            let phase = m.node[0] * x[0] + m.node[1] * x[1];
            let lam = C64::from_polar(lambda_a(r), -phase) * m.weight.sqrt();
            let w = 2.0 * (zm.conj() * lam).re;
            a[0] += w * m.polarizations[0][0];
            a[1] += w * m.polarizations[0][1];
        }
        let damp = moll.fourier(width * (x[0] * x[0] + x[1] * x[1]).sqrt());
        let target = [-0.5 * x[1] * damp, 0.5 * x[0] * damp];
        let err = ((a[0] - target[0]).powi(2) + (a[1] - target[1]).powi(2)).sqrt();
        assert!(err < 2e-5, "err = {err:.3e}, a = {a:?}, target = {target:?}");
    }

    #[test]
    fn bulk_level_detection_finds_density_clusters() {
        let eigs = vec![
            1.0, 1.001, 1.005, 1.011, 1.021, 1.033, 1.048, 1.07, 1.1, 1.13, 1.18, 1.25,
            1.34, 1.45, 1.59, 1.75, 1.95, 2.18, 2.44, 2.73, 2.994, 2.994, 2.996, 3.001,
            3.01, 3.02, 3.05,
        ];
        let (l0, l1) = detect_bulk_levels(&eigs, 0.15, 3).unwrap();
        assert!((l0 - 1.0).abs() < 1e-12);
        assert!((l1 - 2.994).abs() < 1e-12);
    }
}
