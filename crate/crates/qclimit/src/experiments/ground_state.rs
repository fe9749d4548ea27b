//! Ground-state-energy convergence: the lowest eigenvalue of the coupled
//! operator (left side) against the infimum over classical field points of
//! the effective ground energy plus the field energy (right side).
//!
//! The right side scans single points z over a complex box and refines by
//! compass search; because the energy form is affine in the measure, the
//! infimum over finite mixtures is attained at a single point, which the
//! sampled 2-point mixtures confirm.

use super::report::{GroundStateReport, GroundStateRow, RunMeta, ScanSample};
use super::{
    build_form_factor_from, build_grid_from, build_mode_set_from, build_potential_from,
    ExperimentConfig,
};
use crate::error::{Error, Result};
use crate::field_model::{FormFactor, ModeSet};
use crate::fock::{poisson_required_n_max, FockSpace};
use crate::grid::ParticleGrid;
use crate::linalg::{lowest_eigenpairs, C64, EigenOptions};
use crate::measures::{effective_fields_mu, field_energy};
use crate::schrodinger::{
    assemble_effective, assemble_full_pf, lowest_eigs_seeded, PfBudget, Potential,
};
use crate::wick::{WignerMeasure, WignerPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::Arc;
use std::time::Instant;

struct RightSide<'a> {
    ms: &'a ModeSet,
    ff: &'a FormFactor,
    grid: &'a Arc<ParticleGrid>,
    potential: &'a Potential,
    eig_tol: f64,
    seed: u64,
}

impl RightSide<'_> {
    /// lambda_0(effective(mu)) + c(mu) for a finite-support measure.
    fn value_measure(&self, mu: &WignerMeasure) -> Result<f64> {
        let fields = effective_fields_mu(mu, self.ff, self.ms, self.grid)?;
        let op = assemble_effective(&fields, self.potential, self.grid)?;
        let rep = lowest_eigs_seeded(&op, 1, self.eig_tol, self.seed)?;
        Ok(rep.eigenvalues[0] + field_energy(mu, self.ms)?)
    }

    /// Point measure at the single-mode amplitude z.
    fn value_point(&self, z: C64) -> Result<f64> {
        self.value_measure(&WignerMeasure::dirac(vec![z]))
    }
}

pub fn run_ground_state(cfg: &ExperimentConfig) -> Result<GroundStateReport> {
    let start = Instant::now();
    cfg.validate()?;
    let spec = cfg.ground_state.clone().unwrap_or_default();
    let ms = build_mode_set_from(&cfg.mode_set)?;
    if ms.fock_mode_count() != 1 {
        return Err(Error::Config(
            "the ground-state driver scans a single field mode; use one node in d = 2".into(),
        ));
    }
    let grid = build_grid_from(&cfg.grid, cfg.mode_set.d)?;
    if grid.n_particles() != 1 || grid.spin_mult() != 1 {
        return Err(Error::Config("ground-state driver needs N = 1, s = 1".into()));
    }
    let ff = build_form_factor_from(&cfg.form_factor, &grid)?;
    let potential = build_potential_from(&cfg.potential)?;
    let right = RightSide {
        ms: &ms,
        ff: &ff,
        grid: &grid,
        potential: &potential,
        eig_tol: cfg.solver.eig_tol,
        seed: cfg.solver.seed,
    };

    // Coarse scan over the complex box [-Z, Z]^2.
    let z_half = spec.scan_halfwidth;
    let npts = spec.scan_points.max(3);
    let coords: Vec<f64> = (0..npts)
        .map(|i| -z_half + 2.0 * z_half * i as f64 / (npts - 1) as f64)
        .collect();
    let scan_grid: Vec<(f64, f64)> = coords
        .iter()
        .flat_map(|&re| coords.iter().map(move |&im| (re, im)))
        .collect();
    let scan_results: Vec<f64> = scan_grid
        .par_iter()
        .map(|&(re, im)| right.value_point(C64::new(re, im)))
        .collect::<Result<Vec<_>>>()?;
    let scan_values: Vec<ScanSample> = scan_grid
        .iter()
        .zip(&scan_results)
        .map(|(&(re, im), &value)| ScanSample { z_re: re, z_im: im, value })
        .collect();

    let (mut best_idx, mut best_val) = (0usize, f64::INFINITY);
    for (i, &v) in scan_results.iter().enumerate() {
        if v < best_val {
            best_val = v;
            best_idx = i;
        }
    }
    let (mut zr, mut zi) = scan_grid[best_idx];
    let boundary_cell = |re: f64, im: f64| -> bool {
        let edge = z_half - 2.0 * z_half / (npts - 1) as f64;
        re.abs() > edge + 1e-12 || im.abs() > edge + 1e-12
    };
    let minimizer_on_boundary = boundary_cell(zr, zi);

    // Compass-search refinement, deterministic.
    let mut step = 2.0 * z_half / (npts - 1) as f64;
    let mut best = best_val;
    for _ in 0..spec.refine_iters {
        let mut improved = false;
        for (dr, di) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let cand = (zr + dr, zi + di);
            let v = right.value_point(C64::new(cand.0, cand.1))?;
            if v < best - 1e-14 {
                best = v;
                zr = cand.0;
                zi = cand.1;
                improved = true;
                break;
            }
        }
        if !improved {
            step *= 0.5;
            if step < 1e-6 {
                break;
            }
        }
    }
    let right_value = best;

    // 2-point mixtures must never beat the best single point: the energy
    // form is affine in the measure.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.solver.seed.wrapping_add(1));
    let mut best_mixture = f64::INFINITY;
    for _ in 0..spec.mixture_samples {
        let alpha: f64 = rng.gen_range(0.05..0.95);
        let z1 = C64::new(rng.gen_range(-z_half..z_half), rng.gen_range(-z_half..z_half));
        let z2 = C64::new(rng.gen_range(-z_half..z_half), rng.gen_range(-z_half..z_half));
        let mu = WignerMeasure::new(vec![
            WignerPoint { weight: alpha, amplitude: vec![z1] },
            WignerPoint { weight: 1.0 - alpha, amplitude: vec![z2] },
        ])?;
        best_mixture = best_mixture.min(right.value_measure(&mu)?);
    }

    // Spectral gap of the effective operator at the minimizer, used to
    // scale the convergence tolerance.
    let gap_at_min = {
        let mu = WignerMeasure::dirac(vec![C64::new(zr, zi)]);
        let fields = effective_fields_mu(&mu, &ff, &ms, &grid)?;
        let op = assemble_effective(&fields, &potential, &grid)?;
        let rep = lowest_eigs_seeded(&op, 2, cfg.solver.eig_tol, cfg.solver.seed)?;
        rep.eigenvalues[1] - rep.eigenvalues[0]
    };

    // Left side: coupled ground energy per eps, with the truncation grown
    // until the ground vector's top-sector mass is negligible.
    let rows: Vec<GroundStateRow> = cfg
        .schedule
        .epsilons
        .par_iter()
        .map(|&eps| -> Result<GroundStateRow> {
            let base_mean = ((zr * zr + zi * zi).sqrt() + 0.3).powi(2) / eps;
            let mut n_max = poisson_required_n_max(base_mean, cfg.schedule.tail_tol) + 8;
            let mut attempt = 0;
            loop {
                let fs = FockSpace::new(1, n_max, eps)?;
                let pf = assemble_full_pf(&fs, &ff, &ms, &potential, &grid, &PfBudget::default())?;
                let opts = EigenOptions {
                    tol: cfg.solver.eig_tol,
                    seed: cfg.solver.seed,
                    ..EigenOptions::default()
                };
                let eig = lowest_eigenpairs(&pf, 1, &opts)?;
                let left = eig.values[0];
                // Mass of the ground vector in the top Fock sector.
                let nf = fs.dim();
                let top_mass: f64 = eig.vectors[0]
                    .chunks_exact(nf)
                    .map(|fiber| fiber[nf - 1].norm_sqr())
                    .sum();
                if top_mass < 1e-8 || attempt >= 3 {
                    return Ok(GroundStateRow {
                        epsilon: eps,
                        left,
                        right: right_value,
                        gap: (left - right_value).abs(),
                        n_max,
                        top_sector_mass: top_mass,
                    });
                }
                n_max = (n_max * 3) / 2 + 4;
                attempt += 1;
            }
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(GroundStateReport {
        rows,
        minimizer_re: zr,
        minimizer_im: zi,
        minimizer_on_boundary,
        effective_spectral_gap: gap_at_min,
        best_mixture_value: best_mixture,
        scan_values,
        meta: RunMeta {
            experiment: "ground-state".into(),
            config_hash: cfg.content_hash(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    })
}
