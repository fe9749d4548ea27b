//! Reproducible experiment drivers: eps-convergence of the partial-trace
//! operator to its effective limit, synthesis of a uniform magnetic field
//! from displaced-vacuum states, and ground-state-energy convergence.
//! Each driver consumes an [`ExperimentConfig`] and emits machine-readable
//! reports (CSV + JSON + meta).

mod config;
mod convergence;
mod ground_state;
mod report;
mod uniform_field;

pub use config::{
    DispersionSpec, ExperimentConfig, FormFactorSpec, GridSpec, GroundStateSpec, ModeSetSpec,
    OutputSpec, PotentialSpec, ScheduleSpec, SolverSpec, StateFamilySpec, UniformFieldSpec,
};
pub use convergence::{run_convergence, uniform_lower_bound_constant};
pub use ground_state::run_ground_state;
pub use report::{
    emit_report, ConvergenceReport, ConvergenceRow, GroundStateReport, GroundStateRow, RateFit,
    Report, ReportFormat, RunMeta, UniformFieldReport, UniformFieldRow,
};
pub use uniform_field::run_uniform_field;

use crate::error::{Error, Result};
use crate::field_model::{DispersionRule, FormFactor, ModeSet};
use crate::fock::{coherent_state, number_state, CoherentSpec, FockSpace, FockVector};
use crate::grid::ParticleGrid;
use crate::linalg::{norm, C64};
use crate::schrodinger::Potential;
use crate::wick::{WignerMeasure, WignerPoint};
use std::sync::Arc;

/// Simple least squares of y on x; used for log-log rate fits.
/// Returns (slope, intercept, r_squared).
pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, intercept, r2)
}

pub(crate) fn build_mode_set_from(spec: &ModeSetSpec) -> Result<ModeSet> {
    let rule: DispersionRule = spec.dispersion.to_rule()?;
    crate::field_model::build_mode_set(spec.d, &spec.radial_nodes, spec.angular_resolution, &rule)
}

pub(crate) fn build_grid_from(spec: &GridSpec, d: usize) -> Result<Arc<ParticleGrid>> {
    ParticleGrid::new(d, spec.particles, spec.spin, spec.box_len, spec.divisions)
}

pub(crate) fn build_form_factor_from(
    spec: &FormFactorSpec,
    grid: &ParticleGrid,
) -> Result<FormFactor> {
    let center = spec
        .center
        .clone()
        .unwrap_or_else(|| vec![grid.box_len() / 2.0; grid.d()]);
    let ff = match spec.preset.as_str() {
        "gaussian-charge" => FormFactor::gaussian_charge(grid.n_particles(), spec.amplitude, center),
        "constant" => FormFactor::constant_profile(grid.n_particles(), spec.amplitude),
        other => {
            return Err(Error::Config(format!(
                "unknown form factor preset '{other}' (expected gaussian-charge | constant)"
            )))
        }
    };
    Ok(ff.with_domain(crate::field_model::BoxDomain {
        d: grid.d(),
        side: grid.box_len(),
    }))
}

pub(crate) fn build_potential_from(spec: &PotentialSpec) -> Result<Potential> {
    match spec {
        PotentialSpec::Zero => Ok(Potential::zero()),
        PotentialSpec::Harmonic { strength, center } => {
            let k = *strength;
            let c = center.clone();
            Ok(Potential::from_fn("harmonic", move |x| {
                k * x
                    .iter()
                    .zip(c.iter().cycle())
                    .map(|(xi, ci)| (xi - ci) * (xi - ci))
                    .sum::<f64>()
            }))
        }
    }
}

/// The classical limit measure a state family concentrates on.
pub(crate) fn limit_measure(spec: &StateFamilySpec, mode_count: usize) -> Result<WignerMeasure> {
    match spec {
        StateFamilySpec::Coherent { z_re, z_im } => {
            let z = pack_complex(z_re, z_im, mode_count)?;
            Ok(WignerMeasure::dirac(z))
        }
        StateFamilySpec::Number {
            mode,
            occupation_times_eps,
            circle_points,
        } => {
            if *mode >= mode_count {
                return Err(Error::Config(format!("mode {mode} out of range")));
            }
            let mut z0 = vec![C64::default(); mode_count];
            z0[*mode] = C64::new(occupation_times_eps.sqrt(), 0.0);
            WignerMeasure::phase_circle(z0, (*circle_points).max(8))
        }
        StateFamilySpec::Superposition { branches } => {
            let total: f64 = branches
                .iter()
                .map(|b| b.weight_re * b.weight_re + b.weight_im * b.weight_im)
                .sum();
            let points = branches
                .iter()
                .map(|b| {
                    Ok(WignerPoint {
                        weight: (b.weight_re * b.weight_re + b.weight_im * b.weight_im) / total,
                        amplitude: pack_complex(&b.z_re, &b.z_im, mode_count)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            WignerMeasure::new(points)
        }
    }
}

pub(crate) fn pack_complex(re: &[f64], im: &[f64], expected: usize) -> Result<Vec<C64>> {
    if re.len() != expected || im.len() != expected {
        return Err(Error::Config(format!(
            "amplitude vectors must have {expected} entries (got {}, {})",
            re.len(),
            im.len()
        )));
    }
    Ok(re.iter().zip(im).map(|(&r, &i)| C64::new(r, i)).collect())
}

/// Build the Fock state of a family member at one eps, choosing the
/// truncation from the coherent tail bound (Poisson upper quantile) or
/// the scheduled occupation.
pub(crate) fn build_family_state(
    spec: &StateFamilySpec,
    mode_count: usize,
    epsilon: f64,
    tail_tol: f64,
    max_fock_dim: usize,
) -> Result<(Arc<FockSpace>, FockVector)> {
    match spec {
        StateFamilySpec::Coherent { z_re, z_im } => {
            let z = pack_complex(z_re, z_im, mode_count)?;
            let mean = z.iter().map(|c| c.norm_sqr()).sum::<f64>() / epsilon;
            let n_max = crate::fock::poisson_required_n_max(mean, tail_tol) + 6;
            check_fock_budget(mode_count, n_max, max_fock_dim)?;
            let fs = FockSpace::new(mode_count, n_max, epsilon)?;
            let st = coherent_state(&fs, &CoherentSpec { z }, tail_tol)?;
            Ok((fs, st))
        }
        StateFamilySpec::Number {
            mode,
            occupation_times_eps,
            ..
        } => {
            let n = (occupation_times_eps / epsilon).round() as usize;
            if n == 0 {
                return Err(Error::Config(format!(
                    "occupation schedule gives n = 0 at eps = {epsilon}"
                )));
            }
            let n_max = n + 2;
            check_fock_budget(mode_count, n_max, max_fock_dim)?;
            let fs = FockSpace::new(mode_count, n_max, epsilon)?;
            let mut occ = vec![0u32; mode_count];
            occ[*mode] = n as u32;
            let st = number_state(&fs, &occ)?;
            Ok((fs, st))
        }
        StateFamilySpec::Superposition { branches } => {
            let zs: Vec<Vec<C64>> = branches
                .iter()
                .map(|b| pack_complex(&b.z_re, &b.z_im, mode_count))
                .collect::<Result<Vec<_>>>()?;
            let worst_mean = zs
                .iter()
                .map(|z| z.iter().map(|c| c.norm_sqr()).sum::<f64>() / epsilon)
                .fold(0.0f64, f64::max);
            let n_max = crate::fock::poisson_required_n_max(worst_mean, tail_tol) + 6;
            check_fock_budget(mode_count, n_max, max_fock_dim)?;
            let fs = FockSpace::new(mode_count, n_max, epsilon)?;
            let mut data = vec![C64::default(); fs.dim()];
            for (b, z) in branches.iter().zip(&zs) {
                let xi = coherent_state(&fs, &CoherentSpec { z: z.clone() }, tail_tol)?;
                let zeta = C64::new(b.weight_re, b.weight_im);
                for (acc, v) in data.iter_mut().zip(&xi.data) {
                    *acc += zeta * v;
                }
            }
            let nv = norm(&data);
            if nv < 1e-14 {
                return Err(Error::Config("superposition has zero norm".into()));
            }
            data.iter_mut().for_each(|c| *c /= nv);
            let st = FockVector {
                data,
                epsilon,
                n_max,
                mode_count,
                mode_set_hash: fs.mode_set_hash().map(str::to_string),
            };
            Ok((fs, st))
        }
    }
}

fn check_fock_budget(mode_count: usize, n_max: usize, max_fock_dim: usize) -> Result<()> {
    // C(mode_count + n_max, n_max), guarding overflow.
    let mut dim: f64 = 1.0;
    for i in 0..mode_count {
        dim *= (n_max + i + 1) as f64 / (i + 1) as f64;
    }
    if dim > max_fock_dim as f64 {
        return Err(Error::BudgetExceeded(format!(
            "Fock dimension ~{dim:.3e} exceeds the budget {max_fock_dim} (n_max = {n_max})"
        )));
    }
    Ok(())
}
