//! eps-sweep driver: build the field state per eps, assemble the
//! partial-trace operator, and measure its distance to the effective
//! operator of the limit measure (fields at probe points, eigenvalues,
//! resolvent gap).

use super::report::{ConvergenceReport, ConvergenceRow, RateFit, RunMeta};
use super::{
    build_form_factor_from, build_grid_from, build_mode_set_from, build_potential_from,
    limit_measure, linear_fit, ExperimentConfig,
};
use crate::error::{Error, Result};
use crate::field_model::{FormFactor, ModeSet};
use crate::fock::dgamma_diagonal;
use crate::grid::ParticleGrid;
use crate::measures::{effective_fields_eps, effective_fields_mu, EffectiveFields};
use crate::schrodinger::{
    assemble_effective, lowest_eigs_seeded, resolvent_gap, MsoOperator, Potential,
};
use rayon::prelude::*;
use std::time::Instant;

/// Uniform-in-eps lower-bound constant from the coupling data: the
/// diamagnetic part is nonnegative, the quantum variance is nonnegative,
/// so only the Zeeman term and the negative part of the potential can push
/// the spectrum down. For spinless couplings with V >= 0 this is 0.
pub fn uniform_lower_bound_constant(
    ff: &FormFactor,
    ms: &ModeSet,
    grid: &ParticleGrid,
    potential: &Potential,
    c_eps_max: f64,
) -> f64 {
    let mut v_min = f64::INFINITY;
    for g in 0..grid.spatial_dim() {
        v_min = v_min.min(potential.evaluate(&grid.configuration(g)));
    }
    let mut zeeman = 0.0;
    if ff.has_spin_coupling() {
        // |B_eps(x)| <= 2 ||omega^{-1/2} b(x)|| sqrt(c_eps); Frobenius norm
        // bounds the spin matrix norm.
        for j in 0..ff.n_particles() {
            let mut coupling_sup: f64 = 0.0;
            for g in 0..grid.single_particle_points() {
                let x = grid.point(g);
                if let Ok(Some(bcv)) = crate::field_model::spin_coupling_vector(ms, ff, j, &x) {
                    let weighted: f64 = bcv
                        .amplitudes
                        .iter()
                        .zip(ms.omega_flat())
                        .map(|(a, w)| a.norm_sqr() / w)
                        .sum();
                    coupling_sup = coupling_sup.max(weighted.sqrt());
                }
            }
            let mut sigma_norm: f64 = 0.0;
            for i in 0..grid.d() {
                let m = grid.spin_matrix(j, i);
                let frob: f64 = m.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                sigma_norm = sigma_norm.max(frob);
            }
            zeeman += sigma_norm * 2.0 * coupling_sup * c_eps_max.sqrt();
        }
    }
    zeeman + (-v_min).max(0.0)
}

struct EpsRow {
    epsilon: f64,
    c_eps: f64,
    fields: EffectiveFields,
    operator: MsoOperator,
    eigenvalues: Vec<f64>,
    n_max: usize,
    fock_dim: usize,
}

pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    let start = Instant::now();
    cfg.validate()?;
    let ms = build_mode_set_from(&cfg.mode_set)?;
    let grid = build_grid_from(&cfg.grid, cfg.mode_set.d)?;
    let ff = build_form_factor_from(&cfg.form_factor, &grid)?;
    let potential = build_potential_from(&cfg.potential)?;
    let mode_count = ms.fock_mode_count();
    let mu = limit_measure(&cfg.state_family, mode_count)?;
    let omega = ms.omega_flat();

    // Classical limit: effective operator and its spectrum.
    let limit_fields = effective_fields_mu(&mu, &ff, &ms, &grid)?;
    let h_eff = assemble_effective(&limit_fields, &potential, &grid)?;
    let eff_rep = lowest_eigs_seeded(&h_eff, cfg.solver.eig_count, cfg.solver.eig_tol, cfg.solver.seed)?;
    let c_mu = crate::measures::field_energy(&mu, &ms)?;

    // Feasibility pre-check so the error can name the smallest eps that
    // still fits the Fock budget.
    let mut feasible_down_to = None;
    for &eps in &cfg.schedule.epsilons {
        match super::build_family_state(
            &cfg.state_family,
            mode_count,
            eps,
            cfg.schedule.tail_tol,
            cfg.schedule.max_fock_dim,
        ) {
            Ok(_) => feasible_down_to = Some(eps),
            Err(Error::BudgetExceeded(_)) | Err(Error::UnderTruncated { .. }) => {
                return Err(Error::BudgetExceeded(match feasible_down_to {
                    Some(e) => format!(
                        "truncation budget exhausted below eps = {e}; smallest feasible eps = {e}"
                    ),
                    None => "truncation budget exhausted at the largest eps".into(),
                }));
            }
            Err(other) => return Err(other),
        }
    }

    // Per-eps heavy work in parallel; order restored by collect.
    let rows: Vec<EpsRow> = cfg
        .schedule
        .epsilons
        .par_iter()
        .map(|&eps| -> Result<EpsRow> {
            let (fs, state) = super::build_family_state(
                &cfg.state_family,
                mode_count,
                eps,
                cfg.schedule.tail_tol,
                cfg.schedule.max_fock_dim,
            )?;
            let dg = dgamma_diagonal(&fs, &omega)?;
            let c_eps: f64 = state
                .data
                .iter()
                .zip(&dg)
                .map(|(v, &d)| d * v.norm_sqr())
                .sum();
            let fields = effective_fields_eps(&state, &fs, &ff, &ms, &grid)?;
            let operator = assemble_effective(&fields, &potential, &grid)?;
            let rep = lowest_eigs_seeded(
                &operator,
                cfg.solver.eig_count,
                cfg.solver.eig_tol,
                cfg.solver.seed,
            )?;
            Ok(EpsRow {
                epsilon: eps,
                c_eps,
                fields,
                operator,
                eigenvalues: rep.eigenvalues,
                n_max: fs.n_max(),
                fock_dim: fs.dim(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // One shift for the whole family, placed below every spectrum.
    let min_eig = rows
        .iter()
        .map(|r| r.eigenvalues[0])
        .chain(std::iter::once(eff_rep.eigenvalues[0]))
        .fold(f64::INFINITY, f64::min);
    let xi = 2.0 + (-min_eig).max(0.0);

    let gaps: Vec<f64> = rows
        .par_iter()
        .map(|row| {
            resolvent_gap(
                &row.operator,
                &h_eff,
                xi,
                cfg.solver.resolvent_probes,
                cfg.solver.cg_tol,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    // Field discrepancies at a deterministic 5x5 probe set.
    let probes = probe_points(&grid, 5);
    let mut out_rows = Vec::with_capacity(rows.len() + 1);
    for (row, &gap) in rows.iter().zip(&gaps) {
        let (da, db, dphi2) = field_discrepancies(&row.fields, &limit_fields, &probes, grid.d());
        out_rows.push(ConvergenceRow {
            epsilon: row.epsilon,
            c_eps: row.c_eps,
            eigenvalues: row.eigenvalues.clone(),
            resolvent_gap: gap,
            a_discrepancy: da,
            b_discrepancy: db,
            phi2_discrepancy: dphi2,
            n_max: row.n_max,
            fock_dim: row.fock_dim,
        });
    }
    // Limit row: the measure-route fields, bit-identical to
    // effective_fields_mu because it is the same code path.
    out_rows.push(ConvergenceRow {
        epsilon: 0.0,
        c_eps: c_mu,
        eigenvalues: eff_rep.eigenvalues.clone(),
        resolvent_gap: 0.0,
        a_discrepancy: 0.0,
        b_discrepancy: 0.0,
        phi2_discrepancy: 0.0,
        n_max: 0,
        fock_dim: 0,
    });

    let c_eps_max = rows.iter().map(|r| r.c_eps).fold(0.0f64, f64::max);
    let lower_bound_constant = uniform_lower_bound_constant(&ff, &ms, &grid, &potential, c_eps_max);
    let lower_bound_satisfied = rows
        .iter()
        .all(|r| r.eigenvalues[0] >= -lower_bound_constant - 1e-9 * (1.0 + lower_bound_constant));
    let c_eps_uniformly_bounded = c_eps_max <= 2.0 * (c_mu + 1.0);

    let resolvent_rate = if gaps.iter().all(|&g| g > 0.0) && gaps.len() >= 3 {
        let xs: Vec<f64> = cfg.schedule.epsilons.iter().map(|e| e.ln()).collect();
        let ys: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
        let (slope, _, r2) = linear_fit(&xs, &ys);
        Some(RateFit { slope, r_squared: r2 })
    } else {
        None
    };

    Ok(ConvergenceReport {
        rows: out_rows,
        xi,
        lower_bound_constant,
        lower_bound_satisfied,
        c_eps_uniformly_bounded,
        resolvent_rate,
        meta: RunMeta {
            experiment: "convergence".into(),
            config_hash: cfg.content_hash(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    })
}

/// A deterministic per-axis subsample of the single-particle grid.
pub(crate) fn probe_points(grid: &ParticleGrid, per_axis: usize) -> Vec<usize> {
    let n = grid.points_per_axis();
    let picks: Vec<usize> = (0..per_axis.min(n))
        .map(|i| (i * n.max(1)) / per_axis.max(1) + n / (2 * per_axis.max(1)))
        .map(|i| i.min(n - 1))
        .collect();
    let mut out = Vec::new();
    match grid.d() {
        2 => {
            for &i in &picks {
                for &j in &picks {
                    out.push(grid.flat_index(&[i, j]));
                }
            }
        }
        _ => {
            for &i in &picks {
                for &j in &picks {
                    for &l in &picks {
                        out.push(grid.flat_index(&[i, j, l]));
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn field_discrepancies(
    from_state: &EffectiveFields,
    from_measure: &EffectiveFields,
    probes: &[usize],
    d: usize,
) -> (f64, f64, f64) {
    let mut da = 0.0f64;
    let mut db = 0.0f64;
    let mut dphi2 = 0.0f64;
    for (ps, pm) in from_state.particles.iter().zip(&from_measure.particles) {
        for &g in probes {
            let a_err: f64 = (0..d)
                .map(|i| (ps.a[g][i] - pm.a[g][i]).powi(2))
                .sum::<f64>()
                .sqrt();
            let b_err: f64 = (0..d)
                .map(|i| (ps.b[g][i] - pm.b[g][i]).powi(2))
                .sum::<f64>()
                .sqrt();
            da = da.max(a_err);
            db = db.max(b_err);
            dphi2 = dphi2.max((ps.phi2[g] - pm.phi2[g]).abs());
        }
    }
    (da, db, dphi2)
}
