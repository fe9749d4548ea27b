//! Particle-sector operators on the Dirichlet box: the Laplacian, the
//! effective magnetic operator built from classical fields, the
//! partial-trace operator built from a quantum field state, and Krylov
//! spectral/resolvent solvers.
//!
//! One discretization scheme is used for every operator: the minimal
//! coupling is expanded as -Lap + i(A.grad + grad.A) + |A|^2 with centered
//! differences and link-midpoint-averaged A, so differences between
//! operators assembled from different field sources carry no
//! discretization bias.

mod pf;

pub use pf::{
    assemble_full_pf, coherent_superposition_expectation, overlap_factor, CoherentBranch,
    PfBudget, PfOperator,
};

use crate::error::{Error, Result};
use crate::field_model::{FormFactor, ModeSet};
use crate::fock::{FockSpace, FockVector};
use crate::grid::ParticleGrid;
use crate::linalg::{
    dot, lowest_eigenpairs, norm, scale, solve_shifted, C64, EigenOptions, LinearOp, SparseMatrix,
    Triplet,
};
use crate::measures::{effective_fields_eps, EffectiveFields, Provenance};
use serde::Serialize;
use std::sync::Arc;
use std::time::Instant;

/// Scheme tag recorded in operator metadata; both the effective and the
/// partial-trace assembly go through the same code path.
pub const SCHEME_ID: &str = "expanded-minimal-coupling/link-averaged-v1";

/// Scalar potential evaluator over N-particle configurations.
#[derive(Clone)]
pub struct Potential {
    eval: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    description: String,
}

impl Potential {
    pub fn zero() -> Potential {
        Potential {
            eval: Arc::new(|_| 0.0),
            description: "zero".into(),
        }
    }

    pub fn from_fn(
        description: &str,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Potential {
        Potential {
            eval: Arc::new(f),
            description: description.into(),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MsoMetadata {
    pub provenance: String,
    pub potential: String,
    pub scheme_id: String,
    pub epsilon: Option<f64>,
}

/// Sparse Hermitian operator on grid x spin.
#[derive(Clone)]
pub struct MsoOperator {
    pub grid: Arc<ParticleGrid>,
    pub matrix: SparseMatrix,
    pub meta: MsoMetadata,
}

impl MsoOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }
}

impl LinearOp for MsoOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.matrix.apply_into(x, y);
    }
}

/// Kinetic-only operator: the (2 d N)-point Dirichlet stencil.
pub fn dirichlet_laplacian(grid: &Arc<ParticleGrid>) -> MsoOperator {
    assemble_mso(grid, None, &Potential::zero(), "kinetic-only", None)
        .expect("kinetic assembly cannot fail")
}

/// Effective magnetic operator from sampled classical or quantum fields:
/// sum_j { -Lap_j + i(A_j.grad_j + grad_j.A_j) + phi2_j - sigma_j.B_j } + V.
///
/// The diagonal field term is phi2 = |A|^2 + W for measure provenance and
/// the quantum second moment for state provenance, so both cases share
/// this one scheme.
pub fn assemble_effective(
    fields: &EffectiveFields,
    potential: &Potential,
    grid: &Arc<ParticleGrid>,
) -> Result<MsoOperator> {
    let provenance = match fields.provenance {
        Provenance::FromMeasure => "from-measure",
        Provenance::FromState { .. } => "from-state",
    };
    let epsilon = match fields.provenance {
        Provenance::FromState { epsilon } => Some(epsilon),
        Provenance::FromMeasure => None,
    };
    assemble_mso(grid, Some(fields), potential, provenance, epsilon)
}

/// Partial-trace operator of a normalized field state: fields are the
/// quantum expectations and the diagonal carries the full second moment
/// <phi^2>_eps in place of the |A|^2 + W split.
pub fn assemble_heps(
    state: &FockVector,
    fs: &FockSpace,
    ff: &FormFactor,
    ms: &ModeSet,
    potential: &Potential,
    grid: &Arc<ParticleGrid>,
) -> Result<MsoOperator> {
    let fields = effective_fields_eps(state, fs, ff, ms, grid)?;
    assemble_mso(grid, Some(&fields), potential, "partial-trace", Some(fs.epsilon()))
}

fn assemble_mso(
    grid: &Arc<ParticleGrid>,
    fields: Option<&EffectiveFields>,
    potential: &Potential,
    provenance: &str,
    epsilon: Option<f64>,
) -> Result<MsoOperator> {
    let d = grid.d();
    let n_particles = grid.n_particles();
    let s = grid.spin_mult();
    let n = grid.points_per_axis();
    let spatial = grid.spatial_dim();
    let dim = grid.dim();
    let h = grid.spacing();
    let inv_h2 = 1.0 / (h * h);

    if let Some(f) = fields {
        if f.particles.len() != n_particles {
            return Err(Error::DimensionMismatch(
                "field set does not match particle count".into(),
            ));
        }
        let expected = grid.single_particle_points();
        for p in &f.particles {
            if p.a.len() != expected || p.phi2.len() != expected {
                return Err(Error::DimensionMismatch("fields not sampled on this grid".into()));
            }
        }
    }

    let has_zeeman = fields
        .map(|f| {
            f.particles
                .iter()
                .any(|p| p.b.iter().any(|v| v.iter().any(|c| c.abs() > 0.0)))
        })
        .unwrap_or(false);
    if has_zeeman && s == 1 {
        return Err(Error::InvalidInput(
            "nonzero Zeeman field with spin multiplicity 1".into(),
        ));
    }

    let mut triplets: Vec<Triplet> = Vec::new();
    let push_spatial = |row: usize, col: usize, value: C64, triplets: &mut Vec<Triplet>| {
        for sp in 0..s {
            triplets.push(Triplet {
                row: row * s + sp,
                col: col * s + sp,
                value,
            });
        }
    };

    for g in 0..spatial {
        let axes = grid.spatial_axes(g);
        let config = grid.configuration(g);

        // Diagonal: kinetic 2/h^2 per axis + potential + field diagonal.
        let v_val = potential.evaluate(&config);
        if !v_val.is_finite() {
            return Err(Error::InvalidInput(format!(
                "potential evaluates to {v_val} at {config:?}"
            )));
        }
        let mut diag = 2.0 * inv_h2 * (d * n_particles) as f64 + v_val;
        if let Some(f) = fields {
            for j in 0..n_particles {
                let sub = grid.particle_sub_index(g, j);
                diag += f.particles[j].phi2[sub];
            }
        }
        push_spatial(g, g, C64::new(diag, 0.0), &mut triplets);

        // Off-diagonal per global axis: hopping and the link-averaged
        // cross term i(A.grad + grad.A).
        let mut stride = 1usize;
        for a in (0..d * n_particles).rev() {
            if axes[a] + 1 < n {
                let g_next = g + stride;
                let mut hop_fwd = C64::new(-inv_h2, 0.0);
                let mut hop_bwd = C64::new(-inv_h2, 0.0);
                if let Some(f) = fields {
                    let j = a / d;
                    let i = a % d;
                    let sub = grid.particle_sub_index(g, j);
                    let sub_next = grid.particle_sub_index(g_next, j);
                    let a_link = 0.5 * (f.particles[j].a[sub][i] + f.particles[j].a[sub_next][i]);
                    if a_link != 0.0 {
                        // (T psi)(x) = (i/h) [Abar_+ psi(x+h) - Abar_- psi(x-h)]
                        hop_fwd += C64::new(0.0, a_link / h);
                        hop_bwd += C64::new(0.0, -a_link / h);
                    }
                }
                push_spatial(g, g_next, hop_fwd, &mut triplets);
                push_spatial(g_next, g, hop_bwd, &mut triplets);
            }
            stride *= n;
        }

        // Zeeman spin block -sigma_j . B_j(x_j).
        if has_zeeman {
            let f = fields.expect("checked");
            for j in 0..n_particles {
                let sub = grid.particle_sub_index(g, j);
                for i in 0..d {
                    let b = f.particles[j].b[sub][i];
                    if b == 0.0 {
                        continue;
                    }
                    let sigma = grid.spin_matrix(j, i);
                    for sp_row in 0..s {
                        for sp_col in 0..s {
                            let m = sigma[sp_row * s + sp_col];
                            if m.norm_sqr() == 0.0 {
                                continue;
                            }
                            triplets.push(Triplet {
                                row: g * s + sp_row,
                                col: g * s + sp_col,
                                value: -b * m,
                            });
                        }
                    }
                }
            }
        }
    }

    let matrix = SparseMatrix::from_triplets(dim, dim, &triplets);
    let dev = matrix.hermiticity_deviation();
    if dev > 1e-12 {
        return Err(Error::NotHermitian(dev));
    }
    Ok(MsoOperator {
        grid: grid.clone(),
        matrix,
        meta: MsoMetadata {
            provenance: provenance.into(),
            potential: potential.description().into(),
            scheme_id: SCHEME_ID.into(),
            epsilon,
        },
    })
}

/// Spectral solve summary.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    pub eigenvalues: Vec<f64>,
    pub residual_norms: Vec<f64>,
    pub iterations: usize,
    pub wall_time_s: f64,
}

/// Lowest `count` eigenvalues with residual certificates
/// ||Op v - theta v|| <= tol (|theta| + 1).
pub fn lowest_eigs(op: &dyn LinearOp, count: usize, tol: f64) -> Result<SpectralReport> {
    lowest_eigs_seeded(op, count, tol, 7)
}

pub fn lowest_eigs_seeded(
    op: &dyn LinearOp,
    count: usize,
    tol: f64,
    seed: u64,
) -> Result<SpectralReport> {
    let start = Instant::now();
    let opts = EigenOptions {
        tol,
        seed,
        ..EigenOptions::default()
    };
    let res = lowest_eigenpairs(op, count, &opts)?;
    Ok(SpectralReport {
        eigenvalues: res.values,
        residual_norms: res.residuals,
        iterations: res.iterations,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Apply (Op + xi)^{-1} v by conjugate gradients after checking that -xi
/// lies strictly below the spectrum.
pub fn apply_resolvent(op: &dyn LinearOp, xi: f64, v: &[C64], tol: f64) -> Result<Vec<C64>> {
    let lambda0 = estimate_lambda0(op)?;
    if lambda0 + xi <= 1e-10 * (1.0 + lambda0.abs()) {
        return Err(Error::IndefiniteShift { minus_xi: -xi, lambda0 });
    }
    solve_shifted(op, xi, v, tol, 200_000)
}

fn estimate_lambda0(op: &dyn LinearOp) -> Result<f64> {
    let opts = EigenOptions {
        tol: 1e-6,
        max_subspace: 120,
        max_restarts: 20,
        seed: 3,
    };
    Ok(lowest_eigenpairs(op, 1, &opts)?.values[0])
}

/// Operator-norm estimate of R_A(xi) - R_B(xi) by symmetric power
/// iteration with `probes` random starts. Both operators must share the
/// grid dimension and have -xi below their spectra.
pub fn resolvent_gap(
    op_a: &dyn LinearOp,
    op_b: &dyn LinearOp,
    xi: f64,
    probes: usize,
    tol: f64,
) -> Result<f64> {
    if op_a.dim() != op_b.dim() {
        return Err(Error::DimensionMismatch(
            "resolvent gap needs operators on a common grid".into(),
        ));
    }
    for (name, op) in [("A", op_a), ("B", op_b)] {
        let lambda0 = estimate_lambda0(op)?;
        if lambda0 + xi <= 1e-10 * (1.0 + lambda0.abs()) {
            let _ = name;
            return Err(Error::IndefiniteShift { minus_xi: -xi, lambda0 });
        }
    }
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let n = op_a.dim();
    let mut best = 0.0f64;
    for _ in 0..probes.max(1) {
        let mut u: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let nu = norm(&u);
        scale(&mut u, 1.0 / nu);
        let mut rayleigh = 0.0f64;
        for it in 0..40 {
            let ra = solve_shifted(op_a, xi, &u, tol, 200_000)?;
            let rb = solve_shifted(op_b, xi, &u, tol, 200_000)?;
            let w: Vec<C64> = ra.iter().zip(&rb).map(|(a, b)| a - b).collect();
            let ray = dot(&u, &w).re.abs();
            let wn = norm(&w);
            if wn < 1e-300 {
                rayleigh = 0.0;
                break;
            }
            let converged = it >= 4 && (ray - rayleigh).abs() <= 5e-3 * ray.max(1e-300);
            rayleigh = ray;
            u = w;
            scale(&mut u, 1.0 / wn);
            if converged {
                break;
            }
        }
        best = best.max(rayleigh);
    }
    Ok(best)
}
