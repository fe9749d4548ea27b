//! The full particle-field operator on grid x spin x Fock, applied
//! matrix-free, and the closed-form expectation on superpositions of
//! displaced-vacuum field states.
//!
//! Terms: -Lap_D + phi(lambda).phi(lambda) + i(phi.grad + grad.phi)
//! + V + dGamma(omega) - sigma.phi(b), with the cross term discretized by
//! the same link-averaged centered scheme as the grid operators, the
//! field coefficient being operator-valued here.

use crate::error::{Error, Result};
use crate::field_model::{coupling_vector, spin_coupling_vector, CouplingVector, FormFactor, ModeSet};
use crate::fock::{dgamma_diagonal, FockSpace};
use crate::grid::ParticleGrid;
use crate::linalg::{dot, C64, LinearOp};
use crate::schrodinger::Potential;
use std::sync::Arc;

/// Size limits for the coupled solve; the tensor dimension is the cost
/// driver, so both factors are capped.
#[derive(Clone, Copy, Debug)]
pub struct PfBudget {
    pub max_points_per_axis: usize,
    pub max_fock_dim: usize,
}

impl Default for PfBudget {
    fn default() -> Self {
        PfBudget {
            max_points_per_axis: 32,
            max_fock_dim: 50_000,
        }
    }
}

/// Matrix-free operator on grid x spin x Fock (single particle).
pub struct PfOperator {
    grid: Arc<ParticleGrid>,
    space: Arc<FockSpace>,
    /// Cartesian coupling components F_i(x_g) per grid point.
    couplings: Vec<Vec<Vec<C64>>>,
    /// Spin-coupling components per grid point, when present.
    spin_couplings: Option<Vec<Vec<Vec<C64>>>>,
    v_diag: Vec<f64>,
    dgamma_diag: Vec<f64>,
}

impl PfOperator {
    pub fn grid(&self) -> &Arc<ParticleGrid> {
        &self.grid
    }

    pub fn space(&self) -> &Arc<FockSpace> {
        &self.space
    }

    pub fn fock_dim(&self) -> usize {
        self.space.dim()
    }

    /// <v, H v> via one matrix-free application.
    pub fn quadratic_form(&self, v: &[C64]) -> C64 {
        let mut hv = vec![C64::default(); self.dim()];
        self.apply(v, &mut hv);
        dot(v, &hv)
    }
}

/// Per-point couplings on the single-particle grid (N = 1).
pub(crate) fn grid_couplings(
    ms: &ModeSet,
    ff: &FormFactor,
    grid: &ParticleGrid,
) -> Result<Vec<CouplingVector>> {
    (0..grid.single_particle_points())
        .map(|g| coupling_vector(ms, ff, 0, &grid.point(g)))
        .collect()
}

/// Assemble the full coupled operator. The budget guards the tensor
/// dimension; exceeding it reports the memory an eigensolve would need.
pub fn assemble_full_pf(
    fs: &Arc<FockSpace>,
    ff: &FormFactor,
    ms: &ModeSet,
    potential: &Potential,
    grid: &Arc<ParticleGrid>,
    budget: &PfBudget,
) -> Result<PfOperator> {
    if grid.n_particles() != 1 {
        return Err(Error::InvalidInput(
            "the coupled operator is restricted to N = 1; use the partial-trace path for more particles"
                .into(),
        ));
    }
    if grid.d() != ms.d() {
        return Err(Error::DimensionMismatch("grid and mode set disagree on d".into()));
    }
    if fs.mode_count() != ms.fock_mode_count() {
        return Err(Error::DimensionMismatch(
            "Fock space mode count does not match the mode set".into(),
        ));
    }
    if ff.has_spin_coupling() && grid.spin_mult() == 1 {
        return Err(Error::InvalidInput(
            "spin coupling supplied but spin multiplicity is 1; drop the b evaluator".into(),
        ));
    }
    if grid.points_per_axis() > budget.max_points_per_axis || fs.dim() > budget.max_fock_dim {
        let dim = grid.dim() * fs.dim();
        let mib = (dim as f64) * 16.0 * 130.0 / (1024.0 * 1024.0);
        return Err(Error::BudgetExceeded(format!(
            "grid {}^{} x spin {} x Fock {} = dimension {dim} (eigensolve needs ~{mib:.0} MiB); \
             budget allows {} points per axis and Fock dimension {}",
            grid.points_per_axis(),
            grid.d(),
            grid.spin_mult(),
            fs.dim(),
            budget.max_points_per_axis,
            budget.max_fock_dim
        )));
    }

    let d = grid.d();
    let cvs = grid_couplings(ms, ff, grid)?;
    let couplings: Vec<Vec<Vec<C64>>> = cvs
        .iter()
        .map(|cv| (0..d).map(|i| cv.component(i)).collect())
        .collect();
    let spin_couplings = if ff.has_spin_coupling() {
        let mut per_point = Vec::with_capacity(grid.single_particle_points());
        for g in 0..grid.single_particle_points() {
            let bcv = spin_coupling_vector(ms, ff, 0, &grid.point(g))?
                .ok_or_else(|| Error::InvalidInput("missing spin coupling".into()))?;
            per_point.push((0..d).map(|i| bcv.component(i)).collect());
        }
        Some(per_point)
    } else {
        None
    };

    let mut v_diag = Vec::with_capacity(grid.spatial_dim());
    for g in 0..grid.spatial_dim() {
        let val = potential.evaluate(&grid.configuration(g));
        if !val.is_finite() {
            return Err(Error::InvalidInput(format!("potential evaluates to {val}")));
        }
        v_diag.push(val);
    }
    let dgamma_diag = dgamma_diagonal(fs, &ms.omega_flat())?;

    Ok(PfOperator {
        grid: grid.clone(),
        space: fs.clone(),
        couplings,
        spin_couplings,
        v_diag,
        dgamma_diag,
    })
}

impl LinearOp for PfOperator {
    fn dim(&self) -> usize {
        self.grid.dim() * self.space.dim()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let d = self.grid.d();
        let s = self.grid.spin_mult();
        let n = self.grid.points_per_axis();
        let spatial = self.grid.spatial_dim();
        let nf = self.space.dim();
        let h = self.grid.spacing();
        let inv_h2 = 1.0 / (h * h);
        let fs = &self.space;

        y.iter_mut().for_each(|c| *c = C64::default());
        let fiber = |g: usize, sp: usize| (g * s + sp) * nf;

        let mut tmp = vec![C64::default(); nf];
        let mut tmp2 = vec![C64::default(); nf];

        for g in 0..spatial {
            let axes = self.grid.spatial_axes(g);
            let diag = 2.0 * inv_h2 * d as f64 + self.v_diag[g];
            for sp in 0..s {
                let base = fiber(g, sp);
                // Kinetic diagonal, potential, field energy.
                for f in 0..nf {
                    y[base + f] += (diag + self.dgamma_diag[f]) * x[base + f];
                }

                // phi(lambda).phi(lambda) on the fiber.
                for i in 0..d {
                    let f_i = &self.couplings[g][i];
                    tmp.iter_mut().for_each(|c| *c = C64::default());
                    fs.apply_field(f_i, &x[base..base + nf], &mut tmp);
                    tmp2.iter_mut().for_each(|c| *c = C64::default());
                    fs.apply_field(f_i, &tmp, &mut tmp2);
                    for f in 0..nf {
                        y[base + f] += tmp2[f];
                    }
                }
            }

            // Hopping and the operator-valued cross term along each axis.
            let mut stride = 1usize;
            for a in (0..d).rev() {
                if axes[a] + 1 < n {
                    let g_next = g + stride;
                    // Link-averaged coupling (F_a(x) + F_a(x + h e_a)) / 2.
                    let avg: Vec<C64> = self.couplings[g][a]
                        .iter()
                        .zip(&self.couplings[g_next][a])
                        .map(|(p, q)| 0.5 * (p + q))
                        .collect();
                    let ih = C64::new(0.0, 1.0 / h);
                    for sp in 0..s {
                        let b0 = fiber(g, sp);
                        let b1 = fiber(g_next, sp);
                        for f in 0..nf {
                            y[b0 + f] -= inv_h2 * x[b1 + f];
                            y[b1 + f] -= inv_h2 * x[b0 + f];
                        }
                        // (T psi)(g) += (i/h) phi(avg) psi(g+), and the
                        // adjoint contribution at g+.
                        tmp.iter_mut().for_each(|c| *c = C64::default());
                        fs.apply_field(&avg, &x[b1..b1 + nf], &mut tmp);
                        for f in 0..nf {
                            y[b0 + f] += ih * tmp[f];
                        }
                        tmp.iter_mut().for_each(|c| *c = C64::default());
                        fs.apply_field(&avg, &x[b0..b0 + nf], &mut tmp);
                        for f in 0..nf {
                            y[b1 + f] -= ih * tmp[f];
                        }
                    }
                }
                stride *= n;
            }

            // Zeeman: -sigma_i tensor phi(b_i(x)).
            if let Some(bc) = &self.spin_couplings {
                for sp_col in 0..s {
                    let bcol = fiber(g, sp_col);
                    for i in 0..d {
                        let sigma = self.grid.spin_matrix(0, i);
                        tmp.iter_mut().for_each(|c| *c = C64::default());
                        fs.apply_field(&bc[g][i], &x[bcol..bcol + nf], &mut tmp);
                        for sp_row in 0..s {
                            let m = sigma[sp_row * s + sp_col];
                            if m.norm_sqr() == 0.0 {
                                continue;
                            }
                            let brow = fiber(g, sp_row);
                            for f in 0..nf {
                                y[brow + f] -= m * tmp[f];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// One branch of a coherent superposition: weight zeta, classical point z,
/// particle wavefunction psi on grid x spin.
#[derive(Clone, Debug)]
pub struct CoherentBranch {
    pub zeta: C64,
    pub z: Vec<C64>,
    pub psi: Vec<C64>,
}

/// Displaced-vacuum overlap <Xi(z_a), Xi(z_b)> =
/// exp{ i Im<z_a, z_b> / eps - ||z_a - z_b||^2 / (2 eps) }.
pub fn overlap_factor(z_a: &[C64], z_b: &[C64], epsilon: f64) -> C64 {
    let mut inner = C64::default();
    let mut dist_sq = 0.0;
    for (a, b) in z_a.iter().zip(z_b) {
        inner += a.conj() * b;
        dist_sq += (a - b).norm_sqr();
    }
    C64::new(-dist_sq / (2.0 * epsilon), inner.im / epsilon).exp()
}

/// Closed-form expectation of the full coupled operator on a normalized
/// superposition of psi_j tensor Xi(z_j) branches. The Fock algebra is
/// closed out exactly; the particle factors use the same grid
/// discretization as the matrix-free operator, so the two routes agree to
/// truncation accuracy. The branch weights are rescaled internally so the
/// total state has unit norm.
pub fn coherent_superposition_expectation(
    branches: &[CoherentBranch],
    fs: &FockSpace,
    ff: &FormFactor,
    ms: &ModeSet,
    potential: &Potential,
    grid: &Arc<ParticleGrid>,
) -> Result<f64> {
    if branches.is_empty() {
        return Err(Error::InvalidInput("need at least one branch".into()));
    }
    if grid.n_particles() != 1 {
        return Err(Error::InvalidInput("coherent superpositions are single-particle".into()));
    }
    let mc = ms.fock_mode_count();
    for br in branches {
        if br.z.len() != mc {
            return Err(Error::DimensionMismatch("branch z has wrong mode count".into()));
        }
        if br.psi.len() != grid.dim() {
            return Err(Error::DimensionMismatch("branch psi has wrong grid dimension".into()));
        }
        let n = crate::linalg::norm(&br.psi);
        if (n - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized((n - 1.0).abs()));
        }
    }
    for i in 0..branches.len() {
        for k in 0..i {
            let dist: f64 = branches[i]
                .z
                .iter()
                .zip(&branches[k].z)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if dist < 1e-14 {
                return Err(Error::InvalidInput(format!(
                    "branches {k} and {i} have coincident classical points"
                )));
            }
        }
    }
    if ff.has_spin_coupling() && grid.spin_mult() == 1 {
        return Err(Error::InvalidInput("spin coupling with s = 1".into()));
    }

    let eps = fs.epsilon();
    let omega = ms.omega_flat();
    let cvs = grid_couplings(ms, ff, grid)?;
    let bcvs: Option<Vec<CouplingVector>> = if ff.has_spin_coupling() {
        Some(
            (0..grid.single_particle_points())
                .map(|g| {
                    spin_coupling_vector(ms, ff, 0, &grid.point(g))
                        .map(|o| o.expect("checked spin coupling"))
                })
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };

    let mut numerator = C64::default();
    let mut norm_sq = C64::default();
    for (ai, a) in branches.iter().enumerate() {
        for (bi, b) in branches.iter().enumerate() {
            let g_ab = if ai == bi {
                C64::new(1.0, 0.0)
            } else {
                overlap_factor(&a.z, &b.z, eps)
            };
            let weight = a.zeta.conj() * b.zeta * g_ab;
            let overlap = dot(&a.psi, &b.psi);
            norm_sq += weight * overlap;
            let applied = apply_branch_operator(&a.z, &b.z, &b.psi, &cvs, bcvs.as_deref(), &omega, eps, potential, grid);
            numerator += weight * dot(&a.psi, &applied);
        }
    }
    let norm_re = norm_sq.re;
    if norm_re <= 1e-14 {
        return Err(Error::InvalidInput("superposition has numerically zero norm".into()));
    }
    let value = numerator / norm_re;
    if value.im.abs() > 1e-7 * (1.0 + value.re.abs()) {
        return Err(Error::InvalidInput(format!(
            "expectation has non-real part {:.3e}; branches are inconsistent",
            value.im
        )));
    }
    Ok(value.re)
}

/// Apply the branch operator K(z_a, z_b) to psi: the Fock matrix elements
/// of every Hamiltonian term between Xi(z_a) and Xi(z_b), divided by the
/// overlap, substituted into the grid discretization.
#[allow(clippy::too_many_arguments)]
fn apply_branch_operator(
    z_a: &[C64],
    z_b: &[C64],
    psi: &[C64],
    cvs: &[CouplingVector],
    bcvs: Option<&[CouplingVector]>,
    omega: &[f64],
    eps: f64,
    potential: &Potential,
    grid: &ParticleGrid,
) -> Vec<C64> {
    let d = grid.d();
    let s = grid.spin_mult();
    let n = grid.points_per_axis();
    let spatial = grid.spatial_dim();
    let h = grid.spacing();
    let inv_h2 = 1.0 / (h * h);

    // <z_a, omega z_b>: the dGamma cross element.
    let dgamma_cross: C64 = z_a
        .iter()
        .zip(z_b)
        .zip(omega)
        .map(|((za, zb), &w)| za.conj() * zb * w)
        .sum();

    // beta_i(x) = <z_a, F_i(x)> + <F_i(x), z_b> per point and axis.
    let beta = |g: usize| -> Vec<C64> {
        (0..d)
            .map(|i| {
                let f_i = cvs[g].component(i);
                let mut acc = C64::default();
                for ((za, zb), f) in z_a.iter().zip(z_b).zip(&f_i) {
                    acc += za.conj() * f + f.conj() * zb;
                }
                acc
            })
            .collect()
    };

    let betas: Vec<Vec<C64>> = (0..spatial).map(beta).collect();
    let mut out = vec![C64::default(); grid.dim()];

    for g in 0..spatial {
        let axes = grid.spatial_axes(g);
        let x = grid.configuration(g);
        // Quadratic field term: beta.beta plus the commutator shift.
        let quad: C64 = betas[g].iter().map(|b| b * b).sum::<C64>()
            + C64::new(eps * cvs[g].norm_sq(), 0.0);
        let diag = C64::new(2.0 * inv_h2 * d as f64 + potential.evaluate(&x), 0.0)
            + quad
            + dgamma_cross;
        for sp in 0..s {
            let idx = g * s + sp;
            out[idx] += diag * psi[idx];
        }

        let mut stride = 1usize;
        for a in (0..d).rev() {
            if axes[a] + 1 < n {
                let g_next = g + stride;
                let b_link = 0.5 * (betas[g][a] + betas[g_next][a]);
                let ih = C64::new(0.0, 1.0 / h);
                for sp in 0..s {
                    let i0 = g * s + sp;
                    let i1 = g_next * s + sp;
                    out[i0] += (-inv_h2 + ih * b_link) * psi[i1];
                    out[i1] += (-inv_h2 - ih * b_link) * psi[i0];
                }
            }
            stride *= n;
        }

        if let Some(bcv) = bcvs {
            for i in 0..d {
                let g_i = bcv[g].component(i);
                let mut bb = C64::default();
                for ((za, zb), f) in z_a.iter().zip(z_b).zip(&g_i) {
                    bb += za.conj() * f + f.conj() * zb;
                }
                if bb.norm_sqr() == 0.0 {
                    continue;
                }
                let sigma = grid.spin_matrix(0, i);
                for sp_row in 0..s {
                    for sp_col in 0..s {
                        let m = sigma[sp_row * s + sp_col];
                        if m.norm_sqr() == 0.0 {
                            continue;
                        }
                        out[g * s + sp_row] -= bb * m * psi[g * s + sp_col];
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_model::{polarization_frame, Mode, ModeSet};
    use crate::fock::{coherent_state, CoherentSpec, FockSpace, DEFAULT_TAIL_TOL};
    use crate::linalg::{hermiticity_defect, norm};
    use crate::measures::effective_fields_mu;
    use crate::schrodinger::{assemble_effective, dirichlet_laplacian, lowest_eigs};
    use crate::wick::WignerMeasure;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn single_mode_set() -> ModeSet {
        ModeSet::from_modes(
            2,
            vec![Mode {
                node: vec![0.0, 1.0],
                weight: 1.0,
                omega: 1.0,
                polarizations: polarization_frame(&[0.0, 1.0]),
            }],
        )
        .unwrap()
    }

    fn constant_ff(g: f64) -> FormFactor {
        FormFactor::constant_profile(1, g)
    }

    #[test]
    fn decoupled_operator_is_tensor_sum() {
        let ms = single_mode_set();
        let ff = constant_ff(0.0);
        let grid = ParticleGrid::new(2, 1, 1, 1.0, 10).unwrap();
        let fs = FockSpace::new(1, 6, 0.25).unwrap();
        let pf = assemble_full_pf(&fs, &ff, &ms, &Potential::zero(), &grid, &PfBudget::default())
            .unwrap();
        let rep = lowest_eigs(&pf, 1, 1e-9).unwrap();
        let lap = dirichlet_laplacian(&grid);
        let rep_lap = lowest_eigs(&lap, 1, 1e-9).unwrap();
        assert!(
            (rep.eigenvalues[0] - rep_lap.eigenvalues[0]).abs() < 1e-7,
            "{} vs {}",
            rep.eigenvalues[0],
            rep_lap.eigenvalues[0]
        );
    }

    #[test]
    fn coupled_operator_is_hermitian() {
        let ms = single_mode_set();
        let ff = constant_ff(1.5);
        let grid = ParticleGrid::new(2, 1, 1, 1.0, 6).unwrap();
        let fs = FockSpace::new(1, 5, 0.2).unwrap();
        let pf = assemble_full_pf(&fs, &ff, &ms, &Potential::zero(), &grid, &PfBudget::default())
            .unwrap();
        assert!(hermiticity_defect(&pf, 4, 11) <= 1e-12);
    }

    #[test]
    fn budget_violation_reports_memory() {
        let ms = single_mode_set();
        let ff = constant_ff(1.0);
        let grid = ParticleGrid::new(2, 1, 1, 1.0, 6).unwrap();
        let fs = FockSpace::new(1, 100, 0.2).unwrap();
        let tight = PfBudget {
            max_points_per_axis: 32,
            max_fock_dim: 50,
        };
        match assemble_full_pf(&fs, &ff, &ms, &Potential::zero(), &grid, &tight) {
            Err(Error::BudgetExceeded(msg)) => assert!(msg.contains("MiB")),
            other => panic!("expected budget error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn overlap_factor_matches_brute_force_inner_product() {
        let eps = 0.2;
        let fs = FockSpace::new(2, 40, eps).unwrap();
        let z1 = vec![c(0.3, 0.1), c(-0.2, 0.25)];
        let z2 = vec![c(-0.1, 0.2), c(0.15, -0.3)];
        let xi1 = coherent_state(&fs, &CoherentSpec { z: z1.clone() }, DEFAULT_TAIL_TOL).unwrap();
        let xi2 = coherent_state(&fs, &CoherentSpec { z: z2.clone() }, DEFAULT_TAIL_TOL).unwrap();
        let brute = dot(&xi1.data, &xi2.data);
        let closed = overlap_factor(&z1, &z2, eps);
        assert!(
            (brute - closed).norm() <= 1e-10,
            "brute {brute} vs closed {closed}"
        );
        // And the criterion orientation: <Xi(z2), Xi(z1)> =
        // exp(-i Im<z1,z2>/eps - ||z1-z2||^2/(2 eps)).
        let brute_rev = dot(&xi2.data, &xi1.data);
        let mut inner = C64::default();
        let mut dist = 0.0;
        for (a, b) in z1.iter().zip(&z2) {
            inner += a.conj() * b;
            dist += (a - b).norm_sqr();
        }
        let formula = C64::new(-dist / (2.0 * eps), -inner.im / eps).exp();
        assert!((brute_rev - formula).norm() <= 1e-10);
    }

    #[test]
    fn single_branch_reduces_to_effective_plus_energy_plus_shift() {
        let ms = single_mode_set();
        let ff = constant_ff(1.2);
        let grid = ParticleGrid::new(2, 1, 1, 1.0, 8).unwrap();
        let eps = 0.125;
        let z = vec![c(0.35, -0.2)];
        let n_max = crate::fock::poisson_required_n_max(
            z.iter().map(|v| v.norm_sqr()).sum::<f64>() / eps,
            1e-14,
        ) + 6;
        let fs = FockSpace::new(1, n_max, eps).unwrap();

        // Normalized particle state: the discrete ground state of -Lap.
        let lap = dirichlet_laplacian(&grid);
        let eig = crate::linalg::lowest_eigenpairs(
            &lap,
            1,
            &crate::linalg::EigenOptions::default(),
        )
        .unwrap();
        let psi = eig.vectors[0].clone();

        let branches = vec![CoherentBranch { zeta: c(1.0, 0.0), z: z.clone(), psi: psi.clone() }];
        let got =
            coherent_superposition_expectation(&branches, &fs, &ff, &ms, &Potential::zero(), &grid)
                .unwrap();

        // Reference: <psi|H_eff(delta_z)|psi> + c(delta_z) + eps * shift.
        let mu = WignerMeasure::dirac(z.clone());
        let fields = effective_fields_mu(&mu, &ff, &ms, &grid).unwrap();
        let eff = assemble_effective(&fields, &Potential::zero(), &grid).unwrap();
        let e_eff = dot(&psi, &eff.matrix.apply(&psi)).re;
        let c_mu = crate::measures::field_energy(&mu, &ms).unwrap();
        let cvs = grid_couplings(&ms, &ff, &grid).unwrap();
        let shift: f64 = (0..grid.spatial_dim())
            .map(|g| eps * cvs[g].norm_sq() * psi[g].norm_sqr())
            .sum();
        let want = e_eff + c_mu + shift;
        assert!((got - want).abs() <= 1e-10 * (1.0 + want.abs()), "{got} vs {want}");
    }

    #[test]
    fn closed_form_matches_matrix_free_quadratic_form_on_two_branches() {
        let ms = single_mode_set();
        let ff = constant_ff(0.9);
        let grid = ParticleGrid::new(2, 1, 1, 1.0, 6).unwrap();
        let eps = 0.2;
        let fs = FockSpace::new(1, 50, eps).unwrap();
        let z1 = vec![c(0.3, 0.1)];
        let z2 = vec![c(-0.25, 0.2)];

        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let gdim = grid.dim();
        let mut psi1: Vec<C64> = (0..gdim)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let n1 = norm(&psi1);
        psi1.iter_mut().for_each(|v| *v /= n1);
        let mut psi2: Vec<C64> = (0..gdim)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let n2 = norm(&psi2);
        psi2.iter_mut().for_each(|v| *v /= n2);

        let zeta1 = c(0.8, 0.1);
        let zeta2 = c(0.4, -0.3);
        let branches = vec![
            CoherentBranch { zeta: zeta1, z: z1.clone(), psi: psi1.clone() },
            CoherentBranch { zeta: zeta2, z: z2.clone(), psi: psi2.clone() },
        ];
        let closed =
            coherent_superposition_expectation(&branches, &fs, &ff, &ms, &Potential::zero(), &grid)
                .unwrap();

        // Brute force: Pi = zeta1 psi1 x Xi(z1) + zeta2 psi2 x Xi(z2).
        let pf = assemble_full_pf(&fs, &ff, &ms, &Potential::zero(), &grid, &PfBudget::default())
            .unwrap();
        let xi1 = coherent_state(&fs, &CoherentSpec { z: z1 }, DEFAULT_TAIL_TOL).unwrap();
        let xi2 = coherent_state(&fs, &CoherentSpec { z: z2 }, DEFAULT_TAIL_TOL).unwrap();
        let nf = fs.dim();
        let mut pi = vec![C64::default(); pf.dim()];
        for g in 0..gdim {
            for f in 0..nf {
                pi[g * nf + f] = zeta1 * psi1[g] * xi1.data[f] + zeta2 * psi2[g] * xi2.data[f];
            }
        }
        let npi = norm(&pi);
        pi.iter_mut().for_each(|v| *v /= npi);
        let brute = pf.quadratic_form(&pi).re;
        assert!(
            (closed - brute).abs() <= 1e-8 * (1.0 + brute.abs()),
            "closed {closed} vs brute {brute}"
        );
    }

    #[test]
    fn distant_branches_have_negligible_interference() {
        let eps = 0.01;
        // ||z1 - z2||^2 / eps = 0.8^2/0.01 = 64 >= 60.
        let z1 = vec![c(0.4, 0.0)];
        let z2 = vec![c(-0.4, 0.0)];
        let g = overlap_factor(&z1, &z2, eps);
        assert!(g.norm() <= 1e-12, "overlap {}", g.norm());
    }

    #[test]
    fn coincident_branches_are_rejected() {
        let ms = single_mode_set();
        let ff = constant_ff(1.0);
        let grid = ParticleGrid::new(2, 1, 1, 1.0, 4).unwrap();
        let fs = FockSpace::new(1, 10, 0.2).unwrap();
        let gdim = grid.dim();
        let mut psi = vec![C64::default(); gdim];
        psi[0] = c(1.0, 0.0);
        let z = vec![c(0.1, 0.0)];
        let branches = vec![
            CoherentBranch { zeta: c(0.7, 0.0), z: z.clone(), psi: psi.clone() },
            CoherentBranch { zeta: c(0.7, 0.0), z, psi },
        ];
        assert!(matches!(
            coherent_superposition_expectation(&branches, &fs, &ff, &ms, &Potential::zero(), &grid),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn ground_energy_is_below_every_coherent_expectation() {
        let ms = single_mode_set();
        let ff = constant_ff(1.4);
        let grid = ParticleGrid::new(2, 1, 1, 1.0, 8).unwrap();
        let eps = 0.25;
        let fs = FockSpace::new(1, 30, eps).unwrap();
        let pf = assemble_full_pf(&fs, &ff, &ms, &Potential::zero(), &grid, &PfBudget::default())
            .unwrap();
        let e0 = lowest_eigs(&pf, 1, 1e-8).unwrap().eigenvalues[0];
        let lap = dirichlet_laplacian(&grid);
        let eig = crate::linalg::lowest_eigenpairs(&lap, 1, &crate::linalg::EigenOptions::default())
            .unwrap();
        let psi = eig.vectors[0].clone();
        for &re in &[0.0, 0.2, -0.3] {
            let branches = vec![CoherentBranch {
                zeta: c(1.0, 0.0),
                z: vec![c(re, 0.05)],
                psi: psi.clone(),
            }];
            let upper = coherent_superposition_expectation(
                &branches,
                &fs,
                &ff,
                &ms,
                &Potential::zero(),
                &grid,
            )
            .unwrap();
            assert!(e0 <= upper + 1e-8, "variational violation: {e0} > {upper}");
        }
    }
}
