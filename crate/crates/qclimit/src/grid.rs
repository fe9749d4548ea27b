//! Particle-sector discretization: a Dirichlet box [0, L]^d per particle,
//! uniform spacing, and the spin matrices coupled to the magnetic field.

use crate::error::{Error, Result};
use crate::linalg::C64;
use std::sync::Arc;

/// Uniform grid on Lambda^N with Dirichlet boundary (the wavefunction
/// lives on interior nodes and vanishes on the box faces), tensored with
/// a single spin factor C^s.
#[derive(Clone, Debug)]
pub struct ParticleGrid {
    d: usize,
    n_particles: usize,
    spin_mult: usize,
    box_len: f64,
    spacing: f64,
    /// Interior points per axis: L / h - 1.
    points_per_axis: usize,
    /// d matrices per particle, each s x s Hermitian, row-major.
    spin_matrices: Vec<Vec<Vec<C64>>>,
}

impl ParticleGrid {
    pub fn new(
        d: usize,
        n_particles: usize,
        spin_mult: usize,
        box_len: f64,
        divisions: usize,
    ) -> Result<Arc<ParticleGrid>> {
        if d != 2 && d != 3 {
            return Err(Error::InvalidInput(format!("dimension must be 2 or 3, got {d}")));
        }
        if n_particles == 0 || spin_mult == 0 {
            return Err(Error::InvalidInput("need N >= 1 and s >= 1".into()));
        }
        if !(box_len > 0.0) || divisions < 2 {
            return Err(Error::InvalidInput("need L > 0 and at least 2 divisions".into()));
        }
        let spacing = box_len / divisions as f64;
        let spin_matrices = default_spin_matrices(d, n_particles, spin_mult)?;
        Ok(Arc::new(ParticleGrid {
            d,
            n_particles,
            spin_mult,
            box_len,
            spacing,
            points_per_axis: divisions - 1,
            spin_matrices,
        }))
    }

    pub fn with_spin_matrices(
        mut self: Arc<Self>,
        matrices: Vec<Vec<Vec<C64>>>,
    ) -> Result<Arc<ParticleGrid>> {
        let s = self.spin_mult;
        if matrices.len() != self.n_particles {
            return Err(Error::DimensionMismatch("one matrix set per particle".into()));
        }
        for per_particle in &matrices {
            if per_particle.len() != self.d {
                return Err(Error::DimensionMismatch("d spin matrices per particle".into()));
            }
            for m in per_particle {
                if m.len() != s * s {
                    return Err(Error::DimensionMismatch("spin matrix must be s x s".into()));
                }
                for i in 0..s {
                    for j in 0..s {
                        if (m[i * s + j] - m[j * s + i].conj()).norm() > 1e-13 {
                            return Err(Error::InvalidInput("spin matrix not hermitian".into()));
                        }
                    }
                }
            }
        }
        Arc::make_mut(&mut self).spin_matrices = matrices;
        Ok(self)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn spin_mult(&self) -> usize {
        self.spin_mult
    }

    pub fn box_len(&self) -> f64 {
        self.box_len
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    /// Interior points of the single-particle box, n^d of them.
    pub fn single_particle_points(&self) -> usize {
        self.points_per_axis.pow(self.d as u32)
    }

    /// Spatial dimension of the N-particle grid, n^{dN}.
    pub fn spatial_dim(&self) -> usize {
        self.points_per_axis.pow((self.d * self.n_particles) as u32)
    }

    /// Full Hilbert dimension n^{dN} * s.
    pub fn dim(&self) -> usize {
        self.spatial_dim() * self.spin_mult
    }

    pub fn spin_matrix(&self, particle: usize, axis: usize) -> &[C64] {
        &self.spin_matrices[particle][axis]
    }

    /// Coordinate of the i-th interior node along one axis.
    pub fn axis_coord(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.spacing
    }

    /// Single-particle point from its flat index (row-major over axes).
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let n = self.points_per_axis;
        let mut idx = flat;
        let mut out = vec![0.0; self.d];
        for a in (0..self.d).rev() {
            out[a] = self.axis_coord(idx % n);
            idx /= n;
        }
        out
    }

    /// Flat single-particle index from per-axis indices.
    pub fn flat_index(&self, axes: &[usize]) -> usize {
        let n = self.points_per_axis;
        axes.iter().fold(0, |acc, &i| acc * n + i)
    }

    /// Decompose an N-particle spatial index into per-axis indices
    /// (particle-major, axis row-major within a particle).
    pub fn spatial_axes(&self, mut flat: usize) -> Vec<usize> {
        let n = self.points_per_axis;
        let total_axes = self.d * self.n_particles;
        let mut out = vec![0; total_axes];
        for a in (0..total_axes).rev() {
            out[a] = flat % n;
            flat /= n;
        }
        out
    }

    /// N-particle configuration (dN coordinates) for a spatial index.
    pub fn configuration(&self, flat: usize) -> Vec<f64> {
        self.spatial_axes(flat)
            .iter()
            .map(|&i| self.axis_coord(i))
            .collect()
    }

    /// Single-particle flat index of particle j inside a spatial index.
    pub fn particle_sub_index(&self, spatial: usize, particle: usize) -> usize {
        let axes = self.spatial_axes(spatial);
        self.flat_index(&axes[particle * self.d..(particle + 1) * self.d])
    }
}

fn default_spin_matrices(d: usize, n_particles: usize, s: usize) -> Result<Vec<Vec<Vec<C64>>>> {
    let zero = C64::default();
    let per_axis: Vec<Vec<C64>> = match s {
        1 => vec![vec![zero]; d],
        2 => {
            // Pauli matrices, the first min(d, 3) of them.
            let sx = vec![zero, C64::new(1.0, 0.0), C64::new(1.0, 0.0), zero];
            let sy = vec![zero, C64::new(0.0, -1.0), C64::new(0.0, 1.0), zero];
            let sz = vec![C64::new(1.0, 0.0), zero, zero, C64::new(-1.0, 0.0)];
            [sx, sy, sz][..d.min(3)].to_vec()
        }
        _ => {
            return Err(Error::InvalidInput(format!(
                "no default spin matrices for s = {s}; supply them explicitly"
            )))
        }
    };
    Ok(vec![per_axis; n_particles])
}
