//! Shared linear-algebra kernels: sparse Hermitian storage, Lanczos
//! extremal eigensolves and conjugate-gradient shifted solves.

mod cg;
mod lanczos;
mod sparse;

pub use cg::solve_shifted;
pub use lanczos::{lowest_eigenpairs, EigenOptions, EigenResult};
pub use sparse::{SparseMatrix, Triplet};

use num_complex::Complex64;

pub type C64 = Complex64;

/// A linear operator applied matrix-free.
pub trait LinearOp: Sync {
    fn dim(&self) -> usize;

    /// y = A x. `y` is fully overwritten.
    fn apply(&self, x: &[C64], y: &mut [C64]);
}

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn axpy(y: &mut [C64], alpha: C64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(y: &mut [C64], alpha: f64) {
    for yi in y.iter_mut() {
        *yi *= alpha;
    }
}

/// Max relative deviation of <u, A v> from conj(<v, A u>) over a few
/// deterministic pseudo-random probes. Zero for an exactly Hermitian map.
pub fn hermiticity_defect(op: &dyn LinearOp, probes: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = op.dim();
    let mut worst = 0.0f64;
    let mut au = vec![C64::default(); n];
    let mut av = vec![C64::default(); n];
    for _ in 0..probes {
        let u: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let v: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        op.apply(&u, &mut au);
        op.apply(&v, &mut av);
        let uav = dot(&u, &av);
        let vau = dot(&v, &au);
        let scale = uav.norm().max(vau.norm()).max(1e-300);
        worst = worst.max((uav - vau.conj()).norm() / scale);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_is_sesquilinear() {
        let a = vec![C64::new(1.0, 2.0), C64::new(0.0, -1.0)];
        let b = vec![C64::new(3.0, 0.0), C64::new(1.0, 1.0)];
        let d = dot(&a, &b);
        // conj(1+2i)*3 + conj(-i)*(1+i) = (3-6i) + (i)(1+i) = (3-6i) + (-1+i)
        assert!((d - C64::new(2.0, -5.0)).norm() < 1e-15);
    }
}
