use super::{axpy, dot, norm, C64, LinearOp};
use crate::error::{Error, Result};

/// Solve (A + xi) x = b for Hermitian A with A + xi positive definite,
/// by conjugate gradients. Returns x with ||b - (A+xi)x|| <= tol * ||b||.
pub fn solve_shifted(
    op: &dyn LinearOp,
    xi: f64,
    b: &[C64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<C64>> {
    let n = op.dim();
    assert_eq!(b.len(), n);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(vec![C64::default(); n]);
    }
    let mut x = vec![C64::default(); n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![C64::default(); n];
    let mut rho = dot(&r, &r).re;
    let target = tol * bnorm;

    for _ in 0..max_iter {
        op.apply(&p, &mut ap);
        for (api, pi) in ap.iter_mut().zip(&p) {
            *api += xi * pi;
        }
        let pap = dot(&p, &ap).re;
        if pap <= 0.0 {
            return Err(Error::IndefiniteShift {
                minus_xi: -xi,
                lambda0: f64::NAN,
            });
        }
        let alpha = rho / pap;
        axpy(&mut x, C64::new(alpha, 0.0), &p);
        axpy(&mut r, C64::new(-alpha, 0.0), &ap);
        let rho_next = dot(&r, &r).re;
        if rho_next.sqrt() <= target {
            return Ok(x);
        }
        let beta = rho_next / rho;
        rho = rho_next;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: rho.sqrt() / bnorm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{SparseMatrix, Triplet};

    #[test]
    fn shifted_diagonal_solve_is_exact() {
        let m = SparseMatrix::from_triplets(
            2,
            2,
            &[
                Triplet { row: 0, col: 0, value: C64::new(1.0, 0.0) },
                Triplet { row: 1, col: 1, value: C64::new(2.0, 0.0) },
            ],
        );
        let b = vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)];
        let x = solve_shifted(&m, 1.0, &b, 1e-14, 100).unwrap();
        assert!((x[0] - C64::new(0.5, 0.0)).norm() < 1e-12);
        assert!((x[1] - C64::new(1.0 / 3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn residual_matches_request() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 80;
        let mut t = Vec::new();
        for i in 0..n {
            t.push(Triplet { row: i, col: i, value: C64::new(rng.gen_range(1.0..4.0), 0.0) });
            if i + 1 < n {
                let v = C64::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
                t.push(Triplet { row: i, col: i + 1, value: v });
                t.push(Triplet { row: i + 1, col: i, value: v.conj() });
            }
        }
        let m = SparseMatrix::from_triplets(n, n, &t);
        let b: Vec<C64> = (0..n).map(|i| C64::new((i as f64).sin(), 0.2)).collect();
        let x = solve_shifted(&m, 0.5, &b, 1e-12, 10_000).unwrap();
        let mut ax = m.apply(&x);
        for (axi, xi) in ax.iter_mut().zip(&x) {
            *axi += 0.5 * xi;
        }
        let res: f64 = ax
            .iter()
            .zip(&b)
            .map(|(a, bb)| (a - bb).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(res <= 1e-12 * norm(&b) * 10.0);
    }
}
