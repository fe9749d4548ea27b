use super::{C64, LinearOp};

/// One matrix entry in coordinate form.
#[derive(Clone, Copy, Debug)]
pub struct Triplet {
    pub row: usize,
    pub col: usize,
    pub value: C64,
}

/// Compressed sparse row complex matrix.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

impl SparseMatrix {
    /// Build from coordinate triplets, summing duplicates and dropping
    /// entries below 1e-300 in magnitude. Column order within a row is
    /// ascending, so construction is deterministic.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[Triplet]) -> Self {
        let mut per_row: Vec<Vec<(usize, C64)>> = vec![Vec::new(); nrows];
        for t in triplets {
            assert!(t.row < nrows && t.col < ncols, "triplet out of bounds");
            per_row[t.row].push((t.col, t.value));
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in per_row.iter_mut() {
            row.sort_by_key(|(c, _)| *c);
            let mut i = 0;
            while i < row.len() {
                let col = row[i].0;
                let mut acc = C64::default();
                while i < row.len() && row[i].0 == col {
                    acc += row[i].1;
                    i += 1;
                }
                if acc.norm() > 1e-300 {
                    col_idx.push(col);
                    values.push(acc);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, &[])
    }

    pub fn identity(n: usize, diag: C64) -> Self {
        let t: Vec<Triplet> = (0..n)
            .map(|i| Triplet {
                row: i,
                col: i,
                value: diag,
            })
            .collect();
        Self::from_triplets(n, n, &t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = C64::default();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::default(); self.nrows];
        self.apply_into(x, &mut y);
        y
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> SparseMatrix {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                t.push(Triplet {
                    row: self.col_idx[k],
                    col: r,
                    value: self.values[k].conj(),
                });
            }
        }
        SparseMatrix::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn scaled(&self, factor: C64) -> SparseMatrix {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v *= factor;
        }
        out
    }

    /// Entrywise sum. Shapes must agree.
    pub fn add(&self, other: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.nrows, other.nrows);
        assert_eq!(self.ncols, other.ncols);
        let mut t = self.to_triplets();
        t.extend(other.to_triplets());
        SparseMatrix::from_triplets(self.nrows, self.ncols, &t)
    }

    /// Sparse-sparse product; intended for small test oracles.
    pub fn matmul(&self, other: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut t = Vec::new();
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let a = self.values[k];
                let mid = self.col_idx[k];
                for k2 in other.row_ptr[mid]..other.row_ptr[mid + 1] {
                    t.push(Triplet {
                        row: r,
                        col: other.col_idx[k2],
                        value: a * other.values[k2],
                    });
                }
            }
        }
        SparseMatrix::from_triplets(self.nrows, other.ncols, &t)
    }

    pub fn to_triplets(&self) -> Vec<Triplet> {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                t.push(Triplet {
                    row: r,
                    col: self.col_idx[k],
                    value: self.values[k],
                });
            }
        }
        t
    }

    pub fn to_dense(&self) -> Vec<Vec<C64>> {
        let mut d = vec![vec![C64::default(); self.ncols]; self.nrows];
        for t in self.to_triplets() {
            d[t.row][t.col] = t.value;
        }
        d
    }

    /// Max |A - A^H| entry over the sparsity pattern, relative to the
    /// largest entry magnitude (0 for the zero matrix).
    pub fn hermiticity_deviation(&self) -> f64 {
        let adj = self.adjoint();
        let diff = self.add(&adj.scaled(C64::new(-1.0, 0.0)));
        let max_entry = self
            .values
            .iter()
            .map(|v| v.norm())
            .fold(0.0f64, f64::max)
            .max(1e-300);
        diff.values.iter().map(|v| v.norm()).fold(0.0f64, f64::max) / max_entry
    }
}

impl LinearOp for SparseMatrix {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows, self.ncols);
        self.nrows
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.apply_into(x, y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_triplets_are_summed() {
        let t = [
            Triplet { row: 0, col: 1, value: C64::new(1.0, 0.0) },
            Triplet { row: 0, col: 1, value: C64::new(2.0, -1.0) },
        ];
        let m = SparseMatrix::from_triplets(2, 2, &t);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.to_dense()[0][1], C64::new(3.0, -1.0));
    }

    #[test]
    fn adjoint_conjugates_and_transposes() {
        let t = [Triplet { row: 0, col: 1, value: C64::new(0.0, 2.0) }];
        let m = SparseMatrix::from_triplets(2, 2, &t).adjoint();
        assert_eq!(m.to_dense()[1][0], C64::new(0.0, -2.0));
    }

    #[test]
    fn matmul_matches_dense() {
        let a = SparseMatrix::from_triplets(
            2,
            2,
            &[
                Triplet { row: 0, col: 0, value: C64::new(1.0, 1.0) },
                Triplet { row: 1, col: 0, value: C64::new(2.0, 0.0) },
            ],
        );
        let b = SparseMatrix::from_triplets(
            2,
            2,
            &[Triplet { row: 0, col: 1, value: C64::new(0.0, 3.0) }],
        );
        let c = a.matmul(&b).to_dense();
        assert_eq!(c[0][1], C64::new(-3.0, 3.0));
        assert_eq!(c[1][1], C64::new(0.0, 6.0));
    }
}
