//! Minimal dense linear algebra for the interior-point kernel: row-major
//! matrices, mat-vec products, and LU with partial pivoting. Problem sizes
//! are a few hundred variables, so dense factorization is the simple and
//! robust choice.

/// Row-major dense matrix.
#[derive(Debug, Clone)]
pub struct Mat {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, data: vec![0.0; nrows * ncols] }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.ncols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.ncols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.ncols..(r + 1) * self.ncols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.ncols..(r + 1) * self.ncols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    /// `out = self * x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(out.len(), self.nrows);
        for r in 0..self.nrows {
            let row = self.row(r);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            out[r] = acc;
        }
    }

    /// `out = selfᵀ * x`.
    pub fn matvec_transpose(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(out.len(), self.ncols);
        out.fill(0.0);
        for r in 0..self.nrows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a * xr;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// LU factorization with partial pivoting, `P A = L U` stored packed.
pub struct LuFactors {
    lu: Mat,
    perm: Vec<usize>,
}

/// Factors `a` in place of a copy. Returns `None` when a pivot is exactly
/// zero beyond rescue (structurally singular matrix).
pub fn lu_factor(a: &Mat) -> Option<LuFactors> {
    assert_eq!(a.nrows, a.ncols);
    let n = a.nrows;
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();

    for col in 0..n {
        // Pivot search.
        let mut best = col;
        let mut best_val = lu.at(col, col).abs();
        for r in col + 1..n {
            let v = lu.at(r, col).abs();
            if v > best_val {
                best = r;
                best_val = v;
            }
        }
        if best_val == 0.0 {
            return None;
        }
        if best != col {
            perm.swap(col, best);
            let (lo, hi) = (col.min(best), col.max(best));
            let (first, second) = lu.data.split_at_mut(hi * n);
            first[lo * n..lo * n + n].swap_with_slice(&mut second[..n]);
        }
        let pivot = lu.at(col, col);
        for r in col + 1..n {
            let factor = lu.at(r, col) / pivot;
            *lu.at_mut(r, col) = factor;
            if factor != 0.0 {
                let (pivot_row, work_row) = {
                    let (first, second) = lu.data.split_at_mut(r * n);
                    (&first[col * n..col * n + n], &mut second[..n])
                };
                for c in col + 1..n {
                    work_row[c] -= factor * pivot_row[c];
                }
            }
        }
    }
    Some(LuFactors { lu, perm })
}

impl LuFactors {
    /// Solves `A x = b`, overwriting `b` with `x`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.lu.nrows;
        debug_assert_eq!(b.len(), n);
        // Apply permutation.
        let permuted: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        b.copy_from_slice(&permuted);
        // Forward substitution with unit lower triangle.
        for r in 1..n {
            let row = self.lu.row(r);
            let mut acc = b[r];
            for c in 0..r {
                acc -= row[c] * b[c];
            }
            b[r] = acc;
        }
        // Back substitution.
        for r in (0..n).rev() {
            let row = self.lu.row(r);
            let mut acc = b[r];
            for c in r + 1..n {
                acc -= row[c] * b[c];
            }
            b[r] = acc / row[r];
        }
    }
}

/// Euclidean norm.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Max-abs norm.
pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_known_system() {
        let mut a = Mat::zeros(3, 3);
        let rows = [[2.0, 1.0, 1.0], [4.0, -6.0, 0.0], [-2.0, 7.0, 2.0]];
        for (r, row) in rows.iter().enumerate() {
            a.row_mut(r).copy_from_slice(row);
        }
        let lu = lu_factor(&a).unwrap();
        let mut b = vec![5.0, -2.0, 9.0];
        lu.solve_in_place(&mut b);
        // Verify A x = rhs.
        let mut check = vec![0.0; 3];
        a.matvec(&b, &mut check);
        for (c, want) in check.iter().zip([5.0, -2.0, 9.0]) {
            assert!((c - want).abs() < 1e-12);
        }
    }

    #[test]
    fn lu_detects_singularity() {
        let mut a = Mat::zeros(2, 2);
        a.row_mut(0).copy_from_slice(&[1.0, 2.0]);
        a.row_mut(1).copy_from_slice(&[2.0, 4.0]);
        assert!(lu_factor(&a).is_none());
    }

    #[test]
    fn lu_random_round_trip() {
        use rand::Rng;
        let mut rng = crate::rng::substream(5, 0, 0);
        for n in [1usize, 2, 5, 17, 40] {
            let mut a = Mat::zeros(n, n);
            for r in 0..n {
                for c in 0..n {
                    *a.at_mut(r, c) = rng.gen::<f64>() - 0.5;
                }
                *a.at_mut(r, r) += 2.0; // keep well conditioned
            }
            let x_true: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            let mut b = vec![0.0; n];
            a.matvec(&x_true, &mut b);
            let lu = lu_factor(&a).unwrap();
            lu.solve_in_place(&mut b);
            for (got, want) in b.iter().zip(&x_true) {
                assert!((got - want).abs() < 1e-10);
            }
        }
    }
}
