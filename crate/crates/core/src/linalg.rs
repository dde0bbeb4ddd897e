//! Dense least squares via Householder QR.

use crate::error::{Error, Result};

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), rows * cols, "row-major buffer has wrong length");
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, values[i * cols + j]);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self.get(i, j)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.col(j)) {
                *o += a * xj;
            }
        }
        out
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let (lo, hi) = (a.min(b), a.max(b));
        let r = self.rows;
        let (left, right) = self.data.split_at_mut(hi * r);
        left[lo * r..(lo + 1) * r].swap_with_slice(&mut right[..r]);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sum_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Applies `I - 2 v v^T / (v^T v)` to `c`.
fn reflect(v: &[f64], vtv: f64, c: &mut [f64]) {
    let s = 2.0 * dot(v, c) / vtv;
    for (ci, vi) in c.iter_mut().zip(v) {
        *ci -= s * vi;
    }
}

/// Builds the reflector zeroing `x[1..]`; returns `(v, v^T v, alpha)` where
/// `alpha` lands on the diagonal. `None` for a zero column.
fn householder(x: &[f64]) -> Option<(Vec<f64>, f64, f64)> {
    let norm = sum_sq(x).sqrt();
    if norm == 0.0 {
        return None;
    }
    let alpha = if x[0] >= 0.0 { -norm } else { norm };
    let mut v = x.to_vec();
    v[0] -= alpha;
    let vtv = sum_sq(&v);
    Some((v, vtv, alpha))
}

/// Upper-triangular factor `R` (min(rows, cols) x cols) of an unpivoted QR.
///
/// Used to compress a tall block before many small column-subset solves:
/// for any column subset `S`, `A[:, S]` and `R[:, S]` have the same normal
/// equations.
pub fn qr_r_factor(mut a: Matrix) -> Matrix {
    let (m, n) = (a.rows, a.cols);
    let steps = m.min(n);
    for k in 0..steps {
        let Some((v, vtv, alpha)) = householder(&a.col(k)[k..]) else {
            continue;
        };
        for j in k + 1..n {
            reflect(&v, vtv, &mut a.col_mut(j)[k..]);
        }
        let col = a.col_mut(k);
        col[k] = alpha;
        col[k + 1..].iter_mut().for_each(|x| *x = 0.0);
    }
    let mut r = Matrix::zeros(steps, n);
    for j in 0..n {
        for i in 0..steps.min(j + 1) {
            r.set(i, j, a.get(i, j));
        }
    }
    r
}

/// Solves `min ||b - A x||` by Householder QR with column pivoting.
///
/// Columns are pivoted by largest remaining norm. The problem is rank
/// deficient when some `|R_kk| <= |R_00| * max(nominal_rows, cols) * eps`.
/// `nominal_rows` is the row count of the original problem when `a` is a
/// compressed stand-in for it.
pub fn lstsq_pivoted(mut a: Matrix, mut b: Vec<f64>, nominal_rows: usize) -> Result<Vec<f64>> {
    let (m, n) = (a.rows, a.cols);
    assert_eq!(b.len(), m, "rhs length must match row count");
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut diag = vec![0.0; n];
    for k in 0..m.min(n) {
        let mut best = k;
        let mut best_norm = -1.0;
        for j in k..n {
            let s = sum_sq(&a.col(j)[k..]);
            if s > best_norm {
                best = j;
                best_norm = s;
            }
        }
        a.swap_cols(k, best);
        perm.swap(k, best);
        let Some((v, vtv, alpha)) = householder(&a.col(k)[k..]) else {
            break;
        };
        for j in k + 1..n {
            reflect(&v, vtv, &mut a.col_mut(j)[k..]);
        }
        reflect(&v, vtv, &mut b[k..]);
        diag[k] = alpha;
    }

    let tol = diag[0].abs() * m.max(n).max(nominal_rows) as f64 * f64::EPSILON;
    let rank = diag.iter().take_while(|d| d.abs() > tol).count();
    if rank < n {
        return Err(Error::RankDeficient { rank, cols: n });
    }

    let mut z = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for (j, zj) in z.iter().enumerate().skip(i + 1) {
            s -= a.get(i, j) * zj;
        }
        z[i] = s / diag[i];
    }
    let mut x = vec![0.0; n];
    for (k, &p) in perm.iter().enumerate() {
        x[p] = z[k];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(m: usize, n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let v: Vec<f64> = (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_row_major(m, n, &v)
    }

    /// Normal equations by Gaussian elimination; fine for well-conditioned A.
    fn normal_equations(a: &Matrix, b: &[f64]) -> Vec<f64> {
        let n = a.cols();
        let mut g = vec![vec![0.0; n + 1]; n];
        for i in 0..n {
            for j in 0..n {
                g[i][j] = dot(a.col(i), a.col(j));
            }
            g[i][n] = dot(a.col(i), b);
        }
        for k in 0..n {
            for i in k + 1..n {
                let f = g[i][k] / g[k][k];
                for j in k..=n {
                    g[i][j] -= f * g[k][j];
                }
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| g[i][j] * x[j]).sum();
            x[i] = (g[i][n] - s) / g[i][i];
        }
        x
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = random(40, 6, &mut rng);
            let b: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = lstsq_pivoted(a.clone(), b.clone(), 40).unwrap();
            let y = normal_equations(&a, &b);
            for (p, q) in x.iter().zip(&y) {
                assert!((p - q).abs() < 1e-10, "{p} vs {q}");
            }
        }
    }

    #[test]
    fn exact_system_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(30, 4, &mut rng);
        let truth = [1.5, -2.0, 0.25, 3.0];
        let b = a.mul_vec(&truth);
        let x = lstsq_pivoted(a, b, 30).unwrap();
        for (p, q) in x.iter().zip(&truth) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_and_duplicate_columns_are_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = random(20, 3, &mut rng);
        a.col_mut(1).iter_mut().for_each(|x| *x = 0.0);
        let b = vec![1.0; 20];
        assert!(matches!(
            lstsq_pivoted(a, b.clone(), 20),
            Err(Error::RankDeficient { rank: 2, cols: 3 })
        ));

        let mut a = random(20, 3, &mut rng);
        let c0 = a.col(0).to_vec();
        a.col_mut(2).copy_from_slice(&c0);
        assert!(matches!(lstsq_pivoted(a, b, 20), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn compressed_subset_solve_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random(200, 5, &mut rng);
        let b: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut aug = Matrix::zeros(200, 6);
        for j in 0..5 {
            aug.col_mut(j).copy_from_slice(a.col(j));
        }
        aug.col_mut(5).copy_from_slice(&b);
        let r = qr_r_factor(aug);
        assert_eq!((r.rows(), r.cols()), (6, 6));

        let subset = [0usize, 2, 4];
        let mut direct = Matrix::zeros(200, 3);
        let mut small = Matrix::zeros(5, 3);
        for (c, &j) in subset.iter().enumerate() {
            direct.col_mut(c).copy_from_slice(a.col(j));
            for i in 0..5 {
                small.set(i, c, r.get(i, j));
            }
        }
        let rhs: Vec<f64> = (0..5).map(|i| r.get(i, 5)).collect();
        let x1 = lstsq_pivoted(direct, b, 200).unwrap();
        let x2 = lstsq_pivoted(small, rhs, 200).unwrap();
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
