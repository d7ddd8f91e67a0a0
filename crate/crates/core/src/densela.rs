//! Dense tall-skinny kernels behind every Anderson mixing solve.
//!
//! The mixing least-squares problem has `n` rows and at most `m` columns,
//! with `m` in the tens. A Householder QR with column pivoting is
//! recomputed from scratch at each Anderson step.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Relative threshold on the pivoted diagonal of `T` below which trailing
/// components of a least-squares solution are truncated to zero.
pub const RANK_TOLERANCE: f64 = 1e-14;

/// Column-major dense matrix with `n_rows >= n_cols` in typical use.
#[derive(Debug, Clone, PartialEq)]
pub struct TallMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl TallMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            values: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n_cols = columns.len();
        let n_rows = columns.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for c in columns {
            if c.len() != n_rows {
                return Err(Error::DimensionMismatch {
                    expected: n_rows,
                    found: c.len(),
                });
            }
            values.extend_from_slice(c);
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn from_column_major(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch {
                expected: n_rows * n_cols,
                found: values.len(),
            });
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
        })
    }

    /// Row-major nested input, mostly for tests.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(n_rows, n_cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n_rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[j * self.n_rows + i] = v;
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Rows `rows` of every column, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols);
        for j in 0..self.n_cols {
            let col = self.column(j);
            values.extend(rows.iter().map(|&i| col[i]));
        }
        Self {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            values,
        }
    }

    /// `M x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                found: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                crate::axpy(xj, self.column(j), &mut y);
            }
        }
        Ok(y)
    }

    /// `Mᵀ y`.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows,
                found: y.len(),
            });
        }
        Ok((0..self.n_cols)
            .map(|j| crate::dot(self.column(j), y))
            .collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        crate::norm2(&self.values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n_rows, self.n_cols, &self.values)
    }
}

/// Explicit factors `M P = Q T`.
#[derive(Debug, Clone)]
pub struct QrFactors {
    /// Thin `n x k` factor with orthonormal columns.
    pub q: TallMatrix,
    /// Upper-triangular `k x k` factor.
    pub t: TallMatrix,
    /// `column_permutation[j]` is the original column placed at position `j`.
    pub column_permutation: Vec<usize>,
}

/// Householder reflectors stored in place, LAPACK style.
struct HouseholderQr {
    /// Column-major `n x k`; the upper triangle holds `T`, entries below the
    /// diagonal hold reflector tails (leading entry implicitly 1).
    packed: TallMatrix,
    beta: Vec<f64>,
    perm: Vec<usize>,
}

impl HouseholderQr {
    fn factor(m: &TallMatrix) -> Result<Self> {
        let (n, k) = (m.n_rows, m.n_cols);
        if n == 0 || k == 0 {
            return Err(Error::EmptyMatrix);
        }
        if n < k {
            return Err(Error::InvalidArgument(format!(
                "QR needs n_rows >= n_cols, got {n}x{k}"
            )));
        }
        let mut a = m.clone();
        let mut perm: Vec<usize> = (0..k).collect();
        let mut beta = vec![0.0; k];

        for j in 0..k {
            // Pivot: largest remaining column norm.
            let mut best = j;
            let mut best_norm = -1.0;
            for c in j..k {
                let s: f64 = a.column(c)[j..].iter().map(|v| v * v).sum();
                if s > best_norm {
                    best_norm = s;
                    best = c;
                }
            }
            if best != j {
                for i in 0..n {
                    let tmp = a.get(i, j);
                    a.set(i, j, a.get(i, best));
                    a.set(i, best, tmp);
                }
                perm.swap(j, best);
            }

            let col = &mut a.column_mut(j)[j..];
            let norm = crate::norm2(col);
            if norm == 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let alpha = if col[0] >= 0.0 { -norm } else { norm };
            let v0 = col[0] - alpha;
            // v = [1, col[1..]/v0], beta = -v0/alpha  (so H = I - beta v vᵀ)
            for x in col[1..].iter_mut() {
                *x /= v0;
            }
            col[0] = alpha;
            beta[j] = -v0 / alpha;

            let (head, tail) = a.values.split_at_mut((j + 1) * n);
            let v_tail = &head[j * n + j + 1..(j + 1) * n];
            for c in 0..(k - j - 1) {
                let target = &mut tail[c * n + j..(c + 1) * n];
                let mut s = target[0];
                for (t, v) in target[1..].iter().zip(v_tail) {
                    s += t * v;
                }
                s *= beta[j];
                target[0] -= s;
                for (t, v) in target[1..].iter_mut().zip(v_tail) {
                    *t -= s * v;
                }
            }
        }
        Ok(Self {
            packed: a,
            beta,
            perm,
        })
    }

    fn k(&self) -> usize {
        self.packed.n_cols
    }

    /// In-place `Qᵀ y`.
    fn apply_qt(&self, y: &mut [f64]) {
        let n = self.packed.n_rows;
        for j in 0..self.k() {
            if self.beta[j] == 0.0 {
                continue;
            }
            let v_tail = &self.packed.column(j)[j + 1..n];
            let mut s = y[j];
            for (yi, v) in y[j + 1..].iter().zip(v_tail) {
                s += yi * v;
            }
            s *= self.beta[j];
            y[j] -= s;
            for (yi, v) in y[j + 1..].iter_mut().zip(v_tail) {
                *yi -= s * v;
            }
        }
    }

    /// In-place `Q y` (reflectors applied in reverse).
    fn apply_q(&self, y: &mut [f64]) {
        let n = self.packed.n_rows;
        for j in (0..self.k()).rev() {
            if self.beta[j] == 0.0 {
                continue;
            }
            let v_tail = &self.packed.column(j)[j + 1..n];
            let mut s = y[j];
            for (yi, v) in y[j + 1..].iter().zip(v_tail) {
                s += yi * v;
            }
            s *= self.beta[j];
            y[j] -= s;
            for (yi, v) in y[j + 1..].iter_mut().zip(v_tail) {
                *yi -= s * v;
            }
        }
    }

    fn t(&self) -> TallMatrix {
        let k = self.k();
        let mut t = TallMatrix::zeros(k, k);
        for j in 0..k {
            for i in 0..=j {
                t.set(i, j, self.packed.get(i, j));
            }
        }
        t
    }

    fn numerical_rank(&self) -> usize {
        let t00 = self.packed.get(0, 0).abs();
        if t00 == 0.0 {
            return 0;
        }
        (0..self.k())
            .take_while(|&j| self.packed.get(j, j).abs() >= RANK_TOLERANCE * t00)
            .count()
    }
}

/// Householder QR with column pivoting by largest remaining column norm.
pub fn qr_column_pivoting(m: &TallMatrix) -> Result<QrFactors> {
    let h = HouseholderQr::factor(m)?;
    let (n, k) = (m.n_rows, m.n_cols);
    let mut q = TallMatrix::zeros(n, k);
    for j in 0..k {
        let col = q.column_mut(j);
        col[j] = 1.0;
        h.apply_q(col);
    }
    Ok(QrFactors {
        q,
        t: h.t(),
        column_permutation: h.perm.clone(),
    })
}

/// `argmin ‖M g − rhs‖₂` via pivoted QR, rank-truncated at
/// [`RANK_TOLERANCE`] relative to `|t[0,0]|`.
pub fn least_squares_solve(m: &TallMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != m.n_rows {
        return Err(Error::DimensionMismatch {
            expected: m.n_rows,
            found: rhs.len(),
        });
    }
    let h = HouseholderQr::factor(m)?;
    let mut y = rhs.to_vec();
    h.apply_qt(&mut y);
    let rank = h.numerical_rank();
    let mut z = vec![0.0; h.k()];
    for i in (0..rank).rev() {
        let mut s = y[i];
        for j in i + 1..rank {
            s -= h.packed.get(i, j) * z[j];
        }
        z[i] = s / h.packed.get(i, i);
    }
    let mut g = vec![0.0; h.k()];
    for (j, &orig) in h.perm.iter().enumerate() {
        g[orig] = z[j];
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Breakdown("non-finite least-squares solution".into()));
    }
    Ok(g)
}

/// All singular values, descending.
pub fn singular_values(m: &TallMatrix) -> Vec<f64> {
    if m.n_rows == 0 || m.n_cols == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.to_nalgebra().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Smallest singular value of a small square (triangular) factor.
pub fn min_singular_upper_triangular(t: &TallMatrix) -> f64 {
    singular_values(t).last().copied().unwrap_or(0.0)
}

/// Largest singular value, i.e. the spectral norm.
pub fn spectral_norm(m: &TallMatrix) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, k: usize, seed: u64) -> TallMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..n * k)
            .map(|_| rng.random::<f64>() * 2.0 - 1.0)
            .collect();
        TallMatrix::from_column_major(n, k, v).unwrap()
    }

    fn reconstruct(f: &QrFactors) -> TallMatrix {
        let (n, k) = (f.q.n_rows(), f.q.n_cols());
        let mut out = TallMatrix::zeros(n, k);
        for j in 0..k {
            let qt = f.q.mul_vec(f.t.column(j)).unwrap();
            out.column_mut(f.column_permutation[j]).copy_from_slice(&qt);
        }
        out
    }

    fn orthogonality_defect(q: &TallMatrix) -> f64 {
        let k = q.n_cols();
        let mut s = 0.0;
        for a in 0..k {
            for b in 0..k {
                let d = crate::dot(q.column(a), q.column(b)) - if a == b { 1.0 } else { 0.0 };
                s += d * d;
            }
        }
        s.sqrt()
    }

    #[test]
    fn identity_qr() {
        let f = qr_column_pivoting(&TallMatrix::identity(3)).unwrap();
        assert_eq!(f.column_permutation, vec![0, 1, 2]);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((f.t.get(i, j).abs() - e).abs() < 1e-15);
                assert!((f.q.get(i, j).abs() - e).abs() < 1e-15);
            }
        }
        // Signs of Q and T agree so that Q T = I.
        let r = reconstruct(&f);
        assert_eq!(r, TallMatrix::identity(3));
    }

    #[test]
    fn rank_one_exposes_zero_diagonal() {
        let m = TallMatrix::from_columns(&[vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let f = qr_column_pivoting(&m).unwrap();
        assert!(f.t.get(1, 1).abs() <= 1e-14);
    }

    #[test]
    fn random_reconstruction_and_orthogonality() {
        let m = random(50, 5, 11);
        let f = qr_column_pivoting(&m).unwrap();
        let r = reconstruct(&f);
        let mut diff = 0.0;
        for (a, b) in r.as_slice().iter().zip(m.as_slice()) {
            diff += (a - b) * (a - b);
        }
        assert!(diff.sqrt() / m.frobenius_norm() <= 1e-13);
        assert!(orthogonality_defect(&f.q) <= 1e-12 * 5.0);
        for j in 1..5 {
            assert!(f.t.get(j, j).abs() <= f.t.get(j - 1, j - 1).abs() + 1e-14);
            for i in j + 1..5 {
                assert_eq!(f.t.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn empty_and_wide_are_rejected() {
        assert_eq!(
            qr_column_pivoting(&TallMatrix::zeros(0, 0)).unwrap_err(),
            Error::EmptyMatrix
        );
        assert!(qr_column_pivoting(&TallMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn square_solve_matches_lu_oracle() {
        let m = random(6, 6, 5);
        let rhs: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let g = least_squares_solve(&m, &rhs).unwrap();
        let lu = m
            .to_nalgebra()
            .lu()
            .solve(&nalgebra::DVector::from_vec(rhs))
            .unwrap();
        for (a, b) in g.iter().zip(lu.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn rhs_orthogonal_to_range_gives_zero() {
        let m = TallMatrix::from_columns(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let g = least_squares_solve(&m, &[0.0, 0.0, 7.0]).unwrap();
        assert!(g.iter().all(|v| v.abs() <= 1e-13));
    }

    #[test]
    fn consistent_system_recovers_coefficients() {
        let m = random(100, 3, 21);
        let rhs = m.mul_vec(&[1.0, 2.0, 3.0]).unwrap();
        let g = least_squares_solve(&m, &rhs).unwrap();
        for (a, b) in g.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn rank_deficient_solution_is_truncated() {
        let c = vec![1.0, 2.0, 3.0, 4.0];
        let m = TallMatrix::from_columns(&[c.clone(), c.clone()]).unwrap();
        let rhs = vec![1.0, 2.0, 3.0, 4.0];
        let g = least_squares_solve(&m, &rhs).unwrap();
        assert!(g.iter().all(|v| v.is_finite()));
        let fit = m.mul_vec(&g).unwrap();
        for (a, b) in fit.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(g.iter().filter(|v| **v == 0.0).count() == 1);
    }

    #[test]
    fn solve_dimension_mismatch() {
        assert!(matches!(
            least_squares_solve(&TallMatrix::identity(2), &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn min_singular_examples() {
        let mut t = TallMatrix::zeros(3, 3);
        t.set(0, 0, 3.0);
        t.set(1, 1, 1.0);
        t.set(2, 2, 2.0);
        assert!((min_singular_upper_triangular(&t) - 1.0).abs() < 1e-15);
        assert!((min_singular_upper_triangular(&TallMatrix::identity(5)) - 1.0).abs() < 1e-14);

        // 2x2 closed form: sigma_min^2 is the smaller eigenvalue of TᵀT.
        let t = TallMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1e-8]]).unwrap();
        let (a, b, d) = (1.0f64, 1.0f64, 1e-8f64);
        // TᵀT = [[a², ab], [ab, b² + d²]]
        let tr = a * a + b * b + d * d;
        let det = (a * d) * (a * d);
        let lam_min = det / (0.5 * (tr + (tr * tr - 4.0 * det).sqrt()));
        let oracle = lam_min.sqrt();
        let s = min_singular_upper_triangular(&t);
        assert!((s - oracle).abs() <= 1e-10 * oracle, "{s} vs {oracle}");
    }
}
