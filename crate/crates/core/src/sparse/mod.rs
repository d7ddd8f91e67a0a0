//! Compressed sparse row storage and the kernels the solvers consume.

mod market;

pub use market::{parse_matrix_market, read_matrix_market, write_matrix_market};

use crate::error::{Error, Result};
use rand::Rng as _;

/// Real CSR matrix.
///
/// Column indices are strictly increasing within each row and no explicit
/// duplicates are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, validating every structural invariant.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::DimensionMismatch {
                expected: n_rows + 1,
                found: row_offsets.len(),
            });
        }
        if col_indices.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: col_indices.len(),
                found: values.len(),
            });
        }
        if row_offsets[0] != 0 || row_offsets[n_rows] != col_indices.len() {
            return Err(Error::InvalidArgument(
                "row offsets do not span the entries".into(),
            ));
        }
        for i in 0..n_rows {
            let (lo, hi) = (row_offsets[i], row_offsets[i + 1]);
            if lo > hi {
                return Err(Error::InvalidArgument(format!(
                    "row offsets decrease at row {i}"
                )));
            }
            for w in col_indices[lo..hi].windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::InvalidArgument(format!(
                        "column indices not strictly increasing in row {i}"
                    )));
                }
            }
            if let Some(&last) = col_indices[lo..hi].last() {
                if last >= n_cols {
                    return Err(Error::InvalidArgument(format!(
                        "column index {last} out of bounds in row {i}"
                    )));
                }
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Assembles from coordinate triplets; duplicates are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut counts = vec![0usize; n_rows + 1];
        for &(i, j, _) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::InvalidArgument(format!(
                    "entry ({i}, {j}) outside {n_rows}x{n_cols}"
                )));
            }
            counts[i + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            cols[next[i]] = j;
            vals[next[i]] = v;
            next[i] += 1;
        }

        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_offsets.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..n_rows {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|p| (cols[p], vals[p])));
            scratch.sort_by_key(|&(j, _)| j);
            for &(j, v) in &scratch {
                if col_indices.len() > row_offsets[i] && *col_indices.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    /// Dense row-major input; exact zeros are not stored.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n_rows, n_cols, &triplets)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterator over `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        self.col_indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    /// Stored value at `(i, j)`, zero when absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        match self.col_indices[lo..hi].binary_search(&j) {
            Ok(p) => self.values[lo + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &j in &self.col_indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                cols[next[j]] = i;
                vals[next[j]] = v;
                next[j] += 1;
            }
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets: counts,
            col_indices: cols,
            values: vals,
        }
    }

    /// Symmetric permutation `P A Pᵀ` where new index `i` is old index `perm[i]`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> Result<Self> {
        if !self.is_square() || perm.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows,
                found: perm.len(),
            });
        }
        let mut inverse = vec![usize::MAX; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            if old >= perm.len() || inverse[old] != usize::MAX {
                return Err(Error::InvalidArgument(
                    "permutation is not a bijection".into(),
                ));
            }
            inverse[old] = new;
        }
        let mut triplets = Vec::with_capacity(self.nnz());
        for (new_i, &old_i) in perm.iter().enumerate() {
            for (old_j, v) in self.row(old_i) {
                triplets.push((new_i, inverse[old_j], v));
            }
        }
        Self::from_triplets(self.n_rows, self.n_cols, &triplets)
    }

    /// Scales row `i` by `factors[i]`.
    pub fn scale_rows(&self, factors: &[f64]) -> Result<Self> {
        check_len(self.n_rows, factors.len())?;
        let mut out = self.clone();
        for i in 0..self.n_rows {
            for p in self.row_offsets[i]..self.row_offsets[i + 1] {
                out.values[p] *= factors[i];
            }
        }
        Ok(out)
    }

    /// Half-bandwidth `max |i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n_rows)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `y = A x` written into `y`.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        check_len(self.n_cols, x.len())?;
        check_len(self.n_rows, y.len())?;
        for (i, yi) in y.iter_mut().enumerate() {
            let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
            let mut acc = 0.0;
            for p in lo..hi {
                acc += self.values[p] * x[self.col_indices[p]];
            }
            *yi = acc;
        }
        Ok(())
    }

    /// `y = Aᵀ x`.
    pub fn matvec_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_rows, x.len())?;
        let mut y = vec![0.0; self.n_cols];
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
        Ok(y)
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// `A x`.
pub fn matvec(a: &SparseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    let mut y = vec![0.0; a.n_rows];
    a.matvec_into(x, &mut y)?;
    Ok(y)
}

/// `b - A x`.
pub fn residual(a: &SparseMatrix, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_len(a.n_rows, b.len())?;
    let mut r = matvec(a, x)?;
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    Ok(r)
}

/// Power iteration on `AᵀA` from a seeded start; returns `sqrt` of the
/// final Rayleigh quotient. Zero matrix gives zero.
pub fn estimate_two_norm(a: &SparseMatrix, power_iters: usize, seed: u64) -> Result<f64> {
    if power_iters == 0 {
        return Err(Error::InvalidArgument(
            "power_iters must be at least 1".into(),
        ));
    }
    if a.nnz() == 0 || a.values.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let mut rng = crate::rng::stream(seed, "two-norm");
    let mut v: Vec<f64> = (0..a.n_cols).map(|_| rng.random::<f64>() - 0.5).collect();
    normalize(&mut v);
    let mut estimate = 0.0;
    for _ in 0..power_iters {
        let av = matvec(a, &v)?;
        let w = a.matvec_transpose(&av)?;
        let rayleigh = crate::dot(&v, &w);
        estimate = rayleigh.max(0.0).sqrt();
        v = w;
        if normalize(&mut v) == 0.0 {
            break;
        }
    }
    Ok(estimate)
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = crate::norm2(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn dense_matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn diag_case() -> SparseMatrix {
        let mut d = vec![1e-4];
        d.extend((2..=100).map(f64::from));
        SparseMatrix::from_diagonal(&d)
    }

    #[test]
    fn identity_matvec() {
        let y = matvec(&SparseMatrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn diagonal_matvec_first_unit_vector() {
        let a = diag_case();
        let mut e1 = vec![0.0; 100];
        e1[0] = 1.0;
        let y = matvec(&a, &e1).unwrap();
        assert_eq!(y[0], 1e-4);
        assert!(y[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_matvec_matches_dense() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let dense: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                (0..5)
                    .map(|_| {
                        if rng.random::<f64>() < 0.5 {
                            rng.random::<f64>() * 2.0 - 1.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let x: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
        let a = SparseMatrix::from_dense(&dense).unwrap();
        let y = matvec(&a, &x).unwrap();
        let oracle = dense_matvec(&dense, &x);
        let scale = crate::norm2(&oracle).max(1e-300);
        for (u, v) in y.iter().zip(&oracle) {
            assert!((u - v).abs() <= 1e-14 * scale);
        }
    }

    #[test]
    fn matvec_dimension_mismatch() {
        assert!(matches!(
            matvec(&SparseMatrix::identity(3), &[1.0]),
            Err(Error::DimensionMismatch {
                expected: 3,
                found: 1
            })
        ));
    }

    #[test]
    fn residual_cases() {
        let dense = vec![
            vec![4.0, -1.0, 0.0],
            vec![-1.0, 4.0, -1.0],
            vec![0.0, -1.0, 4.0],
        ];
        let a = SparseMatrix::from_dense(&dense).unwrap();
        let xs = [1.0, 2.0, 3.0];
        let b = dense_matvec(&dense, &xs);
        assert!(residual(&a, &b, &xs).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(residual(&a, &b, &[0.0; 3]).unwrap(), b);

        let perturbed = [2.0, 2.0, 3.0];
        let r = residual(&a, &b, &perturbed).unwrap();
        let minus_ae1: Vec<f64> = dense.iter().map(|row| -row[0]).collect();
        for (u, v) in r.iter().zip(&minus_ae1) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn two_norm_estimates() {
        let est = estimate_two_norm(&diag_case(), 50, 1).unwrap();
        assert!((est - 100.0).abs() <= 1.0, "{est}");

        assert_eq!(
            estimate_two_norm(&SparseMatrix::identity(10), 1, 9).unwrap(),
            1.0
        );

        let jordan = SparseMatrix::from_dense(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let est = estimate_two_norm(&jordan, 50, 2).unwrap();
        assert!((est - 1.0).abs() < 1e-6);

        let zero = SparseMatrix::from_triplets(3, 3, &[]).unwrap();
        assert_eq!(estimate_two_norm(&zero, 5, 0).unwrap(), 0.0);
        assert!(estimate_two_norm(&zero, 0, 0).is_err());
    }

    #[test]
    fn two_norm_is_monotone_in_iterations() {
        let a = SparseMatrix::from_dense(&[
            vec![3.0, 1.0, 0.0],
            vec![1.0, 2.0, 1.0],
            vec![0.5, 1.0, 1.0],
        ])
        .unwrap();
        let mut prev = 0.0;
        for it in 1..30 {
            let est = estimate_two_norm(&a, it, 4).unwrap();
            assert!(est >= prev - 1e-12);
            assert!(est <= a.frobenius_norm() + 1e-12);
            prev = est;
        }
    }

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let a =
            SparseMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 0.5)]).unwrap();
        assert_eq!(a.col_indices(), &[0, 2]);
        assert_eq!(a.values(), &[2.0, 1.5]);
        assert_eq!(a.row_offsets(), &[0, 2, 2]);
    }

    #[test]
    fn from_csr_rejects_unsorted_columns() {
        assert!(SparseMatrix::from_csr(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrix::from_csr(1, 3, vec![0, 1], vec![3], vec![1.0]).is_err());
    }

    #[test]
    fn permutation_round_trip() {
        let a = SparseMatrix::from_dense(&[
            vec![1.0, 2.0, 0.0],
            vec![0.0, 3.0, 4.0],
            vec![5.0, 0.0, 6.0],
        ])
        .unwrap();
        let p = [2, 0, 1];
        let pa = a.permute_symmetric(&p).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(pa.get(i, j), a.get(p[i], p[j]));
            }
        }
        assert!(a.permute_symmetric(&[0, 0, 1]).is_err());
    }
}
