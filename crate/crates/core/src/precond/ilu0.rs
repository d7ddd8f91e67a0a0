use super::Preconditioner;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Zero fill-in incomplete LU: IKJ elimination restricted to the pattern of `a`.
///
/// Fails on a missing structural diagonal or a zero pivot; callers may
/// reorder or scale and retry.
pub fn ilu0(a: &SparseMatrix) -> Result<Preconditioner> {
    if !a.is_square() {
        return Err(Error::InvalidArgument(
            "ILU(0) needs a square matrix".into(),
        ));
    }
    let n = a.n_rows();
    let offsets = a.row_offsets();
    let cols = a.col_indices();
    let mut lu = a.values().to_vec();

    let mut diag_pos = vec![0usize; n];
    for i in 0..n {
        diag_pos[i] = offsets[i]
            + cols[offsets[i]..offsets[i + 1]]
                .binary_search(&i)
                .map_err(|_| Error::MissingDiagonal { row: i })?;
    }

    // position of column j in the current row, usize::MAX when absent
    let mut where_in_row = vec![usize::MAX; n];
    for i in 0..n {
        let (lo, hi) = (offsets[i], offsets[i + 1]);
        for p in lo..hi {
            where_in_row[cols[p]] = p;
        }
        for p in lo..diag_pos[i] {
            let k = cols[p];
            let pivot = lu[diag_pos[k]];
            let factor = lu[p] / pivot;
            lu[p] = factor;
            for q in diag_pos[k] + 1..offsets[k + 1] {
                let target = where_in_row[cols[q]];
                if target != usize::MAX {
                    lu[target] -= factor * lu[q];
                }
            }
        }
        for p in lo..hi {
            where_in_row[cols[p]] = usize::MAX;
        }
        if lu[diag_pos[i]] == 0.0 || !lu[diag_pos[i]].is_finite() {
            return Err(Error::ZeroPivot { row: i });
        }
    }

    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for i in 0..n {
        for p in offsets[i]..offsets[i + 1] {
            let j = cols[p];
            if j < i {
                lower.push((i, j, lu[p]));
            } else {
                upper.push((i, j, lu[p]));
            }
        }
        lower.push((i, i, 1.0));
    }
    Ok(Preconditioner::from_factors(
        SparseMatrix::from_triplets(n, n, &lower)?,
        SparseMatrix::from_triplets(n, n, &upper)?,
        None,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(l: &[Vec<f64>], u: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = l.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| l[i][k] * u[k][j]).sum())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn identity_factors() {
        let pc = ilu0(&SparseMatrix::identity(4)).unwrap();
        assert_eq!(pc.lower(), &SparseMatrix::identity(4));
        assert_eq!(pc.upper(), &SparseMatrix::identity(4));
    }

    #[test]
    fn reproduces_factors_sharing_the_pattern() {
        // L and U bidiagonal: their product is tridiagonal, no fill outside.
        let l = vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.5, 1.0, 0.0, 0.0],
            vec![0.0, -0.25, 1.0, 0.0],
            vec![0.0, 0.0, 2.0, 1.0],
        ];
        let u = vec![
            vec![2.0, 1.0, 0.0, 0.0],
            vec![0.0, 3.0, -1.0, 0.0],
            vec![0.0, 0.0, 4.0, 0.5],
            vec![0.0, 0.0, 0.0, 1.5],
        ];
        let a = SparseMatrix::from_dense(&dense_mul(&l, &u)).unwrap();
        let pc = ilu0(&a).unwrap();
        let gl = pc.lower().to_dense();
        let gu = pc.upper().to_dense();
        for i in 0..4 {
            for j in 0..4 {
                assert!((gl[i][j] - l[i][j]).abs() <= 1e-13);
                assert!((gu[i][j] - u[i][j]).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn tridiagonal_matches_dense_lu_restricted_to_pattern() {
        let n = 8;
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            dense[i][i] = 4.0;
            if i > 0 {
                dense[i][i - 1] = -1.0;
                dense[i - 1][i] = -1.0;
            }
        }
        // Dense Doolittle LU without pivoting; a tridiagonal SPD matrix produces
        // no fill, so zeroing the fill changes nothing.
        let mut l = vec![vec![0.0; n]; n];
        let mut u = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                u[i][j] = dense[i][j] - (0..i).map(|k| l[i][k] * u[k][j]).sum::<f64>();
            }
            l[i][i] = 1.0;
            for j in i + 1..n {
                l[j][i] = (dense[j][i] - (0..i).map(|k| l[j][k] * u[k][i]).sum::<f64>()) / u[i][i];
            }
        }
        let pc = ilu0(&SparseMatrix::from_dense(&dense).unwrap()).unwrap();
        let (gl, gu) = (pc.lower().to_dense(), pc.upper().to_dense());
        for i in 0..n {
            for j in 0..n {
                let in_pattern = dense[i][j] != 0.0 || i == j;
                let (el, eu) = if in_pattern {
                    (l[i][j], u[i][j])
                } else {
                    (0.0, 0.0)
                };
                assert!((gl[i][j] - el).abs() <= 1e-13);
                assert!((gu[i][j] - eu).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn missing_diagonal_and_zero_pivot() {
        let a = SparseMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(ilu0(&a).unwrap_err(), Error::MissingDiagonal { row: 0 });

        let a = SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)],
        )
        .unwrap();
        assert_eq!(ilu0(&a).unwrap_err(), Error::ZeroPivot { row: 1 });
    }
}
