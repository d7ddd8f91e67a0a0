//! Left preconditioning: reordering, diagonal scaling and incomplete LU.
//!
//! The preconditioned operator is never formed. Solvers call
//! [`Preconditioner::apply`] on each residual, realising `M⁻¹ v`.

mod ilu0;
mod ilut;
mod rcm;

pub use ilu0::ilu0;
pub use ilut::ilut;
pub use rcm::rcm_ordering;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Incomplete factors plus the permutations and scaling wrapped around them.
///
/// `apply` computes, in order: divide by `row_scaling`, gather through
/// `row_permutation` (`y[i] = v[row_permutation[i]]`), solve `L`, solve `U`,
/// scatter through `col_permutation` (`x[col_permutation[i]] = z[i]`).
#[derive(Debug, Clone)]
pub struct Preconditioner {
    lower: SparseMatrix,
    upper: SparseMatrix,
    row_permutation: Option<Vec<usize>>,
    col_permutation: Option<Vec<usize>>,
    row_scaling: Option<Vec<f64>>,
}

impl Preconditioner {
    pub(crate) fn from_factors(
        lower: SparseMatrix,
        upper: SparseMatrix,
        col_permutation: Option<Vec<usize>>,
    ) -> Self {
        Self {
            lower,
            upper,
            row_permutation: None,
            col_permutation,
            row_scaling: None,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_factors(SparseMatrix::identity(n), SparseMatrix::identity(n), None)
    }

    pub fn dim(&self) -> usize {
        self.lower.n_rows()
    }

    /// Unit lower-triangular factor, diagonal stored explicitly.
    pub fn lower(&self) -> &SparseMatrix {
        &self.lower
    }

    pub fn upper(&self) -> &SparseMatrix {
        &self.upper
    }

    pub fn row_permutation(&self) -> Option<&[usize]> {
        self.row_permutation.as_deref()
    }

    pub fn col_permutation(&self) -> Option<&[usize]> {
        self.col_permutation.as_deref()
    }

    pub fn row_scaling(&self) -> Option<&[f64]> {
        self.row_scaling.as_deref()
    }

    /// Wraps the factors of `P A Pᵀ` so that `apply` acts on the original ordering.
    fn with_symmetric_permutation(mut self, perm: Vec<usize>) -> Self {
        self.col_permutation = Some(match self.col_permutation.take() {
            Some(q) => q.iter().map(|&j| perm[j]).collect(),
            None => perm.clone(),
        });
        self.row_permutation = Some(perm);
        self
    }

    fn with_row_scaling(mut self, d: Vec<f64>) -> Self {
        self.row_scaling = Some(d);
        self
    }

    /// `M⁻¹ v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: v.len(),
            });
        }
        let mut y: Vec<f64> = match &self.row_scaling {
            Some(d) => v.iter().zip(d).map(|(a, b)| a / b).collect(),
            None => v.to_vec(),
        };
        if let Some(p) = &self.row_permutation {
            y = p.iter().map(|&i| y[i]).collect();
        }
        // L y = v, unit diagonal.
        for i in 0..n {
            let mut s = y[i];
            for (j, l) in self.lower.row(i) {
                if j < i {
                    s -= l * y[j];
                }
            }
            y[i] = s;
        }
        // U z = y.
        for i in (0..n).rev() {
            let mut s = y[i];
            let mut diag = 0.0;
            for (j, u) in self.upper.row(i) {
                if j > i {
                    s -= u * y[j];
                } else if j == i {
                    diag = u;
                }
            }
            y[i] = s / diag;
        }
        Ok(match &self.col_permutation {
            Some(q) => {
                let mut x = vec![0.0; n];
                for (k, &j) in q.iter().enumerate() {
                    x[j] = y[k];
                }
                x
            }
            None => y,
        })
    }
}

/// Returns `(D, D⁻¹A)` with `D = diag(A)`; zero diagonal entries are set to one.
pub fn diagonal_scaling(a: &SparseMatrix) -> Result<(Vec<f64>, SparseMatrix)> {
    if !a.is_square() {
        return Err(Error::InvalidArgument(
            "diagonal scaling needs a square matrix".into(),
        ));
    }
    let d: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|v| if v == 0.0 { 1.0 } else { v })
        .collect();
    let inv: Vec<f64> = d.iter().map(|v| 1.0 / v).collect();
    let scaled = a.scale_rows(&inv)?;
    Ok((d, scaled))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrecondKind {
    None,
    Ilu0,
    Ilut { tau: f64 },
}

impl std::str::FromStr for PrecondKind {
    type Err = Error;

    /// Accepts `none`, `ilu0` and `ilut` (with the default drop tolerance).
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "ilu0" => Ok(Self::Ilu0),
            "ilut" => Ok(Self::Ilut { tau: 1e-4 }),
            other => Err(Error::InvalidArgument(format!(
                "unknown preconditioner `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for PrecondKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::None => write!(f, "none"),
            Self::Ilu0 => write!(f, "ilu0"),
            Self::Ilut { tau } => write!(f, "ilut({tau:e})"),
        }
    }
}

/// Which steps of the preconditioning pipeline to run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecondSpec {
    pub kind: PrecondKind,
    pub rcm: bool,
    pub diagonal_scaling: bool,
}

impl PrecondSpec {
    pub fn new(kind: PrecondKind) -> Self {
        Self {
            kind,
            rcm: false,
            diagonal_scaling: false,
        }
    }
}

/// Scaling, then RCM, then the incomplete factorization.
pub fn build_preconditioner(a: &SparseMatrix, spec: &PrecondSpec) -> Result<Preconditioner> {
    if !a.is_square() {
        return Err(Error::InvalidArgument(
            "preconditioner needs a square matrix".into(),
        ));
    }
    let (scaling, scaled) = if spec.diagonal_scaling {
        let (d, s) = diagonal_scaling(a)?;
        (Some(d), s)
    } else {
        (None, a.clone())
    };
    let (perm, work) = if spec.rcm {
        let p = rcm_ordering(&scaled)?;
        let w = scaled.permute_symmetric(&p)?;
        (Some(p), w)
    } else {
        (None, scaled)
    };
    let mut pc = match spec.kind {
        PrecondKind::None => Preconditioner::identity(a.n_rows()),
        PrecondKind::Ilu0 => ilu0(&work)?,
        PrecondKind::Ilut { tau } => ilut(&work, tau)?,
    };
    if let Some(p) = perm {
        pc = pc.with_symmetric_permutation(p);
    }
    if let Some(d) = scaling {
        pc = pc.with_row_scaling(d);
    }
    Ok(pc)
}
