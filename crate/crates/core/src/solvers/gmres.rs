use super::{IterationRecord, IterationTrace, Solution, SolveStatus};
use crate::error::{Error, Result};
use crate::precond::Preconditioner;
use crate::sparse::SparseMatrix;
use crate::{axpy, dot, norm2};
use std::time::Instant;

/// Restarted GMRES(`restart`), left-preconditioned when `precond` is given.
///
/// Arnoldi uses modified Gram-Schmidt and the Hessenberg least squares is
/// updated with Givens rotations. The stopping test is on the
/// (preconditioned) relative residual; `max_iter` counts Arnoldi steps.
pub fn gmres_solve(
    a: &SparseMatrix,
    b: &[f64],
    precond: Option<&Preconditioner>,
    restart: usize,
    tol: f64,
    max_iter: usize,
) -> Result<Solution> {
    if !a.is_square() {
        return Err(Error::InvalidArgument("GMRES needs a square matrix".into()));
    }
    let n = a.n_rows();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    if restart == 0 || !(tol > 0.0) {
        return Err(Error::InvalidArgument(
            "GMRES needs restart >= 1 and tol > 0".into(),
        ));
    }
    let start = Instant::now();
    let apply_m = |v: Vec<f64>| -> Result<Vec<f64>> {
        match precond {
            Some(p) => p.apply(&v),
            None => Ok(v),
        }
    };
    let residual = |x: &[f64]| -> Result<Vec<f64>> { apply_m(crate::sparse::residual(a, b, x)?) };

    let mut trace = IterationTrace::new();
    let mut x = vec![0.0; n];
    let r = residual(&x)?;
    trace.evaluations += 1;
    let r0 = norm2(&r);
    trace.initial_residual_norm = r0;
    let push = |trace: &mut IterationTrace, iteration, norm| {
        trace.records.push(IterationRecord {
            iteration,
            residual_norm: norm,
            anderson: false,
            reduced_dimension: 0,
            rollback: false,
            elapsed_s: start.elapsed().as_secs_f64(),
        })
    };
    push(&mut trace, 0, r0);
    if r0 == 0.0 {
        trace.status = SolveStatus::Converged;
        trace.total_time_s = start.elapsed().as_secs_f64();
        return Ok(Solution { x, trace });
    }

    let m = restart.min(n);
    let mut its = 0;
    let mut r = r;
    let mut beta = r0;
    'outer: loop {
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|x| x / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut gvec = vec![0.0; m + 1];
        gvec[0] = beta;
        let mut j_done = 0;
        let mut stop = false;
        for j in 0..m {
            let mut w = apply_m(a.matvec_into_vec(&v[j])?)?;
            trace.evaluations += 1;
            for (i, vi) in v.iter().enumerate() {
                h[i][j] = dot(&w, vi);
                axpy(-h[i][j], vi, &mut w);
            }
            h[j + 1][j] = norm2(&w);
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let denom = h[j][j].hypot(h[j + 1][j]);
            if denom == 0.0 {
                stop = true;
                break;
            }
            cs[j] = h[j][j] / denom;
            sn[j] = h[j + 1][j] / denom;
            let happy = h[j + 1][j] == 0.0;
            h[j][j] = denom;
            h[j + 1][j] = 0.0;
            gvec[j + 1] = -sn[j] * gvec[j];
            gvec[j] *= cs[j];
            its += 1;
            j_done = j + 1;
            let est = gvec[j + 1].abs();
            push(&mut trace, its, est);
            if est / r0 <= tol || happy || its >= max_iter {
                stop = true;
                break;
            }
            let norm_w = norm2(&w);
            v.push(w.iter().map(|x| x / norm_w).collect());
        }
        // y = H⁻¹ g on the leading j_done block
        let mut y = vec![0.0; j_done];
        for i in (0..j_done).rev() {
            let mut s = gvec[i];
            for k in i + 1..j_done {
                s -= h[i][k] * y[k];
            }
            y[i] = s / h[i][i];
        }
        for (yi, vi) in y.iter().zip(&v) {
            axpy(*yi, vi, &mut x);
        }
        r = residual(&x)?;
        beta = norm2(&r);
        if let Some(last) = trace.records.last_mut() {
            last.residual_norm = beta;
        }
        if !beta.is_finite() || x.iter().any(|v| !v.is_finite()) {
            trace.status = SolveStatus::Breakdown;
            trace.breakdown_reason = Some("non-finite GMRES iterate".into());
            break 'outer;
        }
        if beta / r0 <= tol {
            trace.status = SolveStatus::Converged;
            break;
        }
        if its >= max_iter {
            trace.status = SolveStatus::MaxIter;
            break;
        }
        if stop && j_done == 0 {
            trace.status = SolveStatus::Breakdown;
            trace.breakdown_reason = Some("GMRES stagnation".into());
            break;
        }
    }
    trace.total_time_s = start.elapsed().as_secs_f64();
    Ok(Solution { x, trace })
}

trait MatvecVec {
    fn matvec_into_vec(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl MatvecVec for SparseMatrix {
    fn matvec_into_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n_rows()];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }
}
