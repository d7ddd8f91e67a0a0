//! Noise injection into the mixing least squares, and desk checks of the
//! backward-error bounds.
//!
//! The lab runs AA with full history (`p = 1`, `ω = 1`) on
//! `A = diag(1e-4, 2, 3, …, 100)` and replaces each mixing problem by
//! `min ‖(R_k + ε_k ‖R_k‖₂ Ê_k) g − r^k‖` with Gaussian `Ê_k`,
//! `‖Ê_k‖₂ = 1`, and `ε_k = (ε/k*) σ_min(T_k) / (‖r^k‖ ‖x^k − x^{k−1}‖)`.

use crate::densela::{
    least_squares_solve, min_singular_upper_triangular, qr_column_pivoting, spectral_norm,
    TallMatrix,
};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::solvers::{Aar, LinearProblem, LsRequest, Mode, SolveConfig, SolveStatus};
use crate::sparse::SparseMatrix;
use crate::{norm2, parallel};
use rand_distr::{Distribution, StandardNormal};
use std::cell::RefCell;
use std::io::Write;

/// The sweep used for the noise experiment.
pub const DEFAULT_EPSILONS: [f64; 4] = [1e-8, 1e-6, 1e-4, 1.0];

/// `A = diag(1e-4, 2, 3, …, 100)` and `b = A·1`.
pub fn diag_testcase() -> (SparseMatrix, Vec<f64>) {
    let d: Vec<f64> = std::iter::once(1e-4)
        .chain((2..=100).map(f64::from))
        .collect();
    let b = d.clone();
    (SparseMatrix::from_diagonal(&d), b)
}

/// `ε_k = (ε / k*) · σ_min(T_k) / (‖r^k‖ · ‖Δx^k‖)`.
pub fn epsilon_k(
    eps: f64,
    k_star: usize,
    sigma_min: f64,
    r_norm: f64,
    dx_norm: f64,
) -> Result<f64> {
    if r_norm <= 0.0 || dx_norm <= 0.0 {
        return Err(Error::Stagnation);
    }
    if k_star == 0 || eps < 0.0 || sigma_min < 0.0 {
        return Err(Error::InvalidArgument(
            "epsilon_k needs k* >= 1 and nonnegative eps, sigma".into(),
        ));
    }
    Ok(eps / k_star as f64 * sigma_min / (r_norm * dx_norm))
}

/// Gaussian matrix with the shape of `like`, scaled to unit spectral norm.
pub fn unit_gaussian(n_rows: usize, n_cols: usize, rng: &mut Rng) -> TallMatrix {
    let values: Vec<f64> = (0..n_rows * n_cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    let mut e = TallMatrix::from_column_major(n_rows, n_cols, values).expect("shape matches");
    let s = spectral_norm(&e);
    if s > 0.0 {
        for j in 0..n_cols {
            for v in e.column_mut(j) {
                *v /= s;
            }
        }
    }
    e
}

/// Solves `min ‖(R + E) g − r‖` with `E = ε_k ‖R‖₂ Ê`; returns `g` and `E`.
///
/// `Ê` is drawn even when `eps_k = 0`, so streams advance identically.
pub fn perturbed_ls_solve(
    r_mat: &TallMatrix,
    r: &[f64],
    eps_k: f64,
    rng: &mut Rng,
) -> Result<(Vec<f64>, TallMatrix)> {
    if !(eps_k >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps_k must be >= 0, got {eps_k}"
        )));
    }
    let (n, k) = (r_mat.n_rows(), r_mat.n_cols());
    let mut e = unit_gaussian(n, k, rng);
    let scale = if eps_k == 0.0 {
        0.0
    } else {
        eps_k * spectral_norm(r_mat)
    };
    let mut perturbed = r_mat.clone();
    for j in 0..k {
        for (ev, pv) in e.column_mut(j).iter_mut().zip(perturbed.column_mut(j)) {
            *ev *= scale;
            *pv += *ev;
        }
    }
    let g = least_squares_solve(&perturbed, r)?;
    Ok((g, e))
}

/// `δ = ‖𝓔 g‖₂`.
pub fn backward_error_delta(e_columns: &TallMatrix, g: &[f64]) -> Result<f64> {
    Ok(norm2(&e_columns.mul_vec(g)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule {
    pub epsilon: f64,
    pub k_star: usize,
    pub seed: u64,
}

/// One evaluated iterate of a sweep entry. The last three fields are zero
/// where no Anderson step was taken.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub iteration: usize,
    pub residual_norm: f64,
    pub epsilon_k: f64,
    pub delta_k: f64,
    pub sigma_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub relative_residual: f64,
    pub records: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardErrorReport {
    pub entries: Vec<SweepEntry>,
}

impl BackwardErrorReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "epsilon,iteration,residual_norm,epsilon_k,delta_k,sigma_min"
        )?;
        for e in &self.entries {
            for r in &e.records {
                writeln!(
                    w,
                    "{:e},{},{:e},{:e},{:e},{:e}",
                    e.epsilon, r.iteration, r.residual_norm, r.epsilon_k, r.delta_k, r.sigma_min
                )?;
            }
        }
        Ok(())
    }
}

/// AA with full history, `ω = 1`, tolerance 1e-8 and at most 500 iterations.
pub fn noise_lab_config() -> SolveConfig {
    SolveConfig {
        omega: 1.0,
        p: 1,
        m: 500,
        tol: 1e-8,
        max_iter: 500,
        mode: Mode::Aa,
    }
}

/// One run of the lab on the diagonal test case.
pub fn run_noise_entry(schedule: &NoiseSchedule, config: &SolveConfig) -> Result<SweepEntry> {
    let (a, b) = diag_testcase();
    let problem = LinearProblem::new(&a, &b, None)?;
    let mut rng = rng::stream(schedule.seed, "noise-matrix");
    let steps: RefCell<Vec<(usize, f64, f64, f64)>> = RefCell::new(Vec::new());
    let eps = schedule.epsilon;
    let k_star = schedule.k_star;
    let hook = |req: &LsRequest<'_>| -> Result<Vec<f64>> {
        let sigma = min_singular_upper_triangular(&qr_column_pivoting(req.matrix)?.t);
        let ek = if eps == 0.0 {
            0.0
        } else {
            epsilon_k(eps, k_star, sigma, req.r_norm, req.dx_norm).unwrap_or(0.0)
        };
        let (g, e) = perturbed_ls_solve(req.matrix, req.rhs, ek, &mut rng)?;
        let delta = backward_error_delta(&e, &g)?;
        steps.borrow_mut().push((req.iteration, ek, delta, sigma));
        Ok(g)
    };
    let sol = {
        let mut aar = Aar::new(config.clone()).with_ls_hook(Box::new(hook));
        aar.solve(&problem, None)?
    };
    let steps = steps.into_inner();
    let mut j = 0;
    let records = sol
        .trace
        .records
        .iter()
        .map(|r| {
            let mut rec = StepRecord {
                iteration: r.iteration,
                residual_norm: r.residual_norm,
                epsilon_k: 0.0,
                delta_k: 0.0,
                sigma_min: 0.0,
            };
            if j < steps.len() && steps[j].0 == r.iteration {
                (rec.epsilon_k, rec.delta_k, rec.sigma_min) = (steps[j].1, steps[j].2, steps[j].3);
                j += 1;
            }
            rec
        })
        .collect();
    Ok(SweepEntry {
        epsilon: eps,
        status: sol.trace.status,
        iterations: sol.trace.iterations(),
        relative_residual: sol.trace.relative_residual(),
        records,
    })
}

/// Runs the unperturbed baseline (`ε = 0`) followed by every distinct
/// positive `ε`. All entries share the seed, hence the same `Ê_k` draws.
pub fn run_noise_sweep(
    eps_values: &[f64],
    config: &SolveConfig,
    seed: u64,
    k_star: usize,
    jobs: usize,
) -> Result<BackwardErrorReport> {
    if eps_values.is_empty() {
        return Err(Error::InvalidArgument("empty epsilon sweep".into()));
    }
    if eps_values.iter().any(|e| !(*e >= 0.0)) {
        return Err(Error::InvalidArgument("epsilon values must be >= 0".into()));
    }
    let mut values = vec![0.0];
    for &e in eps_values {
        if !values.contains(&e) {
            values.push(e);
        }
    }
    let entries = parallel::map(&values, jobs, |&epsilon| {
        run_noise_entry(
            &NoiseSchedule {
                epsilon,
                k_star,
                seed,
            },
            config,
        )
    });
    Ok(BackwardErrorReport {
        entries: entries.into_iter().collect::<Result<_>>()?,
    })
}

/// Outcome of one randomized check of a backward-error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeskCheck {
    pub n: usize,
    pub k: usize,
    pub measured: f64,
    pub bound: f64,
}

impl DeskCheck {
    pub fn holds(&self) -> bool {
        self.measured <= self.bound
    }
}

/// State of Full AAR on a dense linear system after `k` iterations.
struct Snapshot {
    x: Vec<f64>,
    r: Vec<f64>,
    x_diffs: Vec<Vec<f64>>,
    r_diffs: Vec<Vec<f64>>,
}

fn dense_matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| crate::dot(row, x)).collect()
}

fn dense_residual(a: &[Vec<f64>], b: &[f64], x: &[f64]) -> Vec<f64> {
    dense_matvec(a, x)
        .iter()
        .zip(b)
        .map(|(ax, bi)| bi - ax)
        .collect()
}

/// Runs Full AAR (all differences kept, exact least squares) for `k` iterations.
fn full_aar(a: &[Vec<f64>], b: &[f64], omega: f64, p: usize, k: usize) -> Result<Snapshot> {
    let n = b.len();
    let mut x_prev = vec![0.0; n];
    let mut r_prev = dense_residual(a, b, &x_prev);
    let mut x: Vec<f64> = x_prev.iter().zip(&r_prev).map(|(x, r)| x + r).collect();
    let mut x_diffs = Vec::new();
    let mut r_diffs = Vec::new();
    for j in 1..=k {
        let r = dense_residual(a, b, &x);
        x_diffs.push(
            x.iter()
                .zip(&x_prev)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        r_diffs.push(
            r.iter()
                .zip(&r_prev)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        if j == k {
            return Ok(Snapshot {
                x,
                r,
                x_diffs,
                r_diffs,
            });
        }
        let next: Vec<f64> = if j % p != 0 {
            x.iter().zip(&r).map(|(x, r)| x + omega * r).collect()
        } else {
            let g = least_squares_solve(&TallMatrix::from_columns(&r_diffs)?, &r)?;
            let mut out: Vec<f64> = x.iter().zip(&r).map(|(x, r)| x + omega * r).collect();
            for ((dx, dr), gj) in x_diffs.iter().zip(&r_diffs).zip(&g) {
                for i in 0..n {
                    out[i] -= gj * (dx[i] + omega * dr[i]);
                }
            }
            out
        };
        x_prev = std::mem::replace(&mut x, next);
        r_prev = r;
    }
    unreachable!("k >= 1")
}

/// A random system with `ρ(I − ωA) < 1`: SPD `A = BᵀB/n + I/2`, `ω = 1/‖A‖₂`.
fn random_system(n: usize, rng: &mut Rng) -> (Vec<Vec<f64>>, Vec<f64>, f64, f64) {
    let bmat: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let v: f64 = (0..n).map(|k| bmat[k][i] * bmat[k][j]).sum::<f64>() / n as f64;
            a[i][j] = v;
            a[j][i] = v;
        }
        a[i][i] += 0.5;
    }
    let a_norm = spectral_norm(&TallMatrix::from_rows(&a).expect("square"));
    let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let b = dense_matvec(&a, &xs);
    (a, b, a_norm, 1.0 / a_norm)
}

fn random_unit(n: usize, rng: &mut Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let s = norm2(&v);
    v.into_iter().map(|x| x / s).collect()
}

/// Perturbed problem built from rank-one `E_i = c_i u_i v_iᵀ` (so `‖E_i‖₂ = c_i`)
/// acting on the residual differences.
struct Perturbation {
    r_hat: TallMatrix,
    script_e: TallMatrix,
}

fn perturb_columns(
    r_diffs: &[Vec<f64>],
    norms: &[f64],
    dirs: &[(Vec<f64>, Vec<f64>)],
) -> Result<Perturbation> {
    let cols: Vec<Vec<f64>> = r_diffs
        .iter()
        .zip(norms)
        .zip(dirs)
        .map(|((dr, c), (u, v))| {
            let s = c * crate::dot(v, dr);
            u.iter().map(|ui| ui * s).collect()
        })
        .collect();
    let script_e = TallMatrix::from_columns(&cols)?;
    let hat: Vec<Vec<f64>> = r_diffs
        .iter()
        .zip(&cols)
        .map(|(dr, e)| dr.iter().zip(e).map(|(a, b)| a + b).collect())
        .collect();
    Ok(Perturbation {
        r_hat: TallMatrix::from_columns(&hat)?,
        script_e,
    })
}

/// Chooses `‖E_i‖₂` at `shrink · factor · σ_min(T̂_k) / (k ‖r^k‖ ‖Δx_i‖)`,
/// halving until the condition holds with the exact `σ_min(T̂_k)` of the
/// perturbed matrix it produces.
fn admissible_perturbation(
    snap: &Snapshot,
    factor: f64,
    rng: &mut Rng,
) -> Result<(Perturbation, Vec<f64>, f64)> {
    let n = snap.r.len();
    let k = snap.r_diffs.len();
    let r_norm = norm2(&snap.r);
    let dx_norms: Vec<f64> = snap.x_diffs.iter().map(|d| norm2(d)).collect();
    let dirs: Vec<(Vec<f64>, Vec<f64>)> = (0..k)
        .map(|_| (random_unit(n, rng), random_unit(n, rng)))
        .collect();
    let sigma0 = min_singular_upper_triangular(
        &qr_column_pivoting(&TallMatrix::from_columns(&snap.r_diffs)?)?.t,
    );
    let mut guess = sigma0;
    for _ in 0..200 {
        let norms: Vec<f64> = dx_norms
            .iter()
            .map(|dx| guess * factor / (k as f64 * r_norm * dx))
            .collect();
        let pert = perturb_columns(&snap.r_diffs, &norms, &dirs)?;
        let sigma_hat = min_singular_upper_triangular(&qr_column_pivoting(&pert.r_hat)?.t);
        let limit: Vec<f64> = dx_norms
            .iter()
            .map(|dx| sigma_hat * factor / (k as f64 * r_norm * dx))
            .collect();
        if norms.iter().zip(&limit).all(|(c, l)| c <= l) {
            return Ok((pert, norms, sigma_hat));
        }
        guess *= 0.5;
    }
    Err(Error::Breakdown(
        "could not build an admissible perturbation".into(),
    ))
}

fn trial_setup(
    seed: u64,
    index: u64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>, f64, f64, Snapshot, Rng)> {
    let mut rng = rng::indexed_stream(seed, "desk-check", index);
    let n = 10 + (index as usize * 37) % 111;
    let (a, b, a_norm, omega) = random_system(n, &mut rng);
    let p = 1 + (index as usize % 3);
    let z = 1 + (index as usize % 4);
    let snap = full_aar(&a, &b, omega, p, (z * p).min(n / 2))?;
    Ok((a, b, a_norm, omega, snap, rng))
}

/// Perturbed LHS only: `‖E_i‖₂ ≤ σ_min(T̂_k)/k · ε/(‖r^k‖ ‖Δx_i‖)` must
/// give `δ_k = ‖𝓔_k ĝ‖₂ ≤ ε ‖A‖₂`.
pub fn matrix_backward_error_trial(seed: u64, index: u64, eps: f64) -> Result<DeskCheck> {
    let (_, _, a_norm, _, snap, mut rng) = trial_setup(seed, index)?;
    let (pert, _, _) = admissible_perturbation(&snap, eps, &mut rng)?;
    let g_hat = least_squares_solve(&pert.r_hat, &snap.r)?;
    Ok(DeskCheck {
        n: snap.r.len(),
        k: snap.r_diffs.len(),
        measured: backward_error_delta(&pert.script_e, &g_hat)?,
        bound: eps * a_norm,
    })
}

/// Perturbed LHS and RHS: `‖δr‖ ≤ ε ‖r^k‖` and the `ε/(1+ε)` LHS condition
/// must give `δ_k ≤ ε · max(‖A‖₂, ‖r^k‖₂)`.
pub fn full_backward_error_trial(seed: u64, index: u64, eps: f64) -> Result<DeskCheck> {
    let (_, _, a_norm, _, snap, mut rng) = trial_setup(seed, index)?;
    let (pert, _, _) = admissible_perturbation(&snap, eps / (1.0 + eps), &mut rng)?;
    let r_norm = norm2(&snap.r);
    let dir = random_unit(snap.r.len(), &mut rng);
    let r_hat: Vec<f64> = snap
        .r
        .iter()
        .zip(&dir)
        .map(|(r, d)| r + eps * r_norm * d)
        .collect();
    let g_hat = least_squares_solve(&pert.r_hat, &r_hat)?;
    Ok(DeskCheck {
        n: snap.r.len(),
        k: snap.r_diffs.len(),
        measured: backward_error_delta(&pert.script_e, &g_hat)?,
        bound: eps * a_norm.max(r_norm),
    })
}

/// Residual after one perturbed versus exact Anderson step (correction then
/// relaxation), against `‖I − ωA‖₂ (√2 κ + κ̂) ε̃`.
pub fn one_step_residual_trial(seed: u64, index: u64, eps: f64) -> Result<DeskCheck> {
    let (a, b, a_norm, omega, snap, mut rng) = trial_setup(seed, index)?;
    let n = snap.r.len();
    let (pert, _, sigma_hat) = admissible_perturbation(&snap, eps / (1.0 + eps), &mut rng)?;
    let r_norm = norm2(&snap.r);
    let dir = random_unit(n, &mut rng);
    let r_hat: Vec<f64> = snap
        .r
        .iter()
        .zip(&dir)
        .map(|(r, d)| r + eps * r_norm * d)
        .collect();
    let r_mat = TallMatrix::from_columns(&snap.r_diffs)?;
    let g = least_squares_solve(&r_mat, &snap.r)?;
    let g_hat = least_squares_solve(&pert.r_hat, &r_hat)?;

    let step = |g: &[f64]| -> Vec<f64> {
        let mut xb = snap.x.clone();
        for (dx, gj) in snap.x_diffs.iter().zip(g) {
            crate::axpy(-gj, dx, &mut xb);
        }
        let rb = dense_residual(&a, &b, &xb);
        let next: Vec<f64> = xb.iter().zip(&rb).map(|(x, r)| x + omega * r).collect();
        dense_residual(&a, &b, &next)
    };
    let diff: Vec<f64> = step(&g_hat)
        .iter()
        .zip(step(&g))
        .map(|(u, v)| u - v)
        .collect();

    let t = qr_column_pivoting(&r_mat)?.t;
    let sv = crate::densela::singular_values(&t);
    let (smax, smin) = (sv[0], *sv.last().unwrap());
    let kappa = smax / smin;
    let kappa_hat = smax / sigma_hat;
    let i_minus = TallMatrix::from_rows(
        &(0..n)
            .map(|i| {
                (0..n)
                    .map(|j| f64::from(u8::from(i == j)) - omega * a[i][j])
                    .collect()
            })
            .collect::<Vec<Vec<f64>>>(),
    )?;
    let c = spectral_norm(&i_minus);
    let eps_tilde = eps * a_norm.max(r_norm);
    Ok(DeskCheck {
        n,
        k: snap.r_diffs.len(),
        measured: norm2(&diff),
        bound: c * (std::f64::consts::SQRT_2 * kappa + kappa_hat) * eps_tilde,
    })
}
