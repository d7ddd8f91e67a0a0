//! Fixed-point iteration with (Alternating, Reduced) Anderson acceleration.
//!
//! Iteration `k` evaluates `r^k = G(x^k) − x^k`. When `k mod p ≠ 0` the
//! update is the relaxed Picard (Richardson) step `x^k + ω r^k`; otherwise
//! it is the Anderson mixing `x^k + ω r^k − (X_k + ω R_k) g^k`, with `g^k`
//! minimising `‖R_k g − r^k‖₂` over the last `ℓ = min(k, m)` difference
//! pairs. With `ω = 1` this is the textbook mixing; for a linear residual
//! `r = M⁻¹(b − A x)` it equals the correction `x̄ = x − X g` followed by a
//! Richardson step from `x̄`, i.e. plain AA on `G_ω(x) = x + ω r`.

mod gmres;
mod history;
mod variant;

pub use gmres::gmres_solve;
pub use history::AndersonHistory;
pub use variant::{run_fixed_point, ReducedSettings, SolverKind};

use crate::densela::{least_squares_solve, TallMatrix};
use crate::error::{Error, Result};
use crate::precond::Preconditioner;
use crate::reduced::{
    bound_surrogate, controller_step, select_rows_random, select_rows_subselect,
    AdaptiveController, ColumnNorms, Decision, ProjectionPlan, RowSelection, StepResult,
};
use crate::sparse::SparseMatrix;
use crate::{norm2, rng};
use std::io::Write;
use std::time::Instant;

/// A map `G` whose fixed point is sought.
pub trait FixedPointProblem {
    fn dim(&self) -> usize;

    /// Writes `G(x)` into `out`.
    fn evaluate_g(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    /// Writes `G(x) − x` into `out`.
    fn residual_of(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.evaluate_g(x, out)?;
        for (o, xi) in out.iter_mut().zip(x) {
            *o -= xi;
        }
        Ok(())
    }
}

/// Fixed-point problem from a closure computing `G(x)`.
pub struct FnProblem<F> {
    dim: usize,
    g: F,
}

impl<F: Fn(&[f64]) -> Vec<f64>> FnProblem<F> {
    pub fn new(dim: usize, g: F) -> Self {
        Self { dim, g }
    }
}

impl<F: Fn(&[f64]) -> Vec<f64>> FixedPointProblem for FnProblem<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate_g(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let y = (self.g)(x);
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: y.len(),
            });
        }
        out.copy_from_slice(&y);
        Ok(())
    }
}

/// `A x = b` with optional left preconditioner; the residual is `M⁻¹(b − A x)`
/// and `G(x) = x + M⁻¹(b − A x)`.
pub struct LinearProblem<'a> {
    a: &'a SparseMatrix,
    b: &'a [f64],
    precond: Option<&'a Preconditioner>,
}

impl<'a> LinearProblem<'a> {
    pub fn new(
        a: &'a SparseMatrix,
        b: &'a [f64],
        precond: Option<&'a Preconditioner>,
    ) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidArgument(
                "linear problem needs a square matrix".into(),
            ));
        }
        if b.len() != a.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: a.n_rows(),
                found: b.len(),
            });
        }
        if let Some(p) = precond {
            if p.dim() != a.n_rows() {
                return Err(Error::DimensionMismatch {
                    expected: a.n_rows(),
                    found: p.dim(),
                });
            }
        }
        Ok(Self { a, b, precond })
    }
}

impl FixedPointProblem for LinearProblem<'_> {
    fn dim(&self) -> usize {
        self.a.n_rows()
    }

    fn evaluate_g(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.residual_of(x, out)?;
        for (o, xi) in out.iter_mut().zip(x) {
            *o += xi;
        }
        Ok(())
    }

    fn residual_of(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.a.matvec_into(x, out)?;
        for (o, bi) in out.iter_mut().zip(self.b) {
            *o = bi - *o;
        }
        if let Some(p) = self.precond {
            let z = p.apply(out)?;
            out.copy_from_slice(&z);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Picard,
    Aa,
    AlternatingAa,
    ReducedAlternatingAa,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "picard" => Ok(Self::Picard),
            "aa" => Ok(Self::Aa),
            "alternating_aa" => Ok(Self::AlternatingAa),
            "reduced_alternating_aa" => Ok(Self::ReducedAlternatingAa),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Picard => "picard",
            Self::Aa => "aa",
            Self::AlternatingAa => "alternating_aa",
            Self::ReducedAlternatingAa => "reduced_alternating_aa",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub omega: f64,
    pub p: usize,
    pub m: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub mode: Mode,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            omega: 1.0,
            p: 3,
            m: 20,
            tol: 1e-8,
            max_iter: 1000,
            mode: Mode::AlternatingAa,
        }
    }
}

impl SolveConfig {
    /// The linear benchmark operating point: ω = 0.2, p = 3, m = 20, tol = 1e-8.
    pub fn benchmark() -> Self {
        Self {
            omega: 0.2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "omega must be > 0, got {}",
                self.omega
            )));
        }
        if self.p == 0 || self.m == 0 {
            return Err(Error::InvalidArgument("p and m must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        Ok(())
    }

    /// Picard steps per Anderson step actually used by the mode.
    pub fn effective_p(&self) -> usize {
        match self.mode {
            Mode::Picard => usize::MAX,
            Mode::Aa => 1,
            Mode::AlternatingAa | Mode::ReducedAlternatingAa => self.p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Breakdown,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Converged => "converged",
            Self::MaxIter => "max_iter",
            Self::Breakdown => "breakdown",
        })
    }
}

/// One residual evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual_norm: f64,
    /// The update leaving this iterate was an Anderson step.
    pub anderson: bool,
    /// Rows used by the mixing least squares (0 on Picard steps).
    pub reduced_dimension: usize,
    /// A rejected trial; the same iteration index is recorded again.
    pub rollback: bool,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub status: SolveStatus,
    pub initial_residual_norm: f64,
    /// Operator evaluations, including rejected trials.
    pub evaluations: usize,
    pub rollbacks: usize,
    /// Time inside the mixing least squares, row selection included.
    pub ls_time_s: f64,
    /// Time spent evaluating the bound surrogate and deciding.
    pub controller_time_s: f64,
    pub total_time_s: f64,
    pub breakdown_reason: Option<String>,
}

impl IterationTrace {
    fn new() -> Self {
        Self {
            records: Vec::new(),
            status: SolveStatus::MaxIter,
            initial_residual_norm: 0.0,
            evaluations: 0,
            rollbacks: 0,
            ls_time_s: 0.0,
            controller_time_s: 0.0,
            total_time_s: 0.0,
            breakdown_reason: None,
        }
    }

    /// Index of the last accepted iterate.
    pub fn iterations(&self) -> usize {
        self.records
            .iter()
            .rev()
            .find(|r| !r.rollback)
            .map_or(0, |r| r.iteration)
    }

    pub fn final_residual_norm(&self) -> f64 {
        self.records
            .iter()
            .rev()
            .find(|r| !r.rollback)
            .map_or(f64::NAN, |r| r.residual_norm)
    }

    pub fn relative_residual(&self) -> f64 {
        if self.initial_residual_norm == 0.0 {
            0.0
        } else {
            self.final_residual_norm() / self.initial_residual_norm
        }
    }

    /// Residual norms at iterates whose outgoing update was an Anderson step.
    pub fn anderson_residuals(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.anderson && !r.rollback)
            .map(|r| r.residual_norm)
            .collect()
    }

    /// Same iterates, flags and residuals; timings ignored.
    pub fn same_path(&self, other: &Self) -> bool {
        self.status == other.status
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.iteration == b.iteration
                    && a.residual_norm.to_bits() == b.residual_norm.to_bits()
                    && a.anderson == b.anderson
                    && a.rollback == b.rollback
            })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,residual_norm,relative_residual,anderson,reduced_dimension,rollback,elapsed_s")?;
        let r0 = if self.initial_residual_norm > 0.0 {
            self.initial_residual_norm
        } else {
            1.0
        };
        for r in &self.records {
            writeln!(
                w,
                "{},{:e},{:e},{},{},{},{:.6e}",
                r.iteration,
                r.residual_norm,
                r.residual_norm / r0,
                u8::from(r.anderson),
                r.reduced_dimension,
                u8::from(r.rollback),
                r.elapsed_s
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub trace: IterationTrace,
}

impl Solution {
    pub fn status(&self) -> SolveStatus {
        self.trace.status
    }

    pub fn converged(&self) -> bool {
        self.trace.status == SolveStatus::Converged
    }

    pub fn iterations(&self) -> usize {
        self.trace.iterations()
    }
}

/// `x + ω r`.
pub fn richardson_step(x: &[f64], r: &[f64], omega: f64) -> Vec<f64> {
    x.iter().zip(r).map(|(a, b)| a + omega * b).collect()
}

/// The update `x^{k+1} − x^k = ω r − (X + ω R) g` with `g` from `ls(R, r)`.
pub fn anderson_mixing<F>(
    history: &AndersonHistory,
    r_k: &[f64],
    omega: f64,
    ls: F,
) -> Result<Vec<f64>>
where
    F: FnOnce(&TallMatrix, &[f64]) -> Result<Vec<f64>>,
{
    if history.is_empty() {
        return Err(Error::InvalidArgument(
            "Anderson mixing needs a nonempty history".into(),
        ));
    }
    let g = ls(&history.r_matrix(), r_k)?;
    if g.len() != history.len() {
        return Err(Error::DimensionMismatch {
            expected: history.len(),
            found: g.len(),
        });
    }
    Ok(history.mixing_update(r_k, omega, &g))
}

/// What a least-squares hook sees at an Anderson step.
pub struct LsRequest<'r> {
    pub iteration: usize,
    pub matrix: &'r TallMatrix,
    pub rhs: &'r [f64],
    pub r_norm: f64,
    /// `‖x^k − x^{k−1}‖₂`.
    pub dx_norm: f64,
}

/// Replacement for the exact mixing least squares (used by the noise lab).
pub type LsHook<'a> = Box<dyn FnMut(&LsRequest<'_>) -> Result<Vec<f64>> + 'a>;

/// Algorithm runner: configuration plus optional projection, controller and hook.
pub struct Aar<'a> {
    config: SolveConfig,
    plan: Option<ProjectionPlan>,
    controller: Option<AdaptiveController>,
    ls_hook: Option<LsHook<'a>>,
}

impl<'a> Aar<'a> {
    pub fn new(config: SolveConfig) -> Self {
        Self {
            config,
            plan: None,
            controller: None,
            ls_hook: None,
        }
    }

    /// Row projection, used in `reduced_alternating_aa` mode only.
    pub fn with_projection(mut self, plan: ProjectionPlan) -> Self {
        self.plan = Some(plan);
        self
    }

    pub fn with_controller(mut self, ctrl: AdaptiveController) -> Self {
        self.controller = Some(ctrl);
        self
    }

    /// Replaces the exact least squares of unprojected Anderson steps.
    pub fn with_ls_hook(mut self, hook: LsHook<'a>) -> Self {
        self.ls_hook = Some(hook);
        self
    }

    pub fn controller(&self) -> Option<&AdaptiveController> {
        self.controller.as_ref()
    }

    pub fn plan(&self) -> Option<&ProjectionPlan> {
        self.plan.as_ref()
    }

    /// Runs the iteration from `x0` (zero when `None`).
    pub fn solve<P: FixedPointProblem + ?Sized>(
        &mut self,
        problem: &P,
        x0: Option<&[f64]>,
    ) -> Result<Solution> {
        self.config.validate()?;
        let n = problem.dim();
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        if let Some(x0) = x0 {
            if x0.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: x0.len(),
                });
            }
        }
        let reduced = self.config.mode == Mode::ReducedAlternatingAa;
        if reduced && self.plan.is_none() {
            self.plan = Some(ProjectionPlan::with_default_batches(
                RowSelection::Randomized,
                n,
                0,
            ));
        }
        let mut engine = Engine {
            config: &self.config,
            plan: if reduced { self.plan.as_mut() } else { None },
            controller: if reduced {
                self.controller.as_mut()
            } else {
                None
            },
            ls_hook: self.ls_hook.as_mut(),
            start: Instant::now(),
            trace: IterationTrace::new(),
        };
        let x = engine.run(problem, x0)?;
        let mut trace = engine.trace;
        trace.total_time_s = engine.start.elapsed().as_secs_f64();
        Ok(Solution { x, trace })
    }
}

/// Solves with default projection/controller settings for the mode.
pub fn aar_solve<P: FixedPointProblem + ?Sized>(
    problem: &P,
    config: &SolveConfig,
    x0: Option<&[f64]>,
) -> Result<Solution> {
    Aar::new(config.clone()).solve(problem, x0)
}

struct Engine<'c, 'h> {
    config: &'c SolveConfig,
    plan: Option<&'c mut ProjectionPlan>,
    controller: Option<&'c mut AdaptiveController>,
    ls_hook: Option<&'c mut LsHook<'h>>,
    start: Instant,
    trace: IterationTrace,
}

enum Halt {
    Breakdown(String),
}

impl Engine<'_, '_> {
    fn evaluate<P: FixedPointProblem + ?Sized>(
        &mut self,
        problem: &P,
        x: &[f64],
        k: usize,
    ) -> Result<Result<Vec<f64>, Halt>> {
        let mut r = vec![0.0; x.len()];
        self.trace.evaluations += 1;
        match problem.residual_of(x, &mut r) {
            Ok(()) => {}
            Err(e @ Error::DimensionMismatch { .. }) => return Err(e),
            Err(e) => return Ok(Err(Halt::Breakdown(e.to_string()))),
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Ok(Err(Halt::Breakdown(
                Error::NonFinite { iteration: k }.to_string(),
            )));
        }
        Ok(Ok(r))
    }

    fn record(
        &mut self,
        iteration: usize,
        residual_norm: f64,
        anderson: bool,
        s: usize,
        rollback: bool,
    ) {
        self.trace.records.push(IterationRecord {
            iteration,
            residual_norm,
            anderson,
            reduced_dimension: s,
            rollback,
            elapsed_s: self.start.elapsed().as_secs_f64(),
        });
    }

    fn run<P: FixedPointProblem + ?Sized>(
        &mut self,
        problem: &P,
        x0: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let n = problem.dim();
        let cfg = self.config.clone();
        let p = cfg.effective_p();
        let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
        let mut r = match self.evaluate(problem, &x, 0)? {
            Ok(r) => r,
            Err(Halt::Breakdown(why)) => return Ok(self.halt(x, why)),
        };
        let r0 = norm2(&r);
        self.trace.initial_residual_norm = r0;
        self.record(0, r0, false, 0, false);
        if r0 == 0.0 {
            self.trace.status = SolveStatus::Converged;
            return Ok(x);
        }
        let mut history = AndersonHistory::new(cfg.m.min(n));
        let keep_history = p != usize::MAX;
        let mut rng = self
            .plan
            .as_ref()
            .map(|pl| rng::stream(pl.seed, "row-selection"));
        let mut prior_anderson = r0;

        // x^1 = x^0 + r^0
        let mut x_prev = x.clone();
        let mut r_prev = r;
        crate::axpy(1.0, &r_prev, &mut x);
        let mut pending: Option<Vec<f64>> = None;
        let mut k = 1;
        loop {
            r = match pending.take() {
                Some(r) => r,
                None => match self.evaluate(problem, &x, k)? {
                    Ok(r) => r,
                    Err(Halt::Breakdown(why)) => return Ok(self.halt(x, why)),
                },
            };
            let rn = norm2(&r);
            if keep_history {
                let dx: Vec<f64> = x.iter().zip(&x_prev).map(|(a, b)| a - b).collect();
                let dr: Vec<f64> = r.iter().zip(&r_prev).map(|(a, b)| a - b).collect();
                history.push(k, dx, dr, rn);
            }
            let converged = rn / r0 <= cfg.tol;
            let anderson = !converged && k % p == 0 && k < cfg.max_iter;
            let s_full = if anderson { n } else { 0 };
            self.record(k, rn, anderson, s_full, false);
            if converged {
                self.trace.status = SolveStatus::Converged;
                return Ok(x);
            }
            if k >= cfg.max_iter {
                self.trace.status = SolveStatus::MaxIter;
                return Ok(x);
            }
            if !anderson {
                let next = richardson_step(&x, &r, cfg.omega);
                x_prev = std::mem::replace(&mut x, next);
                r_prev = r;
                k += 1;
                continue;
            }

            let step = if self.plan.is_some() {
                self.reduced_step(
                    problem,
                    &history,
                    &x,
                    &r,
                    rn,
                    k,
                    &mut prior_anderson,
                    rng.as_mut().unwrap(),
                )?
            } else {
                self.full_step(&history, &r, rn, k).map(|u| (u, None))
            };
            let (update, trial) = match step {
                Ok(v) => v,
                Err(Halt::Breakdown(why)) => return Ok(self.halt(x, why)),
            };
            let next: Vec<f64> = x.iter().zip(&update).map(|(a, b)| a + b).collect();
            x_prev = std::mem::replace(&mut x, next);
            r_prev = r;
            pending = trial;
            k += 1;
        }
    }

    fn halt(&mut self, x: Vec<f64>, why: String) -> Vec<f64> {
        self.trace.status = SolveStatus::Breakdown;
        self.trace.breakdown_reason = Some(why);
        x
    }

    fn full_step(
        &mut self,
        history: &AndersonHistory,
        r: &[f64],
        rn: f64,
        k: usize,
    ) -> Result<Vec<f64>, Halt> {
        let r_mat = history.r_matrix();
        let t = Instant::now();
        let g = match self.ls_hook.as_mut() {
            Some(hook) => hook(&LsRequest {
                iteration: k,
                matrix: &r_mat,
                rhs: r,
                r_norm: rn,
                dx_norm: history.last_dx_norm().unwrap_or(0.0),
            }),
            None => least_squares_solve(&r_mat, r),
        };
        self.trace.ls_time_s += t.elapsed().as_secs_f64();
        match g {
            Ok(g) if g.len() == history.len() => {
                Ok(history.mixing_update(r, self.config.omega, &g))
            }
            Ok(_) => Err(Halt::Breakdown(
                "least-squares hook returned wrong length".into(),
            )),
            Err(e) => Err(Halt::Breakdown(e.to_string())),
        }
    }

    /// Projected Anderson step; with a controller, runs the accept/rollback
    /// protocol and returns the residual of the accepted iterate as well.
    #[allow(clippy::too_many_arguments)]
    fn reduced_step<P: FixedPointProblem + ?Sized>(
        &mut self,
        problem: &P,
        history: &AndersonHistory,
        x: &[f64],
        r: &[f64],
        rn: f64,
        k: usize,
        prior_anderson: &mut f64,
        rng: &mut rng::Rng,
    ) -> Result<Result<(Vec<f64>, Option<Vec<f64>>), Halt>> {
        let n = x.len();
        let omega = self.config.omega;
        let mut s = self.plan.as_ref().unwrap().s_current.min(n);
        loop {
            // Fewer rows than history columns would make the projected problem underdetermined.
            s = s.max(history.len()).min(n);
            let t = Instant::now();
            let strategy = self.plan.as_ref().unwrap().strategy;
            let rows: Vec<usize> = match strategy {
                RowSelection::None => (0..n).collect(),
                RowSelection::Subselect => select_rows_subselect(r, s),
                RowSelection::Randomized => select_rows_random(n, s, rng),
            };
            let s_used = rows.len();
            let matrix = history.r_rows(&rows);
            let rhs: Vec<f64> = rows.iter().map(|&i| r[i]).collect();
            self.trace.ls_time_s += t.elapsed().as_secs_f64();

            if let Some(ctrl) = self.controller.as_deref_mut() {
                let t = Instant::now();
                let full = s_used == n;
                let columns: Vec<ColumnNorms> = history
                    .iterations()
                    .zip(history.norms())
                    .enumerate()
                    .map(
                        |(j, (iteration, (r_norm, dx_norm, column_norm)))| ColumnNorms {
                            iteration,
                            r_norm,
                            dx_norm,
                            column_norm,
                            selected_norm: if full {
                                column_norm
                            } else {
                                norm2(matrix.column(j))
                            },
                        },
                    )
                    .collect();
                let witnesses = bound_surrogate(&columns, full, ctrl);
                let delta_r_sq = (rn * rn - crate::dot(&rhs, &rhs)).max(0.0);
                let decision = controller_step(
                    ctrl,
                    self.plan.as_deref_mut().unwrap(),
                    &StepResult {
                        trial_residual: None,
                        prior_residual: *prior_anderson,
                        delta_r_norm: delta_r_sq.sqrt(),
                        witnesses: &witnesses,
                        s: s_used,
                        n,
                    },
                );
                self.trace.controller_time_s += t.elapsed().as_secs_f64();
                if let Decision::ProceedWithRefine { new_s } = decision {
                    s = new_s;
                    continue;
                }
            }

            let t = Instant::now();
            let g = least_squares_solve(&matrix, &rhs);
            self.trace.ls_time_s += t.elapsed().as_secs_f64();
            let g = match g {
                Ok(g) => g,
                Err(e) => return Ok(Err(Halt::Breakdown(e.to_string()))),
            };
            let update = history.mixing_update(r, omega, &g);
            if let Some(last) = self.trace.records.last_mut() {
                last.reduced_dimension = s_used;
            }
            if self.controller.is_none() {
                return Ok(Ok((update, None)));
            }

            let trial_x: Vec<f64> = x.iter().zip(&update).map(|(a, b)| a + b).collect();
            let trial_r = match self.evaluate(problem, &trial_x, k + 1)? {
                Ok(r) => r,
                Err(halt) => return Ok(Err(halt)),
            };
            let trial_norm = norm2(&trial_r);
            let t = Instant::now();
            let decision = controller_step(
                self.controller.as_deref_mut().unwrap(),
                self.plan.as_deref_mut().unwrap(),
                &StepResult {
                    trial_residual: Some(trial_norm),
                    prior_residual: *prior_anderson,
                    delta_r_norm: 0.0,
                    witnesses: &[],
                    s: s_used,
                    n,
                },
            );
            self.trace.controller_time_s += t.elapsed().as_secs_f64();
            match decision {
                Decision::Accept | Decision::ProceedWithRefine { .. } => {
                    *prior_anderson = trial_norm;
                    return Ok(Ok((update, Some(trial_r))));
                }
                Decision::RollbackAndRefine { new_s } => {
                    self.trace.rollbacks += 1;
                    self.record(k + 1, trial_norm, false, s_used, true);
                    s = new_s;
                }
            }
        }
    }
}
