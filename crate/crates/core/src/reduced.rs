//! Row-restricted mixing least squares and the adaptive accuracy controller.
//!
//! At each Anderson step the mixing problem `min ‖R g − r‖` may be replaced
//! by its restriction to `s` rows. The controller decides how large `s`
//! has to be: it grows `s` in batches while a computable per-column bound is
//! violated, and rolls the step back (shrinking `γ`) when the residual norm
//! after the step fails to drop below the one after the previous Anderson
//! step. At `s = n` the step is exact and always accepted.

use crate::densela::TallMatrix;
use crate::error::{Error, Result};
use crate::rng::Rng;
use rand::seq::index;

/// How the rows of the mixing problem are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSelection {
    /// Full problem, no projection.
    None,
    /// The `s` rows where the current residual is largest in magnitude.
    Subselect,
    /// `s` rows drawn uniformly without replacement.
    Randomized,
}

impl std::str::FromStr for RowSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "subselect" | "subselected" => Ok(Self::Subselect),
            "randomized" | "random" => Ok(Self::Randomized),
            other => Err(Error::InvalidArgument(format!(
                "unknown projection `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for RowSelection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Subselect => "subselect",
            Self::Randomized => "randomized",
        })
    }
}

/// Row-selection strategy plus the current reduced dimension.
///
/// `s_current` is the floor each Anderson step starts from. Bound-driven
/// refinements are local to the step; rollbacks raise the floor.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPlan {
    pub strategy: RowSelection,
    pub s_current: usize,
    pub batch_fraction: f64,
    pub seed: u64,
}

impl ProjectionPlan {
    /// Starts at one batch, `ceil(batch_fraction · n)` rows.
    pub fn new(strategy: RowSelection, n: usize, batch_fraction: f64, seed: u64) -> Result<Self> {
        if !(batch_fraction > 0.0 && batch_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "batch fraction must lie in (0, 1], got {batch_fraction}"
            )));
        }
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        let mut plan = Self {
            strategy,
            s_current: 0,
            batch_fraction,
            seed,
        };
        plan.s_current = plan.batch_size(n);
        if strategy == RowSelection::None {
            plan.s_current = n;
        }
        Ok(plan)
    }

    /// Batches of 10% of the rows.
    pub fn with_default_batches(strategy: RowSelection, n: usize, seed: u64) -> Self {
        Self::new(strategy, n, 0.1, seed).expect("0.1 is a valid batch fraction")
    }

    pub fn batch_size(&self, n: usize) -> usize {
        ((self.batch_fraction * n as f64).ceil() as usize).clamp(1, n.max(1))
    }

    /// `s` grown by one batch, clamped at `n`.
    pub fn refined(&self, s: usize, n: usize) -> usize {
        (s + self.batch_size(n)).min(n)
    }
}

/// Indices of the `s` largest `|r_j|`, ties to the lower index, sorted ascending.
pub fn select_rows_subselect(r: &[f64], s: usize) -> Vec<usize> {
    let n = r.len();
    let s = s.min(n);
    if s == n {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let by_magnitude = |a: &usize, b: &usize| r[*b].abs().total_cmp(&r[*a].abs()).then(a.cmp(b));
    if s > 0 {
        idx.select_nth_unstable_by(s - 1, by_magnitude);
    }
    idx.truncate(s);
    idx.sort_unstable();
    idx
}

/// `s` distinct indices from `0..n`, uniform without replacement, sorted ascending.
pub fn select_rows_random(n: usize, s: usize, rng: &mut Rng) -> Vec<usize> {
    let s = s.min(n);
    if s == n {
        return (0..n).collect();
    }
    let mut idx = index::sample(rng, n, s).into_vec();
    idx.sort_unstable();
    idx
}

/// The row-restricted problem `(Sᵀ R, Sᵀ r)` and the norm of the dropped part of `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedProblem {
    pub matrix: TallMatrix,
    pub rhs: Vec<f64>,
    pub delta_r_norm: f64,
}

pub fn project_ls(r_mat: &TallMatrix, r: &[f64], rows: &[usize]) -> Result<ProjectedProblem> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("empty row selection".into()));
    }
    if r.len() != r_mat.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: r_mat.n_rows(),
            found: r.len(),
        });
    }
    let mut keep = vec![false; r.len()];
    for &i in rows {
        if i >= r.len() || keep[i] {
            return Err(Error::InvalidArgument(format!(
                "row {i} out of range or repeated"
            )));
        }
        keep[i] = true;
    }
    let delta_sq: f64 = r
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| !k)
        .map(|(v, _)| v * v)
        .sum();
    Ok(ProjectedProblem {
        matrix: r_mat.select_rows(rows),
        rhs: rows.iter().map(|&i| r[i]).collect(),
        delta_r_norm: delta_sq.sqrt(),
    })
}

/// `B_i = γ / (k* · ‖r^i‖ · ‖x^i − x^{i−1}‖)`.
pub fn heuristic_bound(gamma: f64, k_star: usize, r_i_norm: f64, dx_i_norm: f64) -> Result<f64> {
    if r_i_norm <= 0.0 || dx_i_norm <= 0.0 {
        return Err(Error::Stagnation);
    }
    Ok(gamma / (k_star as f64 * r_i_norm * dx_i_norm))
}

/// Per-column comparison of the projection defect against `B_i · ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundWitness {
    pub iteration: usize,
    pub b_i: f64,
    pub e_i_norm_estimate: f64,
    pub satisfied: bool,
}

/// Norms tracked for one live history column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnNorms {
    /// Iteration `i` the column ends at.
    pub iteration: usize,
    /// `‖r^i‖₂`.
    pub r_norm: f64,
    /// `‖x^i − x^{i−1}‖₂`.
    pub dx_norm: f64,
    /// `‖r^i − r^{i−1}‖₂`, the full column norm.
    pub column_norm: f64,
    /// Norm of the column restricted to the selected rows.
    pub selected_norm: f64,
}

/// Witnesses for every live column.
///
/// The defect of column `i` is the relative norm of its unselected part,
/// standing in for `‖E_i‖₂/‖A‖₂`, which cannot be observed directly. A
/// full selection gives zero defects.
pub fn bound_surrogate(
    columns: &[ColumnNorms],
    full: bool,
    ctrl: &AdaptiveController,
) -> Vec<BoundWitness> {
    columns
        .iter()
        .map(|c| {
            let defect = if full || c.column_norm == 0.0 {
                0.0
            } else {
                let rest =
                    (c.column_norm * c.column_norm - c.selected_norm * c.selected_norm).max(0.0);
                rest.sqrt() / c.column_norm
            };
            match heuristic_bound(ctrl.gamma, ctrl.k_star, c.r_norm, c.dx_norm) {
                Ok(b) => BoundWitness {
                    iteration: c.iteration,
                    b_i: b,
                    e_i_norm_estimate: defect,
                    satisfied: defect <= b * ctrl.epsilon,
                },
                // A column whose iterate did not move carries no bound.
                Err(_) => BoundWitness {
                    iteration: c.iteration,
                    b_i: 0.0,
                    e_i_norm_estimate: defect,
                    satisfied: full,
                },
            }
        })
        .collect()
}

/// State of the accept/rollback protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveController {
    pub gamma: f64,
    pub k_star: usize,
    pub epsilon: f64,
    pub gamma_shrink: f64,
    /// Residual norm right after the last accepted Anderson step.
    pub last_accepted_anderson_residual: Option<f64>,
}

impl AdaptiveController {
    pub fn new(gamma0: f64, k_star: usize, epsilon: f64, gamma_shrink: f64) -> Result<Self> {
        if !(gamma0 > 0.0)
            || !(epsilon > 0.0)
            || k_star == 0
            || !(gamma_shrink > 0.0 && gamma_shrink < 1.0)
        {
            return Err(Error::InvalidArgument(format!(
                "controller needs gamma0 > 0, epsilon > 0, k_star >= 1, gamma_shrink in (0,1); \
                 got {gamma0}, {epsilon}, {k_star}, {gamma_shrink}"
            )));
        }
        Ok(Self {
            gamma: gamma0,
            k_star,
            epsilon,
            gamma_shrink,
            last_accepted_anderson_residual: None,
        })
    }

    /// γ₀ = 1, shrink 0.5 and `k* = min(max_iter, n)`.
    pub fn with_defaults(epsilon: f64, max_iter: usize, n: usize) -> Result<Self> {
        Self::new(1.0, max_iter.min(n).max(1), epsilon, 0.5)
    }
}

/// What the controller knows about the Anderson step under consideration.
#[derive(Debug, Clone)]
pub struct StepResult<'a> {
    /// Residual norm after the trial step; `None` before the step is taken.
    pub trial_residual: Option<f64>,
    /// Residual norm after the previous accepted Anderson step (or `‖r⁰‖`).
    pub prior_residual: f64,
    pub delta_r_norm: f64,
    pub witnesses: &'a [BoundWitness],
    /// Rows used for this attempt.
    pub s: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// Keep the step (or, before a trial, go ahead and take it).
    Accept,
    /// Undo the trial step and retry with `new_s` rows.
    RollbackAndRefine { new_s: usize },
    /// Bound violated: retry with `new_s` rows without taking the step.
    ProceedWithRefine { new_s: usize },
}

/// One decision of the accept/rollback protocol. Updates `ctrl` (γ and the
/// reference residual) and `plan` (the floor for `s`) as a side effect.
pub fn controller_step(
    ctrl: &mut AdaptiveController,
    plan: &mut ProjectionPlan,
    step: &StepResult,
) -> Decision {
    if step.s >= step.n {
        if let Some(t) = step.trial_residual {
            ctrl.last_accepted_anderson_residual = Some(t);
        }
        return Decision::Accept;
    }
    if !step.witnesses.iter().all(|w| w.satisfied) {
        return Decision::ProceedWithRefine {
            new_s: plan.refined(step.s, step.n),
        };
    }
    match step.trial_residual {
        None => Decision::Accept,
        Some(t) if t < step.prior_residual => {
            ctrl.last_accepted_anderson_residual = Some(t);
            Decision::Accept
        }
        Some(_) => {
            ctrl.gamma *= ctrl.gamma_shrink;
            let new_s = plan.refined(step.s, step.n);
            plan.s_current = plan.s_current.max(new_s);
            Decision::RollbackAndRefine { new_s }
        }
    }
}
