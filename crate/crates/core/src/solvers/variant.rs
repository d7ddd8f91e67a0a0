use super::{Aar, FixedPointProblem, Mode, Solution, SolveConfig};
use crate::error::{Error, Result};
use crate::reduced::{AdaptiveController, ProjectionPlan, RowSelection};

/// The named solvers compared by the experiment suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Gmres,
    Picard,
    Aa,
    AlternatingAa,
    Subselected,
    Randomized,
}

impl SolverKind {
    pub const FIXED_POINT: [SolverKind; 5] = [
        SolverKind::Picard,
        SolverKind::Aa,
        SolverKind::AlternatingAa,
        SolverKind::Subselected,
        SolverKind::Randomized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gmres => "gmres",
            Self::Picard => "picard",
            Self::Aa => "aa",
            Self::AlternatingAa => "alternating_aa",
            Self::Subselected => "subselected",
            Self::Randomized => "randomized",
        }
    }

    pub fn mode(self) -> Option<Mode> {
        match self {
            Self::Gmres => None,
            Self::Picard => Some(Mode::Picard),
            Self::Aa => Some(Mode::Aa),
            Self::AlternatingAa => Some(Mode::AlternatingAa),
            Self::Subselected | Self::Randomized => Some(Mode::ReducedAlternatingAa),
        }
    }

    pub fn selection(self) -> Option<RowSelection> {
        match self {
            Self::Subselected => Some(RowSelection::Subselect),
            Self::Randomized => Some(RowSelection::Randomized),
            _ => None,
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gmres" => Ok(Self::Gmres),
            "picard" => Ok(Self::Picard),
            "aa" => Ok(Self::Aa),
            "alternating_aa" => Ok(Self::AlternatingAa),
            "subselected" | "subselect" => Ok(Self::Subselected),
            "randomized" => Ok(Self::Randomized),
            other => Err(Error::InvalidArgument(format!("unknown solver `{other}`"))),
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Settings of the reduced variants.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSettings {
    pub batch_fraction: f64,
    pub gamma0: f64,
    pub gamma_shrink: f64,
    pub epsilon: f64,
    /// `None` means `min(max_iter, n)`.
    pub k_star: Option<usize>,
    pub seed: u64,
}

impl Default for ReducedSettings {
    fn default() -> Self {
        Self {
            batch_fraction: 0.1,
            gamma0: 1.0,
            gamma_shrink: 0.5,
            epsilon: 1e-8,
            k_star: None,
            seed: 0,
        }
    }
}

/// Runs a fixed-point solver kind; `base.mode` is overridden by the kind.
pub fn run_fixed_point<P: FixedPointProblem + ?Sized>(
    kind: SolverKind,
    base: &SolveConfig,
    reduced: &ReducedSettings,
    problem: &P,
    x0: Option<&[f64]>,
) -> Result<Solution> {
    let mode = kind
        .mode()
        .ok_or_else(|| Error::InvalidArgument(format!("`{kind}` is not a fixed-point solver")))?;
    let config = SolveConfig {
        mode,
        ..base.clone()
    };
    let mut aar = Aar::new(config.clone());
    if let Some(sel) = kind.selection() {
        let n = problem.dim();
        let plan = ProjectionPlan::new(sel, n, reduced.batch_fraction, reduced.seed)?;
        let k_star = reduced
            .k_star
            .unwrap_or_else(|| config.max_iter.min(n).max(1));
        let ctrl = AdaptiveController::new(
            reduced.gamma0,
            k_star,
            reduced.epsilon,
            reduced.gamma_shrink,
        )?;
        aar = aar.with_projection(plan).with_controller(ctrl);
    }
    aar.solve(problem, x0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::FnProblem;

    #[test]
    fn names_round_trip() {
        for k in SolverKind::FIXED_POINT
            .into_iter()
            .chain([SolverKind::Gmres])
        {
            assert_eq!(k.name().parse::<SolverKind>().unwrap(), k);
        }
        assert!("newton".parse::<SolverKind>().is_err());
    }

    #[test]
    fn every_kind_solves_a_contraction() {
        let p = FnProblem::new(50, |x: &[f64]| {
            x.iter()
                .enumerate()
                .map(|(i, v)| 0.5 * v + i as f64)
                .collect()
        });
        for k in SolverKind::FIXED_POINT {
            let sol = run_fixed_point(
                k,
                &SolveConfig::default(),
                &ReducedSettings::default(),
                &p,
                None,
            )
            .unwrap();
            assert!(sol.converged(), "{k}");
            for (i, v) in sol.x.iter().enumerate() {
                assert!((v - 2.0 * i as f64).abs() < 1e-6 * (1.0 + i as f64), "{k}");
            }
        }
        assert!(run_fixed_point(
            SolverKind::Gmres,
            &SolveConfig::default(),
            &ReducedSettings::default(),
            &p,
            None
        )
        .is_err());
    }
}
