//! Dolan-Moré performance ratios and log₂ performance profiles.

use super::BenchRecord;
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::io::Write;

/// Ratio assigned to failed runs.
pub const R_M: f64 = 10_000.0;

/// `r[p][s] = t_{p,s} / min_s t_{p,s}` over converged runs; failures get [`R_M`].
#[derive(Debug, Clone, PartialEq)]
pub struct RatioTable {
    pub problems: Vec<String>,
    pub solvers: Vec<String>,
    pub ratios: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCurve {
    pub solver: String,
    /// `(τ, fraction of problems with log₂ r ≤ τ)`.
    pub points: Vec<(f64, f64)>,
}

/// Requires each (problem, solver) pair exactly once and the same solver
/// set for every problem. Problems and solvers keep first-seen order.
pub fn performance_ratios(records: &[BenchRecord]) -> Result<RatioTable> {
    let mut problems: Vec<String> = Vec::new();
    let mut solvers: Vec<String> = Vec::new();
    let mut times: BTreeMap<(usize, usize), Option<f64>> = BTreeMap::new();
    for r in records {
        let p = index_of(&mut problems, &r.problem);
        let s = index_of(&mut solvers, &r.solver);
        let t = r.converged.then_some(r.wall_time_s.max(1e-12));
        if times.insert((p, s), t).is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate record for ({}, {})",
                r.problem, r.solver
            )));
        }
    }
    if times.len() != problems.len() * solvers.len() {
        return Err(Error::InvalidArgument(
            "every problem needs one record per solver".into(),
        ));
    }
    let ratios = (0..problems.len())
        .map(|p| {
            let row: Vec<Option<f64>> = (0..solvers.len()).map(|s| times[&(p, s)]).collect();
            let best = row.iter().flatten().copied().fold(f64::INFINITY, f64::min);
            row.iter()
                .map(|t| match t {
                    Some(t) => t / best,
                    None => R_M,
                })
                .collect()
        })
        .collect();
    Ok(RatioTable {
        problems,
        solvers,
        ratios,
    })
}

fn index_of(list: &mut Vec<String>, name: &str) -> usize {
    match list.iter().position(|v| v == name) {
        Some(i) => i,
        None => {
            list.push(name.to_string());
            list.len() - 1
        }
    }
}

/// `0, step, 2·step, …` up to and including `log₂ R_M`.
pub fn default_tau_grid(step: f64) -> Vec<f64> {
    let end = R_M.log2();
    let n = (end / step).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
    if *grid.last().unwrap() < end {
        grid.push(end);
    }
    grid
}

pub fn profile_curves(table: &RatioTable, tau_grid: &[f64]) -> Vec<ProfileCurve> {
    let n_p = table.problems.len().max(1) as f64;
    table
        .solvers
        .iter()
        .enumerate()
        .map(|(s, name)| {
            let logs: Vec<f64> = table.ratios.iter().map(|row| row[s].log2()).collect();
            let points = tau_grid
                .iter()
                .map(|&tau| (tau, logs.iter().filter(|&&l| l <= tau).count() as f64 / n_p))
                .collect();
            ProfileCurve {
                solver: name.clone(),
                points,
            }
        })
        .collect()
}

/// One row per τ, one column per solver.
pub fn write_profiles_csv<W: Write>(curves: &[ProfileCurve], mut w: W) -> std::io::Result<()> {
    write!(w, "tau")?;
    for c in curves {
        write!(w, ",{}", c.solver)?;
    }
    writeln!(w)?;
    let n = curves.first().map_or(0, |c| c.points.len());
    for i in 0..n {
        write!(w, "{}", curves[0].points[i].0)?;
        for c in curves {
            write!(w, ",{}", c.points[i].1)?;
        }
        writeln!(w)?;
    }
    Ok(())
}
