//! Benchmark harness over a directory of Matrix Market files.
//!
//! Each matrix gets `b = A·1`, the requested preconditioner (after the
//! reordering and scaling its manifest entry asks for) and one run per
//! solver. Wall time covers the solve only; preconditioner construction is
//! reported separately in `total_time_s`.

mod profile;

pub use profile::{
    default_tau_grid, performance_ratios, profile_curves, write_profiles_csv, ProfileCurve,
    RatioTable, R_M,
};

use crate::error::{Error, Result};
use crate::precond::{build_preconditioner, PrecondKind, PrecondSpec};
use crate::solvers::{
    gmres_solve, run_fixed_point, LinearProblem, ReducedSettings, Solution, SolveConfig, SolverKind,
};
use crate::sparse::{read_matrix_market, residual, SparseMatrix};
use crate::{norm2, parallel};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Built-in manifest: `name rcm diagscale`.
pub const DEFAULT_MANIFEST: &str = "\
fidap029 no no
raefsky5 no no
bcsstk29 yes no
sherman3 yes no
sherman5 yes no
fidap008 yes no
chipcool0 no no
e20r0000 yes no
spmsrtls no no
garon1 yes no
garon2 yes no
memplus no no
saylr4 no no
xenon1 yes yes
xenon2 yes yes
venkat01 no no
QC2534 no no
mplate yes no
light_in_tissue no no
kim1 no no
chevron2 no no
";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub name: String,
    pub rcm: bool,
    pub diagonal_scaling: bool,
}

/// Parses `name rcm diagscale` lines (`yes`/`no`); `#` starts a comment.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let flag = |s: &str, line: usize| match s {
        "yes" => Ok(true),
        "no" => Ok(false),
        other => Err(Error::Parse {
            line,
            message: format!("expected yes/no, found `{other}`"),
        }),
    };
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: i + 1,
                message: "manifest lines need `name rcm diagscale`".into(),
            });
        }
        out.push(ManifestEntry {
            name: fields[0].to_string(),
            rcm: flag(fields[1], i + 1)?,
            diagonal_scaling: flag(fields[2], i + 1)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchRecord {
    pub problem: String,
    pub solver: String,
    pub n: usize,
    /// Minimum solve time over repeats.
    pub wall_time_s: f64,
    pub median_wall_time_s: f64,
    /// Solve plus preconditioner construction, first repeat.
    pub total_time_s: f64,
    /// Cumulative time in mixing least-squares solves, first repeat.
    pub ls_time_s: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `‖b − A x‖ / ‖b‖` of the unpreconditioned system.
    pub final_relative_residual: f64,
    pub note: String,
}

/// Default `ε` of the reduced variants on linear systems. The heuristic bound
/// scales like `1/(‖r‖ ‖Δx‖)`, so on unnormalised systems a small `ε` keeps
/// every step at full size.
pub const LINEAR_EPSILON: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub solvers: Vec<SolverKind>,
    pub precond: PrecondKind,
    /// `mode` is ignored; `max_iter = 0` means `10 n`.
    pub base: SolveConfig,
    pub restart: usize,
    pub reduced: ReducedSettings,
    pub repeats: usize,
    /// Worker threads across problems; only honoured when `timing` is off.
    pub jobs: usize,
    pub timing: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            solvers: vec![
                SolverKind::Gmres,
                SolverKind::AlternatingAa,
                SolverKind::Subselected,
                SolverKind::Randomized,
            ],
            precond: PrecondKind::Ilu0,
            base: SolveConfig {
                max_iter: 0,
                ..SolveConfig::benchmark()
            },
            restart: 50,
            reduced: ReducedSettings {
                epsilon: LINEAR_EPSILON,
                ..ReducedSettings::default()
            },
            repeats: 1,
            jobs: 1,
            timing: true,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() {
            return Err(Error::InvalidArgument("no solvers selected".into()));
        }
        if self.repeats == 0 || self.restart == 0 {
            return Err(Error::InvalidArgument(
                "repeats and restart must be >= 1".into(),
            ));
        }
        SolveConfig {
            max_iter: self.base.max_iter.max(1),
            ..self.base.clone()
        }
        .validate()
    }
}

/// Runs every solver on one system.
pub fn run_problem(
    name: &str,
    a: &SparseMatrix,
    entry_flags: (bool, bool),
    config: &BenchConfig,
) -> Vec<BenchRecord> {
    let n = a.n_rows();
    let failed = |solver: SolverKind, note: String| BenchRecord {
        problem: name.to_string(),
        solver: solver.name().to_string(),
        n,
        wall_time_s: f64::INFINITY,
        median_wall_time_s: f64::INFINITY,
        total_time_s: f64::INFINITY,
        final_relative_residual: f64::NAN,
        note,
        ..BenchRecord::default()
    };
    let spec = PrecondSpec {
        kind: config.precond,
        rcm: entry_flags.0,
        diagonal_scaling: entry_flags.1,
    };
    let build_start = Instant::now();
    let pc = match build_preconditioner(a, &spec) {
        Ok(pc) => pc,
        Err(e) => {
            return config
                .solvers
                .iter()
                .map(|&s| failed(s, format!("preconditioner: {e}")))
                .collect()
        }
    };
    let build_time = build_start.elapsed().as_secs_f64();
    let b = match crate::sparse::matvec(a, &vec![1.0; n]) {
        Ok(b) => b,
        Err(e) => {
            return config
                .solvers
                .iter()
                .map(|&s| failed(s, e.to_string()))
                .collect()
        }
    };
    let base = SolveConfig {
        max_iter: if config.base.max_iter == 0 {
            10 * n
        } else {
            config.base.max_iter
        },
        ..config.base.clone()
    };
    let b_norm = norm2(&b);

    config
        .solvers
        .iter()
        .map(|&solver| {
            let run = || -> Result<(Solution, f64)> {
                let start = Instant::now();
                let sol = match solver {
                    SolverKind::Gmres => {
                        gmres_solve(a, &b, Some(&pc), config.restart, base.tol, base.max_iter)?
                    }
                    _ => {
                        let problem = LinearProblem::new(a, &b, Some(&pc))?;
                        run_fixed_point(solver, &base, &config.reduced, &problem, None)?
                    }
                };
                Ok((sol, start.elapsed().as_secs_f64()))
            };
            let mut times = Vec::with_capacity(config.repeats);
            let mut first = None;
            for _ in 0..config.repeats {
                match run() {
                    Ok((sol, t)) => {
                        times.push(t);
                        first.get_or_insert(sol);
                    }
                    Err(e) => return failed(solver, e.to_string()),
                }
            }
            let sol = first.expect("repeats >= 1");
            times.sort_by(f64::total_cmp);
            let rel = residual(a, &b, &sol.x).map_or(f64::NAN, |r| norm2(&r) / b_norm);
            BenchRecord {
                problem: name.to_string(),
                solver: solver.name().to_string(),
                n,
                wall_time_s: times[0],
                median_wall_time_s: times[times.len() / 2],
                total_time_s: times[0] + build_time,
                ls_time_s: sol.trace.ls_time_s,
                converged: sol.converged(),
                iterations: sol.iterations(),
                final_relative_residual: rel,
                note: sol.trace.breakdown_reason.clone().unwrap_or_default(),
            }
        })
        .collect()
}

/// Matrices to run: every manifest entry with a `<name>.mtx` file, then any
/// other `.mtx` file (no reordering, no scaling), sorted by name.
pub fn discover(
    matrix_dir: &Path,
    manifest: &[ManifestEntry],
) -> Result<Vec<(ManifestEntry, PathBuf)>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(matrix_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mtx"))
        .collect();
    files.sort();
    Ok(files
        .into_iter()
        .map(|path| {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let entry =
                manifest
                    .iter()
                    .find(|e| e.name == stem)
                    .cloned()
                    .unwrap_or(ManifestEntry {
                        name: stem,
                        rcm: false,
                        diagonal_scaling: false,
                    });
            (entry, path)
        })
        .collect())
}

/// Runs the suite over `matrix_dir`. A `manifest.txt` there replaces the
/// built-in manifest. Unreadable matrices are recorded as failures.
pub fn run_benchmark(matrix_dir: &Path, config: &BenchConfig) -> Result<Vec<BenchRecord>> {
    config.validate()?;
    let manifest_path = matrix_dir.join("manifest.txt");
    let manifest = if manifest_path.exists() {
        parse_manifest(&std::fs::read_to_string(&manifest_path)?)?
    } else {
        parse_manifest(DEFAULT_MANIFEST)?
    };
    let problems = discover(matrix_dir, &manifest)?;
    if problems.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no .mtx files in {}",
            matrix_dir.display()
        )));
    }
    let jobs = if config.timing { 1 } else { config.jobs };
    let per_problem = parallel::map(&problems, jobs, |(entry, path)| {
        match read_matrix_market(path) {
            Ok(a) => run_problem(&entry.name, &a, (entry.rcm, entry.diagonal_scaling), config),
            Err(e) => config
                .solvers
                .iter()
                .map(|s| BenchRecord {
                    problem: entry.name.clone(),
                    solver: s.name().to_string(),
                    wall_time_s: f64::INFINITY,
                    median_wall_time_s: f64::INFINITY,
                    total_time_s: f64::INFINITY,
                    final_relative_residual: f64::NAN,
                    note: format!("read: {e}"),
                    ..BenchRecord::default()
                })
                .collect(),
        }
    });
    Ok(per_problem.into_iter().flatten().collect())
}

pub fn write_records_csv<W: Write>(records: &[BenchRecord], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "problem,solver,n,wall_time_s,median_wall_time_s,total_time_s,ls_time_s,converged,iterations,final_relative_residual,note"
    )?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{:e},{:e},{:e},{:e},{},{},{:e},{}",
            r.problem,
            r.solver,
            r.n,
            r.wall_time_s,
            r.median_wall_time_s,
            r.total_time_s,
            r.ls_time_s,
            r.converged,
            r.iterations,
            r.final_relative_residual,
            r.note.replace([',', '\n'], ";")
        )?;
    }
    Ok(())
}

/// Upwind five-point convection-diffusion operator on a `k × k` grid,
/// `−Δu + β·∇u` with `β = (peclet, peclet/2)`, scaled by `h²`.
pub fn convection_diffusion(k: usize, peclet: f64) -> SparseMatrix {
    let h = 1.0 / (k + 1) as f64;
    let (bx, by) = (peclet * h, 0.5 * peclet * h);
    let idx = |i: usize, j: usize| i * k + j;
    let mut t = Vec::with_capacity(5 * k * k);
    for i in 0..k {
        for j in 0..k {
            let row = idx(i, j);
            t.push((row, row, 4.0 + bx + by));
            if i > 0 {
                t.push((row, idx(i - 1, j), -1.0 - by));
            }
            if i + 1 < k {
                t.push((row, idx(i + 1, j), -1.0));
            }
            if j > 0 {
                t.push((row, idx(i, j - 1), -1.0 - bx));
            }
            if j + 1 < k {
                t.push((row, idx(i, j + 1), -1.0));
            }
        }
    }
    SparseMatrix::from_triplets(k * k, k * k, &t).expect("indices are in range")
}
