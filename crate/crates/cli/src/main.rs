mod config;

use andersonkit::bench::{self, BenchConfig};
use andersonkit::boltzmann::{self, SuiteConfig};
use andersonkit::perturb;
use andersonkit::precond::{build_preconditioner, PrecondKind, PrecondSpec};
use andersonkit::sparse::{matvec, read_matrix_market};
use andersonkit::{
    gmres_solve, Aar, AdaptiveController, LinearProblem, Mode, ProjectionPlan, ReducedSettings,
    RowSelection, Solution, SolveConfig, SolverKind,
};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{parse_list, ConfigFile};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const MATRIX_DIR_ENV: &str = "ANDERSONKIT_MATRIX_DIR";

const KNOWN_KEYS: &[&str] = &[
    "mode",
    "omega",
    "p",
    "m",
    "tol",
    "max-iter",
    "projection",
    "batch-frac",
    "gamma0",
    "gamma-shrink",
    "epsilon",
    "k-star",
    "precond",
    "tau",
    "restart",
    "seed",
    "jobs",
    "eps",
    "repeats",
    "densities",
    "solvers",
    "rhs",
];

#[derive(Parser)]
#[command(
    name = "andersonkit",
    version,
    about = "Anderson-accelerated fixed-point solvers and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one sparse linear system and write the iteration trace.
    Solve {
        /// Matrix Market file.
        matrix: PathBuf,
        /// `ones` (b = A·1) or a file with one value per line.
        #[arg(long)]
        rhs: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Least-squares noise injection sweep on the diagonal test case.
    Perturb {
        /// Comma-separated noise levels.
        #[arg(long)]
        eps: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Benchmark a directory of Matrix Market files.
    Bench {
        /// Defaults to $ANDERSONKIT_MATRIX_DIR.
        matrix_dir: Option<PathBuf>,
        /// Comma-separated solver names.
        #[arg(long)]
        solvers: Option<String>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Where to write the performance profiles (default: `<out>.profiles.csv`).
        #[arg(long)]
        profile_out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Kinetic implicit-stage suite over a density sweep.
    Boltzmann {
        /// Comma-separated densities.
        #[arg(long)]
        densities: Option<String>,
        #[arg(long)]
        solvers: Option<String>,
        #[arg(long)]
        repeats: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Default)]
struct Common {
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// none, subselect or randomized.
    #[arg(long)]
    projection: Option<String>,
    #[arg(long)]
    batch_frac: Option<f64>,
    #[arg(long)]
    gamma0: Option<f64>,
    #[arg(long)]
    gamma_shrink: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    k_star: Option<usize>,
    /// none, ilu0 or ilut.
    #[arg(long)]
    precond: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    restart: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn file(&self) -> Result<ConfigFile> {
        match &self.config {
            Some(p) => ConfigFile::load(p, KNOWN_KEYS),
            None => Ok(ConfigFile::default()),
        }
    }

    fn solve_config(&self, file: &ConfigFile, defaults: &SolveConfig) -> Result<SolveConfig> {
        let cfg = SolveConfig {
            omega: file.pick(self.omega, "omega", defaults.omega)?,
            p: file.pick(self.p, "p", defaults.p)?,
            m: file.pick(self.m, "m", defaults.m)?,
            tol: file.pick(self.tol, "tol", defaults.tol)?,
            max_iter: file.pick(self.max_iter, "max-iter", defaults.max_iter)?,
            mode: defaults.mode,
        };
        Ok(cfg)
    }

    fn reduced(&self, file: &ConfigFile, defaults: &ReducedSettings) -> Result<ReducedSettings> {
        let r = ReducedSettings {
            batch_fraction: file.pick(self.batch_frac, "batch-frac", defaults.batch_fraction)?,
            gamma0: file.pick(self.gamma0, "gamma0", defaults.gamma0)?,
            gamma_shrink: file.pick(self.gamma_shrink, "gamma-shrink", defaults.gamma_shrink)?,
            epsilon: file.pick(self.epsilon, "epsilon", defaults.epsilon)?,
            k_star: file.pick_opt(self.k_star, "k-star")?.or(defaults.k_star),
            seed: file.pick(self.seed, "seed", defaults.seed)?,
        };
        // validates the ranges before any work starts
        AdaptiveController::new(r.gamma0, r.k_star.unwrap_or(1), r.epsilon, r.gamma_shrink)?;
        if !(r.batch_fraction > 0.0 && r.batch_fraction <= 1.0) {
            bail!("batch-frac must lie in (0, 1], got {}", r.batch_fraction);
        }
        Ok(r)
    }

    fn precond(&self, file: &ConfigFile, default: &str) -> Result<PrecondKind> {
        let name: String = file.pick(self.precond.clone(), "precond", default.to_string())?;
        let kind: PrecondKind = name.parse()?;
        let tau = file.pick_opt(self.tau, "tau")?;
        Ok(match (kind, tau) {
            (PrecondKind::Ilut { .. }, Some(tau)) if tau >= 0.0 => PrecondKind::Ilut { tau },
            (PrecondKind::Ilut { .. }, Some(tau)) => bail!("tau must be >= 0, got {tau}"),
            (k, _) => k,
        })
    }
}

fn header(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
}

fn config_pairs(c: &SolveConfig) -> Vec<(&'static str, String)> {
    vec![
        ("omega", c.omega.to_string()),
        ("p", c.p.to_string()),
        ("m", c.m.to_string()),
        ("tol", format!("{:e}", c.tol)),
        ("max-iter", c.max_iter.to_string()),
    ]
}

fn reduced_pairs(r: &ReducedSettings) -> Vec<(&'static str, String)> {
    vec![
        ("batch-frac", r.batch_fraction.to_string()),
        ("gamma0", r.gamma0.to_string()),
        ("gamma-shrink", r.gamma_shrink.to_string()),
        ("epsilon", format!("{:e}", r.epsilon)),
        ("k-star", r.k_star.map_or("auto".into(), |k| k.to_string())),
        ("seed", r.seed.to_string()),
    ]
}

/// Writes `text` to `path`, or to stdout when `path` is `None`.
fn emit(path: Option<&Path>, text: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text)?;
            Ok(())
        }
    }
}

fn read_rhs(spec: &str, a: &andersonkit::SparseMatrix) -> Result<Vec<f64>> {
    if spec == "ones" {
        return Ok(matvec(a, &vec![1.0; a.n_cols()])?);
    }
    let text = std::fs::read_to_string(spec).with_context(|| format!("reading rhs {spec}"))?;
    let b: Vec<f64> = text
        .split_whitespace()
        .enumerate()
        .map(|(i, s)| {
            s.parse()
                .with_context(|| format!("rhs value {}: `{s}`", i + 1))
        })
        .collect::<Result<_>>()?;
    if b.len() != a.n_rows() {
        bail!("rhs has {} values, matrix has {} rows", b.len(), a.n_rows());
    }
    Ok(b)
}

fn cmd_solve(matrix: &Path, rhs: Option<String>, common: &Common) -> Result<bool> {
    let file = common.file()?;
    let mode_name: String = file.pick(common.mode.clone(), "mode", "alternating_aa".to_string())?;
    let gmres = mode_name == "gmres";
    let mode: Mode = if gmres {
        Mode::AlternatingAa
    } else {
        mode_name.parse()?
    };
    let cfg = common.solve_config(
        &file,
        &SolveConfig {
            mode,
            ..SolveConfig::default()
        },
    )?;
    cfg.validate()?;
    let reduced = common.reduced(&file, &ReducedSettings::default())?;
    let projection: RowSelection = file
        .pick(
            common.projection.clone(),
            "projection",
            "randomized".to_string(),
        )?
        .parse()?;
    let precond = common.precond(&file, "none")?;
    let restart = file.pick(common.restart, "restart", 50usize)?;
    let rhs_spec: String = file.pick(rhs, "rhs", "ones".to_string())?;

    let a = read_matrix_market(matrix).with_context(|| format!("reading {}", matrix.display()))?;
    if !a.is_square() {
        bail!("matrix must be square, got {}x{}", a.n_rows(), a.n_cols());
    }
    let b = read_rhs(&rhs_spec, &a)?;
    let pc = match precond {
        PrecondKind::None => None,
        k => Some(build_preconditioner(&a, &PrecondSpec::new(k))?),
    };
    let n = a.n_rows();
    let sol: Solution = if gmres {
        gmres_solve(&a, &b, pc.as_ref(), restart, cfg.tol, cfg.max_iter)?
    } else {
        let problem = LinearProblem::new(&a, &b, pc.as_ref())?;
        let mut aar = Aar::new(cfg.clone());
        if mode == Mode::ReducedAlternatingAa {
            let plan = ProjectionPlan::new(projection, n, reduced.batch_fraction, reduced.seed)?;
            let k_star = reduced.k_star.unwrap_or(cfg.max_iter.min(n).max(1));
            let ctrl = AdaptiveController::new(
                reduced.gamma0,
                k_star,
                reduced.epsilon,
                reduced.gamma_shrink,
            )?;
            aar = aar.with_projection(plan).with_controller(ctrl);
        }
        aar.solve(&problem, None)?
    };

    let mut pairs = vec![
        ("command", "solve".to_string()),
        ("matrix", matrix.display().to_string()),
        ("n", n.to_string()),
        ("mode", mode_name),
        ("rhs", rhs_spec),
        ("precond", precond.to_string()),
    ];
    pairs.extend(config_pairs(&cfg));
    if gmres {
        pairs.push(("restart", restart.to_string()));
    }
    if mode == Mode::ReducedAlternatingAa && !gmres {
        pairs.push(("projection", projection.to_string()));
        pairs.extend(reduced_pairs(&reduced));
    }
    pairs.push(("status", sol.status().to_string()));
    pairs.push(("iterations", sol.iterations().to_string()));
    let mut out = header(&pairs).into_bytes();
    sol.trace.write_csv(&mut out)?;
    emit(common.out.as_deref(), &out)?;
    eprintln!(
        "{}: {} after {} iterations, relative residual {:.3e}",
        matrix.display(),
        sol.status(),
        sol.iterations(),
        sol.trace.relative_residual()
    );
    Ok(sol.converged())
}

fn cmd_perturb(eps: Option<String>, common: &Common) -> Result<()> {
    let file = common.file()?;
    let eps_values: Vec<f64> = match file.pick_opt(eps, "eps")? {
        Some(raw) => parse_list::<f64>(&raw)?,
        None => perturb::DEFAULT_EPSILONS.to_vec(),
    };
    let cfg = common.solve_config(&file, &perturb::noise_lab_config())?;
    cfg.validate()?;
    let k_star = file.pick(common.k_star, "k-star", 100usize)?;
    let seed = file.pick(common.seed, "seed", 0u64)?;
    let jobs = file.pick(common.jobs, "jobs", 1usize)?;
    let report = perturb::run_noise_sweep(&eps_values, &cfg, seed, k_star, jobs)?;

    let mut pairs = vec![
        ("command", "perturb".to_string()),
        ("mode", cfg.mode.to_string()),
        (
            "eps",
            eps_values
                .iter()
                .map(|e| format!("{e:e}"))
                .collect::<Vec<_>>()
                .join(";"),
        ),
        ("k-star", k_star.to_string()),
        ("seed", seed.to_string()),
    ];
    pairs.extend(config_pairs(&cfg));
    let mut out = header(&pairs).into_bytes();
    report.write_csv(&mut out)?;
    emit(common.out.as_deref(), &out)?;
    for e in &report.entries {
        eprintln!(
            "eps={:e}: {} after {} iterations",
            e.epsilon, e.status, e.iterations
        );
    }
    Ok(())
}

fn cmd_bench(
    dir: Option<PathBuf>,
    solvers: Option<String>,
    repeats: Option<usize>,
    profile_out: Option<PathBuf>,
    common: &Common,
) -> Result<()> {
    let file = common.file()?;
    let dir = match dir.or_else(|| std::env::var_os(MATRIX_DIR_ENV).map(PathBuf::from)) {
        Some(d) => d,
        None => bail!("no matrix directory given and {MATRIX_DIR_ENV} is not set"),
    };
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let defaults = BenchConfig::default();
    let solvers = match file.pick_opt(solvers, "solvers")? {
        Some(raw) => parse_list::<SolverKind>(&raw)?,
        None => defaults.solvers.clone(),
    };
    let cfg = BenchConfig {
        solvers,
        precond: common.precond(&file, "ilu0")?,
        base: common.solve_config(&file, &defaults.base)?,
        restart: file.pick(common.restart, "restart", defaults.restart)?,
        reduced: common.reduced(&file, &defaults.reduced)?,
        repeats: file.pick(repeats, "repeats", defaults.repeats)?,
        jobs: file.pick(common.jobs, "jobs", 1usize)?,
        timing: true,
    };
    let records = bench::run_benchmark(&dir, &cfg)?;
    let table = bench::performance_ratios(&records)?;
    let curves = bench::profile_curves(&table, &bench::default_tau_grid(0.25));

    let mut pairs = vec![
        ("command", "bench".to_string()),
        ("matrix-dir", dir.display().to_string()),
        (
            "solvers",
            cfg.solvers
                .iter()
                .map(|s| s.name())
                .collect::<Vec<_>>()
                .join(";"),
        ),
        ("precond", cfg.precond.to_string()),
        ("restart", cfg.restart.to_string()),
        ("repeats", cfg.repeats.to_string()),
    ];
    pairs.extend(config_pairs(&cfg.base));
    pairs.extend(reduced_pairs(&cfg.reduced));
    if cfg.base.max_iter == 0 {
        pairs.push(("max-iter-rule", "10n".to_string()));
    }
    let head = header(&pairs);
    let mut rec = head.clone().into_bytes();
    bench::write_records_csv(&records, &mut rec)?;
    let mut prof = head.into_bytes();
    bench::write_profiles_csv(&curves, &mut prof)?;
    match (&common.out, profile_out) {
        (Some(out), p) => {
            emit(Some(out), &rec)?;
            let p = p.unwrap_or_else(|| {
                let mut s = out.clone().into_os_string();
                s.push(".profiles.csv");
                PathBuf::from(s)
            });
            emit(Some(&p), &prof)?;
        }
        (None, Some(p)) => {
            emit(None, &rec)?;
            emit(Some(&p), &prof)?;
        }
        (None, None) => {
            emit(None, &rec)?;
            emit(None, b"\n")?;
            emit(None, &prof)?;
        }
    }
    Ok(())
}

fn cmd_boltzmann(
    densities: Option<String>,
    solvers: Option<String>,
    repeats: Option<usize>,
    common: &Common,
) -> Result<()> {
    let file = common.file()?;
    let defaults = SuiteConfig::default();
    let densities = match file.pick_opt(densities, "densities")? {
        Some(raw) => parse_list::<f64>(&raw)?,
        None => defaults.densities.clone(),
    };
    let solvers = match file.pick_opt(solvers, "solvers")? {
        Some(raw) => parse_list::<SolverKind>(&raw)?,
        None => defaults.solvers.clone(),
    };
    let cfg = SuiteConfig {
        densities,
        solvers,
        base: common.solve_config(&file, &defaults.base)?,
        reduced: common.reduced(&file, &defaults.reduced)?,
        repeats: file.pick(repeats, "repeats", defaults.repeats)?,
        jobs: file.pick(common.jobs, "jobs", 1usize)?,
        ..defaults
    };
    let cells = boltzmann::run_boltzmann_suite(&cfg)?;

    let mut pairs = vec![
        ("command", "boltzmann".to_string()),
        (
            "densities",
            cfg.densities
                .iter()
                .map(|d| format!("{d:e}"))
                .collect::<Vec<_>>()
                .join(";"),
        ),
        (
            "solvers",
            cfg.solvers
                .iter()
                .map(|s| s.name())
                .collect::<Vec<_>>()
                .join(";"),
        ),
        ("n-angles", cfg.grid.n_angles.to_string()),
        ("n-energies", cfg.grid.n_energies.to_string()),
        ("dt", cfg.dt.to_string()),
        ("repeats", cfg.repeats.to_string()),
    ];
    pairs.extend(config_pairs(&cfg.base));
    pairs.extend(reduced_pairs(&cfg.reduced));
    if cfg.repeats == 1 {
        pairs.push(("note", "single run per cell; timings are noisy".to_string()));
    }
    let mut out = header(&pairs).into_bytes();
    boltzmann::write_suite_csv(&cells, &mut out)?;
    emit(common.out.as_deref(), &out)?;
    let violations: usize = cells.iter().map(|c| c.admissibility_violations).sum();
    if violations > 0 {
        eprintln!("warning: {violations} evaluations saw iterates outside [0, 1]");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Solve {
            matrix,
            rhs,
            common,
        } => cmd_solve(&matrix, rhs, &common).map(|ok| if ok { 0 } else { 2 }),
        Command::Perturb { eps, common } => cmd_perturb(eps, &common).map(|_| 0),
        Command::Bench {
            matrix_dir,
            solvers,
            repeats,
            profile_out,
            common,
        } => cmd_bench(matrix_dir, solvers, repeats, profile_out, &common).map(|_| 0),
        Command::Boltzmann {
            densities,
            solvers,
            repeats,
            common,
        } => cmd_boltzmann(densities, solvers, repeats, &common).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
