//! Implicit collision stage of a discrete-ordinates kinetic equation, posed
//! as the fixed point `f = G(f)` with
//! `G(f) = (f^n + Δt η(f)) / (1 + Δt χ(f))` entrywise.
//!
//! The emissivity and opacity are synthetic. At energy `e`, with `⟨f⟩` the
//! angular average of `f` and `c = ρ κ(e)` the density-scaled coupling,
//!
//! ```text
//! χ(f) = a(e) + c (1 + ⟨f⟩)
//! η(f) = a(e) f_eq(e) + c (1 + ⟨f⟩) ⟨f⟩
//! ```
//!
//! with `a(e) = 0.5 exp(−e/50)`, `κ(e) = 1/(1 + e/10)` and
//! `f_eq(e) = exp(−e/100)`. The angular average of the fixed point solves
//! `⟨f⟩ (1 + Δt a) = ⟨f^n⟩ + Δt a f_eq` independently of the density, while
//! the local contraction factor `Δt c (1 + ⟨f⟩) / (1 + Δt a + Δt c (1 + ⟨f⟩))`
//! grows monotonically to 1 with the density.

use crate::error::{Error, Result};
use crate::solvers::{
    run_fixed_point, FixedPointProblem, ReducedSettings, SolveConfig, SolverKind,
};
use crate::{parallel, rng};
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

/// Lowest energy node.
pub const E_MIN: f64 = 0.1;

/// Angles × energies; unknowns are stored energy-major, `index = e · n_angles + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticGrid {
    pub n_angles: usize,
    pub n_energies: usize,
    pub energy_nodes: Vec<f64>,
    /// Uniform angular weights summing to 1.
    pub quadrature_weights: Vec<f64>,
}

impl KineticGrid {
    pub fn dim(&self) -> usize {
        self.n_angles * self.n_energies
    }

    /// `⟨f⟩` per energy node.
    pub fn angular_average(&self, f: &[f64]) -> Vec<f64> {
        f.chunks_exact(self.n_angles)
            .map(|block| {
                block
                    .iter()
                    .zip(&self.quadrature_weights)
                    .map(|(v, w)| v * w)
                    .sum()
            })
            .collect()
    }
}

impl Default for KineticGrid {
    fn default() -> Self {
        build_grid(110, 64, 300.0).expect("default grid is valid")
    }
}

/// Energy nodes `E_MIN · q^j` ending at `e_max`; a single node sits at `e_max`.
pub fn build_grid(n_angles: usize, n_energies: usize, e_max: f64) -> Result<KineticGrid> {
    if n_angles == 0 || n_energies == 0 {
        return Err(Error::InvalidArgument(
            "grid needs at least one angle and one energy".into(),
        ));
    }
    if !(e_max > E_MIN) && n_energies > 1 || !(e_max > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "e_max must exceed {E_MIN}, got {e_max}"
        )));
    }
    let energy_nodes = if n_energies == 1 {
        vec![e_max]
    } else {
        let q = (e_max / E_MIN).powf(1.0 / (n_energies - 1) as f64);
        (0..n_energies).map(|j| E_MIN * q.powi(j as i32)).collect()
    };
    Ok(KineticGrid {
        n_angles,
        n_energies,
        energy_nodes,
        quadrature_weights: vec![1.0 / n_angles as f64; n_angles],
    })
}

/// Previous time level and step size of the implicit stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitStage {
    pub f_n: Vec<f64>,
    pub dt: f64,
}

impl ImplicitStage {
    /// `f^n(a, e) = 0.5 exp(−e/100)`, `Δt = 1`.
    pub fn standard(grid: &KineticGrid) -> Self {
        let f_n = grid
            .energy_nodes
            .iter()
            .flat_map(|&e| std::iter::repeat_n(0.5 * (-e / 100.0).exp(), grid.n_angles))
            .collect();
        Self { f_n, dt: 1.0 }
    }
}

/// Per-energy coefficients of the synthetic emissivity and opacity.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticKernels {
    pub density: f64,
    pub absorption: Vec<f64>,
    pub equilibrium: Vec<f64>,
    pub coupling: Vec<f64>,
    n_angles: usize,
    weights: Vec<f64>,
}

pub fn synthetic_kernels(density: f64, grid: &KineticGrid) -> Result<SyntheticKernels> {
    if !(density > 0.0) || !density.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "density must be > 0, got {density}"
        )));
    }
    let e = &grid.energy_nodes;
    Ok(SyntheticKernels {
        density,
        absorption: e.iter().map(|e| 0.5 * (-e / 50.0).exp()).collect(),
        equilibrium: e.iter().map(|e| (-e / 100.0).exp()).collect(),
        coupling: e.iter().map(|e| density / (1.0 + e / 10.0)).collect(),
        n_angles: grid.n_angles,
        weights: grid.quadrature_weights.clone(),
    })
}

impl SyntheticKernels {
    fn averages(&self, f: &[f64]) -> Vec<f64> {
        f.chunks_exact(self.n_angles)
            .map(|block| block.iter().zip(&self.weights).map(|(v, w)| v * w).sum())
            .collect()
    }

    fn expand(&self, per_energy: impl Iterator<Item = f64>) -> Vec<f64> {
        per_energy
            .flat_map(|v| std::iter::repeat_n(v, self.n_angles))
            .collect()
    }

    pub fn eta_total(&self, f: &[f64]) -> Vec<f64> {
        let avg = self.averages(f);
        self.expand((0..avg.len()).map(|j| {
            self.absorption[j] * self.equilibrium[j] + self.coupling[j] * (1.0 + avg[j]) * avg[j]
        }))
    }

    pub fn chi_total(&self, f: &[f64]) -> Vec<f64> {
        let avg = self.averages(f);
        self.expand((0..avg.len()).map(|j| self.absorption[j] + self.coupling[j] * (1.0 + avg[j])))
    }

    /// Contraction factor of `G` at the exact fixed point, maximised over energies.
    pub fn contraction_at_fixed_point(&self, stage: &ImplicitStage) -> f64 {
        let u = fixed_point_average(self, stage);
        (0..u.len())
            .map(|j| {
                let c = stage.dt * self.coupling[j] * (1.0 + u[j]);
                c / (1.0 + stage.dt * self.absorption[j] + c)
            })
            .fold(0.0, f64::max)
    }
}

/// `G(f)`; fails on negative opacity.
pub fn boltzmann_g(
    f: &[f64],
    stage: &ImplicitStage,
    kernels: &SyntheticKernels,
) -> Result<Vec<f64>> {
    if f.len() != stage.f_n.len() {
        return Err(Error::DimensionMismatch {
            expected: stage.f_n.len(),
            found: f.len(),
        });
    }
    let eta = kernels.eta_total(f);
    let chi = kernels.chi_total(f);
    if let Some((index, &value)) = chi.iter().enumerate().find(|(_, c)| !(**c >= 0.0)) {
        return Err(Error::NegativeOpacity { index, value });
    }
    Ok(stage
        .f_n
        .iter()
        .zip(eta.iter().zip(&chi))
        .map(|(fn_, (e, c))| (fn_ + stage.dt * e) / (1.0 + stage.dt * c))
        .collect())
}

fn fixed_point_average(kernels: &SyntheticKernels, stage: &ImplicitStage) -> Vec<f64> {
    let un = kernels.averages(&stage.f_n);
    (0..un.len())
        .map(|j| {
            let da = stage.dt * kernels.absorption[j];
            (un[j] + da * kernels.equilibrium[j]) / (1.0 + da)
        })
        .collect()
}

/// The fixed point in closed form.
pub fn exact_fixed_point(kernels: &SyntheticKernels, stage: &ImplicitStage) -> Vec<f64> {
    let u = fixed_point_average(kernels, stage);
    let mut f = Vec::with_capacity(stage.f_n.len());
    for (j, block) in stage.f_n.chunks_exact(kernels.n_angles).enumerate() {
        let c = stage.dt * kernels.coupling[j] * (1.0 + u[j]);
        let da = stage.dt * kernels.absorption[j];
        for fn_ in block {
            f.push((fn_ + da * kernels.equilibrium[j] + c * u[j]) / (1.0 + da + c));
        }
    }
    f
}

/// `G` as a solver problem. Iterates outside `[0, 1]` are evaluated as
/// given (no clipping) and counted.
pub struct BoltzmannProblem {
    pub kernels: SyntheticKernels,
    pub stage: ImplicitStage,
    violations: AtomicUsize,
}

impl BoltzmannProblem {
    pub fn new(kernels: SyntheticKernels, stage: ImplicitStage) -> Self {
        Self {
            kernels,
            stage,
            violations: AtomicUsize::new(0),
        }
    }

    /// Evaluations whose input left `[0, 1]`.
    pub fn admissibility_violations(&self) -> usize {
        self.violations.load(Ordering::Relaxed)
    }
}

impl FixedPointProblem for BoltzmannProblem {
    fn dim(&self) -> usize {
        self.stage.f_n.len()
    }

    fn evaluate_g(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            self.violations.fetch_add(1, Ordering::Relaxed);
        }
        out.copy_from_slice(&boltzmann_g(x, &self.stage, &self.kernels)?);
        Ok(())
    }
}

/// Six densities, geometric from 0.1 to 1000.
pub fn default_densities() -> Vec<f64> {
    (0..6).map(|j| 0.1 * 10f64.powf(0.8 * j as f64)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub densities: Vec<f64>,
    pub solvers: Vec<SolverKind>,
    /// `mode` is ignored; each solver sets its own.
    pub base: SolveConfig,
    pub reduced: ReducedSettings,
    pub repeats: usize,
    pub jobs: usize,
    pub grid: KineticGrid,
    pub dt: f64,
}

impl Default for SuiteConfig {
    /// `m = 3`, `p = 3`, `ω = 1`, tolerance 1e-10, `ε = 1e-8`.
    fn default() -> Self {
        Self {
            densities: default_densities(),
            solvers: SolverKind::FIXED_POINT.to_vec(),
            base: SolveConfig {
                omega: 1.0,
                p: 3,
                m: 3,
                tol: 1e-10,
                max_iter: 100_000,
                ..SolveConfig::default()
            },
            reduced: ReducedSettings {
                epsilon: 1e-8,
                ..ReducedSettings::default()
            },
            repeats: 30,
            jobs: 1,
            grid: KineticGrid::default(),
            dt: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteCell {
    pub density: f64,
    pub solver: SolverKind,
    pub mean_iterations: f64,
    pub mean_wall_time_s: f64,
    pub converged: bool,
    pub admissibility_violations: usize,
    /// Solution of the first repeat.
    pub solution: Vec<f64>,
}

/// Runs every (density, solver) cell `repeats` times. The reduced variants
/// draw a fresh seed per repeat.
pub fn run_boltzmann_suite(config: &SuiteConfig) -> Result<Vec<SuiteCell>> {
    if config.densities.is_empty() || config.solvers.is_empty() {
        return Err(Error::InvalidArgument(
            "suite needs densities and solvers".into(),
        ));
    }
    if config.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be >= 1".into()));
    }
    if config.solvers.contains(&SolverKind::Gmres) {
        return Err(Error::InvalidArgument(
            "gmres does not apply to the kinetic problem".into(),
        ));
    }
    config.base.validate()?;
    let mut stage = ImplicitStage::standard(&config.grid);
    stage.dt = config.dt;
    let cells: Vec<(f64, SolverKind)> = config
        .densities
        .iter()
        .flat_map(|&d| config.solvers.iter().map(move |&s| (d, s)))
        .collect();
    let results = parallel::map(
        &cells,
        config.jobs,
        |&(density, solver)| -> Result<SuiteCell> {
            let kernels = synthetic_kernels(density, &config.grid)?;
            let problem = BoltzmannProblem::new(kernels, stage.clone());
            let mut iterations = 0usize;
            let mut time = 0.0;
            let mut converged = true;
            let mut solution = Vec::new();
            for rep in 0..config.repeats {
                let reduced = ReducedSettings {
                    seed: rng::derive_seed(config.reduced.seed, "boltzmann-repeat", rep as u64),
                    ..config.reduced.clone()
                };
                let start = Instant::now();
                let sol =
                    run_fixed_point(solver, &config.base, &reduced, &problem, Some(&stage.f_n))?;
                time += start.elapsed().as_secs_f64();
                iterations += sol.iterations();
                converged &= sol.converged();
                if rep == 0 {
                    solution = sol.x;
                }
            }
            Ok(SuiteCell {
                density,
                solver,
                mean_iterations: iterations as f64 / config.repeats as f64,
                mean_wall_time_s: time / config.repeats as f64,
                converged,
                admissibility_violations: problem.admissibility_violations(),
                solution,
            })
        },
    );
    results.into_iter().collect()
}

pub fn write_suite_csv<W: Write>(cells: &[SuiteCell], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "density,solver,mean_iterations,mean_wall_time_s,converged"
    )?;
    for c in cells {
        writeln!(
            w,
            "{:e},{},{},{:e},{}",
            c.density, c.solver, c.mean_iterations, c.mean_wall_time_s, c.converged
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inf_norm;
    use rand::Rng as _;

    fn small() -> KineticGrid {
        build_grid(6, 8, 300.0).unwrap()
    }

    #[test]
    fn default_grid_size() {
        let g = KineticGrid::default();
        assert_eq!(g.dim(), 7040);
        assert!((g.energy_nodes[0] - 0.1).abs() < 1e-15);
        assert!((g.energy_nodes[63] - 300.0).abs() < 1e-10);
        let q = g.energy_nodes[1] / g.energy_nodes[0];
        for w in g.energy_nodes.windows(2) {
            assert!((w[1] / w[0] - q).abs() < 1e-12);
        }
        assert!((g.quadrature_weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn single_energy_node() {
        let g = build_grid(3, 1, 42.0).unwrap();
        assert_eq!(g.energy_nodes, vec![42.0]);
        assert!(build_grid(0, 1, 1.0).is_err());
        assert!(build_grid(1, 2, 0.05).is_err());
    }

    #[test]
    fn straight_line_evaluation() {
        let grid = small();
        let k = synthetic_kernels(7.0, &grid).unwrap();
        let stage = ImplicitStage::standard(&grid);
        let mut g = rng::stream(1, "f");
        let f: Vec<f64> = (0..grid.dim()).map(|_| g.random::<f64>()).collect();
        let out = boltzmann_g(&f, &stage, &k).unwrap();
        for e in 0..grid.n_energies {
            let en = grid.energy_nodes[e];
            let block = &f[e * 6..e * 6 + 6];
            let avg = block.iter().sum::<f64>() / 6.0;
            let a = 0.5 * (-en / 50.0).exp();
            let c = 7.0 / (1.0 + en / 10.0);
            let eta = a * (-en / 100.0).exp() + c * (1.0 + avg) * avg;
            let chi = a + c * (1.0 + avg);
            for ang in 0..6 {
                let fnv = 0.5 * (-en / 100.0).exp();
                let want = (fnv + eta) / (1.0 + chi);
                assert!((out[e * 6 + ang] - want).abs() <= 1e-15 * want.max(1.0));
            }
        }
    }

    #[test]
    fn vanishing_collision_returns_previous_level() {
        let grid = small();
        let k = synthetic_kernels(1e-300, &grid).unwrap();
        let mut stage = ImplicitStage::standard(&grid);
        stage.dt = 1e-300;
        let out = boltzmann_g(&vec![0.3; grid.dim()], &stage, &k).unwrap();
        assert_eq!(out, stage.f_n);
        let p = BoltzmannProblem::new(k, stage.clone());
        let sol = run_fixed_point(
            SolverKind::Picard,
            &SolveConfig::default(),
            &ReducedSettings::default(),
            &p,
            None,
        )
        .unwrap();
        assert_eq!(sol.iterations(), 1);
    }

    #[test]
    fn isotropic_input_gives_isotropic_emissivity() {
        let grid = small();
        let k = synthetic_kernels(3.0, &grid).unwrap();
        let f: Vec<f64> = (0..grid.dim()).map(|i| (i / 6) as f64 / 10.0).collect();
        let eta = k.eta_total(&f);
        for block in eta.chunks(6) {
            assert!(block.iter().all(|v| *v == block[0]));
        }
    }

    #[test]
    fn closed_form_is_a_fixed_point() {
        let grid = small();
        for d in [0.1, 10.0, 1e4] {
            let k = synthetic_kernels(d, &grid).unwrap();
            let stage = ImplicitStage::standard(&grid);
            let f = exact_fixed_point(&k, &stage);
            let g = boltzmann_g(&f, &stage, &k).unwrap();
            let diff: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a - b).collect();
            assert!(inf_norm(&diff) < 1e-14);
            assert!(f.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn stiff_contraction_probe() {
        let grid = small();
        let k = synthetic_kernels(1e4, &grid).unwrap();
        let stage = ImplicitStage::standard(&grid);
        let mut g = rng::stream(5, "probe");
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let f: Vec<f64> = (0..grid.dim()).map(|_| g.random::<f64>()).collect();
            let h: Vec<f64> = (0..grid.dim()).map(|_| g.random::<f64>()).collect();
            let (gf, gh) = (
                boltzmann_g(&f, &stage, &k).unwrap(),
                boltzmann_g(&h, &stage, &k).unwrap(),
            );
            let num: Vec<f64> = gf.iter().zip(&gh).map(|(a, b)| a - b).collect();
            let den: Vec<f64> = f.iter().zip(&h).map(|(a, b)| a - b).collect();
            worst = worst.max(crate::norm2(&num) / crate::norm2(&den));
            assert!(gf.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert!(worst < 1.0, "{worst}");
    }

    #[test]
    fn contraction_grows_with_density() {
        let grid = small();
        let stage = ImplicitStage::standard(&grid);
        let rates: Vec<f64> = [0.1, 1.0, 10.0, 100.0]
            .iter()
            .map(|&d| {
                synthetic_kernels(d, &grid)
                    .unwrap()
                    .contraction_at_fixed_point(&stage)
            })
            .collect();
        assert!(rates.windows(2).all(|w| w[0] < w[1]));
        assert!(rates[3] < 1.0);
    }

    #[test]
    fn negative_opacity_rejected() {
        let grid = small();
        let k = synthetic_kernels(1.0, &grid).unwrap();
        let stage = ImplicitStage::standard(&grid);
        let err = boltzmann_g(&vec![-5.0; grid.dim()], &stage, &k).unwrap_err();
        assert!(matches!(err, Error::NegativeOpacity { .. }));
    }

    #[test]
    fn small_suite_agrees_with_closed_form() {
        let grid = small();
        let cfg = SuiteConfig {
            densities: vec![0.5, 20.0],
            repeats: 2,
            grid: grid.clone(),
            ..SuiteConfig::default()
        };
        let cells = run_boltzmann_suite(&cfg).unwrap();
        assert_eq!(cells.len(), 10);
        let stage = ImplicitStage::standard(&grid);
        for c in &cells {
            assert!(c.converged, "{} {}", c.density, c.solver);
            let exact = exact_fixed_point(&synthetic_kernels(c.density, &grid).unwrap(), &stage);
            let diff: Vec<f64> = c.solution.iter().zip(&exact).map(|(a, b)| a - b).collect();
            assert!(inf_norm(&diff) < 1e-8, "{} {}", c.density, c.solver);
        }
        let mut buf = Vec::new();
        write_suite_csv(&cells, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.starts_with("density,solver,mean_iterations,mean_wall_time_s,converged\n"));
    }
}
