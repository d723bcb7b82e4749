//! Model problems, experiment presets and the tables and curves they emit.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptivity::{adapt_loop, AdaptConfig, AdaptError, ExactSolution, Marker};
use crate::assembly::{Lame, Operator, ProblemData};
use crate::bddc::{BddcOptions, ConstraintPolicy};
use crate::forest::{Forest, ForestError, Pattern};
use crate::krylov::PcgOptions;
use crate::solver::{solve_bddc, SolveError, Substructured};
use crate::substructuring::WeightMode;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("{n_subdomains} subdomains is not a {dim}-dimensional lattice with H/h = {h_ratio}")]
    Lattice { n_subdomains: usize, dim: usize, h_ratio: usize },
    #[error("no preset named {0:?}")]
    UnknownPreset(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Adapt(#[from] AdaptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// `−Δu = 1`, `u = 0` on the boundary.
    PoissonConst,
    /// Manufactured solution with a steep spherical internal layer.
    PoissonArctan,
    /// Clamped cube under a constant body force.
    Elasticity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub dim: usize,
    /// Layer steepness of the arctan solution.
    pub s: f64,
    pub young: f64,
    pub nu: f64,
    pub force: [f64; 3],
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self { kind: ProblemKind::PoissonConst, dim: 3, s: 60.0, young: 1e10, nu: 1.0 / 3.0, force: [0.0, 0.0, -1e5] }
    }
}

impl ProblemSpec {
    pub fn poisson_const(dim: usize) -> Self {
        Self { dim, ..Default::default() }
    }

    pub fn poisson_arctan(dim: usize) -> Self {
        Self { kind: ProblemKind::PoissonArctan, dim, ..Default::default() }
    }

    pub fn elasticity() -> Self {
        Self { kind: ProblemKind::Elasticity, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.dim != 2 && self.dim != 3 {
            return Err(ProblemError::Invalid(format!("dimension {}", self.dim)));
        }
        match self.kind {
            ProblemKind::Elasticity => {
                if self.dim != 3 {
                    return Err(ProblemError::Invalid("elasticity is 3D only".into()));
                }
                Lame::from_young(self.young, self.nu).map_err(|e| ProblemError::Invalid(e.to_string()))?;
            }
            ProblemKind::PoissonArctan if !(self.s > 0.0) => {
                return Err(ProblemError::Invalid(format!("steepness {}", self.s)));
            }
            _ => {}
        }
        Ok(())
    }

    /// Closed-form solution, when known.
    pub fn exact(&self) -> Option<ArctanSolution> {
        (self.kind == ProblemKind::PoissonArctan).then(|| ArctanSolution::new(self.dim, self.s))
    }

    /// Constraint policy suited to the operator.
    pub fn policy(&self) -> ConstraintPolicy {
        ConstraintPolicy::for_operator(self.operator())
    }
}

impl ProblemData for ProblemSpec {
    fn operator(&self) -> Operator {
        match self.kind {
            ProblemKind::Elasticity => Operator::Elasticity(Lame::from_young(self.young, self.nu).expect("elastic parameters not validated")),
            _ => Operator::Laplace,
        }
    }

    fn source(&self, x: [f64; 3], out: &mut [f64]) {
        match self.kind {
            ProblemKind::PoissonConst => out[0] = 1.0,
            ProblemKind::PoissonArctan => out[0] = ArctanSolution::new(self.dim, self.s).minus_laplacian(x),
            ProblemKind::Elasticity => out.copy_from_slice(&self.force),
        }
    }

    fn dirichlet(&self, x: [f64; 3], out: &mut [f64]) {
        match self.kind {
            ProblemKind::PoissonArctan => ArctanSolution::new(self.dim, self.s).value(x, out),
            _ => out.fill(0.0),
        }
    }
}

/// `u*(x) = arctan(s (r − π/3))`, `r = |x − c|`, `c = (1.25, −0.25[, −0.25])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArctanSolution {
    pub dim: usize,
    pub s: f64,
    pub centre: [f64; 3],
    pub radius: f64,
}

impl ArctanSolution {
    pub fn new(dim: usize, s: f64) -> Self {
        let centre = if dim == 3 { [1.25, -0.25, -0.25] } else { [1.25, -0.25, 0.0] };
        Self { dim, s, centre, radius: PI / 3.0 }
    }

    pub fn distance(&self, x: [f64; 3]) -> f64 {
        (0..self.dim).map(|a| (x[a] - self.centre[a]).powi(2)).sum::<f64>().sqrt()
    }

    /// `−Δu* = −(u'' + (d − 1) u' / r)`.
    pub fn minus_laplacian(&self, x: [f64; 3]) -> f64 {
        let r = self.distance(x);
        let t = self.s * (r - self.radius);
        let q = 1.0 + t * t;
        let d1 = self.s / q;
        let d2 = -2.0 * self.s * self.s * t / (q * q);
        -(d2 + (self.dim as f64 - 1.0) * d1 / r)
    }
}

impl ExactSolution for ArctanSolution {
    fn value(&self, x: [f64; 3], out: &mut [f64]) {
        out[0] = (self.s * (self.distance(x) - self.radius)).atan();
    }

    fn gradient(&self, x: [f64; 3], out: &mut [[f64; 3]]) {
        let r = self.distance(x);
        let t = self.s * (r - self.radius);
        let d1 = self.s / (1.0 + t * t);
        out[0] = [0.0; 3];
        for a in 0..self.dim {
            out[0][a] = d1 * (x[a] - self.centre[a]) / r;
        }
    }
}

/// How the mesh of a run is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForestRecipe {
    /// Regular `k^d` subdomains of `h_ratio^d` elements each; `k` follows from `N_S`.
    Lattice { h_ratio: usize },
    /// `level` uniform refinements.
    Uniform { level: u8 },
    /// `level` uniform refinements followed by circle and square refinements.
    Refined { level: u8, circle: usize, square: usize },
}

impl ForestRecipe {
    pub fn build(&self, dim: usize, n_subdomains: usize) -> Result<Forest, ProblemError> {
        match *self {
            ForestRecipe::Lattice { h_ratio } => {
                let bad = || ProblemError::Lattice { n_subdomains, dim, h_ratio };
                let k = (n_subdomains as f64).powf(1.0 / dim as f64).round() as usize;
                if k == 0 || k.pow(dim as u32) != n_subdomains || !h_ratio.is_power_of_two() {
                    return Err(bad());
                }
                let fine = h_ratio.trailing_zeros() as u8;
                if k.is_power_of_two() {
                    Ok(Forest::uniform(dim, k.trailing_zeros() as u8 + fine)?)
                } else {
                    Ok(Forest::brick(dim, k, fine)?)
                }
            }
            ForestRecipe::Uniform { level } => Ok(Forest::uniform(dim, level)?),
            ForestRecipe::Refined { level, circle, square } => {
                Ok(Forest::uniform(dim, level)?.apply_pattern(Pattern::Circle, circle)?.apply_pattern(Pattern::Square, square)?)
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            ForestRecipe::Lattice { h_ratio } => format!("H/h={h_ratio}"),
            ForestRecipe::Uniform { level } => format!("R_U={level}"),
            ForestRecipe::Refined { level, circle, square } => format!("R_U={level} R_C={circle} R_S={square}"),
        }
    }
}

fn default_order() -> usize {
    1
}

fn default_levels() -> usize {
    2
}

fn default_weights() -> WeightMode {
    WeightMode::Cardinality
}

/// A family of runs: every mesh recipe crossed with every subdomain count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPreset {
    pub name: String,
    #[serde(default)]
    pub problem: ProblemSpec,
    pub meshes: Vec<ForestRecipe>,
    pub subdomains: Vec<usize>,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_weights")]
    pub weights: WeightMode,
    /// Second-level subdomain count; `round(√N_S)` when absent.
    #[serde(default)]
    pub second_level_subdomains: Option<usize>,
}

impl ExperimentPreset {
    fn new(name: &str, problem: ProblemSpec, meshes: Vec<ForestRecipe>, subdomains: Vec<usize>) -> Self {
        Self {
            name: name.into(),
            problem,
            meshes,
            subdomains,
            order: 1,
            levels: 2,
            weights: WeightMode::Cardinality,
            second_level_subdomains: None,
        }
    }

    pub fn bddc_options(&self) -> BddcOptions {
        BddcOptions {
            levels: self.levels,
            weights: self.weights,
            policy: self.problem.policy(),
            second_level_subdomains: self.second_level_subdomains,
            ..Default::default()
        }
    }
}

/// Built-in presets mirroring the studies of the method at desk scale.
pub fn builtin_presets() -> Vec<ExperimentPreset> {
    let lattice = |h| ForestRecipe::Lattice { h_ratio: h };
    let p3 = ProblemSpec::poisson_const(3);
    let mut out = vec![
        ExperimentPreset::new("poisson-weak", p3, vec![lattice(4)], vec![8, 27, 64]),
        ExperimentPreset { levels: 3, ..ExperimentPreset::new("poisson-weak-3l", p3, vec![lattice(4)], vec![64, 125]) },
        ExperimentPreset::new("poisson-hh", p3, vec![lattice(4), lattice(8), lattice(16)], vec![64]),
        ExperimentPreset::new("poisson-prescribed", p3, vec![ForestRecipe::Refined { level: 3, circle: 2, square: 2 }], vec![8, 16, 32]),
        ExperimentPreset { order: 4, ..ExperimentPreset::new("poisson-p4", p3, vec![lattice(2)], vec![8, 27]) },
        ExperimentPreset::new("elasticity", ProblemSpec::elasticity(), vec![lattice(4)], vec![8, 27]),
        ExperimentPreset::new(
            "nonuniformity",
            p3,
            vec![ForestRecipe::Uniform { level: 4 }, ForestRecipe::Refined { level: 4, circle: 1, square: 1 }],
            vec![8, 9],
        ),
        ExperimentPreset::new(
            "nonuniformity-64",
            p3,
            vec![ForestRecipe::Uniform { level: 5 }, ForestRecipe::Refined { level: 5, circle: 1, square: 1 }],
            vec![64, 65],
        ),
        ExperimentPreset::new("arctan-3d", ProblemSpec::poisson_arctan(3), vec![ForestRecipe::Uniform { level: 4 }], vec![8]),
    ];
    out.push(ExperimentPreset { weights: WeightMode::Stiffness, name: "poisson-weak-stiffness".into(), ..out[0].clone() });
    out
}

pub fn find_preset(presets: &[ExperimentPreset], name: &str) -> Result<ExperimentPreset, ProblemError> {
    presets.iter().find(|p| p.name == name).cloned().ok_or_else(|| ProblemError::UnknownPreset(name.into()))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PresetFile {
    #[serde(default)]
    preset: Vec<ExperimentPreset>,
}

/// Presets from a TOML document of `[[preset]]` tables.
pub fn parse_presets(text: &str) -> Result<Vec<ExperimentPreset>, ProblemError> {
    let file: PresetFile = toml::from_str(text).map_err(|e| ProblemError::Config(e.to_string()))?;
    for p in &file.preset {
        p.problem.validate()?;
    }
    Ok(file.preset)
}

pub fn load_presets(path: &Path) -> Result<Vec<ExperimentPreset>, ProblemError> {
    let text = std::fs::read_to_string(path).map_err(|e| ProblemError::Io(e.to_string()))?;
    parse_presets(&text)
}

/// `(min, max, avg)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Spread {
    pub min: f64,
    pub max: f64,
    pub avg: f64,
}

impl Spread {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Spread {
        let (mut min, mut max, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
        for v in values {
            min = min.min(v);
            max = max.max(v);
            sum += v;
            n += 1;
        }
        if n == 0 {
            return Spread::default();
        }
        Spread { min, max, avg: sum / n as f64 }
    }
}

/// One configuration of a preset: global and local properties of the solve.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TableRow {
    pub mesh: String,
    pub n_subdomains: usize,
    pub n: usize,
    pub n_interface: usize,
    pub n_coarse: usize,
    /// `(N_S, nΓ, n_C)` of the second level in 3-level runs.
    pub second_level: Option<(usize, usize, usize)>,
    pub iterations: usize,
    pub condition: f64,
    pub setup_seconds: f64,
    pub pcg_seconds: f64,
    pub local_coarse: Spread,
    pub local_factor_seconds: Spread,
    pub local_solve_seconds: Spread,
    /// Failure message; the other columns are zero when set.
    pub error: Option<String>,
}

pub const TABLE_CSV_HEADER: &str = "mesh,N_S,N_S2,n,n_per_subdomain,n_interface,n_interface2,n_coarse,n_coarse2,iterations,condition,t_setup,t_pcg,\
coarse_min,coarse_max,coarse_avg,fact_min,fact_max,fact_avg,sol_min,sol_max,sol_avg,status";

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut s = String::from(TABLE_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let (s2, g2, c2) = match r.second_level {
            Some((a, b, c)) => (a.to_string(), b.to_string(), c.to_string()),
            None => Default::default(),
        };
        let per = if r.n_subdomains > 0 { r.n as f64 / r.n_subdomains as f64 } else { 0.0 };
        let status = match &r.error {
            Some(e) => format!("\"error: {}\"", e.replace('"', "'")),
            None => "ok".into(),
        };
        let (lc, lf, ls) = (r.local_coarse, r.local_factor_seconds, r.local_solve_seconds);
        writeln!(
            s,
            "{},{},{s2},{},{:.1},{},{g2},{},{c2},{},{:.3},{:.4},{:.4},{},{},{:.2},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{status}",
            r.mesh, r.n_subdomains, r.n, per, r.n_interface, r.n_coarse, r.iterations, r.condition, r.setup_seconds, r.pcg_seconds,
            lc.min, lc.max, lc.avg, lf.min, lf.max, lf.avg, ls.min, ls.max, ls.avg
        )
        .unwrap();
    }
    s
}

/// Solve one configuration of a preset.
pub fn run_configuration(preset: &ExperimentPreset, mesh: &ForestRecipe, n_subdomains: usize) -> Result<TableRow, ProblemError> {
    preset.problem.validate()?;
    let forest = mesh.build(preset.problem.dim, n_subdomains)?;
    let sub = Substructured::new(&forest, preset.order, n_subdomains, &preset.problem)?;
    let out = solve_bddc(&sub, preset.bddc_options(), PcgOptions::default())?;
    let diag = out.preconditioner.diagnostics();
    Ok(TableRow {
        mesh: mesh.label(),
        n_subdomains,
        n: out.n,
        n_interface: out.n_interface,
        n_coarse: out.n_coarse,
        second_level: out.second_level,
        iterations: out.report.iterations,
        condition: out.report.condition_estimate(),
        setup_seconds: out.setup_seconds,
        pcg_seconds: out.pcg_seconds,
        local_coarse: Spread::of(diag.iter().map(|d| d.n_coarse as f64)),
        local_factor_seconds: Spread::of(diag.iter().map(|d| d.factor_seconds)),
        local_solve_seconds: Spread::of(diag.iter().map(|d| d.solve_seconds)),
        error: None,
    })
}

/// One row per (mesh, N_S); failures are recorded in the row.
pub fn run_preset(preset: &ExperimentPreset) -> Vec<TableRow> {
    let mut rows = Vec::new();
    for mesh in &preset.meshes {
        for &ns in &preset.subdomains {
            rows.push(run_configuration(preset, mesh, ns).unwrap_or_else(|e| TableRow {
                mesh: mesh.label(),
                n_subdomains: ns,
                error: Some(e.to_string()),
                ..Default::default()
            }));
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefinementMode {
    Uniform,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergencePoint {
    pub n_dofs: usize,
    pub l2: f64,
    pub h1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceCurve {
    pub order: usize,
    pub mode: RefinementMode,
    pub dim: usize,
    pub points: Vec<ConvergencePoint>,
}

impl ConvergenceCurve {
    /// Log-log slopes `(L², H¹)` of error against DOFs between successive points.
    pub fn slopes(&self) -> Vec<(f64, f64)> {
        self.points
            .windows(2)
            .map(|w| {
                let dn = (w[1].n_dofs as f64 / w[0].n_dofs as f64).ln();
                ((w[1].l2 / w[0].l2).ln() / dn, (w[1].h1 / w[0].h1).ln() / dn)
            })
            .collect()
    }

    /// Slopes converted to orders in `h` (`−d · slope`).
    pub fn observed_orders(&self) -> Vec<(f64, f64)> {
        let d = self.dim as f64;
        self.slopes().into_iter().map(|(a, b)| (-d * a, -d * b)).collect()
    }

    /// H¹ error at `n` DOFs by log-log interpolation; `None` outside the curve.
    pub fn h1_at(&self, n: f64) -> Option<f64> {
        self.points.windows(2).find_map(|w| {
            let (n0, n1) = (w[0].n_dofs as f64, w[1].n_dofs as f64);
            if n < n0 || n > n1 {
                return None;
            }
            let t = if n1 > n0 { (n.ln() - n0.ln()) / (n1.ln() - n0.ln()) } else { 0.0 };
            Some((w[0].h1.ln() * (1.0 - t) + w[1].h1.ln() * t).exp())
        })
    }

    /// Whitespace-separated `n_dofs L2 H1` lines for plotting.
    pub fn to_gnuplot(&self) -> String {
        let mode = match self.mode {
            RefinementMode::Uniform => "uniform",
            RefinementMode::Adaptive => "adaptive",
        };
        let mut s = format!("# p={} {mode}\n# n_dofs L2 H1\n", self.order);
        for p in &self.points {
            writeln!(s, "{} {:e} {:e}", p.n_dofs, p.l2, p.h1).unwrap();
        }
        s
    }
}

/// Setup of a convergence study on the arctan problem.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceSetup {
    pub initial_level: u8,
    pub steps: usize,
    pub n_subdomains: usize,
    /// Marker for adaptive runs; the order-dependent fraction marker when absent.
    pub marker: Option<Marker>,
}

/// Error curves for each order in `orders`.
pub fn convergence_report(problem: &ProblemSpec, orders: &[usize], mode: RefinementMode, setup: &ConvergenceSetup) -> Result<Vec<ConvergenceCurve>, ProblemError> {
    problem.validate()?;
    let exact = problem.exact().ok_or_else(|| ProblemError::Invalid("convergence needs a known solution".into()))?;
    let initial = Forest::uniform(problem.dim, setup.initial_level)?;
    let mut curves = Vec::with_capacity(orders.len());
    for &order in orders {
        let marker = match mode {
            RefinementMode::Uniform => Marker::All,
            RefinementMode::Adaptive => setup.marker.unwrap_or(Marker::default_for_order(order)),
        };
        let config = AdaptConfig {
            order,
            n_subdomains: setup.n_subdomains,
            steps: setup.steps,
            marker,
            bddc: BddcOptions { policy: problem.policy(), ..Default::default() },
            pcg: PcgOptions { tol: 1e-10, max_iter: 1000 },
        };
        let run = adapt_loop(&initial, problem, &exact, &config)?;
        let points = run.steps.iter().map(|s| ConvergencePoint { n_dofs: s.n_dofs, l2: s.l2_error, h1: s.h1_error }).collect();
        curves.push(ConvergenceCurve { order, mode, dim: problem.dim, points });
    }
    Ok(curves)
}

#[cfg(test)]
mod tests;
