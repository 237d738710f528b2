//! Configuration loading, single runs with snapshots, convergence studies
//! and their CSV reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::expr::{parse, Expr, ExprError, Var};
use crate::fem::{l2_error, FeSpace, FemError, FieldVector};
use crate::linalg::{LinearSolverOptions, SolverMethod};
use crate::mesh::{disk_mesh, interval_mesh, Mesh, MeshError};
use crate::oracle::{OracleError, SemiDiscrete1d};
use crate::stepper::{
    solve, solve_stationary, Discretization, FemDiscretization, NewtonOptions, SchemeConfig,
    SchemeKind, StepError, Trajectory,
};

/// Final time used when a configuration omits `T`.
pub const DEFAULT_T: f64 = 0.1;
/// Step sizes of the standard convergence ladder.
pub const DEFAULT_TAUS: [f64; 5] = [5e-3, 2.5e-3, 1.25e-3, 6.25e-4, 3.13e-4];
/// Step size of the standard fine-grid reference.
pub const DEFAULT_REFERENCE_TAU: f64 = 7.81e-5;

/// Relative slack when matching step sizes to whole step counts.
const LADDER_SLACK: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("{key}: {source}")]
    Expr {
        key: String,
        #[source]
        source: ExprError,
    },
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// 2 for bad input, 3 for solver failure, 1 for output errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Mesh(_) | Self::Invalid(_) => 2,
            Self::Step(_) | Self::Fem(_) | Self::Oracle(_) => 3,
            Self::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Interval { a: f64, b: f64, n_cells: usize },
    Disk { radius: f64, refine: usize },
    MeshFile { path: PathBuf },
}

impl DomainSpec {
    pub fn id(&self) -> String {
        match self {
            Self::Interval { a, b, n_cells } => format!("interval({a},{b},{n_cells})"),
            Self::Disk { radius, refine } => format!("disk({radius},{refine})"),
            Self::MeshFile { path } => format!("file({})", path.display()),
        }
    }

    pub fn build(&self) -> Result<Mesh, MeshError> {
        match self {
            Self::Interval { a, b, n_cells } => interval_mesh(*a, *b, *n_cells),
            Self::Disk { radius, refine } => disk_mesh(*radius, *refine),
            Self::MeshFile { path } => Mesh::read(path),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: RawProblem,
    #[serde(default)]
    scheme: RawScheme,
    #[serde(default)]
    newton: RawNewton,
    #[serde(default)]
    linear_solver: RawLinear,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    alpha: f64,
    #[serde(rename = "T", default = "default_t")]
    t_final: f64,
    domain: DomainSpec,
    diffusivity: String,
    source: String,
    initial: String,
    dirichlet_markers: Vec<i32>,
}

fn default_t() -> f64 {
    DEFAULT_T
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    #[serde(rename = "type")]
    kind: Option<String>,
    n_steps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNewton {
    tol: Option<f64>,
    max_iter: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLinear {
    tol: Option<f64>,
    max_iter: Option<usize>,
    method: Option<String>,
}

/// A validated problem: data, domain, scheme and solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub alpha: f64,
    pub t_final: f64,
    pub domain: DomainSpec,
    pub diffusivity: Expr,
    pub source: Expr,
    pub initial: Expr,
    pub dirichlet_markers: Vec<i32>,
    pub scheme: SchemeKind,
    /// Required by [`run_single`]; convergence studies set their own.
    pub n_steps: Option<usize>,
    pub newton: NewtonOptions,
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

fn parse_expr(key: &str, src: &str, forbidden: &[Var]) -> Result<Expr, ConfigError> {
    let e = parse(src).map_err(|source| ConfigError::Expr {
        key: key.into(),
        source,
    })?;
    for &v in forbidden {
        if e.depends_on(v) {
            return Err(invalid(key, format!("may not depend on {}", v.name())));
        }
    }
    Ok(e)
}

/// Parses a JSON configuration; relative mesh paths resolve against `base`.
pub fn parse_config(text: &str, base: Option<&Path>) -> Result<ProblemSpec, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Schema {
            path: if path == "." { "config".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })?;
    let p = raw.problem;
    if !(p.alpha > 0.0 && p.alpha < 1.0) {
        return Err(invalid("problem.alpha", "alpha out of (0,1)"));
    }
    if !(p.t_final > 0.0 && p.t_final.is_finite()) {
        return Err(invalid("problem.T", "T must be a positive number"));
    }
    if p.dirichlet_markers.is_empty() {
        return Err(invalid(
            "problem.dirichlet_markers",
            "at least one Dirichlet marker is required",
        ));
    }
    let domain = match p.domain {
        DomainSpec::Interval { a, b, n_cells } => {
            if !(b > a) || n_cells < 2 {
                return Err(invalid("problem.domain", "interval needs a < b and n_cells >= 2"));
            }
            if p.dirichlet_markers.iter().any(|m| *m != 1 && *m != 2) {
                return Err(invalid(
                    "problem.dirichlet_markers",
                    "interval ends carry markers 1 (left) and 2 (right)",
                ));
            }
            DomainSpec::Interval { a, b, n_cells }
        }
        DomainSpec::Disk { radius, refine } => {
            if !(radius > 0.0) {
                return Err(invalid("problem.domain.radius", "radius must be > 0"));
            }
            DomainSpec::Disk { radius, refine }
        }
        DomainSpec::MeshFile { path } => DomainSpec::MeshFile {
            path: match base {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path,
            },
        },
    };
    let diffusivity = parse_expr("problem.diffusivity", &p.diffusivity, &[])?;
    diffusivity.differentiate(Var::U).map_err(|source| ConfigError::Expr {
        key: "problem.diffusivity".into(),
        source,
    })?;
    let source = parse_expr("problem.source", &p.source, &[Var::U])?;
    let initial = parse_expr("problem.initial", &p.initial, &[Var::U, Var::T])?;
    let scheme = match raw.scheme.kind {
        None => SchemeKind::default(),
        Some(s) => s.parse().map_err(|m: String| invalid("scheme.type", m))?,
    };
    let mut newton = NewtonOptions::default();
    if let Some(tol) = raw.newton.tol {
        if !(tol > 0.0) {
            return Err(invalid("newton.tol", "must be > 0"));
        }
        newton.tol = tol;
    }
    if let Some(m) = raw.newton.max_iter {
        if m == 0 {
            return Err(invalid("newton.max_iter", "must be >= 1"));
        }
        newton.max_iter = m;
    }
    let mut linear = LinearSolverOptions::default();
    if let Some(tol) = raw.linear_solver.tol {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(invalid("linear_solver.tol", "must lie in (0, 1)"));
        }
        linear.rel_tol = tol;
    }
    linear.max_iter = raw.linear_solver.max_iter;
    if let Some(m) = raw.linear_solver.method {
        linear.method = m
            .parse::<SolverMethod>()
            .map_err(|msg| invalid("linear_solver.method", msg))?;
    }
    newton.linear = linear;
    Ok(ProblemSpec {
        alpha: p.alpha,
        t_final: p.t_final,
        domain,
        diffusivity,
        source,
        initial,
        dirichlet_markers: p.dirichlet_markers,
        scheme,
        n_steps: raw.scheme.n_steps,
        newton,
    })
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ProblemSpec, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path.parent())
}

impl ProblemSpec {
    pub fn mesh(&self) -> Result<Arc<Mesh>, HarnessError> {
        let mesh = self.domain.build()?;
        for m in &self.dirichlet_markers {
            if !mesh.boundary().iter().any(|f| f.marker == *m) {
                return Err(ConfigError::Invalid {
                    key: "problem.dirichlet_markers".into(),
                    message: format!("marker {m} does not occur on the mesh boundary"),
                }
                .into());
            }
        }
        Ok(Arc::new(mesh))
    }

    pub fn discretization(&self, mesh: Arc<Mesh>) -> Result<FemDiscretization, HarnessError> {
        let space = FeSpace::new(mesh, &self.dirichlet_markers);
        Ok(FemDiscretization::new(
            space,
            self.diffusivity.clone(),
            self.source.clone(),
        )?)
    }

    pub fn initial_state(&self, disc: &FemDiscretization) -> Result<FieldVector, HarnessError> {
        Ok(disc.space().interpolate(&self.initial, 0.0)?)
    }

    pub fn scheme_config(&self, n_steps: usize) -> SchemeConfig {
        SchemeConfig {
            kind: self.scheme,
            n_steps,
            alpha: self.alpha,
            t_final: self.t_final,
            newton: self.newton,
        }
    }
}

/// Whole step counts `N_k = N_0 2^k` matching a halving ladder of step
/// sizes to within 1 %. Rounded ladders such as 6.25e-4, 3.13e-4 map to
/// exact halvings; the step actually used is `T / N_k`.
pub fn step_counts(t_final: f64, taus: &[f64]) -> Result<Vec<usize>, HarnessError> {
    let first = *taus
        .first()
        .ok_or_else(|| HarnessError::Invalid("empty step-size list".into()))?;
    if !(first > 0.0) {
        return Err(HarnessError::Invalid(format!("step size {first} must be > 0")));
    }
    let n0 = (t_final / first).round().max(1.0) as usize;
    let mut counts = Vec::with_capacity(taus.len());
    for (k, &tau) in taus.iter().enumerate() {
        let n = n0 << k;
        let actual = t_final / n as f64;
        if !((tau - actual).abs() <= LADDER_SLACK * actual) {
            return Err(HarnessError::Invalid(format!(
                "step sizes must halve from T/{n0}: entry {k} is {tau}, expected {actual}"
            )));
        }
        counts.push(n);
    }
    Ok(counts)
}

/// Whole step count for a single step size, within 1 %.
pub fn step_count(t_final: f64, tau: f64) -> Result<usize, HarnessError> {
    let n = (t_final / tau).round().max(1.0) as usize;
    let actual = t_final / n as f64;
    if !(tau > 0.0 && (tau - actual).abs() <= LADDER_SLACK * actual) {
        return Err(HarnessError::Invalid(format!(
            "step size {tau} does not divide T = {t_final}"
        )));
    }
    Ok(n)
}

/// `rate_k = log2(e_k / e_{k+1})` for consecutive halvings.
pub fn empirical_rates(errors: &[(f64, f64)]) -> Result<Vec<f64>, HarnessError> {
    if errors.len() < 2 {
        return Err(HarnessError::Invalid("need at least two errors".into()));
    }
    errors
        .windows(2)
        .map(|w| {
            let ratio = w[0].0 / w[1].0;
            if !((ratio - 2.0).abs() <= 2.0 * LADDER_SLACK) {
                return Err(HarnessError::Invalid(format!(
                    "step sizes {} and {} are not a halving",
                    w[0].0, w[1].0
                )));
            }
            Ok((w[0].1 / w[1].1).log2())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    /// Exact-in-time solution of the semi-discrete linear 1-D problem.
    Oracle,
    /// The same scheme on the same mesh with this step size.
    FineTau(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub tau: f64,
    pub n_steps: usize,
    pub error: f64,
    pub max_newton_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub mesh_id: String,
    pub alpha: f64,
    pub scheme: SchemeKind,
    pub rows: Vec<ConvergenceRow>,
    /// One per consecutive pair of rows.
    pub rates: Vec<f64>,
    /// Step size of the reference run, `None` for the oracle.
    pub reference_tau: Option<f64>,
    /// Set when a solve failed; `rows` then holds the completed runs.
    pub failure: Option<String>,
}

impl ConvergenceReport {
    /// The last-pair rate, if there are at least two rows.
    pub fn final_rate(&self) -> Option<f64> {
        self.rates.last().copied()
    }

    /// `alpha,tau,error_l2,rate` with 17 significant digits and an empty
    /// rate on the first row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,tau,error_l2,rate\n");
        for (k, row) in self.rows.iter().enumerate() {
            let rate = if k == 0 {
                String::new()
            } else {
                format!("{:.16e}", self.rates[k - 1])
            };
            writeln!(out, "{:.16e},{:.16e},{:.16e},{}", self.alpha, row.tau, row.error, rate)
                .expect("writing to a String");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn oracle_reference(
    spec: &ProblemSpec,
    disc: &FemDiscretization,
    u0: &[f64],
) -> Result<FieldVector, HarnessError> {
    let not_supported = |why: &str| HarnessError::Invalid(format!("oracle reference unavailable: {why}"));
    let (a, b, n_cells) = match spec.domain {
        DomainSpec::Interval { a, b, n_cells } => (a, b, n_cells),
        _ => return Err(not_supported("the domain is not an interval")),
    };
    if !(spec.dirichlet_markers.contains(&1) && spec.dirichlet_markers.contains(&2)) {
        return Err(not_supported("both ends must be Dirichlet"));
    }
    let diffusivity = spec
        .diffusivity
        .as_constant()
        .ok_or_else(|| not_supported("the diffusivity is not constant"))?;
    if spec.source.depends_on(Var::T) {
        return Err(not_supported("the source depends on t"));
    }
    let load = disc.load(0.0)?;
    let sd = SemiDiscrete1d::new(spec.alpha, diffusivity, b - a, n_cells, u0, &load)?;
    Ok(sd.eval(spec.t_final)?)
}

/// Errors at `t = T` for each step size of a halving ladder, measured in
/// the discrete L² norm on one shared mesh.
pub fn run_convergence(
    spec: &ProblemSpec,
    taus: &[f64],
    reference: Reference,
) -> Result<ConvergenceReport, HarnessError> {
    let counts = step_counts(spec.t_final, taus)?;
    let n_max = *counts.last().expect("nonempty ladder");
    let mesh = spec.mesh()?;
    let disc = spec.discretization(mesh)?;
    let u0 = spec.initial_state(&disc)?;
    let mut report = ConvergenceReport {
        mesh_id: spec.domain.id(),
        alpha: spec.alpha,
        scheme: spec.scheme,
        rows: Vec::new(),
        rates: Vec::new(),
        reference_tau: None,
        failure: None,
    };
    let reference_state = match reference {
        Reference::Oracle => oracle_reference(spec, &disc, &u0)?,
        Reference::FineTau(tau_ref) => {
            let n_ref = step_count(spec.t_final, tau_ref)?;
            if n_ref < 4 * n_max {
                return Err(HarnessError::Invalid(format!(
                    "reference step {tau_ref} must be below a quarter of the smallest step"
                )));
            }
            report.reference_tau = Some(spec.t_final / n_ref as f64);
            match solve(&disc, u0.clone(), &spec.scheme_config(n_ref)) {
                Ok(tr) => tr.states.last().cloned().expect("trajectory holds u^0"),
                Err(e) => {
                    report.failure = Some(format!("reference run: {e}"));
                    return Ok(report);
                }
            }
        }
    };
    for &n in &counts {
        match solve(&disc, u0.clone(), &spec.scheme_config(n)) {
            Ok(tr) => {
                let error = l2_error(disc.mass(), tr.final_state(), &reference_state)?;
                report.rows.push(ConvergenceRow {
                    tau: spec.t_final / n as f64,
                    n_steps: n,
                    error,
                    max_newton_iterations: tr.newton_iterations.iter().copied().max().unwrap_or(0),
                });
            }
            Err(e) => {
                report.failure = Some(format!("run with N = {n}: {e}"));
                break;
            }
        }
    }
    if report.rows.len() >= 2 {
        let pairs: Vec<(f64, f64)> = report.rows.iter().map(|r| (r.tau, r.error)).collect();
        report.rates = empirical_rates(&pairs)?;
    }
    Ok(report)
}

/// Output of [`run_single`].
#[derive(Debug, Clone)]
pub struct SingleRun {
    pub trajectory: Trajectory,
    pub stationary: Option<FieldVector>,
    pub snapshot_steps: Vec<usize>,
    pub files: Vec<PathBuf>,
    pub mass: crate::linalg::SparseMatrix,
}

impl SingleRun {
    /// `‖u^n − u*‖` for every step, when the stationary solution was solved.
    pub fn distances_to_stationary(&self) -> Option<Vec<f64>> {
        let star = self.stationary.as_ref()?;
        Some(
            self.trajectory
                .states
                .iter()
                .map(|u| l2_error(&self.mass, u, star).expect("matching dofs"))
                .collect(),
        )
    }
}

/// Step indices of the requested snapshot times; each must be a grid time.
pub fn snapshot_steps(t_final: f64, n_steps: usize, times: &[f64]) -> Result<Vec<usize>, HarnessError> {
    let tau = t_final / n_steps as f64;
    times
        .iter()
        .map(|&t| {
            let n = (t / tau).round();
            if !(n >= 0.0 && n <= n_steps as f64 && (n * tau - t).abs() <= 1e-9 * t_final) {
                return Err(HarnessError::Invalid(format!(
                    "snapshot time {t} is not a multiple of tau = {tau} in [0, {t_final}]"
                )));
            }
            Ok(n as usize)
        })
        .collect()
}

fn nodal_csv(mesh: &Mesh, space: &FeSpace, u: &[f64]) -> String {
    let full = space.dofmap().expand(u);
    let mut out = String::from("node_x,node_y,u\n");
    for (p, v) in mesh.nodes().iter().zip(&full) {
        writeln!(out, "{:.16e},{:.16e},{:.16e}", p[0], p[1], v).expect("writing to a String");
    }
    out
}

/// Runs the configured scheme to `T`, optionally writing snapshot CSVs
/// (`snapshot_<n>.csv`) and solving the stationary problem at `F(T)`
/// (`stationary.csv`).
pub fn run_single(
    spec: &ProblemSpec,
    snapshot_times: &[f64],
    stationary: bool,
    out_dir: Option<&Path>,
) -> Result<SingleRun, HarnessError> {
    let n_steps = spec.n_steps.ok_or_else(|| {
        HarnessError::Config(ConfigError::Invalid {
            key: "scheme.n_steps".into(),
            message: "required for a single run".into(),
        })
    })?;
    let steps = snapshot_steps(spec.t_final, n_steps, snapshot_times)?;
    let mesh = spec.mesh()?;
    let disc = spec.discretization(mesh.clone())?;
    let u0 = spec.initial_state(&disc)?;
    let trajectory = solve(&disc, u0, &spec.scheme_config(n_steps))?;
    let stationary = if stationary {
        Some(solve_stationary(&disc, spec.t_final, trajectory.final_state(), &spec.newton)?.solution)
    } else {
        None
    };
    let mut files = Vec::new();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        for &n in &steps {
            let path = dir.join(format!("snapshot_{n:06}.csv"));
            fs::write(&path, nodal_csv(&mesh, disc.space(), &trajectory.states[n]))?;
            files.push(path);
        }
        if let Some(star) = &stationary {
            let path = dir.join("stationary.csv");
            fs::write(&path, nodal_csv(&mesh, disc.space(), star))?;
            files.push(path);
        }
    }
    Ok(SingleRun {
        trajectory,
        stationary,
        snapshot_steps: steps,
        files,
        mass: disc.mass().clone(),
    })
}
