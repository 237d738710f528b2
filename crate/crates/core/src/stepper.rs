//! Convolution-quadrature time stepping for `M ∂ₜᵅu + K(u)u = F(t)`.
//!
//! Each step solves the fully implicit system
//!
//! ```text
//! G(v) = τ^{−α} b_0 M v + K(v) v − RHS_n = 0
//! RHS_n = F(t_n) + [n = 1] ½(F(0) − K(u0) u0) + τ^{−α} b_0 M u0 − M H_n
//! ```
//!
//! with `H_n = τ^{−α} Σ_{j≥1} b_j (u^{n−j} − u0)` by Newton's method with
//! Jacobian `τ^{−α} b_0 M + K(v) + C(v)`. The bracketed correction is only
//! applied by [`SchemeKind::Bdf2Corrected`].

use std::str::FromStr;

use thiserror::Error;

use crate::cq::{CqError, CqWeights};
use crate::expr::{Expr, Var};
use crate::fem::{FeSpace, FemError, FieldVector};
use crate::linalg::{solve_linear, LinalgError, LinearSolverOptions, SparseMatrix, TripletBuilder};

/// Step-halving limit of the Newton safeguard.
pub const MAX_HALVINGS: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("Newton did not converge at step {step} after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged {
        step: usize,
        iterations: usize,
        residual: f64,
    },
    #[error("Newton line search stagnated at step {step}, iteration {iteration} (residual {residual:e})")]
    LineSearch {
        step: usize,
        iteration: usize,
        residual: f64,
    },
    #[error("linear solver failed at step {step}: relative residual {relative_residual:e}")]
    LinearSolver { step: usize, relative_residual: f64 },
    #[error("invalid scheme configuration: {0}")]
    Config(String),
    #[error("vector of length {found} does not match {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Cq(#[from] CqError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl StepError {
    fn at_step(self, step: usize) -> Self {
        match self {
            Self::NewtonDiverged { iterations, residual, .. } => Self::NewtonDiverged {
                step,
                iterations,
                residual,
            },
            Self::LineSearch { iteration, residual, .. } => Self::LineSearch {
                step,
                iteration,
                residual,
            },
            Self::LinearSolver { relative_residual, .. } => Self::LinearSolver {
                step,
                relative_residual,
            },
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SchemeKind {
    Bdf1,
    Bdf2,
    #[default]
    Bdf2Corrected,
}

impl SchemeKind {
    pub fn order(self) -> u32 {
        match self {
            Self::Bdf1 => 1,
            Self::Bdf2 | Self::Bdf2Corrected => 2,
        }
    }

    pub fn corrected(self) -> bool {
        self == Self::Bdf2Corrected
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Bdf1 => "bdf1",
            Self::Bdf2 => "bdf2",
            Self::Bdf2Corrected => "bdf2_corrected",
        }
    }
}

impl FromStr for SchemeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bdf1" => Ok(Self::Bdf1),
            "bdf2" => Ok(Self::Bdf2),
            "bdf2_corrected" => Ok(Self::Bdf2Corrected),
            other => Err(format!(
                "unknown scheme '{other}'; expected bdf1, bdf2 or bdf2_corrected"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Bound on `‖G‖₂ / max(1, ‖RHS‖₂)`.
    pub tol: f64,
    pub max_iter: usize,
    pub linear: LinearSolverOptions,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 25,
            linear: LinearSolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub n_steps: usize,
    pub alpha: f64,
    pub t_final: f64,
    pub newton: NewtonOptions,
}

impl SchemeConfig {
    pub fn new(kind: SchemeKind, n_steps: usize, alpha: f64, t_final: f64) -> Self {
        Self {
            kind,
            n_steps,
            alpha,
            t_final,
            newton: NewtonOptions::default(),
        }
    }

    pub fn tau(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn validate(&self) -> Result<(), StepError> {
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(StepError::Config(format!("T = {} must be > 0", self.t_final)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(StepError::Config(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if !(self.newton.tol > 0.0) {
            return Err(StepError::Config("newton tolerance must be > 0".into()));
        }
        if self.newton.max_iter == 0 {
            return Err(StepError::Config("newton max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Spatial operators of `M ∂ₜᵅu + K(u)u = F(t)` on the free dofs.
pub trait Discretization {
    fn n_dofs(&self) -> usize;
    fn mass(&self) -> &SparseMatrix;
    fn load(&self, t: f64) -> Result<FieldVector, StepError>;
    /// `K(u) u`.
    fn apply_operator(&self, u: &[f64], t: f64) -> Result<FieldVector, StepError>;
    /// `K(u) + C(u)`, the derivative of `u ↦ K(u) u`.
    fn jacobian(&self, u: &[f64], t: f64) -> Result<SparseMatrix, StepError>;
    /// True when `K` does not depend on `u`.
    fn is_linear(&self) -> bool;
}

/// P1 discretization of `∂ₜᵅu − ∇·(a(u)∇u) = f`.
#[derive(Debug, Clone)]
pub struct FemDiscretization {
    space: FeSpace,
    diffusivity: Expr,
    diffusivity_prime: Expr,
    source: Expr,
    mass: SparseMatrix,
    /// `K` when `a` depends on neither `u` nor `t`.
    frozen_stiffness: Option<SparseMatrix>,
    /// `F` when `f` does not depend on `t`.
    frozen_load: Option<FieldVector>,
}

impl FemDiscretization {
    pub fn new(space: FeSpace, diffusivity: Expr, source: Expr) -> Result<Self, StepError> {
        let diffusivity_prime = diffusivity
            .differentiate(Var::U)
            .map_err(FemError::from)?;
        let mass = space.assemble_mass();
        let frozen_stiffness = if !diffusivity.depends_on(Var::U) && !diffusivity.depends_on(Var::T) {
            Some(space.assemble_stiffness(&diffusivity, &vec![0.0; space.n_free()], 0.0)?)
        } else {
            None
        };
        let frozen_load = if source.depends_on(Var::T) {
            None
        } else {
            Some(space.assemble_load(&source, 0.0)?)
        };
        Ok(Self {
            space,
            diffusivity,
            diffusivity_prime,
            source,
            mass,
            frozen_stiffness,
            frozen_load,
        })
    }

    pub fn space(&self) -> &FeSpace {
        &self.space
    }

    pub fn diffusivity(&self) -> &Expr {
        &self.diffusivity
    }
}

impl Discretization for FemDiscretization {
    fn n_dofs(&self) -> usize {
        self.space.n_free()
    }

    fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    fn load(&self, t: f64) -> Result<FieldVector, StepError> {
        match &self.frozen_load {
            Some(f) => Ok(f.clone()),
            None => Ok(self.space.assemble_load(&self.source, t)?),
        }
    }

    fn apply_operator(&self, u: &[f64], t: f64) -> Result<FieldVector, StepError> {
        match &self.frozen_stiffness {
            Some(k) => Ok(k.spmv(u)?),
            None => Ok(self.space.apply_stiffness(&self.diffusivity, u, t)?),
        }
    }

    fn jacobian(&self, u: &[f64], t: f64) -> Result<SparseMatrix, StepError> {
        if let Some(k) = &self.frozen_stiffness {
            return Ok(k.clone());
        }
        if self.is_linear() {
            return Ok(self.space.assemble_stiffness(&self.diffusivity, u, t)?);
        }
        let (_, j) = self
            .space
            .assemble_operators(&self.diffusivity, Some(&self.diffusivity_prime), u, t)?;
        Ok(j.expect("jacobian requested"))
    }

    fn is_linear(&self) -> bool {
        self.diffusivity_prime.as_constant() == Some(0.0)
    }
}

/// Diagonal system `∂ₜᵅy + λ y = s` with identity mass.
#[derive(Debug, Clone)]
pub struct ScalarDiscretization {
    rates: Vec<f64>,
    source: Vec<f64>,
    mass: SparseMatrix,
}

impl ScalarDiscretization {
    pub fn new(rates: Vec<f64>, source: Vec<f64>) -> Result<Self, StepError> {
        if rates.len() != source.len() {
            return Err(StepError::DimensionMismatch {
                expected: rates.len(),
                found: source.len(),
            });
        }
        let mass = SparseMatrix::identity(rates.len());
        Ok(Self { rates, source, mass })
    }

    /// `∂ₜᵅy = −λ y`.
    pub fn relaxation(lambda: f64) -> Self {
        Self::new(vec![lambda], vec![0.0]).expect("matching lengths")
    }
}

impl Discretization for ScalarDiscretization {
    fn n_dofs(&self) -> usize {
        self.rates.len()
    }

    fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    fn load(&self, _t: f64) -> Result<FieldVector, StepError> {
        Ok(self.source.clone())
    }

    fn apply_operator(&self, u: &[f64], _t: f64) -> Result<FieldVector, StepError> {
        Ok(u.iter().zip(&self.rates).map(|(u, l)| l * u).collect())
    }

    fn jacobian(&self, _u: &[f64], _t: f64) -> Result<SparseMatrix, StepError> {
        let n = self.rates.len();
        let mut b = TripletBuilder::new(n, n);
        for (i, l) in self.rates.iter().enumerate() {
            b.add(i, i, *l);
        }
        Ok(b.build())
    }

    fn is_linear(&self) -> bool {
        true
    }
}

/// `½ (F0 − K(u0) u0)`.
pub fn correction_rhs(f0: &[f64], k0u0: &[f64]) -> Result<FieldVector, StepError> {
    if f0.len() != k0u0.len() {
        return Err(StepError::DimensionMismatch {
            expected: f0.len(),
            found: k0u0.len(),
        });
    }
    Ok(f0.iter().zip(k0u0).map(|(f, k)| 0.5 * (f - k)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// `‖G‖₂` of each accepted iterate, starting with the initial guess.
    pub residual_history: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Newton's method with a step-halving safeguard: an update that raises
/// `‖G‖₂` is halved up to [`MAX_HALVINGS`] times. Converged when
/// `‖G‖₂ ≤ tol · scale`.
pub fn newton_solve<R, J>(
    mut residual: R,
    mut jacobian: J,
    v0: &[f64],
    scale: f64,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome, StepError>
where
    R: FnMut(&[f64]) -> Result<Vec<f64>, StepError>,
    J: FnMut(&[f64]) -> Result<SparseMatrix, StepError>,
{
    let target = opts.tol * scale;
    let mut v = v0.to_vec();
    let mut g = residual(&v)?;
    let mut gn = norm(&g);
    let mut history = vec![gn];
    let mut iterations = 0;
    while gn > target {
        if iterations == opts.max_iter {
            return Err(StepError::NewtonDiverged {
                step: 0,
                iterations,
                residual: gn / scale,
            });
        }
        iterations += 1;
        let jac = jacobian(&v)?;
        let zero = vec![0.0; v.len()];
        let (dv, stats) = solve_linear(&jac, &g, &zero, &opts.linear)?;
        // an inexact correction is still a descent direction
        if !(stats.relative_residual <= 1e-6) {
            return Err(StepError::LinearSolver {
                step: 0,
                relative_residual: stats.relative_residual,
            });
        }
        let mut lambda = 1.0;
        let mut halvings = 0;
        loop {
            let trial: Vec<f64> = v.iter().zip(&dv).map(|(x, d)| x - lambda * d).collect();
            // a trial outside the admissible set counts as an increase
            let attempt = residual(&trial);
            let accepted = match attempt {
                Ok(gt) => {
                    let gtn = norm(&gt);
                    if gtn <= gn || halvings == MAX_HALVINGS {
                        if gtn > gn && gtn > target {
                            return Err(StepError::LineSearch {
                                step: 0,
                                iteration: iterations,
                                residual: gn / scale,
                            });
                        }
                        Some((trial, gt, gtn))
                    } else {
                        None
                    }
                }
                Err(StepError::Fem(FemError::NonPositiveDiffusivity { .. })) if halvings < MAX_HALVINGS => None,
                Err(e) => return Err(e),
            };
            if let Some((trial, gt, gtn)) = accepted {
                v = trial;
                g = gt;
                gn = gtn;
                break;
            }
            lambda *= 0.5;
            halvings += 1;
        }
        history.push(gn);
    }
    Ok(NewtonOutcome {
        solution: v,
        iterations,
        residual_history: history,
    })
}

/// Time levels `t_n`, states `u^n` and Newton iteration counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<FieldVector>,
    /// Iterations used at steps `1..=N`.
    pub newton_iterations: Vec<usize>,
}

impl Trajectory {
    pub fn final_state(&self) -> &FieldVector {
        self.states.last().expect("trajectory holds u^0")
    }

    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }
}

/// Stepping state for one run; `step` must be called for `n = 1, 2, …`.
pub struct Stepper<'d, D: Discretization + ?Sized> {
    disc: &'d D,
    config: SchemeConfig,
    weights: CqWeights,
    u0: FieldVector,
    mass_u0: FieldVector,
    history: Vec<FieldVector>,
    correction: Option<FieldVector>,
}

impl<'d, D: Discretization + ?Sized> Stepper<'d, D> {
    pub fn new(disc: &'d D, u0: FieldVector, config: SchemeConfig) -> Result<Self, StepError> {
        config.validate()?;
        if u0.len() != disc.n_dofs() {
            return Err(StepError::DimensionMismatch {
                expected: disc.n_dofs(),
                found: u0.len(),
            });
        }
        let weights = CqWeights::new(config.alpha, config.kind.order(), config.n_steps, config.tau())?;
        let correction = if config.kind.corrected() && config.n_steps > 0 {
            let f0 = disc.load(0.0)?;
            let k0u0 = disc.apply_operator(&u0, 0.0)?;
            Some(correction_rhs(&f0, &k0u0)?)
        } else {
            None
        };
        Ok(Self {
            disc,
            config,
            weights,
            history: vec![u0.clone()],
            mass_u0: disc.mass().spmv(&u0)?,
            u0,
            correction,
        })
    }

    fn time(&self, n: usize) -> f64 {
        if n == self.config.n_steps {
            self.config.t_final
        } else {
            n as f64 * self.config.tau()
        }
    }

    /// Right-hand side `RHS_n` from the stored history.
    pub fn rhs(&self, n: usize) -> Result<FieldVector, StepError> {
        let lead = self.weights.scale() * self.weights.weights()[0];
        let hist = self.weights.history_sum(&self.history, &self.u0, n)?;
        let mass_hist = self.disc.mass().spmv(&hist)?;
        let mut rhs = self.disc.load(self.time(n))?;
        for ((r, mu), mh) in rhs.iter_mut().zip(&self.mass_u0).zip(&mass_hist) {
            *r += lead * mu - mh;
        }
        if n == 1 {
            if let Some(c) = &self.correction {
                rhs.iter_mut().zip(c).for_each(|(r, c)| *r += c);
            }
        }
        Ok(rhs)
    }

    /// Computes and stores `u^n`; returns the Newton outcome.
    pub fn step(&mut self, n: usize) -> Result<NewtonOutcome, StepError> {
        if n != self.history.len() || n > self.config.n_steps {
            return Err(StepError::Config(format!(
                "step {n} requested with {} stored levels",
                self.history.len()
            )));
        }
        let rhs = self.rhs(n)?;
        let t = self.time(n);
        let lead = self.weights.scale() * self.weights.weights()[0];
        let mass = self.disc.mass();
        let disc = self.disc;
        let lhs = SparseMatrix::linear_combination(&[(lead, mass)])?;
        let residual = |v: &[f64]| -> Result<Vec<f64>, StepError> {
            let kv = disc.apply_operator(v, t)?;
            let mv = mass.spmv(v)?;
            Ok(mv
                .iter()
                .zip(&kv)
                .zip(&rhs)
                .map(|((m, k), r)| lead * m + k - r)
                .collect())
        };
        let jacobian = |v: &[f64]| -> Result<SparseMatrix, StepError> {
            let j = disc.jacobian(v, t)?;
            Ok(SparseMatrix::linear_combination(&[(1.0, &lhs), (1.0, &j)])?)
        };
        let scale = norm(&rhs).max(1.0);
        let guess = self.history[n - 1].clone();
        let outcome = newton_solve(residual, jacobian, &guess, scale, &self.config.newton)
            .map_err(|e| e.at_step(n))?;
        self.history.push(outcome.solution.clone());
        Ok(outcome)
    }

    pub fn into_trajectory(self, newton_iterations: Vec<usize>) -> Trajectory {
        let times = (0..self.history.len()).map(|n| self.time(n)).collect();
        Trajectory {
            times,
            states: self.history,
            newton_iterations,
        }
    }
}

/// Runs all `N` steps from `u0`.
pub fn solve<D: Discretization + ?Sized>(
    disc: &D,
    u0: FieldVector,
    config: &SchemeConfig,
) -> Result<Trajectory, StepError> {
    let mut stepper = Stepper::new(disc, u0, config.clone())?;
    let mut iterations = Vec::with_capacity(config.n_steps);
    for n in 1..=config.n_steps {
        iterations.push(stepper.step(n)?.iterations);
    }
    Ok(stepper.into_trajectory(iterations))
}

/// Solves the stationary problem `K(u) u = F(t)` from `guess`.
pub fn solve_stationary<D: Discretization + ?Sized>(
    disc: &D,
    t: f64,
    guess: &[f64],
    opts: &NewtonOptions,
) -> Result<NewtonOutcome, StepError> {
    let f = disc.load(t)?;
    let scale = norm(&f).max(1.0);
    newton_solve(
        |v| {
            let kv = disc.apply_operator(v, t)?;
            Ok(kv.iter().zip(&f).map(|(k, f)| k - f).collect())
        },
        |v| disc.jacobian(v, t),
        guess,
        scale,
        opts,
    )
}
