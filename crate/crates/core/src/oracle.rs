//! Reference solutions: the Mittag-Leffler function, the scalar relaxation
//! equation, and spectral solutions of the linear 1-D problem on (0, 1)
//! with homogeneous Dirichlet ends.
//!
//! `E_{α,β}(z)` is evaluated by one of three branches chosen on `|z|`:
//!
//! | range                  | method                                      |
//! |------------------------|---------------------------------------------|
//! | `|z| ≤ 1`              | power series, compensated summation         |
//! | `1 < |z| < 50`         | Laplace inversion on a hyperbolic contour   |
//! | `|z| ≥ 50`             | asymptotic series, optimal truncation       |

use std::f64::consts::PI;

use num_complex::Complex64;
use statrs::function::gamma::{gamma, ln_gamma};
use thiserror::Error;

use crate::expr::{Bindings, Expr, ExprError};

/// Upper end of the power-series branch.
pub const SERIES_RADIUS: f64 = 1.0;
/// Lower end of the asymptotic branch.
pub const ASYMPTOTIC_RADIUS: f64 = 50.0;

const CONTOUR_MU: f64 = 10.0;
const CONTOUR_DELTA: f64 = 1.0;
const CONTOUR_H: f64 = 0.07;
const CONTOUR_NODES: usize = 64;

const SIMPSON_INTERVALS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("Mittag-Leffler E_{{{alpha},{beta}}}({z}) outside the supported domain")]
    UnsupportedDomain { alpha: f64, beta: f64, z: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// `1/Γ(x)`, zero at the poles `0, −1, −2, …`.
///
/// Arguments within a few ulps of a pole count as the pole, and positive
/// integers use the exact factorial.
pub fn rgamma(x: f64) -> f64 {
    let nearest = x.round();
    if (x - nearest).abs() <= 8.0 * f64::EPSILON * nearest.abs().max(1.0) {
        if nearest <= 0.0 {
            return 0.0;
        }
        if nearest <= 170.0 {
            return 1.0 / (1..nearest as u64).map(|k| k as f64).product::<f64>();
        }
    }
    if x > 0.0 {
        if x < 170.0 {
            1.0 / gamma(x)
        } else {
            (-ln_gamma(x)).exp()
        }
    } else {
        // reflection: 1/Γ(x) = Γ(1 − x) sin(πx) / π
        rgamma_envelope(x) * (PI * x).sin()
    }
}

/// `|1/Γ(x)|` without the oscillating factor `sin(πx)` for `x < 0`.
fn rgamma_envelope(x: f64) -> f64 {
    if x > 0.0 {
        rgamma(x)
    } else if 1.0 - x < 170.0 {
        gamma(1.0 - x) / PI
    } else {
        ln_gamma(1.0 - x).exp() / PI
    }
}

/// Two-parameter Mittag-Leffler function for real arguments.
///
/// Supported: `α ∈ (0, 1]` with `β > 0` and `z ≤ 0` (or `0 < z ≤ 1`
/// through the series), `α = 1, β = 1` for all real `z`, and
/// `α = 2, β = 1` for all real `z`.
pub fn mittag_leffler(alpha: f64, beta: f64, z: f64) -> Result<f64, OracleError> {
    let unsupported = || OracleError::UnsupportedDomain { alpha, beta, z };
    if !z.is_finite() || !beta.is_finite() {
        return Err(unsupported());
    }
    if alpha == 1.0 && beta == 1.0 {
        return Ok(z.exp());
    }
    if alpha == 2.0 && beta == 1.0 {
        return Ok(if z >= 0.0 {
            z.sqrt().cosh()
        } else {
            (-z).sqrt().cos()
        });
    }
    if !(alpha > 0.0 && alpha <= 1.0) || beta <= 0.0 {
        return Err(unsupported());
    }
    let r = z.abs();
    if r <= SERIES_RADIUS {
        Ok(ml_series(alpha, beta, z))
    } else if z > 0.0 {
        Err(unsupported())
    } else if r < ASYMPTOTIC_RADIUS {
        Ok(ml_contour(alpha, beta, z))
    } else {
        Ok(ml_asymptotic(alpha, beta, z))
    }
}

/// `Σ z^k / Γ(αk + β)` with Neumaier summation.
pub fn ml_series(alpha: f64, beta: f64, z: f64) -> f64 {
    if z == 0.0 {
        return rgamma(beta);
    }
    let ln_r = z.abs().ln();
    let negative = z < 0.0;
    let mut sum = 0.0;
    let mut comp = 0.0;
    for k in 0..100_000usize {
        let arg = alpha * k as f64 + beta;
        let magnitude = if arg < 170.0 {
            (k as f64 * ln_r).exp() * rgamma(arg)
        } else {
            (k as f64 * ln_r - ln_gamma(arg)).exp()
        };
        let term = if negative && k % 2 == 1 {
            -magnitude
        } else {
            magnitude
        };
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        // past the peak of 1/Γ the terms decrease monotonically
        if arg > 2.0 && magnitude < 1e-17 * (sum + comp).abs() {
            break;
        }
    }
    sum + comp
}

/// Trapezoidal rule on `s(θ) = μ(1 + sin(iθ − δ))` for the inverse Laplace
/// transform of `s^{α−β}/(s^α − z)` at `t = 1`.
pub fn ml_contour(alpha: f64, beta: f64, z: f64) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..=CONTOUR_NODES {
        let w = Complex64::new(-CONTOUR_DELTA, k as f64 * CONTOUR_H);
        let s = CONTOUR_MU * (1.0 + w.sin());
        let ds = w.cos();
        let f = s.powf(alpha - beta) / (s.powf(alpha) - z);
        let weight = if k == 0 { 1.0 } else { 2.0 };
        acc += weight * s.exp() * f * ds;
    }
    CONTOUR_H * CONTOUR_MU / (2.0 * PI) * acc.re
}

/// `−Σ_{k≥1} z^{−k} / Γ(β − αk)`, stopped where the term envelope is
/// smallest.
pub fn ml_asymptotic(alpha: f64, beta: f64, z: f64) -> f64 {
    let inv = 1.0 / z;
    let mut sum = 0.0;
    let mut power = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..10_000usize {
        power *= inv;
        let arg = beta - alpha * k as f64;
        // the envelope ignores sin(πx), so poles of Γ do not end the sum early
        let envelope = power.abs() * rgamma_envelope(arg);
        if envelope > prev {
            break;
        }
        prev = envelope;
        sum -= power * rgamma(arg);
        if envelope < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// `y(t) = y0 · E_α(−λ t^α)` solves `∂ₜᵅy = −λ y`, `y(0) = y0`.
pub fn scalar_fode_exact(alpha: f64, lam: f64, y0: f64, t: f64) -> Result<f64, OracleError> {
    if !(t >= 0.0) {
        return Err(OracleError::InvalidArgument(format!("t = {t} must be >= 0")));
    }
    if !(lam > 0.0) {
        return Err(OracleError::InvalidArgument(format!("lambda = {lam} must be > 0")));
    }
    Ok(y0 * mittag_leffler(alpha, 1.0, -lam * t.powf(alpha))?)
}

/// Sine-series solution of `∂ₜᵅu − a u_xx = f(x)` on (0, 1), `u = 0` at
/// both ends, truncated at a fixed number of modes.
#[derive(Debug, Clone)]
pub struct LinearExact1d {
    alpha: f64,
    /// `(a λ_k, u0_k, f_k/(a λ_k))` per mode `k = 1..=K`.
    modes: Vec<(f64, f64, f64)>,
}

impl LinearExact1d {
    pub fn new(alpha: f64, a: f64, u0: &Expr, f_x: &Expr, modes: usize) -> Result<Self, OracleError> {
        if modes == 0 {
            return Err(OracleError::InvalidArgument("at least one mode required".into()));
        }
        if !(a > 0.0) {
            return Err(OracleError::InvalidArgument(format!("diffusivity {a} must be > 0")));
        }
        let sample = |e: &Expr, x: f64| e.eval(&Bindings::new().x(x).t(0.0));
        for (name, e) in [("initial", u0), ("source", f_x)] {
            for x in [0.0, 1.0] {
                let v = sample(e, x)?;
                if v.abs() > 1e-12 {
                    return Err(OracleError::InvalidArgument(format!(
                        "{name} is {v} at x = {x}; must vanish at both ends"
                    )));
                }
            }
        }
        let n = SIMPSON_INTERVALS;
        let h = 1.0 / n as f64;
        let mut u_samples = Vec::with_capacity(n + 1);
        let mut f_samples = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let x = i as f64 * h;
            u_samples.push(sample(u0, x)?);
            f_samples.push(sample(f_x, x)?);
        }
        let modes = (1..=modes)
            .map(|k| {
                let kp = k as f64 * PI;
                let mut cu = 0.0;
                let mut cf = 0.0;
                for i in 0..=n {
                    let w = if i == 0 || i == n {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    let phi = std::f64::consts::SQRT_2 * (kp * i as f64 * h).sin();
                    cu += w * u_samples[i] * phi;
                    cf += w * f_samples[i] * phi;
                }
                let rate = a * kp * kp;
                (rate, cu * h / 3.0, cf * h / 3.0 / rate)
            })
            .collect();
        Ok(Self { alpha, modes })
    }

    pub fn eval(&self, x: f64, t: f64) -> Result<f64, OracleError> {
        let mut u = 0.0;
        for (k, &(rate, c0, c_inf)) in self.modes.iter().enumerate() {
            let e = mittag_leffler(self.alpha, 1.0, -rate * t.powf(self.alpha))?;
            let phi = std::f64::consts::SQRT_2 * ((k + 1) as f64 * PI * x).sin();
            u += (c_inf + (c0 - c_inf) * e) * phi;
        }
        Ok(u)
    }
}

/// One-shot evaluation of [`LinearExact1d`].
pub fn linear_exact_1d(
    alpha: f64,
    a: f64,
    u0: &Expr,
    f_x: &Expr,
    modes: usize,
    x: f64,
    t: f64,
) -> Result<f64, OracleError> {
    LinearExact1d::new(alpha, a, u0, f_x, modes)?.eval(x, t)
}

/// Exact-in-time solution of the P1 semi-discrete problem
/// `M ∂ₜᵅU + a K U = F` on a uniform mesh of an interval with both ends
/// constrained and a time-independent load.
///
/// `M` and `K` share the discrete sine eigenvectors `s_k(i) = sin(kπi/n)`,
/// so each mode relaxes with its own Mittag-Leffler factor. Comparing a
/// time stepper against this isolates the temporal error.
#[derive(Debug, Clone)]
pub struct SemiDiscrete1d {
    alpha: f64,
    n_cells: usize,
    /// `(λ_k, c_k(0), c_k(∞))` per mode.
    modes: Vec<(f64, f64, f64)>,
}

impl SemiDiscrete1d {
    /// `u0` holds the `n − 1` interior nodal values, `load` the interior
    /// entries of the assembled load vector.
    pub fn new(
        alpha: f64,
        a: f64,
        length: f64,
        n_cells: usize,
        u0: &[f64],
        load: &[f64],
    ) -> Result<Self, OracleError> {
        let m = n_cells.saturating_sub(1);
        if n_cells < 2 || u0.len() != m || load.len() != m {
            return Err(OracleError::InvalidArgument(format!(
                "need {m} interior values for {n_cells} cells"
            )));
        }
        if !(a > 0.0) {
            return Err(OracleError::InvalidArgument(format!("diffusivity {a} must be > 0")));
        }
        if !(length > 0.0) {
            return Err(OracleError::InvalidArgument(format!("length {length} must be > 0")));
        }
        let n = n_cells as f64;
        let h = length / n;
        let modes = (1..n_cells)
            .map(|k| {
                let theta = k as f64 * PI / n;
                let mass = h / 3.0 * (2.0 + theta.cos());
                let stiff = a * 2.0 / h * (1.0 - theta.cos());
                let (mut cu, mut cf) = (0.0, 0.0);
                for i in 1..n_cells {
                    let s = (theta * i as f64).sin();
                    cu += u0[i - 1] * s;
                    cf += load[i - 1] * s;
                }
                cu *= 2.0 / n;
                cf *= 2.0 / n;
                (stiff / mass, cu, cf / stiff)
            })
            .collect();
        Ok(Self {
            alpha,
            n_cells,
            modes,
        })
    }

    /// Interior nodal values at time `t`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>, OracleError> {
        let n = self.n_cells as f64;
        let mut factors = Vec::with_capacity(self.modes.len());
        for &(lam, c0, c_inf) in &self.modes {
            let e = mittag_leffler(self.alpha, 1.0, -lam * t.powf(self.alpha))?;
            factors.push(c_inf + (c0 - c_inf) * e);
        }
        Ok((1..self.n_cells)
            .map(|i| {
                factors
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * ((k + 1) as f64 * PI * i as f64 / n).sin())
                    .sum()
            })
            .collect())
    }
}
