//! Convolution-quadrature weights for fractional powers of BDF symbols.
//!
//! The weights `b_j` are the Taylor coefficients of `p(ζ)^α`, where `p` is
//! the generating polynomial of BDF1 (`1 − ζ`) or BDF2
//! (`3/2 − 2ζ + ζ²/2`). They are produced by the power-of-a-polynomial
//! recurrence
//!
//! ```text
//! b_0 = p_0^α
//! b_n = 1/(n p_0) · Σ_{k=1}^{min(n,m)} ((α+1)k − n) p_k b_{n−k}
//! ```
//!
//! which costs `O(N m)` and has no tuning parameters.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CqError {
    #[error("unsupported order {0}; expected 1 or 2")]
    UnsupportedOrder(u32),
    #[error("alpha {0} outside (0, 1]")]
    InvalidAlpha(f64),
    #[error("step index {n} outside 1..={max}")]
    StepOutOfRange { n: usize, max: usize },
    #[error("history holds {found} vectors, step {n} needs {n}")]
    ShortHistory { n: usize, found: usize },
    #[error("vector length {found} does not match {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Coefficients `p_0..p_m` of the BDF generating polynomial in ζ.
pub fn symbol_coeffs(order: u32) -> Result<&'static [f64], CqError> {
    match order {
        1 => Ok(&[1.0, -1.0]),
        2 => Ok(&[1.5, -2.0, 0.5]),
        other => Err(CqError::UnsupportedOrder(other)),
    }
}

/// Cached weights `b_0..b_N` of the discrete fractional derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct CqWeights {
    alpha: f64,
    order: u32,
    tau: f64,
    b: Vec<f64>,
}

impl CqWeights {
    /// Weights up to index `n_max` for step size `tau`.
    pub fn new(alpha: f64, order: u32, n_max: usize, tau: f64) -> Result<Self, CqError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(CqError::InvalidAlpha(alpha));
        }
        let p = symbol_coeffs(order)?;
        Ok(Self {
            alpha,
            order,
            tau,
            b: power_series(p, alpha, n_max),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn weights(&self) -> &[f64] {
        &self.b
    }

    /// Largest supported step index.
    pub fn n_max(&self) -> usize {
        self.b.len() - 1
    }

    /// Scaling `τ^{−α}` applied to every weight.
    pub fn scale(&self) -> f64 {
        self.tau.powf(-self.alpha)
    }

    /// The known part of the discrete Caputo derivative at step `n`:
    /// `τ^{−α} Σ_{j=1}^{n} b_j (u^{n−j} − u0)`.
    ///
    /// `history[k]` is `u^k`; only `history[..n]` is read.
    pub fn history_sum<V: AsRef<[f64]>>(
        &self,
        history: &[V],
        u0: &[f64],
        n: usize,
    ) -> Result<Vec<f64>, CqError> {
        if n == 0 || n > self.n_max() {
            return Err(CqError::StepOutOfRange {
                n,
                max: self.n_max(),
            });
        }
        if history.len() < n {
            return Err(CqError::ShortHistory {
                n,
                found: history.len(),
            });
        }
        let dim = u0.len();
        let mut acc = vec![0.0; dim];
        for j in 1..=n {
            let u = history[n - j].as_ref();
            if u.len() != dim {
                return Err(CqError::DimensionMismatch {
                    expected: dim,
                    found: u.len(),
                });
            }
            let bj = self.b[j];
            for ((a, &ui), &u0i) in acc.iter_mut().zip(u).zip(u0) {
                *a += bj * (ui - u0i);
            }
        }
        let s = self.scale();
        acc.iter_mut().for_each(|a| *a *= s);
        Ok(acc)
    }

    /// Full discrete operator `τ^{−α} Σ_{j=0}^{n} b_j (v_{n−j} − v_0)`
    /// on a scalar sample sequence `v_0..v_N`, one output per sample.
    pub fn caputo_apply(&self, samples: &[f64]) -> Result<Vec<f64>, CqError> {
        if samples.len() > self.b.len() {
            return Err(CqError::StepOutOfRange {
                n: samples.len() - 1,
                max: self.n_max(),
            });
        }
        let s = self.scale();
        let v0 = samples.first().copied().unwrap_or(0.0);
        Ok((0..samples.len())
            .map(|n| {
                s * (0..=n)
                    .map(|j| self.b[j] * (samples[n - j] - v0))
                    .sum::<f64>()
            })
            .collect())
    }
}

/// Convenience wrapper matching the weight-generation operation.
pub fn cq_weights(alpha: f64, order: u32, n_max: usize) -> Result<CqWeights, CqError> {
    CqWeights::new(alpha, order, n_max, 1.0)
}

/// Taylor coefficients `0..=n_max` of `p(ζ)^α` by the power recurrence.
fn power_series(p: &[f64], alpha: f64, n_max: usize) -> Vec<f64> {
    let m = p.len() - 1;
    let mut b = Vec::with_capacity(n_max + 1);
    b.push(p[0].powf(alpha));
    for n in 1..=n_max {
        let mut s = 0.0;
        for k in 1..=n.min(m) {
            s += ((alpha + 1.0) * k as f64 - n as f64) * p[k] * b[n - k];
        }
        b.push(s / (n as f64 * p[0]));
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbols() {
        assert_eq!(symbol_coeffs(2).unwrap(), &[1.5, -2.0, 0.5]);
        assert_eq!(symbol_coeffs(1).unwrap(), &[1.0, -1.0]);
        assert_eq!(symbol_coeffs(3), Err(CqError::UnsupportedOrder(3)));
        assert!(symbol_coeffs(3).unwrap_err().to_string().contains("unsupported order"));
    }

    #[test]
    fn alpha_one_reproduces_symbol() {
        let w = cq_weights(1.0, 2, 4).unwrap();
        assert_eq!(w.weights(), &[1.5, -2.0, 0.5, 0.0, 0.0]);
        let w = cq_weights(1.0, 1, 3).unwrap();
        assert_eq!(w.weights(), &[1.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn half_order_first_weights() {
        let w = cq_weights(0.5, 2, 3).unwrap();
        let b = w.weights();
        assert!((b[0] - 1.224744871391589).abs() < 1e-15);
        assert!((b[1] + 0.816496580927726).abs() < 1e-15);
        let w = cq_weights(0.5, 1, 3).unwrap();
        assert_eq!(w.weights(), &[1.0, -0.5, -0.125, -0.0625]);
    }

    #[test]
    fn rejects_bad_alpha() {
        assert!(matches!(cq_weights(0.0, 2, 3), Err(CqError::InvalidAlpha(_))));
        assert!(matches!(cq_weights(1.5, 2, 3), Err(CqError::InvalidAlpha(_))));
    }

    #[test]
    fn history_sum_examples() {
        let w = CqWeights::new(0.5, 2, 10, 1.0).unwrap();
        let u0 = vec![1.0, 2.0];
        let hist = vec![u0.clone(); 5];
        assert_eq!(w.history_sum(&hist, &u0, 5).unwrap(), vec![0.0, 0.0]);

        let hist = vec![vec![1.0]];
        assert_eq!(w.history_sum(&hist, &[1.0], 1).unwrap(), vec![0.0]);

        let hist = vec![vec![0.0], vec![1.0]];
        let s = w.history_sum(&hist, &[0.0], 2).unwrap();
        assert!((s[0] + 0.816496580927726).abs() < 1e-15);
    }

    #[test]
    fn history_sum_errors() {
        let w = CqWeights::new(0.5, 2, 3, 0.1).unwrap();
        let hist = vec![vec![0.0, 0.0], vec![1.0]];
        assert!(matches!(
            w.history_sum(&hist, &[0.0, 0.0], 2),
            Err(CqError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            w.history_sum(&hist, &[0.0, 0.0], 0),
            Err(CqError::StepOutOfRange { .. })
        ));
        assert!(matches!(
            w.history_sum(&hist, &[0.0, 0.0], 4),
            Err(CqError::StepOutOfRange { .. })
        ));
        assert!(matches!(
            w.history_sum(&hist, &[0.0, 0.0], 3),
            Err(CqError::ShortHistory { .. })
        ));
    }

    #[test]
    fn constants_are_annihilated() {
        for alpha in [0.2, 0.5, 0.9] {
            let w = CqWeights::new(alpha, 2, 200, 0.01).unwrap();
            let out = w.caputo_apply(&[3.7; 201]).unwrap();
            assert!(out.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn bdf2_differentiates_linears_exactly() {
        let tau = 0.125;
        let w = CqWeights::new(1.0, 2, 16, tau).unwrap();
        let samples: Vec<f64> = (0..=16).map(|n| n as f64 * tau).collect();
        let out = w.caputo_apply(&samples).unwrap();
        for v in &out[2..] {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn caputo_of_square_converges_at_second_order() {
        // D^{1/2} t^2 = 2 t^{3/2} / Γ(5/2), at t = 1
        let exact = 2.0 / statrs::function::gamma::gamma(2.5);
        assert!((exact - 1.504505556127350).abs() < 1e-12);
        let mut errs = Vec::new();
        for k in 4..=9 {
            let n = 1usize << k;
            let tau = 1.0 / n as f64;
            let w = CqWeights::new(0.5, 2, n, tau).unwrap();
            let samples: Vec<f64> = (0..=n).map(|j| (j as f64 * tau).powi(2)).collect();
            let out = w.caputo_apply(&samples).unwrap();
            errs.push((out[n] - exact).abs());
        }
        let rate = (errs[errs.len() - 2] / errs[errs.len() - 1]).log2();
        assert!((rate - 2.0).abs() < 0.1, "rate {rate}, errors {errs:?}");
    }
}
