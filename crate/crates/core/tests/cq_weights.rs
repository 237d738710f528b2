//! CQ weights against a double-double evaluation of the same power
//! recurrence and against closed forms.

use proptest::prelude::*;
use statrs::function::gamma::gamma;
use subdiff::cq::{cq_weights, symbol_coeffs};

#[derive(Clone, Copy, Debug)]
struct Dd(f64, f64);

impl Dd {
    fn from(v: f64) -> Self {
        Dd(v, 0.0)
    }
    fn to_f64(self) -> f64 {
        self.0 + self.1
    }
    fn add(self, o: Dd) -> Dd {
        let s = self.0 + o.0;
        let bb = s - self.0;
        let e = (self.0 - (s - bb)) + (o.0 - bb) + self.1 + o.1;
        let hi = s + e;
        Dd(hi, e - (hi - s))
    }
    fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p) + (self.0 * o.1 + self.1 * o.0);
        let hi = p + e;
        Dd(hi, e - (hi - p))
    }
    fn div(self, d: f64) -> Dd {
        let q = self.0 / d;
        let r = Dd::from(q).mul(Dd::from(d));
        let rem = self.add(Dd(-r.0, -r.1));
        Dd::from(q).add(Dd::from(rem.to_f64() / d))
    }
}

/// Power recurrence in double-double with `b_0 = 1`; returns the weights
/// rescaled by the double-precision `p_0^α`.
fn reference_weights(p: &[f64], alpha: f64, n_max: usize) -> Vec<f64> {
    let m = p.len() - 1;
    let mut b = vec![Dd::from(1.0)];
    for n in 1..=n_max {
        let mut acc = Dd::from(0.0);
        for k in 1..=n.min(m) {
            let ak = Dd::from(alpha).mul(Dd::from(k as f64));
            let coeff = ak.add(Dd::from(k as f64 - n as f64));
            acc = acc.add(coeff.mul(Dd::from(p[k])).mul(b[n - k]));
        }
        b.push(acc.div(n as f64 * p[0]));
    }
    let scale = p[0].powf(alpha);
    b.iter().map(|v| v.to_f64() * scale).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn bdf2_weights_match_extended_precision() {
    let p = symbol_coeffs(2).unwrap();
    for alpha in [0.05, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9, 0.99] {
        let w = cq_weights(alpha, 2, 1280).unwrap();
        let reference = reference_weights(p, alpha, 1280);
        for (j, (x, r)) in w.weights().iter().zip(&reference).enumerate() {
            assert!(rel(*x, *r) <= 1e-13, "alpha {alpha} j {j}: {x} vs {r}");
        }
    }
}

#[test]
fn bdf1_weights_are_signed_binomials() {
    let p = symbol_coeffs(1).unwrap();
    for alpha in [0.15, 0.5, 0.9] {
        let w = cq_weights(alpha, 1, 1000).unwrap();
        let reference = reference_weights(p, alpha, 1000);
        for (j, (x, r)) in w.weights().iter().zip(&reference).enumerate() {
            assert!(rel(*x, *r) <= 1e-13, "alpha {alpha} j {j}");
        }
        // (-1)^j C(α, j) = Γ(j − α) / (Γ(−α) Γ(j + 1)) for small j
        for j in 1..=20 {
            let closed = gamma(j as f64 - alpha) / (gamma(-alpha) * gamma(j as f64 + 1.0));
            assert!(rel(w.weights()[j], closed) <= 1e-12, "alpha {alpha} j {j}");
        }
    }
}

#[test]
fn partial_sums_decay_like_the_generating_function() {
    // Σ_{j≤n} b_j are the coefficients of δ(ζ)^α/(1 − ζ), which behave
    // like n^{−α}/Γ(1 − α) as n → ∞.
    let p = symbol_coeffs(2).unwrap();
    for alpha in [0.15, 0.5, 0.9] {
        let w = cq_weights(alpha, 2, 4096).unwrap();
        let reference = reference_weights(p, alpha, 4096);
        let mut s = 0.0;
        let mut s_ref = 0.0;
        let mut sums = vec![];
        for (x, r) in w.weights().iter().zip(&reference) {
            s += x;
            s_ref += r;
            sums.push((s, s_ref));
        }
        for n in [256usize, 1024, 4096] {
            let (s, s_ref) = sums[n];
            assert!((s - s_ref).abs() <= 1e-13, "alpha {alpha} n {n}");
            let scaled = s * (n as f64).powf(alpha) * gamma(1.0 - alpha);
            assert!((scaled - 1.0).abs() < 0.05, "alpha {alpha} n {n}: {scaled}");
        }
        assert!(sums[4096].0.abs() < sums[64].0.abs());
    }
}

proptest! {
    #[test]
    fn recurrence_residual_is_tiny(alpha in 0.01f64..1.0, order in 1u32..=2, n_max in 1usize..400) {
        let w = cq_weights(alpha, order, n_max).unwrap();
        let b = w.weights();
        let p = symbol_coeffs(order).unwrap();
        let m = p.len() - 1;
        for n in 1..=n_max {
            let mut rhs = 0.0;
            for k in 1..=n.min(m) {
                rhs += ((alpha + 1.0) * k as f64 - n as f64) * p[k] * b[n - k];
            }
            let lhs = n as f64 * p[0] * b[n];
            prop_assert!((lhs - rhs).abs() <= 1e-13 * b[n].abs().max(1.0), "n {}", n);
        }
    }

    #[test]
    fn constants_are_annihilated(alpha in 0.01f64..1.0, c in -100.0f64..100.0, n in 1usize..300) {
        let w = cq_weights(alpha, 2, n).unwrap();
        let out = w.caputo_apply(&vec![c; n + 1]).unwrap();
        prop_assert!(out.iter().all(|v| v.abs() <= 1e-12));
    }
}

