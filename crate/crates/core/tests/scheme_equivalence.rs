//! With a constant diffusivity the Newton-based stepper must reproduce a
//! direct implementation of the linear corrected BDF2-CQ recursion.

use std::f64::consts::PI;
use std::sync::Arc;

use subdiff::cq::cq_weights;
use subdiff::expr::parse;
use subdiff::fem::FeSpace;
use subdiff::mesh::interval_mesh;
use subdiff::stepper::{solve, FemDiscretization, SchemeConfig, SchemeKind};

fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let l = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= l * a[k][j];
            }
            b[i] -= l * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

/// Corrected BDF2-CQ for `M ∂ᵅu + kappa K u = F(t)` on a uniform mesh of
/// (0, 1) with `u = 0` at both ends and `f = x t + 1`.
fn direct(alpha: f64, kappa: f64, n_cells: usize, n_steps: usize, t_final: f64) -> Vec<Vec<f64>> {
    let h = 1.0 / n_cells as f64;
    let m = n_cells - 1;
    let tau = t_final / n_steps as f64;
    let mut mass = vec![vec![0.0; m]; m];
    let mut stiff = vec![vec![0.0; m]; m];
    for i in 0..m {
        mass[i][i] = 2.0 * h / 3.0;
        stiff[i][i] = 2.0 * kappa / h;
        if i + 1 < m {
            mass[i][i + 1] = h / 6.0;
            mass[i + 1][i] = h / 6.0;
            stiff[i][i + 1] = -kappa / h;
            stiff[i + 1][i] = -kappa / h;
        }
    }
    let xs: Vec<f64> = (1..n_cells).map(|i| i as f64 * h).collect();
    let load = |t: f64| -> Vec<f64> { xs.iter().map(|x| h * (x * t + 1.0)).collect() };
    let u0: Vec<f64> = xs.iter().map(|x| (PI * x).sin()).collect();
    let b = cq_weights(alpha, 2, n_steps).unwrap().weights().to_vec();
    let s = tau.powf(-alpha);
    let mut lhs = mass.clone();
    for i in 0..m {
        for j in 0..m {
            lhs[i][j] = s * b[0] * mass[i][j] + stiff[i][j];
        }
    }
    let mut states = vec![u0.clone()];
    for n in 1..=n_steps {
        // τ^{−α} Σ_{j≥1} b_j (u^{n−j} − u0) moved to the right, plus b_0 u0
        let mut hist = vec![0.0; m];
        for j in 1..=n {
            for i in 0..m {
                hist[i] += b[j] * (states[n - j][i] - u0[i]);
            }
        }
        hist.iter_mut().zip(&u0).for_each(|(v, u)| *v = s * (b[0] * u - *v));
        let mut rhs_vec = load(n as f64 * tau);
        let mh = matvec(&mass, &hist);
        for i in 0..m {
            rhs_vec[i] += mh[i];
        }
        if n == 1 {
            let f0 = load(0.0);
            let ku0 = matvec(&stiff, &u0);
            for i in 0..m {
                rhs_vec[i] += 0.5 * (f0[i] - ku0[i]);
            }
        }
        states.push(gauss_solve(lhs.clone(), rhs_vec));
    }
    states
}

#[test]
fn corrected_scheme_matches_direct_linear_recursion() {
    for (alpha, kappa) in [(0.3, 1.0), (0.6, 2.5), (0.9, 0.4)] {
        let n_cells = 24;
        let n_steps = 40;
        let t_final = 0.5;
        let space = FeSpace::new(Arc::new(interval_mesh(0.0, 1.0, n_cells).unwrap()), &[1, 2]);
        let disc = FemDiscretization::new(space, parse(&kappa.to_string()).unwrap(), parse("x*t + 1").unwrap()).unwrap();
        let u0: Vec<f64> = (1..n_cells).map(|i| (PI * i as f64 / n_cells as f64).sin()).collect();
        let cfg = SchemeConfig::new(SchemeKind::Bdf2Corrected, n_steps, alpha, t_final);
        let tr = solve(&disc, u0, &cfg).unwrap();
        let reference = direct(alpha, kappa, n_cells, n_steps, t_final);
        for (n, (a, b)) in tr.states.iter().zip(&reference).enumerate() {
            let diff = a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(diff <= 1e-10, "alpha {alpha} step {n}: {diff:e}");
        }
    }
}
