//! Compressed-row sparse matrices, Jacobi-preconditioned BiCGStab, a
//! small dense LU used as fallback and cross-check, and a pivoted banded
//! LU for the narrow-band systems of 1-D meshes.

use thiserror::Error;

/// Entries with magnitude below this are dropped when a matrix is finalized.
pub const PRUNE_THRESHOLD: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dense solve limited to n <= {max}, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("numerically singular pivot in column {column}")]
    SingularPivot { column: usize },
    #[error("index ({row}, {col}) out of bounds")]
    OutOfBounds { row: usize, col: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

/// Coordinate-format accumulator; duplicates are summed on finalization.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, cap: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.entries.push((row, col, value));
    }

    pub fn build(mut self) -> SparseMatrix {
        // stable sort keeps summation order deterministic for equal keys
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_offsets = vec![0usize; self.n_rows + 1];
        let mut col_indices = Vec::with_capacity(self.entries.len());
        let mut values = Vec::with_capacity(self.entries.len());
        let mut i = 0;
        while i < self.entries.len() {
            let (r, c, _) = self.entries[i];
            let mut v = 0.0;
            while i < self.entries.len() && self.entries[i].0 == r && self.entries[i].1 == c {
                v += self.entries[i].2;
                i += 1;
            }
            if v.abs() >= PRUNE_THRESHOLD {
                col_indices.push(c);
                values.push(v);
                row_offsets[r + 1] += 1;
            }
        }
        for r in 0..self.n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_offsets,
            col_indices,
            values,
        }
    }
}

impl SparseMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut b = TripletBuilder::new(rows.len(), n_cols);
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                b.add(i, j, v);
            }
        }
        b.build()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stored entries of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.col_indices[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    pub fn transpose(&self) -> Self {
        let mut b = TripletBuilder::with_capacity(self.n_cols, self.n_rows, self.nnz());
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                b.add(j, i, v);
            }
        }
        b.build()
    }

    /// `y = A x`, summing each row in ascending column order.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.n_cols {
            return Err(LinalgError::DimensionMismatch {
                expected: self.n_cols,
                found: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                s += self.values[k] * x[self.col_indices[k]];
            }
            *yi = s;
        }
    }

    /// `Σ_k c_k A_k` for matrices of equal shape.
    pub fn linear_combination(terms: &[(f64, &SparseMatrix)]) -> Result<Self, LinalgError> {
        let Some((_, first)) = terms.first() else {
            return Ok(Self::zeros(0, 0));
        };
        let (n_rows, n_cols) = (first.n_rows, first.n_cols);
        for (_, m) in terms {
            if m.n_rows != n_rows || m.n_cols != n_cols {
                return Err(LinalgError::DimensionMismatch {
                    expected: n_rows,
                    found: m.n_rows,
                });
            }
        }
        let cap = terms.iter().map(|(_, m)| m.nnz()).sum();
        let mut b = TripletBuilder::with_capacity(n_rows, n_cols, cap);
        for &(c, m) in terms {
            for i in 0..n_rows {
                for (j, v) in m.row(i) {
                    b.add(i, j, c * v);
                }
            }
        }
        Ok(b.build())
    }

    /// Largest absolute entry of `A − Aᵀ`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        Self::linear_combination(&[(1.0, self), (-1.0, &t)])
            .map(|d| d.values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverStats {
    pub iterations: usize,
    /// `‖b − A x‖₂ / ‖b‖₂` of the returned iterate.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Algorithm used by [`solve_linear`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverMethod {
    /// Banded LU when the half-bandwidths sum to at most [`AUTO_BAND_LIMIT`],
    /// BiCGStab otherwise.
    #[default]
    Auto,
    Bicgstab,
    Banded,
}

impl std::str::FromStr for SolverMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(Self::Auto),
            "bicgstab" => Ok(Self::Bicgstab),
            "banded" => Ok(Self::Banded),
            other => Err(format!("unknown linear solver method '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolverOptions {
    pub rel_tol: f64,
    /// `None` means `10·n`.
    pub max_iter: Option<usize>,
    pub method: SolverMethod,
}

impl Default for LinearSolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            max_iter: None,
            method: SolverMethod::Auto,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned BiCGStab. Breakdown and stagnation are reported
/// through `SolverStats::converged`; convergence is only claimed after
/// recomputing the true residual.
pub fn solve_bicgstab(
    a: &SparseMatrix,
    b: &[f64],
    x0: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolverStats), LinalgError> {
    let n = a.n_rows;
    if a.n_cols != n {
        return Err(LinalgError::NotSquare {
            rows: a.n_rows,
            cols: a.n_cols,
        });
    }
    for len in [b.len(), x0.len()] {
        if len != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: len,
            });
        }
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d.abs() > PRUNE_THRESHOLD { 1.0 / d } else { 1.0 })
        .collect();
    let precondition = |v: &[f64], out: &mut [f64]| {
        for ((o, vi), di) in out.iter_mut().zip(v).zip(&inv_diag) {
            *o = vi * di;
        }
    };

    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolverStats {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        ));
    }
    let target = rel_tol * b_norm;

    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    let true_residual = |x: &[f64], r: &mut [f64]| {
        a.spmv_into(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        norm(r)
    };
    let mut r_norm = true_residual(&x, &mut r);
    if r_norm <= target {
        return Ok((
            x,
            SolverStats {
                iterations: 0,
                relative_residual: r_norm / b_norm,
                converged: true,
            },
        ));
    }

    let mut r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut restarts = 0;
    let mut best = (r_norm, x.clone());

    let mut iter = 0;
    while iter < max_iter {
        iter += 1;
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() <= 1e-30 * norm(&r_hat) * r_norm || !rho_new.is_finite() {
            // r has become orthogonal to the shadow residual
            if restarts >= 5 {
                break;
            }
            restarts += 1;
            r_hat.copy_from_slice(&r);
            p.iter_mut().for_each(|e| *e = 0.0);
            v.iter_mut().for_each(|e| *e = 0.0);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precondition(&p, &mut y);
        a.spmv_into(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 || !rv.is_finite() {
            break;
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= target {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            r_norm = true_residual(&x, &mut r);
            if r_norm <= target {
                break;
            }
            if r_norm < best.0 {
                best = (r_norm, x.clone());
            }
            continue;
        }
        precondition(&s, &mut z);
        a.spmv_into(&z, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 || !tt.is_finite() {
            break;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        r_norm = norm(&r);
        if r_norm <= target {
            r_norm = true_residual(&x, &mut r);
            if r_norm <= target {
                break;
            }
        }
        if r_norm < best.0 {
            best = (r_norm, x.clone());
        }
        if omega == 0.0 {
            break;
        }
    }

    let final_norm = true_residual(&x, &mut r);
    let (res, x) = if final_norm <= best.0 || final_norm <= target {
        (final_norm, x)
    } else {
        let xb = best.1;
        (true_residual(&xb, &mut r), xb)
    };
    Ok((
        x,
        SolverStats {
            iterations: iter,
            relative_residual: res / b_norm,
            converged: res <= target,
        },
    ))
}

/// Largest system accepted by [`solve_dense_lu`].
pub const DENSE_LIMIT: usize = 2048;

/// Row-major square dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(LinalgError::NotSquare {
                    rows: n,
                    cols: r.len(),
                });
            }
            m.data[i * n..(i + 1) * n].copy_from_slice(r);
        }
        Ok(m)
    }

    pub fn from_sparse(a: &SparseMatrix) -> Result<Self, LinalgError> {
        if a.n_rows != a.n_cols {
            return Err(LinalgError::NotSquare {
                rows: a.n_rows,
                cols: a.n_cols,
            });
        }
        Self::from_rows(&a.to_dense())
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Partial-pivoted LU solve.
pub fn solve_dense_lu(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.n;
    if n > DENSE_LIMIT {
        return Err(LinalgError::TooLarge {
            n,
            max: DENSE_LIMIT,
        });
    }
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let mut lu = a.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let (piv, max) = (k..n)
            .map(|i| (i, lu[(i, k)].abs()))
            .fold((k, -1.0), |acc, e| if e.1 > acc.1 { e } else { acc });
        if max < PRUNE_THRESHOLD {
            return Err(LinalgError::SingularPivot { column: k });
        }
        if piv != k {
            for j in 0..n {
                lu.data.swap(k * n + j, piv * n + j);
            }
            x.swap(k, piv);
        }
        let d = lu[(k, k)];
        for i in k + 1..n {
            let f = lu[(i, k)] / d;
            if f == 0.0 {
                continue;
            }
            lu[(i, k)] = f;
            for j in k + 1..n {
                let u = lu[(k, j)];
                lu[(i, j)] -= f * u;
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for j in k + 1..n {
            s -= lu[(k, j)] * x[j];
        }
        x[k] = s / lu[(k, k)];
    }
    Ok(x)
}

/// Largest `kl + ku` for which [`SolverMethod::Auto`] picks the banded LU.
pub const AUTO_BAND_LIMIT: usize = 16;

/// Lower and upper half-bandwidths `(kl, ku)`.
pub fn bandwidths(a: &SparseMatrix) -> (usize, usize) {
    let mut kl = 0;
    let mut ku = 0;
    for i in 0..a.n_rows {
        for (j, _) in a.row(i) {
            if j < i {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
    }
    (kl, ku)
}

/// Banded LU with partial pivoting, factor and solve in one pass.
///
/// Row `i` is stored as a window of width `2kl + ku + 1` with column `j`
/// at `j − i + kl`; pivoting fills in at most `kl` extra superdiagonals.
pub fn solve_banded(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.n_rows;
    if a.n_cols != n {
        return Err(LinalgError::NotSquare {
            rows: a.n_rows,
            cols: a.n_cols,
        });
    }
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let (kl, ku) = bandwidths(a);
    let w = 2 * kl + ku + 1;
    let mut band = vec![0.0; n * w];
    for i in 0..n {
        for (j, v) in a.row(i) {
            band[i * w + j + kl - i] = v;
        }
    }
    let at = |i: usize, j: usize| i * w + j + kl - i;
    let mut x = b.to_vec();
    for k in 0..n {
        let last_row = (k + kl).min(n - 1);
        let last_col = (k + kl + ku).min(n - 1);
        let mut piv = k;
        let mut max = band[at(k, k)].abs();
        for r in k + 1..=last_row {
            let v = band[at(r, k)].abs();
            if v > max {
                piv = r;
                max = v;
            }
        }
        if max < PRUNE_THRESHOLD {
            return Err(LinalgError::SingularPivot { column: k });
        }
        if piv != k {
            for j in k..=last_col {
                band.swap(at(k, j), at(piv, j));
            }
            x.swap(k, piv);
        }
        let d = band[at(k, k)];
        for r in k + 1..=last_row {
            let f = band[at(r, k)] / d;
            if f == 0.0 {
                continue;
            }
            band[at(r, k)] = 0.0;
            for j in k + 1..=last_col {
                let u = band[at(k, j)];
                band[at(r, j)] -= f * u;
            }
            x[r] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let last_col = (k + kl + ku).min(n - 1);
        let mut s = x[k];
        for j in k + 1..=last_col {
            s -= band[at(k, j)] * x[j];
        }
        x[k] = s / band[at(k, k)];
    }
    Ok(x)
}

/// Solves `A x = b` with the configured method. The banded path reports
/// the true relative residual and zero iterations.
pub fn solve_linear(
    a: &SparseMatrix,
    b: &[f64],
    x0: &[f64],
    opts: &LinearSolverOptions,
) -> Result<(Vec<f64>, SolverStats), LinalgError> {
    let banded = match opts.method {
        SolverMethod::Banded => true,
        SolverMethod::Bicgstab => false,
        SolverMethod::Auto => {
            let (kl, ku) = bandwidths(a);
            kl + ku <= AUTO_BAND_LIMIT
        }
    };
    if !banded {
        let max_iter = opts.max_iter.unwrap_or(10 * a.n_rows.max(1));
        return solve_bicgstab(a, b, x0, opts.rel_tol, max_iter);
    }
    let x = solve_banded(a, b)?;
    let ax = a.spmv(&x)?;
    let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    let bn = norm(b);
    let relative_residual = if bn > 0.0 { norm(&r) / bn } else { norm(&r) };
    Ok((
        x,
        SolverStats {
            iterations: 0,
            relative_residual,
            converged: relative_residual.is_finite(),
        },
    ))
}

/// Symmetric tridiagonal `(−1, 2, −1)` of size `n`.
pub fn poisson_1d(n: usize) -> SparseMatrix {
    let mut b = TripletBuilder::new(n, n);
    for i in 0..n {
        b.add(i, i, 2.0);
        if i > 0 {
            b.add(i, i - 1, -1.0);
        }
        if i + 1 < n {
            b.add(i, i + 1, -1.0);
        }
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn spmv_examples() {
        let x = vec![1.0, -2.0, 3.5];
        assert_eq!(SparseMatrix::identity(3).spmv(&x).unwrap(), x);
        assert_eq!(SparseMatrix::zeros(3, 3).spmv(&x).unwrap(), vec![0.0; 3]);
        assert_eq!(poisson_1d(3).spmv(&[1.0, 1.0, 1.0]).unwrap(), vec![1.0, 0.0, 1.0]);
        assert!(matches!(
            poisson_1d(3).spmv(&[1.0]),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn spmv_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_sparse(&mut rng, 60, false);
        let x: Vec<f64> = (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = a.spmv(&x).unwrap();
        for _ in 0..5 {
            let y2 = a.spmv(&x).unwrap();
            assert!(y.iter().zip(&y2).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn builder_sums_duplicates_and_prunes() {
        let mut b = TripletBuilder::new(2, 2);
        b.add(0, 0, 1.0);
        b.add(0, 0, 2.0);
        b.add(1, 0, 1.0);
        b.add(1, 0, -1.0);
        b.add(1, 1, 1e-310);
        let m = b.build();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 0), 3.0);
        for i in 0..m.n_rows() {
            let cols: Vec<usize> = m.row(i).map(|(c, _)| c).collect();
            assert!(cols.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn bicgstab_identity() {
        let b = vec![3.0, -1.0, 2.0, 0.5];
        let (x, stats) = solve_bicgstab(&SparseMatrix::identity(4), &b, &[0.0; 4], 1e-12, 40).unwrap();
        assert!(stats.converged);
        assert!(stats.iterations <= 1);
        assert_eq!(x, b);
    }

    #[test]
    fn bicgstab_poisson_manufactured() {
        let a = poisson_1d(100);
        let ones = vec![1.0; 100];
        let b = a.spmv(&ones).unwrap();
        let (x, stats) = solve_bicgstab(&a, &b, &[0.0; 100], 1e-14, 1000).unwrap();
        assert!(stats.converged, "{stats:?}");
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn bicgstab_detects_inconsistent_singular() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        let (_, stats) = solve_bicgstab(&a, &[1.0, 1.0], &[0.0, 0.0], 1e-12, 50).unwrap();
        assert!(!stats.converged);
        assert!(stats.relative_residual > 0.5);
    }

    #[test]
    fn zero_diagonal_row_is_safe() {
        // permutation-like system with a zero on the diagonal
        let a = SparseMatrix::from_dense(&[vec![0.0, 2.0], vec![1.0, 1.0]]);
        let (x, stats) = solve_bicgstab(&a, &[2.0, 3.0], &[0.0, 0.0], 1e-12, 50).unwrap();
        assert!(stats.converged, "{stats:?}");
        assert!((x[0] - 2.0).abs() < 1e-10 && (x[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn dense_lu_examples() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let x = solve_dense_lu(&a, &[3.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
        let i = DenseMatrix::from_sparse(&SparseMatrix::identity(3)).unwrap();
        assert_eq!(solve_dense_lu(&i, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let s = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(solve_dense_lu(&s, &[1.0, 2.0]), Err(LinalgError::SingularPivot { .. })));
        assert!(matches!(
            solve_dense_lu(&DenseMatrix::zeros(DENSE_LIMIT + 1), &vec![0.0; DENSE_LIMIT + 1]),
            Err(LinalgError::TooLarge { .. })
        ));
    }

    /// Random sparse matrix with a dominant diagonal; SPD when `symmetric`.
    fn random_sparse(rng: &mut ChaCha8Rng, n: usize, symmetric: bool) -> SparseMatrix {
        let mut off = Vec::new();
        for i in 0..n {
            for _ in 0..4 {
                let j = rng.gen_range(0..n);
                if j != i {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    off.push((i, j, v));
                    off.push((j, i, if symmetric { v } else { 0.3 * v }));
                }
            }
        }
        let mut row_sum = vec![0.0; n];
        for &(i, _, v) in &off {
            row_sum[i] += f64::abs(v);
        }
        let mut b = TripletBuilder::new(n, n);
        for (i, j, v) in off {
            b.add(i, j, v);
        }
        for (i, s) in row_sum.into_iter().enumerate() {
            b.add(i, i, s + 0.1 + if symmetric { 0.0 } else { rng.gen_range(0.0..1.0) });
        }
        b.build()
    }

    #[test]
    fn bicgstab_agrees_with_dense_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (n, symmetric) in [(20, true), (80, true), (200, true), (50, false), (200, false)] {
            let a = random_sparse(&mut rng, n, symmetric);
            if symmetric {
                assert_eq!(a.asymmetry(), 0.0);
            }
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (x, stats) = solve_bicgstab(&a, &b, &vec![0.0; n], 1e-12, 10 * n).unwrap();
            assert!(stats.converged);
            let xd = solve_dense_lu(&DenseMatrix::from_sparse(&a).unwrap(), &b).unwrap();
            let scale = xd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let diff = x.iter().zip(&xd).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            assert!(diff <= 1e-8 * scale, "n={n}: {diff}");
        }
    }

    #[test]
    fn banded_matches_dense_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (n, kl, ku) in [(1, 0, 0), (7, 1, 1), (40, 2, 3), (60, 4, 1), (33, 0, 5)] {
            let mut b = TripletBuilder::new(n, n);
            for i in 0..n {
                for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                    // small diagonal forces pivoting
                    let v = if i == j { 0.01 } else { rng.gen_range(-1.0..1.0) };
                    b.add(i, j, v);
                }
            }
            let a = b.build();
            let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dense = solve_dense_lu(&DenseMatrix::from_sparse(&a).unwrap(), &rhs).unwrap();
            let band = solve_banded(&a, &rhs).unwrap();
            let scale = dense.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (p, q) in dense.iter().zip(&band) {
                assert!((p - q).abs() <= 1e-10 * scale, "n {n}: {p} vs {q}");
            }
        }
        let singular = SparseMatrix::zeros(3, 3);
        assert!(matches!(
            solve_banded(&singular, &[1.0, 1.0, 1.0]),
            Err(LinalgError::SingularPivot { column: 0 })
        ));
    }

    #[test]
    fn dispatcher_selects_by_bandwidth() {
        let a = poisson_1d(50);
        assert_eq!(bandwidths(&a), (1, 1));
        let rhs = vec![1.0; 50];
        let (x, st) = solve_linear(&a, &rhs, &vec![0.0; 50], &LinearSolverOptions::default()).unwrap();
        assert_eq!(st.iterations, 0);
        assert!(st.relative_residual < 1e-13);
        let opts = LinearSolverOptions {
            method: SolverMethod::Bicgstab,
            ..Default::default()
        };
        let (y, st) = solve_linear(&a, &rhs, &vec![0.0; 50], &opts).unwrap();
        assert!(st.converged && st.iterations > 0);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-8);
        }
        assert_eq!("banded".parse::<SolverMethod>(), Ok(SolverMethod::Banded));
        assert!("cg".parse::<SolverMethod>().is_err());
    }

    #[test]
    fn linear_combination_merges_patterns() {
        let a = poisson_1d(4);
        let i = SparseMatrix::identity(4);
        let c = SparseMatrix::linear_combination(&[(2.0, &i), (1.0, &a)]).unwrap();
        assert_eq!(c.get(0, 0), 4.0);
        assert_eq!(c.get(0, 1), -1.0);
        assert_eq!(c.get(0, 2), 0.0);
    }
}
