//! P1 finite elements: mass, quasilinear stiffness `K(u)`, the Newton
//! coupling `C(u)`, load vectors and L² norms.
//!
//! Dirichlet nodes (homogeneous) are eliminated; every vector and matrix
//! here lives on the free degrees of freedom. Quadrature is two-point
//! Gauss per segment and the three-point edge-midpoint rule per triangle.

use std::sync::Arc;

use thiserror::Error;

use crate::expr::{Bindings, Expr, ExprError};
use crate::linalg::{LinalgError, SparseMatrix, TripletBuilder};
use crate::mesh::Mesh;

/// Diffusivity values at or below this abort assembly.
pub const MIN_DIFFUSIVITY: f64 = 1e-10;

/// Nodal values restricted to the free degrees of freedom.
pub type FieldVector = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FemError {
    #[error("diffusivity {value:e} <= {MIN_DIFFUSIVITY:e} at ({x}, {y}), u = {u}")]
    NonPositiveDiffusivity { value: f64, x: f64, y: f64, u: f64 },
    #[error("vector of length {found} does not match {expected} free dofs")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Numbering of the unconstrained nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    node_dof: Vec<Option<usize>>,
    dof_node: Vec<usize>,
}

impl DofMap {
    /// Constrains every node on a boundary facet whose marker is listed.
    pub fn new(mesh: &Mesh, dirichlet_markers: &[i32]) -> Self {
        let mut constrained = vec![false; mesh.n_nodes()];
        for f in mesh.boundary() {
            if dirichlet_markers.contains(&f.marker) {
                for &i in &f.nodes {
                    constrained[i] = true;
                }
            }
        }
        let mut node_dof = vec![None; mesh.n_nodes()];
        let mut dof_node = Vec::new();
        for (i, c) in constrained.into_iter().enumerate() {
            if !c {
                node_dof[i] = Some(dof_node.len());
                dof_node.push(i);
            }
        }
        Self { node_dof, dof_node }
    }

    pub fn n_free(&self) -> usize {
        self.dof_node.len()
    }

    pub fn dof(&self, node: usize) -> Option<usize> {
        self.node_dof[node]
    }

    pub fn node(&self, dof: usize) -> usize {
        self.dof_node[dof]
    }

    pub fn is_constrained(&self, node: usize) -> bool {
        self.node_dof[node].is_none()
    }

    /// Nodal vector with constrained nodes set to zero.
    pub fn expand(&self, u: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.node_dof.len()];
        for (d, &n) in self.dof_node.iter().enumerate() {
            full[n] = u[d];
        }
        full
    }

    pub fn restrict(&self, full: &[f64]) -> FieldVector {
        self.dof_node.iter().map(|&n| full[n]).collect()
    }
}

#[derive(Debug, Clone)]
struct Element {
    nodes: Vec<usize>,
    measure: f64,
    /// Constant basis gradients, one per local node.
    grads: Vec<[f64; 2]>,
}

/// Quadrature on the reference simplex: barycentric coordinates and
/// weights relative to the cell measure.
struct Rule {
    bary: &'static [[f64; 3]],
    weights: &'static [f64],
}

const GAUSS_LO: f64 = 0.211_324_865_405_187_1; // (1 - 1/sqrt 3)/2
const GAUSS_HI: f64 = 0.788_675_134_594_812_9;

const SEGMENT_RULE: Rule = Rule {
    bary: &[[GAUSS_HI, GAUSS_LO, 0.0], [GAUSS_LO, GAUSS_HI, 0.0]],
    weights: &[0.5, 0.5],
};

const TRIANGLE_RULE: Rule = Rule {
    bary: &[[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
    weights: &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
};

/// A P1 space on a mesh with homogeneous Dirichlet elimination.
#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    dofmap: DofMap,
    elements: Vec<Element>,
}

/// Values at one quadrature point.
struct QuadPoint<'a> {
    point: [f64; 2],
    weight: f64,
    phi: &'a [f64],
}

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>, dirichlet_markers: &[i32]) -> Self {
        let dofmap = DofMap::new(&mesh, dirichlet_markers);
        let elements = (0..mesh.n_cells())
            .map(|c| {
                let nodes = mesh.cells()[c].clone();
                let measure = mesh.cell_measure(c);
                let p: Vec<[f64; 2]> = nodes.iter().map(|&i| mesh.nodes()[i]).collect();
                let grads = if mesh.dim() == 1 {
                    let h = p[1][0] - p[0][0];
                    vec![[-1.0 / h, 0.0], [1.0 / h, 0.0]]
                } else {
                    let two_a = 2.0 * measure;
                    (0..3)
                        .map(|i| {
                            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                            [(p[j][1] - p[k][1]) / two_a, (p[k][0] - p[j][0]) / two_a]
                        })
                        .collect()
                };
                Element {
                    nodes,
                    measure,
                    grads,
                }
            })
            .collect();
        Self {
            mesh,
            dofmap,
            elements,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn dofmap(&self) -> &DofMap {
        &self.dofmap
    }

    pub fn n_free(&self) -> usize {
        self.dofmap.n_free()
    }

    fn rule(&self) -> &'static Rule {
        if self.mesh.dim() == 1 {
            &SEGMENT_RULE
        } else {
            &TRIANGLE_RULE
        }
    }

    fn check_len(&self, u: &[f64]) -> Result<(), FemError> {
        if u.len() != self.n_free() {
            return Err(FemError::DimensionMismatch {
                expected: self.n_free(),
                found: u.len(),
            });
        }
        Ok(())
    }

    /// Calls `f` for every quadrature point of element `e`.
    fn for_each_qp<F>(&self, e: &Element, mut f: F) -> Result<(), FemError>
    where
        F: FnMut(QuadPoint<'_>) -> Result<(), FemError>,
    {
        let rule = self.rule();
        let nodes = self.mesh.nodes();
        let nl = e.nodes.len();
        for (bary, w) in rule.bary.iter().zip(rule.weights) {
            let mut point = [0.0; 2];
            for (l, &n) in e.nodes.iter().enumerate() {
                point[0] += bary[l] * nodes[n][0];
                point[1] += bary[l] * nodes[n][1];
            }
            f(QuadPoint {
                point,
                weight: w * e.measure,
                phi: &bary[..nl],
            })?;
        }
        Ok(())
    }

    fn bindings(&self, point: [f64; 2], t: f64) -> Bindings {
        Bindings::new().point(point, self.mesh.dim()).t(t)
    }

    fn diffusivity_at(&self, a: &Expr, b: Bindings, point: [f64; 2]) -> Result<f64, FemError> {
        let value = a.eval(&b)?;
        if !(value > MIN_DIFFUSIVITY) {
            return Err(FemError::NonPositiveDiffusivity {
                value,
                x: point[0],
                y: point[1],
                u: b.u.unwrap_or(f64::NAN),
            });
        }
        Ok(value)
    }

    /// `M_ij = ∫ φ_i φ_j`, by the exact element formulas.
    pub fn assemble_mass(&self) -> SparseMatrix {
        let dim = self.mesh.dim();
        let mut b = TripletBuilder::with_capacity(self.n_free(), self.n_free(), 9 * self.elements.len());
        for e in &self.elements {
            let (diag, off) = if dim == 1 {
                (e.measure / 3.0, e.measure / 6.0)
            } else {
                (e.measure / 6.0, e.measure / 12.0)
            };
            for (i, &ni) in e.nodes.iter().enumerate() {
                let Some(di) = self.dofmap.dof(ni) else { continue };
                for (j, &nj) in e.nodes.iter().enumerate() {
                    let Some(dj) = self.dofmap.dof(nj) else { continue };
                    b.add(di, dj, if i == j { diag } else { off });
                }
            }
        }
        b.build()
    }

    /// `K(u)_ij = ∫ a(u_h) ∇φ_j·∇φ_i`.
    pub fn assemble_stiffness(&self, a: &Expr, u: &[f64], t: f64) -> Result<SparseMatrix, FemError> {
        Ok(self.assemble_operators(a, None, u, t)?.0)
    }

    /// `C(u)_ij = ∫ a′(u_h) φ_j ∇u_h·∇φ_i`.
    pub fn assemble_newton_coupling(
        &self,
        a_prime: &Expr,
        u: &[f64],
        t: f64,
    ) -> Result<SparseMatrix, FemError> {
        self.check_len(u)?;
        let full = self.dofmap.expand(u);
        let n = self.n_free();
        let mut b = TripletBuilder::with_capacity(n, n, 9 * self.elements.len());
        for e in &self.elements {
            let grad_u = element_gradient(e, &full);
            self.for_each_qp(e, |q| {
                let uq = interpolate_at(e, &full, q.phi);
                let ap = a_prime.eval(&self.bindings(q.point, t).u(uq))?;
                for (i, &ni) in e.nodes.iter().enumerate() {
                    let Some(di) = self.dofmap.dof(ni) else { continue };
                    let flux = dot2(grad_u, e.grads[i]);
                    for (j, &nj) in e.nodes.iter().enumerate() {
                        let Some(dj) = self.dofmap.dof(nj) else { continue };
                        b.add(di, dj, q.weight * ap * q.phi[j] * flux);
                    }
                }
                Ok(())
            })?;
        }
        Ok(b.build())
    }

    /// `K(u)` and, when `a_prime` is given, `K(u) + C(u)` in one pass.
    pub fn assemble_operators(
        &self,
        a: &Expr,
        a_prime: Option<&Expr>,
        u: &[f64],
        t: f64,
    ) -> Result<(SparseMatrix, Option<SparseMatrix>), FemError> {
        self.check_len(u)?;
        let full = self.dofmap.expand(u);
        let n = self.n_free();
        let cap = 9 * self.elements.len() * self.rule().weights.len();
        let mut kb = TripletBuilder::with_capacity(n, n, cap);
        let mut jb = a_prime.map(|_| TripletBuilder::with_capacity(n, n, cap));
        for e in &self.elements {
            let grad_u = element_gradient(e, &full);
            self.for_each_qp(e, |q| {
                let uq = interpolate_at(e, &full, q.phi);
                let b = self.bindings(q.point, t).u(uq);
                let aq = self.diffusivity_at(a, b, q.point)?;
                let apq = match a_prime {
                    Some(ap) => ap.eval(&b)?,
                    None => 0.0,
                };
                for (i, &ni) in e.nodes.iter().enumerate() {
                    let Some(di) = self.dofmap.dof(ni) else { continue };
                    let flux = dot2(grad_u, e.grads[i]);
                    for (j, &nj) in e.nodes.iter().enumerate() {
                        let Some(dj) = self.dofmap.dof(nj) else { continue };
                        let k = q.weight * aq * dot2(e.grads[j], e.grads[i]);
                        kb.add(di, dj, k);
                        if let Some(jb) = jb.as_mut() {
                            jb.add(di, dj, k + q.weight * apq * q.phi[j] * flux);
                        }
                    }
                }
                Ok(())
            })?;
        }
        Ok((kb.build(), jb.map(TripletBuilder::build)))
    }

    /// `K(u) u` without forming the matrix.
    pub fn apply_stiffness(&self, a: &Expr, u: &[f64], t: f64) -> Result<FieldVector, FemError> {
        self.check_len(u)?;
        let full = self.dofmap.expand(u);
        let mut out = vec![0.0; self.n_free()];
        for e in &self.elements {
            let grad_u = element_gradient(e, &full);
            self.for_each_qp(e, |q| {
                let uq = interpolate_at(e, &full, q.phi);
                let aq = self.diffusivity_at(a, self.bindings(q.point, t).u(uq), q.point)?;
                for (i, &ni) in e.nodes.iter().enumerate() {
                    if let Some(di) = self.dofmap.dof(ni) {
                        out[di] += q.weight * aq * dot2(grad_u, e.grads[i]);
                    }
                }
                Ok(())
            })?;
        }
        Ok(out)
    }

    /// `‖(K(u+εw)(u+εw) − K(u)u)/ε − (K(u) + C(u))w‖₂`, which decays
    /// like `ε` when the Jacobian is consistent.
    pub fn directional_defect(
        &self,
        a: &Expr,
        a_prime: &Expr,
        u: &[f64],
        w: &[f64],
        eps: f64,
        t: f64,
    ) -> Result<f64, FemError> {
        self.check_len(w)?;
        let shifted: Vec<f64> = u.iter().zip(w).map(|(p, q)| p + eps * q).collect();
        let base = self.apply_stiffness(a, u, t)?;
        let moved = self.apply_stiffness(a, &shifted, t)?;
        let (_, jac) = self.assemble_operators(a, Some(a_prime), u, t)?;
        let jw = jac.expect("jacobian requested").spmv(w)?;
        let d2: f64 = moved
            .iter()
            .zip(&base)
            .zip(&jw)
            .map(|((m, b), j)| ((m - b) / eps - j).powi(2))
            .sum();
        Ok(d2.sqrt())
    }

    /// `F_i = ∫ f(·, t) φ_i`.
    pub fn assemble_load(&self, f: &Expr, t: f64) -> Result<FieldVector, FemError> {
        let mut out = vec![0.0; self.n_free()];
        for e in &self.elements {
            self.for_each_qp(e, |q| {
                let fq = f.eval(&self.bindings(q.point, t))?;
                for (i, &ni) in e.nodes.iter().enumerate() {
                    if let Some(di) = self.dofmap.dof(ni) {
                        out[di] += q.weight * fq * q.phi[i];
                    }
                }
                Ok(())
            })?;
        }
        Ok(out)
    }

    /// Nodal interpolation onto the free dofs; constrained nodes are dropped.
    pub fn interpolate(&self, g: &Expr, t: f64) -> Result<FieldVector, FemError> {
        let dim = self.mesh.dim();
        (0..self.n_free())
            .map(|d| {
                let p = self.mesh.nodes()[self.dofmap.node(d)];
                Ok(g.eval(&Bindings::new().point(p, dim).t(t))?)
            })
            .collect()
    }
}

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn element_gradient(e: &Element, full: &[f64]) -> [f64; 2] {
    let mut g = [0.0; 2];
    for (l, &n) in e.nodes.iter().enumerate() {
        g[0] += full[n] * e.grads[l][0];
        g[1] += full[n] * e.grads[l][1];
    }
    g
}

fn interpolate_at(e: &Element, full: &[f64], phi: &[f64]) -> f64 {
    e.nodes.iter().zip(phi).map(|(&n, p)| full[n] * p).sum()
}

/// `sqrt((u − v)ᵀ M (u − v))`.
pub fn l2_error(mass: &SparseMatrix, u: &[f64], v: &[f64]) -> Result<f64, FemError> {
    if u.len() != v.len() {
        return Err(FemError::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let d: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    l2_norm(mass, &d)
}

pub fn l2_norm(mass: &SparseMatrix, u: &[f64]) -> Result<f64, FemError> {
    let mu = mass.spmv(u)?;
    let s: f64 = u.iter().zip(&mu).map(|(a, b)| a * b).sum();
    Ok(s.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::expr::{parse, Var};
    use crate::linalg::solve_bicgstab;
    use crate::mesh::{disk_mesh, interval_mesh, BoundaryFacet};

    fn unit_interval(n: usize, dirichlet: &[i32]) -> FeSpace {
        FeSpace::new(Arc::new(interval_mesh(0.0, 1.0, n).unwrap()), dirichlet)
    }

    fn single_triangle() -> FeSpace {
        let mesh = Mesh::new(
            2,
            vec![[0.0, 0.0], [2.0, 0.0], [0.5, 1.5]],
            vec![vec![0, 1, 2]],
            vec![BoundaryFacet {
                nodes: vec![0, 1],
                marker: 1,
            }],
        )
        .unwrap();
        FeSpace::new(Arc::new(mesh), &[])
    }

    fn sum_all(m: &SparseMatrix) -> f64 {
        m.values().iter().sum()
    }

    #[test]
    fn dofmap_numbering() {
        let s = unit_interval(4, &[2]);
        assert_eq!(s.n_free(), 4);
        assert!(s.dofmap().is_constrained(4));
        assert_eq!(s.dofmap().dof(0), Some(0));
        let s = unit_interval(4, &[1, 2]);
        assert_eq!(s.n_free(), 3);
        assert_eq!(s.dofmap().node(0), 1);
        let full = s.dofmap().expand(&[1.0, 2.0, 3.0]);
        assert_eq!(full, vec![0.0, 1.0, 2.0, 3.0, 0.0]);
        assert_eq!(s.dofmap().restrict(&full), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn mass_partition_of_unity_and_symmetry() {
        let s = unit_interval(7, &[]);
        let m = s.assemble_mass();
        assert!((sum_all(&m) - 1.0).abs() < 1e-15);
        assert_eq!(m.asymmetry(), 0.0);
        let d = FeSpace::new(Arc::new(disk_mesh(0.25, 2).unwrap()), &[]);
        let md = d.assemble_mass();
        assert!((sum_all(&md) - d.mesh().measure()).abs() < 1e-15);
        assert_eq!(md.asymmetry(), 0.0);
    }

    #[test]
    fn single_triangle_mass() {
        let s = single_triangle();
        let m = s.assemble_mass();
        let area = 1.5;
        for i in 0..3 {
            for j in 0..3 {
                let expected = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                assert!((m.get(i, j) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mass_is_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in [
            unit_interval(9, &[1, 2]),
            FeSpace::new(Arc::new(disk_mesh(1.0, 2).unwrap()), &[1]),
        ] {
            let m = s.assemble_mass();
            for _ in 0..100 {
                let x: Vec<f64> = (0..s.n_free()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                assert!(l2_norm(&m, &x).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn laplacian_stencil() {
        let n = 8;
        let h = 1.0 / n as f64;
        let s = unit_interval(n, &[]);
        let a = parse("1").unwrap();
        let k = s.assemble_stiffness(&a, &vec![0.0; n + 1], 0.0).unwrap();
        for i in 1..n {
            assert!((k.get(i, i - 1) + 1.0 / h).abs() < 1e-12);
            assert!((k.get(i, i) - 2.0 / h).abs() < 1e-12);
            assert!((k.get(i, i + 1) + 1.0 / h).abs() < 1e-12);
        }
        let ones = vec![1.0; n + 1];
        assert!(k.spmv(&ones).unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn sine_coefficient_at_zero_is_laplacian() {
        let s = FeSpace::new(Arc::new(disk_mesh(0.25, 2).unwrap()), &[1]);
        let zero = vec![0.0; s.n_free()];
        let k1 = s.assemble_stiffness(&parse("1").unwrap(), &zero, 0.0).unwrap();
        let k2 = s
            .assemble_stiffness(&parse("1 + 0.2*sin(u)").unwrap(), &zero, 0.0)
            .unwrap();
        assert_eq!(k1, k2);
    }

    #[test]
    fn stiffness_annihilates_constants_2d() {
        let s = FeSpace::new(Arc::new(disk_mesh(0.25, 2).unwrap()), &[]);
        let u: Vec<f64> = s.mesh().nodes().iter().map(|p| p[0] * p[1]).collect();
        let k = s
            .assemble_stiffness(&parse("1 + 0.2*sin(u)").unwrap(), &u, 0.0)
            .unwrap();
        assert!(k.asymmetry() == 0.0);
        let ones = vec![1.0; s.n_free()];
        assert!(k.spmv(&ones).unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn nonpositive_diffusivity_aborts() {
        let s = unit_interval(4, &[1, 2]);
        let a = parse("u - 1").unwrap();
        let err = s.assemble_stiffness(&a, &[0.5, 0.5, 0.5], 0.0).unwrap_err();
        assert!(matches!(err, FemError::NonPositiveDiffusivity { .. }));
        assert!(s.apply_stiffness(&a, &[0.5, 0.5, 0.5], 0.0).is_err());
    }

    #[test]
    fn coupling_vanishes() {
        let s = unit_interval(6, &[1, 2]);
        let ap = parse("0.2*cos(u)").unwrap();
        let c = s.assemble_newton_coupling(&ap, &vec![0.0; 5], 0.0).unwrap();
        assert_eq!(c.nnz(), 0);
        let zero = parse("1").unwrap().differentiate(Var::U).unwrap();
        let c = s
            .assemble_newton_coupling(&zero, &[0.1, 0.4, 0.3, 0.2, 0.1], 0.0)
            .unwrap();
        assert_eq!(c.nnz(), 0);
    }

    fn jittered_interval(rng: &mut ChaCha8Rng, n: usize) -> Mesh {
        let h = 1.0 / n as f64;
        let mut nodes: Vec<[f64; 2]> = (0..=n).map(|i| [i as f64 * h, 0.0]).collect();
        for p in nodes.iter_mut().take(n).skip(1) {
            p[0] += rng.gen_range(-0.3..0.3) * h;
        }
        let cells = (0..n).map(|i| vec![i, i + 1]).collect();
        let boundary = vec![
            BoundaryFacet { nodes: vec![0], marker: 1 },
            BoundaryFacet { nodes: vec![n], marker: 2 },
        ];
        Mesh::new(1, nodes, cells, boundary).unwrap()
    }

    fn jittered_disk(rng: &mut ChaCha8Rng) -> Mesh {
        let base = disk_mesh(1.0, 2).unwrap();
        let h = base.mesh_size();
        let on_boundary: Vec<bool> = {
            let mut b = vec![false; base.n_nodes()];
            for f in base.boundary() {
                for &i in &f.nodes {
                    b[i] = true;
                }
            }
            b
        };
        let nodes = base
            .nodes()
            .iter()
            .zip(&on_boundary)
            .map(|(p, &b)| {
                if b {
                    *p
                } else {
                    [p[0] + rng.gen_range(-0.1..0.1) * h, p[1] + rng.gen_range(-0.1..0.1) * h]
                }
            })
            .collect();
        Mesh::new(2, nodes, base.cells().to_vec(), base.boundary().to_vec()).unwrap()
    }

    #[test]
    fn jacobian_defect_decays_linearly() {
        let a = parse("1 + 0.2*sin(u)").unwrap();
        let ap = a.differentiate(Var::U).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..6 {
            let mesh = if trial % 2 == 0 {
                jittered_interval(&mut rng, 12)
            } else {
                jittered_disk(&mut rng)
            };
            let s = FeSpace::new(Arc::new(mesh), &[1]);
            let u: Vec<f64> = (0..s.n_free()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let w: Vec<f64> = (0..s.n_free()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d: Vec<f64> = [1e-3, 1e-4, 1e-5]
                .iter()
                .map(|&e| s.directional_defect(&a, &ap, &u, &w, e, 0.0).unwrap())
                .collect();
            for pair in d.windows(2) {
                let ratio = pair[0] / pair[1];
                assert!((8.0..=12.0).contains(&ratio), "trial {trial}: {d:?}");
            }
        }
    }

    #[test]
    fn load_examples() {
        let s = unit_interval(5, &[]);
        let f = s.assemble_load(&parse("1").unwrap(), 0.0).unwrap();
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let f = s.assemble_load(&parse("0").unwrap(), 0.0).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));
        // exact ∫ x φ_i on two cells of (0, 1)
        let s = unit_interval(2, &[]);
        let f = s.assemble_load(&parse("x").unwrap(), 0.0).unwrap();
        let exact = [1.0 / 24.0, 6.0 / 24.0, 5.0 / 24.0];
        for (a, b) in f.iter().zip(exact) {
            assert!((a - b).abs() < 1e-15, "{f:?}");
        }
    }

    #[test]
    fn l2_error_examples() {
        let s = unit_interval(10, &[]);
        let m = s.assemble_mass();
        let u: Vec<f64> = (0..11).map(|i| (i as f64).sin()).collect();
        assert_eq!(l2_error(&m, &u, &u).unwrap(), 0.0);
        let v: Vec<f64> = u.iter().map(|x| x + 1.0).collect();
        assert!((l2_error(&m, &v, &u).unwrap() - 1.0).abs() < 1e-14);
        let w: Vec<f64> = u.iter().map(|x| x * 0.3 - 2.0).collect();
        assert_eq!(l2_error(&m, &u, &w).unwrap(), l2_error(&m, &w, &u).unwrap());
        assert!(l2_error(&m, &u, &u[..3]).is_err());
    }

    #[test]
    fn poisson_solution_is_second_order() {
        let a = parse("1").unwrap();
        let f = parse("1").unwrap();
        let exact = parse("x*(1-x)/2").unwrap();
        let mut errs = Vec::new();
        for n in [16, 32] {
            let s = unit_interval(n, &[1, 2]);
            let k = s.assemble_stiffness(&a, &vec![0.0; s.n_free()], 0.0).unwrap();
            let rhs = s.assemble_load(&f, 0.0).unwrap();
            let (x, st) = solve_bicgstab(&k, &rhs, &vec![0.0; s.n_free()], 1e-13, 10 * n).unwrap();
            assert!(st.converged);
            // continuous L² error against the exact solution by fine sampling
            let full = s.dofmap().expand(&x);
            let mut e2 = 0.0;
            let samples = 64;
            for c in 0..n {
                let h = 1.0 / n as f64;
                for q in 0..samples {
                    let xi = (q as f64 + 0.5) / samples as f64;
                    let xq = (c as f64 + xi) * h;
                    let uh = full[c] * (1.0 - xi) + full[c + 1] * xi;
                    let ue = exact.eval(&Bindings::new().x(xq)).unwrap();
                    e2 += (uh - ue).powi(2) * h / samples as f64;
                }
            }
            errs.push(e2.sqrt());
        }
        let ratio = errs[0] / errs[1];
        assert!((3.6..=4.4).contains(&ratio), "{errs:?}");
    }
}
